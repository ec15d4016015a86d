//! Self-describing binary container for named parameter arrays.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! b"DASPCKPT"  version:u8  count:u32
//! count x { name_len:u32  name:[u8]  ndim:u32  dims:[u64; ndim]  data:[f64; prod(dims)] }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, Dense, Mlp};
use crate::nn::params::Parameters;

pub const MAGIC: &[u8; 8] = b"DASPCKPT";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    records: Vec<Record>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.records.push(Record { name: name.into(), shape, data });
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, vec![1], vec![value]);
    }

    /// Adds every block of `params` under `prefix.`.
    pub fn push_params<P: Parameters + ?Sized>(&mut self, prefix: &str, params: &P) {
        for block in params.blocks() {
            self.push(format!("{prefix}.{}", block.name), block.shape, block.data.to_vec());
        }
    }

    pub fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no record {name:?}")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let r = self.get(name)?;
        r.data.first().copied().ok_or_else(|| Error::Format(format!("record {name:?} is empty")))
    }

    /// Rebuilds an MLP stored with [`Checkpoint::push_params`]: ReLU hidden layers, identity
    /// output.
    pub fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let mut layers = Vec::new();
        let mut i = 0;
        while let Ok(w) = self.get(&format!("{prefix}.layer{i}.weight")) {
            let b = self.get(&format!("{prefix}.layer{i}.bias"))?;
            if w.shape.len() != 2 || b.shape.len() != 1 || b.shape[0] != w.shape[0] {
                return Err(Error::Format(format!("bad shapes for {prefix}.layer{i}")));
            }
            let weight = Array2::from_shape_vec((w.shape[0], w.shape[1]), w.data.clone())
                .map_err(|e| Error::Format(e.to_string()))?;
            layers.push(Dense { weight, bias: Array1::from_vec(b.data.clone()), activation: Activation::Relu });
            i += 1;
        }
        match layers.last_mut() {
            Some(last) => last.activation = Activation::Identity,
            None => return Err(Error::Format(format!("no layers under {prefix:?}"))),
        }
        Mlp::from_layers(layers).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(self.records.len() as u32).to_le_bytes())?;
        for r in &self.records {
            let name = r.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(r.shape.len() as u32).to_le_bytes())?;
            for &d in &r.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &r.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = read_u8(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(&mut r)?;
        let mut records = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            records.push(Record { name, shape, data });
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
