//! Offline datasets: scripted collection tiers, minibatch sampling and the on-disk format.
//!
//! File layout: one ASCII header line
//!
//! ```text
//! DASPDATA v1 <env_id> <state_dim> <action_dim> <N> <tier> <seed>\n
//! ```
//!
//! followed by `N` records of little-endian `f64`s laid out as `(s, a, r, s', done)` with
//! `done` stored as `0.0` or `1.0`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};

use crate::env::pointmass::{PdController, PointMassEnv, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::nn::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Which scripted behavior produced the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tier {
    Random,
    Medium,
    Expert,
    /// Fraction of episodes collected with the random policy; the rest are expert.
    Mixture(f64),
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tier::Random => write!(f, "random"),
            Tier::Medium => write!(f, "medium"),
            Tier::Expert => write!(f, "expert"),
            Tier::Mixture(r) => write!(f, "mixture({r})"),
        }
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Tier::Random),
            "medium" => Ok(Tier::Medium),
            "expert" => Ok(Tier::Expert),
            _ => {
                let ratio = s
                    .strip_prefix("mixture(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|r| r.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown dataset tier {s:?}")))?;
                if !(0.0..=1.0).contains(&ratio) {
                    return Err(Error::Config(format!("mixture ratio {ratio} outside [0, 1]")));
                }
                Ok(Tier::Mixture(ratio))
            }
        }
    }
}

/// Noise settings of the medium tier.
pub const MEDIUM_ACTION_NOISE: f64 = 0.5;
pub const MEDIUM_RANDOM_PROB: f64 = 0.2;

/// The policy that generated one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Random,
    Medium,
    Expert,
}

impl Source {
    pub fn act(self, env: &PointMassEnv, s: &[f64], rng: &mut SeededRng) -> [f64; ACTION_DIM] {
        match self {
            Source::Random => [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)],
            Source::Expert => PdController::default().act(env, s),
            Source::Medium => {
                if rng.bernoulli(MEDIUM_RANDOM_PROB) {
                    Source::Random.act(env, s, rng)
                } else {
                    let a = PdController::default().act(env, s);
                    [
                        (a[0] + MEDIUM_ACTION_NOISE * rng.standard_normal()).clamp(-1.0, 1.0),
                        (a[1] + MEDIUM_ACTION_NOISE * rng.standard_normal()).clamp(-1.0, 1.0),
                    ]
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeInfo {
    pub start: usize,
    pub len: usize,
    pub source: Source,
    pub ret: f64,
    /// False when the dataset budget cut the episode short.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub env_id: String,
    pub tier: Tier,
    pub seed: u64,
}

/// Struct-of-arrays transition store.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub terminals: Array1<f64>,
    /// Collection bookkeeping; empty for datasets read from disk.
    pub episodes: Vec<EpisodeInfo>,
}

/// A minibatch, one transition per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub terminals: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Dataset {
    pub fn from_transitions(meta: DatasetMeta, transitions: &[Transition]) -> Result<Self> {
        let first =
            transitions.first().ok_or_else(|| Error::Config("a dataset needs at least one transition".into()))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        let n = transitions.len();
        let mut ds = Self {
            meta,
            states: Array2::zeros((n, sd)),
            actions: Array2::zeros((n, ad)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, sd)),
            terminals: Array1::zeros(n),
            episodes: Vec::new(),
        };
        for (i, t) in transitions.iter().enumerate() {
            if t.state.len() != sd || t.action.len() != ad || t.next_state.len() != sd {
                return Err(Error::shape("dataset transition", sd, t.state.len()));
            }
            ds.states.row_mut(i).assign(&ndarray::aview1(&t.state));
            ds.actions.row_mut(i).assign(&ndarray::aview1(&t.action));
            ds.rewards[i] = t.reward;
            ds.next_states.row_mut(i).assign(&ndarray::aview1(&t.next_state));
            ds.terminals[i] = if t.terminal { 1.0 } else { 0.0 };
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.ncols()
    }

    pub fn transition(&self, i: usize) -> Transition {
        Transition {
            state: self.states.row(i).to_vec(),
            action: self.actions.row(i).to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states.row(i).to_vec(),
            terminal: self.terminals[i] > 0.5,
        }
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        Batch {
            states: self.states.select(Axis(0), idx),
            actions: self.actions.select(Axis(0), idx),
            rewards: self.rewards.select(Axis(0), idx),
            next_states: self.next_states.select(Axis(0), idx),
            terminals: self.terminals.select(Axis(0), idx),
        }
    }

    /// Uniform sampling with replacement.
    pub fn sample_batch(&self, size: usize, rng: &mut SeededRng) -> Batch {
        let idx: Vec<usize> = (0..size).map(|_| rng.index(self.len())).collect();
        self.batch(&idx)
    }

    /// Mean return over episodes that ran to completion.
    pub fn mean_episode_return(&self) -> Option<f64> {
        let done: Vec<f64> = self.episodes.iter().filter(|e| e.complete).map(|e| e.ret).collect();
        (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64)
    }

    pub fn header(&self) -> String {
        format!(
            "DASPDATA v1 {} {} {} {} {} {}",
            self.meta.env_id,
            self.state_dim(),
            self.action_dim(),
            self.len(),
            self.meta.tier,
            self.meta.seed
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.header())?;
        for i in 0..self.len() {
            let fields = self
                .states
                .row(i)
                .iter()
                .chain(self.actions.row(i).iter())
                .chain(std::iter::once(&self.rewards[i]))
                .chain(self.next_states.row(i).iter())
                .chain(std::iter::once(&self.terminals[i]))
                .copied()
                .collect::<Vec<f64>>();
            for v in fields {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.trim_end().split(' ').collect();
        if parts.len() != 8 || parts[0] != "DASPDATA" || parts[1] != "v1" {
            return Err(Error::Format(format!("bad dataset header {header:?}")));
        }
        let num =
            |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Format(format!("bad header field {s:?}"))) };
        let (sd, ad, n) = (num(parts[3])?, num(parts[4])?, num(parts[5])?);
        let tier: Tier = parts[6].parse()?;
        let seed: u64 = parts[7].parse().map_err(|_| Error::Format(format!("bad seed {:?}", parts[7])))?;
        let width = 2 * sd + ad + 2;
        let mut transitions = Vec::with_capacity(n);
        let mut buf = vec![0u8; 8 * width];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            let rec: Vec<f64> =
                buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            transitions.push(Transition {
                state: rec[..sd].to_vec(),
                action: rec[sd..sd + ad].to_vec(),
                reward: rec[sd + ad],
                next_state: rec[sd + ad + 1..2 * sd + ad + 1].to_vec(),
                terminal: rec[2 * sd + ad + 1] > 0.5,
            });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after the last record".into()));
        }
        let meta = DatasetMeta { env_id: parts[2].to_string(), tier, seed };
        Self::from_transitions(meta, &transitions)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(File::open(path)?)
    }
}

/// Episode `i` of a mixture is random exactly when `floor((i+1) r) > floor(i r)`, which keeps
/// the running fraction of random episodes within one episode of `r`.
pub fn mixture_source(i: usize, ratio: f64) -> Source {
    let before = (i as f64 * ratio).floor();
    let after = ((i + 1) as f64 * ratio).floor();
    if after > before {
        Source::Random
    } else {
        Source::Expert
    }
}

/// Rolls scripted episodes until `size` transitions are collected.
pub fn generate_dataset(env: &PointMassEnv, tier: Tier, size: usize, seed: u64) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let mut env = env.clone();
    let mut rng = SeededRng::new(seed);
    let mut transitions = Vec::with_capacity(size);
    let mut episodes = Vec::new();
    while transitions.len() < size {
        let source = match tier {
            Tier::Random => Source::Random,
            Tier::Medium => Source::Medium,
            Tier::Expert => Source::Expert,
            Tier::Mixture(r) => mixture_source(episodes.len(), r),
        };
        let start = transitions.len();
        let mut s = env.reset(&mut rng);
        let mut ret = 0.0;
        let mut complete = false;
        while transitions.len() < size {
            let a = source.act(&env, &s, &mut rng);
            let step = env.step(&s, &a);
            ret += step.reward;
            transitions.push(Transition {
                state: s.to_vec(),
                action: a.to_vec(),
                reward: step.reward,
                next_state: step.next_state.to_vec(),
                terminal: step.terminal,
            });
            s = step.next_state;
            if step.done() {
                complete = true;
                break;
            }
        }
        episodes.push(EpisodeInfo { start, len: transitions.len() - start, source, ret, complete });
    }
    let meta = DatasetMeta { env_id: PointMassEnv::ID.to_string(), tier, seed };
    let mut ds = Dataset::from_transitions(meta, &transitions)?;
    ds.episodes = episodes;
    debug_assert_eq!(ds.state_dim(), STATE_DIM);
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tier_parsing() {
        assert_eq!("medium".parse::<Tier>().unwrap(), Tier::Medium);
        assert_eq!("mixture(0.9)".parse::<Tier>().unwrap(), Tier::Mixture(0.9));
        assert_eq!(Tier::Mixture(0.25).to_string(), "mixture(0.25)");
        assert!(matches!("bogus".parse::<Tier>(), Err(Error::Config(_))));
        assert!("mixture(1.5)".parse::<Tier>().is_err());
    }

    #[test]
    fn zero_size_rejected() {
        assert!(generate_dataset(&PointMassEnv::default(), Tier::Random, 0, 1).is_err());
    }

    #[test]
    fn exact_size_and_replayable() {
        let env = PointMassEnv::default();
        let ds = generate_dataset(&env, Tier::Medium, 777, 3).unwrap();
        assert_eq!(ds.len(), 777);
        for i in 0..ds.len() {
            let t = ds.transition(i);
            let (next, r, term) = env.dynamics(&t.state, &t.action);
            assert_eq!(next.to_vec(), t.next_state);
            assert_eq!(r, t.reward);
            assert_eq!(term, t.terminal);
        }
    }

    #[test]
    fn mixture_bookkeeping() {
        let ds = generate_dataset(&PointMassEnv::default(), Tier::Mixture(0.9), 20_000, 5).unwrap();
        let n = ds.episodes.len();
        let random = ds.episodes.iter().filter(|e| e.source == Source::Random).count();
        let expect = (n as f64 * 0.9).floor() as usize;
        assert!(random.abs_diff(expect) <= 1, "{random} of {n}");
    }

    #[test]
    fn file_round_trip_is_byte_stable() {
        let ds = generate_dataset(&PointMassEnv::default(), Tier::Expert, 300, 11).unwrap();
        let mut a = Vec::new();
        ds.write_to(&mut a).unwrap();
        let back = Dataset::read_from(a.as_slice()).unwrap();
        let mut b = Vec::new();
        back.write_to(&mut b).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(b"DASPDATA v1 pointmass 4 2 300 expert 11\n"));
        assert_eq!(a.len(), ds.header().len() + 1 + 300 * 12 * 8);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let ds = generate_dataset(&PointMassEnv::default(), Tier::Random, 10, 1).unwrap();
        let mut a = Vec::new();
        ds.write_to(&mut a).unwrap();
        a.truncate(a.len() - 3);
        assert!(Dataset::read_from(a.as_slice()).is_err());
    }
}
