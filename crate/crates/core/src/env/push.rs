//! External pushes that knock the agent into out-of-sample states.

use std::fmt;
use std::str::FromStr;

use crate::env::kde::KdeOracle;
use crate::env::pointmass::STATE_DIM;
use crate::error::{Error, Result};
use crate::nn::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PushLevel {
    Slight,
    Moderate,
    Large,
}

impl PushLevel {
    pub const ALL: [PushLevel; 3] = [PushLevel::Slight, PushLevel::Moderate, PushLevel::Large];

    /// Velocity-impulse norms, calibrated against the dataset KDE (see
    /// [`push_density_report`]).
    pub fn default_magnitude(self) -> f64 {
        match self {
            PushLevel::Slight => 0.5,
            PushLevel::Moderate => 1.5,
            PushLevel::Large => 3.0,
        }
    }
}

impl fmt::Display for PushLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PushLevel::Slight => "slight",
            PushLevel::Moderate => "moderate",
            PushLevel::Large => "large",
        })
    }
}

impl FromStr for PushLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slight" => Ok(PushLevel::Slight),
            "moderate" => Ok(PushLevel::Moderate),
            "large" => Ok(PushLevel::Large),
            _ => Err(Error::Config(format!("unknown push level {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushSpec {
    pub level: PushLevel,
    pub magnitude: f64,
    /// Steps between pushes; the first push happens after `period` steps.
    pub period: usize,
}

impl PushSpec {
    pub const DEFAULT_PERIOD: usize = 40;

    pub fn new(level: PushLevel) -> Self {
        Self { level, magnitude: level.default_magnitude(), period: Self::DEFAULT_PERIOD }
    }
}

/// Result of one push: the new state and the impulse that was added to the velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Pushed {
    pub state: [f64; STATE_DIM],
    pub impulse: [f64; 2],
}

/// Adds a velocity impulse of norm `spec.magnitude` in a uniformly random direction.
///
/// The pushed velocity may exceed the speed limit; the next environment step clips it.
pub fn apply_push(s: &[f64], spec: &PushSpec, rng: &mut SeededRng) -> Pushed {
    let angle = rng.uniform(0.0, std::f64::consts::TAU);
    let impulse = [spec.magnitude * angle.cos(), spec.magnitude * angle.sin()];
    let state = [s[0], s[1], s[2] + impulse[0], s[3] + impulse[1]];
    Pushed { state, impulse }
}

/// Where pushed dataset states land relative to the dataset's own density distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PushDensityRow {
    pub level: PushLevel,
    pub magnitude: f64,
    pub mean_log_density: f64,
    /// Fraction of pushed states whose density is below the dataset's 10th / 1st / 0.1th
    /// percentile.
    pub below_p10: f64,
    pub below_p1: f64,
    pub below_p01: f64,
}

/// Calibration table: pushes `n` dataset states at every level and scores them with `oracle`.
pub fn push_density_report(
    oracle: &KdeOracle,
    states: &[[f64; STATE_DIM]],
    magnitudes: &[(PushLevel, f64)],
    rng: &mut SeededRng,
) -> Vec<PushDensityRow> {
    let mut base: Vec<f64> = states.iter().map(|s| oracle.log_density(s)).collect();
    base.sort_by(f64::total_cmp);
    let pct = |q: f64| base[((q * base.len() as f64) as usize).min(base.len() - 1)];
    let (p10, p1, p01) = (pct(0.10), pct(0.01), pct(0.001));
    magnitudes
        .iter()
        .map(|&(level, magnitude)| {
            let spec = PushSpec { level, magnitude, period: PushSpec::DEFAULT_PERIOD };
            let dens: Vec<f64> = states.iter().map(|s| oracle.log_density(&apply_push(s, &spec, rng).state)).collect();
            let n = dens.len() as f64;
            let frac = |t: f64| dens.iter().filter(|&&d| d < t).count() as f64 / n;
            PushDensityRow {
                level,
                magnitude,
                mean_log_density: dens.iter().sum::<f64>() / n,
                below_p10: frac(p10),
                below_p1: frac(p1),
                below_p01: frac(p01),
            }
        })
        .collect()
}
