//! CSV reports and checkpoint (de)serialization of trained models.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal values always
//! produce equal bytes.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::agent::{GaussianPolicy, MetricsRow, QEnsemble};
use crate::density::{DaspModel, EpochLoss};
use crate::error::{Error, Result};
use crate::eval::{EvalReport, RecoveryReport, SweepCell, ValidityReport};
use crate::nn::Checkpoint;

pub const LOSS_CURVE_HEADER: [&str; 5] = ["epoch", "recon", "prior_kl", "enc_kl", "total"];
pub const EVAL_HEADER: [&str; 7] =
    ["episode", "raw_return", "normalized_return", "length", "reached_goal", "pushes", "mean_log_density"];
pub const VALIDITY_HEADER: [&str; 7] =
    ["seed", "safe_mean", "unsafe_mean", "margin", "n_states", "tau", "use_true_dynamics"];
pub const SWEEP_HEADER: [&str; 3] = ["alpha", "normalized_return", "error"];
pub const RECOVERY_HEADER: [&str; 5] = ["seed", "policy", "step_after_push", "mean_log_density", "pushes"];

/// Missing values are written as empty fields.
fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a header and rows of already formatted fields.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::shape("csv row", header.len(), row.len()));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn save_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    write_table(File::create(path)?, header, rows)
}

pub fn write_loss_curve(path: impl AsRef<Path>, curve: &[EpochLoss]) -> Result<()> {
    save_table(
        path.as_ref(),
        &LOSS_CURVE_HEADER,
        curve.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                e.loss.recon.to_string(),
                e.loss.prior_kl.to_string(),
                e.loss.enc_kl.to_string(),
                e.loss.total.to_string(),
            ]
        }),
    )
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    save_table(
        path.as_ref(),
        &MetricsRow::HEADER,
        rows.iter().map(|m| {
            vec![
                m.step.to_string(),
                m.critic_loss_mean.to_string(),
                m.actor_q_term.to_string(),
                m.actor_r_term.to_string(),
                m.r_term_clipped_fraction.to_string(),
            ]
        }),
    )
}

/// One row per evaluated episode.
pub fn write_eval(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    save_table(
        path.as_ref(),
        &EVAL_HEADER,
        report.episodes.iter().map(|e| {
            vec![
                e.episode.to_string(),
                e.raw_return.to_string(),
                e.normalized_return.to_string(),
                e.length.to_string(),
                u8::from(e.reached_goal).to_string(),
                e.pushes.to_string(),
                opt(e.mean_log_density),
            ]
        }),
    )
}

pub fn write_validity(path: impl AsRef<Path>, reports: &[(u64, ValidityReport)]) -> Result<()> {
    save_table(
        path.as_ref(),
        &VALIDITY_HEADER,
        reports.iter().map(|(seed, r)| {
            vec![
                seed.to_string(),
                r.safe_mean.to_string(),
                r.unsafe_mean.to_string(),
                r.margin.to_string(),
                r.n_states.to_string(),
                r.tau.to_string(),
                u8::from(r.use_true_dynamics).to_string(),
            ]
        }),
    )
}

/// Failed cells keep their row with an empty return and the error text.
pub fn write_sweep(path: impl AsRef<Path>, cells: &[SweepCell]) -> Result<()> {
    save_table(
        path.as_ref(),
        &SWEEP_HEADER,
        cells.iter().map(|c| {
            let (ret, err) = match &c.outcome {
                Ok(v) => (v.to_string(), String::new()),
                Err(e) => (String::new(), e.clone()),
            };
            vec![c.alpha.to_string(), ret, err]
        }),
    )
}

/// Long format: one row per (seed, policy, step after push). Policies are `dasp` and
/// `ablated`; the seed column is `mean` for the cross-seed average.
pub fn write_recovery(path: impl AsRef<Path>, report: &RecoveryReport) -> Result<()> {
    let mut rows = Vec::new();
    for c in &report.per_seed {
        for (name, curve) in [("dasp", &c.dasp), ("ablated", &c.ablated)] {
            for (k, v) in curve.curve.iter().enumerate() {
                rows.push(vec![
                    c.seed.to_string(),
                    name.to_string(),
                    (k + 1).to_string(),
                    v.to_string(),
                    curve.pushes.to_string(),
                ]);
            }
        }
    }
    for (name, curve) in [("dasp", &report.dasp_curve), ("ablated", &report.ablated_curve)] {
        for (k, v) in curve.iter().enumerate() {
            rows.push(vec!["mean".into(), name.to_string(), (k + 1).to_string(), v.to_string(), String::new()]);
        }
    }
    save_table(path.as_ref(), &RECOVERY_HEADER, rows)
}

/// A standalone density-model checkpoint, as written by `train-dasp`.
pub fn dasp_checkpoint(model: &DaspModel) -> Checkpoint {
    let mut c = Checkpoint::new();
    c.push_params("dasp", model);
    c
}

pub fn dasp_from_checkpoint(ckpt: &Checkpoint) -> Result<DaspModel> {
    DaspModel::from_parts(ckpt.mlp("dasp.encoder_sa")?, ckpt.mlp("dasp.encoder_sp")?, ckpt.mlp("dasp.decoder")?)
}

pub fn policy_from_checkpoint(ckpt: &Checkpoint) -> Result<GaussianPolicy> {
    let low = &ckpt.get("policy.low")?.data;
    let high = &ckpt.get("policy.high")?.data;
    GaussianPolicy::from_net(ckpt.mlp("policy")?, low, high)
}

/// Rebuilds the ensemble including its target copies.
pub fn critic_from_checkpoint(ckpt: &Checkpoint) -> Result<QEnsemble> {
    let size = ckpt.scalar("critic.size")?;
    if size < 1.0 || size.fract() != 0.0 {
        return Err(Error::Format(format!("bad critic size {size}")));
    }
    let size = size as usize;
    let members = (0..size).map(|j| ckpt.mlp(&format!("critic.member{j}"))).collect::<Result<Vec<_>>>()?;
    let mut critic = QEnsemble::from_members(members, ckpt.scalar("critic.rho")?)?;
    for (j, t) in critic.targets.iter_mut().enumerate() {
        *t = ckpt.mlp(&format!("critic.target{j}"))?;
    }
    Ok(critic)
}
