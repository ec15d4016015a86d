use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dasp_rl::agent::{pretrain_for, train, train_with_dasp, TrainConfig};
use dasp_rl::env::{generate_dataset, Dataset, KdeOracle, PointMassEnv, PushLevel, PushSpec, Source, Tier};
use dasp_rl::eval::{
    evaluate, over_regularization, recovery_experiment, sweep_alpha, validity_analysis, Anchors, DEFAULT_ALPHAS,
    DEFAULT_RECOVERY_WINDOW,
};
use dasp_rl::io;
use dasp_rl::nn::Checkpoint;
use dasp_rl::{Error, Result};

#[derive(Parser)]
#[command(name = "dasp", version, about = "Density-regularized offline RL on a point-mass task")]
struct Cli {
    /// Training config in `key = value` form.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (for `gen-data`, the dataset file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Config override, `key=value`; repeatable, applied after `--config`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a scripted behavior policy and write a dataset file.
    GenData {
        #[arg(long, default_value = "pointmass")]
        env: String,
        /// random, medium, expert or mixture(<random fraction>).
        #[arg(long, default_value = "medium")]
        tier: Tier,
        #[arg(long, default_value_t = 100_000)]
        size: usize,
    },
    /// Pretrain the density model only.
    TrainDasp(DataArg),
    /// Pretrain the density model, then train the actor-critic.
    Train {
        #[command(flatten)]
        data: DataArg,
        /// Skip pretraining and use this density checkpoint.
        #[arg(long)]
        dasp: Option<PathBuf>,
    },
    /// Greedy rollouts of a trained policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        push: Option<PushLevel>,
        /// Dataset whose state density is traced along the rollouts.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Mean exp(score) of behavior actions against uniform-random actions.
    Validity {
        #[command(flatten)]
        data: DataArg,
        /// Comma-separated seeds; one density model is pretrained per seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 5000)]
        states: usize,
        /// Score against the simulator's next state instead of the model's prediction.
        #[arg(long)]
        true_dynamics: bool,
    },
    /// Train and evaluate one agent per density weight.
    SweepAlpha {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ALPHAS)]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
    },
    /// Post-push density recovery of the configured agent against its alpha = 0 twin.
    Recovery {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = PushLevel::Moderate)]
        push: PushLevel,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = DEFAULT_RECOVERY_WINDOW)]
        window: usize,
    },
}

#[derive(Args)]
struct DataArg {
    /// Dataset file written by `gen-data`.
    #[arg(long)]
    data: PathBuf,
}

/// Every this many dataset states feeds the density oracle.
const ORACLE_STRIDE: usize = 10;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_data(path: &Path) -> Result<Dataset> {
    let data = Dataset::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
        other => other,
    })?;
    if data.meta.env_id != PointMassEnv::ID {
        return Err(Error::Config(format!("unsupported environment {:?}", data.meta.env_id)));
    }
    Ok(data)
}

fn oracle_for(data: &Dataset) -> Result<KdeOracle> {
    KdeOracle::new(data.states.slice(ndarray::s![..;ORACLE_STRIDE, ..]))
}

fn seeds_or(seeds: &[u64], cfg: &TrainConfig) -> Vec<u64> {
    if seeds.is_empty() {
        vec![cfg.seed]
    } else {
        seeds.to_vec()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}%")).unwrap_or_else(|| "n/a".into())
}

fn run(cli: Cli) -> Result<()> {
    let env = PointMassEnv::default();
    match &cli.command {
        Command::GenData { env: name, tier, size } => {
            if name != "pointmass" {
                return Err(Error::Config(format!("unknown environment {name:?}")));
            }
            let seed = config(&cli)?.seed;
            let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("dataset.bin"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let data = generate_dataset(&env, *tier, *size, seed)?;
            data.save(&path)?;
            println!(
                "wrote {} transitions ({} episodes, mean return {}) to {}",
                data.len(),
                data.episodes.len(),
                fmt_opt(data.mean_episode_return()),
                path.display()
            );
        }
        Command::TrainDasp(arg) => {
            let cfg = config(&cli)?;
            let dir = out_dir(&cli)?;
            let data = load_data(&arg.data)?;
            let (model, curve) = pretrain_for(&data, &cfg)?;
            io::dasp_checkpoint(&model).save(dir.join("dasp.ckpt"))?;
            io::write_loss_curve(dir.join("dasp_loss.csv"), &curve)?;
            if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
                println!(
                    "density loss {:.4} -> {:.4} (recon {:.4}, prior kl {:.4}, encoder kl {:.4})",
                    first.loss.total, last.loss.total, last.loss.recon, last.loss.prior_kl, last.loss.enc_kl
                );
            }
        }
        Command::Train { data, dasp } => {
            let cfg = config(&cli)?;
            let dir = out_dir(&cli)?;
            let data = load_data(&data.data)?;
            let out = match dasp {
                Some(path) => train_with_dasp(&data, &cfg, io::dasp_from_checkpoint(&Checkpoint::load(path)?)?)?,
                None => train(&data, &cfg)?,
            };
            out.checkpoint().save(dir.join("agent.ckpt"))?;
            io::write_metrics(dir.join("metrics.csv"), &out.metrics)?;
            if !out.dasp_curve.is_empty() {
                io::write_loss_curve(dir.join("dasp_loss.csv"), &out.dasp_curve)?;
            }
            fs::write(dir.join("config.txt"), cfg.to_kv())?;
            if let Some(m) = out.metrics.last() {
                println!(
                    "step {}: critic loss {:.4}, q term {:.3}, density term {:.4} (clipped {:.3})",
                    m.step, m.critic_loss_mean, m.actor_q_term, m.actor_r_term, m.r_term_clipped_fraction
                );
            }
        }
        Command::Eval { checkpoint, episodes, push, data } => {
            let cfg = config(&cli)?;
            let dir = out_dir(&cli)?;
            let policy = io::policy_from_checkpoint(&Checkpoint::load(checkpoint)?)?;
            let oracle = data.as_deref().map(load_data).transpose()?.map(|d| oracle_for(&d)).transpose()?;
            let anchors = Anchors::default_for(&env)?;
            let spec = push.map(PushSpec::new);
            let report = evaluate(&policy, &env, *episodes, spec.as_ref(), cfg.seed, &anchors, oracle.as_ref())?;
            io::write_eval(dir.join("eval.csv"), &report)?;
            println!(
                "normalized return {:.2} (raw {:.2} +- {:.2}); unpushed {:.2}; decrease {}; mean log-density {}",
                report.mean_normalized_return,
                report.raw_return_mean,
                report.raw_return_std,
                report.unperturbed_normalized_return,
                fmt_pct(report.decrease_pct),
                fmt_opt(report.mean_log_density)
            );
        }
        Command::Validity { data, seeds, states, true_dynamics } => {
            let cfg = config(&cli)?;
            let dir = out_dir(&cli)?;
            let data = load_data(&data.data)?;
            let mut rows = Vec::new();
            for seed in seeds_or(seeds, &cfg) {
                let cfg = TrainConfig { seed, ..cfg.clone() };
                let (model, _) = pretrain_for(&data, &cfg)?;
                let r = validity_analysis(
                    &model,
                    &data,
                    &env,
                    &Source::Medium,
                    *states,
                    &cfg.score_config(),
                    *true_dynamics,
                    seed,
                )?;
                println!("seed {seed}: safe {:.4} unsafe {:.4} margin {:.4}", r.safe_mean, r.unsafe_mean, r.margin);
                rows.push((seed, r));
            }
            io::write_validity(dir.join("validity.csv"), &rows)?;
            let wins = rows.iter().filter(|(_, r)| r.margin > 0.0).count();
            println!("safe actions scored higher in {wins} of {} seeds", rows.len());
        }
        Command::SweepAlpha { data, alphas, episodes } => {
            let cfg = config(&cli)?;
            let dir = out_dir(&cli)?;
            let data = load_data(&data.data)?;
            let anchors = Anchors::default_for(&env)?;
            let cells = sweep_alpha(&data, alphas, &cfg, &env, &anchors, *episodes, cfg.seed)?;
            io::write_sweep(dir.join("sweep.csv"), &cells)?;
            for c in &cells {
                match &c.outcome {
                    Ok(v) => println!("alpha {:>8}: {v:.2}", c.alpha),
                    Err(e) => println!("alpha {:>8}: failed ({e})", c.alpha),
                }
            }
            if let Some((best, last, below)) = over_regularization(&cells) {
                println!("best {best:.2}, largest alpha {last:.2}, below best: {below}");
            }
        }
        Command::Recovery { data, seeds, push, episodes, window } => {
            let cfg = config(&cli)?;
            let dir = out_dir(&cli)?;
            let data = load_data(&data.data)?;
            let oracle = oracle_for(&data)?;
            let anchors = Anchors::default_for(&env)?;
            let seeds = seeds_or(seeds, &cfg);
            let exp = recovery_experiment(
                &data,
                &cfg,
                &seeds,
                &env,
                &oracle,
                &PushSpec::new(*push),
                &anchors,
                *episodes,
                *window,
            )?;
            io::write_recovery(dir.join("recovery.csv"), &exp.recovery)?;
            io::write_table(
                fs::File::create(dir.join("recovery_returns.csv"))?,
                &["seed", "policy", "unperturbed", "pushed", "decrease_pct", "unpushed_log_density"],
                exp.evals.iter().flat_map(|p| {
                    let (dd, da) = p.unpushed_density;
                    [("dasp", &p.dasp, dd), ("ablated", &p.ablated, da)].map(|(name, r, density)| {
                        vec![
                            p.seed.to_string(),
                            name.to_string(),
                            r.unperturbed_normalized_return.to_string(),
                            r.mean_normalized_return.to_string(),
                            r.decrease_pct.map(|d| d.to_string()).unwrap_or_default(),
                            density.to_string(),
                        ]
                    })
                }),
            )?;
            for c in &exp.recovery.per_seed {
                println!(
                    "seed {}: post-push log-density {:.3} vs {:.3} (alpha = 0)",
                    c.seed,
                    c.dasp.mean(),
                    c.ablated.mean()
                );
            }
            let (dec, dec0) = exp.pooled_decrease();
            println!(
                "higher post-push density in {} of {} seeds; decrease {} vs {} (alpha = 0)",
                exp.recovery.wins,
                seeds.len(),
                fmt_pct(dec),
                fmt_pct(dec0)
            );
        }
    }
    Ok(())
}
