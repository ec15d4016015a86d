use dasp_rl::agent::{pretrain_for, train_with_dasp, TrainConfig};
use dasp_rl::density::{pretrain_dasp, DaspModel, DaspTrainConfig};
use dasp_rl::env::PdController;
use dasp_rl::env::{generate_dataset, KdeOracle, PointMassEnv, PushLevel, PushSpec, Source, Tier};
use dasp_rl::eval::{
    density_recovery_test, evaluate, over_regularization, sweep_alpha, validity_analysis, Anchors, Controller,
    SweepCell,
};
use dasp_rl::nn::SeededRng;

fn small_config() -> TrainConfig {
    TrainConfig {
        steps: 80,
        batch_size: 32,
        hidden: 16,
        dasp_hidden: 16,
        latent_dim: 4,
        dasp_epochs: 3,
        dasp_steps_per_epoch: 5,
        dasp_batch_size: 64,
        log_interval: 40,
        seed: 21,
        alpha: 0.5,
        ..TrainConfig::default()
    }
}

#[test]
fn single_cell_sweep_matches_a_plain_run() {
    let env = PointMassEnv::default();
    let anchors = Anchors::default_for(&env).unwrap();
    let data = generate_dataset(&env, Tier::Medium, 2_000, 3).unwrap();
    let cfg = small_config();
    let cells = sweep_alpha(&data, &[cfg.alpha], &cfg, &env, &anchors, 5, 8).unwrap();

    let (dasp, _) = pretrain_for(&data, &cfg).unwrap();
    let policy = train_with_dasp(&data, &cfg, dasp).unwrap().policy;
    let plain = evaluate(&policy, &env, 5, None, 8, &anchors, None).unwrap();
    assert_eq!(cells, vec![SweepCell { alpha: cfg.alpha, outcome: Ok(plain.mean_normalized_return) }]);
}

#[test]
fn failed_cells_do_not_abort_the_sweep() {
    let env = PointMassEnv::default();
    let anchors = Anchors::default_for(&env).unwrap();
    let data = generate_dataset(&env, Tier::Medium, 1_000, 4).unwrap();
    let cells = sweep_alpha(&data, &[0.1, -1.0, 3.0], &small_config(), &env, &anchors, 2, 0).unwrap();
    assert_eq!(cells.len(), 3);
    assert!(cells[0].normalized_return().is_some());
    assert!(cells[1].outcome.is_err());
    assert!(cells[2].normalized_return().is_some());
    assert!(sweep_alpha(&data, &[], &small_config(), &env, &anchors, 2, 0).is_err());
}

#[test]
fn over_regularization_reads_the_largest_alpha() {
    let cell = |alpha, r: f64| SweepCell { alpha, outcome: Ok(r) };
    let cells = [cell(100.0, 20.0), cell(0.1, 60.0), cell(3.0, 40.0)];
    assert_eq!(over_regularization(&cells), Some((60.0, 20.0, true)));
    let flat = [cell(0.1, 50.0), cell(100.0, 50.0)];
    assert_eq!(over_regularization(&flat), Some((50.0, 50.0, false)));
    let failed = [cell(0.1, 50.0), SweepCell { alpha: 100.0, outcome: Err("diverged".into()) }];
    assert_eq!(over_regularization(&failed), None);
}

#[test]
fn identical_policies_have_zero_gap() {
    let env = PointMassEnv::default();
    let data = generate_dataset(&env, Tier::Medium, 5_000, 5).unwrap();
    let oracle = KdeOracle::new(data.states.view()).unwrap();
    let pd = PdController::default();
    let pair: (&dyn Controller, &dyn Controller) = (&pd, &pd);
    let push = PushSpec::new(PushLevel::Moderate);
    let report = density_recovery_test(&[pair, pair], &[1, 2], &env, &oracle, &push, 3, 20).unwrap();
    assert_eq!(report.wins, 0);
    assert_eq!(report.terminal_gap, 0.0);
    for c in &report.per_seed {
        assert!(c.dasp.pushes > 0);
        assert_eq!(c.gap(), 0.0);
    }
}

#[test]
fn recovery_rejects_mismatched_inputs() {
    let env = PointMassEnv::default();
    let data = generate_dataset(&env, Tier::Medium, 500, 5).unwrap();
    let oracle = KdeOracle::new(data.states.view()).unwrap();
    let pd = PdController::default();
    let pair: (&dyn Controller, &dyn Controller) = (&pd, &pd);
    let push = PushSpec::new(PushLevel::Slight);
    assert!(density_recovery_test(&[pair], &[1, 2], &env, &oracle, &push, 3, 20).is_err());
    assert!(density_recovery_test(&[pair], &[1], &env, &oracle, &push, 3, 0).is_err());
}

#[test]
fn validity_margin_is_stable_across_seeds() {
    let env = PointMassEnv::default();
    let data = generate_dataset(&env, Tier::Medium, 20_000, 6).unwrap();
    let mut rng = SeededRng::new(7);
    let init = DaspModel::new(4, 2, 16, 64, &mut rng);
    let cfg = DaspTrainConfig { epochs: 30, ..DaspTrainConfig::default() };
    let (model, _) = pretrain_dasp(init, &data, &cfg, &mut rng).unwrap();
    let score = TrainConfig::default().score_config();
    let reports: Vec<_> = [11, 12]
        .iter()
        .map(|&seed| validity_analysis(&model, &data, &env, &Source::Medium, 5_000, &score, false, seed).unwrap())
        .collect();
    for r in &reports {
        let cap = r.tau.exp();
        assert!(r.safe_mean > 0.0 && r.safe_mean <= cap);
        assert!(r.unsafe_mean > 0.0 && r.unsafe_mean <= cap);
    }
    let spread = (reports[0].margin - reports[1].margin).abs();
    println!("margins {} {}", reports[0].margin, reports[1].margin);
    assert!(spread < 0.05, "spread {spread}");
}
