//! Analytic gradients against central finite differences.

use dasp_rl::agent::{DensityTerm, GaussianPolicy, QEnsemble};
use dasp_rl::density::{DaspModel, ScoreConfig};
use dasp_rl::nn::{Mlp, Parameters, SeededRng};
use ndarray::{Array1, Array2};

use super::{central_diff, max_rel_err, param_fd};

pub const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;
pub const ACTOR_TOL: f64 = 1e-3;

fn randn(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.standard_normal())
}

pub fn mlp_parameter_and_input() -> f64 {
    let mut rng = SeededRng::new(11);
    let net = Mlp::new(&[5, 7, 6, 3], &mut rng);
    let x = rng.sample_standard_normal(5);
    let g = rng.sample_standard_normal(3);
    let f = |n: &Mlp, x: &[f64]| n.forward(x).unwrap().iter().zip(&g).map(|(o, w)| o * w).sum::<f64>();

    let (grads, g_in) = net.backward(&x, &g).unwrap();
    let num = param_fd(&net, |n| f(n, &x), H);
    let num_in = central_diff(|xp| f(&net, xp), &x, H);
    max_rel_err(&grads.flat(), &num).max(max_rel_err(&g_in, &num_in))
}

const KINK_MARGIN: f64 = 1e-4;

/// Smallest |pre-activation| over the hidden units at input `x`.
fn nearest_kink(net: &Mlp, x: &[f64]) -> f64 {
    let mut h = ndarray::Array1::from(x.to_vec());
    let mut nearest = f64::INFINITY;
    let hidden = net.layers().len() - 1;
    for layer in &net.layers()[..hidden] {
        let z = layer.weight.dot(&h) + &layer.bias;
        nearest = z.iter().fold(nearest, |m, v| m.min(v.abs()));
        h = z.mapv(|v| v.max(0.0));
    }
    nearest
}

/// Every layout the library builds with default widths (state 4, action 2, latent 16).
const REPO_SHAPES: [(&str, [usize; 4]); 5] = [
    ("policy", [4, 64, 64, 4]),
    ("critic", [6, 64, 64, 1]),
    ("encoder_sa", [6, 64, 64, 32]),
    ("encoder_sp", [4, 64, 64, 32]),
    ("decoder", [16, 64, 64, 8]),
];

pub fn repo_shapes_at_many_points() -> f64 {
    let mut rng = SeededRng::new(13);
    let mut worst = 0.0f64;
    for (_, shape) in REPO_SHAPES {
        // 48 random coordinates per point keeps this fast
        let mut points = 0;
        while points < 100 {
            let net = Mlp::new(&shape, &mut rng);
            let x = rng.sample_standard_normal(shape[0]);
            // a ReLU kink within reach of the probe step makes the difference quotient meaningless
            if nearest_kink(&net, &x) < KINK_MARGIN {
                continue;
            }
            points += 1;
            let g = rng.sample_standard_normal(shape[3]);
            let f = |n: &Mlp| n.forward(&x).unwrap().iter().zip(&g).map(|(o, w)| o * w).sum::<f64>();
            let (grads, _) = net.backward(&x, &g).unwrap();
            let (theta, analytic_all) = (net.flat_params(), grads.flat());
            let coords: Vec<usize> = (0..48).map(|_| rng.index(theta.len())).collect();
            let mut probe = net.clone();
            let mut at = |i: usize, v: f64| {
                let mut t = theta.clone();
                t[i] = v;
                probe.set_flat_params(&t).unwrap();
                f(&probe)
            };
            let num: Vec<f64> =
                coords.iter().map(|&i| (at(i, theta[i] + H) - at(i, theta[i] - H)) / (2.0 * H)).collect();
            let analytic: Vec<f64> = coords.iter().map(|&i| analytic_all[i]).collect();
            worst = worst.max(max_rel_err(&analytic, &num));
        }
    }
    worst
}

pub fn mlp_batch() -> f64 {
    let mut rng = SeededRng::new(12);
    let net = Mlp::new(&[3, 8, 2], &mut rng);
    let x = randn(6, 3, &mut rng);
    let g = randn(6, 2, &mut rng);
    let f = |n: &Mlp| (&n.predict_batch(x.view()).unwrap() * &g).sum();
    let trace = net.forward_batch(x.view()).unwrap();
    let (grads, _) = net.backward_batch(&trace, g.view()).unwrap();
    max_rel_err(&grads.flat(), &param_fd(&net, f, H))
}

struct LossFixture {
    model: DaspModel,
    s: Array2<f64>,
    a: Array2<f64>,
    sp: Array2<f64>,
    eps: Array2<f64>,
    w: Vec<f64>,
}

impl LossFixture {
    fn new(seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let (b, sd, ad, k) = (5, 3, 2, 4);
        Self {
            model: DaspModel::new(sd, ad, k, 12, &mut rng),
            s: randn(b, sd, &mut rng),
            a: randn(b, ad, &mut rng),
            sp: randn(b, sd, &mut rng),
            eps: randn(b, k, &mut rng),
            w: (0..b).map(|_| rng.uniform(0.2, 1.0)).collect(),
        }
    }

    fn value(&self, m: &DaspModel, s: &Array2<f64>, a: &Array2<f64>, sp: &Array2<f64>) -> f64 {
        let tape = m.loss_forward(s.view(), a.view(), sp.view(), self.eps.view()).unwrap();
        tape.terms.iter().zip(&self.w).map(|(t, w)| w * t.total).sum()
    }
}

pub fn density_loss_per_network() -> f64 {
    let fx = LossFixture::new(21);
    let tape = fx.model.loss_forward(fx.s.view(), fx.a.view(), fx.sp.view(), fx.eps.view()).unwrap();
    let (grads, _) = fx.model.loss_backward(&tape, &fx.w).unwrap();
    let num = param_fd(&fx.model, |m| fx.value(m, &fx.s, &fx.a, &fx.sp), H);
    let analytic = grads.flat();

    // blocks are laid out encoder_sa, encoder_sp, decoder
    let sizes = [fx.model.encoder_sa.num_params(), fx.model.encoder_sp.num_params(), fx.model.decoder.num_params()];
    let mut off = 0;
    let mut worst = 0.0f64;
    for n in sizes {
        worst = worst.max(max_rel_err(&analytic[off..off + n], &num[off..off + n]));
        off += n;
    }
    worst
}

pub fn density_loss_inputs() -> f64 {
    let fx = LossFixture::new(22);
    let tape = fx.model.loss_forward(fx.s.view(), fx.a.view(), fx.sp.view(), fx.eps.view()).unwrap();
    let (_, inputs) = fx.model.loss_backward(&tape, &fx.w).unwrap();
    let fd_wrt = |which: usize| {
        let base = [&fx.s, &fx.a, &fx.sp][which].clone();
        central_diff(
            |flat| {
                let x = Array2::from_shape_vec(base.raw_dim(), flat.to_vec()).unwrap();
                match which {
                    0 => fx.value(&fx.model, &x, &fx.a, &fx.sp),
                    1 => fx.value(&fx.model, &fx.s, &x, &fx.sp),
                    _ => fx.value(&fx.model, &fx.s, &fx.a, &x),
                }
            },
            base.as_slice().unwrap(),
            H,
        )
    };
    [&inputs.state, &inputs.action, &inputs.next_state]
        .into_iter()
        .enumerate()
        .map(|(which, got)| max_rel_err(&got.iter().copied().collect::<Vec<_>>(), &fd_wrt(which)))
        .fold(0.0, f64::max)
}

pub fn prediction() -> f64 {
    let mut rng = SeededRng::new(31);
    let model = DaspModel::new(3, 2, 4, 10, &mut rng);
    let (s, a) = (randn(4, 3, &mut rng), randn(4, 2, &mut rng));
    let g = randn(4, 3, &mut rng);
    let ez = randn(4, 4, &mut rng);
    let ex = randn(4, 3, &mut rng);
    let mut worst = 0.0f64;
    for sampled in [false, true] {
        let (ez, ex) = if sampled { (Some(ez.view()), Some(ex.view())) } else { (None, None) };
        let f = |m: &DaspModel, a: &Array2<f64>| {
            (&m.predict_forward(s.view(), a.view(), ez, ex).unwrap().next_state * &g).sum()
        };
        let tape = model.predict_forward(s.view(), a.view(), ez, ex).unwrap();
        let (grads, _, g_a) = model.predict_backward(&tape, g.view()).unwrap();
        worst = worst.max(max_rel_err(&grads.flat(), &param_fd(&model, |m| f(m, &a), H)));
        let num_a = central_diff(
            |flat| f(&model, &Array2::from_shape_vec((4, 2), flat.to_vec()).unwrap()),
            a.as_slice().unwrap(),
            H,
        );
        worst = worst.max(max_rel_err(&g_a.iter().copied().collect::<Vec<_>>(), &num_a));
    }
    worst
}

pub fn score_action() -> f64 {
    let mut rng = SeededRng::new(41);
    let model = DaspModel::new(3, 2, 4, 10, &mut rng);
    let s = randn(6, 3, &mut rng);
    let a = randn(6, 2, &mut rng);
    let mut worst = 0.0f64;
    for deterministic in [true, false] {
        let cfg = ScoreConfig { tau: 1e9, n_samples: 2, deterministic_prediction: deterministic };
        let score_rng = SeededRng::new(99);
        let sb = model.score_batch(s.view(), a.view(), &cfg, &mut score_rng.clone(), true).unwrap();
        let num = central_diff(
            |flat| {
                let ap = Array2::from_shape_vec((6, 2), flat.to_vec()).unwrap();
                let r = model.score_batch(s.view(), ap.view(), &cfg, &mut score_rng.clone(), false).unwrap();
                r.scores.iter().sum()
            },
            a.as_slice().unwrap(),
            H,
        );
        let got: Vec<f64> = sb.action_grad.unwrap().iter().copied().collect();
        worst = worst.max(max_rel_err(&got, &num));
    }
    worst
}

pub fn policy() -> f64 {
    let mut rng = SeededRng::new(51);
    let policy = GaussianPolicy::new(3, 2, 10, &[-1.0, -2.0], &[1.0, 0.5], &mut rng).unwrap();
    let s = randn(5, 3, &mut rng);
    let eps = randn(5, 2, &mut rng);
    let g = randn(5, 2, &mut rng);
    let f = |p: &GaussianPolicy| (&p.forward(s.view(), Some(eps.view())).unwrap().actions * &g).sum();
    let tape = policy.forward(s.view(), Some(eps.view())).unwrap();
    let (grads, _) = policy.backward(&tape, g.view()).unwrap();
    max_rel_err(&grads.flat(), &param_fd(&policy, f, H))
}

pub fn min_q_action() -> f64 {
    let mut rng = SeededRng::new(61);
    let critic = QEnsemble::new(3, 2, 10, 3, 0.005, &mut rng).unwrap();
    let s = randn(7, 3, &mut rng);
    let a = randn(7, 2, &mut rng);
    let w = Array1::from_shape_fn(7, |_| rng.uniform(0.5, 1.5));
    let (_, g) = critic.min_q_action_grad(s.view(), a.view(), w.view()).unwrap();
    let num = central_diff(
        |flat| {
            let ap = Array2::from_shape_vec((7, 2), flat.to_vec()).unwrap();
            (critic.min_q(s.view(), ap.view()).unwrap() * &w).sum()
        },
        a.as_slice().unwrap(),
        H,
    );
    max_rel_err(&g.iter().copied().collect::<Vec<_>>(), &num)
}

/// The actor objective with every random draw fixed (common random numbers across the
/// finite-difference probes).
pub fn actor_check(alpha: f64, deterministic_prediction: bool, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let (b, sd, ad) = (12, 4, 2);
    let policy = GaussianPolicy::new(sd, ad, 16, &[-1.0; 2], &[1.0; 2], &mut rng).unwrap();
    let critic = QEnsemble::new(sd, ad, 16, 2, 0.005, &mut rng).unwrap();
    let dasp = DaspModel::new(sd, ad, 4, 16, &mut rng);
    let states = randn(b, sd, &mut rng);
    let q_eps = randn(b, ad, &mut rng);
    let perturbed = &states + &(randn(b, sd, &mut rng) * 0.1);
    let eps_hat = randn(b, ad, &mut rng);
    let score = ScoreConfig { tau: 1e9, n_samples: 1, deterministic_prediction };
    let score_rng = SeededRng::new(seed + 1000);
    let eval = |p: &GaussianPolicy| {
        let term = DensityTerm { dasp: &dasp, alpha, perturbed: perturbed.view(), eps: eps_hat.view(), score };
        dasp_rl::agent::actor_objective(p, &critic, states.view(), q_eps.view(), Some(term), &mut score_rng.clone())
            .unwrap()
    };
    let analytic = eval(&policy).grads.flat();
    let num = param_fd(&policy, |p| eval(p).value, H);
    max_rel_err(&analytic, &num)
}

/// Sampled actor objective over several weights and both prediction modes.
pub fn actor_objective() -> f64 {
    [(0.0, true, 71), (0.1, true, 72), (1.0, true, 73), (1.0, false, 74)]
        .into_iter()
        .map(|(alpha, det, seed)| actor_check(alpha, det, seed))
        .fold(0.0, f64::max)
}

pub struct Check {
    pub name: &'static str,
    pub err: f64,
    pub tol: f64,
}

/// Every check with its tolerance.
pub fn all() -> Vec<Check> {
    let checks: [(&'static str, fn() -> f64, f64); 10] = [
        ("mlp parameters and inputs", mlp_parameter_and_input, TOL),
        ("mlp at default shapes", repo_shapes_at_many_points, TOL),
        ("mlp batched", mlp_batch, TOL),
        ("density loss parameters", density_loss_per_network, TOL),
        ("density loss inputs", density_loss_inputs, TOL),
        ("next-state prediction", prediction, TOL),
        ("score action gradient", score_action, TOL),
        ("policy reparameterization", policy, TOL),
        ("ensemble-min action gradient", min_q_action, TOL),
        ("actor objective", actor_objective, ACTOR_TOL),
    ];
    checks.into_iter().map(|(name, f, tol)| Check { name, err: f(), tol }).collect()
}
