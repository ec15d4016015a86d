//! Ensemble of Q-functions with Polyak-averaged targets.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::agent::policy::GaussianPolicy;
use crate::env::Batch;
use crate::error::{check_len, Error, Result};
use crate::nn::{AdamConfig, AdamState, Mlp, ParamBlock, Parameters, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct QEnsemble {
    pub members: Vec<Mlp>,
    pub targets: Vec<Mlp>,
    /// Soft-update rate `rho` in `target <- (1 - rho) * target + rho * member`.
    pub rho: f64,
}

impl QEnsemble {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        size: usize,
        rho: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let members: Vec<Mlp> =
            (0..size).map(|_| Mlp::new(&[state_dim + action_dim, hidden, hidden, 1], rng)).collect();
        Self::from_members(members, rho)
    }

    /// Targets start as exact copies of the members.
    pub fn from_members(members: Vec<Mlp>, rho: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("a Q ensemble needs at least one member".into()));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Config(format!("soft-update rate must lie in (0, 1], got {rho}")));
        }
        for m in &members {
            check_len("Q output", 1, m.output_dim())?;
            check_len("Q input", members[0].input_dim(), m.input_dim())?;
        }
        Ok(Self { targets: members.clone(), members, rho })
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    fn evaluate(nets: &[Mlp], s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("Q action rows", s.nrows(), a.nrows())?;
        let x = concatenate![Axis(1), s, a];
        let mut out = Array2::zeros((s.nrows(), nets.len()));
        for (j, net) in nets.iter().enumerate() {
            out.column_mut(j).assign(&net.predict_batch(x.view())?.column(0));
        }
        Ok(out)
    }

    /// `Q_j(s_i, a_i)` for every row `i` and member `j`.
    pub fn q_values(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
        Self::evaluate(&self.members, s, a)
    }

    pub fn target_values(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
        Self::evaluate(&self.targets, s, a)
    }

    pub fn min_q(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(row_min(&self.q_values(s, a)?))
    }

    pub fn soft_update(&mut self) {
        let rho = self.rho;
        for (t, m) in self.targets.iter_mut().zip(&self.members) {
            let src: Vec<Vec<f64>> = m.blocks().iter().map(|b| b.data.to_vec()).collect();
            for (tb, mb) in t.blocks_mut().into_iter().zip(src) {
                for (x, y) in tb.iter_mut().zip(mb) {
                    *x = (1.0 - rho) * *x + rho * y;
                }
            }
        }
    }

    /// Gradient of `sum_i g[i] * min_j Q_j(s_i, a_i)` with respect to the actions.
    ///
    /// Ties go to the lowest member index.
    pub fn min_q_action_grad(
        &self,
        s: ArrayView2<f64>,
        a: ArrayView2<f64>,
        g: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        check_len("Q action rows", s.nrows(), a.nrows())?;
        check_len("Q upstream rows", s.nrows(), g.len())?;
        let x = concatenate![Axis(1), s, a];
        let traces = self.members.iter().map(|m| m.forward_batch(x.view())).collect::<Result<Vec<_>>>()?;
        let b = s.nrows();
        let mut values = Array1::zeros(b);
        let mut argmin = vec![0usize; b];
        for i in 0..b {
            let mut best = f64::INFINITY;
            for (j, t) in traces.iter().enumerate() {
                let q = t.output()[[i, 0]];
                if q < best {
                    best = q;
                    argmin[i] = j;
                }
            }
            values[i] = best;
        }
        let sd = s.ncols();
        let mut g_a = Array2::zeros(a.raw_dim());
        for (j, (m, t)) in self.members.iter().zip(&traces).enumerate() {
            let mut up = Array2::zeros((b, 1));
            let mut any = false;
            for i in 0..b {
                if argmin[i] == j {
                    up[[i, 0]] = g[i];
                    any = true;
                }
            }
            if any {
                let (_, g_in) = m.backward_batch(t, up.view())?;
                g_a += &g_in.slice(ndarray::s![.., sd..]);
            }
        }
        Ok((values, g_a))
    }
}

pub fn row_min(q: &Array2<f64>) -> Array1<f64> {
    q.map_axis(Axis(1), |r| r.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `y = r + gamma * (1 - done) * min_j Q_target_j(s', a')` with `a' ~ pi(s')`.
pub fn bellman_target(
    critic: &QEnsemble,
    policy: &GaussianPolicy,
    rewards: ArrayView1<f64>,
    next_states: ArrayView2<f64>,
    terminals: ArrayView1<f64>,
    gamma: f64,
    rng: &mut SeededRng,
) -> Result<Array1<f64>> {
    let a_next = policy.act_batch(next_states, false, rng)?;
    let q_next = row_min(&critic.target_values(next_states, a_next.view())?);
    Ok(&rewards + &(gamma * &(1.0 - &terminals) * &q_next))
}

/// Per-member Adam optimizers.
#[derive(Debug, Clone)]
pub struct CriticOptimizer {
    states: Vec<AdamState>,
}

impl CriticOptimizer {
    pub fn new(config: AdamConfig, critic: &QEnsemble) -> Self {
        Self { states: critic.members.iter().map(|m| AdamState::new(config, m)).collect() }
    }
}

/// One critic step: builds the Bellman target from the frozen targets, takes one Adam step of
/// every member on its mean squared error, then soft-updates the targets.
///
/// Returns each member's mean squared error before the step.
pub fn critic_update(
    critic: &mut QEnsemble,
    opt: &mut CriticOptimizer,
    policy: &GaussianPolicy,
    batch: &Batch,
    gamma: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Config("critic update needs a non-empty batch".into()));
    }
    let y = bellman_target(
        critic,
        policy,
        batch.rewards.view(),
        batch.next_states.view(),
        batch.terminals.view(),
        gamma,
        rng,
    )?;
    let losses = regress_members(critic, opt, batch.states.view(), batch.actions.view(), y.view())?;
    critic.soft_update();
    Ok(losses)
}

/// One Adam step of every member toward the fixed target `y`, without touching the targets.
pub fn regress_members(
    critic: &mut QEnsemble,
    opt: &mut CriticOptimizer,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<Vec<f64>> {
    let x = concatenate![Axis(1), states, actions];
    let b = x.nrows() as f64;
    let mut losses = Vec::with_capacity(critic.size());
    for (m, adam) in critic.members.iter_mut().zip(&mut opt.states) {
        let trace = m.forward_batch(x.view())?;
        let err = &trace.output().column(0) - &y;
        let loss = err.mapv(|e| e * e).sum() / b;
        if !loss.is_finite() {
            return Err(Error::NumericFault("critic loss".into()));
        }
        let up = (err * (2.0 / b)).insert_axis(Axis(1));
        let (grads, _) = m.backward_batch(&trace, up.view())?;
        adam.step(m, &grads)?;
        losses.push(loss);
    }
    Ok(losses)
}

impl Parameters for QEnsemble {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        self.members.iter().chain(&self.targets).flat_map(|m| m.blocks()).collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.members.iter_mut().chain(self.targets.iter_mut()).flat_map(|m| m.blocks_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn soft_update_interpolates() {
        let mut member = Mlp::zeros(&[2, 1]);
        member.layers_mut()[0].bias[0] = 1.0;
        let mut q = QEnsemble::from_members(vec![Mlp::zeros(&[2, 1])], 0.25).unwrap();
        q.members[0] = member;
        q.soft_update();
        assert_eq!(q.targets[0].layers()[0].bias[0], 0.25);
        q.soft_update();
        assert_eq!(q.targets[0].layers()[0].bias[0], 0.25 * 0.75 + 0.25);
    }

    #[test]
    fn rho_one_copies() {
        let mut rng = SeededRng::new(1);
        let mut q = QEnsemble::new(2, 1, 4, 2, 1.0, &mut rng).unwrap();
        q.members[1] = Mlp::new(&[3, 4, 4, 1], &mut rng);
        q.soft_update();
        assert_eq!(q.members, q.targets);
    }

    #[test]
    fn terminal_rows_skip_bootstrap() {
        let mut rng = SeededRng::new(2);
        let critic = QEnsemble::new(2, 1, 8, 2, 0.005, &mut rng).unwrap();
        let policy = GaussianPolicy::new(2, 1, 8, &[-1.0], &[1.0], &mut rng).unwrap();
        let y = bellman_target(
            &critic,
            &policy,
            array![1.5, -2.0].view(),
            array![[0.3, 0.1], [0.2, 0.2]].view(),
            array![1.0, 0.0].view(),
            0.9,
            &mut rng,
        )
        .unwrap();
        assert_eq!(y[0], 1.5);
        assert_ne!(y[1], -2.0);
    }

    #[test]
    fn min_selects_smallest_member() {
        let mut lo = Mlp::zeros(&[2, 1]);
        lo.layers_mut()[0].bias[0] = -3.0;
        let mut hi = Mlp::zeros(&[2, 1]);
        hi.layers_mut()[0].bias[0] = 4.0;
        let q = QEnsemble::from_members(vec![hi, lo], 0.1).unwrap();
        let m = q.min_q(array![[0.0]].view(), array![[0.0]].view()).unwrap();
        assert_eq!(m[0], -3.0);
    }

    #[test]
    fn critic_step_reduces_error_on_fixed_target() {
        let mut rng = SeededRng::new(3);
        let mut critic = QEnsemble::new(2, 1, 16, 2, 0.005, &mut rng).unwrap();
        let mut opt = CriticOptimizer::new(AdamConfig::with_lr(1e-2), &critic);
        let s = Array2::from_shape_fn((64, 2), |_| rng.standard_normal());
        let a = Array2::from_shape_fn((64, 1), |_| rng.uniform(-1.0, 1.0));
        let y = s.column(0).mapv(|v| 2.0 * v) + &a.column(0);
        let first = regress_members(&mut critic, &mut opt, s.view(), a.view(), y.view()).unwrap();
        let mut last = first.clone();
        for _ in 0..300 {
            last = regress_members(&mut critic, &mut opt, s.view(), a.view(), y.view()).unwrap();
        }
        for (f, l) in first.iter().zip(&last) {
            assert!(l < &(0.1 * f), "{f} -> {l}");
        }
    }
}
