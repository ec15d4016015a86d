//! The one-step-forward variational density model.
//!
//! Three networks share a latent space of width `K`:
//!
//! - `encoder_sa` maps `(s, a)` to `q_sa(z | s, a)`,
//! - `encoder_sp` maps `s'` to `q_sp(z | s')`,
//! - `decoder` maps `z` to `p(s' | z)`.
//!
//! Every head emits `[mean, log_std]`; log-stds are clamped to `[ln 1e-4, ln 1e4]`. The
//! training loss for one transition is
//!
//! ```text
//! recon    = || mu_dec(z) - s' ||^2,   z = mu_sa + std_sa * eps
//! prior_kl = KL(q_sa || N(0, I))
//! enc_kl   = KL(q_sp || q_sa)
//! total    = recon + prior_kl + enc_kl
//! ```
//!
//! Gradients of `total` are available with respect to all parameters and to the inputs
//! `(s, a, s')`, which is what lets the actor push policy gradients through the score.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::density::gaussian::{kl_terms, kl_to_standard, DiagGaussian, LOG_STD_MAX, LOG_STD_MIN};
use crate::error::{check_len, Error, Result};
use crate::nn::{Gradients, Mlp, MlpTrace, ParamBlock, Parameters, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaspLossBreakdown {
    pub recon: f64,
    pub prior_kl: f64,
    pub enc_kl: f64,
    pub total: f64,
}

impl DaspLossBreakdown {
    pub fn zero() -> Self {
        Self { recon: 0.0, prior_kl: 0.0, enc_kl: 0.0, total: 0.0 }
    }

    pub(crate) fn accumulate(&mut self, other: &Self, weight: f64) {
        self.recon += weight * other.recon;
        self.prior_kl += weight * other.prior_kl;
        self.enc_kl += weight * other.enc_kl;
        self.total += weight * other.total;
    }

    fn check_finite(&self) -> Result<()> {
        for (name, v) in
            [("reconstruction term", self.recon), ("prior KL term", self.prior_kl), ("encoder KL term", self.enc_kl)]
        {
            if !v.is_finite() {
                return Err(Error::NumericFault(format!("density loss {name}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaspModel {
    state_dim: usize,
    action_dim: usize,
    latent_dim: usize,
    pub encoder_sa: Mlp,
    pub encoder_sp: Mlp,
    pub decoder: Mlp,
}

/// Mean / std / log-std of a batch of Gaussian heads plus the mask of unclamped log-stds.
#[derive(Debug, Clone)]
pub(crate) struct HeadBatch {
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
    pub log_std: Array2<f64>,
    pub live: Array2<f64>,
}

impl HeadBatch {
    pub fn split(out: &Array2<f64>) -> Self {
        Self::split_clamped(out, LOG_STD_MIN, LOG_STD_MAX)
    }

    pub fn split_clamped(out: &Array2<f64>, lo: f64, hi: f64) -> Self {
        let k = out.ncols() / 2;
        let mean = out.slice(s![.., ..k]).as_standard_layout().into_owned();
        let raw = out.slice(s![.., k..]).as_standard_layout().into_owned();
        let log_std = raw.mapv(|l| l.clamp(lo, hi));
        let live = raw.mapv(|l| if (lo..=hi).contains(&l) { 1.0 } else { 0.0 });
        let std = log_std.mapv(f64::exp);
        Self { mean, std, log_std, live }
    }

    pub fn row(&self, i: usize) -> DiagGaussian {
        DiagGaussian { mean: self.mean.row(i).to_vec(), std: self.std.row(i).to_vec() }
    }

    /// Gradient w.r.t. the raw head given gradients w.r.t. mean and std.
    pub fn head_grad(&self, g_mean: Array2<f64>, g_std: &Array2<f64>) -> Array2<f64> {
        let g_log = g_std * &self.std * &self.live;
        concatenate![Axis(1), g_mean, g_log]
    }
}

/// Recorded forward pass of the loss over a batch.
pub struct LossTape {
    sa: MlpTrace,
    sp: MlpTrace,
    dec: MlpTrace,
    q_sa: HeadBatch,
    q_sp: HeadBatch,
    eps: Array2<f64>,
    s_next: Array2<f64>,
    pub terms: Vec<DaspLossBreakdown>,
}

/// Input gradients of the summed, weighted loss.
pub struct LossInputGrads {
    pub state: Array2<f64>,
    pub action: Array2<f64>,
    pub next_state: Array2<f64>,
}

/// Recorded forward pass of next-state prediction over a batch.
pub struct PredictTape {
    sa: MlpTrace,
    q_sa: HeadBatch,
    eps_z: Option<Array2<f64>>,
    dec: MlpTrace,
    p_dec: HeadBatch,
    eps_x: Option<Array2<f64>>,
    pub next_state: Array2<f64>,
}

impl DaspModel {
    /// Randomly initialized model with two hidden layers of width `hidden` in every network.
    pub fn new(state_dim: usize, action_dim: usize, latent_dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        Self {
            state_dim,
            action_dim,
            latent_dim,
            encoder_sa: Mlp::new(&[state_dim + action_dim, hidden, hidden, 2 * latent_dim], rng),
            encoder_sp: Mlp::new(&[state_dim, hidden, hidden, 2 * latent_dim], rng),
            decoder: Mlp::new(&[latent_dim, hidden, hidden, 2 * state_dim], rng),
        }
    }

    pub fn from_parts(encoder_sa: Mlp, encoder_sp: Mlp, decoder: Mlp) -> Result<Self> {
        let state_dim = encoder_sp.input_dim();
        let latent_dim = decoder.input_dim();
        if encoder_sa.input_dim() <= state_dim {
            return Err(Error::Config("state-action encoder narrower than the state".into()));
        }
        let action_dim = encoder_sa.input_dim() - state_dim;
        check_len("state-action encoder head", 2 * latent_dim, encoder_sa.output_dim())?;
        check_len("next-state encoder head", 2 * latent_dim, encoder_sp.output_dim())?;
        check_len("decoder head", 2 * state_dim, decoder.output_dim())?;
        Ok(Self { state_dim, action_dim, latent_dim, encoder_sa, encoder_sp, decoder })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn encode_sa(&self, s: &[f64], a: &[f64]) -> Result<DiagGaussian> {
        check_len("state", self.state_dim, s.len())?;
        check_len("action", self.action_dim, a.len())?;
        let x: Vec<f64> = s.iter().chain(a).copied().collect();
        Ok(DiagGaussian::from_head(&self.encoder_sa.forward(&x)?))
    }

    pub fn encode_sp(&self, s_next: &[f64]) -> Result<DiagGaussian> {
        check_len("next state", self.state_dim, s_next.len())?;
        Ok(DiagGaussian::from_head(&self.encoder_sp.forward(s_next)?))
    }

    pub fn decode(&self, z: &[f64]) -> Result<DiagGaussian> {
        check_len("latent", self.latent_dim, z.len())?;
        Ok(DiagGaussian::from_head(&self.decoder.forward(z)?))
    }

    /// Single-transition loss with one reparameterized latent draw from `rng`.
    pub fn dasp_loss(&self, s: &[f64], a: &[f64], s_next: &[f64], rng: &mut SeededRng) -> Result<DaspLossBreakdown> {
        let eps = rng.sample_standard_normal(self.latent_dim);
        self.dasp_loss_with_noise(s, a, s_next, &eps)
    }

    /// Same as [`DaspModel::dasp_loss`] with the latent noise supplied by the caller.
    pub fn dasp_loss_with_noise(&self, s: &[f64], a: &[f64], s_next: &[f64], eps: &[f64]) -> Result<DaspLossBreakdown> {
        check_len("state", self.state_dim, s.len())?;
        check_len("action", self.action_dim, a.len())?;
        check_len("next state", self.state_dim, s_next.len())?;
        check_len("latent noise", self.latent_dim, eps.len())?;
        let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row");
        let tape = self.loss_forward(row(s).view(), row(a).view(), row(s_next).view(), row(eps).view())?;
        let t = tape.terms[0];
        t.check_finite()?;
        Ok(t)
    }

    pub fn loss_forward(
        &self,
        s: ArrayView2<f64>,
        a: ArrayView2<f64>,
        s_next: ArrayView2<f64>,
        eps: ArrayView2<f64>,
    ) -> Result<LossTape> {
        check_len("state batch width", self.state_dim, s.ncols())?;
        check_len("action batch width", self.action_dim, a.ncols())?;
        check_len("next-state batch width", self.state_dim, s_next.ncols())?;
        check_len("latent noise width", self.latent_dim, eps.ncols())?;
        let b = s.nrows();
        check_len("action batch rows", b, a.nrows())?;
        check_len("next-state batch rows", b, s_next.nrows())?;
        check_len("noise batch rows", b, eps.nrows())?;

        let sa_in = concatenate![Axis(1), s, a];
        let sa = self.encoder_sa.forward_batch(sa_in.view())?;
        let q_sa = HeadBatch::split(sa.output());
        let sp = self.encoder_sp.forward_batch(s_next)?;
        let q_sp = HeadBatch::split(sp.output());
        let z = &q_sa.mean + &(&q_sa.std * &eps);
        let dec = self.decoder.forward_batch(z.view())?;
        let d = self.state_dim;

        let mut terms = Vec::with_capacity(b);
        for i in 0..b {
            let mu_dec = dec.output().slice(s![i, ..d]);
            let recon: f64 = mu_dec.iter().zip(s_next.row(i)).map(|(m, x)| (m - x) * (m - x)).sum();
            let ms = q_sa.mean.row(i);
            let ss = q_sa.std.row(i);
            let ls = q_sa.log_std.row(i);
            let prior_kl = kl_to_standard(ms.as_slice().unwrap(), ss.as_slice().unwrap(), ls.as_slice().unwrap());
            let enc_kl = kl_terms(
                q_sp.mean.row(i).as_slice().unwrap(),
                q_sp.std.row(i).as_slice().unwrap(),
                ms.as_slice().unwrap(),
                ss.as_slice().unwrap(),
            );
            terms.push(DaspLossBreakdown { recon, prior_kl, enc_kl, total: recon + prior_kl + enc_kl });
        }
        Ok(LossTape { sa, sp, dec, q_sa, q_sp, eps: eps.to_owned(), s_next: s_next.to_owned(), terms })
    }

    /// Gradients of `sum_i weights[i] * total_i`.
    pub fn loss_backward(&self, tape: &LossTape, weights: &[f64]) -> Result<(Gradients, LossInputGrads)> {
        let b = tape.terms.len();
        check_len("loss weights", b, weights.len())?;
        let d = self.state_dim;
        let k = self.latent_dim;

        let mut g_dec = Array2::<f64>::zeros((b, 2 * d));
        let mut g_snext = Array2::<f64>::zeros((b, d));
        for i in 0..b {
            for j in 0..d {
                let r = tape.dec.output()[[i, j]] - tape.s_next[[i, j]];
                g_dec[[i, j]] = 2.0 * weights[i] * r;
                g_snext[[i, j]] = -2.0 * weights[i] * r;
            }
        }
        let (dec_grads, g_z) = self.decoder.backward_batch(&tape.dec, g_dec.view())?;

        let (qa, qp) = (&tape.q_sa, &tape.q_sp);
        let mut g_mu_a = Array2::<f64>::zeros((b, k));
        let mut g_std_a = Array2::<f64>::zeros((b, k));
        let mut g_mu_p = Array2::<f64>::zeros((b, k));
        let mut g_std_p = Array2::<f64>::zeros((b, k));
        for i in 0..b {
            let w = weights[i];
            for j in 0..k {
                let (ma, sa) = (qa.mean[[i, j]], qa.std[[i, j]]);
                let (mp, sp) = (qp.mean[[i, j]], qp.std[[i, j]]);
                let delta = mp - ma;
                let inv_var = 1.0 / (sa * sa);
                // reparameterized reconstruction path
                let mut gm = g_z[[i, j]];
                let mut gs = g_z[[i, j]] * tape.eps[[i, j]];
                // KL(q_sa || N(0, I))
                gm += w * ma;
                gs += w * (sa - 1.0 / sa);
                // KL(q_sp || q_sa)
                gm -= w * delta * inv_var;
                gs += w * (1.0 / sa - (sp * sp + delta * delta) * inv_var / sa);
                g_mu_a[[i, j]] = gm;
                g_std_a[[i, j]] = gs;
                g_mu_p[[i, j]] = w * delta * inv_var;
                g_std_p[[i, j]] = w * (sp * inv_var - 1.0 / sp);
            }
        }
        let head_sa = qa.head_grad(g_mu_a, &g_std_a);
        let head_sp = qp.head_grad(g_mu_p, &g_std_p);
        let (sa_grads, g_sa_in) = self.encoder_sa.backward_batch(&tape.sa, head_sa.view())?;
        let (sp_grads, g_sp_in) = self.encoder_sp.backward_batch(&tape.sp, head_sp.view())?;
        g_snext += &g_sp_in;

        let grads = Gradients::concat([sa_grads, sp_grads, dec_grads]);
        let inputs = LossInputGrads {
            state: g_sa_in.slice(s![.., ..d]).to_owned(),
            action: g_sa_in.slice(s![.., d..]).to_owned(),
            next_state: g_snext,
        };
        Ok((grads, inputs))
    }

    /// One-step prediction `s' ~ p(s' | z), z ~ q_sa(z | s, a)`.
    ///
    /// With `deterministic` set the latent is the encoder mean and the returned state is the
    /// decoder mean; otherwise both are sampled from `rng`.
    pub fn predict_next(
        &self,
        s: &[f64],
        a: &[f64],
        deterministic: bool,
        rng: &mut SeededRng,
    ) -> Result<(Vec<f64>, DiagGaussian)> {
        check_len("state", self.state_dim, s.len())?;
        check_len("action", self.action_dim, a.len())?;
        let (eps_z, eps_x) = if deterministic {
            (None, None)
        } else {
            let ez = rng.sample_standard_normal(self.latent_dim);
            let ex = rng.sample_standard_normal(self.state_dim);
            (
                Some(Array2::from_shape_vec((1, self.latent_dim), ez).expect("row")),
                Some(Array2::from_shape_vec((1, self.state_dim), ex).expect("row")),
            )
        };
        let sv = ArrayView2::from_shape((1, s.len()), s).expect("row");
        let av = ArrayView2::from_shape((1, a.len()), a).expect("row");
        let tape = self.predict_forward(sv, av, eps_z.as_ref().map(|e| e.view()), eps_x.as_ref().map(|e| e.view()))?;
        Ok((tape.next_state.row(0).to_vec(), tape.p_dec.row(0)))
    }

    pub fn predict_forward(
        &self,
        s: ArrayView2<f64>,
        a: ArrayView2<f64>,
        eps_z: Option<ArrayView2<f64>>,
        eps_x: Option<ArrayView2<f64>>,
    ) -> Result<PredictTape> {
        check_len("state batch width", self.state_dim, s.ncols())?;
        check_len("action batch width", self.action_dim, a.ncols())?;
        check_len("action batch rows", s.nrows(), a.nrows())?;
        let sa_in = concatenate![Axis(1), s, a];
        let sa = self.encoder_sa.forward_batch(sa_in.view())?;
        let q_sa = HeadBatch::split(sa.output());
        let z = match eps_z {
            Some(e) => &q_sa.mean + &(&q_sa.std * &e),
            None => q_sa.mean.clone(),
        };
        let dec = self.decoder.forward_batch(z.view())?;
        let p_dec = HeadBatch::split(dec.output());
        let next_state = match eps_x {
            Some(e) => &p_dec.mean + &(&p_dec.std * &e),
            None => p_dec.mean.clone(),
        };
        Ok(PredictTape {
            sa,
            q_sa,
            eps_z: eps_z.map(|e| e.to_owned()),
            dec,
            p_dec,
            eps_x: eps_x.map(|e| e.to_owned()),
            next_state,
        })
    }

    /// Pulls a gradient on the predicted next state back to parameters and to `(s, a)`.
    /// Returns `(param grads, d/ds, d/da)`.
    pub fn predict_backward(
        &self,
        tape: &PredictTape,
        g_next: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>, Array2<f64>)> {
        check_len("prediction gradient width", self.state_dim, g_next.ncols())?;
        let g_mean = g_next.to_owned();
        let g_std = match &tape.eps_x {
            Some(e) => &g_next * e,
            None => Array2::zeros(g_next.raw_dim()),
        };
        let head = tape.p_dec.head_grad(g_mean, &g_std);
        let (dec_grads, g_z) = self.decoder.backward_batch(&tape.dec, head.view())?;
        let g_std_z = match &tape.eps_z {
            Some(e) => &g_z * e,
            None => Array2::zeros(g_z.raw_dim()),
        };
        let head_sa = tape.q_sa.head_grad(g_z, &g_std_z);
        let (sa_grads, g_in) = self.encoder_sa.backward_batch(&tape.sa, head_sa.view())?;
        let zeros_sp = Gradients::zeros_like(&self.encoder_sp);
        let grads = Gradients::concat([sa_grads, zeros_sp, dec_grads]);
        let d = self.state_dim;
        Ok((grads, g_in.slice(s![.., ..d]).to_owned(), g_in.slice(s![.., d..]).to_owned()))
    }
}

impl Parameters for DaspModel {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::new();
        for (prefix, net) in
            [("encoder_sa", &self.encoder_sa), ("encoder_sp", &self.encoder_sp), ("decoder", &self.decoder)]
        {
            out.extend(net.blocks().into_iter().map(|mut b| {
                b.name = format!("{prefix}.{}", b.name);
                b
            }));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder_sa.blocks_mut();
        out.extend(self.encoder_sp.blocks_mut());
        out.extend(self.decoder.blocks_mut());
        out
    }
}
