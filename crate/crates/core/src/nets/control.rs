use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng as _, RngCore};

use super::FourierEmbedding;
use crate::diffcore::{kernels, ParamId, ParamStore, Tape, Tensor, Var};
use crate::dynamics::Schedule;
use crate::error::{contract_err, dim_err, Result};

/// Architecture of a [`ControlNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    /// State dimension.
    pub dim: usize,
    /// Width of every hidden layer.
    pub hidden: usize,
    /// Number of hidden (GeLU) layers.
    pub depth: usize,
    /// Random Fourier frequencies per conditioning scalar.
    pub fourier_features: usize,
    /// Standard deviation of the Fourier frequencies.
    pub fourier_scale: f64,
    /// Terminal time `T`.
    pub horizon: f64,
    /// When set, the output is `head - g(t) x`: the zero-initialized head
    /// then yields the control that keeps `N(0, I)` stationary.
    pub reference: Option<Schedule>,
}

impl NetConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            hidden: 64,
            depth: 4,
            fourier_features: 32,
            fourier_scale: 16.0,
            horizon: 1.0,
            reference: None,
        }
    }

    /// Default architecture with the prior-score reference term of `sched`.
    pub fn with_reference(dim: usize, sched: Schedule) -> Self {
        Self {
            horizon: sched.horizon(),
            reference: Some(sched),
            ..Self::new(dim)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 || self.depth == 0 || self.fourier_features == 0 {
            return Err(contract_err!("network sizes must be positive: {:?}", self));
        }
        if !(self.horizon > 0.0) || !(self.fourier_scale > 0.0) {
            return Err(contract_err!("horizon and Fourier scale must be positive"));
        }
        if let Some(s) = &self.reference {
            if (s.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
                return Err(contract_err!(
                    "reference schedule horizon differs from the network's"
                ));
            }
        }
        Ok(())
    }

    /// Width of the concatenated `[emb(t), emb(d)]` block.
    pub fn embedding_width(&self) -> usize {
        4 * self.fourier_features
    }
}

/// A time or step-size argument: one value for the whole batch or one per row.
#[derive(Clone, Copy, Debug)]
pub enum TimeArg<'a> {
    Shared(f64),
    PerRow(&'a [f64]),
}

impl TimeArg<'_> {
    pub fn at(&self, row: usize) -> f64 {
        match self {
            TimeArg::Shared(v) => *v,
            TimeArg::PerRow(v) => v[row],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            TimeArg::Shared(v) => core::slice::from_ref(v),
            TimeArg::PerRow(v) => v,
        }
    }
}

/// `u(x, t, d)`: Fourier embeddings of `t` and `d`, an MLP with GeLU hidden
/// layers, a zero-initialized linear head and an optional fixed reference
/// term `-g(t) x`.
///
/// The first layer is split as `x @ W_x + [emb(t), emb(d)] @ W_e + b`, so a
/// batch-shared `(t, d)` costs a single embedding row.
#[derive(Debug)]
pub struct ControlNet {
    config: NetConfig,
    emb_t: FourierEmbedding,
    emb_d: FourierEmbedding,
    params: ParamStore,
    nfe: AtomicU64,
}

impl Clone for ControlNet {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            emb_t: self.emb_t.clone(),
            emb_d: self.emb_d.clone(),
            params: self.params.clone(),
            nfe: AtomicU64::new(self.nfe()),
        }
    }
}

const W_X: ParamId = ParamId(0);
const W_E: ParamId = ParamId(1);
const B_IN: ParamId = ParamId(2);

impl ControlNet {
    /// Fresh network: fan-in uniform hidden layers, zero output head.
    pub fn new(config: NetConfig, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let emb_t = FourierEmbedding::new(config.fourier_features, config.fourier_scale, rng);
        let emb_d = FourierEmbedding::new(config.fourier_features, config.fourier_scale, rng);
        let (h, e, dim) = (config.hidden, config.embedding_width(), config.dim);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let a = 1.0 / crate::math::sqrt(fan_in as f64);
            Tensor::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
        };
        let mut params = ParamStore::new();
        params.register("in.w_x", uniform(dim, h, dim + e));
        params.register("in.w_e", uniform(e, h, dim + e));
        params.register("in.b", uniform(1, h, dim + e));
        for l in 1..config.depth {
            params.register(format!("hidden{l}.w"), uniform(h, h, h));
            params.register(format!("hidden{l}.b"), uniform(1, h, h));
        }
        params.register("out.w", Tensor::zeros(&[h, dim]));
        params.register("out.b", Tensor::zeros(&[1, dim]));
        Ok(Self {
            config,
            emb_t,
            emb_d,
            params,
            nfe: AtomicU64::new(0),
        })
    }

    /// Reassembles a network from stored parts, checking every shape.
    pub fn from_parts(
        config: NetConfig,
        emb_t: FourierEmbedding,
        emb_d: FourierEmbedding,
        params: ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::seeded_rng(0, 0);
        let reference = Self::new(config.clone(), &mut rng)?;
        if emb_t.features() != config.fourier_features
            || emb_d.features() != config.fourier_features
        {
            return Err(dim_err!(
                "embedding frequency count does not match the architecture"
            ));
        }
        if params.len() != reference.params.len() {
            return Err(dim_err!(
                "expected {} parameter tensors, got {}",
                reference.params.len(),
                params.len()
            ));
        }
        for ((_, name, want), (_, _, got)) in reference.params.iter().zip(params.iter()) {
            if want.shape() != got.shape() {
                return Err(dim_err!(
                    "parameter {} has shape {:?}, expected {:?}",
                    name,
                    got.shape(),
                    want.shape()
                ));
            }
        }
        Ok(Self {
            config,
            emb_t,
            emb_d,
            params,
            nfe: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn embeddings(&self) -> (&FourierEmbedding, &FourierEmbedding) {
        (&self.emb_t, &self.emb_d)
    }

    /// Batched evaluations performed so far (one per forward call).
    pub fn nfe(&self) -> u64 {
        self.nfe.load(Ordering::Relaxed)
    }

    pub fn reset_nfe(&self) {
        self.nfe.store(0, Ordering::Relaxed);
    }

    fn check(&self, x: &Tensor, t: TimeArg, d: TimeArg) -> Result<usize> {
        let rows = x.rows();
        if x.cols() != self.config.dim {
            return Err(dim_err!(
                "control expects dim {}, got {}",
                self.config.dim,
                x.cols()
            ));
        }
        let horizon = self.config.horizon;
        for arg in [t, d] {
            if let TimeArg::PerRow(v) = arg {
                if v.len() != rows {
                    return Err(dim_err!("{} per-row times for {} rows", v.len(), rows));
                }
            }
        }
        let tol = 1e-12 * horizon;
        if let Some(bad) = t
            .values()
            .iter()
            .find(|&&v| !(v >= -tol && v <= horizon + tol))
        {
            return Err(contract_err!("time {} outside [0, {}]", bad, horizon));
        }
        if let Some(bad) = d
            .values()
            .iter()
            .find(|&&v| !(v > 0.0 && v <= horizon + tol))
        {
            return Err(contract_err!("step size {} outside (0, {}]", bad, horizon));
        }
        Ok(rows)
    }

    /// Embedding block: one row when both arguments are shared, else one per row.
    fn embedding_block(&self, rows: usize, t: TimeArg, d: TimeArg) -> (Vec<f64>, usize) {
        let e = self.config.embedding_width();
        let half = e / 2;
        let shared = matches!((t, d), (TimeArg::Shared(_), TimeArg::Shared(_)));
        let n = if shared { 1 } else { rows };
        let mut out = vec![0.0; n * e];
        for (i, row) in out.chunks_exact_mut(e).enumerate() {
            self.emb_t.embed_into(t.at(i), &mut row[..half]);
            self.emb_d.embed_into(d.at(i), &mut row[half..]);
        }
        (out, n)
    }

    fn layer_ids(&self) -> impl Iterator<Item = (ParamId, ParamId)> {
        (1..self.config.depth).map(|l| (ParamId(1 + 2 * l), ParamId(2 + 2 * l)))
    }

    fn head_ids(&self) -> (ParamId, ParamId) {
        let n = self.params.len();
        (ParamId(n - 2), ParamId(n - 1))
    }

    /// The fixed term `-g(t) x`, if configured.
    fn reference_term(&self, x: &Tensor, t: TimeArg) -> Option<Vec<f64>> {
        let sched = self.config.reference.as_ref()?;
        let cols = x.cols();
        let mut r = x.data().to_vec();
        for (i, row) in r.chunks_exact_mut(cols).enumerate() {
            let g = sched.g(t.at(i));
            row.iter_mut().for_each(|v| *v = -(g * *v));
        }
        Some(r)
    }

    /// Gradient-free evaluation of `u(x, t, d)`.
    pub fn forward(&self, x: &Tensor, t: TimeArg, d: TimeArg) -> Result<Tensor> {
        let m = self.check(x, t, d)?;
        self.nfe.fetch_add(1, Ordering::Relaxed);
        let (dim, h, e) = (
            self.config.dim,
            self.config.hidden,
            self.config.embedding_width(),
        );
        let p = &self.params;
        let (emb, erows) = self.embedding_block(m, t, d);
        let bias = kernels::linear(&emb, p.get(W_E).data(), p.get(B_IN).data(), erows, e, h);
        let mut act = kernels::linear(x.data(), p.get(W_X).data(), &bias, m, dim, h);
        kernels::gelu_inplace(&mut act);
        for (w, b) in self.layer_ids() {
            act = kernels::linear(&act, p.get(w).data(), p.get(b).data(), m, h, h);
            kernels::gelu_inplace(&mut act);
        }
        let (w, b) = self.head_ids();
        let mut out = kernels::linear(&act, p.get(w).data(), p.get(b).data(), m, h, dim);
        if let Some(r) = self.reference_term(x, t) {
            kernels::add_inplace(&mut out, &r);
        }
        Tensor::matrix(m, dim, out)
    }

    /// Evaluation recorded on `tape`; `x` enters as a constant.
    ///
    /// Produces values bitwise identical to [`ControlNet::forward`].
    pub fn forward_tape(&self, tape: &mut Tape, x: &Tensor, t: TimeArg, d: TimeArg) -> Result<Var> {
        let m = self.check(x, t, d)?;
        self.nfe.fetch_add(1, Ordering::Relaxed);
        let e = self.config.embedding_width();
        let p = &self.params;
        let (emb, erows) = self.embedding_block(m, t, d);
        let emb = tape.constant(Tensor::matrix(erows, e, emb)?);
        let vx = tape.constant(x.clone());
        let w_e = tape.param(W_E, p);
        let b_in = tape.param(B_IN, p);
        let w_x = tape.param(W_X, p);
        let bias = tape.linear(emb, w_e, b_in)?;
        let pre = tape.linear(vx, w_x, bias)?;
        let mut act = tape.gelu(pre);
        for (w, b) in self.layer_ids() {
            let (vw, vb) = (tape.param(w, p), tape.param(b, p));
            let pre = tape.linear(act, vw, vb)?;
            act = tape.gelu(pre);
        }
        let (w, b) = self.head_ids();
        let (vw, vb) = (tape.param(w, p), tape.param(b, p));
        let out = tape.linear(act, vw, vb)?;
        match self.reference_term(x, t) {
            Some(r) => {
                let r = tape.constant(Tensor::matrix(m, self.config.dim, r)?);
                tape.add(out, r)
            }
            None => Ok(out),
        }
    }
}
