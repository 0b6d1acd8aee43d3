//! Reverse-mode differentiation engine for the two fixed network shapes
//! used by the actor and critic.
//!
//! A forward pass records, per layer, exactly what the backward pass needs
//! (inputs of linear layers, dropout scale vectors, normalized activations)
//! into a [`Tape`]. Walking the tape in reverse accumulates parameter
//! gradients and yields the gradient with respect to the network input.
//!
//! Hidden blocks are ordered Linear → Dropout → LayerNorm → ReLU; the output
//! layer is a plain linear map. Dropout is inverted (survivors are rescaled
//! at train time) so evaluation mode is a plain forward pass.

mod adam;
mod arch;
mod layers;
mod param;

pub use adam::{adam_step_params, AdamState};
pub use arch::{actor_spec, critic_spec};
pub use layers::{
    layer_norm_backward, layer_norm_backward_input, layer_norm_forward, linear_backward_input,
    linear_backward_params, linear_forward, LAYER_NORM_EPS,
};
pub use param::ParamTensor;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{hash_bits, real, Real};

/// Whether a forward pass runs with stochastic regularization (dropout) or
/// as a deterministic map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Shape and regularization of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub dropout_rate: f64,
    pub use_layer_norm: bool,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self { input_dim, hidden_dims, output_dim, dropout_rate: 0.0, use_layer_norm: true }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::dim("input_dim and output_dim must be positive"));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::dim("hidden dims must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::domain(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Widths of the linear layers: (in, out) per layer including the head.
    fn linear_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// Widest activation produced anywhere in the network.
    fn max_width(&self) -> usize {
        self.hidden_dims
            .iter()
            .copied()
            .chain([self.input_dim, self.output_dim])
            .max()
            .unwrap_or(1)
    }
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            input_dim: 1,
            hidden_dims: vec![256, 256],
            output_dim: 1,
            dropout_rate: 0.0,
            use_layer_norm: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Linear<R> {
    w: ParamTensor<R>, // shape (out, in), row-major
    b: ParamTensor<R>, // shape (out, 1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerNorm<R> {
    gain: ParamTensor<R>,
    bias: ParamTensor<R>,
}

/// Span into the tape arena.
#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    len: usize,
}

#[derive(Debug, Clone)]
enum Record<R> {
    /// Saved input of linear layer `idx`.
    Linear { idx: usize, input: Span },
    /// Saved per-unit scale (0 or 1/(1-p)) of a dropout mask.
    Dropout { scale: Span },
    /// Saved normalized activation and inverse std of layer-norm `idx`.
    LayerNorm { idx: usize, xhat: Span, inv_std: R },
    /// Saved post-activation output of a ReLU.
    Relu { out: Span },
}

/// Recording of one forward pass, sufficient to run the backward pass.
///
/// A tape is tied to the network instance and parameter version that
/// produced it; using it after the parameters changed is a usage error.
#[derive(Debug, Clone)]
pub struct Tape<R> {
    net_id: u64,
    net_version: u64,
    mode: Mode,
    arena: Vec<R>,
    records: Vec<Record<R>>,
    input: Vec<R>,
    output_len: usize,
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self {
            net_id: 0,
            net_version: 0,
            mode: Mode::Eval,
            arena: Vec::new(),
            records: Vec::new(),
            input: Vec::new(),
            output_len: 0,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn reset(&mut self, net_id: u64, net_version: u64, mode: Mode, input: &[R]) {
        self.net_id = net_id;
        self.net_version = net_version;
        self.mode = mode;
        self.arena.clear();
        self.records.clear();
        self.input.clear();
        self.input.extend_from_slice(input);
        self.output_len = 0;
    }

    fn push(&mut self, values: &[R]) -> Span {
        let start = self.arena.len();
        self.arena.extend_from_slice(values);
        Span { start, len: values.len() }
    }

    fn slice(&self, span: Span) -> &[R] {
        &self.arena[span.start..span.start + span.len]
    }
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

/// Multilayer perceptron with hidden blocks Linear → Dropout → LayerNorm →
/// ReLU and a linear head.
#[derive(Debug, Clone)]
pub struct Mlp<R> {
    spec: MlpSpec,
    linears: Vec<Linear<R>>,
    norms: Vec<LayerNorm<R>>,
    id: u64,
    version: u64,
}

/// Serializable parameter snapshot of an [`Mlp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpSnapshot<R> {
    pub spec: MlpSpec,
    pub params: Vec<Vec<R>>,
}

impl<R: Real> Mlp<R> {
    /// Builds a network with uniform fan-in initialization,
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    pub fn new(spec: MlpSpec, rng: &mut dyn RngCore) -> Result<Self> {
        spec.validate()?;
        let mut linears = Vec::new();
        for (in_dim, out_dim) in spec.linear_dims() {
            let bound = real::<R>(1.0 / (in_dim as f64).sqrt());
            let w: Vec<R> =
                (0..in_dim * out_dim).map(|_| R::uniform_in(rng, -bound, bound)).collect();
            let b: Vec<R> = (0..out_dim).map(|_| R::uniform_in(rng, -bound, bound)).collect();
            linears.push(Linear {
                w: ParamTensor::new(w, out_dim, in_dim)?,
                b: ParamTensor::new(b, out_dim, 1)?,
            });
        }
        let mut norms = Vec::new();
        if spec.use_layer_norm {
            for &h in &spec.hidden_dims {
                norms.push(LayerNorm {
                    gain: ParamTensor::new(vec![R::one(); h], h, 1)?,
                    bias: ParamTensor::zeros(h, 1),
                });
            }
        }
        Ok(Self { spec, linears, norms, id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed), version: 0 })
    }

    /// Builds a network with all weights and biases at zero.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let linears = spec
            .linear_dims()
            .iter()
            .map(|&(i, o)| Linear { w: ParamTensor::zeros(o, i), b: ParamTensor::zeros(o, 1) })
            .collect();
        let mut norms = Vec::new();
        if spec.use_layer_norm {
            for &h in &spec.hidden_dims {
                norms.push(LayerNorm {
                    gain: ParamTensor::new(vec![R::one(); h], h, 1)?,
                    bias: ParamTensor::zeros(h, 1),
                });
            }
        }
        Ok(Self { spec, linears, norms, id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed), version: 0 })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Monotone counter bumped whenever parameters change; tapes recorded
    /// against an older version are rejected by `backward`.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// All parameter tensors in a fixed order (linear w/b per layer, then
    /// layer-norm gain/bias per block).
    pub fn params(&self) -> Vec<&ParamTensor<R>> {
        let mut out = Vec::new();
        for lin in &self.linears {
            out.push(&lin.w);
            out.push(&lin.b);
        }
        for ln in &self.norms {
            out.push(&ln.gain);
            out.push(&ln.bias);
        }
        out
    }

    /// Mutable access to every parameter tensor. Bumps the version, so any
    /// outstanding tape becomes stale.
    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<R>> {
        self.version += 1;
        let mut out = Vec::new();
        for lin in &mut self.linears {
            out.push(&mut lin.w);
            out.push(&mut lin.b);
        }
        for ln in &mut self.norms {
            out.push(&mut ln.gain);
            out.push(&mut ln.bias);
        }
        out
    }

    pub fn zero_grads(&mut self) {
        for lin in &mut self.linears {
            lin.w.zero_grad();
            lin.b.zero_grad();
        }
        for ln in &mut self.norms {
            ln.gain.zero_grad();
            ln.bias.zero_grad();
        }
    }

    /// FNV hash of all parameter value bits.
    pub fn hash_params(&self) -> u64 {
        hash_bits(self.params().iter().flat_map(|p| p.values().iter().copied()))
    }

    /// L2 norm of the accumulated gradient, for divergence diagnostics.
    pub fn grad_l2(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|p| p.grad().iter())
            .map(|&g| {
                let g = crate::scalar::as_f64(g);
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Forward pass returning the output and a fresh tape.
    pub fn forward(&self, input: &[R], mode: Mode, rng: &mut dyn RngCore) -> Result<(Vec<R>, Tape<R>)> {
        let mut tape = Tape::new();
        let out = self.forward_tape(input, mode, rng, &mut tape)?;
        Ok((out, tape))
    }

    /// Forward pass recording into a caller-owned tape (reusable buffer).
    pub fn forward_tape(
        &self,
        input: &[R],
        mode: Mode,
        rng: &mut dyn RngCore,
        tape: &mut Tape<R>,
    ) -> Result<Vec<R>> {
        self.run(input, mode, rng, Some(tape))
    }

    /// Forward pass without recording, for inference.
    pub fn infer(&self, input: &[R], mode: Mode, rng: &mut dyn RngCore) -> Result<Vec<R>> {
        self.run(input, mode, rng, None)
    }

    fn run(
        &self,
        input: &[R],
        mode: Mode,
        rng: &mut dyn RngCore,
        mut tape: Option<&mut Tape<R>>,
    ) -> Result<Vec<R>> {
        if input.len() != self.spec.input_dim {
            return Err(Error::dim(format!(
                "input length {} does not match input_dim {}",
                input.len(),
                self.spec.input_dim
            )));
        }
        if let Some(t) = tape.as_deref_mut() {
            t.reset(self.id, self.version, mode, input);
        }
        let p = self.spec.dropout_rate;
        let keep = 1.0 - p;
        let n_hidden = self.spec.hidden_dims.len();
        let mut x = input.to_vec();
        let mut y: Vec<R> = Vec::with_capacity(self.spec.max_width());
        for (i, lin) in self.linears.iter().enumerate() {
            if let Some(t) = tape.as_deref_mut() {
                let span = t.push(&x);
                t.records.push(Record::Linear { idx: i, input: span });
            }
            linear_forward(lin.w.values(), lin.b.values(), &x, &mut y);
            std::mem::swap(&mut x, &mut y);
            if i == n_hidden {
                break; // plain linear head
            }
            // hidden block: dropout, layer norm, relu
            if mode == Mode::Train && p > 0.0 {
                let scale = real::<R>(1.0 / keep);
                let p32 = p as f32;
                let mut scales: Vec<R> = Vec::with_capacity(x.len());
                for v in x.iter_mut() {
                    let s = if rng.random::<f32>() < p32 { R::zero() } else { scale };
                    scales.push(s);
                    *v = *v * s;
                }
                if let Some(t) = tape.as_deref_mut() {
                    let span = t.push(&scales);
                    t.records.push(Record::Dropout { scale: span });
                }
            }
            if self.spec.use_layer_norm {
                let ln = &self.norms[i];
                let mut xhat = Vec::with_capacity(x.len());
                let inv_std =
                    layer_norm_forward(&x, ln.gain.values(), ln.bias.values(), &mut xhat, &mut y);
                std::mem::swap(&mut x, &mut y);
                if let Some(t) = tape.as_deref_mut() {
                    let span = t.push(&xhat);
                    t.records.push(Record::LayerNorm { idx: i, xhat: span, inv_std });
                }
            }
            for v in x.iter_mut() {
                if *v < R::zero() {
                    *v = R::zero();
                }
            }
            if let Some(t) = tape.as_deref_mut() {
                let span = t.push(&x);
                t.records.push(Record::Relu { out: span });
            }
        }
        if let Some(t) = tape.as_deref_mut() {
            t.output_len = x.len();
        }
        Ok(x)
    }

    fn check_tape(&self, tape: &Tape<R>, out_grad: &[R]) -> Result<()> {
        if tape.net_id != self.id {
            return Err(Error::usage("tape was recorded by a different network"));
        }
        if tape.net_version != self.version {
            return Err(Error::usage(
                "stale tape: parameters changed since the forward pass",
            ));
        }
        if out_grad.len() != tape.output_len {
            return Err(Error::dim(format!(
                "output gradient length {} does not match output length {}",
                out_grad.len(),
                tape.output_len
            )));
        }
        Ok(())
    }

    /// Reverse pass: accumulates ∂loss/∂p into every parameter gradient and
    /// returns ∂loss/∂input. Repeated calls accumulate additively.
    pub fn backward(&mut self, tape: &Tape<R>, out_grad: &[R]) -> Result<Vec<R>> {
        self.check_tape(tape, out_grad)?;
        let mut dy = out_grad.to_vec();
        let mut dx: Vec<R> = Vec::with_capacity(self.spec.max_width());
        for rec in tape.records.iter().rev() {
            match rec {
                Record::Relu { out } => {
                    for (d, &o) in dy.iter_mut().zip(tape.slice(*out)) {
                        if o <= R::zero() {
                            *d = R::zero();
                        }
                    }
                }
                Record::LayerNorm { idx, xhat, inv_std } => {
                    let ln = &mut self.norms[*idx];
                    let xh = tape.slice(*xhat);
                    // split gain into (values, grad) so both are usable at once
                    let (gain_vals, gain_grad) = ln.gain.values_and_grad_mut();
                    let n = real::<R>(xh.len() as f64);
                    let mut sum_dxhat = R::zero();
                    let mut sum_dxhat_xhat = R::zero();
                    dx.clear();
                    for i in 0..xh.len() {
                        gain_grad[i] += dy[i] * xh[i];
                        let dxhat = dy[i] * gain_vals[i];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xh[i];
                        dx.push(dxhat);
                    }
                    let bias_grad = ln.bias.grad_mut();
                    for i in 0..xh.len() {
                        bias_grad[i] += dy[i];
                    }
                    let mean_dxhat = sum_dxhat / n;
                    let mean_dxhat_xhat = sum_dxhat_xhat / n;
                    for (d, &h) in dx.iter_mut().zip(xh) {
                        *d = *inv_std * (*d - mean_dxhat - h * mean_dxhat_xhat);
                    }
                    std::mem::swap(&mut dy, &mut dx);
                }
                Record::Dropout { scale } => {
                    for (d, &s) in dy.iter_mut().zip(tape.slice(*scale)) {
                        *d = *d * s;
                    }
                }
                Record::Linear { idx, input } => {
                    let lin = &mut self.linears[*idx];
                    let x = tape.slice(*input);
                    linear_backward_params(x, &dy, lin.w.grad_mut(), lin.b.grad_mut());
                    linear_backward_input(lin.w.values(), &dy, x.len(), &mut dx);
                    std::mem::swap(&mut dy, &mut dx);
                }
            }
        }
        Ok(dy)
    }

    /// Reverse pass that computes only the input gradient, leaving every
    /// parameter gradient untouched. Used where a network acts as a fixed
    /// differentiable function inside another network's loss.
    pub fn backward_input_only(&self, tape: &Tape<R>, out_grad: &[R]) -> Result<Vec<R>> {
        self.check_tape(tape, out_grad)?;
        let mut dy = out_grad.to_vec();
        let mut dx: Vec<R> = Vec::with_capacity(self.spec.max_width());
        for rec in tape.records.iter().rev() {
            match rec {
                Record::Relu { out } => {
                    for (d, &o) in dy.iter_mut().zip(tape.slice(*out)) {
                        if o <= R::zero() {
                            *d = R::zero();
                        }
                    }
                }
                Record::LayerNorm { idx, xhat, inv_std } => {
                    let ln = &self.norms[*idx];
                    layer_norm_backward_input(
                        tape.slice(*xhat),
                        *inv_std,
                        ln.gain.values(),
                        &dy,
                        &mut dx,
                    );
                    std::mem::swap(&mut dy, &mut dx);
                }
                Record::Dropout { scale } => {
                    for (d, &s) in dy.iter_mut().zip(tape.slice(*scale)) {
                        *d = *d * s;
                    }
                }
                Record::Linear { idx, input } => {
                    let lin = &self.linears[*idx];
                    linear_backward_input(lin.w.values(), &dy, tape.slice(*input).len(), &mut dx);
                    std::mem::swap(&mut dy, &mut dx);
                }
            }
        }
        Ok(dy)
    }

    /// Applies one Adam step to all parameters and zeroes the gradients.
    pub fn adam_step(&mut self, state: &mut AdamState<R>) -> Result<()> {
        let mut params = self.params_mut();
        adam_step_params(&mut params, state)
    }

    pub fn snapshot(&self) -> MlpSnapshot<R> {
        MlpSnapshot {
            spec: self.spec.clone(),
            params: self.params().iter().map(|p| p.values().to_vec()).collect(),
        }
    }

    /// Rebuilds a network from a snapshot; gradients start at zero and the
    /// instance gets a fresh identity.
    pub fn restore(snap: &MlpSnapshot<R>) -> Result<Self> {
        let mut net = Self::zeros(snap.spec.clone())?;
        {
            let mut params = net.params_mut();
            if params.len() != snap.params.len() {
                return Err(Error::dim("snapshot parameter count mismatch"));
            }
            for (p, stored) in params.iter_mut().zip(&snap.params) {
                if p.len() != stored.len() {
                    return Err(Error::dim("snapshot parameter shape mismatch"));
                }
                p.values_mut().copy_from_slice(stored);
            }
        }
        Ok(net)
    }
}

/// target ← ρ·target + (1−ρ)·online, elementwise, for arbitrary tensor sets.
pub fn polyak_params<R: Real>(
    target: &mut [&mut ParamTensor<R>],
    online: &[&ParamTensor<R>],
    rho: R,
) -> Result<()> {
    if !(R::zero()..=R::one()).contains(&rho) {
        return Err(Error::domain(format!("polyak rho must lie in [0, 1], got {rho}")));
    }
    if target.len() != online.len() {
        return Err(Error::dim("polyak: parameter set sizes differ"));
    }
    let one_minus = R::one() - rho;
    for (t, o) in target.iter_mut().zip(online) {
        if t.len() != o.len() {
            return Err(Error::dim("polyak: tensor shapes differ"));
        }
        for (tv, ov) in t.values_mut().iter_mut().zip(o.values()) {
            *tv = rho * *tv + one_minus * *ov;
        }
    }
    Ok(())
}

/// Polyak average an online network into its lagged copy.
pub fn polyak_update<R: Real>(target: &mut Mlp<R>, online: &Mlp<R>, rho: R) -> Result<()> {
    if target.spec != online.spec {
        return Err(Error::dim("polyak: network specs differ"));
    }
    let online_params = online.params();
    let mut target_params = target.params_mut();
    polyak_params(&mut target_params, &online_params, rho)
}

/// Draws a uniform action in [-1, 1]^dim (environment warmup).
pub fn uniform_action<R: Real>(dim: usize, rng: &mut dyn RngCore) -> Vec<R> {
    (0..dim).map(|_| R::uniform_in(rng, -R::one(), R::one())).collect()
}
