//! Elementary layer math shared by the network forward/backward passes.

use crate::scalar::{real, Real};

/// Epsilon inside the layer-norm variance square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

const LANES: usize = 16;

/// Dot product over 16 independent accumulator lanes with a fixed pairwise
/// reduction order: deterministic, and wide enough for the vector units.
#[inline]
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [R::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let ai = &a[c * LANES..(c + 1) * LANES];
        let bi = &b[c * LANES..(c + 1) * LANES];
        for k in 0..LANES {
            acc[k] = acc[k] + ai[k] * bi[k];
        }
    }
    let mut tail = R::zero();
    for i in chunks * LANES..a.len() {
        tail = tail + a[i] * b[i];
    }
    reduce_lanes(&acc) + tail
}

/// Lane-parallel sum with the same fixed reduction order as [`dot`].
#[inline]
pub fn vsum<R: Real>(a: &[R]) -> R {
    let mut acc = [R::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let ai = &a[c * LANES..(c + 1) * LANES];
        for k in 0..LANES {
            acc[k] = acc[k] + ai[k];
        }
    }
    let mut tail = R::zero();
    for v in &a[chunks * LANES..] {
        tail = tail + *v;
    }
    reduce_lanes(&acc) + tail
}

/// Lane-parallel sum of squared deviations from `m`.
#[inline]
fn sum_sq_dev<R: Real>(a: &[R], m: R) -> R {
    let mut acc = [R::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let ai = &a[c * LANES..(c + 1) * LANES];
        for k in 0..LANES {
            let d = ai[k] - m;
            acc[k] = acc[k] + d * d;
        }
    }
    let mut tail = R::zero();
    for v in &a[chunks * LANES..] {
        let d = *v - m;
        tail = tail + d * d;
    }
    reduce_lanes(&acc) + tail
}

#[inline]
fn reduce_lanes<R: Real>(acc: &[R; LANES]) -> R {
    let mut width = LANES;
    let mut buf = *acc;
    while width > 1 {
        width /= 2;
        for k in 0..width {
            buf[k] = buf[k] + buf[k + width];
        }
    }
    buf[0]
}

/// y = W x + b, with W row-major of shape (out, in).
pub fn linear_forward<R: Real>(w: &[R], b: &[R], x: &[R], y: &mut Vec<R>) {
    let in_dim = x.len();
    let out_dim = b.len();
    y.clear();
    for o in 0..out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        y.push(dot(row, x) + b[o]);
    }
}

/// Accumulates dW += dy ⊗ x and db += dy.
pub fn linear_backward_params<R: Real>(x: &[R], dy: &[R], dw: &mut [R], db: &mut [R]) {
    let in_dim = x.len();
    for (o, dyo) in dy.iter().enumerate() {
        let row = &mut dw[o * in_dim..(o + 1) * in_dim];
        for (g, xi) in row.iter_mut().zip(x) {
            *g += *dyo * *xi;
        }
        db[o] += *dyo;
    }
}

/// dx = Wᵀ dy.
pub fn linear_backward_input<R: Real>(w: &[R], dy: &[R], in_dim: usize, dx: &mut Vec<R>) {
    dx.clear();
    dx.resize(in_dim, R::zero());
    for (o, dyo) in dy.iter().enumerate() {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        for (d, wi) in dx.iter_mut().zip(row) {
            *d += *wi * *dyo;
        }
    }
}

/// Normalizes x to zero mean and unit variance (biased), then applies the
/// affine gain/bias. Writes the pre-affine normalized vector into `xhat`
/// and returns 1/sqrt(var + eps).
pub fn layer_norm_forward<R: Real>(
    x: &[R],
    gain: &[R],
    bias: &[R],
    xhat: &mut Vec<R>,
    y: &mut Vec<R>,
) -> R {
    let n = real::<R>(x.len() as f64);
    let mean = vsum(x) / n;
    let var = sum_sq_dev(x, mean) / n;
    let inv_std = (var + real::<R>(LAYER_NORM_EPS)).sqrt().recip();
    xhat.clear();
    y.clear();
    for i in 0..x.len() {
        let h = (x[i] - mean) * inv_std;
        xhat.push(h);
        y.push(gain[i] * h + bias[i]);
    }
    inv_std
}

/// Backward pass of layer norm. Accumulates parameter gradients and writes
/// the input gradient into `dx`.
pub fn layer_norm_backward<R: Real>(
    xhat: &[R],
    inv_std: R,
    gain: &[R],
    dy: &[R],
    dgain: &mut [R],
    dbias: &mut [R],
    dx: &mut Vec<R>,
) {
    for i in 0..xhat.len() {
        dgain[i] += dy[i] * xhat[i];
        dbias[i] += dy[i];
    }
    layer_norm_backward_input(xhat, inv_std, gain, dy, dx);
}

/// Input-gradient-only variant of [`layer_norm_backward`].
pub fn layer_norm_backward_input<R: Real>(
    xhat: &[R],
    inv_std: R,
    gain: &[R],
    dy: &[R],
    dx: &mut Vec<R>,
) {
    let n = real::<R>(xhat.len() as f64);
    dx.clear();
    dx.extend(dy.iter().zip(gain).map(|(&d, &g)| d * g));
    let mean_dxhat = vsum(dx) / n;
    let mean_dxhat_xhat = dot(dx, xhat) / n;
    for (d, &h) in dx.iter_mut().zip(xhat) {
        *d = inv_std * (*d - mean_dxhat - h * mean_dxhat_xhat);
    }
}
