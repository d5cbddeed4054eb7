//! Dense kernels and pointwise activations shared by the forward and
//! backward passes. Matrices are row-major; activations are `[T, dim]`.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[t, o] = Σ_i x[t, i] · w[o, i]` for `w` of shape `[out_dim, in_dim]`.
pub(crate) fn linear(x: &[f64], w: &[f64], in_dim: usize, out_dim: usize) -> Vec<f64> {
    let rows = x.len() / in_dim;
    let mut out = vec![0.0; rows * out_dim];
    for (xr, or) in x.chunks_exact(in_dim).zip(out.chunks_exact_mut(out_dim)) {
        for (o, wr) in or.iter_mut().zip(w.chunks_exact(in_dim)) {
            *o = dot(xr, wr);
        }
    }
    out
}

/// Backward of [`linear`]: accumulates `dw += dyᵀ x` and returns `dy w`.
pub(crate) fn linear_backward(
    dy: &[f64],
    x: &[f64],
    w: &[f64],
    dw: &mut [f64],
    in_dim: usize,
    out_dim: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; x.len()];
    for ((dyr, xr), dxr) in dy
        .chunks_exact(out_dim)
        .zip(x.chunks_exact(in_dim))
        .zip(dx.chunks_exact_mut(in_dim))
    {
        for (o, &g) in dyr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = o * in_dim..(o + 1) * in_dim;
            axpy(g, &w[row.clone()], dxr);
            axpy(g, xr, &mut dw[row]);
        }
    }
    dx
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `ln(1 + eˣ)` without overflow; derivative is [`sigmoid`].
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub(crate) fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

pub(crate) const RMS_EPS: f64 = 1e-5;

/// Row-wise RMS normalization with a learned gain. Returns the
/// normalized rows and each row's inverse RMS.
pub(crate) fn rms_norm(x: &[f64], gain: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = gain.len();
    let mut out = vec![0.0; x.len()];
    let mut inv = Vec::with_capacity(x.len() / dim);
    for (xr, or) in x.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        let r = 1.0 / (dot(xr, xr) / dim as f64 + RMS_EPS).sqrt();
        for ((o, &xi), &g) in or.iter_mut().zip(xr).zip(gain) {
            *o = xi * r * g;
        }
        inv.push(r);
    }
    (out, inv)
}

pub(crate) fn rms_norm_backward(dy: &[f64], x: &[f64], inv: &[f64], gain: &[f64], dgain: &mut [f64]) -> Vec<f64> {
    let dim = gain.len();
    let mut dx = vec![0.0; x.len()];
    for (((dyr, xr), dxr), &r) in dy
        .chunks_exact(dim)
        .zip(x.chunks_exact(dim))
        .zip(dx.chunks_exact_mut(dim))
        .zip(inv)
    {
        let mut proj = 0.0;
        for i in 0..dim {
            dgain[i] += dyr[i] * xr[i] * r;
            proj += dyr[i] * gain[i] * xr[i];
        }
        let k = r * r * r * proj / dim as f64;
        for i in 0..dim {
            dxr[i] = r * gain[i] * dyr[i] - k * xr[i];
        }
    }
    dx
}

/// `log Σ exp(row)` with max subtraction.
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_round_trip() {
        for y in [1e-3, 0.01, 0.1, 1.0, 5.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() < 1e-12);
        }
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
    }

    #[test]
    fn activation_derivatives_match_differences() {
        let h = 1e-6;
        for x in [-6.0, -1.3, 0.0, 0.4, 3.2] {
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_grad(x)).abs() < 1e-8);
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - sigmoid(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_matches_naive() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let w = [1.0, 0.0, -1.0, 0.5, 0.5, 0.5];
        assert_eq!(linear(&x, &w, 3, 2), vec![-2.0, 3.0, -2.0, 7.5]);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
