//! Reverse-mode gradients of the mean next-token cross-entropy.
//!
//! The computation graph is fixed, so each layer gets a hand-written
//! adjoint that consumes the activations recorded by the forward pass.

use crate::model::block::{BlockCache, ForwardTrace};
use crate::model::ops::{axpy, linear_backward, log_sum_exp, rms_norm_backward, sigmoid, silu, silu_grad};
use crate::model::{BlockTensors, Logits, ModelConfig, ModelError, ModelParameters};
use crate::tokenizer::TokenId;

/// Mean over positions of `-log softmax(logits[t])[targets[t]]`, in nats.
pub fn cross_entropy(logits: &Logits, targets: &[TokenId]) -> f64 {
    assert_eq!(logits.positions(), targets.len(), "one target per position");
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(t, &y)| {
            let row = logits.row(t);
            log_sum_exp(row) - row[y as usize]
        })
        .sum();
    total / targets.len() as f64
}

/// Loss and `∂loss/∂logits` for row-major logits `[T, V]`.
fn cross_entropy_backward(logits: &[f64], vocab: usize, targets: &[TokenId]) -> (f64, Vec<f64>) {
    let t_len = targets.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for ((row, grow), &y) in logits.chunks_exact(vocab).zip(grad.chunks_exact_mut(vocab)).zip(targets) {
        let lse = log_sum_exp(row);
        loss += lse - row[y as usize];
        for (g, &l) in grow.iter_mut().zip(row) {
            *g = (l - lse).exp() / t_len;
        }
        grow[y as usize] -= 1.0 / t_len;
    }
    (loss / t_len, grad)
}

/// Gradients of the mean cross-entropy of predicting `sample[t + 1]` from
/// `sample[..=t]`. Returns the loss and a gradient buffer with the same
/// layout as the parameters.
pub fn loss_and_gradients(params: &ModelParameters, sample: &[TokenId]) -> Result<(f64, ModelParameters), ModelError> {
    if sample.len() < 2 {
        return Err(ModelError::EmptySequence);
    }
    let (inputs, targets) = (&sample[..sample.len() - 1], &sample[1..]);
    let cfg = params.config();
    let trace = params.forward_trace(inputs)?;
    let (loss, dlogits) = cross_entropy_backward(&trace.logits, cfg.vocab_size, targets);
    let grads = backward(params, &trace, &dlogits);
    Ok((loss, grads))
}

pub(crate) fn backward(params: &ModelParameters, trace: &ForwardTrace, dlogits: &[f64]) -> ModelParameters {
    let cfg = params.config();
    let d = cfg.d_model;
    let w = params.tensors();
    let mut grads = params.zeros_like();
    let mut g = grads.tensors_mut();

    // Tied head: logits = final_normed · embeddingᵀ.
    let dnormed = linear_backward(dlogits, &trace.final_normed, w.embedding, g.embedding, d, cfg.vocab_size);
    let mut dx = rms_norm_backward(&dnormed, &trace.final_in, &trace.final_inv_rms, w.final_norm, g.final_norm);

    for ((wb, gb), cache) in w.blocks.iter().zip(g.blocks.iter_mut()).zip(&trace.blocks).rev() {
        dx = block_backward(wb, gb, cfg, cache, dx);
    }

    for (&tok, row) in trace.tokens.iter().zip(dx.chunks_exact(d)) {
        axpy(1.0, row, &mut g.embedding[tok * d..(tok + 1) * d]);
    }
    grads
}

fn block_backward(
    w: &BlockTensors<&[f64]>,
    g: &mut BlockTensors<&mut [f64]>,
    cfg: &ModelConfig,
    cache: &BlockCache,
    dout: Vec<f64>,
) -> Vec<f64> {
    let (d, e, n, r, k) = (cfg.d_model, cfg.d_inner, cfg.d_state, cfg.dt_rank(), cfg.conv_width);
    let t_len = cache.x.len() / d;

    // out = x + out_proj(y ⊙ silu(z))
    let gated: Vec<f64> = cache.y.iter().zip(&cache.z).map(|(&y, &z)| y * silu(z)).collect();
    let dgated = linear_backward(&dout, &gated, w.out_proj, g.out_proj, e, d);
    let mut dy = vec![0.0; dgated.len()];
    let mut dz = vec![0.0; dgated.len()];
    for i in 0..dgated.len() {
        let z = cache.z[i];
        dy[i] = dgated[i] * silu(z);
        dz[i] = dgated[i] * cache.y[i] * silu_grad(z);
    }

    // Selective scan, reverse time.
    let mut du = vec![0.0; t_len * e];
    let mut ddelta = vec![0.0; t_len * e];
    let mut db = vec![0.0; t_len * n];
    let mut dc = vec![0.0; t_len * n];
    let mut da = vec![0.0; e * n];
    let mut dh = vec![0.0; e * n];
    let zeros = vec![0.0; e * n];
    for t in (0..t_len).rev() {
        let h_t = &cache.h[t * e * n..(t + 1) * e * n];
        let h_prev = if t > 0 { &cache.h[(t - 1) * e * n..t * e * n] } else { &zeros[..] };
        let b_t = &cache.b[t * n..(t + 1) * n];
        let c_t = &cache.c[t * n..(t + 1) * n];
        for ch in 0..e {
            let i = t * e + ch;
            let gy = dy[i];
            let dt = cache.delta[i];
            let u = cache.u[i];
            g.d_skip[ch] += gy * u;
            let mut du_acc = w.d_skip[ch] * gy;
            let mut ddt = 0.0;
            for s in 0..n {
                let j = ch * n + s;
                let a = cache.a[j];
                dc[t * n + s] += gy * h_t[j];
                let gh = dh[j] + gy * c_t[s];
                let a_bar = (dt * a).exp();
                ddt += gh * (a * a_bar * h_prev[j] + b_t[s] * u);
                da[j] += gh * dt * a_bar * h_prev[j];
                db[t * n + s] += gh * dt * u;
                du_acc += gh * dt * b_t[s];
                dh[j] = gh * a_bar;
            }
            du[i] += du_acc;
            ddelta[i] = ddt;
        }
    }
    // A = -exp(a_log)  ⇒  ∂A/∂a_log = A
    for ((ga, &dav), &a) in g.a_log.iter_mut().zip(&da).zip(&cache.a) {
        *ga += dav * a;
    }

    let du_c = linear_backward(&dc, &cache.u, w.c_proj, g.c_proj, e, n);
    let du_b = linear_backward(&db, &cache.u, w.b_proj, g.b_proj, e, n);

    // Δ = softplus(dt_up(dt_down(u)) + dt_bias)
    let mut ddt_pre = ddelta;
    for (v, &pre) in ddt_pre.iter_mut().zip(&cache.dt_pre) {
        *v *= sigmoid(pre);
    }
    for row in ddt_pre.chunks_exact(e) {
        axpy(1.0, row, g.dt_bias);
    }
    let ddt_low = linear_backward(&ddt_pre, &cache.dt_low, w.dt_up, g.dt_up, r, e);
    let du_dt = linear_backward(&ddt_low, &cache.u, w.dt_down, g.dt_down, e, r);
    for i in 0..du.len() {
        du[i] += du_c[i] + du_b[i] + du_dt[i];
    }

    // u = silu(conv(xi))
    let dconv: Vec<f64> = du.iter().zip(&cache.conv).map(|(&gu, &c)| gu * silu_grad(c)).collect();
    let mut dxi = vec![0.0; t_len * e];
    for t in 0..t_len {
        let row = &dconv[t * e..(t + 1) * e];
        axpy(1.0, row, g.conv_bias);
        for j in 0..k {
            let Some(src) = (t + j).checked_sub(k - 1) else {
                continue;
            };
            for ch in 0..e {
                g.conv_weight[ch * k + j] += row[ch] * cache.xi[src * e + ch];
                dxi[src * e + ch] += row[ch] * w.conv_weight[ch * k + j];
            }
        }
    }

    let (gin_x, gin_z) = g.in_proj.split_at_mut(e * d);
    let mut dnormed = linear_backward(&dxi, &cache.normed, &w.in_proj[..e * d], gin_x, d, e);
    let dn_z = linear_backward(&dz, &cache.normed, &w.in_proj[e * d..], gin_z, d, e);
    axpy(1.0, &dn_z, &mut dnormed);

    let mut dx = rms_norm_backward(&dnormed, &cache.x, &cache.inv_rms, w.norm, g.norm);
    axpy(1.0, &dout, &mut dx);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_reference_values() {
        let uniform = Logits {
            vocab: 267,
            data: vec![0.0; 267],
        };
        assert!((cross_entropy(&uniform, &[5]) - 267f64.ln()).abs() < 1e-12);
        assert!((267f64.ln() - 5.5872).abs() < 1e-4);

        let mut peaked = vec![0.0; 267];
        peaked[3] = 1000.0;
        let l = cross_entropy(&Logits { vocab: 267, data: peaked }, &[3]);
        assert!(l.abs() < 1e-12);

        let two = Logits {
            vocab: 2,
            data: vec![0.0, 0.0],
        };
        assert!((cross_entropy(&two, &[0]) - 0.693_147_180_559_945_3).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let logits = vec![0.5, -1.0, 2.0, 0.0, 0.1, 0.2];
        let (_, g) = cross_entropy_backward(&logits, 3, &[2, 0]);
        for row in g.chunks_exact(3) {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn zero_embedding_has_zero_gradient() {
        let cfg = ModelConfig::new(8, 1, 4, 260, 16).with_seed(1);
        let mut p = ModelParameters::init(&cfg).unwrap();
        p.tensors_mut().embedding.fill(0.0);
        let (loss, g) = loss_and_gradients(&p, &[257, 1, 2, 256]).unwrap();
        assert!((loss - 260f64.ln()).abs() < 1e-12);
        assert!(g.tensors().embedding.iter().all(|&v| v == 0.0));
    }
}
