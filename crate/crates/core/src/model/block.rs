use super::ops::{linear, rms_norm, silu, softplus};
use super::ssm::{scan_from, ScanInputs};
use super::{BlockTensors, ModelConfig, ModelError, ModelParameters};
use crate::tokenizer::TokenId;

/// Recurrent state of one block: the last `conv_width - 1` conv inputs
/// (`[K-1, E]`, oldest first) and the SSM state `h: [E, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub conv: Vec<f64>,
    pub h: Vec<f64>,
}

impl BlockState {
    pub fn new(cfg: &ModelConfig) -> Self {
        BlockState {
            conv: vec![0.0; (cfg.conv_width - 1) * cfg.d_inner],
            h: vec![0.0; cfg.d_inner * cfg.d_state],
        }
    }
}

/// Recurrent state of the whole model for incremental decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmState {
    pub blocks: Vec<BlockState>,
    pub position: usize,
}

impl SsmState {
    pub fn new(cfg: &ModelConfig) -> Self {
        SsmState {
            blocks: (0..cfg.n_layers).map(|_| BlockState::new(cfg)).collect(),
            position: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.conv.iter().chain(&b.h).all(|v| v.is_finite()))
    }
}

/// Logits for `T` positions, one row of `vocab` values per position.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub vocab: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn positions(&self) -> usize {
        self.data.len() / self.vocab
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.vocab..(t + 1) * self.vocab]
    }
}

/// Activations kept from a block's forward pass for backpropagation.
/// All per-position tensors are row-major `[T, dim]`.
#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    pub x: Vec<f64>,
    pub inv_rms: Vec<f64>,
    pub normed: Vec<f64>,
    pub xi: Vec<f64>,
    pub z: Vec<f64>,
    pub conv: Vec<f64>,
    pub u: Vec<f64>,
    pub dt_low: Vec<f64>,
    pub dt_pre: Vec<f64>,
    pub delta: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub a: Vec<f64>,
    /// `[T, E, N]` state after each step.
    pub h: Vec<f64>,
    pub y: Vec<f64>,
}

fn causal_conv(xi: &[f64], weight: &[f64], bias: &[f64], k: usize) -> Vec<f64> {
    let e = bias.len();
    let t_len = xi.len() / e;
    let mut out = vec![0.0; xi.len()];
    for t in 0..t_len {
        let row = &mut out[t * e..(t + 1) * e];
        row.copy_from_slice(bias);
        for j in 0..k {
            // tap j sees input t - (k - 1) + j
            let Some(src) = (t + j).checked_sub(k - 1) else {
                continue;
            };
            let src = &xi[src * e..(src + 1) * e];
            for ch in 0..e {
                row[ch] += weight[ch * k + j] * src[ch];
            }
        }
    }
    out
}

/// Full-sequence block forward for input rows `x: [T, D]`.
pub(crate) fn block_forward(
    w: &BlockTensors<&[f64]>,
    cfg: &ModelConfig,
    x: &[f64],
    record: bool,
) -> (Vec<f64>, Option<BlockCache>) {
    let (d, e, n, r) = (cfg.d_model, cfg.d_inner, cfg.d_state, cfg.dt_rank());
    let (normed, inv_rms) = rms_norm(x, w.norm);
    let xi = linear(&normed, &w.in_proj[..e * d], d, e);
    let z = linear(&normed, &w.in_proj[e * d..], d, e);
    let conv = causal_conv(&xi, w.conv_weight, w.conv_bias, cfg.conv_width);
    let u: Vec<f64> = conv.iter().map(|&v| silu(v)).collect();
    let dt_low = linear(&u, w.dt_down, e, r);
    let mut dt_pre = linear(&dt_low, w.dt_up, r, e);
    for row in dt_pre.chunks_exact_mut(e) {
        for (v, b) in row.iter_mut().zip(w.dt_bias) {
            *v += b;
        }
    }
    let delta: Vec<f64> = dt_pre.iter().map(|&v| softplus(v)).collect();
    let b = linear(&u, w.b_proj, e, n);
    let c = linear(&u, w.c_proj, e, n);
    let a: Vec<f64> = w.a_log.iter().map(|v| -v.exp()).collect();

    let mut h = vec![0.0; e * n];
    let mut history = record.then(|| Vec::with_capacity(x.len() / d * e * n));
    let y = scan_from(
        &ScanInputs {
            u: &u,
            delta: &delta,
            a: &a,
            b: &b,
            c: &c,
            d: w.d_skip,
        },
        &mut h,
        history.as_mut(),
    );
    let gated: Vec<f64> = y.iter().zip(&z).map(|(&yv, &zv)| yv * silu(zv)).collect();
    let mut out = linear(&gated, w.out_proj, e, d);
    for (o, xv) in out.iter_mut().zip(x) {
        *o += xv;
    }
    let cache = history.map(|h| BlockCache {
        x: x.to_vec(),
        inv_rms,
        normed,
        xi,
        z,
        conv,
        u,
        dt_low,
        dt_pre,
        delta,
        b,
        c,
        a,
        h,
        y,
    });
    (out, cache)
}

/// Advance one block by a single position.
pub(crate) fn block_step(w: &BlockTensors<&[f64]>, cfg: &ModelConfig, x: &[f64], state: &mut BlockState) -> Vec<f64> {
    let (d, e, n, r, k) = (cfg.d_model, cfg.d_inner, cfg.d_state, cfg.dt_rank(), cfg.conv_width);
    let (normed, _) = rms_norm(x, w.norm);
    let xi = linear(&normed, &w.in_proj[..e * d], d, e);
    let z = linear(&normed, &w.in_proj[e * d..], d, e);

    let mut u = w.conv_bias.to_vec();
    for ch in 0..e {
        let taps = &w.conv_weight[ch * k..(ch + 1) * k];
        let mut acc = taps[k - 1] * xi[ch];
        for j in 0..k - 1 {
            acc += taps[j] * state.conv[j * e + ch];
        }
        u[ch] = silu(u[ch] + acc);
    }
    if k > 1 {
        state.conv.copy_within(e.., 0);
        state.conv[(k - 2) * e..].copy_from_slice(&xi);
    }

    let dt_low = linear(&u, w.dt_down, e, r);
    let dt_pre = linear(&dt_low, w.dt_up, r, e);
    let delta: Vec<f64> = dt_pre.iter().zip(w.dt_bias).map(|(&v, b)| softplus(v + b)).collect();
    let b = linear(&u, w.b_proj, e, n);
    let c = linear(&u, w.c_proj, e, n);
    let a: Vec<f64> = w.a_log.iter().map(|v| -v.exp()).collect();
    let y = scan_from(
        &ScanInputs {
            u: &u,
            delta: &delta,
            a: &a,
            b: &b,
            c: &c,
            d: w.d_skip,
        },
        &mut state.h,
        None,
    );
    let gated: Vec<f64> = y.iter().zip(&z).map(|(&yv, &zv)| yv * silu(zv)).collect();
    let mut out = linear(&gated, w.out_proj, e, d);
    for (o, xv) in out.iter_mut().zip(x) {
        *o += xv;
    }
    out
}

/// One Mamba block over `x: [T, D]`.
///
/// Without a state this is the full-sequence path starting from zero
/// state. With a state, positions are fed one at a time through the
/// recurrent path, continuing from and updating `state`.
pub fn mamba_block(
    x: &[f64],
    w: &BlockTensors<&[f64]>,
    cfg: &ModelConfig,
    state: Option<&mut BlockState>,
) -> Vec<f64> {
    match state {
        None => block_forward(w, cfg, x, false).0,
        Some(state) => x
            .chunks_exact(cfg.d_model)
            .flat_map(|row| block_step(w, cfg, row, state))
            .collect(),
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub tokens: Vec<usize>,
    pub blocks: Vec<BlockCache>,
    pub final_in: Vec<f64>,
    pub final_inv_rms: Vec<f64>,
    pub final_normed: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ModelParameters {
    fn check_tokens(&self, tokens: &[TokenId]) -> Result<Vec<usize>, ModelError> {
        let cfg = self.config();
        if tokens.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if tokens.len() > cfg.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: tokens.len(),
                max: cfg.max_seq_len,
            });
        }
        tokens
            .iter()
            .map(|&t| {
                if (t as usize) < cfg.vocab_size {
                    Ok(t as usize)
                } else {
                    Err(ModelError::TokenOutOfRange {
                        id: t,
                        size: cfg.vocab_size,
                    })
                }
            })
            .collect()
    }

    fn embed(&self, tokens: &[usize]) -> Vec<f64> {
        let d = self.config().d_model;
        let emb = self.tensors().embedding;
        tokens
            .iter()
            .flat_map(|&t| emb[t * d..(t + 1) * d].iter().copied())
            .collect()
    }

    fn run(&self, tokens: &[TokenId], record: bool) -> Result<ForwardTrace, ModelError> {
        let cfg = self.config();
        let ids = self.check_tokens(tokens)?;
        let t = self.tensors();
        let mut x = self.embed(&ids);
        let mut caches = Vec::with_capacity(cfg.n_layers);
        for w in &t.blocks {
            let (out, cache) = block_forward(w, cfg, &x, record);
            caches.extend(cache);
            x = out;
        }
        let (final_normed, final_inv_rms) = rms_norm(&x, t.final_norm);
        let logits = linear(&final_normed, t.embedding, cfg.d_model, cfg.vocab_size);
        Ok(ForwardTrace {
            tokens: ids,
            blocks: caches,
            final_in: x,
            final_inv_rms,
            final_normed,
            logits,
        })
    }

    /// Causal forward pass over `1..=max_seq_len` tokens.
    pub fn forward(&self, tokens: &[TokenId]) -> Result<Logits, ModelError> {
        Ok(Logits {
            vocab: self.config().vocab_size,
            data: self.run(tokens, false)?.logits,
        })
    }

    pub(crate) fn forward_trace(&self, tokens: &[TokenId]) -> Result<ForwardTrace, ModelError> {
        self.run(tokens, true)
    }

    pub fn start_state(&self) -> SsmState {
        SsmState::new(self.config())
    }

    /// Feed one token through the recurrent path and return its logits.
    pub fn step(&self, state: &mut SsmState, token: TokenId) -> Result<Vec<f64>, ModelError> {
        let cfg = self.config();
        if token as usize >= cfg.vocab_size {
            return Err(ModelError::TokenOutOfRange {
                id: token,
                size: cfg.vocab_size,
            });
        }
        let t = self.tensors();
        let mut x = self.embed(&[token as usize]);
        for (w, s) in t.blocks.iter().zip(state.blocks.iter_mut()) {
            x = block_step(w, cfg, &x, s);
        }
        state.position += 1;
        let (normed, _) = rms_norm(&x, t.final_norm);
        Ok(linear(&normed, t.embedding, cfg.d_model, cfg.vocab_size))
    }
}
