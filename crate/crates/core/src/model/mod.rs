//! Selective state-space language model over the byte vocabulary.
//!
//! Architecture: token embedding, `n_layers` residual Mamba blocks with
//! pre-RMS-normalization, a final RMS norm, and an output head tied to the
//! embedding matrix.
//!
//! Each block computes, for input rows `x`:
//!
//! ```text
//! n        = rmsnorm(x)
//! [xi, z]  = in_proj(n)
//! u        = silu(causal_conv(xi))
//! Δ        = softplus(dt_up(dt_down(u)) + dt_bias)
//! B, C     = b_proj(u), c_proj(u)
//! y        = selective_scan(u, Δ, A = -exp(a_log), B, C, D)
//! out      = x + out_proj(y ⊙ silu(z))
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) mod block;
pub mod io;
pub(crate) mod ops;
pub mod ssm;

pub use block::{mamba_block, BlockState, Logits, SsmState};
pub use ssm::{discretize, selective_scan, ScanInputs};
pub use io::{parse_model, read_model, write_model, SavedModel};

use crate::tokenizer::TokenId;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("token id {id} out of range for vocabulary of {size}")]
    TokenOutOfRange { id: TokenId, size: usize },
    #[error("bad model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub const EXPAND: usize = 2;
pub const CONV_WIDTH: usize = 4;
/// Δ projection rank is `ceil(d_inner / DT_RANK_DIVISOR)`.
pub const DT_RANK_DIVISOR: usize = 16;
pub const DT_MIN: f64 = 1e-3;
pub const DT_MAX: f64 = 1e-1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub d_state: usize,
    pub d_inner: usize,
    pub conv_width: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub rng_seed: u64,
}

impl ModelConfig {
    pub fn new(d_model: usize, n_layers: usize, d_state: usize, vocab_size: usize, max_seq_len: usize) -> Self {
        ModelConfig {
            d_model,
            n_layers,
            d_state,
            d_inner: EXPAND * d_model,
            conv_width: CONV_WIDTH,
            vocab_size,
            max_seq_len,
            rng_seed: 0,
        }
    }

    /// Desk-scale preset: 64 wide, 2 layers, 16 states, 4096-token samples.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig::new(64, 2, 16, vocab_size, 4096)
    }

    /// Large preset: 768 wide, 24 layers, 50,000-token samples.
    pub fn large(vocab_size: usize) -> Self {
        ModelConfig::new(768, 24, 16, vocab_size, 50_000)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn dt_rank(&self) -> usize {
        self.d_inner.div_ceil(DT_RANK_DIVISOR)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.d_model == 0 || self.n_layers == 0 || self.d_state == 0 || self.conv_width == 0 {
            return bad("dimensions must be positive");
        }
        if self.d_inner != EXPAND * self.d_model {
            return bad("d_inner must equal 2 * d_model");
        }
        if self.vocab_size == 0 || self.vocab_size > usize::from(TokenId::MAX) + 1 {
            return bad("vocab_size out of range");
        }
        if self.max_seq_len < 2 {
            return bad("max_seq_len must be at least 2");
        }
        Ok(())
    }

    /// Tensor names and shapes in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, e, n, r, k) = (self.d_model, self.d_inner, self.d_state, self.dt_rank(), self.conv_width);
        let mut out = vec![("embedding".to_string(), vec![self.vocab_size, d])];
        for l in 0..self.n_layers {
            let p = |s: &str| format!("blocks.{l}.{s}");
            out.extend([
                (p("norm"), vec![d]),
                (p("in_proj"), vec![2 * e, d]),
                (p("conv_weight"), vec![e, k]),
                (p("conv_bias"), vec![e]),
                (p("dt_down"), vec![r, e]),
                (p("dt_up"), vec![e, r]),
                (p("dt_bias"), vec![e]),
                (p("b_proj"), vec![n, e]),
                (p("c_proj"), vec![n, e]),
                (p("a_log"), vec![e, n]),
                (p("d_skip"), vec![e]),
                (p("out_proj"), vec![d, e]),
            ]);
        }
        out.push(("final_norm".to_string(), vec![d]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Per-block tensors, generic over the slice type so the same shape serves
/// read-only parameters and mutable gradient buffers.
#[derive(Debug)]
pub struct BlockTensors<S> {
    pub norm: S,
    pub in_proj: S,
    pub conv_weight: S,
    pub conv_bias: S,
    pub dt_down: S,
    pub dt_up: S,
    pub dt_bias: S,
    pub b_proj: S,
    pub c_proj: S,
    pub a_log: S,
    pub d_skip: S,
    pub out_proj: S,
}

#[derive(Debug)]
pub struct ModelTensors<S> {
    pub embedding: S,
    pub blocks: Vec<BlockTensors<S>>,
    pub final_norm: S,
}

macro_rules! split_tensors {
    ($cfg:expr, $data:expr, $split:ident) => {{
        let shapes = $cfg.tensor_shapes();
        let mut sizes = shapes.iter().map(|(_, s)| s.iter().product::<usize>());
        let mut rest = $data;
        let mut next = || {
            let n = sizes.next().expect("tensor count");
            let (head, tail) = std::mem::take(&mut rest).$split(n);
            rest = tail;
            head
        };
        let embedding = next();
        let blocks = (0..$cfg.n_layers)
            .map(|_| BlockTensors {
                norm: next(),
                in_proj: next(),
                conv_weight: next(),
                conv_bias: next(),
                dt_down: next(),
                dt_up: next(),
                dt_bias: next(),
                b_proj: next(),
                c_proj: next(),
                a_log: next(),
                d_skip: next(),
                out_proj: next(),
            })
            .collect();
        let final_norm = next();
        ModelTensors {
            embedding,
            blocks,
            final_norm,
        }
    }};
}

/// All learnable tensors, stored contiguously in [`ModelConfig::tensor_shapes`]
/// order. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    config: ModelConfig,
    pub data: Vec<f64>,
}

impl ModelParameters {
    pub fn zeros(config: &ModelConfig) -> Self {
        ModelParameters {
            data: vec![0.0; config.parameter_count()],
            config: config.clone(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParameters::zeros(&self.config)
    }

    pub fn from_data(config: &ModelConfig, data: Vec<f64>) -> Result<Self, ModelError> {
        config.validate()?;
        if data.len() != config.parameter_count() {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} parameters, got {}",
                config.parameter_count(),
                data.len()
            )));
        }
        Ok(ModelParameters {
            config: config.clone(),
            data,
        })
    }

    /// Deterministic initialization from `config.rng_seed`.
    ///
    /// Projections draw from `U(-1/√fan_in, 1/√fan_in)`; the state matrix
    /// uses the diagonal real initialization `A[c, k] = -(k + 1)`; the Δ bias
    /// is set so `softplus(bias)` is log-uniform in `[DT_MIN, DT_MAX]`; skip
    /// gains and norm gains start at one.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ModelParameters::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let (d, e, r, k, n) = (
            config.d_model,
            config.d_inner,
            config.dt_rank(),
            config.conv_width,
            config.d_state,
        );
        let mut uniform = |buf: &mut [f64], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            buf.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        };
        let mut t = params.tensors_mut();
        uniform(t.embedding, d);
        for b in t.blocks.iter_mut() {
            b.norm.fill(1.0);
            uniform(b.in_proj, d);
            uniform(b.conv_weight, k);
            uniform(b.conv_bias, k);
            uniform(b.dt_down, e);
            uniform(b.dt_up, r);
            uniform(b.b_proj, e);
            uniform(b.c_proj, e);
            uniform(b.out_proj, e);
            b.d_skip.fill(1.0);
            for row in b.a_log.chunks_exact_mut(n) {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = ((j + 1) as f64).ln();
                }
            }
        }
        t.final_norm.fill(1.0);
        // Δ bias last so the projection draws above do not depend on it.
        let (lo, hi) = (DT_MIN.ln(), DT_MAX.ln());
        for b in t.blocks.iter_mut() {
            for v in b.dt_bias.iter_mut() {
                let dt = rng.gen_range(lo..hi).exp();
                *v = ops::softplus_inverse(dt);
            }
        }
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> ModelTensors<&[f64]> {
        split_tensors!(self.config, self.data.as_slice(), split_at)
    }

    pub fn tensors_mut(&mut self) -> ModelTensors<&mut [f64]> {
        split_tensors!(self.config, self.data.as_mut_slice(), split_at_mut)
    }

    /// Named views in storage order.
    pub fn named(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut rest = self.data.as_slice();
        self.config
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let (head, tail) = rest.split_at(shape.iter().product());
                rest = tail;
                (name, shape, head)
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `A = -exp(a_log)` for one block.
    pub fn state_matrix(&self, layer: usize) -> Vec<f64> {
        self.tensors().blocks[layer].a_log.iter().map(|v| -v.exp()).collect()
    }
}
