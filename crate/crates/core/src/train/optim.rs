use serde::{Deserialize, Serialize};

/// How `clip_value` is applied to gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    /// Clamp each component to `[-clip, clip]`.
    #[default]
    Value,
    /// Rescale the whole gradient so its L2 norm is at most `clip`.
    Norm,
}

pub fn clip_gradients(grads: &mut [f64], clip_value: f64) {
    for g in grads.iter_mut() {
        *g = g.clamp(-clip_value, clip_value);
    }
}

/// Returns the norm before clipping.
pub fn clip_gradient_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 5e-4,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        OptimizerState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One AdamW update with decoupled weight decay:
///
/// ```text
/// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
/// m̂ = m/(1−β₁ᵗ)            v̂ = v/(1−β₂ᵗ)
/// θ ← θ − lr·(m̂/(√v̂ + ε) + wd·θ)
/// ```
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, cfg: &AdamWConfig) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let (b1, b2) = cfg.betas;
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.m[i] + (1.0 - b1) * g;
        let v = b2 * state.v[i] + (1.0 - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let update = (m / c1) / ((v / c2).sqrt() + cfg.eps) + cfg.weight_decay * params[i];
        params[i] -= cfg.learning_rate * update;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_clipping() {
        let mut g = vec![-3.0, 0.5];
        clip_gradients(&mut g, 1.0);
        assert_eq!(g, vec![-1.0, 0.5]);
        let before = g.clone();
        clip_gradients(&mut g, 1.0);
        assert_eq!(g, before);
    }

    #[test]
    fn norm_clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_gradient_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = vec![0.3, -2.0];
        let mut s = OptimizerState::new(2);
        for _ in 0..5 {
            adamw_step(&mut p, &[0.0, 0.0], &mut s, &cfg);
        }
        assert_eq!(p, vec![0.3, -2.0]);
    }

    #[test]
    fn first_step_is_learning_rate() {
        let cfg = AdamWConfig::default();
        let mut p = vec![0.0];
        let mut s = OptimizerState::new(1);
        adamw_step(&mut p, &[1.0], &mut s, &cfg);
        // m̂ = 1, v̂ = 1 → Δθ = -lr / (1 + ε)
        let expected = -5e-4 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn decay_only_shrinks_geometrically() {
        let cfg = AdamWConfig::default();
        let mut p = vec![2.0];
        let mut s = OptimizerState::new(1);
        for step in 1..=10 {
            adamw_step(&mut p, &[0.0], &mut s, &cfg);
            let expected = 2.0 * (1.0 - 5e-4 * 1e-2f64).powi(step);
            assert!((p[0] - expected).abs() < 1e-15);
        }
    }
}
