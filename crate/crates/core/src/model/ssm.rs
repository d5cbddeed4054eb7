//! Discretization and the sequential selective scan.
//!
//! For channel `e`, state index `n`, and time `t`:
//!
//! ```text
//! Ā[t,e,n] = exp(Δ[t,e] · A[e,n])
//! B̄[t,e,n] = Δ[t,e] · B[t,n]
//! h[t,e,n] = Ā · h[t-1,e,n] + B̄ · u[t,e]
//! y[t,e]   = Σ_n C[t,n] · h[t,e,n] + D[e] · u[t,e]
//! ```
//!
//! `A` is diagonal, so the zero-order hold on `A` is exact; the input
//! matrix uses the Euler rule.

/// Zero-order-hold / Euler discretization of one diagonal entry:
/// returns `(exp(delta·a), delta·b)`.
pub fn discretize(delta: f64, a: f64, b: f64) -> (f64, f64) {
    ((delta * a).exp(), delta * b)
}

/// Inputs of one selective scan over `T` steps and `E` channels with an
/// `N`-dimensional state per channel. Row-major layouts:
/// `u, delta: [T, E]`, `b, c: [T, N]`, `a: [E, N]`, `d: [E]`.
#[derive(Debug, Clone, Copy)]
pub struct ScanInputs<'a> {
    pub u: &'a [f64],
    pub delta: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub c: &'a [f64],
    pub d: &'a [f64],
}

impl ScanInputs<'_> {
    fn dims(&self) -> (usize, usize, usize) {
        let e = self.d.len();
        let n = self.a.len() / e;
        let t = self.u.len() / e;
        assert_eq!(self.a.len(), e * n, "A must be [E, N]");
        assert_eq!(self.u.len(), t * e, "u must be [T, E]");
        assert_eq!(self.delta.len(), t * e, "delta must be [T, E]");
        assert_eq!(self.b.len(), t * n, "B must be [T, N]");
        assert_eq!(self.c.len(), t * n, "C must be [T, N]");
        (t, e, n)
    }
}

/// Run the recurrence from `h_0 = 0`. Returns `y: [T, E]`.
pub fn selective_scan(inputs: &ScanInputs<'_>) -> Vec<f64> {
    let (_, e, n) = inputs.dims();
    let mut h = vec![0.0; e * n];
    scan_from(inputs, &mut h, None)
}

/// Continue a scan from state `h: [E, N]`, updating it in place. When
/// `history` is given, the state after every step is appended (`[T, E, N]`).
pub(crate) fn scan_from(inputs: &ScanInputs<'_>, h: &mut [f64], mut history: Option<&mut Vec<f64>>) -> Vec<f64> {
    let (t_len, e, n) = inputs.dims();
    let mut y = vec![0.0; t_len * e];
    for t in 0..t_len {
        let b_t = &inputs.b[t * n..(t + 1) * n];
        let c_t = &inputs.c[t * n..(t + 1) * n];
        for ch in 0..e {
            let dt = inputs.delta[t * e + ch];
            let u = inputs.u[t * e + ch];
            let a_row = &inputs.a[ch * n..(ch + 1) * n];
            let h_row = &mut h[ch * n..(ch + 1) * n];
            let mut acc = 0.0;
            for k in 0..n {
                let (a_bar, b_bar) = discretize(dt, a_row[k], b_t[k]);
                h_row[k] = a_bar * h_row[k] + b_bar * u;
                acc += c_t[k] * h_row[k];
            }
            y[t * e + ch] = acc + inputs.d[ch] * u;
        }
        if let Some(hist) = history.as_deref_mut() {
            hist.extend_from_slice(h);
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretize_limits() {
        assert_eq!(discretize(0.0, -3.0, 2.0), (1.0, 0.0));
        let (a, b) = discretize(1.0, -1.0, 1.0);
        assert!((a - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(b, 1.0);
        assert_eq!(discretize(1e6, -1.0, 1.0).0, 0.0);
    }

    #[test]
    fn single_step_by_hand() {
        let y = selective_scan(&ScanInputs {
            u: &[1.0],
            delta: &[1.0],
            a: &[-1.0],
            b: &[1.0],
            c: &[1.0],
            d: &[0.0],
        });
        // h1 = e^-1 * 0 + 1 * 1 = 1
        assert_eq!(y, vec![1.0]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let t = 5;
        let y = selective_scan(&ScanInputs {
            u: &vec![0.0; t * 2],
            delta: &vec![0.3; t * 2],
            a: &[-1.0, -2.0, -1.0, -2.0],
            b: &vec![0.7; t * 2],
            c: &vec![-0.2; t * 2],
            d: &[1.0, 1.0],
        });
        assert!(y.iter().all(|&v| v == 0.0));
    }
}
