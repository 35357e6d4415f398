//! Adam over a flat parameter vector. The model and encoder parameters
//! share one state, so both are optimized jointly.

/// First/second-moment accumulators and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length");
    assert_eq!(params.len(), state.m.len(), "parameter/state length");
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Default coefficients.
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = vec![1.0, -2.0, 0.5];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[0.0, 0.0, 0.0], &mut st, 0.1, BETA1, BETA2, EPS);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_signed_learning_rate() {
        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        let lr = 0.05;
        adam_step(&mut p, &[0.3, -1.7], &mut st, lr, BETA1, BETA2, EPS);
        // bias-corrected first step: −lr·g/(|g| + ε)
        assert!((p[0] + lr).abs() <= lr * 1e-6);
        assert!((p[1] - lr).abs() <= lr * 1e-6);
        assert!(p.iter().all(|v| v.abs() <= lr * (1.0 + 1e-6)));
    }

    #[test]
    fn trace_matches_hand_recursion() {
        // independent straight-line recursion, two steps with the same
        // gradient
        let g = [0.5, -0.2];
        let lr = 0.1;
        let mut m = [0.0f64; 2];
        let mut v = [0.0f64; 2];
        let mut want = [1.0f64, -1.0];
        for t in 1..=2u32 {
            for i in 0..2 {
                m[i] = 0.9 * m[i] + 0.1 * g[i];
                v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
                let m_hat = m[i] / (1.0 - 0.9f64.powi(t as i32));
                let v_hat = v[i] / (1.0 - 0.999f64.powi(t as i32));
                want[i] -= lr * m_hat / (v_hat.sqrt() + 1e-8);
            }
        }

        let mut p = vec![1.0, -1.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &g, &mut st, lr, BETA1, BETA2, EPS);
        adam_step(&mut p, &g, &mut st, lr, BETA1, BETA2, EPS);
        for i in 0..2 {
            assert!((p[i] - want[i]).abs() <= 1e-12, "coordinate {i}: {} vs {}", p[i], want[i]);
        }
    }
}
