//! Adam with bias correction and decoupled weight decay.

use super::matrix::Matrix;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    /// Fresh zero moments shaped like `params`.
    pub fn new(params: &[Matrix], config: AdamConfig) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            config,
        }
    }
}

/// One Adam update in place.
///
/// Weight decay is decoupled: `p ← p − lr·(m̂/(√v̂ + ε) + weight_decay·p)`.
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(invalid(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    if !(learning_rate >= 0.0) || !(weight_decay >= 0.0) {
        return Err(invalid("adam: learning rate and weight decay must be non-negative"));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
    }

    state.step_count += 1;
    let AdamConfig { beta1, beta2, epsilon } = state.config;
    let t = state.step_count as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    for i in 0..params.len() {
        let p = params[i].as_mut_slice();
        let g = grads[i].as_slice();
        let m = state.first_moment[i].as_mut_slice();
        let v = state.second_moment[i].as_mut_slice();
        for j in 0..p.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= learning_rate * (m_hat / (v_hat.sqrt() + epsilon) + weight_decay * p[j]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = vec![Matrix::from_rows(&[[1.0, -2.0], [3.5, 0.0]])];
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..5 {
            adam_step(&mut p, &[Matrix::zeros(2, 2)], &mut st, 0.01, 0.0).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step_count, 5);
    }

    #[test]
    fn single_step_matches_hand_formula() {
        let lr = 0.005;
        let g = 0.3;
        let mut p = vec![Matrix::filled(1, 1, 2.0)];
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &[Matrix::filled(1, 1, g)], &mut st, lr, 0.0).unwrap();
        // m̂ = g, v̂ = g² after bias correction
        let want = 2.0 - lr * g / (g.abs() + 1e-8);
        assert!((p[0].scalar() - want).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_with_zero_gradient() {
        let mut p = vec![Matrix::filled(1, 3, 4.0)];
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &[Matrix::zeros(1, 3)], &mut st, 0.005, 0.0004).unwrap();
        let want = 4.0 * (1.0 - 0.005 * 0.0004);
        assert!(p[0].as_slice().iter().all(|v| (v - want).abs() < 1e-15));
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![Matrix::zeros(2, 2)];
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(adam_step(&mut p, &[Matrix::zeros(1, 2)], &mut st, 0.1, 0.0).is_err());
        assert_eq!(st.step_count, 0);
    }
}
