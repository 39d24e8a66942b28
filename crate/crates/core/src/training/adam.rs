use crate::config::OptimizerConfig;

use super::TrainingError;

/// Bias-corrected Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, opt: &OptimizerConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            lr: opt.lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
        }
    }

    /// Default hyperparameters: lr 1e-3, β = (0.9, 0.999), ε = 1e-8.
    pub fn with_defaults(len: usize) -> Self {
        Self::new(len, &OptimizerConfig::default())
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<(), TrainingError> {
    if params.len() != grads.len() || params.len() != state.m.len() || state.m.len() != state.v.len() {
        return Err(TrainingError::ShapeMismatch {
            params: params.len(),
            grads: grads.len(),
            moments: state.m.len(),
        });
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_counts_the_step() {
        let mut p = vec![0.3, -1.2, 4.0];
        let mut s = AdamState::with_defaults(3);
        adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        assert_eq!(p, vec![0.3, -1.2, 4.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let mut p = vec![0.0];
        let mut s = AdamState::with_defaults(1);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + ε).
        assert!((p[0] + 1e-3).abs() < 1e-11, "{}", p[0]);
    }

    #[test]
    fn quadratic_bowl() {
        let mut theta = vec![1.0];
        let mut s = AdamState::new(
            1,
            &OptimizerConfig {
                lr: 5e-3,
                ..OptimizerConfig::default()
            },
        );
        let mut losses = vec![1.0];
        for _ in 0..500 {
            let g = [2.0 * theta[0]];
            adam_step(&mut theta, &g, &mut s).unwrap();
            losses.push(theta[0] * theta[0]);
        }
        assert!(*losses.last().unwrap() < 1e-3, "{:?}", losses.last());
        assert!(losses.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::with_defaults(2);
        assert!(matches!(
            adam_step(&mut [0.0; 3], &[0.0; 3], &mut s),
            Err(TrainingError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            adam_step(&mut [0.0; 2], &[0.0; 3], &mut s),
            Err(TrainingError::ShapeMismatch { .. })
        ));
    }
}
