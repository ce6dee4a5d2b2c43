//! Trainable parameters and the Adam optimizer.

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::NumericError;

/// A tensor with a gradient accumulator and a freeze flag.
///
/// Frozen parameters are skipped entirely by [`AdamState::step`]: neither
/// their value nor their optimizer moments change.
#[derive(Debug, Clone)]
pub struct Parameter<F: Scalar> {
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub trainable: bool,
}

impl<F: Scalar> Parameter<F> {
    pub fn new(value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn frozen(value: Tensor<F>) -> Self {
        let mut p = Self::new(value);
        p.trainable = false;
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<F>>,
    second: Vec<Tensor<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &[&Parameter<F>], config: AdamConfig) -> Self {
        let first = params
            .iter()
            .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
            .collect();
        let second = params
            .iter()
            .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
            .collect();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, idx: usize) -> (&Tensor<F>, &Tensor<F>) {
        (&self.first[idx], &self.second[idx])
    }

    /// Applies one bias-corrected Adam update to the trainable parameters.
    /// Parameter order must match the slice given to [`AdamState::new`].
    pub fn step(&mut self, params: &mut [&mut Parameter<F>]) -> Result<(), NumericError> {
        assert_eq!(params.len(), self.first.len(), "parameter set changed");
        self.step += 1;
        let t = self.step as i32;
        let beta1 = F::from_f64(self.config.beta1);
        let beta2 = F::from_f64(self.config.beta2);
        let eps = F::from_f64(self.config.epsilon);
        let lr = F::from_f64(self.config.learning_rate);
        let corr1 = F::one() - beta1.powi(t);
        let corr2 = F::one() - beta2.powi(t);

        for (idx, param) in params.iter_mut().enumerate() {
            if !param.trainable {
                continue;
            }
            if !param.grad.all_finite() {
                return Err(NumericError::NonFinite { op: "adam_step" });
            }
            let m = self.first[idx].data_mut();
            let v = self.second[idx].data_mut();
            let g = param.grad.data();
            let w = param.value.data_mut();
            for i in 0..g.len() {
                m[i] = beta1 * m[i] + (F::one() - beta1) * g[i];
                v[i] = beta2 * v[i] + (F::one() - beta2) * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                w[i] = w[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Parameter::new(Tensor::<f64>::zeros(1, 1));
        p.grad.fill(1.0);
        let mut state = AdamState::new(&[&p], AdamConfig::default());
        state.step(&mut [&mut p]).unwrap();
        // bias-corrected first step: lr * 1 / (1 + eps)
        assert!((p.value.item() + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn frozen_parameter_is_untouched() {
        let mut p = Parameter::frozen(Tensor::<f64>::filled(2, 2, 3.5));
        p.grad.fill(10.0);
        let mut state = AdamState::new(&[&p], AdamConfig::default());
        state.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value, Tensor::filled(2, 2, 3.5));
        let (m, v) = state.moments(0);
        assert!(m.data().iter().all(|&x| x == 0.0));
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_gradient_leaves_value_and_decays_moments() {
        let mut p = Parameter::new(Tensor::<f64>::filled(1, 1, 2.0));
        let mut state = AdamState::new(&[&p], AdamConfig::default());

        // fresh state, zero grad: no movement at all
        state.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.item(), 2.0);

        // after a real gradient, a zero-grad step decays both moments
        p.grad.fill(1.0);
        state.step(&mut [&mut p]).unwrap();
        let (m1, v1) = (state.moments(0).0.item(), state.moments(0).1.item());
        p.zero_grad();
        state.step(&mut [&mut p]).unwrap();
        let (m2, v2) = (state.moments(0).0.item(), state.moments(0).1.item());
        assert!((m2 - 0.9 * m1).abs() < 1e-15);
        assert!((v2 - 0.999 * v1).abs() < 1e-18);
    }
}
