use serde::{Deserialize, Serialize};

use super::mlp::ParamVector;
use crate::error::{Error, Result};

/// Bias-corrected Adam with per-parameter moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// Applies one descent step. Rejects the update without touching any
    /// state if the gradient has a non-finite entry.
    pub fn update(&mut self, params: &mut ParamVector, grad: &[f64]) -> Result<()> {
        self.update_slice(params.values_mut(), grad)
    }

    pub fn update_slice(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.len() {
            return Err(Error::dims("adam parameters", self.len(), params.len()));
        }
        if grad.len() != self.len() {
            return Err(Error::dims("adam gradient", self.len(), grad.len()));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient entry {i} = {}",
                grad[i]
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::LayerShape;

    fn scalar_param(p: f64) -> ParamVector {
        // A 1x0 "layer" is not allowed by MlpSpec but ParamVector only needs
        // a consistent layout: one bias entry.
        ParamVector::from_values(vec![LayerShape { rows: 1, cols: 0 }], vec![p]).unwrap()
    }

    #[test]
    fn zero_gradient_only_advances_step() {
        let mut params = scalar_param(0.7);
        let mut adam = AdamState::new(1, 0.1);
        adam.update(&mut params, &[0.0]).unwrap();
        assert_eq!(params.values(), &[0.7]);
        assert_eq!(adam.first_moment, vec![0.0]);
        assert_eq!(adam.second_moment, vec![0.0]);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02, 1e4] {
            let mut params = scalar_param(0.0);
            let mut adam = AdamState::new(1, 0.05);
            adam.update(&mut params, &[g]).unwrap();
            let expected = -0.05 * g / (g.abs() + 1e-8);
            assert!((params.values()[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_matches_hand_stepped_reference() {
        // minimize p^2 / 2 from p = 1 with lr = 0.1
        let reference = [0.900000001, 0.8004122297123382, 0.701586274504415];
        let mut params = scalar_param(1.0);
        let mut adam = AdamState::new(1, 0.1);
        let mut prev = 1.0f64;
        for want in reference {
            let g = params.values()[0];
            adam.update(&mut params, &[g]).unwrap();
            let p = params.values()[0];
            assert!((p - want).abs() < 1e-12, "{p} vs {want}");
            assert!(p.abs() < prev.abs());
            prev = p;
        }
        assert_eq!(adam.step_count, 3);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut params = scalar_param(0.5);
        let mut adam = AdamState::new(1, 0.1);
        assert!(matches!(
            adam.update(&mut params, &[f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(params.values(), &[0.5]);
        assert_eq!(adam.step_count, 0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut params = scalar_param(0.5);
        let mut adam = AdamState::new(2, 0.1);
        assert!(adam.update(&mut params, &[1.0, 1.0]).is_err());
    }
}
