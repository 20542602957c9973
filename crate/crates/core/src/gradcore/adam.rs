use log::warn;

use super::tensor::ParamStore;
use super::GradError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient entry was non-finite; parameters were left untouched.
    Skipped,
}

/// Adaptive-moment optimizer state for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    skipped: usize,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Adam {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
            skipped: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Number of updates skipped because of non-finite gradients.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// One bias-corrected update from the gradients accumulated in `store`,
    /// which are zeroed afterwards.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<StepOutcome, GradError> {
        if store.len() != self.first.len()
            || store
                .iter()
                .zip(&self.first)
                .any(|((_, _, t), m)| t.len() != m.len())
        {
            return Err(GradError::InvalidArgument(
                "optimizer state does not match parameter shapes".into(),
            ));
        }
        self.step += 1;
        let finite = store
            .iter()
            .all(|(_, _, t)| t.grad().iter().all(|g| g.is_finite()));
        if !finite {
            self.skipped += 1;
            warn!("skipping optimizer step {}: non-finite gradient", self.step);
            store.zero_grad();
            return Ok(StepOutcome::Skipped);
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - beta1.powf(t);
        let c2 = 1.0 - beta2.powf(t);
        for ((tensor, m), v) in store
            .tensors_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let grad = tensor.grad().to_vec();
            let values = tensor.values_mut();
            for k in 0..grad.len() {
                let g = grad[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                values[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
            tensor.zero_grad();
        }
        Ok(StepOutcome::Applied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::{ParamStore, Tensor};

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, -2.0])).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store).unwrap();
        assert_eq!(store.get(id).values(), &[1.0, -2.0]);
        assert_eq!(adam.step_count(), 1);
        adam.step(&mut store).unwrap();
        assert_eq!(adam.step_count(), 2);
    }

    /// Scalar reference simulation of the same update rule.
    fn simulate(x0: f64, target: f64, steps: usize, cfg: AdamConfig) -> f64 {
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * (x - target);
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t as i32));
            let vh = v / (1.0 - cfg.beta2.powi(t as i32));
            x -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
        x
    }

    #[test]
    fn quadratic_converges_to_minimizer() {
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(4.0)).unwrap();
        let mut adam = Adam::new(cfg, &store);
        for _ in 0..2000 {
            let x = store.get(id).values()[0];
            store.get_mut(id).grad_mut()[0] = 2.0 * (x - 1.5);
            adam.step(&mut store).unwrap();
            assert_eq!(store.get(id).grad(), &[0.0]);
        }
        let x = store.get(id).values()[0];
        let oracle = simulate(4.0, 1.5, 2000, cfg);
        assert!((x - oracle).abs() < 1e-12);
        assert!((x - 1.5).abs() < 1e-3, "x = {x}");
    }

    #[test]
    fn non_finite_gradient_skips() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, 1.0])).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &store);
        store.get_mut(id).grad_mut()[1] = f64::NAN;
        assert_eq!(adam.step(&mut store).unwrap(), StepOutcome::Skipped);
        assert_eq!(store.get(id).values(), &[1.0, 1.0]);
        assert_eq!(adam.skipped(), 1);
        assert_eq!(adam.step_count(), 1);
        assert!(store.get(id).grad().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(1.0)).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &store);
        store.add("extra", Tensor::scalar(1.0)).unwrap();
        assert!(adam.step(&mut store).is_err());
    }
}
