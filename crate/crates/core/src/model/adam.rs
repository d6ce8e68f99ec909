use super::params::{GagModel, Weights};
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamHyper {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of one tensor. `step` is 1-based.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    first: &mut [f64],
    second: &mut [f64],
    step: u64,
    hyper: &AdamHyper,
) {
    let bc1 = 1.0 - hyper.beta1.powi(step as i32);
    let bc2 = 1.0 - hyper.beta2.powi(step as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(first.iter_mut())
        .zip(second.iter_mut())
    {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
}

impl GagModel {
    /// Applies one Adam step with the configured learning rate.
    pub fn adam_step(&mut self, grads: &Weights) -> Result<()> {
        if grads.shapes() != self.weights.shapes() {
            return Err(Error::Shape(
                "gradient layout does not match the model".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient; update refused".into()));
        }
        let hyper = AdamHyper::with_learning_rate(self.config.learning_rate);
        self.adam.step += 1;
        let step = self.adam.step;
        let params = self.weights.tensors_mut();
        let firsts = self.adam.first.tensors_mut();
        let seconds = self.adam.second.tensors_mut();
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads.tensors())
            .zip(firsts)
            .zip(seconds)
        {
            adam_update(p, g, m, v, step, &hyper);
        }
        self.touch();
        if !self.weights.is_finite() {
            return Err(Error::Numeric("parameters became non-finite".into()));
        }
        Ok(())
    }
}
