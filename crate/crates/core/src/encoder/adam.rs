use serde::{Deserialize, Serialize};

use super::{EncoderModel, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid ADAM settings {self:?}")))
        }
    }
}

/// First and second moment estimates for every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(model: &EncoderModel, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        let n = model.parameter_count();
        Ok(Self { config, step: 0, first: vec![0.0; n], second: vec![0.0; n] })
    }
}

/// One bias-corrected ADAM update of `model` in place.
pub fn adam_step(model: &mut EncoderModel, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let n = model.parameter_count();
    if state.first.len() != n {
        return Err(Error::Shape(format!(
            "optimizer tracks {} parameters, model has {n}",
            state.first.len()
        )));
    }
    let shapes_match = grads.layers.len() == model.layers.len()
        && grads
            .layers
            .iter()
            .zip(&model.layers)
            .all(|(g, l)| g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len());
    if !shapes_match {
        return Err(Error::Shape("gradient does not match model shape".into()));
    }
    if grads.values().any(|g| !g.is_finite()) {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in model
        .params_mut()
        .zip(grads.values())
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
    }
    Ok(())
}
