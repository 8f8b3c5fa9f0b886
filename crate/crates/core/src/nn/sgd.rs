use serde::{Deserialize, Serialize};

use super::mlp::{MlpModel, ParamBuffers};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Step-decay schedule: the learning rate is multiplied by `factor` once for
/// every milestone epoch already reached.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub factor: f64,
    pub milestones: Vec<usize>,
}

impl StepDecay {
    pub fn rate_at(&self, base: f64, epoch: usize) -> f64 {
        let hits = self.milestones.iter().filter(|&&m| epoch >= m).count();
        base * self.factor.powi(hits as i32)
    }
}

/// Heavy-ball SGD: `v ← momentum·v − lr·(g + weight_decay·θ)`, `θ ← θ + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub weight_decay: T,
    velocities: ParamBuffers<T>,
}

impl<T: Real> SgdState<T> {
    pub fn new(model: &MlpModel<T>, learning_rate: f64, momentum: f64) -> Result<Self> {
        Self::with_weight_decay(model, learning_rate, momentum, 0.0)
    }

    pub fn with_weight_decay(
        model: &MlpModel<T>,
        learning_rate: f64,
        momentum: f64,
        weight_decay: f64,
    ) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate >= 0.0) {
            return Err(Error::invalid(format!("learning rate {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!("momentum {momentum} outside [0, 1)")));
        }
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(Error::invalid(format!("weight decay {weight_decay}")));
        }
        Ok(SgdState {
            learning_rate: T::lit(learning_rate),
            momentum: T::lit(momentum),
            weight_decay: T::lit(weight_decay),
            velocities: ParamBuffers::zeros_like(model),
        })
    }

    pub fn velocities(&self) -> &ParamBuffers<T> {
        &self.velocities
    }

    pub fn reset_velocity(&mut self) {
        for w in &mut self.velocities.weights {
            w.map_inplace(|_| T::zero());
        }
        for b in &mut self.velocities.biases {
            b.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn step(&mut self, model: &mut MlpModel<T>, grads: &ParamBuffers<T>) {
        let (lr, mu, wd) = (self.learning_rate, self.momentum, self.weight_decay);
        let (weights, biases) = model.params_mut();
        for (l, w) in weights.iter_mut().enumerate() {
            let v = self.velocities.weights[l].data_mut();
            let g = grads.weights[l].data();
            for ((theta, v), &g) in w.data_mut().iter_mut().zip(v).zip(g) {
                *v = mu * *v - lr * (g + wd * *theta);
                *theta += *v;
            }
        }
        for (l, b) in biases.iter_mut().enumerate() {
            let v = &mut self.velocities.biases[l];
            for ((theta, v), &g) in b.iter_mut().zip(v).zip(&grads.biases[l]) {
                *v = mu * *v - lr * g;
                *theta += *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_counts_milestones() {
        let d = StepDecay {
            factor: 0.1,
            milestones: vec![10, 20],
        };
        assert_eq!(d.rate_at(1.0, 0), 1.0);
        assert!((d.rate_at(1.0, 10) - 0.1).abs() < 1e-15);
        assert!((d.rate_at(1.0, 25) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let m = super::super::init_model::<f64>(&[2, 2], 0).unwrap();
        assert!(SgdState::new(&m, -0.1, 0.9).is_err());
        assert!(SgdState::new(&m, 0.1, 1.0).is_err());
        assert!(SgdState::with_weight_decay(&m, 0.1, 0.5, -1.0).is_err());
    }
}
