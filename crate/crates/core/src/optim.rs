//! SGD with momentum and weight decay, and the plateau learning-rate
//! schedule: divide the rate by 10 whenever validation accuracy stops
//! improving, stop after a plateau at one hundredth of the initial rate.

use crate::error::{Error, Result};
use crate::net::Network;
use crate::tensor::seq::GradBuf;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy)]
pub struct SgdHyper {
    pub learning_rate: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    /// Non-improving validation evaluations tolerated before a reduction.
    pub patience: usize,
}

impl Default for SgdHyper {
    fn default() -> Self {
        SgdHyper {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            patience: 2,
        }
    }
}

/// Optimizer state: current rate, velocity buffers aligned with the
/// network's parameter store, and the plateau tracker.
#[derive(Debug, Clone)]
pub struct OptimState {
    hyper: SgdHyper,
    initial_lr: f32,
    lr: f32,
    velocity: Vec<(Vec<f32>, Vec<f32>)>,
    best_accuracy: Option<f64>,
    evals_since_improvement: usize,
    reductions: usize,
}

/// Maximum rate reductions before a further plateau stops training.
const MAX_REDUCTIONS: usize = 2;

impl OptimState {
    pub fn new(net: &Network, hyper: SgdHyper) -> Result<Self> {
        if !(hyper.learning_rate.is_finite() && hyper.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and positive, got {}",
                hyper.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&hyper.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1), got {}",
                hyper.momentum
            )));
        }
        let velocity = net
            .params()
            .iter()
            .map(|p| (vec![0.0; p.weights.len()], vec![0.0; p.bias.len()]))
            .collect();
        Ok(OptimState {
            hyper,
            initial_lr: hyper.learning_rate,
            lr: hyper.learning_rate,
            velocity,
            best_accuracy: None,
            evals_since_improvement: 0,
            reductions: 0,
        })
    }

    pub fn learning_rate(&self) -> f32 {
        self.lr
    }

    /// One SGD step over every trainable parameter:
    /// `g = grad + wd * w; v = momentum * v - lr * g; w = w + v`.
    /// Frozen parameters (and their velocities) are left untouched.
    pub fn sgd_step(&mut self, net: &mut Network, grads: &[GradBuf<f32>]) -> Result<()> {
        if grads.len() != net.params().len() {
            return Err(Error::shape(
                "sgd_step gradients",
                format!("{} parameter pairs", net.params().len()),
                format!("{} gradient buffers", grads.len()),
            ));
        }
        let mu = self.hyper.momentum;
        let wd = self.hyper.weight_decay;
        let lr = self.lr;
        for ((param, grad), (vel_w, vel_b)) in net
            .params_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.velocity)
        {
            if !param.trainable {
                continue;
            }
            if grad.weights.len() != param.weights.len() || grad.bias.len() != param.bias.len() {
                return Err(Error::shape(
                    format!("sgd_step on {}", param.name),
                    format!("{}+{} values", param.weights.len(), param.bias.len()),
                    format!("{}+{} gradient values", grad.weights.len(), grad.bias.len()),
                ));
            }
            let update = |w: &mut [f32], g: &[f32], v: &mut [f32]| {
                for i in 0..w.len() {
                    let gi = g[i] + wd * w[i];
                    v[i] = mu * v[i] - lr * gi;
                    w[i] += v[i];
                }
            };
            update(param.weights.data_mut(), &grad.weights, vel_w);
            update(param.bias.data_mut(), &grad.bias, vel_b);
        }
        Ok(())
    }

    /// Feeds one validation accuracy into the plateau tracker. Returns the
    /// rate now in effect and whether training should stop (a plateau after
    /// the rate has already been reduced twice).
    pub fn plateau_update(&mut self, val_accuracy: f64) -> (f32, bool) {
        debug_assert!((0.0..=1.0).contains(&val_accuracy));
        let improved = match self.best_accuracy {
            Some(best) => val_accuracy > best,
            None => true,
        };
        if improved {
            self.best_accuracy = Some(val_accuracy);
            self.evals_since_improvement = 0;
            return (self.lr, false);
        }
        self.evals_since_improvement += 1;
        if self.evals_since_improvement >= self.hyper.patience {
            self.evals_since_improvement = 0;
            if self.reductions >= MAX_REDUCTIONS {
                return (self.lr, true);
            }
            self.reductions += 1;
            self.lr = self.initial_lr / 10f32.powi(self.reductions as i32);
        }
        (self.lr, false)
    }
}
