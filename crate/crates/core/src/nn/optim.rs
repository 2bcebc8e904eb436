//! SGD and Adam over an ordered list of parameter tensors.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimizerKind::Sgd => write!(f, "sgd"),
            OptimizerKind::Adam => write!(f, "adam"),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state. Moment buffers are indexed by the position of each
/// tensor in the parameter list, so the caller must pass the same tensors
/// in the same order on every step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    moments: Vec<Moments>,
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn new(
        kind: OptimizerKind,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) || epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "adam constants out of range: beta1={beta1} beta2={beta2} epsilon={epsilon}"
            )));
        }
        Ok(Self {
            kind,
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            moments: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update using each tensor's accumulated gradient.
    /// Tensors without a gradient buffer are left untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor]) {
        self.step_count += 1;
        if self.moments.len() < params.len() {
            self.moments.resize(params.len(), Moments::default());
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let Some(grad) = p.grad().map(|g| g.to_vec()) else {
                        continue;
                    };
                    let lr = self.learning_rate;
                    for (x, g) in p.data_mut().iter_mut().zip(&grad) {
                        *x -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step_count as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for (idx, p) in params.iter_mut().enumerate() {
                    let Some(grad) = p.grad().map(|g| g.to_vec()) else {
                        continue;
                    };
                    let mom = &mut self.moments[idx];
                    if mom.m.is_empty() {
                        mom.m = vec![0.0; grad.len()];
                        mom.v = vec![0.0; grad.len()];
                    }
                    debug_assert_eq!(mom.m.len(), grad.len());
                    let (b1, b2, lr, eps) =
                        (self.beta1, self.beta2, self.learning_rate, self.epsilon);
                    for ((x, &g), (m, v)) in p
                        .data_mut()
                        .iter_mut()
                        .zip(&grad)
                        .zip(mom.m.iter_mut().zip(mom.v.iter_mut()))
                    {
                        // Elements with exactly zero gradient keep their value:
                        // moments decay but the parameter does not drift, so a
                        // zero-loss batch leaves parameters bitwise unchanged.
                        if g == 0.0 {
                            *m *= b1;
                            *v *= b2;
                            continue;
                        }
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *x -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
