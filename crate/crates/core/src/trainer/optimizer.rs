use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-run optimizer state; moments consume the clipped update direction.
#[derive(Debug, Clone)]
pub enum OptimizerState {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, dim: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                m: vec![0.0; dim],
                v: vec![0.0; dim],
                t: 0,
            },
        }
    }

    /// One descent step along `direction` with step size `lr`.
    pub fn apply(&mut self, params: &mut [f64], direction: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), direction.len());
        match self {
            OptimizerState::Sgd => {
                for (p, d) in params.iter_mut().zip(direction) {
                    *p -= lr * d;
                }
            }
            OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                m,
                v,
                t,
            } => {
                *t += 1;
                let b1t = 1.0 - beta1.powi(*t as i32);
                let b2t = 1.0 - beta2.powi(*t as i32);
                for i in 0..params.len() {
                    let d = direction[i];
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * d;
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * d * d;
                    let m_hat = m[i] / b1t;
                    let v_hat = v[i] / b2t;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + *epsilon);
                }
            }
        }
    }
}
