use serde::{Deserialize, Serialize};

use super::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Coupled L2 penalty, added to the gradient before the moment updates.
    #[serde(default)]
    pub l2: f64,
    /// `(iteration, factor)`: once `iteration` steps have been taken the
    /// learning rate is multiplied by `factor`.
    #[serde(default)]
    pub schedule: Vec<(u64, f64)>,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            l2: 0.0,
            schedule: Vec::new(),
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    cfg: AdamConfig,
    m: Vec<F>,
    v: Vec<F>,
    step: u64,
    lr: f64,
}

impl<F: Real> Adam<F> {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        assert!(cfg.learning_rate > 0.0, "learning rate must be positive");
        let lr = cfg.learning_rate;
        Self {
            cfg,
            m: vec![F::zero(); n_params],
            v: vec![F::zero(); n_params],
            step: 0,
            lr,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Learning rate that the next step will use.
    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, params: &mut [F], grads: &[F]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let step_size = F::of(self.lr / bc1);
        let inv_bc2 = F::of(1.0 / bc2);
        let (fb1, fb2) = (F::of(b1), F::of(b2));
        let (ob1, ob2) = (F::of(1.0 - b1), F::of(1.0 - b2));
        let eps = F::of(self.cfg.eps);
        let l2 = F::of(self.cfg.l2);
        for i in 0..params.len() {
            let g = grads[i] + l2 * params[i];
            self.m[i] = fb1 * self.m[i] + ob1 * g;
            self.v[i] = fb2 * self.v[i] + ob2 * g * g;
            let denom = (self.v[i] * inv_bc2).sqrt() + eps;
            params[i] -= step_size * self.m[i] / denom;
        }
        for &(at, factor) in &self.cfg.schedule {
            if at == self.step {
                self.lr *= factor;
            }
        }
    }
}
