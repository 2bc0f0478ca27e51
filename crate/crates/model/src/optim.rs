//! AdamW with decoupled weight decay. Moments live in the training dtype;
//! update order is the flat parameter order, so steps are reproducible.

use serde::{Deserialize, Serialize};

use crate::params::Tensors;
use crate::real::{rf, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied to matrices only (gains and biases skip it).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

pub struct AdamW<F> {
    pub cfg: AdamConfig,
    m: Vec<F>,
    v: Vec<F>,
    t: u64,
}

impl<F: Real> AdamW<F> {
    pub fn new(cfg: AdamConfig, n_params: usize) -> AdamW<F> {
        AdamW {
            cfg,
            m: vec![F::zero(); n_params],
            v: vec![F::zero(); n_params],
            t: 0,
        }
    }

    /// Drops all moments and the step count, as at a phase boundary.
    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = F::zero());
        self.v.iter_mut().for_each(|x| *x = F::zero());
        self.t = 0;
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut Tensors<F>, grads: &Tensors<F>, lr: f64) {
        assert_eq!(params.data.len(), self.m.len(), "optimizer size");
        assert_eq!(grads.data.len(), self.m.len(), "grad size");
        self.t += 1;
        let b1 = rf::<F>(self.cfg.beta1);
        let b2 = rf::<F>(self.cfg.beta2);
        let one = F::one();
        let bc1 = rf::<F>(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = rf::<F>(1.0 - self.cfg.beta2.powi(self.t as i32));
        let eps = rf::<F>(self.cfg.eps);
        let lr_f = rf::<F>(lr);
        let decay = rf::<F>(lr * self.cfg.weight_decay);
        // Walk tensors so decay can skip 1-D parameters.
        let layout = params.layout.clone();
        for e in &layout.entries {
            let decayed = e.shape.len() == 2 && self.cfg.weight_decay > 0.0;
            for i in e.offset..e.offset + e.len() {
                let gr = grads.data[i];
                self.m[i] = b1 * self.m[i] + (one - b1) * gr;
                self.v[i] = b2 * self.v[i] + (one - b2) * gr * gr;
                let mhat = self.m[i] / bc1;
                let vhat = self.v[i] / bc2;
                let mut p = params.data[i];
                p = p - lr_f * mhat / (vhat.sqrt() + eps);
                if decayed {
                    p = p - decay * params.data[i];
                }
                params.data[i] = p;
            }
        }
    }
}
