use serde::{Deserialize, Serialize};

use crate::model::Parameters;

/// Adam with bias correction. Moments are stored per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Parameters,
    v: Parameters,
}

impl Adam {
    pub fn new(params: &Parameters, lr: f64) -> Self {
        Self::with_hyper(params, lr, 0.9, 0.98, 1e-9)
    }

    pub fn with_hyper(params: &Parameters, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &Parameters {
        &self.m
    }

    pub fn second_moment(&self) -> &Parameters {
        &self.v
    }

    /// Zeroes both moment estimates and the step counter.
    pub fn reset(&mut self) {
        self.t = 0;
        self.m = self.m.zeros_like();
        self.v = self.v.zeros_like();
    }

    pub fn step(&mut self, params: &mut Parameters, grad: &Parameters) {
        self.step_with_lr(params, grad, self.lr);
    }

    pub fn step_with_lr(&mut self, params: &mut Parameters, grad: &Parameters, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params.0.iter_mut() {
            let Some(g) = grad.get(name) else { continue };
            let m = self.m.get_mut(name).expect("moment shapes follow parameters");
            for (mi, gi) in m.data.iter_mut().zip(&g.data) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
            }
            let v = self.v.get_mut(name).expect("moment shapes follow parameters");
            for (vi, gi) in v.data.iter_mut().zip(&g.data) {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            }
            let m = &self.m.0[name];
            let v = &self.v.0[name];
            for ((x, mi), vi) in p.data.iter_mut().zip(&m.data).zip(&v.data) {
                *x -= lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
            }
        }
    }
}
