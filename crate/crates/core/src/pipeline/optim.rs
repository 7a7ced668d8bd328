use serde::{Deserialize, Serialize};

use crate::nn::{ModelParams, ModelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

const MOMENTUM: f32 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f32 = 1e-8;

/// First-order update rules over [`ModelParams`].
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f32,
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, spec: &ModelSpec) -> Self {
        Self { kind, lr: lr as f32, m: ModelParams::zeros(spec), v: ModelParams::zeros(spec), t: 0 }
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.t += 1;
        let lr = self.lr;
        let kind = self.kind;
        let (c1, c2) = (1.0 - BETA1.powi(self.t), 1.0 - BETA2.powi(self.t));
        let iter = params.arrays_mut().zip(grad.arrays()).zip(self.m.arrays_mut().zip(self.v.arrays_mut()));
        for ((p, g), (m, v)) in iter {
            match kind {
                OptimizerKind::Sgd => {
                    for (p, g) in p.iter_mut().zip(g) {
                        *p -= lr * g;
                    }
                }
                OptimizerKind::Momentum => {
                    for ((p, g), m) in p.iter_mut().zip(g).zip(m.iter_mut()) {
                        *m = MOMENTUM * *m + g;
                        *p -= lr * *m;
                    }
                }
                OptimizerKind::Adam => {
                    let step = lr * (c2.sqrt() / c1) as f32;
                    for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = BETA1 as f32 * *m + (1.0 - BETA1 as f32) * g;
                        *v = BETA2 as f32 * *v + (1.0 - BETA2 as f32) * g * g;
                        *p -= step * *m / (v.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}
