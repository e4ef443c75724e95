use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer over the parameters of one or more networks, always
/// passed in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Rescale the joint gradient to at most this global norm.
    pub max_grad_norm: Option<f64>,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            max_grad_norm: None,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::default(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Moment buffers, for checkpointing.
    pub fn state(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    pub fn restore(&mut self, step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) {
        self.step = step;
        self.m = m;
        self.v = v;
    }

    pub fn step(&mut self, nets: &mut [&mut Network]) -> Result<()> {
        let mut pairs: Vec<(&mut [f64], &[f64])> =
            nets.iter_mut().flat_map(|n| n.params_and_grads()).collect();
        if self.m.is_empty() {
            self.m = pairs.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != pairs.len()
            || self
                .m
                .iter()
                .zip(&pairs)
                .any(|(m, (p, _))| m.len() != p.len())
        {
            return Err(Error::Shape(
                "optimizer state does not match the parameters".into(),
            ));
        }
        let mut scale = 1.0;
        if let Some(max) = self.max_grad_norm {
            let norm = pairs
                .iter()
                .flat_map(|(_, g)| g.iter())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if norm > max {
                scale = max / norm;
            }
        }
        self.step += 1;
        let t = self.step as f64;
        for (i, (p, g)) in pairs.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            match self.kind {
                OptimizerKind::Sgd { momentum } => {
                    for j in 0..p.len() {
                        m[j] = momentum * m[j] + g[j] * scale;
                        p[j] -= self.lr * m[j];
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powf(t);
                    let c2 = 1.0 - beta2.powf(t);
                    for j in 0..p.len() {
                        let gj = g[j] * scale;
                        m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                        p[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
