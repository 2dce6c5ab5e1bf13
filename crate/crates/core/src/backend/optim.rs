//! AdamW and AdaFactor.
//!
//! Dense blocks are updated every step. The hashed projection is updated
//! lazily: only columns whose features occurred in the batch have their
//! weights (and AdamW momentum) touched. Its second moment is kept per
//! embedding row and shared by all feature columns, averaged over the
//! columns in the batch. With per-entry moments every feature would step at
//! the same rate however rarely it occurs, which lets one-off n-grams
//! memorize the training set.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    AdamW,
    Adafactor,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const WEIGHT_DECAY: f64 = 0.01;

const ADAFACTOR_EPS: f64 = 1e-30;
const ADAFACTOR_DECAY: f64 = -0.8;
const ADAFACTOR_CLIP: f64 = 1.0;

pub(crate) struct OptState {
    kind: Optimizer,
    t: u64,
    dense_m: Vec<Vec<f64>>,
    dense_v: Vec<Vec<f64>>,
    proj_m: Vec<f64>,
    proj_v: Vec<f64>,
    scratch: Vec<f64>,
}

impl OptState {
    /// `proj_rows` is the embedding dimension of the projection.
    pub fn new(kind: Optimizer, dense_sizes: &[usize], proj_len: usize, proj_rows: usize) -> Self {
        let zeros = |n: usize| vec![0.0; n];
        let with_momentum = kind == Optimizer::AdamW;
        OptState {
            kind,
            t: 0,
            dense_m: dense_sizes
                .iter()
                .map(|&n| zeros(if with_momentum { n } else { 0 }))
                .collect(),
            dense_v: dense_sizes.iter().map(|&n| zeros(n)).collect(),
            proj_m: zeros(if with_momentum { proj_len } else { 0 }),
            proj_v: zeros(proj_rows),
            scratch: Vec::new(),
        }
    }

    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn update_dense(&mut self, block: usize, params: &mut [f64], grads: &[f64], lr: f64) {
        match self.kind {
            Optimizer::AdamW => {
                let (bc1, bc2) = self.bias_corrections();
                adamw(
                    params,
                    grads,
                    &mut self.dense_m[block],
                    &mut self.dense_v[block],
                    lr,
                    bc1,
                    bc2,
                );
            }
            Optimizer::Adafactor => {
                let beta2 = self.adafactor_beta2();
                let v = &mut self.dense_v[block];
                self.scratch.clear();
                for (g, v) in grads.iter().zip(v.iter_mut()) {
                    *v = beta2 * *v + (1.0 - beta2) * (g * g + ADAFACTOR_EPS);
                    self.scratch.push(g / sqrt(*v));
                }
                let scale = clip_scale(&self.scratch, params.len());
                for (p, u) in params.iter_mut().zip(&self.scratch) {
                    *p -= lr * u * scale;
                }
            }
        }
    }

    /// `proj` is column-major with `dim` rows; `grads` maps touched columns
    /// to their gradient.
    pub fn update_proj(
        &mut self,
        proj: &mut [f64],
        grads: &BTreeMap<u32, Vec<f64>>,
        dim: usize,
        lr: f64,
    ) {
        match self.kind {
            Optimizer::AdamW => {
                let (bc1, bc2) = self.bias_corrections();
                let n = grads.len().max(1) as f64;
                for i in 0..dim {
                    let sq: f64 = grads.values().map(|g| g[i] * g[i]).sum::<f64>() / n;
                    self.proj_v[i] = BETA2 * self.proj_v[i] + (1.0 - BETA2) * sq;
                }
                for (&col, g) in grads {
                    let base = col as usize * dim;
                    for i in 0..dim {
                        let m = &mut self.proj_m[base + i];
                        *m = BETA1 * *m + (1.0 - BETA1) * g[i];
                        let p = &mut proj[base + i];
                        *p -= lr * WEIGHT_DECAY * *p;
                        *p -= lr * (*m / bc1) / (sqrt(self.proj_v[i] / bc2) + ADAM_EPS);
                    }
                }
            }
            Optimizer::Adafactor => {
                let beta2 = self.adafactor_beta2();
                let n = grads.len().max(1) as f64;
                for i in 0..dim {
                    let sq: f64 = grads.values().map(|g| g[i] * g[i]).sum::<f64>() / n;
                    self.proj_v[i] = beta2 * self.proj_v[i] + (1.0 - beta2) * (sq + ADAFACTOR_EPS);
                }
                self.scratch.clear();
                for g in grads.values() {
                    for (i, g) in g.iter().enumerate() {
                        self.scratch.push(g / sqrt(self.proj_v[i]));
                    }
                }
                // Untouched entries have zero update, so the RMS is taken over
                // the whole block.
                let scale = clip_scale(&self.scratch, proj.len());
                let mut updates = self.scratch.iter();
                for &col in grads.keys() {
                    let base = col as usize * dim;
                    for p in &mut proj[base..base + dim] {
                        *p -= lr * updates.next().expect("one update per entry") * scale;
                    }
                }
            }
        }
    }

    fn bias_corrections(&self) -> (f64, f64) {
        let t = self.t as f64;
        (1.0 - libm::pow(BETA1, t), 1.0 - libm::pow(BETA2, t))
    }

    fn adafactor_beta2(&self) -> f64 {
        1.0 - libm::pow(self.t as f64, ADAFACTOR_DECAY)
    }
}

fn adamw(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
        params[i] -= lr * WEIGHT_DECAY * params[i];
        params[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + ADAM_EPS);
    }
}

fn clip_scale(updates: &[f64], numel: usize) -> f64 {
    let rms = sqrt(updates.iter().map(|u| u * u).sum::<f64>() / numel.max(1) as f64);
    1.0 / (rms / ADAFACTOR_CLIP).max(1.0)
}
