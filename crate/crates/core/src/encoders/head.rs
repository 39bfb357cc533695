use serde::{Deserialize, Serialize};

use crate::nn::{dot, Parameters};

/// Bias-free linear classifier `logits = W^T e`, `W` of shape `dim x classes`.
/// Columns are stored contiguously and appended as classes arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub dim: usize,
    pub n_classes: usize,
    pub columns: Vec<f64>,
}

impl Head {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            n_classes: 0,
            columns: Vec::new(),
        }
    }

    /// Appends `k` zero-initialized columns.
    pub fn grow(&mut self, k: usize) {
        self.n_classes += k;
        self.columns.resize(self.n_classes * self.dim, 0.0);
    }

    pub fn column(&self, class: usize) -> &[f64] {
        &self.columns[class * self.dim..(class + 1) * self.dim]
    }

    pub fn column_mut(&mut self, class: usize) -> &mut [f64] {
        &mut self.columns[class * self.dim..(class + 1) * self.dim]
    }

    pub fn logits(&self, e: &[f64]) -> Vec<f64> {
        (0..self.n_classes).map(|k| dot(self.column(k), e)).collect()
    }

    /// Returns the embedding gradient and accumulates into `grad.columns`.
    pub fn backward(&self, e: &[f64], grad_logits: &[f64], grad: &mut Head) -> Vec<f64> {
        let mut ge = vec![0.0; self.dim];
        for (k, &g) in grad_logits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (gc, &x) in grad.column_mut(k).iter_mut().zip(e) {
                *gc += g * x;
            }
            for (gi, &w) in ge.iter_mut().zip(self.column(k)) {
                *gi += g * w;
            }
        }
        ge
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dim: self.dim,
            n_classes: self.n_classes,
            columns: vec![0.0; self.columns.len()],
        }
    }
}

impl Parameters for Head {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("head.columns", &[self.n_classes, self.dim], &self.columns);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("head.columns", &mut self.columns);
    }
}
