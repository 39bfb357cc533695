//! Dense layers with hand-written backward passes, and the parameter-visiting
//! trait used by the optimizer, checksums and checkpoints.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A set of named tensors. Gradient buffers reuse the parameter type, so
/// `visit` on a model and on its gradient walks tensors in the same order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, d| n += d.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, _, d| out.extend_from_slice(d));
        out
    }

    fn load_flat(&mut self, flat: &[f64]) {
        let mut pos = 0;
        self.visit_mut(&mut |_, d| {
            d.copy_from_slice(&flat[pos..pos + d.len()]);
            pos += d.len();
        });
        assert_eq!(pos, flat.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, v: f64) {
        self.visit_mut(&mut |_, d| d.fill(v));
    }

    /// `self += alpha * other`.
    fn axpy(&mut self, alpha: f64, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut pos = 0;
        self.visit_mut(&mut |_, d| {
            for (x, g) in d.iter_mut().zip(&flat[pos..]) {
                *x += alpha * g;
            }
            pos += d.len();
        });
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, d| ok &= d.iter().all(|x| x.is_finite()));
        ok
    }

    /// SHA-256 over tensor names, shapes and little-endian values.
    fn checksum(&self) -> String {
        let mut h = Sha256::new();
        self.visit(&mut |name, shape, d| {
            h.update(name.as_bytes());
            for &s in shape {
                h.update((s as u64).to_le_bytes());
            }
            for x in d {
                h.update(x.to_le_bytes());
            }
        });
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Affine layer `y = W x + b`.
///
/// Weights are stored input-major (`weight[i * outputs + o]`) so that zero
/// inputs, common in rendered images, can be skipped in both passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Gaussian weights with std `gain / sqrt(inputs)`, zero bias.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain / (inputs.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut layer = Self::zeros(inputs, outputs);
        for w in &mut layer.weight {
            *w = normal.sample(rng);
        }
        layer
    }

    pub fn identity(n: usize) -> Self {
        let mut layer = Self::zeros(n, n);
        for i in 0..n {
            layer.weight[i * n + i] = 1.0;
        }
        layer
    }

    pub fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        y.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.weight[i * self.outputs..(i + 1) * self.outputs];
                for (yo, w) in y.iter_mut().zip(row) {
                    *yo += xi * w;
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.outputs];
        self.forward_into(x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and, if requested, writes
    /// the input gradient.
    pub fn backward(&self, x: &[f64], grad_y: &[f64], grad: &mut Dense, grad_x: Option<&mut [f64]>) {
        for (b, g) in grad.bias.iter_mut().zip(grad_y) {
            *b += g;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &mut grad.weight[i * self.outputs..(i + 1) * self.outputs];
                for (w, g) in row.iter_mut().zip(grad_y) {
                    *w += xi * g;
                }
            }
        }
        if let Some(gx) = grad_x {
            for (i, gxi) in gx.iter_mut().enumerate() {
                let row = &self.weight[i * self.outputs..(i + 1) * self.outputs];
                *gxi = row.iter().zip(grad_y).map(|(w, g)| w * g).sum();
            }
        }
    }

    pub(crate) fn visit_named(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&format!("{prefix}.weight"), &[self.inputs, self.outputs], &self.weight);
        f(&format!("{prefix}.bias"), &[self.outputs], &self.bias);
    }

    pub(crate) fn visit_named_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }
}

impl Parameters for Dense {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.visit_named("dense", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.visit_named_mut("dense", f);
    }
}

pub fn tanh_inplace(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

/// Turns `grad` w.r.t. `tanh(z)` into grad w.r.t. `z`, given `a = tanh(z)`.
pub fn tanh_backward(a: &[f64], grad: &mut [f64]) {
    for (g, &ai) in grad.iter_mut().zip(a) {
        *g *= 1.0 - ai * ai;
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn dense_matches_direct_product() {
        let mut layer = Dense::zeros(2, 3);
        // W = [[1, 2], [3, 4], [5, 6]] stored input-major.
        layer.weight = vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0];
        layer.bias = vec![0.5, 0.0, -1.0];
        assert_eq!(layer.forward(&[1.0, -1.0]), vec![-0.5, -1.0, -2.0]);
    }

    #[test]
    fn dense_backward_finite_difference() {
        let mut rng = seed::rng(1);
        let layer = Dense::init(4, 3, 1.0, &mut rng);
        let x = vec![0.3, -0.7, 0.0, 1.2];
        let gy = vec![0.5, -1.0, 2.0];
        let loss = |l: &Dense, x: &[f64]| dot(&l.forward(x), &gy);
        let mut grad = Dense::zeros(4, 3);
        let mut gx = vec![0.0; 4];
        layer.backward(&x, &gy, &mut grad, Some(&mut gx));
        let h = 1e-6;
        let flat = layer.flatten();
        let gflat = grad.flatten();
        for k in 0..flat.len() {
            let (mut p, mut m) = (layer.clone(), layer.clone());
            let (mut fp, mut fm) = (flat.clone(), flat.clone());
            fp[k] += h;
            fm[k] -= h;
            p.load_flat(&fp);
            m.load_flat(&fm);
            let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!((fd - gflat[k]).abs() < 1e-6);
        }
        for i in 0..4 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn checksum_tracks_values() {
        let a = Dense::identity(3);
        let mut b = a.clone();
        assert_eq!(a.checksum(), b.checksum());
        b.weight[1] = 1e-300;
        assert_ne!(a.checksum(), b.checksum());
        assert_eq!(a.checksum().len(), 64);
    }
}
