use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{PoseConfig, Vec3};
use crate::nn::{tanh_backward, tanh_inplace, Dense, Parameters};

/// Shared per-point MLP (3 -> h1 -> h2, tanh), channel-wise max pooling over
/// points, then a linear map to the embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointBackbone {
    pub l1: Dense,
    pub l2: Dense,
    pub out: Dense,
    /// Augmentation applied before encoding when a pose seed is given.
    pub pose: PoseConfig,
    pub frozen: bool,
}

/// What the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct PointCache {
    pooled: Vec<f64>,
    argmax: Vec<usize>,
}

impl PointBackbone {
    pub fn new<R: Rng>(hidden: (usize, usize), embed_dim: usize, pose: PoseConfig, rng: &mut R) -> Self {
        Self {
            l1: Dense::init(3, hidden.0, 1.0, rng),
            l2: Dense::init(hidden.0, hidden.1, 1.0, rng),
            out: Dense::init(hidden.1, embed_dim, 1.0, rng),
            pose,
            frozen: false,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.out.outputs
    }

    fn point_features(&self, p: &Vec3, a1: &mut [f64], a2: &mut [f64]) {
        self.l1.forward_into(p, a1);
        tanh_inplace(a1);
        self.l2.forward_into(a1, a2);
        tanh_inplace(a2);
    }

    pub fn forward(&self, points: &[Vec3]) -> (Vec<f64>, PointCache) {
        let h2 = self.l2.outputs;
        let mut a1 = vec![0.0; self.l1.outputs];
        let mut a2 = vec![0.0; h2];
        let mut pooled = vec![f64::NEG_INFINITY; h2];
        let mut argmax = vec![0; h2];
        for (i, p) in points.iter().enumerate() {
            self.point_features(p, &mut a1, &mut a2);
            for c in 0..h2 {
                if a2[c] > pooled[c] {
                    pooled[c] = a2[c];
                    argmax[c] = i;
                }
            }
        }
        let e = self.out.forward(&pooled);
        (e, PointCache { pooled, argmax })
    }

    /// Accumulates parameter gradients for `d loss / d embedding = grad_e`.
    /// Only points that win some pooled channel receive gradient.
    pub fn backward(&self, points: &[Vec3], cache: &PointCache, grad_e: &[f64], grad: &mut PointBackbone) {
        let h2 = self.l2.outputs;
        let mut g_pooled = vec![0.0; h2];
        self.out.backward(&cache.pooled, grad_e, &mut grad.out, Some(&mut g_pooled));

        let mut winners: Vec<(usize, usize)> = cache.argmax.iter().enumerate().map(|(c, &i)| (i, c)).collect();
        winners.sort_unstable();
        let mut a1 = vec![0.0; self.l1.outputs];
        let mut a2 = vec![0.0; h2];
        let mut g2 = vec![0.0; h2];
        let mut g1 = vec![0.0; self.l1.outputs];
        let mut k = 0;
        while k < winners.len() {
            let i = winners[k].0;
            g2.fill(0.0);
            while k < winners.len() && winners[k].0 == i {
                let c = winners[k].1;
                g2[c] += g_pooled[c];
                k += 1;
            }
            let p = &points[i];
            self.point_features(p, &mut a1, &mut a2);
            tanh_backward(&a2, &mut g2);
            self.l2.backward(&a1, &g2, &mut grad.l2, Some(&mut g1));
            tanh_backward(&a1, &mut g1);
            self.l1.backward(p, &g1, &mut grad.l1, None);
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.fill(0.0);
        g
    }
}

impl Parameters for PointBackbone {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.l1.visit_named("point.l1", f);
        self.l2.visit_named("point.l2", f);
        self.out.visit_named("point.out", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.l1.visit_named_mut("point.l1", f);
        self.l2.visit_named_mut("point.l2", f);
        self.out.visit_named_mut("point.out", f);
    }
}
