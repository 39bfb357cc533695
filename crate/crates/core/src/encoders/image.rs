use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{tanh_backward, tanh_inplace, Dense, Parameters};
use crate::rrm::{GrayImage, MultiViewImage};

/// Per view: average-pool by `pool`, flatten, one tanh hidden layer. The
/// hidden activations are averaged over views and mapped linearly to the
/// embedding, which equals averaging per-view embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageBackbone {
    pub image_size: usize,
    pub pool: usize,
    pub l1: Dense,
    pub out: Dense,
    pub frozen: bool,
}

#[derive(Debug, Clone)]
pub struct ImageCache {
    inputs: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    mean_hidden: Vec<f64>,
}

impl ImageBackbone {
    pub fn new<R: Rng>(image_size: usize, pool: usize, hidden: usize, embed_dim: usize, rng: &mut R) -> Result<Self> {
        if pool == 0 || !image_size.is_multiple_of(pool) {
            return Err(Error::BadConfig(format!(
                "pool factor {pool} must divide image size {image_size}"
            )));
        }
        let side = image_size / pool;
        Ok(Self {
            image_size,
            pool,
            l1: Dense::init(side * side, hidden, 1.0, rng),
            out: Dense::init(hidden, embed_dim, 1.0, rng),
            frozen: false,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.out.outputs
    }

    fn pooled_input(&self, view: &GrayImage) -> Vec<f64> {
        let side = self.image_size / self.pool;
        let norm = 1.0 / (255.0 * (self.pool * self.pool) as f64);
        let mut x = vec![0.0; side * side];
        for r in 0..self.image_size {
            let row = &view.levels[r * self.image_size..(r + 1) * self.image_size];
            let dst = &mut x[(r / self.pool) * side..(r / self.pool + 1) * side];
            for (c, &l) in row.iter().enumerate() {
                dst[c / self.pool] += l as f64;
            }
        }
        for v in &mut x {
            *v *= norm;
        }
        x
    }

    pub fn check(&self, views: &MultiViewImage) -> Result<()> {
        if views.views.is_empty() {
            return Err(Error::Empty);
        }
        for v in &views.views {
            if v.size != self.image_size || v.levels.len() != v.size * v.size {
                return Err(Error::ShapeMismatch {
                    expected: self.image_size,
                    got: v.size,
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, views: &MultiViewImage) -> Result<(Vec<f64>, ImageCache)> {
        self.check(views)?;
        let m = views.views.len() as f64;
        let mut inputs = Vec::with_capacity(views.views.len());
        let mut hidden = Vec::with_capacity(views.views.len());
        let mut mean_hidden = vec![0.0; self.l1.outputs];
        for view in &views.views {
            let x = self.pooled_input(view);
            let mut a = self.l1.forward(&x);
            tanh_inplace(&mut a);
            for (s, v) in mean_hidden.iter_mut().zip(&a) {
                *s += v / m;
            }
            inputs.push(x);
            hidden.push(a);
        }
        let e = self.out.forward(&mean_hidden);
        Ok((
            e,
            ImageCache {
                inputs,
                hidden,
                mean_hidden,
            },
        ))
    }

    pub fn backward(&self, cache: &ImageCache, grad_e: &[f64], grad: &mut ImageBackbone) {
        let m = cache.inputs.len() as f64;
        let mut g_mean = vec![0.0; self.l1.outputs];
        self.out.backward(&cache.mean_hidden, grad_e, &mut grad.out, Some(&mut g_mean));
        for (x, a) in cache.inputs.iter().zip(&cache.hidden) {
            let mut g = g_mean.iter().map(|v| v / m).collect::<Vec<_>>();
            tanh_backward(a, &mut g);
            self.l1.backward(x, &g, &mut grad.l1, None);
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.fill(0.0);
        g
    }
}

impl Parameters for ImageBackbone {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.l1.visit_named("image.l1", f);
        self.out.visit_named("image.out", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.l1.visit_named_mut("image.l1", f);
        self.out.visit_named_mut("image.out", f);
    }
}
