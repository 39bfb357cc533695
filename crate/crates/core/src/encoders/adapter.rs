use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{tanh_backward, tanh_inplace, Dense, Parameters};

/// `y = S x + U tanh(D x)` (all with biases). Initialized with `S = I` and
/// `U = 0`, so a fresh adapter is the identity map.
///
/// One instance serves both the image path and the point path of a task
/// stage; `shared_id` names that instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub skip: Dense,
    pub down: Dense,
    pub up: Dense,
    pub shared_id: String,
}

#[derive(Debug, Clone)]
pub struct AdapterCache {
    hidden: Vec<f64>,
}

impl Adapter {
    pub fn identity<R: Rng>(dim: usize, hidden: usize, shared_id: impl Into<String>, rng: &mut R) -> Self {
        Self {
            skip: Dense::identity(dim),
            down: Dense::init(dim, hidden, 1.0, rng),
            up: Dense::zeros(hidden, dim),
            shared_id: shared_id.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.skip.inputs
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, AdapterCache) {
        let mut y = self.skip.forward(x);
        let mut hidden = self.down.forward(x);
        tanh_inplace(&mut hidden);
        for (yo, r) in y.iter_mut().zip(self.up.forward(&hidden)) {
            *yo += r;
        }
        (y, AdapterCache { hidden })
    }

    /// Returns the input gradient and accumulates parameter gradients.
    pub fn backward(&self, x: &[f64], cache: &AdapterCache, grad_y: &[f64], grad: &mut Adapter) -> Vec<f64> {
        let d = self.dim();
        let mut gx = vec![0.0; d];
        self.skip.backward(x, grad_y, &mut grad.skip, Some(&mut gx));
        let mut gh = vec![0.0; self.down.outputs];
        self.up.backward(&cache.hidden, grad_y, &mut grad.up, Some(&mut gh));
        tanh_backward(&cache.hidden, &mut gh);
        let mut gx2 = vec![0.0; d];
        self.down.backward(x, &gh, &mut grad.down, Some(&mut gx2));
        for (a, b) in gx.iter_mut().zip(gx2) {
            *a += b;
        }
        gx
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.fill(0.0);
        g
    }
}

impl Parameters for Adapter {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.skip.visit_named("adapter.skip", f);
        self.down.visit_named("adapter.down", f);
        self.up.visit_named("adapter.up", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.skip.visit_named_mut("adapter.skip", f);
        self.down.visit_named_mut("adapter.down", f);
        self.up.visit_named_mut("adapter.up", f);
    }
}
