//! Adaptive root-mean-square gradient scaling with global-norm clipping.
//!
//! Per-parameter step: `lr * g / sqrt(mavg(g^2) + 1e-8)` with a decay-0.9
//! moving average. Gradients are clipped to a global norm of 5.0 before
//! the average updates.

use crate::ad::Arr;
use serde::{Deserialize, Serialize};

pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    /// Moving average of squared gradients, one slot per parameter tensor.
    pub cache: Vec<Arr>,
}

impl RmsProp {
    pub fn new(lr: f64) -> Self {
        RmsProp {
            lr,
            decay: 0.9,
            eps: 1e-8,
            clip_norm: Some(DEFAULT_CLIP_NORM),
            cache: Vec::new(),
        }
    }

    /// Applies one update. `params` and `grads` must stay aligned across
    /// calls; the squared-gradient cache is allocated on first use.
    pub fn step(&mut self, params: &mut [&mut Arr], grads: &[Arr]) {
        assert_eq!(params.len(), grads.len());
        if self.cache.is_empty() {
            self.cache = params.iter().map(|p| Arr::zeros(p.dim())).collect();
        }
        assert_eq!(self.cache.len(), params.len());

        let scale = match self.clip_norm {
            Some(max) => {
                let total: f64 = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum();
                let norm = total.sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.cache.iter_mut()) {
            assert_eq!(p.dim(), g.dim());
            for ((pe, &ge), ve) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                let gc = ge * scale;
                *ve = self.decay * *ve + (1.0 - self.decay) * gc * gc;
                *pe -= self.lr * gc / (*ve + self.eps).sqrt();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Arr::from_elem((2, 2), 1.5);
        let before = p.clone();
        let mut opt = RmsProp::new(0.01);
        opt.step(&mut [&mut p], &[Arr::zeros((2, 2))]);
        assert_eq!(p, before);
    }

    #[test]
    fn update_matches_contract_formula() {
        let mut p = Arr::from_elem((1, 1), 2.0);
        let g = Arr::from_elem((1, 1), 0.3);
        let mut opt = RmsProp::new(0.1);
        opt.clip_norm = None;
        opt.step(&mut [&mut p], &[g]);
        let v: f64 = 0.1 * 0.3 * 0.3;
        let expected = 2.0 - 0.1 * 0.3 / (v + 1e-8).sqrt();
        assert!((p[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut p1 = Arr::zeros((1, 2));
        let mut p2 = Arr::zeros((1, 1));
        let g1 = Arr::from_elem((1, 2), 30.0);
        let g2 = Arr::from_elem((1, 1), 40.0);
        // global norm = sqrt(900+900+1600) ≈ 58.3 -> scaled to 5.
        let mut opt = RmsProp::new(1e-3);
        opt.step(&mut [&mut p1, &mut p2], &[g1.clone(), g2.clone()]);
        let norm = (900.0f64 + 900.0 + 1600.0).sqrt();
        let scale = 5.0 / norm;
        let gc = 30.0 * scale;
        let v = 0.1 * gc * gc;
        let expected = -1e-3 * gc / (v + 1e-8).sqrt();
        assert!((p1[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut p = Arr::from_elem((1, 1), 3.0);
        let mut opt = RmsProp::new(0.05);
        for _ in 0..500 {
            let g = Arr::from_elem((1, 1), 2.0 * p[[0, 0]]);
            opt.step(&mut [&mut p], &[g]);
        }
        assert!(p[[0, 0]].abs() < 0.05, "got {}", p[[0, 0]]);
    }
}
