//! Central-difference verification of the analytic gradients.
//!
//! Perturbing a parameter can flip a ReLU or move a max-pool winner, where the
//! loss is not differentiable; such samples are skipped and redrawn.

use ndarray::ArrayView2;
use rand::Rng;

use super::layers::cross_entropy;
use super::{Cache, Model, NnError, LAYER_NAMES};
use crate::seeding::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub checked: usize,
    /// Draws discarded because the perturbation crossed a non-differentiable point.
    pub skipped: usize,
    pub max_relative_error: f64,
}

impl LayerCheck {
    pub fn passes(&self, tolerance: f64, wanted: usize) -> bool {
        self.checked == wanted && self.max_relative_error < tolerance
    }
}

fn same_pattern(a: &Cache<f64>, b: &Cache<f64>) -> bool {
    let positive = |x: &ndarray::Array2<f64>, y: &ndarray::Array2<f64>| x.iter().zip(y).all(|(p, q)| (*p > 0.0) == (*q > 0.0));
    a.pool_arg == b.pool_arg && a.conv_out.iter().zip(&b.conv_out).all(|(x, y)| positive(x, y)) && positive(&a.hidden, &b.hidden)
}

/// Compares backprop gradients of the mean cross-entropy (no dropout) on the
/// standardised rows `x` against `(L(θ+h) − L(θ−h)) / 2h` for `per_layer`
/// randomly drawn weights or biases of every trainable layer.
pub fn check_gradients(
    model: &Model<f64>,
    x: ArrayView2<f64>,
    labels: &[usize],
    per_layer: usize,
    h: f64,
    seed: u64,
) -> Result<Vec<LayerCheck>, NnError> {
    let base = model.forward_cached(x, None)?;
    let grads = model.backward(&base, labels);
    let mut rng = rng_for(seed, "nn/gradcheck");
    let mut probe = model.clone();
    let mut out = Vec::new();

    for (layer, &name) in LAYER_NAMES.iter().enumerate() {
        let (gw, gb) = grads.layer(layer);
        let total = gw.len() + gb.len();
        let mut check = LayerCheck { layer: name, checked: 0, skipped: 0, max_relative_error: 0.0 };
        while check.checked < per_layer && check.skipped < 50 * per_layer {
            let idx = rng.gen_range(0..total);
            let analytic = if idx < gw.len() { gw[idx] } else { gb[idx - gw.len()] };
            let mut eval = |delta: f64| -> Result<(f64, bool), NnError> {
                let (w, b) = probe.params.layer_mut(layer);
                let slot = if idx < w.len() { &mut w[idx] } else { &mut b[idx - w.len()] };
                let original = *slot;
                *slot = original + delta;
                let cache = probe.forward_cached(x, None);
                let (w, b) = probe.params.layer_mut(layer);
                let slot = if idx < w.len() { &mut w[idx] } else { &mut b[idx - w.len()] };
                *slot = original;
                let cache = cache?;
                Ok((cross_entropy(&cache.probs, labels), same_pattern(&base, &cache)))
            };
            let (plus, smooth_plus) = eval(h)?;
            let (minus, smooth_minus) = eval(-h)?;
            if !(smooth_plus && smooth_minus) {
                check.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12);
            check.max_relative_error = check.max_relative_error.max(rel);
            check.checked += 1;
        }
        out.push(check);
    }
    Ok(out)
}
