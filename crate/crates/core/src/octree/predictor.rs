//! Fixed-weight occupancy predictor.
//!
//! A logistic model over a handful of context features, with weights drawn
//! once from a seeded generator. Encoder and decoder build identical
//! predictors; any cross-platform difference is injected separately.

use crate::detmath;
use crate::platform_sim::{splitmix64, unit_f64};

pub const PREDICTOR_SEED: u64 = 0xC0DE_C0DE;
const FEATURES: usize = 8;

/// Everything the predictor may look at when coding one occupancy bit.
///
/// Only nodes above the current level, and earlier octants of the same
/// parent, contribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OctreeContext {
    /// Level of the child being coded, `1..=n`.
    pub depth: u8,
    pub octant: u8,
    /// Occupied siblings among octants `< octant`.
    pub coded_siblings: u8,
    /// Occupied children of the grandparent (0 at depth 1).
    pub parent_siblings: u8,
    /// Whether the grandparent's child in this octant is occupied.
    pub grandparent_bit: bool,
    /// Parent cell center, normalized to `(0, 1)` per axis.
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    bit_depth: u8,
    weights: [f64; FEATURES],
    bias: f64,
}

impl Predictor {
    pub fn new(bit_depth: u8) -> Self {
        Self::with_seed(bit_depth, PREDICTOR_SEED)
    }

    pub fn with_seed(bit_depth: u8, seed: u64) -> Self {
        let mut state = seed;
        let mut draw = || {
            let r = splitmix64(state);
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            -2.0 + 4.0 * unit_f64(r)
        };
        let mut weights = [0.0; FEATURES];
        for w in &mut weights {
            *w = draw();
        }
        let bias = draw();
        Self { bit_depth, weights, bias }
    }

    /// Weights in feature order; see [`Predictor::features`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn features(&self, ctx: &OctreeContext) -> [f64; FEATURES] {
        [
            f64::from(ctx.depth) / f64::from(self.bit_depth),
            f64::from(ctx.octant) / 7.0,
            f64::from(ctx.coded_siblings) / 7.0,
            f64::from(ctx.parent_siblings) / 8.0,
            if ctx.grandparent_bit { 1.0 } else { 0.0 },
            ctx.position[0],
            ctx.position[1],
            ctx.position[2],
        ]
    }

    /// Probability that the child is occupied, in `[0, 1]`.
    pub fn predict(&self, ctx: &OctreeContext) -> f64 {
        let f = self.features(ctx);
        let z = self.weights.iter().zip(&f).fold(self.bias, |acc, (w, x)| acc + w * x);
        (1.0 / (1.0 + detmath::exp(-z))).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = Predictor::new(10);
        let b = Predictor::new(10);
        assert_eq!(a, b);
        assert_ne!(a, Predictor::with_seed(10, 1));
        assert!(a.weights.iter().all(|w| (-2.0..2.0).contains(w)));
        for d in 1..=10u8 {
            for o in 0..8u8 {
                let ctx = OctreeContext {
                    depth: d,
                    octant: o,
                    coded_siblings: o / 2,
                    parent_siblings: 3,
                    grandparent_bit: o % 2 == 0,
                    position: [0.3, 0.6, 0.9],
                };
                let p = a.predict(&ctx);
                assert!((0.0..=1.0).contains(&p));
                assert_eq!(p.to_bits(), b.predict(&ctx).to_bits());
            }
        }
    }
}
