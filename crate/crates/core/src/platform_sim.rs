//! Bounded-error stand-in for a foreign decoder platform.
//!
//! A [`Perturbation`] adds a deviation of at most `e_max` to each critical
//! value the decoder computes. Deviations come from a counter-based
//! generator: the `i`-th deviation depends only on `(seed, i)`, so decode
//! order and encoder-side code paths can never shift the sequence.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quantizer::QuantGrid;

/// Maximum error measured for occupancy probabilities between two GPUs.
pub const PCC_GPU_E_MAX: f64 = 5e-7;
/// Maximum error measured for hyperprior scales between two GPUs.
pub const IMAGE_GPU_E_MAX: f64 = 8e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbDist {
    None,
    Uniform,
    /// Push each value by `e_max` toward its nearest grid boundary.
    Adversarial,
}

impl fmt::Display for PerturbDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbDist::None => "none",
            PerturbDist::Uniform => "uniform",
            PerturbDist::Adversarial => "adversarial",
        })
    }
}

impl FromStr for PerturbDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PerturbDist::None),
            "uniform" => Ok(PerturbDist::Uniform),
            "adversarial" | "adv" => Ok(PerturbDist::Adversarial),
            other => Err(Error::InvalidInput(format!("unknown perturbation `{other}`"))),
        }
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform double in `[0, 1)` with 53 random bits.
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub e_max: f64,
    pub dist: PerturbDist,
    pub seed: u64,
    pub counter: u64,
}

impl Perturbation {
    pub fn new(e_max: f64, dist: PerturbDist, seed: u64) -> Result<Self> {
        if !(e_max.is_finite() && e_max >= 0.0) {
            return Err(Error::InvalidInput(format!("e_max must be finite and >= 0, got {e_max}")));
        }
        Ok(Self { e_max, dist, seed, counter: 0 })
    }

    pub fn none() -> Self {
        Self { e_max: 0.0, dist: PerturbDist::None, seed: 0, counter: 0 }
    }

    pub fn pcc_gpu(seed: u64) -> Self {
        Self { e_max: PCC_GPU_E_MAX, dist: PerturbDist::Uniform, seed, counter: 0 }
    }

    pub fn image_gpu(seed: u64) -> Self {
        Self { e_max: IMAGE_GPU_E_MAX, dist: PerturbDist::Uniform, seed, counter: 0 }
    }

    /// Deviation in `[-e_max, e_max]` for draw number `index`.
    pub fn delta_at(&self, index: u64) -> f64 {
        let bits = splitmix64(self.seed ^ splitmix64(index));
        self.e_max * (2.0 * unit_f64(bits) - 1.0)
    }

    /// Perturb `v` as draw number `index` without touching the counter.
    pub fn perturb_at(&self, index: u64, v: f64, grid: &QuantGrid) -> f64 {
        if !v.is_finite() {
            return v;
        }
        let shifted = match self.dist {
            PerturbDist::None => return v,
            PerturbDist::Uniform => v + self.delta_at(index),
            PerturbDist::Adversarial => match grid.round_b(grid.clip(v)) {
                Ok(b) if b > v => v + self.e_max,
                Ok(_) => v - self.e_max,
                Err(_) => v,
            },
        };
        grid.clip(self.bounded(v, shifted))
    }

    /// Perturb `v` with the next draw of the sequence.
    pub fn perturb(&mut self, v: f64, grid: &QuantGrid) -> f64 {
        let out = self.perturb_at(self.counter, v, grid);
        self.counter += 1;
        out
    }

    // Rounding of `v + delta` can overshoot `e_max` by an ulp; step back.
    fn bounded(&self, v: f64, mut out: f64) -> f64 {
        while (out - v).abs() > self.e_max {
            out = if out > v { next_down(out) } else { next_up(out) };
        }
        out
    }
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        return f64::from_bits(1);
    }
    if x > 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}
