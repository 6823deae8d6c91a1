//! Seeded synthetic voxel clouds.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::VoxelCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudKind {
    /// Voxelized surface of a smoothly deformed sphere.
    Dense,
    /// Voxels scattered uniformly through the grid.
    Sparse,
}

impl fmt::Display for CloudKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CloudKind::Dense => "dense",
            CloudKind::Sparse => "sparse",
        })
    }
}

impl FromStr for CloudKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(CloudKind::Dense),
            "sparse" => Ok(CloudKind::Sparse),
            other => Err(Error::InvalidInput(format!("unknown cloud kind `{other}`"))),
        }
    }
}

/// Generate about `count` voxels on a grid of `bit_depth` bits.
pub fn synth_cloud(kind: CloudKind, bit_depth: u8, count: usize, seed: u64) -> Result<VoxelCloud> {
    if !(1..=21).contains(&bit_depth) {
        return Err(Error::InvalidInput(format!("bit depth {bit_depth} outside 1..=21")));
    }
    if count == 0 {
        return Err(Error::InvalidInput("point count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        CloudKind::Dense => Ok(dense(&mut rng, bit_depth, count)),
        CloudKind::Sparse => Ok(sparse(&mut rng, bit_depth, count)),
    }
}

fn dense(rng: &mut ChaCha8Rng, bit_depth: u8, count: usize) -> VoxelCloud {
    let side = (1u64 << bit_depth) as f64;
    // A deformed, voxelized sphere of radius R holds roughly 18 R^2 voxels.
    let r_max = 0.45 * (side - 1.0) / 1.3;
    let radius = (count as f64 / 18.0).sqrt().min(r_max);
    let center: [f64; 3] = std::array::from_fn(|_| side / 2.0 + rng.gen_range(-0.02..0.02) * side);
    let phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI));

    let samples = 6 * count.max(64);
    let mut seen = HashSet::with_capacity(count * 2);
    let mut voxels = Vec::with_capacity(count * 2);
    for _ in 0..samples {
        let cz: f64 = rng.gen_range(-1.0..1.0);
        let az: f64 = rng.gen_range(0.0..2.0 * PI);
        let sz = (1.0 - cz * cz).sqrt();
        let dir = [sz * az.cos(), sz * az.sin(), cz];
        let polar = cz.acos();
        let r = radius
            * (1.0
                + 0.15 * (3.0 * polar + phase[0]).sin() * (2.0 * az + phase[1]).cos()
                + 0.1 * (5.0 * az + phase[2]).sin());
        let v: [u32; 3] = std::array::from_fn(|i| {
            (center[i] + r * dir[i]).round().clamp(0.0, side - 1.0) as u32
        });
        if seen.insert(v) {
            voxels.push(v);
        }
    }
    VoxelCloud::new(bit_depth, voxels).expect("voxels lie on the grid")
}

fn sparse(rng: &mut ChaCha8Rng, bit_depth: u8, count: usize) -> VoxelCloud {
    let side = 1u32 << bit_depth;
    let target = (count as u64).min(1u64 << (3 * u32::from(bit_depth))) as usize;
    let mut seen = HashSet::with_capacity(target);
    let mut attempts = 0usize;
    while seen.len() < target && attempts < 20 * target {
        seen.insert([rng.gen_range(0..side), rng.gen_range(0..side), rng.gen_range(0..side)]);
        attempts += 1;
    }
    VoxelCloud::new(bit_depth, seen).expect("voxels lie on the grid")
}
