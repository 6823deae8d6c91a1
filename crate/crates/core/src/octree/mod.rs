//! Octree occupancy codec with safeguarded occupancy probabilities.
//!
//! Nodes of each level are coded in eight passes, one per octant. Within a
//! pass, parents are visited in Morton order. The predictor for a child may
//! use anything above its level plus the already coded octants of its own
//! parent, which keeps every context available to the decoder.

pub mod ply;
pub mod predictor;
pub mod synth;

use crate::container::{GridDesc, GuardedStream, PayloadHeader};
use crate::entropy::{prob_to_p16, RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};
use crate::platform_sim::Perturbation;
use crate::quantizer::{GridKind, QuantGrid};
use crate::safeguard::{EdgeClip, GuardConfig, GuardMode};
use crate::session::{DecodeSession, EncodeSession, GuardSection, Protection};

pub use predictor::{OctreeContext, Predictor};
pub use synth::{synth_cloud, CloudKind};

pub const MAX_BIT_DEPTH: u8 = 21;

fn split3(v: u32) -> u64 {
    let mut x = u64::from(v) & 0x1f_ffff;
    x = (x | x << 32) & 0x001f_0000_0000_ffff;
    x = (x | x << 16) & 0x001f_0000_ff00_00ff;
    x = (x | x << 8) & 0x100f_00f0_0f00_f00f;
    x = (x | x << 4) & 0x10c3_0c30_c30c_30c3;
    x = (x | x << 2) & 0x1249_2492_4924_9249;
    x
}

fn compact3(v: u64) -> u32 {
    let mut x = v & 0x1249_2492_4924_9249;
    x = (x | x >> 2) & 0x10c3_0c30_c30c_30c3;
    x = (x | x >> 4) & 0x100f_00f0_0f00_f00f;
    x = (x | x >> 8) & 0x001f_0000_ff00_00ff;
    x = (x | x >> 16) & 0x001f_0000_0000_ffff;
    x = (x | x >> 32) & 0x1f_ffff;
    x as u32
}

/// Interleave coordinates with `x` in the most significant bit of each triple.
pub fn morton_encode([x, y, z]: [u32; 3]) -> u64 {
    split3(x) << 2 | split3(y) << 1 | split3(z)
}

pub fn morton_decode(code: u64) -> [u32; 3] {
    [compact3(code >> 2), compact3(code >> 1), compact3(code)]
}

/// A set of occupied voxels on a `2^n` grid, kept in Morton order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelCloud {
    bit_depth: u8,
    codes: Vec<u64>,
}

impl VoxelCloud {
    /// Duplicate voxels are merged.
    pub fn new(bit_depth: u8, voxels: impl IntoIterator<Item = [u32; 3]>) -> Result<Self> {
        check_depth(bit_depth)?;
        let side = 1u32 << bit_depth;
        let mut codes = Vec::new();
        for v in voxels {
            if v.iter().any(|&c| c >= side) {
                return Err(Error::InvalidInput(format!(
                    "voxel {v:?} outside a {bit_depth}-bit grid"
                )));
            }
            codes.push(morton_encode(v));
        }
        codes.sort_unstable();
        codes.dedup();
        Ok(Self { bit_depth, codes })
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    pub fn voxels(&self) -> impl Iterator<Item = [u32; 3]> + '_ {
        self.codes.iter().map(|&c| morton_decode(c))
    }
}

fn check_depth(bit_depth: u8) -> Result<()> {
    if (1..=MAX_BIT_DEPTH).contains(&bit_depth) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("bit depth {bit_depth} outside 1..={MAX_BIT_DEPTH}")))
    }
}

/// Scale points uniformly into `[0, 2^n - 1]` and round to voxels.
pub fn voxelize(points: &[[f64; 3]], bit_depth: u8) -> Result<VoxelCloud> {
    check_depth(bit_depth)?;
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to voxelize".into()));
    }
    if points.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let extent = (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    let top = ((1u64 << bit_depth) - 1) as f64;
    let scale = if extent > 0.0 { top / extent } else { 0.0 };
    VoxelCloud::new(
        bit_depth,
        points.iter().map(|p| std::array::from_fn(|i| ((p[i] - lo[i]) * scale).round().min(top) as u32)),
    )
}

/// Guard configuration for occupancy probabilities on the grid `q = 1/k`.
pub fn octree_config(k: u32, epsilon: f64, mode: GuardMode) -> Result<GuardConfig> {
    GuardConfig::new(
        QuantGrid::reciprocal(k)?,
        epsilon,
        mode,
        Some(EdgeClip { lo: 0.0, hi: Some(1.0) }),
    )
}

fn reciprocal_k(cfg: &GuardConfig) -> Option<u32> {
    let GridKind::Uniform { step, offset } = *cfg.grid().kind() else {
        return None;
    };
    let k = (1.0 / step).round();
    let clip = Some(EdgeClip { lo: 0.0, hi: Some(1.0) });
    let domain = cfg.grid().domain().map(|d| (d.lo, d.hi));
    (offset == 0.0
        && k >= 1.0
        && k <= f64::from(u32::MAX)
        && 1.0 / k == step
        && domain == Some((0.0, 1.0))
        && cfg.edge_clip() == clip)
        .then_some(k as u32)
}

/// Rebuild the guard configuration an octree stream was written with.
pub fn config_from_stream(stream: &GuardedStream) -> Result<GuardConfig> {
    let GridDesc::Uniform { step, offset } = stream.grid else {
        return Err(Error::MalformedStream("octree stream without a uniform grid".into()));
    };
    let k = (1.0 / step).round();
    if offset != 0.0 || !(1.0..=f64::from(u32::MAX)).contains(&k) || 1.0 / k != step {
        return Err(Error::MalformedStream(format!("octree grid q={step}, s={offset} is not 1/k")));
    }
    octree_config(k as u32, stream.epsilon, stream.mode)
}

/// One coded occupancy bit, as seen by the predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub index: u64,
    /// Morton code of the parent at level `depth - 1`.
    pub parent: u64,
    pub context: OctreeContext,
}

/// Occupancy bytes per level: entry `d` holds one byte per node of level `d`.
fn occupancy_levels(cloud: &VoxelCloud) -> Vec<Vec<u8>> {
    let n = usize::from(cloud.bit_depth);
    let mut out = vec![Vec::new(); n];
    let mut level = cloud.codes.clone();
    for d in (0..n).rev() {
        let mut parents = Vec::new();
        let mut occ: Vec<u8> = Vec::new();
        for &c in &level {
            let p = c >> 3;
            if parents.last() != Some(&p) {
                parents.push(p);
                occ.push(0);
            }
            *occ.last_mut().expect("pushed") |= 1 << (c & 7);
        }
        out[d] = occ;
        level = parents;
    }
    out
}

/// Walk the tree level by level, asking `code_bit` for every occupancy bit.
/// Returns the leaf codes.
fn traverse(
    bit_depth: u8,
    max_nodes: usize,
    mut trace: Option<&mut Vec<TraceEntry>>,
    mut code_bit: impl FnMut(usize, usize, u8, f64) -> Result<bool>,
) -> Result<Vec<u64>> {
    let predictor = Predictor::new(bit_depth);
    let mut parents: Vec<u64> = vec![0];
    let mut grand_occ: Vec<u8> = vec![0];
    let mut index = 0u64;
    for depth in 1..=bit_depth {
        let scale = 1.0 / (1u64 << (depth - 1)) as f64;
        let positions: Vec<[f64; 3]> = parents
            .iter()
            .map(|&p| morton_decode(p).map(|c| (f64::from(c) + 0.5) * scale))
            .collect();
        let mut occ = vec![0u8; parents.len()];
        for octant in 0..8u8 {
            let below = (1u8 << octant) - 1;
            for j in 0..parents.len() {
                let ctx = OctreeContext {
                    depth,
                    octant,
                    coded_siblings: (occ[j] & below).count_ones() as u8,
                    parent_siblings: grand_occ[j].count_ones() as u8,
                    grandparent_bit: grand_occ[j] >> octant & 1 == 1,
                    position: positions[j],
                };
                let p = predictor.predict(&ctx);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(TraceEntry { index, parent: parents[j], context: ctx });
                }
                index += 1;
                if code_bit(usize::from(depth - 1), j, octant, p)? {
                    occ[j] |= 1 << octant;
                }
            }
        }
        let mut children = Vec::new();
        let mut child_grand = Vec::new();
        for (j, &p) in parents.iter().enumerate() {
            for o in 0..8u64 {
                if occ[j] >> o & 1 == 1 {
                    children.push(p << 3 | o);
                    child_grand.push(occ[j]);
                }
            }
            if children.len() > max_nodes {
                return Err(Error::MalformedStream(format!(
                    "level {depth} has more nodes than the declared {max_nodes} points"
                )));
            }
        }
        parents = children;
        grand_occ = child_grand;
    }
    Ok(parents)
}

fn encode_inner(
    cloud: &VoxelCloud,
    cfg: &GuardConfig,
    protection: Protection,
    trace: Option<&mut Vec<TraceEntry>>,
) -> Result<GuardedStream> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("cannot encode an empty cloud".into()));
    }
    if reciprocal_k(cfg).is_none() {
        return Err(Error::ConfigRejected(
            "octree probabilities need a 1/k grid on [0, 1] with both edges clipped".into(),
        ));
    }
    let truth = occupancy_levels(cloud);
    let mut session = EncodeSession::new(cfg, protection);
    let mut enc = RangeEncoder::new();
    let leaves = traverse(cloud.bit_depth, cloud.len(), trace, |level, j, octant, p| {
        let bit = truth[level][j] >> octant & 1 == 1;
        let v = session.value(p)?;
        enc.encode_bit(bit, prob_to_p16(v)?);
        Ok(bit)
    })?;
    debug_assert_eq!(leaves, cloud.codes);
    let GuardSection { p0_q16, flag_count, bytes } = session.finish()?;
    let GridKind::Uniform { step, offset } = *cfg.grid().kind() else { unreachable!() };
    Ok(GuardedStream {
        mode: cfg.mode(),
        epsilon: cfg.epsilon(),
        grid: GridDesc::Uniform { step, offset },
        p0_q16,
        flag_count,
        payload: PayloadHeader::Octree { bit_depth: cloud.bit_depth, point_count: cloud.len() as u64 },
        safeguard: bytes,
        main: enc.finish(),
    })
}

/// Encode `cloud`; with `protect` the stream decodes exactly under any
/// perturbation below the configured epsilon.
pub fn encode(cloud: &VoxelCloud, cfg: &GuardConfig, protect: bool) -> Result<GuardedStream> {
    let protection = if protect { Protection::Guarded } else { Protection::Off };
    encode_inner(cloud, cfg, protection, None)
}

pub fn encode_with(cloud: &VoxelCloud, cfg: &GuardConfig, protection: Protection) -> Result<GuardedStream> {
    encode_inner(cloud, cfg, protection, None)
}

pub fn encode_traced(
    cloud: &VoxelCloud,
    cfg: &GuardConfig,
    protect: bool,
) -> Result<(GuardedStream, Vec<TraceEntry>)> {
    let mut trace = Vec::new();
    let protection = if protect { Protection::Guarded } else { Protection::Off };
    let s = encode_inner(cloud, cfg, protection, Some(&mut trace))?;
    Ok((s, trace))
}

/// Main-stream size when every probability is snapped to its bin center.
pub fn quantized_main_len(cloud: &VoxelCloud, cfg: &GuardConfig) -> Result<usize> {
    Ok(encode_inner(cloud, cfg, Protection::QuantizeOnly, None)?.main.len())
}

fn decode_inner(
    stream: &GuardedStream,
    perturb: &Perturbation,
    trace: Option<&mut Vec<TraceEntry>>,
) -> Result<VoxelCloud> {
    let PayloadHeader::Octree { bit_depth, point_count } = stream.payload else {
        return Err(Error::MalformedStream("not an octree stream".into()));
    };
    check_depth(bit_depth)?;
    if point_count == 0 {
        return Err(Error::MalformedStream("octree stream declares no points".into()));
    }
    let cfg = config_from_stream(stream)?;
    let mut session = DecodeSession::new(&cfg, stream, perturb)?;
    let mut dec = RangeDecoder::new(&stream.main)?;
    let leaves = traverse(bit_depth, point_count as usize, trace, |_, _, _, p| {
        let v = session.value(p)?;
        dec.decode_bit(prob_to_p16(v)?)
    })?;
    dec.finish()?;
    session.finish()?;
    if leaves.len() as u64 != point_count {
        return Err(Error::MalformedStream(format!(
            "decoded {} points, header declares {point_count}",
            leaves.len()
        )));
    }
    Ok(VoxelCloud { bit_depth, codes: leaves })
}

/// Decode on a platform whose predictor deviates according to `perturb`.
pub fn decode(stream: &GuardedStream, perturb: &Perturbation) -> Result<VoxelCloud> {
    decode_inner(stream, perturb, None)
}

pub fn decode_traced(stream: &GuardedStream, perturb: &Perturbation) -> Result<(VoxelCloud, Vec<TraceEntry>)> {
    let mut trace = Vec::new();
    let c = decode_inner(stream, perturb, Some(&mut trace))?;
    Ok((c, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn morton_layout() {
        assert_eq!(morton_encode([1, 0, 0]), 0b100);
        assert_eq!(morton_encode([0, 1, 0]), 0b010);
        assert_eq!(morton_encode([0, 0, 1]), 0b001);
        assert_eq!(morton_encode([2, 0, 1]), 0b100_001);
        let max = (1 << 21) - 1;
        assert_eq!(morton_decode(morton_encode([max, 5, max])), [max, 5, max]);
    }

    proptest! {
        #[test]
        fn morton_roundtrip(x in 0u32..1 << 21, y in 0u32..1 << 21, z in 0u32..1 << 21) {
            prop_assert_eq!(morton_decode(morton_encode([x, y, z])), [x, y, z]);
        }
    }

    #[test]
    fn voxelize_examples() {
        let c = voxelize(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], 1).unwrap();
        assert_eq!(c.voxels().collect::<Vec<_>>(), vec![[0, 0, 0], [1, 1, 1]]);
        let c = voxelize(&[[3.0, 3.0, 3.0]; 4], 5).unwrap();
        assert_eq!(c.len(), 1);
        assert!(voxelize(&[], 3).is_err());
        assert!(voxelize(&[[0.0, f64::NAN, 0.0]], 3).is_err());
        assert!(VoxelCloud::new(2, [[4, 0, 0]]).is_err());
    }

    #[test]
    fn occupancy_of_small_tree() {
        let c = VoxelCloud::new(2, [[0, 0, 0], [3, 3, 3]]).unwrap();
        let occ = occupancy_levels(&c);
        assert_eq!(occ[0], vec![0b1000_0001]);
        assert_eq!(occ[1], vec![0b0000_0001, 0b1000_0000]);
    }

    #[test]
    fn small_roundtrip_all_modes() {
        let cloud = synth_cloud(CloudKind::Sparse, 5, 300, 3).unwrap();
        for mode in GuardMode::ALL {
            let cfg = octree_config(250, 1e-6, mode).unwrap();
            let s = encode(&cloud, &cfg, true).unwrap();
            assert_eq!(decode(&s, &Perturbation::none()).unwrap(), cloud);
            let bytes = s.write().unwrap();
            assert_eq!(GuardedStream::read(&bytes).unwrap(), s);
        }
    }

    #[test]
    fn rejects_unsuitable_config() {
        let cloud = synth_cloud(CloudKind::Sparse, 3, 10, 1).unwrap();
        let cfg = GuardConfig::new(QuantGrid::uniform(0.004, 0.0).unwrap(), 1e-6, GuardMode::Full, None)
            .unwrap();
        assert!(matches!(encode(&cloud, &cfg, true), Err(Error::ConfigRejected(_))));
    }
}
