//! Risky/direction flag protocol for critical values.
//!
//! The encoder inspects each critical value `v` produced by a vulnerable
//! module. When `v` lies within `epsilon` of an interior quantization
//! boundary it is marked risky, and the protected output is chosen from the
//! nearest boundary index rather than from the bin `v` falls in. A decoder
//! that sees a perturbed `v'` with `|v' - v| < epsilon` finds the same
//! nearest boundary (bins are wider than `4 * epsilon`) and, guided by the
//! flags, reproduces the encoder's output bit-exactly.
//!
//! Outputs are always materialized from integer indices through
//! [`QuantGrid::dequantize`] or [`QuantGrid::boundary`], never by adding a
//! half step to a boundary, so identical indices give identical doubles.

use std::fmt;
use std::str::FromStr;

use crate::entropy::FlagReader;
use crate::error::{Error, Result};
use crate::quantizer::{GridKind, QuantGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GuardMode {
    /// Risky values carry a direction flag and land on their own bin center.
    Full,
    /// Risky values land on the bin center left of the nearest boundary.
    LeftMajor,
    /// Risky values land on the bin center right of the nearest boundary.
    RightMajor,
    /// Risky values land on the nearest boundary itself.
    CenterMajor,
}

impl GuardMode {
    pub const ALL: [GuardMode; 4] =
        [GuardMode::Full, GuardMode::LeftMajor, GuardMode::RightMajor, GuardMode::CenterMajor];

    pub fn to_byte(self) -> u8 {
        match self {
            GuardMode::Full => 0,
            GuardMode::LeftMajor => 1,
            GuardMode::RightMajor => 2,
            GuardMode::CenterMajor => 3,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => GuardMode::Full,
            1 => GuardMode::LeftMajor,
            2 => GuardMode::RightMajor,
            3 => GuardMode::CenterMajor,
            _ => return None,
        })
    }

    /// Whether risky values are followed by a direction flag.
    pub fn signals_direction(self) -> bool {
        self == GuardMode::Full
    }
}

impl fmt::Display for GuardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuardMode::Full => "full",
            GuardMode::LeftMajor => "left",
            GuardMode::RightMajor => "right",
            GuardMode::CenterMajor => "center",
        })
    }
}

impl FromStr for GuardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(GuardMode::Full),
            "left" | "left-major" => Ok(GuardMode::LeftMajor),
            "right" | "right-major" => Ok(GuardMode::RightMajor),
            "center" | "centre" | "center-major" => Ok(GuardMode::CenterMajor),
            other => Err(Error::InvalidInput(format!("unknown guard mode `{other}`"))),
        }
    }
}

/// Domain edges at which both platforms clip, making those boundaries safe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeClip {
    pub lo: f64,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardConfig {
    grid: QuantGrid,
    epsilon: f64,
    mode: GuardMode,
    edge_clip: Option<EdgeClip>,
    lo_edge: Option<i64>,
    hi_edge: Option<i64>,
}

impl GuardConfig {
    pub fn new(
        grid: QuantGrid,
        epsilon: f64,
        mode: GuardMode,
        edge_clip: Option<EdgeClip>,
    ) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        grid.validate(epsilon)?;

        let boundary_index = |x: f64| -> Result<i64> {
            let k = match grid.kind() {
                GridKind::Uniform { step, offset } => (x / step + offset).round() as i64,
                GridKind::Boundaries { bounds, .. } => {
                    bounds.iter().position(|&b| b == x).map_or(-1, |i| i as i64)
                }
            };
            match grid.boundary(k) {
                Ok(b) if (b - x).abs() <= 1e-12 * x.abs().max(1.0) => Ok(k),
                _ => Err(Error::ConfigRejected(format!(
                    "edge clip {x} does not coincide with a grid boundary"
                ))),
            }
        };
        let lo_edge = edge_clip.map(|c| boundary_index(c.lo)).transpose()?;
        let hi_edge = edge_clip.and_then(|c| c.hi).map(boundary_index).transpose()?;
        if let Some(EdgeClip { lo, hi: Some(hi) }) = edge_clip {
            if hi <= lo {
                return Err(Error::ConfigRejected(format!("edge clip [{lo}, {hi}] is empty")));
            }
        }

        // A risky value next to the outermost entry of a table would need a
        // bin that does not exist; the outer entries must be clipped edges.
        if let GridKind::Boundaries { bounds, .. } = grid.kind() {
            let last = bounds.len() as i64 - 1;
            if lo_edge != Some(0) || hi_edge != Some(last) {
                return Err(Error::ConfigRejected(
                    "a boundary table needs edge clips at its first and last entries".into(),
                ));
            }
        }

        Ok(Self { grid, epsilon, mode, edge_clip, lo_edge, hi_edge })
    }

    pub fn grid(&self) -> &QuantGrid {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mode(&self) -> GuardMode {
        self.mode
    }

    pub fn edge_clip(&self) -> Option<EdgeClip> {
        self.edge_clip
    }

    /// Clip to the edge-clip interval and the grid domain.
    pub fn clip(&self, v: f64) -> f64 {
        let v = match self.edge_clip {
            Some(EdgeClip { lo, hi }) => v.max(lo).min(hi.unwrap_or(f64::INFINITY)),
            None => v,
        };
        self.grid.clip(v)
    }

    fn in_edge_zone(&self, v: f64) -> bool {
        match self.edge_clip {
            Some(EdgeClip { lo, hi }) => {
                v - lo <= self.epsilon || hi.is_some_and(|hi| hi - v <= self.epsilon)
            }
            None => false,
        }
    }

    fn is_clipped_edge(&self, k: i64) -> bool {
        self.lo_edge == Some(k) || self.hi_edge == Some(k)
    }

    fn safe(&self, v: f64) -> Result<GuardedValue> {
        let n = self.grid.quantize(v)?;
        Ok(GuardedValue {
            v_out: self.grid.dequantize(n)?,
            flag: Flag::SAFE,
            slot: Slot::Bin(n),
        })
    }

    fn resolve(&self, slot: Slot, flag: Flag) -> Result<GuardedValue> {
        let v_out = match slot {
            Slot::Bin(n) => self.grid.dequantize(n)?,
            Slot::Boundary(k) => self.grid.boundary(k)?,
        };
        Ok(GuardedValue { v_out, flag, slot })
    }

    /// Encoder side: classify `v` and produce the protected value.
    pub fn guard_encode(&self, v: f64) -> Result<GuardedValue> {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("critical value {v} is not finite")));
        }
        let v = self.clip(v);
        if self.in_edge_zone(v) {
            return self.safe(v);
        }
        let k = self.grid.round_index(v)?;
        let r = self.grid.boundary(k)?;
        if (r - v).abs() >= self.epsilon || self.is_clipped_edge(k) {
            return self.safe(v);
        }
        let (slot, direction) = match self.mode {
            GuardMode::Full => {
                let ceil = self.grid.ceil_b(v)?;
                if ceil - v < self.epsilon {
                    (Slot::Bin(k - 1), Some(false))
                } else {
                    (Slot::Bin(k), Some(true))
                }
            }
            GuardMode::LeftMajor => (Slot::Bin(k - 1), None),
            GuardMode::RightMajor => (Slot::Bin(k), None),
            GuardMode::CenterMajor => (Slot::Boundary(k), None),
        };
        self.resolve(slot, Flag { risky: true, direction })
    }

    /// Decoder side: rebuild the encoder's protected value from a perturbed
    /// `v_prime` and the flags signaled for it.
    pub fn guard_decode(&self, v_prime: f64, flag: Flag) -> Result<GuardedValue> {
        if !v_prime.is_finite() {
            return Err(Error::InvalidInput(format!("critical value {v_prime} is not finite")));
        }
        let v = self.clip(v_prime);
        if !flag.risky {
            return self.safe(v);
        }
        let k = self.grid.round_index(v)?;
        let slot = match self.mode {
            GuardMode::Full => match flag.direction {
                Some(false) => Slot::Bin(k - 1),
                Some(true) => Slot::Bin(k),
                None => {
                    return Err(Error::MalformedStream(
                        "risky value without a direction flag".into(),
                    ))
                }
            },
            GuardMode::LeftMajor => Slot::Bin(k - 1),
            GuardMode::RightMajor => Slot::Bin(k),
            GuardMode::CenterMajor => Slot::Boundary(k),
        };
        self.resolve(slot, flag)
    }
}

/// Flags signaled for one critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flag {
    pub risky: bool,
    /// `Some(false)`: left of the nearest boundary; `Some(true)`: right.
    /// Present only for risky values under [`GuardMode::Full`].
    pub direction: Option<bool>,
}

impl Flag {
    pub const SAFE: Flag = Flag { risky: false, direction: None };
}

/// Where a protected value sits on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Bin(i64),
    Boundary(i64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardedValue {
    pub v_out: f64,
    pub flag: Flag,
    pub slot: Slot,
}

/// All flags of one stream together with the probability used to code them.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagStream {
    pub flags: Vec<Flag>,
    pub p0: f64,
    pub p0_q16: u16,
}

impl FlagStream {
    pub fn risky_count(&self) -> usize {
        self.flags.iter().filter(|f| f.risky).count()
    }
}

pub fn p0_to_q16(p0: f64) -> u16 {
    (p0 * 65536.0).round().clamp(1.0, 65535.0) as u16
}

pub fn finalize_flags(flags: Vec<Flag>) -> FlagStream {
    if flags.is_empty() {
        return FlagStream { flags, p0: 0.5, p0_q16: 32768 };
    }
    let zeros = flags.iter().filter(|f| !f.risky).count();
    let p0 = zeros as f64 / flags.len() as f64;
    FlagStream { p0_q16: p0_to_q16(p0), p0, flags }
}

/// Encoder-side session: protects values in order and records their flags.
#[derive(Debug)]
pub struct GuardEncoder<'c> {
    cfg: &'c GuardConfig,
    flags: Vec<Flag>,
}

impl<'c> GuardEncoder<'c> {
    pub fn new(cfg: &'c GuardConfig) -> Self {
        Self { cfg, flags: Vec::new() }
    }

    pub fn protect(&mut self, v: f64) -> Result<GuardedValue> {
        let g = self.cfg.guard_encode(v)?;
        self.flags.push(g.flag);
        Ok(g)
    }

    pub fn flag_count(&self) -> usize {
        self.flags.len()
    }

    pub fn finish(self) -> FlagStream {
        finalize_flags(self.flags)
    }
}

/// Decoder-side session: pulls flags from the safeguarding stream in
/// lockstep with the critical values it recovers.
pub struct GuardDecoder<'c, 'a> {
    cfg: &'c GuardConfig,
    reader: FlagReader<'a>,
}

impl<'c, 'a> GuardDecoder<'c, 'a> {
    pub fn new(cfg: &'c GuardConfig, reader: FlagReader<'a>) -> Self {
        Self { cfg, reader }
    }

    pub fn recover(&mut self, v_prime: f64) -> Result<GuardedValue> {
        let flag = self.reader.next_flag()?;
        self.cfg.guard_decode(v_prime, flag)
    }

    /// Fails unless exactly the declared number of flags was consumed.
    pub fn finish(self) -> Result<()> {
        self.reader.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(mode: GuardMode) -> GuardConfig {
        GuardConfig::new(QuantGrid::uniform(0.01, 0.0).unwrap(), 0.001, mode, None).unwrap()
    }

    #[test]
    fn encode_examples() {
        let g = cfg(GuardMode::Full).guard_encode(0.0195).unwrap();
        assert_eq!(g.flag, Flag { risky: true, direction: Some(false) });
        assert_eq!(g.v_out, 0.015);

        let g = cfg(GuardMode::Full).guard_encode(0.0204).unwrap();
        assert_eq!(g.flag, Flag { risky: true, direction: Some(true) });
        assert_eq!(g.v_out, 0.025);

        for mode in GuardMode::ALL {
            let g = cfg(mode).guard_encode(0.016).unwrap();
            assert_eq!(g.flag, Flag::SAFE);
            assert_eq!(g.v_out, 0.015);
        }

        let g = cfg(GuardMode::CenterMajor).guard_encode(0.0195).unwrap();
        assert_eq!((g.flag.risky, g.v_out), (true, 0.02));
        assert_eq!(g.slot, Slot::Boundary(2));

        let g = cfg(GuardMode::LeftMajor).guard_encode(0.0204).unwrap();
        assert_eq!((g.flag.risky, g.v_out), (true, 0.015));

        let g = cfg(GuardMode::RightMajor).guard_encode(0.0195).unwrap();
        assert_eq!((g.flag.risky, g.v_out), (true, 0.025));
    }

    #[test]
    fn decode_examples() {
        let full = cfg(GuardMode::Full);
        let flag = Flag { risky: true, direction: Some(false) };
        assert_eq!(full.guard_decode(0.0203, flag).unwrap().v_out, 0.015);
        for mode in GuardMode::ALL {
            assert_eq!(cfg(mode).guard_decode(0.0168, Flag::SAFE).unwrap().v_out, 0.015);
        }
        let risky = Flag { risky: true, direction: None };
        assert_eq!(cfg(GuardMode::CenterMajor).guard_decode(0.0186, risky).unwrap().v_out, 0.02);
    }

    #[test]
    fn full_mode_requires_direction() {
        let err = cfg(GuardMode::Full).guard_decode(0.02, Flag { risky: true, direction: None });
        assert!(matches!(err, Err(Error::MalformedStream(_))));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let c = cfg(GuardMode::Full);
        assert!(matches!(c.guard_encode(f64::NAN), Err(Error::InvalidInput(_))));
        assert!(matches!(c.guard_decode(f64::INFINITY, Flag::SAFE), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn config_validation() {
        let g = QuantGrid::uniform(0.004, 0.0).unwrap();
        let err = GuardConfig::new(g.clone(), 0.002, GuardMode::Full, None);
        assert!(matches!(err, Err(Error::ConfigRejected(_))));
        assert!(GuardConfig::new(g.clone(), 0.0, GuardMode::Full, None).is_err());
        let off_grid = EdgeClip { lo: 0.001, hi: None };
        assert!(GuardConfig::new(g, 1e-6, GuardMode::Full, Some(off_grid)).is_err());

        let table = QuantGrid::boundaries(vec![0.0, 1.0, 2.0]).unwrap();
        let half = EdgeClip { lo: 0.0, hi: None };
        assert!(GuardConfig::new(table.clone(), 0.01, GuardMode::Full, Some(half)).is_err());
        let both = EdgeClip { lo: 0.0, hi: Some(2.0) };
        assert!(GuardConfig::new(table, 0.01, GuardMode::Full, Some(both)).is_ok());
    }

    #[test]
    fn edge_zones_are_never_risky() {
        let grid = QuantGrid::reciprocal(250).unwrap();
        let clip = Some(EdgeClip { lo: 0.0, hi: Some(1.0) });
        for mode in GuardMode::ALL {
            let c = GuardConfig::new(grid.clone(), 1e-6, mode, clip).unwrap();
            for v in [0.0, 5e-7, 1e-6, 1.0 - 1e-6, 1.0 - 1e-7, 1.0, -0.5, 1.5] {
                let g = c.guard_encode(v).unwrap();
                assert!(!g.flag.risky, "{mode} {v}");
            }
            assert_eq!(c.guard_encode(1.0).unwrap().slot, Slot::Bin(249));
            // Decoder-side overshoot past the edge is clipped back.
            assert_eq!(c.guard_decode(-4e-7, Flag::SAFE).unwrap().slot, Slot::Bin(0));
            assert_eq!(c.guard_decode(1.0 + 4e-7, Flag::SAFE).unwrap().slot, Slot::Bin(249));
        }
    }

    #[test]
    fn finalize_examples() {
        let mut flags = vec![Flag::SAFE; 999];
        flags.push(Flag { risky: true, direction: None });
        let s = finalize_flags(flags);
        assert_eq!(s.p0, 0.999);
        assert_eq!(s.p0_q16, 65470);

        assert_eq!(finalize_flags(vec![Flag::SAFE; 100]).p0_q16, 65535);
        assert_eq!(finalize_flags(vec![]).p0_q16, 32768);
        let all_risky = vec![Flag { risky: true, direction: None }; 10];
        assert_eq!(finalize_flags(all_risky).p0_q16, 1);
    }

    #[test]
    fn safe_values_agree_across_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfgs: Vec<_> = GuardMode::ALL.iter().map(|&m| cfg(m)).collect();
        for _ in 0..10_000 {
            let v: f64 = rng.gen_range(-1.0..1.0);
            let outs: Vec<_> = cfgs.iter().map(|c| c.guard_encode(v).unwrap()).collect();
            if !outs[0].flag.risky {
                assert!(outs.iter().all(|g| g == &outs[0]));
            }
        }
    }

    #[test]
    fn risky_rate_matches_band_width() {
        // P(risky) = 2 * eps / q for v uniform over many bins.
        let c = GuardConfig::new(QuantGrid::uniform(0.004, 0.0).unwrap(), 1e-5, GuardMode::Full, None)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let risky = (0..n)
            .filter(|_| c.guard_encode(rng.gen_range(0.0..4.0)).unwrap().flag.risky)
            .count();
        let p = 2.0 * 1e-5 / 0.004;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((risky as f64 / n as f64 - p).abs() < 3.0 * sd);
    }

    fn mode_strategy() -> impl Strategy<Value = GuardMode> {
        prop::sample::select(GuardMode::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn reproduction_guarantee(
            mode in mode_strategy(),
            q in prop::sample::select(vec![0.004, 0.008, 0.01, 0.3]),
            eps_frac in 0.001f64..0.2499,
            base in -200i64..200,
            u in prop::sample::select(vec![0.0, 0.5, 0.999, 1.0, 1.001, 2.0, 37.5]),
            side in prop::bool::ANY,
            t in -0.999f64..0.999,
        ) {
            let eps = q * eps_frac;
            let c = GuardConfig::new(QuantGrid::uniform(q, 0.0).unwrap(), eps, mode, None).unwrap();
            let b = c.grid().boundary(base).unwrap();
            let off = (u * eps).min(0.49 * q);
            let v = if side { b + off } else { b - off };
            let enc = c.guard_encode(v).unwrap();
            let dec = c.guard_decode(v + t * eps, enc.flag).unwrap();
            prop_assert_eq!(dec.v_out.to_bits(), enc.v_out.to_bits());
        }

        #[test]
        fn risky_rounding_is_stable(v in 0.0f64..1.0, t in -0.999f64..0.999) {
            let c = cfg(GuardMode::CenterMajor);
            let g = c.guard_encode(v).unwrap();
            if g.flag.risky {
                let r = c.grid().round_b(v).unwrap();
                prop_assert_eq!(c.grid().round_b(v + t * c.epsilon()).unwrap(), r);
            } else {
                let n = c.grid().quantize(v).unwrap();
                prop_assert_eq!(c.grid().quantize(v + t * c.epsilon()).unwrap(), n);
            }
        }
    }
}
