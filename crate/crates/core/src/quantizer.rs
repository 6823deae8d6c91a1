//! Scalar quantization grids.
//!
//! A grid is an ordered set of boundaries indexed by integers. Bin `n` is the
//! half-open interval `[boundary(n), boundary(n + 1))`, so a value sitting
//! exactly on a boundary belongs to the bin above it. Uniform grids have
//! `boundary(k) = (k - s) * q` for every integer `k`; explicit grids carry a
//! finite table `b_0 < ... < b_K`.
//!
//! All boundary values are derived from integer indices, which is what lets
//! two platforms agree bit-for-bit on a reconstructed value once they agree on
//! the index.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum GridKind {
    Uniform { step: f64, offset: f64 },
    Boundaries { bounds: Vec<f64>, min_gap: f64 },
}

/// Clip interval, stored together with the boundary indices of its edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    lo_index: i64,
    hi_index: i64,
}

impl Domain {
    pub fn lo_index(&self) -> i64 {
        self.lo_index
    }

    pub fn hi_index(&self) -> i64 {
        self.hi_index
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantGrid {
    kind: GridKind,
    domain: Option<Domain>,
}

// Largest bin index magnitude accepted by uniform grids; keeps `k as f64`
// exact and `k + 1` free of overflow.
const MAX_INDEX: f64 = (1u64 << 52) as f64;

impl QuantGrid {
    pub fn uniform(step: f64, offset: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {step}")));
        }
        if !(0.0..1.0).contains(&offset) {
            return Err(Error::InvalidInput(format!("offset must lie in [0, 1), got {offset}")));
        }
        Ok(Self { kind: GridKind::Uniform { step, offset }, domain: None })
    }

    /// Uniform grid with `q = 1/k`, `s = 0`, clipped to `[0, 1]`: both ends of
    /// the probability range are boundaries.
    pub fn reciprocal(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        Self::uniform(1.0 / f64::from(k), 0.0)?.with_domain(0.0, 1.0)
    }

    pub fn boundaries(bounds: Vec<f64>) -> Result<Self> {
        if bounds.len() < 2 {
            return Err(Error::InvalidInput("a boundary table needs at least two entries".into()));
        }
        if bounds.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("boundary table contains a non-finite value".into()));
        }
        let mut min_gap = f64::INFINITY;
        for w in bounds.windows(2) {
            let gap = w[1] - w[0];
            if gap <= 0.0 {
                return Err(Error::InvalidInput("boundaries must be strictly increasing".into()));
            }
            min_gap = min_gap.min(gap);
        }
        Ok(Self { kind: GridKind::Boundaries { bounds, min_gap }, domain: None })
    }

    /// Attach a clip interval. Both edges must coincide with grid boundaries.
    pub fn with_domain(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("invalid domain [{lo}, {hi}]")));
        }
        let (lo_index, hi_index) = match &self.kind {
            GridKind::Uniform { step, offset } => {
                let index_of = |x: f64| -> Result<i64> {
                    let t = x / step + offset;
                    let k = t.round();
                    if (t - k).abs() > 1e-9 * k.abs().max(1.0) || k.abs() >= MAX_INDEX {
                        return Err(Error::InvalidInput(format!(
                            "domain edge {x} does not coincide with a grid boundary"
                        )));
                    }
                    Ok(k as i64)
                };
                (index_of(lo)?, index_of(hi)?)
            }
            GridKind::Boundaries { bounds, .. } => {
                let last = bounds.len() - 1;
                if lo != bounds[0] || hi != bounds[last] {
                    return Err(Error::InvalidInput(
                        "domain of a boundary table must span its first and last entries".into(),
                    ));
                }
                (0, last as i64)
            }
        };
        self.domain = Some(Domain { lo, hi, lo_index, hi_index });
        Ok(self)
    }

    pub fn kind(&self) -> &GridKind {
        &self.kind
    }

    pub fn domain(&self) -> Option<&Domain> {
        self.domain.as_ref()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, GridKind::Uniform { .. })
    }

    /// Width of the narrowest bin (the step size for uniform grids).
    pub fn min_gap(&self) -> f64 {
        match &self.kind {
            GridKind::Uniform { step, .. } => *step,
            GridKind::Boundaries { min_gap, .. } => *min_gap,
        }
    }

    /// Number of bins of a boundary table; `None` for unbounded uniform grids.
    pub fn bin_count(&self) -> Option<usize> {
        match (&self.kind, &self.domain) {
            (GridKind::Boundaries { bounds, .. }, _) => Some(bounds.len() - 1),
            (GridKind::Uniform { .. }, Some(d)) => Some((d.hi_index - d.lo_index) as usize),
            (GridKind::Uniform { .. }, None) => None,
        }
    }

    /// Value of boundary `k`.
    pub fn boundary(&self, k: i64) -> Result<f64> {
        match &self.kind {
            GridKind::Uniform { step, offset } => Ok((k as f64 - offset) * step),
            GridKind::Boundaries { bounds, .. } => usize::try_from(k)
                .ok()
                .and_then(|i| bounds.get(i).copied())
                .ok_or(Error::InvalidIndex { index: k, bins: bounds.len() - 1 }),
        }
    }

    /// Clip `v` into the domain, if one is set.
    pub fn clip(&self, v: f64) -> f64 {
        match &self.domain {
            Some(d) => v.clamp(d.lo, d.hi),
            None => v,
        }
    }

    /// Bin index of `v`.
    pub fn quantize(&self, v: f64) -> Result<i64> {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("cannot quantize non-finite value {v}")));
        }
        match &self.kind {
            GridKind::Uniform { step, offset } => {
                let t = (v / step + offset).floor();
                if t.abs() >= MAX_INDEX {
                    return Err(Error::Domain(v));
                }
                let mut n = t as i64;
                // floor(v/q + s) can land one bin off when v is within an ulp
                // of a boundary; settle on the bin whose boundaries bracket v.
                while self.boundary(n)? > v {
                    n -= 1;
                }
                while self.boundary(n + 1)? <= v {
                    n += 1;
                }
                if let Some(d) = &self.domain {
                    n = n.clamp(d.lo_index, d.hi_index - 1);
                }
                Ok(n)
            }
            GridKind::Boundaries { bounds, .. } => {
                let last = bounds.len() - 1;
                let v = match &self.domain {
                    Some(d) => v.clamp(d.lo, d.hi),
                    None if v < bounds[0] || v > bounds[last] => return Err(Error::Domain(v)),
                    None => v,
                };
                // Number of boundaries <= v, minus one.
                let above = bounds.partition_point(|&b| b <= v);
                Ok(above.saturating_sub(1).min(last - 1) as i64)
            }
        }
    }

    /// Center of bin `n`.
    pub fn dequantize(&self, n: i64) -> Result<f64> {
        match &self.kind {
            GridKind::Uniform { step, offset } => Ok((n as f64 + 0.5 - offset) * step),
            GridKind::Boundaries { bounds, .. } => {
                let bins = bounds.len() - 1;
                match usize::try_from(n) {
                    Ok(i) if i < bins => Ok(0.5 * (bounds[i] + bounds[i + 1])),
                    _ => Err(Error::InvalidIndex { index: n, bins }),
                }
            }
        }
    }

    /// Lower boundary of the bin containing `v`.
    pub fn floor_b(&self, v: f64) -> Result<f64> {
        let n = self.quantize(v)?;
        self.boundary(n)
    }

    /// Upper boundary of the bin containing `v`.
    pub fn ceil_b(&self, v: f64) -> Result<f64> {
        let n = self.quantize(v)?;
        self.boundary(n + 1)
    }

    /// Boundary closest to `v`; an exact tie resolves to the lower boundary.
    pub fn round_b(&self, v: f64) -> Result<f64> {
        let k = self.round_index(v)?;
        self.boundary(k)
    }

    /// Index of the boundary returned by [`round_b`](Self::round_b).
    pub fn round_index(&self, v: f64) -> Result<i64> {
        let n = self.quantize(v)?;
        let lower = self.boundary(n)?;
        let upper = self.boundary(n + 1)?;
        Ok(if v - lower > upper - v { n + 1 } else { n })
    }

    /// Check that the bins are wide enough for a tolerable error `epsilon`:
    /// every bin must be wider than `4 * epsilon`.
    pub fn validate(&self, epsilon: f64) -> Result<()> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        let margin = 4.0 * epsilon;
        match &self.kind {
            GridKind::Uniform { step, .. } if *step <= margin => Err(Error::ConfigRejected(format!(
                "step size q = {step} must exceed 4 * epsilon = {margin}"
            ))),
            GridKind::Boundaries { min_gap, .. } if *min_gap <= margin => {
                Err(Error::ConfigRejected(format!(
                    "minimum boundary gap {min_gap} must exceed 4 * epsilon = {margin}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Flat big-endian IEEE-754 encoding of a boundary table.
pub fn table_to_be_bytes(bounds: &[f64]) -> Vec<u8> {
    bounds.iter().flat_map(|b| b.to_be_bytes()).collect()
}

pub fn table_from_be_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::InvalidInput(format!(
            "boundary table length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_be_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uni(q: f64, s: f64) -> QuantGrid {
        QuantGrid::uniform(q, s).unwrap()
    }

    fn log_table() -> QuantGrid {
        let (lo, hi) = (0.11f64.ln(), 256f64.ln());
        let b = (0..64).map(|k| (lo + k as f64 * (hi - lo) / 63.0).exp()).collect();
        QuantGrid::boundaries(b).unwrap()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(uni(0.004, 0.0).quantize(0.0103).unwrap(), 2);
        assert_eq!(uni(0.004, 0.0).quantize(0.0).unwrap(), 0);
        let t = QuantGrid::boundaries(vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(t.quantize(0.3).unwrap(), 1);
        assert_eq!(t.quantize(0.25).unwrap(), 1);
        assert_eq!(t.quantize(1.0).unwrap(), 1);
    }

    #[test]
    fn quantize_rejects_bad_input() {
        assert!(matches!(uni(0.1, 0.0).quantize(f64::NAN), Err(Error::InvalidInput(_))));
        let t = QuantGrid::boundaries(vec![0.0, 0.25, 1.0]).unwrap();
        assert!(matches!(t.quantize(1.5), Err(Error::Domain(_))));
        assert!(matches!(t.quantize(-0.1), Err(Error::Domain(_))));
        let clipped = t.with_domain(0.0, 1.0).unwrap();
        assert_eq!(clipped.quantize(1.5).unwrap(), 1);
        assert_eq!(clipped.quantize(-0.1).unwrap(), 0);
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(uni(0.004, 0.0).dequantize(2).unwrap(), 0.01);
        assert_eq!(uni(1.0, 0.5).dequantize(0).unwrap(), 0.0);
        let t = QuantGrid::boundaries(vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(t.dequantize(1).unwrap(), 0.625);
        assert!(matches!(t.dequantize(2), Err(Error::InvalidIndex { .. })));
        assert!(matches!(t.dequantize(-1), Err(Error::InvalidIndex { .. })));
    }

    #[test]
    fn floor_ceil_round_examples() {
        let g = uni(0.01, 0.0);
        assert_eq!(g.floor_b(0.0103).unwrap(), 0.01);
        assert_eq!(g.ceil_b(0.0103).unwrap(), 0.02);
        assert_eq!(g.round_b(0.0103).unwrap(), 0.01);

        // 0.01 sits exactly between 0.008 and 0.012: ties go to the floor.
        let g = uni(0.004, 0.0);
        assert_eq!(g.round_b(0.01).unwrap(), 0.008);

        let g = uni(1.0, 0.0);
        assert_eq!(g.floor_b(7.0).unwrap(), 7.0);
        assert_eq!(g.ceil_b(7.0).unwrap(), 8.0);
        assert_eq!(g.round_b(7.0).unwrap(), 7.0);
    }

    #[test]
    fn validate_examples() {
        assert!(uni(0.004, 0.0).validate(1e-6).is_ok());
        assert!(matches!(uni(0.004, 0.0).validate(0.002), Err(Error::ConfigRejected(_))));
        // 4 * 0.001 == 0.004 is not a strict margin either.
        assert!(matches!(uni(0.004, 0.0).validate(0.001), Err(Error::ConfigRejected(_))));
        let t = log_table();
        assert!((t.min_gap() - 0.11 * ((256f64 / 0.11).powf(1.0 / 63.0) - 1.0)).abs() < 1e-12);
        assert!(t.validate(1e-5).is_ok());
    }

    #[test]
    fn domain_edges_must_be_boundaries() {
        assert!(uni(0.004, 0.0).with_domain(0.0, 1.0).is_ok());
        assert!(uni(0.004, 0.0).with_domain(0.001, 1.0).is_err());
        assert!(QuantGrid::boundaries(vec![0.0, 0.5, 1.0]).unwrap().with_domain(0.0, 0.5).is_err());
        let g = QuantGrid::reciprocal(250).unwrap();
        assert_eq!(g.bin_count(), Some(250));
        assert_eq!(g.quantize(1.0).unwrap(), 249);
        assert_eq!(g.quantize(0.0).unwrap(), 0);
    }

    #[test]
    fn near_boundary_values_are_consistent() {
        // Values a few ulps either side of each boundary must be bracketed
        // by the boundaries of the bin they are assigned to.
        let g = uni(0.004, 0.0);
        for k in 1..2000i64 {
            let b = g.boundary(k).unwrap();
            let mut v = b;
            for _ in 0..4 {
                v = f64::from_bits(v.to_bits() - 1);
            }
            for _ in 0..8 {
                let n = g.quantize(v).unwrap();
                assert!(g.boundary(n).unwrap() <= v && v < g.boundary(n + 1).unwrap());
                assert_eq!(n, if v >= b { k } else { k - 1 });
                v = f64::from_bits(v.to_bits() + 1);
            }
        }
    }

    #[test]
    fn table_bytes_roundtrip() {
        let t = vec![0.11, 0.5, 256.0];
        let bytes = table_to_be_bytes(&t);
        assert_eq!(&bytes[..8], &0.11f64.to_be_bytes());
        assert_eq!(table_from_be_bytes(&bytes).unwrap(), t);
        assert!(table_from_be_bytes(&bytes[..7]).is_err());
    }

    fn any_uniform() -> impl Strategy<Value = QuantGrid> {
        (1e-3f64..1.0, 0.0f64..1.0).prop_map(|(q, s)| uni(q, s))
    }

    proptest! {
        #[test]
        fn roundtrip_containment(g in any_uniform(), v in -10.0f64..10.0) {
            let n = g.quantize(v).unwrap();
            let c = g.dequantize(n).unwrap();
            prop_assert!(g.boundary(n).unwrap() < c && c < g.boundary(n + 1).unwrap());
            prop_assert_eq!(g.quantize(c).unwrap(), n);
        }

        #[test]
        fn table_roundtrip_containment(n in 0i64..63) {
            let g = log_table();
            prop_assert_eq!(g.quantize(g.dequantize(n).unwrap()).unwrap(), n);
        }

        #[test]
        fn monotone(g in any_uniform(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(g.quantize(lo).unwrap() <= g.quantize(hi).unwrap());
            prop_assert!(g.floor_b(lo).unwrap() <= g.floor_b(hi).unwrap());
            prop_assert!(g.ceil_b(lo).unwrap() <= g.ceil_b(hi).unwrap());
            prop_assert!(g.round_b(lo).unwrap() <= g.round_b(hi).unwrap());
        }

        #[test]
        fn boundary_sandwich(g in any_uniform(), v in -10.0f64..10.0) {
            let f = g.floor_b(v).unwrap();
            let c = g.ceil_b(v).unwrap();
            let r = g.round_b(v).unwrap();
            prop_assert!(f <= v && v < c);
            prop_assert!(r == f || r == c);
        }

        #[test]
        fn table_sandwich(v in 0.11f64..256.0) {
            let g = log_table();
            let f = g.floor_b(v).unwrap();
            let c = g.ceil_b(v).unwrap();
            prop_assert!(f <= v && v < c);
        }

        #[test]
        fn bounded_perturbation_moves_at_most_one_bin(
            q in 1e-3f64..0.1,
            s in 0.0f64..1.0,
            eps_frac in 0.0f64..0.2499,
            v in -5.0f64..5.0,
            t in -1.0f64..=1.0,
        ) {
            let g = uni(q, s);
            let eps = q * eps_frac;
            g.validate(eps).unwrap();
            let drift = (g.quantize(v).unwrap() - g.quantize(v + t * eps).unwrap()).abs();
            prop_assert!(drift <= 1);
        }
    }
}
