//! Per-stream glue between a codec's critical values and the safeguarding
//! bitstream.

use crate::container::GuardedStream;
use crate::entropy::{encode_flags, FlagReader};
use crate::error::{Error, Result};
use crate::platform_sim::Perturbation;
use crate::safeguard::{GuardConfig, GuardDecoder, GuardEncoder};

/// How an encoder treats its critical values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protection {
    /// Safeguarded: flags are emitted and the decoder reproduces values exactly.
    Guarded,
    /// Raw values, no flags.
    Off,
    /// Values snapped to bin centers without flags. Only useful to measure
    /// the main-stream size a guarded stream would have without its risky
    /// values; such streams cannot be decoded.
    QuantizeOnly,
}

/// Header fields and bytes of a finished safeguarding stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardSection {
    pub p0_q16: u16,
    pub flag_count: u32,
    pub bytes: Vec<u8>,
}

impl GuardSection {
    pub fn empty() -> Self {
        Self { p0_q16: 32768, flag_count: 0, bytes: Vec::new() }
    }
}

pub struct EncodeSession<'c> {
    cfg: &'c GuardConfig,
    protection: Protection,
    guard: Option<GuardEncoder<'c>>,
    count: u64,
}

impl<'c> EncodeSession<'c> {
    pub fn new(cfg: &'c GuardConfig, protection: Protection) -> Self {
        let guard = (protection == Protection::Guarded).then(|| GuardEncoder::new(cfg));
        Self { cfg, protection, guard, count: 0 }
    }

    /// The value both sides will use in place of `v`.
    pub fn value(&mut self, v: f64) -> Result<f64> {
        self.count += 1;
        match (&mut self.guard, self.protection) {
            (Some(g), _) => Ok(g.protect(v)?.v_out),
            (None, Protection::QuantizeOnly) => {
                let grid = self.cfg.grid();
                grid.dequantize(grid.quantize(self.cfg.clip(v))?)
            }
            (None, _) => Ok(self.cfg.clip(v)),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(self) -> Result<GuardSection> {
        let Some(guard) = self.guard else {
            return Ok(GuardSection::empty());
        };
        let flags = guard.finish();
        let flag_count = u32::try_from(flags.flags.len())
            .map_err(|_| Error::InvalidInput("too many critical values for one stream".into()))?;
        Ok(GuardSection { p0_q16: flags.p0_q16, flag_count, bytes: encode_flags(&flags) })
    }
}

pub struct DecodeSession<'c, 'a> {
    cfg: &'c GuardConfig,
    guard: Option<GuardDecoder<'c, 'a>>,
    perturb: Perturbation,
    index: u64,
}

impl<'c, 'a> DecodeSession<'c, 'a> {
    pub fn new(cfg: &'c GuardConfig, stream: &'a GuardedStream, perturb: &Perturbation) -> Result<Self> {
        let guard = if stream.is_protected() {
            let reader = FlagReader::new(
                &stream.safeguard,
                u64::from(stream.flag_count),
                stream.p0_q16,
                stream.mode,
            )?;
            Some(GuardDecoder::new(cfg, reader))
        } else {
            None
        };
        Ok(Self { cfg, guard, perturb: *perturb, index: 0 })
    }

    /// Recover the encoder's value from this platform's `v_prime`.
    pub fn value(&mut self, v_prime: f64) -> Result<f64> {
        let v = self.perturb.perturb_at(self.index, v_prime, self.cfg.grid());
        self.index += 1;
        match &mut self.guard {
            Some(g) => Ok(g.recover(v)?.v_out),
            None => Ok(self.cfg.clip(v)),
        }
    }

    pub fn finish(self) -> Result<()> {
        match self.guard {
            Some(g) => g.finish(),
            None => Ok(()),
        }
    }
}
