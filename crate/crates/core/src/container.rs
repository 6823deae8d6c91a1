//! `.rgd` container: header, safeguarding bitstream, main bitstream.
//!
//! All integers are big-endian; floating-point fields are raw IEEE-754 bits.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "RGRD"
//!      4     1  version (1)
//!      5     1  mode: 0 full, 1 left-major, 2 right-major, 3 center-major
//!      6     1  payload kind: 0 octree, 1 hyperprior latents, 2 raw values
//!      7     8  epsilon (f64)
//!     15     1  grid kind: 0 uniform, 1 boundary table
//!     16  16|2  uniform: q (f64), s (f64) | table: table id (u16)
//!      .     2  p0_q16
//!      .     4  flag count
//!      .     4  safeguard length
//!      .     4  main length
//!      .     .  payload header
//!                 octree:     bit depth (u8), point count (u64)
//!                 hyperprior: H, W, C (3 x u32), scale table id (u16),
//!                             z count (u32), z values (f64 each)
//!                 raw:        value count (u64)
//!      .     .  safeguard bytes, then main bytes
//! ```
//!
//! A stream with zero flags but a nonzero number of coded values was written
//! without protection.

use thiserror::Error;

use crate::safeguard::GuardMode;

pub const MAGIC: [u8; 4] = *b"RGRD";
pub const VERSION: u8 = 1;
/// Bytes of header attributable to safeguarding: `p0_q16` and the flag count.
pub const FLAG_HEADER_LEN: usize = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContainerError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated container: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("declared length exceeds format limits: {0}")]
    LengthOverflow(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("{0} trailing bytes after the main stream")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Octree,
    Hyperprior,
    Raw,
}

impl PayloadKind {
    pub fn to_byte(self) -> u8 {
        match self {
            PayloadKind::Octree => 0,
            PayloadKind::Hyperprior => 1,
            PayloadKind::Raw => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(PayloadKind::Octree),
            1 => Some(PayloadKind::Hyperprior),
            2 => Some(PayloadKind::Raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridDesc {
    Uniform { step: f64, offset: f64 },
    Table(u16),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PayloadHeader {
    Octree { bit_depth: u8, point_count: u64 },
    Hyperprior { height: u32, width: u32, channels: u32, scale_table_id: u16, z: Vec<f64> },
    Raw { value_count: u64 },
}

impl PayloadHeader {
    pub fn kind(&self) -> PayloadKind {
        match self {
            PayloadHeader::Octree { .. } => PayloadKind::Octree,
            PayloadHeader::Hyperprior { .. } => PayloadKind::Hyperprior,
            PayloadHeader::Raw { .. } => PayloadKind::Raw,
        }
    }

    fn encoded_len(&self) -> usize {
        match self {
            PayloadHeader::Octree { .. } => 9,
            PayloadHeader::Hyperprior { z, .. } => 18 + 8 * z.len(),
            PayloadHeader::Raw { .. } => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardedStream {
    pub mode: GuardMode,
    pub epsilon: f64,
    pub grid: GridDesc,
    pub p0_q16: u16,
    pub flag_count: u32,
    pub payload: PayloadHeader,
    pub safeguard: Vec<u8>,
    pub main: Vec<u8>,
}

impl GuardedStream {
    pub fn header_len(&self) -> usize {
        let grid = match self.grid {
            GridDesc::Uniform { .. } => 16,
            GridDesc::Table(_) => 2,
        };
        16 + grid + 14 + self.payload.encoded_len()
    }

    pub fn total_len(&self) -> usize {
        self.header_len() + self.safeguard.len() + self.main.len()
    }

    /// Bytes spent on safeguarding: the flag stream plus its header fields.
    pub fn guard_bytes(&self) -> usize {
        self.safeguard.len() + FLAG_HEADER_LEN
    }

    /// Safeguarding cost as a percentage of the main stream.
    pub fn overhead_pct(&self) -> f64 {
        if self.main.is_empty() {
            return 0.0;
        }
        100.0 * self.guard_bytes() as f64 / self.main.len() as f64
    }

    pub fn is_protected(&self) -> bool {
        self.flag_count > 0
    }

    pub fn write(&self) -> Result<Vec<u8>, ContainerError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(ContainerError::InvalidField(format!("epsilon {}", self.epsilon)));
        }
        if self.p0_q16 == 0 {
            return Err(ContainerError::InvalidField("p0_q16 must be nonzero".into()));
        }
        let len32 = |n: usize, what: &str| {
            u32::try_from(n).map_err(|_| ContainerError::LengthOverflow(format!("{what} length {n}")))
        };
        let safeguard_len = len32(self.safeguard.len(), "safeguard")?;
        let main_len = len32(self.main.len(), "main")?;
        if self.flag_count == 0 && safeguard_len != 0 {
            return Err(ContainerError::InvalidField("safeguard bytes without flags".into()));
        }

        let mut out = Vec::with_capacity(self.total_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.mode.to_byte());
        out.push(self.payload.kind().to_byte());
        out.extend_from_slice(&self.epsilon.to_be_bytes());
        match self.grid {
            GridDesc::Uniform { step, offset } => {
                out.push(0);
                out.extend_from_slice(&step.to_be_bytes());
                out.extend_from_slice(&offset.to_be_bytes());
            }
            GridDesc::Table(id) => {
                out.push(1);
                out.extend_from_slice(&id.to_be_bytes());
            }
        }
        out.extend_from_slice(&self.p0_q16.to_be_bytes());
        out.extend_from_slice(&self.flag_count.to_be_bytes());
        out.extend_from_slice(&safeguard_len.to_be_bytes());
        out.extend_from_slice(&main_len.to_be_bytes());
        match &self.payload {
            PayloadHeader::Octree { bit_depth, point_count } => {
                check_octree(*bit_depth, *point_count)?;
                out.push(*bit_depth);
                out.extend_from_slice(&point_count.to_be_bytes());
            }
            PayloadHeader::Hyperprior { height, width, channels, scale_table_id, z } => {
                let z_len = len32(z.len(), "z")?;
                check_latents(*height, *width, *channels, z_len)?;
                for d in [height, width, channels] {
                    out.extend_from_slice(&d.to_be_bytes());
                }
                out.extend_from_slice(&scale_table_id.to_be_bytes());
                out.extend_from_slice(&z_len.to_be_bytes());
                for v in z {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            }
            PayloadHeader::Raw { value_count } => {
                out.extend_from_slice(&value_count.to_be_bytes());
            }
        }
        out.extend_from_slice(&self.safeguard);
        out.extend_from_slice(&self.main);
        Ok(out)
    }

    pub fn read(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let mode_byte = r.u8()?;
        let mode = GuardMode::from_byte(mode_byte)
            .ok_or_else(|| ContainerError::InvalidField(format!("mode byte {mode_byte}")))?;
        let kind_byte = r.u8()?;
        let kind = PayloadKind::from_byte(kind_byte)
            .ok_or_else(|| ContainerError::InvalidField(format!("payload kind {kind_byte}")))?;
        let epsilon = r.f64()?;
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(ContainerError::InvalidField(format!("epsilon {epsilon}")));
        }
        let grid = match r.u8()? {
            0 => GridDesc::Uniform { step: r.f64()?, offset: r.f64()? },
            1 => GridDesc::Table(r.u16()?),
            other => return Err(ContainerError::InvalidField(format!("grid kind {other}"))),
        };
        let p0_q16 = r.u16()?;
        if p0_q16 == 0 {
            return Err(ContainerError::InvalidField("p0_q16 must be nonzero".into()));
        }
        let flag_count = r.u32()?;
        let safeguard_len = r.u32()? as usize;
        let main_len = r.u32()? as usize;
        if flag_count == 0 && safeguard_len != 0 {
            return Err(ContainerError::InvalidField("safeguard bytes without flags".into()));
        }
        let payload = match kind {
            PayloadKind::Octree => {
                let bit_depth = r.u8()?;
                let point_count = r.u64()?;
                check_octree(bit_depth, point_count)?;
                PayloadHeader::Octree { bit_depth, point_count }
            }
            PayloadKind::Hyperprior => {
                let (height, width, channels) = (r.u32()?, r.u32()?, r.u32()?);
                let scale_table_id = r.u16()?;
                let z_len = r.u32()?;
                check_latents(height, width, channels, z_len)?;
                let raw = r.take(8 * z_len as usize)?;
                let z = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                PayloadHeader::Hyperprior { height, width, channels, scale_table_id, z }
            }
            PayloadKind::Raw => PayloadHeader::Raw { value_count: r.u64()? },
        };
        let safeguard = r.take(safeguard_len)?.to_vec();
        let main = r.take(main_len)?.to_vec();
        if r.pos != bytes.len() {
            return Err(ContainerError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Self { mode, epsilon, grid, p0_q16, flag_count, payload, safeguard, main })
    }
}

fn check_octree(bit_depth: u8, point_count: u64) -> Result<(), ContainerError> {
    if !(1..=21).contains(&bit_depth) {
        return Err(ContainerError::InvalidField(format!("bit depth {bit_depth}")));
    }
    if point_count > 1u64 << (3 * u32::from(bit_depth)) {
        return Err(ContainerError::LengthOverflow(format!(
            "{point_count} points do not fit a {bit_depth}-bit grid"
        )));
    }
    Ok(())
}

fn check_latents(height: u32, width: u32, channels: u32, z_len: u32) -> Result<(), ContainerError> {
    let count = u128::from(height) * u128::from(width) * u128::from(channels);
    if count == 0 {
        return Err(ContainerError::InvalidField("latent dimensions must be nonzero".into()));
    }
    if u128::from(z_len) > count {
        return Err(ContainerError::LengthOverflow(format!(
            "{z_len} hyper-latents for {count} latents"
        )));
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(ContainerError::Truncated { offset: self.pos, needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ContainerError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, ContainerError> {
        Ok(f64::from_be_bytes(self.array()?))
    }
}
