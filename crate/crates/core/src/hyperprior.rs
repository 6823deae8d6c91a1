//! Hyperprior-style latent coding with safeguarded Gaussian scales.
//!
//! A deterministic stand-in for a learned image codec: synthetic latents `y`
//! with per-channel spread, a pooled side channel `z` sent losslessly in the
//! header, and a fixed hyper-synthesis that predicts a scale for every
//! latent. Each scale picks an entropy-coding table through a 64-entry
//! log-spaced boundary table, which is where cross-platform drift bites.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::container::{GridDesc, GuardedStream, PayloadHeader};
use crate::detmath;
use crate::entropy::{gaussian_cdf_table, CdfTable, RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};
use crate::platform_sim::{splitmix64, unit_f64, Perturbation};
use crate::quantizer::QuantGrid;
use crate::safeguard::{EdgeClip, GuardConfig, GuardMode};
use crate::session::{DecodeSession, EncodeSession, GuardSection, Protection};

pub const SCALE_TABLE_ID: u16 = 1;
pub const SCALE_TABLE_LEN: usize = 64;
/// Quantized latents are clamped to `[-LATENT_BOUND, LATENT_BOUND]`.
pub const LATENT_BOUND: i32 = 32;
/// Spatial pooling factor between `y` and `z`.
pub const POOL: usize = 4;
/// Largest latent tensor a stream may declare.
pub const MAX_LATENTS: u64 = 1 << 26;

const LN_SCALE_MIN: f64 = -2.207_274_913_189_720_7;
const LN_SCALE_STEP: f64 = 0.123_054_799_328_083_84;
const ANALYSIS_SEED: u64 = 0x5EED_A7A1;
pub const SYNTHESIS_SEED: u64 = 0x5EED_5E75;

/// 64 scales log-spaced from 0.11 to 256.
pub fn default_scale_table() -> &'static QuantGrid {
    static TABLE: OnceLock<QuantGrid> = OnceLock::new();
    TABLE.get_or_init(|| {
        let bounds: Vec<f64> = (0..SCALE_TABLE_LEN)
            .map(|i| detmath::exp(LN_SCALE_MIN + i as f64 * LN_SCALE_STEP))
            .collect();
        let (lo, hi) = (bounds[0], bounds[SCALE_TABLE_LEN - 1]);
        QuantGrid::boundaries(bounds)
            .and_then(|g| g.with_domain(lo, hi))
            .expect("scale table is strictly increasing")
    })
}

pub fn table_by_id(id: u16) -> Option<&'static QuantGrid> {
    (id == SCALE_TABLE_ID).then(default_scale_table)
}

pub fn table_id_of(grid: &QuantGrid) -> Option<u16> {
    (grid == default_scale_table()).then_some(SCALE_TABLE_ID)
}

/// Guard configuration over a registered scale table, clipped at both ends.
pub fn table_config(id: u16, epsilon: f64, mode: GuardMode) -> Result<GuardConfig> {
    let grid = table_by_id(id)
        .ok_or_else(|| Error::InvalidInput(format!("unknown scale table id {id}")))?;
    let d = grid.domain().expect("registered tables carry a domain");
    GuardConfig::new(grid.clone(), epsilon, mode, Some(EdgeClip { lo: d.lo, hi: Some(d.hi) }))
}

pub fn hyperprior_config(epsilon: f64, mode: GuardMode) -> Result<GuardConfig> {
    table_config(SCALE_TABLE_ID, epsilon, mode)
}

/// One entropy-coding table per scale bin, indexed by bin.
fn bin_tables() -> &'static [CdfTable] {
    static TABLES: OnceLock<Vec<CdfTable>> = OnceLock::new();
    TABLES.get_or_init(|| {
        let grid = default_scale_table();
        (0..SCALE_TABLE_LEN as i64 - 1)
            .map(|k| {
                let sigma = grid.dequantize(k).expect("bin exists");
                gaussian_cdf_table(sigma, LATENT_BOUND as u32).expect("valid sigma")
            })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LatentDims {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        let count = (height as u64).saturating_mul(width as u64).saturating_mul(channels as u64);
        if count == 0 || count > MAX_LATENTS {
            return Err(Error::InvalidInput(format!(
                "latent shape {height}x{width}x{channels} must hold 1..={MAX_LATENTS} values"
            )));
        }
        Ok(Self { height, width, channels })
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape of the pooled side channel.
    pub fn pooled(&self) -> (usize, usize) {
        (self.height.div_ceil(POOL), self.width.div_ceil(POOL))
    }

    pub fn z_len(&self) -> usize {
        let (zh, zw) = self.pooled();
        zh * zw * self.channels
    }
}

/// Synthetic latents, laid out `[(h * W + w) * C + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    pub dims: LatentDims,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Per-channel spread `y` was drawn with.
    pub sigma_true: Vec<f64>,
}

impl LatentGrid {
    /// The integers the codec transmits.
    pub fn quantized(&self) -> Vec<i32> {
        self.y.iter().map(|&v| quantize_latent(v)).collect()
    }
}

pub fn quantize_latent(v: f64) -> i32 {
    v.round().clamp(-f64::from(LATENT_BOUND), f64::from(LATENT_BOUND)) as i32
}

fn mixing_matrix(channels: usize, seed: u64, spread: f64) -> Vec<f64> {
    let mut m = vec![0.0; channels * channels];
    for (i, w) in m.iter_mut().enumerate() {
        let noise = spread * (2.0 * unit_f64(splitmix64(seed.wrapping_add(i as u64))) - 1.0);
        *w = if i / channels == i % channels { 1.0 + noise } else { noise / channels as f64 };
    }
    m
}

/// Pool `|y|` over 4x4 blocks and project log-magnitudes across channels.
pub fn hyper_analysis(dims: LatentDims, y: &[f64]) -> Vec<f64> {
    let (zh, zw) = dims.pooled();
    let c = dims.channels;
    let mix = mixing_matrix(c, ANALYSIS_SEED, 0.1);
    let mut z = vec![0.0; dims.z_len()];
    let mut pooled = vec![0.0; c];
    for i in 0..zh {
        for j in 0..zw {
            pooled.iter_mut().for_each(|p| *p = 0.0);
            let mut n = 0.0;
            for h in i * POOL..((i + 1) * POOL).min(dims.height) {
                for w in j * POOL..((j + 1) * POOL).min(dims.width) {
                    let base = (h * dims.width + w) * c;
                    for (p, v) in pooled.iter_mut().zip(&y[base..base + c]) {
                        *p += v.abs();
                    }
                    n += 1.0;
                }
            }
            let logs: Vec<f64> = pooled.iter().map(|p| (p / n).max(1e-3).ln()).collect();
            let out = &mut z[(i * zw + j) * c..(i * zw + j + 1) * c];
            for (k, o) in out.iter_mut().enumerate() {
                *o = mix[k * c..(k + 1) * c].iter().zip(&logs).map(|(a, b)| a * b).sum();
            }
        }
    }
    z
}

/// Draw latents whose channels have log-uniform spread in `[0.2, 64]`.
pub fn synth_latents(height: usize, width: usize, channels: usize, seed: u64) -> Result<LatentGrid> {
    let dims = LatentDims::new(height, width, channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma_true: Vec<f64> =
        (0..channels).map(|_| rng.gen_range(0.2f64.ln()..64f64.ln()).exp()).collect();
    let normals: Vec<Normal<f64>> =
        sigma_true.iter().map(|&s| Normal::new(0.0, s).expect("positive spread")).collect();
    let mut y = Vec::with_capacity(dims.len());
    for _ in 0..height * width {
        for n in &normals {
            y.push(n.sample(&mut rng));
        }
    }
    let z = hyper_analysis(dims, &y);
    Ok(LatentGrid { dims, y, z, sigma_true })
}

/// Fixed-weight hyper-synthesis: bilinear upsampling of `z`, a channel
/// mix and a softplus.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperSynthesis {
    channels: usize,
    mix: Vec<f64>,
    bias: Vec<f64>,
}

impl HyperSynthesis {
    pub fn new(channels: usize, seed: u64) -> Self {
        let mix = mixing_matrix(channels, seed, 0.1);
        let bias = (0..channels)
            .map(|c| 0.1 * (2.0 * unit_f64(splitmix64(!seed ^ c as u64)) - 1.0))
            .collect();
        Self { channels, mix, bias }
    }

    /// Predicted scale for every latent.
    pub fn scales(&self, dims: LatentDims, z: &[f64]) -> Result<Vec<f64>> {
        if dims.channels != self.channels || z.len() != dims.z_len() {
            return Err(Error::InvalidInput(format!(
                "{} hyper-latents do not match a {}x{}x{} latent shape",
                z.len(),
                dims.height,
                dims.width,
                dims.channels
            )));
        }
        let (zh, zw) = dims.pooled();
        let c = self.channels;
        let coord = |i: usize, n: usize| {
            let t = ((i as f64 + 0.5) / POOL as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = t.floor() as usize;
            (i0, (i0 + 1).min(n - 1), t - i0 as f64)
        };
        let mut sigma = Vec::with_capacity(dims.len());
        let mut up = vec![0.0; c];
        for h in 0..dims.height {
            let (h0, h1, fh) = coord(h, zh);
            for w in 0..dims.width {
                let (w0, w1, fw) = coord(w, zw);
                for (k, u) in up.iter_mut().enumerate() {
                    let at = |i: usize, j: usize| z[(i * zw + j) * c + k];
                    let top = at(h0, w0) * (1.0 - fw) + at(h0, w1) * fw;
                    let bottom = at(h1, w0) * (1.0 - fw) + at(h1, w1) * fw;
                    *u = top * (1.0 - fh) + bottom * fh;
                }
                for k in 0..c {
                    let row = &self.mix[k * c..(k + 1) * c];
                    let a = self.bias[k] + row.iter().zip(&up).map(|(m, u)| m * u).sum::<f64>();
                    sigma.push(softplus(a).max(0.0));
                }
            }
        }
        Ok(sigma)
    }
}

/// Predicted scales and the table that quantizes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleField {
    pub sigma: Vec<f64>,
    pub scale_table_id: u16,
}

impl ScaleField {
    pub fn boundaries(&self) -> &'static QuantGrid {
        table_by_id(self.scale_table_id).expect("registered table")
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Scales the codec assigns to latents of shape `dims` given side channel `z`.
pub fn hyper_synthesis(dims: LatentDims, z: &[f64]) -> Result<ScaleField> {
    let sigma = HyperSynthesis::new(dims.channels, SYNTHESIS_SEED).scales(dims, z)?;
    Ok(ScaleField { sigma, scale_table_id: SCALE_TABLE_ID })
}

fn check_config(cfg: &GuardConfig) -> Result<u16> {
    let id = table_id_of(cfg.grid()).ok_or_else(|| {
        Error::ConfigRejected("latent scales need a registered scale table".into())
    })?;
    if table_config(id, cfg.epsilon(), cfg.mode())? != *cfg {
        return Err(Error::ConfigRejected("scale table must be clipped at both ends".into()));
    }
    Ok(id)
}

pub fn encode(latents: &LatentGrid, cfg: &GuardConfig, protect: bool) -> Result<GuardedStream> {
    let protection = if protect { Protection::Guarded } else { Protection::Off };
    encode_with(latents, cfg, protection)
}

pub fn encode_with(latents: &LatentGrid, cfg: &GuardConfig, protection: Protection) -> Result<GuardedStream> {
    let table_id = check_config(cfg)?;
    let dims = latents.dims;
    if latents.y.len() != dims.len() {
        return Err(Error::InvalidInput("latent buffer does not match its shape".into()));
    }
    let sigma = hyper_synthesis(dims, &latents.z)?.sigma;
    let grid = cfg.grid();
    let tables = bin_tables();
    let mut session = EncodeSession::new(cfg, protection);
    let mut enc = RangeEncoder::new();
    for (&s, &y) in sigma.iter().zip(&latents.y) {
        let bin = grid.quantize(session.value(s)?)?;
        enc.encode_symbol(&tables[bin as usize], quantize_latent(y))?;
    }
    let GuardSection { p0_q16, flag_count, bytes } = session.finish()?;
    let dim32 = |d: usize| {
        u32::try_from(d).map_err(|_| Error::InvalidInput(format!("dimension {d} too large")))
    };
    Ok(GuardedStream {
        mode: cfg.mode(),
        epsilon: cfg.epsilon(),
        grid: GridDesc::Table(table_id),
        p0_q16,
        flag_count,
        payload: PayloadHeader::Hyperprior {
            height: dim32(dims.height)?,
            width: dim32(dims.width)?,
            channels: dim32(dims.channels)?,
            scale_table_id: table_id,
            z: latents.z.clone(),
        },
        safeguard: bytes,
        main: enc.finish(),
    })
}

/// Decoded latent integers in `[(h * W + w) * C + c]` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedLatents {
    pub dims: LatentDims,
    pub symbols: Vec<i32>,
}

pub fn decode(stream: &GuardedStream, perturb: &Perturbation) -> Result<DecodedLatents> {
    let PayloadHeader::Hyperprior { height, width, channels, scale_table_id, ref z } = stream.payload
    else {
        return Err(Error::MalformedStream("not a hyperprior stream".into()));
    };
    if stream.grid != GridDesc::Table(scale_table_id) {
        return Err(Error::MalformedStream("grid and payload disagree on the scale table".into()));
    }
    let dims = LatentDims::new(height as usize, width as usize, channels as usize)
        .map_err(|e| Error::MalformedStream(e.to_string()))?;
    if z.len() != dims.z_len() {
        return Err(Error::MalformedStream(format!(
            "{} hyper-latents, shape needs {}",
            z.len(),
            dims.z_len()
        )));
    }
    let cfg = table_config(scale_table_id, stream.epsilon, stream.mode)
        .map_err(|e| Error::MalformedStream(e.to_string()))?;
    let sigma = hyper_synthesis(dims, z)?.sigma;
    let grid = cfg.grid();
    let tables = bin_tables();
    let mut session = DecodeSession::new(&cfg, stream, perturb)?;
    let mut dec = RangeDecoder::new(&stream.main)?;
    let mut symbols = Vec::with_capacity(dims.len());
    for &s in &sigma {
        let bin = grid.quantize(session.value(s)?)?;
        symbols.push(dec.decode_symbol(&tables[bin as usize])?);
    }
    dec.finish()?;
    session.finish()?;
    Ok(DecodedLatents { dims, symbols })
}

/// Ideal code length in bits of `latents` under the codec's own tables.
pub fn model_bits(latents: &LatentGrid) -> Result<f64> {
    let sigma = hyper_synthesis(latents.dims, &latents.z)?.sigma;
    let grid = default_scale_table();
    let tables = bin_tables();
    let mut bits = 0.0;
    for (&s, &y) in sigma.iter().zip(&latents.y) {
        let t = &tables[grid.quantize(grid.clip(s))? as usize];
        bits -= (f64::from(t.freq(quantize_latent(y))?) / 65536.0).log2();
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_table_shape() {
        let g = default_scale_table();
        assert_eq!(g.bin_count(), Some(63));
        let b0 = g.boundary(0).unwrap();
        let b63 = g.boundary(63).unwrap();
        assert!((b0 - 0.11).abs() < 1e-12 && (b63 - 256.0).abs() < 1e-9, "{b0} {b63}");
        assert!(g.min_gap() > 4e-4);
        assert!(table_by_id(2).is_none());
        assert_eq!(table_id_of(g), Some(1));
    }

    #[test]
    fn scales_are_varied_and_positive() {
        let lat = synth_latents(16, 16, 4, 9).unwrap();
        let s = hyper_synthesis(lat.dims, &lat.z).unwrap().sigma;
        assert_eq!(s.len(), lat.dims.len());
        assert!(s.iter().all(|&v| v > 0.0 && v.is_finite()));
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        assert!(sorted.len() > s.len() / 2);
    }

    #[test]
    fn small_roundtrip() {
        let lat = synth_latents(9, 7, 3, 2).unwrap();
        for mode in GuardMode::ALL {
            let cfg = hyperprior_config(1e-4, mode).unwrap();
            let s = encode(&lat, &cfg, true).unwrap();
            let back = GuardedStream::read(&s.write().unwrap()).unwrap();
            assert_eq!(decode(&back, &Perturbation::image_gpu(5)).unwrap().symbols, lat.quantized());
        }
    }
}
