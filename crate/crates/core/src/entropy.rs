//! Integer binary range coder, probability mapping and Gaussian CDF tables.
//!
//! The coder keeps a 64-bit `low` (33 significant bits, the top one catching
//! carries) and a 32-bit `range`, and splits the range as
//! `(range >> 16) * p16`. Renormalization is byte-wise whenever the range
//! drops below 2^24. No floating point is touched once a probability has been
//! turned into a [`Prob16`], so two platforms fed the same `(bit, Prob16)`
//! sequence produce the same bytes.

use crate::detmath;
use crate::error::{Error, Result};
use crate::safeguard::{Flag, FlagStream, GuardMode};

const TOP: u32 = 1 << 24;
const PROB_BITS: u32 = 16;
pub const CDF_TOTAL: u32 = 1 << PROB_BITS;

/// Probability of the symbol `0`, scaled by 2^16, in `[1, 65535]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Prob16(u16);

impl Prob16 {
    pub const HALF: Prob16 = Prob16(32768);

    pub fn new(p16: u16) -> Result<Self> {
        if p16 == 0 {
            return Err(Error::InvalidInput("probability 0 cannot be coded".into()));
        }
        Ok(Self(p16))
    }

    pub fn get(self) -> u16 {
        self.0
    }
}

/// Map the probability that a bit is `1` to the coder's [`Prob16`] for `0`.
pub fn prob_to_p16(p_one: f64) -> Result<Prob16> {
    if !(0.0..=1.0).contains(&p_one) {
        return Err(Error::InvalidInput(format!(
            "probability {p_one} outside [0, 1]; was it clipped?"
        )));
    }
    let p0 = 65536.0 - (p_one * 65536.0).round();
    Ok(Prob16(p0.clamp(1.0, 65535.0) as u16))
}

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    // The very first byte produced is always zero; it is not stored.
    skip_first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self { low: 0, range: u32::MAX, cache: 0, pending: 1, skip_first: true, out: Vec::new() }
    }

    pub fn encode_bit(&mut self, bit: bool, p: Prob16) {
        let bound = (self.range >> PROB_BITS) * u32::from(p.0);
        if bit {
            self.low += u64::from(bound);
            self.range -= bound;
        } else {
            self.range = bound;
        }
        self.normalize();
    }

    /// Code the interval `[cum_lo, cum_lo + freq)` out of a total of 2^16.
    pub fn encode_interval(&mut self, cum_lo: u32, freq: u32) {
        debug_assert!(freq > 0 && cum_lo + freq <= CDF_TOTAL);
        let r = self.range >> PROB_BITS;
        self.low += u64::from(r * cum_lo);
        self.range = r * freq;
        self.normalize();
    }

    pub fn encode_symbol(&mut self, table: &CdfTable, symbol: i32) -> Result<()> {
        let i = table.index_of(symbol)?;
        self.encode_interval(table.cum[i], table.cum[i + 1] - table.cum[i]);
        Ok(())
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.emit(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn emit(&mut self, byte: u8) {
        if self.skip_first {
            debug_assert_eq!(byte, 0);
            self.skip_first = false;
        } else {
            self.out.push(byte);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let head: [u8; 4] = data.get(..4).ok_or(Error::Truncated)?.try_into().expect("4 bytes");
        Ok(Self { data, pos: 4, range: u32::MAX, code: u32::from_be_bytes(head) })
    }

    pub fn decode_bit(&mut self, p: Prob16) -> Result<bool> {
        let bound = (self.range >> PROB_BITS) * u32::from(p.0);
        let bit = if self.code < bound {
            self.range = bound;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            true
        };
        self.normalize()?;
        Ok(bit)
    }

    pub fn decode_symbol(&mut self, table: &CdfTable) -> Result<i32> {
        let r = self.range >> PROB_BITS;
        let target = self.code / r;
        if target >= CDF_TOTAL {
            return Err(Error::MalformedStream("code value outside the coded interval".into()));
        }
        // Last i with cum[i] <= target.
        let i = table.cum.partition_point(|&c| c <= target) - 1;
        self.code -= r * table.cum[i];
        self.range = r * (table.cum[i + 1] - table.cum[i]);
        self.normalize()?;
        Ok(table.min_symbol + i as i32)
    }

    fn normalize(&mut self) -> Result<()> {
        while self.range < TOP {
            let byte = *self.data.get(self.pos).ok_or(Error::Truncated)?;
            self.pos += 1;
            self.range <<= 8;
            self.code = (self.code << 8) | u32::from(byte);
        }
        Ok(())
    }

    /// Fails if bytes are left over: a well-formed stream is consumed exactly.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::MalformedStream(format!(
                "{} trailing bytes after the last symbol",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Arithmetic-code a flag stream: risky flags at `p0_q16`, each direction
/// flag at one half right after its risky flag.
pub fn encode_flags(stream: &FlagStream) -> Vec<u8> {
    if stream.flags.is_empty() {
        return Vec::new();
    }
    let p0 = Prob16(stream.p0_q16.max(1));
    let mut enc = RangeEncoder::new();
    for f in &stream.flags {
        enc.encode_bit(f.risky, p0);
        if let (true, Some(d)) = (f.risky, f.direction) {
            enc.encode_bit(d, Prob16::HALF);
        }
    }
    enc.finish()
}

pub fn decode_flags(bytes: &[u8], count: u64, p0_q16: u16, mode: GuardMode) -> Result<Vec<Flag>> {
    let mut reader = FlagReader::new(bytes, count, p0_q16, mode)?;
    let flags = (0..count).map(|_| reader.next_flag()).collect::<Result<Vec<_>>>()?;
    reader.finish()?;
    Ok(flags)
}

/// Lazy flag decoder, consumed in lockstep with the critical values.
pub struct FlagReader<'a> {
    dec: Option<RangeDecoder<'a>>,
    count: u64,
    read: u64,
    p0: Prob16,
    with_direction: bool,
}

impl<'a> FlagReader<'a> {
    pub fn new(bytes: &'a [u8], count: u64, p0_q16: u16, mode: GuardMode) -> Result<Self> {
        let dec = if count == 0 {
            if !bytes.is_empty() {
                return Err(Error::MalformedStream("flag bytes present but no flags declared".into()));
            }
            None
        } else {
            Some(RangeDecoder::new(bytes)?)
        };
        Ok(Self { dec, count, read: 0, p0: Prob16::new(p0_q16)?, with_direction: mode.signals_direction() })
    }

    pub fn next_flag(&mut self) -> Result<Flag> {
        let dec = match (&mut self.dec, self.read < self.count) {
            (Some(dec), true) => dec,
            _ => return Err(Error::CountMismatch { expected: self.count, found: self.read + 1 }),
        };
        self.read += 1;
        let risky = dec.decode_bit(self.p0)?;
        let direction =
            if risky && self.with_direction { Some(dec.decode_bit(Prob16::HALF)?) } else { None };
        Ok(Flag { risky, direction })
    }

    pub fn consumed(&self) -> u64 {
        self.read
    }

    pub fn finish(self) -> Result<()> {
        if self.read != self.count {
            return Err(Error::CountMismatch { expected: self.count, found: self.read });
        }
        match self.dec {
            Some(dec) => dec.finish(),
            None => Ok(()),
        }
    }
}

/// Cumulative frequency table over the symbols `min_symbol..` with total 2^16.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    min_symbol: i32,
    cum: Vec<u32>,
}

impl CdfTable {
    pub fn from_frequencies(min_symbol: i32, freqs: &[u32]) -> Result<Self> {
        if freqs.is_empty() || freqs.contains(&0) {
            return Err(Error::InvalidInput("every symbol needs a nonzero frequency".into()));
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cum.push(0);
        for &f in freqs {
            acc = acc.checked_add(f).ok_or_else(|| Error::InvalidInput("frequency overflow".into()))?;
            cum.push(acc);
        }
        if acc != CDF_TOTAL {
            return Err(Error::InvalidInput(format!("frequencies sum to {acc}, expected {CDF_TOTAL}")));
        }
        Ok(Self { min_symbol, cum })
    }

    pub fn min_symbol(&self) -> i32 {
        self.min_symbol
    }

    pub fn max_symbol(&self) -> i32 {
        self.min_symbol + self.cum.len() as i32 - 2
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }

    fn index_of(&self, symbol: i32) -> Result<usize> {
        if symbol < self.min_symbol || symbol > self.max_symbol() {
            return Err(Error::InvalidInput(format!(
                "symbol {symbol} outside [{}, {}]",
                self.min_symbol,
                self.max_symbol()
            )));
        }
        Ok((symbol - self.min_symbol) as usize)
    }

    pub fn freq(&self, symbol: i32) -> Result<u32> {
        let i = self.index_of(symbol)?;
        Ok(self.cum[i + 1] - self.cum[i])
    }
}

/// Quantized zero-mean Gaussian over `[-a, a]` with tails folded into the
/// end symbols. The result is a pure function of `(sigma, a)`: every
/// floating-point step goes through [`detmath`].
pub fn gaussian_cdf_table(sigma: f64, a: u32) -> Result<CdfTable> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    if a == 0 || a > 4096 {
        return Err(Error::InvalidInput(format!("alphabet half-width {a} outside [1, 4096]")));
    }
    let a = a as usize;
    let tail = |x: f64| detmath::normal_upper_tail(x / sigma);

    // Masses for symbols 0..=a; negative symbols mirror them.
    let mut mass = vec![0.0f64; a + 1];
    mass[0] = 1.0 - 2.0 * tail(0.5);
    for (k, m) in mass.iter_mut().enumerate().take(a).skip(1) {
        *m = (tail(k as f64 - 0.5) - tail(k as f64 + 0.5)).max(0.0);
    }
    mass[a] = tail(a as f64 - 0.5);
    let total = mass[0] + 2.0 * mass[1..].iter().sum::<f64>();

    let ideal: Vec<f64> = mass.iter().map(|m| m / total * f64::from(CDF_TOTAL)).collect();
    let mut freq: Vec<i64> = ideal.iter().map(|x| (x.floor() as i64).max(1)).collect();
    let deficit = |f: &[i64]| i64::from(CDF_TOTAL) - f[0] - 2 * f[1..].iter().sum::<i64>();

    // Pairs move two units at a time, so an odd deficit is settled on the
    // center symbol first.
    let mut d = deficit(&freq);
    if d % 2 != 0 {
        if d > 0 || freq[0] <= 1 {
            freq[0] += 1;
        } else {
            freq[0] -= 1;
        }
        d = deficit(&freq);
    }

    let remainder = |k: usize, f: &[i64]| ideal[k] - f[k] as f64;
    let mut order: Vec<usize> = (1..=a).collect();
    if d > 0 {
        order.sort_by(|&i, &j| remainder(j, &freq).total_cmp(&remainder(i, &freq)).then(i.cmp(&j)));
        for &k in order.iter().cycle() {
            if d == 0 {
                break;
            }
            freq[k] += 1;
            d -= 2;
        }
    } else if d < 0 {
        order.sort_by(|&i, &j| remainder(i, &freq).total_cmp(&remainder(j, &freq)).then(i.cmp(&j)));
        while d < 0 {
            let mut progressed = false;
            for &k in &order {
                if d == 0 {
                    break;
                }
                if freq[k] > 1 {
                    freq[k] -= 1;
                    d += 2;
                    progressed = true;
                }
            }
            if !progressed {
                freq[0] += d;
                d = 0;
            }
        }
    }

    let mut full: Vec<i64> = Vec::with_capacity(2 * a + 1);
    full.extend(freq[1..].iter().rev());
    full.extend(freq.iter());
    let full: Vec<u32> = full.into_iter().map(|f| f as u32).collect();
    CdfTable::from_frequencies(-(a as i32), &full)
}
