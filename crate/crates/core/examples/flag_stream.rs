//! Code a flag stream with the binary range coder and compare its size to
//! the binary entropy of the flag rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reproguard::entropy::{decode_flags, encode_flags};
use reproguard::safeguard::{GuardEncoder, GuardConfig, GuardMode};
use reproguard::QuantGrid;

fn main() -> reproguard::Result<()> {
    let grid = QuantGrid::uniform(0.004, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let values: Vec<f64> = (0..200_000).map(|_| rng.gen_range(-1.0..1.0)).collect();

    for eps in [1e-4, 1e-5, 1e-6] {
        let cfg = GuardConfig::new(grid.clone(), eps, GuardMode::CenterMajor, None)?;
        let mut enc = GuardEncoder::new(&cfg);
        for &v in &values {
            enc.protect(v)?;
        }
        let stream = enc.finish();
        let bytes = encode_flags(&stream);
        let back = decode_flags(&bytes, stream.flags.len() as u64, stream.p0_q16, cfg.mode())?;
        assert_eq!(back, stream.flags);

        let p = 1.0 - stream.p0;
        let h = if p > 0.0 { -(p * p.log2() + (1.0 - p) * (1.0 - p).log2()) } else { 0.0 };
        println!(
            "eps={eps:e} risky={} ({:.3e} expected {:.3e}) bytes={} ideal={:.0}",
            stream.risky_count(),
            p,
            2.0 * eps / 0.004,
            bytes.len(),
            h * values.len() as f64 / 8.0,
        );
    }
    Ok(())
}
