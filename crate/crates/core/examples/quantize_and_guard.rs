//! Protect a few values near bin boundaries and recover them after a
//! small platform-dependent error.

use reproguard::{GuardConfig, GuardMode, QuantGrid};

fn main() -> reproguard::Result<()> {
    let grid = QuantGrid::uniform(0.004, 0.0)?;
    let eps = 1e-6;
    let values = [0.0039999996, 0.0040000004, 0.0051, 0.0079999999, 0.3];

    for mode in GuardMode::ALL {
        let cfg = GuardConfig::new(grid.clone(), eps, mode, None)?;
        println!("{mode}");
        for &v in &values {
            let sent = cfg.guard_encode(v)?;
            for e in [-9e-7, 9e-7] {
                let got = cfg.guard_decode(v + e, sent.flag)?;
                assert_eq!(got.v_out.to_bits(), sent.v_out.to_bits());
            }
            // Without the flag the receiver rounds on its own.
            let naive = grid.quantize(v + 9e-7)? == grid.quantize(v - 9e-7)?;
            println!(
                "  v={v:<14} risky={:<5} dir={:<11} out={:<8} naive-consistent={naive}",
                sent.flag.risky,
                format!("{:?}", sent.flag.direction),
                sent.v_out,
            );
        }
    }
    Ok(())
}
