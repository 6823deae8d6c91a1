//! Dump the header fields of a small raw-values container.

use reproguard::raw::{protect_values, recover_values};
use reproguard::{GuardConfig, GuardMode, GuardedStream, QuantGrid};

fn main() -> reproguard::Result<()> {
    let cfg = GuardConfig::new(QuantGrid::uniform(0.5, 0.0)?, 1e-3, GuardMode::Full, None)?;
    let values = [0.2499, 0.7, 1.2503, -3.0];
    let (stream, sent) = protect_values(&cfg, &values)?;
    let bytes = stream.write()?;

    println!("header {} B, safeguard {} B, main {} B", stream.header_len(), stream.safeguard.len(), stream.main.len());
    for (i, chunk) in bytes.chunks(16).enumerate() {
        let hex: Vec<String> = chunk.iter().map(|b| format!("{b:02x}")).collect();
        println!("{:04x}  {}", i * 16, hex.join(" "));
    }

    let back = GuardedStream::read(&bytes)?;
    let shifted: Vec<f64> = values.iter().map(|v| v + 4e-4).collect();
    assert_eq!(recover_values(&back, &shifted)?, sent);
    println!("recovered {sent:?}");
    Ok(())
}
