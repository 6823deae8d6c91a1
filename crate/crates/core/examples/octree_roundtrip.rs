//! Encode a synthetic point cloud, then decode it on a simulated platform
//! with and without the safeguard.

use reproguard::octree::{self, octree_config, synth_cloud, CloudKind};
use reproguard::{GuardMode, PerturbDist, Perturbation};

fn main() -> reproguard::Result<()> {
    let cloud = synth_cloud(CloudKind::Dense, 10, 50_000, 3)?;
    let cfg = octree_config(250, 1e-6, GuardMode::CenterMajor)?;
    let adversarial = Perturbation::new(5e-7, PerturbDist::Adversarial, 0)?;

    for protect in [true, false] {
        let s = octree::encode(&cloud, &cfg, protect)?;
        let bpp = 8.0 * s.total_len() as f64 / cloud.len() as f64;
        let outcome = match octree::decode(&s, &adversarial) {
            Ok(back) if back == cloud => "exact".to_string(),
            Ok(_) => "mismatch".to_string(),
            Err(e) => format!("failure: {e}"),
        };
        println!(
            "protect={protect:<5} points={} bpp={bpp:.3} overhead={:.3}% decode: {outcome}",
            cloud.len(),
            s.overhead_pct(),
        );
    }
    Ok(())
}
