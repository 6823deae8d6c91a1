use proptest::prelude::*;

use reproguard::hyperprior::{
    decode, default_scale_table, encode, hyper_synthesis, hyperprior_config, model_bits, synth_latents,
    SCALE_TABLE_ID,
};
use reproguard::{GuardMode, GuardedStream, PerturbDist, Perturbation};

#[test]
fn latents_are_seeded_and_calibrated() {
    let a = synth_latents(64, 64, 8, 11).unwrap();
    assert_eq!(a, synth_latents(64, 64, 8, 11).unwrap());
    assert_ne!(a.y, synth_latents(64, 64, 8, 12).unwrap().y);
    assert!(a.sigma_true.iter().all(|&s| (0.2..=64.0).contains(&s)));
    let c = a.dims.channels;
    for ch in 0..c {
        let vals: Vec<f64> = a.y.iter().skip(ch).step_by(c).copied().collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd / a.sigma_true[ch] - 1.0).abs() < 0.1, "channel {ch}: {sd} vs {}", a.sigma_true[ch]);
    }
    let tiny = synth_latents(4, 4, 1, 0).unwrap();
    assert_eq!(tiny.z.len(), 1);
    assert!(synth_latents(0, 4, 1, 0).is_err());
}

#[test]
fn scales_are_positive_and_deterministic() {
    let lat = synth_latents(32, 24, 4, 3).unwrap();
    let a = hyper_synthesis(lat.dims, &lat.z).unwrap();
    let b = hyper_synthesis(lat.dims, &lat.z).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.scale_table_id, SCALE_TABLE_ID);
    assert!(a.sigma.iter().all(|&s| s > 0.0));
    assert!(hyper_synthesis(lat.dims, &lat.z[1..]).is_err());
}

#[test]
fn scale_table_geometry() {
    let g = default_scale_table();
    let b: Vec<f64> = (0..64).map(|k| g.boundary(k).unwrap()).collect();
    assert!((b[0] - 0.11).abs() < 1e-12);
    assert!((b[63] - 256.0).abs() < 1e-9);
    let ratio = (256.0f64 / 0.11).powf(1.0 / 63.0);
    assert!((ratio - 1.13095).abs() < 1e-5);
    for w in b.windows(2) {
        assert!(w[1] > w[0]);
        assert!((w[1] / w[0] - ratio).abs() < 1e-9);
    }
    assert!((g.min_gap() - 0.01436).abs() < 1e-4);
    g.validate(1e-5).unwrap();
}

#[test]
fn exact_under_measured_error() {
    // 128 x 128 x 8 = 131072 positions.
    let lat = synth_latents(128, 128, 8, 21).unwrap();
    let cfg = hyperprior_config(1e-4, GuardMode::CenterMajor).unwrap();
    let s = encode(&lat, &cfg, true).unwrap();
    let s = GuardedStream::read(&s.write().unwrap()).unwrap();
    assert_eq!(decode(&s, &Perturbation::none()).unwrap().symbols, lat.quantized());
    assert_eq!(decode(&s, &Perturbation::image_gpu(4)).unwrap().symbols, lat.quantized());
}

#[test]
fn unprotected_fails_under_adversarial_error() {
    let lat = synth_latents(64, 64, 8, 2).unwrap();
    let cfg = hyperprior_config(1e-4, GuardMode::CenterMajor).unwrap();
    let s = encode(&lat, &cfg, false).unwrap();
    assert_eq!(decode(&s, &Perturbation::none()).unwrap().symbols, lat.quantized());
    let p = Perturbation::new(8e-6, PerturbDist::Adversarial, 0).unwrap();
    assert_ne!(decode(&s, &p).ok().map(|d| d.symbols), Some(lat.quantized()));
}

#[test]
fn rate_sanity() {
    let lat = synth_latents(128, 128, 8, 5).unwrap();
    let ideal = model_bits(&lat).unwrap();
    let mut overheads = Vec::new();
    for eps in [1e-4, 1e-5, 1e-6] {
        let cfg = hyperprior_config(eps, GuardMode::Full).unwrap();
        let s = encode(&lat, &cfg, true).unwrap();
        let bits = 8.0 * s.main.len() as f64;
        assert!(bits + 32.0 >= ideal && bits <= 1.01 * ideal + 64.0, "{bits} vs {ideal}");
        overheads.push(s.overhead_pct());
    }
    assert!(overheads.windows(2).all(|w| w[1] < w[0]), "{overheads:?}");
}

#[test]
fn lowest_boundary_is_never_risky() {
    let cfg = hyperprior_config(1e-4, GuardMode::Full).unwrap();
    for v in [0.0, 0.05, 0.11, 0.11 + 5e-5, 0.11 + 1e-4] {
        assert!(!cfg.guard_encode(v).unwrap().flag.risky, "{v}");
    }
}

#[test]
fn rejects_unregistered_tables() {
    let lat = synth_latents(8, 8, 1, 0).unwrap();
    let cfg = reproguard::octree::octree_config(250, 1e-6, GuardMode::Full).unwrap();
    assert!(encode(&lat, &cfg, true).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn scale_index_is_reproduced(
        ln_sigma in (0.05f64).ln()..(300.0f64).ln(),
        frac in -0.999f64..0.999,
        mode_ix in 0usize..4,
    ) {
        let cfg = hyperprior_config(1e-4, GuardMode::ALL[mode_ix]).unwrap();
        let sigma = ln_sigma.exp();
        let grid = cfg.grid();
        let sent = cfg.guard_encode(sigma).unwrap();
        let got = cfg.guard_decode(sigma + frac * 1e-4, sent.flag).unwrap();
        prop_assert_eq!(grid.quantize(got.v_out).unwrap(), grid.quantize(sent.v_out).unwrap());
        prop_assert_eq!(got.v_out.to_bits(), sent.v_out.to_bits());
    }
}
