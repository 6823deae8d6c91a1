//! Scale-index coding for synthetic hyperprior latents.

use reproguard::hyperprior::{self, hyperprior_config, synth_latents};
use reproguard::{GuardMode, PerturbDist, Perturbation};

fn main() -> reproguard::Result<()> {
    let lat = synth_latents(64, 64, 8, 5)?;
    let ideal = hyperprior::model_bits(&lat)?;
    println!("latents={} model bits={ideal:.0}", lat.dims.len());

    for eps in [1e-4, 1e-5, 1e-6] {
        let cfg = hyperprior_config(eps, GuardMode::Full)?;
        let s = hyperprior::encode(&lat, &cfg, true)?;
        let back = hyperprior::decode(&s, &Perturbation::image_gpu(2))?;
        assert_eq!(back.symbols, lat.quantized());
        println!("eps={eps:e} main={}B overhead={:.3}%", s.main.len(), s.overhead_pct());
    }

    let cfg = hyperprior_config(1e-4, GuardMode::Full)?;
    let p = Perturbation::new(8e-6, PerturbDist::Adversarial, 0)?;
    let mut exact = 0;
    for seed in 0..8 {
        let lat = synth_latents(64, 64, 8, seed)?;
        let plain = hyperprior::encode(&lat, &cfg, false)?;
        exact += usize::from(hyperprior::decode(&plain, &p).is_ok_and(|d| d.symbols == lat.quantized()));
    }
    println!("unprotected under adversarial error: {exact}/8 exact");
    Ok(())
}
