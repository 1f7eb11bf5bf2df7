//! Extrapolation with one-sided noncompliance: 60% of units assigned to
//! treatment take it up, nobody below their cutoff does.
//!
//! `cargo run --release --example fuzzy`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rdx::extrapolation::extrapolate_fuzzy;
use rdx::locfit::FitSpec;
use rdx::simulate::SimulationConfig;
use rdx::{CutoffPair, Dataset, Design, Observation};

pub fn main() {
    let cfg = SimulationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, cfg.sigma).unwrap();
    let obs: Vec<Observation> = (0..20_000)
        .map(|i| {
            let low = i % 2 == 0;
            let c = if low { cfg.ell } else { cfg.high };
            let x = rng.random_range(-1000.0..-1.0);
            let complier = rng.random_bool(0.6);
            let d = x >= c && complier;
            let y = cfg.mu0_high(x)
                + if low { cfg.delta } else { 0.0 }
                + if d { cfg.tau } else { 0.0 }
                + noise.sample(&mut rng);
            Observation::new(y, x, c, u8::from(d))
        })
        .collect();
    let ds = Dataset::new(obs, Design::Fuzzy).expect("dataset");
    let pair = CutoffPair::new(&ds, cfg.ell, cfg.high).expect("pair");

    let f = extrapolate_fuzzy(&ds, &pair, cfg.xbar, &FitSpec::new(1), 0.95).expect("fuzzy");
    println!(
        "intention to treat {:.3} (true {:.3})",
        f.itt.tau,
        0.6 * cfg.tau
    );
    println!("first stage       {:.3} (true 0.6)", f.first_stage.estimate);
    println!(
        "complier effect   {:.3} se {:.3}  RBC CI [{:.3}, {:.3}] (true {})",
        f.tau, f.se, f.ci_rbc.lo, f.ci_rbc.hi, cfg.tau
    );
}
