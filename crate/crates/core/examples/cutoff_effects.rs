//! Cutoff-specific, pooled and weighted average RD effects on a simulated
//! two-cutoff sample.
//!
//! `cargo run --release --example cutoff_effects`

use rdx::extrapolation::{estimate_cutoff_effect, pooled_effect, weighted_average_effect};
use rdx::locfit::FitSpec;
use rdx::simulate::{generate_sample, SimulationConfig};

pub fn main() {
    let cfg = SimulationConfig::with_n(4000);
    let ds = generate_sample(&cfg, 0).expect("sample");
    let spec = FitSpec::new(1);

    let effects: Vec<_> = ds
        .cutoffs()
        .iter()
        .map(|&c| estimate_cutoff_effect(&ds, c, &spec, 0.95).expect("effect"))
        .collect();
    for e in &effects {
        println!(
            "cutoff {:>6}: {:.3}  RBC CI [{:.3}, {:.3}]  p {:.3}  eff. n {}/{}  h {:.1}/{:.1}",
            e.cutoff,
            e.tau,
            e.ci_rbc.lo,
            e.ci_rbc.hi,
            e.p_value_rbc,
            e.n_eff_left,
            e.n_eff_right,
            e.h_left,
            e.h_right
        );
    }
    let pooled = pooled_effect(&ds, &spec, 0.95).expect("pooled");
    println!(
        "pooled       : {:.3}  RBC CI [{:.3}, {:.3}]",
        pooled.tau, pooled.ci_rbc.lo, pooled.ci_rbc.hi
    );
    let w = weighted_average_effect(&effects, &ds, 0.95).expect("weighted");
    println!(
        "weighted     : {:.3}  RBC CI [{:.3}, {:.3}]  weights {:?}",
        w.estimate,
        w.ci_rbc.lo,
        w.ci_rbc.hi,
        w.weights
            .iter()
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
    );
}
