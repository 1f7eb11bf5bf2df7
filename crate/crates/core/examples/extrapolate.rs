//! Constant-bias extrapolation of the low-cutoff effect to scores between
//! the two cutoffs, at one point and over a grid.
//!
//! `cargo run --release --example extrapolate`

use rdx::extrapolation::{extrapolate_sharp, extrapolation_grid, linspace};
use rdx::locfit::FitSpec;
use rdx::simulate::{generate_sample, SimulationConfig};
use rdx::CutoffPair;

pub fn main() {
    let cfg = SimulationConfig::with_n(5000);
    let ds = generate_sample(&cfg, 1).expect("sample");
    let pair = CutoffPair::new(&ds, cfg.ell, cfg.high).expect("pair");
    let spec = FitSpec::new(1);

    let r = extrapolate_sharp(&ds, &pair, cfg.xbar, &spec, 0.95).expect("extrapolation");
    println!("at {} (true effect {}):", r.xbar, cfg.tau);
    for c in &r.components {
        println!(
            "  {:<16} {:>8.3}  se {:.3}  eff. n {:>4}  h {:>7.2}",
            c.name, c.estimate, c.se, c.n_eff, c.h
        );
    }
    println!("  naive difference {:.3}", r.naive);
    println!("  bias at cutoff   {:.3} (true {})", r.bias_low, cfg.delta);
    println!(
        "  effect           {:.3}  RBC CI [{:.3}, {:.3}]  p {:.4}",
        r.tau, r.ci_rbc.lo, r.ci_rbc.hi, r.p_value_rbc
    );

    println!("grid:");
    for g in
        extrapolation_grid(&ds, &pair, &linspace(-840.0, -580.0, 14), &spec, 0.95).expect("grid")
    {
        match g.result {
            Some(r) => println!(
                "  {:>8.1}  {:.3}  [{:.3}, {:.3}]",
                g.xbar, r.tau, r.ci_rbc.lo, r.ci_rbc.hi
            ),
            None => println!(
                "  {:>8.1}  skipped: {}",
                g.xbar,
                g.error.unwrap_or_default()
            ),
        }
    }
}
