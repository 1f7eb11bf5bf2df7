//! Monte Carlo study of constant-bias extrapolation on the quartic design.
//!
//! `cargo run --release --example monte_carlo -- [n] [reps] [seed]`

use rdx::locfit::FitSpec;
use rdx::simulate::{run_monte_carlo, Estimator, SimulationConfig};

pub fn main() {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let n = args.first().copied().unwrap_or(1000);
    let reps = args.get(1).copied().unwrap_or(50);
    let seed = args.get(2).copied().unwrap_or(7) as u64;
    let cfg = SimulationConfig {
        reps,
        seed,
        ..SimulationConfig::with_n(n)
    };
    println!("mu_0H({}) = {:.3}", cfg.xbar, cfg.mu0_high(cfg.xbar));
    let s = run_monte_carlo(&cfg, Estimator::Sharp, &FitSpec::new(1)).expect("simulation");
    println!(
        "N = {n}, reps = {}: mean {:.4}, bias {:.4}, sd {:.4}, rmse {:.4}, RBC coverage {:.3}, conventional coverage {:.3}, failed {}",
        s.reps_completed, s.mean_tau_hat, s.bias, s.sd, s.rmse, s.coverage_rbc, s.coverage_conventional, s.reps_failed
    );
    for c in &s.components {
        println!(
            "  {:<16} h {:>8.2}  eff. n {:>7.1}",
            c.name, c.mean_h, c.mean_eff_n
        );
    }
}
