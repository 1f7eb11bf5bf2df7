//! Parametric fixed-effects model across cutoffs: per-cutoff effects at and
//! away from each cutoff, and a test of equal control slopes.
//!
//! `cargo run --release --example fixed_effects`

use rdx::fixedeffects::{fe_effect_at, fit_fe_model, slope_equality_test};
use rdx::simulate::{generate_sample, SimulationConfig};

pub fn main() {
    let cfg = SimulationConfig::with_n(4000);
    let ds = generate_sample(&cfg, 2).expect("sample");

    for common in [true, false] {
        let fit = fit_fe_model(&ds, common, true).expect("fit");
        println!(
            "{} slope, {} coefficients, n {}, SSR {:.2}",
            if common { "common" } else { "per-cutoff" },
            fit.n_coef(),
            fit.n,
            fit.ssr
        );
        for j in 0..fit.cutoffs.len() {
            for at in [0.0, 50.0] {
                let e = fe_effect_at(&fit, j, at).expect("effect");
                println!(
                    "  cutoff {:>6} at c{:+}: {:.3} (se {:.3})",
                    e.cutoff, at, e.estimate, e.se
                );
            }
        }
    }
    let t = slope_equality_test(&ds).expect("slope test");
    println!(
        "equal control slopes: F({}, {}) = {:.2}, p {:.4}",
        t.df_num, t.df_den, t.f_stat, t.p_value
    );
}
