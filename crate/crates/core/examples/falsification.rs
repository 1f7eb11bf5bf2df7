//! Checks of the parallel-trends assumption below the low cutoff: a global
//! polynomial F test and pointwise local derivative comparisons. Run on a
//! sample where the assumption holds and on one where the low group's
//! controls drift.
//!
//! `cargo run --release --example falsification`

use rdx::falsification::{global_parallel_test, local_derivative_test, DerivGrid};
use rdx::locfit::FitSpec;
use rdx::simulate::{generate_sample, SimulationConfig};
use rdx::{CutoffPair, Dataset, Design};

fn report(label: &str, ds: &Dataset, pair: &CutoffPair) {
    let g = global_parallel_test(ds, pair, 2, false).expect("global test");
    println!(
        "{label}: global F({}, {}) = {:.2}, p {:.4}, n {}",
        g.df_num, g.df_den, g.f_stat, g.p_value, g.n_used
    );
    let local = local_derivative_test(ds, pair, &DerivGrid::Auto, &FitSpec::new(2), 0.95)
        .expect("local test");
    for o in &local.grid {
        match &o.point {
            Some(p) => println!(
                "  x {:>7.1}  slope gap {:>8.5}  RBC CI [{:>8.5}, {:>8.5}]{}",
                p.x,
                p.diff,
                p.ci_rbc.lo,
                p.ci_rbc.hi,
                if p.reject { "  *" } else { "" }
            ),
            None => println!(
                "  x {:>7.1}  skipped: {}",
                o.x,
                o.error.as_deref().unwrap_or("")
            ),
        }
    }
    println!(
        "  sup |t| {:.2}, any rejection {}",
        local.sup_stat, local.any_reject
    );
}

pub fn main() {
    let cfg = SimulationConfig::with_n(8000);
    let ds = generate_sample(&cfg, 5).expect("sample");
    let pair = CutoffPair::new(&ds, cfg.ell, cfg.high).expect("pair");
    report("parallel", &ds, &pair);

    let drifted = ds
        .observations()
        .iter()
        .map(|o| {
            let mut o = o.clone();
            if o.c == cfg.ell {
                o.y += 0.002 * (o.x - cfg.ell);
            }
            o
        })
        .collect();
    let ds = Dataset::new(drifted, Design::Sharp).expect("dataset");
    report("drifting", &ds, &pair);
}
