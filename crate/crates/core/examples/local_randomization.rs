//! Local randomization extrapolation with nearest-neighbor windows, Neyman
//! and Berger-Boos inference, and sensitivity to the window size.
//!
//! `cargo run --release --example local_randomization`

use rdx::localrand::{local_randomization, lr_sensitivity, Adjustment, LRConfig};
use rdx::simulate::{generate_sample, SimulationConfig};
use rdx::CutoffPair;

pub fn main() {
    let cfg = SimulationConfig::with_n(4000);
    let ds = generate_sample(&cfg, 4).expect("sample");
    let pair = CutoffPair::new(&ds, cfg.ell, cfg.high).expect("pair");
    let lr_cfg = LRConfig {
        seed: 7,
        ..LRConfig::default()
    };

    let r = local_randomization(&ds, &pair, cfg.xbar, 100, Adjustment::Constant, &lr_cfg)
        .expect("estimate");
    let bb = r.bergerboos.as_ref().expect("berger-boos");
    println!("at {} with k = {} (true effect {}):", r.xbar, r.k, cfg.tau);
    println!("  bias at cutoff {:.3} (true {})", r.delta_hat, cfg.delta);
    println!("  effect         {:.3}", r.tau_hat);
    if let (Some(t), Some(p)) = (r.t_stat, r.p_neyman) {
        println!("  Neyman t {t:.2}, p {p:.4}");
    }
    println!(
        "  Berger-Boos p {:.4} (sup {:.4} over delta in [{:.3}, {:.3}])",
        bb.p_star, bb.sup_p, bb.delta_set.lo, bb.delta_set.hi
    );

    println!("window sensitivity, linear adjustment:");
    let rows = lr_sensitivity(
        &ds,
        &pair,
        cfg.xbar,
        &[50, 100, 200, 400],
        Adjustment::Linear,
        &lr_cfg,
    )
    .expect("sensitivity");
    for row in rows {
        match row.result {
            Some(r) => println!(
                "  k {:>4}  effect {:>7.3}  half-widths {:.1}/{:.1}  p {:.4}",
                row.k,
                r.tau_hat,
                r.window_low.half_width,
                r.window_xbar.half_width,
                r.bergerboos.map(|b| b.p_star).unwrap_or(f64::NAN)
            ),
            None => println!(
                "  k {:>4}  failed: {}",
                row.k,
                row.error.unwrap_or_default()
            ),
        }
    }
}
