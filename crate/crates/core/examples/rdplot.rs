//! Binned means and global quadratic fits for an RD plot, at one cutoff and
//! pooled over cutoffs. Prints the plot data as text and JSON.
//!
//! `cargo run --release --example rdplot`

use rdx::output::to_json_compact;
use rdx::rdplot::{rdplot_bins, PlotTarget};
use rdx::simulate::{generate_sample, SimulationConfig};

pub fn main() {
    let cfg = SimulationConfig::with_n(4000);
    let ds = generate_sample(&cfg, 6).expect("sample");

    let p = rdplot_bins(&ds, PlotTarget::Cutoff(cfg.ell), 10, 2).expect("plot");
    for (label, side) in [("left", &p.left), ("right", &p.right)] {
        println!("{label} of {} ({} units):", p.cutoff, side.n);
        for b in &side.bins {
            println!(
                "  [{:>7.1}, {:>7.1})  n {:>4}  mean {:.3}  fit {:.3}",
                b.lo,
                b.hi,
                b.count,
                b.mean,
                side.fitted(b.center, p.cutoff)
            );
        }
    }

    let pooled = rdplot_bins(&ds, PlotTarget::Pooled, 5, 1).expect("pooled plot");
    println!("{}", to_json_compact(&pooled).expect("json"));
}
