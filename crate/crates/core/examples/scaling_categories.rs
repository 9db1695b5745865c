//! Error of the exact ILR classifier on circle mixtures with growing K,
//! against the nearest-center rule.
//!
//! cargo run --release --example scaling_categories [-- K ...]

use ilr_gp::experiments::{scaling_k, ScalingConfig};

fn main() -> ilr_gp::Result<()> {
    let classes: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut cfg = ScalingConfig::default();
    if !classes.is_empty() {
        cfg.classes = classes;
    } else {
        cfg.classes = vec![2, 4, 8, 16];
    }
    for row in scaling_k(&cfg)? {
        println!(
            "K = {:>3}  lambda {:<6}  error {:.3}  nearest-center {:.3}  nll {:.3}",
            row.classes, row.setting, row.error, row.nearest_center_error, row.nll
        );
    }
    Ok(())
}
