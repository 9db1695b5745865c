//! Single-draw predictions on a well-separated three-class problem: the ILR
//! classifier against the Dirichlet baseline, forming probabilities from the
//! latent predictive and from the noisy one.
//!
//! cargo run --release --example breakdown [-- seeds]

use ilr_gp::classifiers::{breakdown_experiment, BreakdownConfig, PredictionMode};

fn main() -> ilr_gp::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let cfg = BreakdownConfig { seeds, ..Default::default() };
    let start = std::time::Instant::now();
    let report = breakdown_experiment(&cfg)?;
    for run in &report.runs {
        println!("seed {} {:>3} {:<8} error {:.3}", run.seed, run.model, run.mode.as_str(), run.error);
    }
    println!();
    for model in ["ilr", "gpd"] {
        for mode in [PredictionMode::Latent, PredictionMode::Noisy] {
            let c = report.cell(model, mode).expect("cell");
            println!("{model:>3} {:<8} {:.3} ± {:.3}", mode.as_str(), c.mean, c.sd);
        }
    }
    println!("\n{:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
