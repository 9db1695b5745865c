//! Validation-NLL selection of the smoothing parameter at several overlap
//! levels of the toy problem.
//!
//! cargo run --release --example lambda_sweep

use ilr_gp::experiments::{overlap_lambda, OverlapLambdaConfig};

fn main() -> ilr_gp::Result<()> {
    let cfg = OverlapLambdaConfig {
        seeds: 2,
        n: 500,
        ..Default::default()
    };
    let (_, selections) = overlap_lambda(&cfg)?;
    for sel in &selections {
        let nll: Vec<String> = sel.mean_val_nll.iter().map(|v| format!("{v:.3}")).collect();
        println!("s = {}: val nll [{}] -> lambda {}", sel.s, nll.join(", "), sel.lambda);
    }
    Ok(())
}
