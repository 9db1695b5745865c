//! Reliability table for one fitted model.

use ilr_gp::data::gen_overlap_toy;
use ilr_gp::pipeline::{evaluate, fit_model, ModelKind, ModelSpec};

fn main() -> ilr_gp::Result<()> {
    let train = gen_overlap_toy(0.5, 300, 11)?;
    let test = gen_overlap_toy(0.5, 1000, 12)?;
    let mut spec = ModelSpec::new(ModelKind::Ilr, 3);
    spec.lambda = 0.99;
    let report = evaluate(&fit_model(&spec, &train)?, &test, 0)?;
    println!("bin          count  confidence  accuracy");
    for b in report.bins.iter().filter(|b| b.count > 0) {
        println!(
            "[{:.1}, {:.1})  {:>5}  {:>10.3}  {:>8.3}",
            b.lower, b.upper, b.count, b.confidence, b.accuracy
        );
    }
    println!("error {:.3}  nll {:.3}  ece {:.4}", report.error, report.nll, report.ece);
    Ok(())
}
