//! Fit the exact ILR classifier on the overlapping three-class toy and report
//! test metrics in both prediction modes.
//!
//! cargo run --release --example exact_ilr_classifier

use ilr_gp::classifiers::{IlrClassifier, IlrClassifierConfig, PredictionMode};
use ilr_gp::data::gen_overlap_toy;
use ilr_gp::metrics::EvalReport;
use ilr_gp::simplex::SmoothingConfig;

fn main() -> ilr_gp::Result<()> {
    let train = gen_overlap_toy(0.3, 400, 1)?;
    let test = gen_overlap_toy(0.3, 400, 2)?;
    let cfg = IlrClassifierConfig::new(SmoothingConfig::with_default_epsilon(0.9, 3)?);
    println!("latent noise sd {:.4}", cfg.noise_sigma);

    let clf = IlrClassifier::fit(train.x.clone(), &train.labels, &cfg)?;
    let k = clf.gp().kernel();
    println!(
        "signal variance {:.4}, lengthscale {:.4}, log marginal likelihood {:.3}",
        k.signal_variance(),
        k.lengthscale(),
        clf.gp().objective()
    );
    for mode in [PredictionMode::Latent, PredictionMode::Noisy] {
        let p = clf.predict_proba_with(test.x.as_ref(), mode, 1000, 7)?;
        let r = EvalReport::compute(&p.probs, &p.labels_hat, &test.labels)?;
        println!("{:<8} error {:.3}  nll {:.3}  ece {:.3}", mode.as_str(), r.error, r.nll, r.ece);
    }
    Ok(())
}
