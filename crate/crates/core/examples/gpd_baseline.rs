//! The Dirichlet-based baseline: lognormal pseudo-targets with per-entry
//! noise, next to the ILR classifier on the same data.

use ilr_gp::classifiers::{gpd_moments, GpdClassifier, GpdClassifierConfig};
use ilr_gp::data::gen_circle_mixture;
use ilr_gp::pipeline::{evaluate, fit_model, ModelKind, ModelSpec};

fn main() -> ilr_gp::Result<()> {
    for alpha in [1.01, 0.01] {
        let (mean, var) = gpd_moments(alpha);
        println!("alpha {alpha:<5} -> mean {mean:>8.4}, variance {var:.4}");
    }

    let train = gen_circle_mixture(4, 400, 0.3, 3)?;
    let test = gen_circle_mixture(4, 400, 0.3, 4)?;
    let gpd = GpdClassifier::fit(train.x.clone(), &train.labels, &GpdClassifierConfig::new(4, 0.01))?;
    let p = gpd.predict_proba(test.x.as_ref(), 0)?;
    println!("\nfirst test point: {:?} (true class {})", p.probs[0], test.labels[0]);

    for kind in [ModelKind::Gpd, ModelKind::Ilr] {
        let clf = fit_model(&ModelSpec::new(kind, 4), &train)?;
        let r = evaluate(&clf, &test, 0)?;
        println!("{:<3} error {:.3}  nll {:.3}  ece {:.3}", kind.as_str(), r.error, r.nll, r.ece);
    }
    Ok(())
}
