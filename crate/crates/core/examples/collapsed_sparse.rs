//! Collapsed sparse GP: the bound against the exact marginal likelihood as
//! the inducing set grows, and the classifier with a sparse backend.
//!
//! cargo run --release --example collapsed_sparse

use ilr_gp::classifiers::{build_ilr_pseudo, Backend, IlrClassifierConfig};
use ilr_gp::data::gen_overlap_toy;
use ilr_gp::gp::{initial_kernel, marginal_log_likelihood};
use ilr_gp::pipeline::{evaluate, fit_model, ModelKind, ModelSpec};
use ilr_gp::simplex::SmoothingConfig;
use ilr_gp::sparse::{collapsed_bound, kmeanspp_select};

fn main() -> ilr_gp::Result<()> {
    let train = gen_overlap_toy(0.1, 300, 5)?;
    let cfg = IlrClassifierConfig::new(SmoothingConfig::with_default_epsilon(0.9, 3)?);
    let pseudo = build_ilr_pseudo(&train.labels, &cfg)?;
    let kernel = initial_kernel(train.x.as_ref(), &pseudo)?;
    let exact = marginal_log_likelihood(&kernel, train.x.as_ref(), &pseudo)?;
    println!("exact log marginal likelihood {exact:.3}");
    for m in [5, 10, 20, 50, 100, 300] {
        let inducing = kmeanspp_select(train.x.as_ref(), m, 0)?;
        let bound = collapsed_bound(&kernel, train.x.as_ref(), inducing.points(), &pseudo)?;
        println!("M = {m:>3}: bound {bound:>10.3}  gap {:.3e}", exact - bound);
    }

    let test = gen_overlap_toy(0.1, 300, 6)?;
    let mut spec = ModelSpec::new(ModelKind::Ilr, 3);
    for backend in [Backend::Collapsed { inducing: 30, seed: 0 }, Backend::Exact] {
        spec.backend = backend;
        let r = evaluate(&fit_model(&spec, &train)?, &test, 0)?;
        println!("{backend:?}: error {:.3}, nll {:.3}", r.error, r.nll);
    }
    Ok(())
}
