//! File-based workflow: write a dataset to CSV, read it back, normalize,
//! split, fit, save the model and reload it.

use ilr_gp::data::{gen_circle_mixture, load_table, normalize, split, write_with_sidecar, NormMode, Sidecar, SplitSpec};
use ilr_gp::model_io::TrainedModel;
use ilr_gp::pipeline::{evaluate, fit_model, ModelKind, ModelSpec};

fn main() -> ilr_gp::Result<()> {
    let dir = std::env::temp_dir().join("ilrgp-csv-pipeline");
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join("mixture.csv");
    let generated = gen_circle_mixture(3, 500, 0.4, 21)?;
    write_with_sidecar(&generated, &csv, &Sidecar::for_dataset(&generated))?;

    let ds = load_table(&csv, "label")?;
    let (train, val, test, _) = split(&ds, &SplitSpec::new(0.72, 0.08, 0.20, 5)?);
    let (stats, parts) = normalize(&train, &[&train, &val, &test], NormMode::Zscore)?;
    let spec = ModelSpec::new(ModelKind::Ilr, ds.classes);
    let model = TrainedModel {
        classifier: fit_model(&spec, &parts[0])?,
        spec,
        class_names: ds.class_names.clone(),
        feature_names: ds.feature_names.clone(),
        normalization: stats,
        seed: 5,
        config: serde_json::json!({ "source": csv.display().to_string() }),
    };
    let path = dir.join("model.json");
    model.save(&path)?;
    let loaded = TrainedModel::load(&path)?;
    let before = evaluate(&model.classifier, &parts[2], 1)?;
    let after = evaluate(&loaded.classifier, &parts[2], 1)?;
    println!("test error {:.3} nll {:.4} (reloaded: {:.3} {:.4})", before.error, before.nll, after.error, after.nll);
    println!("wrote {} and {}", csv.display(), path.display());
    Ok(())
}
