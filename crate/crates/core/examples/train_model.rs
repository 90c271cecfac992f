//! Trains a model on a small floor, saves it, reloads it and locates a scan.
//!
//! `cargo run --release --example train_model -- [epochs]`

use dnl::fingerprint::split_dataset;
use dnl::model::{self, TrainingConfig};
use dnl::synth::{generate, RadioMapConfig};

fn main() -> dnl::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let cfg = RadioMapConfig { n_fps: 600, width: 60.0, height: 40.0, n_waps: 30, seed: 3, ..Default::default() };
    let fps = generate(&cfg)?.fingerprints;
    let sets = split_dataset(&fps, 3)?.partition(&fps)?;

    let train_cfg = TrainingConfig { epochs, batch_sizes: vec![32, 64], seed: 3, progress: true, ..Default::default() };
    let outcome = model::train(&sets.train, &sets.validation, &train_cfg)?;
    let summary = outcome.model.summary.unwrap();
    println!(
        "best validation loss {:.5} (batch {}, epoch {}), {} parameters",
        summary.best_val_loss,
        summary.best_batch_size,
        summary.best_epoch,
        outcome.model.params.parameter_count()
    );

    let path = std::env::temp_dir().join("dnl_example_model.json");
    model::save_checkpoint(&outcome.model, &path)?;
    let loaded = model::load_checkpoint(&path)?;
    let scan = sets.test[0];
    let p = loaded.predict_scans(std::slice::from_ref(scan))?[0];
    println!(
        "scan {} predicted at ({:.1}, {:.1}), truth ({:.1}, {:.1})",
        scan.fp_id, p.x, p.y, scan.position.x, scan.position.y
    );
    Ok(())
}
