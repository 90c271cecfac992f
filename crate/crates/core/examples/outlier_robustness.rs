//! Corrupts a fraction of the training labels and compares how much each
//! method degrades.
//!
//! `cargo run --release --example outlier_robustness -- [fraction] [epochs]`

use std::collections::{BTreeMap, BTreeSet};

use dnl::eval::ErrorReport;
use dnl::fingerprint::{split_dataset, DatasetSplit, Fingerprint};
use dnl::model::TrainingConfig;
use dnl::pipeline::{floor_splits, model_predictions, run_baselines, train_floors};
use dnl::synth::{generate, inject_outliers, RadioMapConfig};

fn evaluate(fps: &[Fingerprint], split: &DatasetSplit, epochs: usize) -> dnl::Result<Vec<ErrorReport>> {
    let floors = floor_splits(fps, split)?;
    let mut reports = run_baselines(&floors, 10)?;
    let cfg = TrainingConfig { epochs, seed: 42, jobs: 3, ..Default::default() };
    let models: BTreeMap<_, _> = train_floors(&floors, &cfg)?.into_iter().map(|(f, o)| (f, o.model)).collect();
    reports.push(model_predictions(&floors, &models)?.report("DNL")?);
    Ok(reports)
}

fn main() -> dnl::Result<()> {
    let mut args = std::env::args().skip(1);
    let fraction: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);

    let cfg = RadioMapConfig { seed: 42, ..Default::default() };
    let map = generate(&cfg)?;
    let split = split_dataset(&map.fingerprints, 42)?;

    // Only training labels are corrupted; validation and test stay clean.
    let train_ids: BTreeSet<u64> = split.train.iter().copied().collect();
    let train: Vec<Fingerprint> = map.fingerprints.iter().filter(|f| train_ids.contains(&f.fp_id)).cloned().collect();
    let (corrupted, moved) = inject_outliers(&train, fraction, cfg.width, cfg.height, 42)?;
    let relabeled: BTreeMap<u64, Fingerprint> = corrupted.into_iter().map(|f| (f.fp_id, f)).collect();
    let noisy: Vec<Fingerprint> = map
        .fingerprints
        .iter()
        .map(|f| relabeled.get(&f.fp_id).cloned().unwrap_or_else(|| f.clone()))
        .collect();
    println!("{} of {} training labels relocated", moved.len(), train.len());

    let clean = evaluate(&map.fingerprints, &split, epochs)?;
    let dirty = evaluate(&noisy, &split, epochs)?;
    for (c, d) in clean.iter().zip(&dirty) {
        println!(
            "{:<4} RMSE {:5.2} -> {:5.2} m   95% {:5.2} -> {:5.2} m",
            c.algorithm, c.rmse, d.rmse, c.cdf95, d.cdf95
        );
    }
    Ok(())
}
