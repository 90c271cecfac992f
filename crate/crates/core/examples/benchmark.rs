//! Full comparison of KNN, WKNN and DNL on the default synthetic floor,
//! written as `report.md` and `cdf.csv`.
//!
//! `cargo run --release --example benchmark -- [out_dir] [seed]`

use std::collections::BTreeMap;

use dnl::eval::emit_comparison;
use dnl::fingerprint::split_dataset;
use dnl::model::TrainingConfig;
use dnl::pipeline::{floor_splits, model_predictions, run_baselines, train_floors};
use dnl::synth::{generate, RadioMapConfig};

fn main() -> dnl::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "benchmark".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);

    let map = generate(&RadioMapConfig { seed, ..Default::default() })?;
    let split = split_dataset(&map.fingerprints, seed)?;
    let floors = floor_splits(&map.fingerprints, &split)?;
    let mut reports = run_baselines(&floors, 10)?;

    let cfg = TrainingConfig { seed, jobs: 3, ..Default::default() };
    let models: BTreeMap<_, _> = train_floors(&floors, &cfg)?.into_iter().map(|(f, o)| (f, o.model)).collect();
    reports.push(model_predictions(&floors, &models)?.report("DNL")?);

    let (md, _) = emit_comparison(&reports, &out, &[format!("Synthetic floor, seed {seed}.")])?;
    print!("{}", std::fs::read_to_string(md).unwrap());
    Ok(())
}
