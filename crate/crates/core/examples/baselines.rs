//! KNN and WKNN on a synthetic floor with the 6:2:2 split.

use dnl::fingerprint::split_dataset;
use dnl::pipeline::{floor_splits, run_baselines};
use dnl::synth::{generate, RadioMapConfig};

fn main() -> dnl::Result<()> {
    let map = generate(&RadioMapConfig { seed: 7, ..Default::default() })?;
    let split = split_dataset(&map.fingerprints, 7)?;
    let floors = floor_splits(&map.fingerprints, &split)?;
    for k in [1, 5, 10, 20] {
        for r in run_baselines(&floors, k)? {
            println!(
                "k={k:<2} {:<4} MAE {:5.2} m  RMSE {:5.2} m  68% {:5.2} m  95% {:5.2} m",
                r.algorithm, r.mae, r.rmse, r.cdf68, r.cdf95
            );
        }
    }
    Ok(())
}
