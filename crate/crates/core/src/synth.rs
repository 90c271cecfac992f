//! Synthetic radio maps from a log-distance path-loss model.
//!
//! `RSS(d) = p0 - 10 * eta * log10(max(d, 1 m)) + N(0, sigma^2)`, with readings
//! below the detection threshold dropped. Draw order from the seeded
//! generator: WAP positions, then for each fingerprint its position followed
//! by one shadowing sample per WAP (repeated on resampling).

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{write_dataset, Fingerprint, Position};
use crate::rng::{self, Rng};

pub const WAPS_TRUTH_FILE: &str = "waps_truth.csv";
pub const MAX_RESAMPLE_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Positions uniform over the floor.
    Uniform,
    /// Cell centers of the smallest near-square grid holding `n_fps` points,
    /// filled row by row.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioMapConfig {
    pub width: f64,
    pub height: f64,
    pub n_waps: usize,
    pub n_fps: usize,
    /// RSS at the 1 m reference distance, dBm.
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    /// Log-normal shadowing standard deviation, dB.
    pub shadowing_std: f64,
    pub detection_threshold_dbm: f64,
    pub floor: i32,
    pub layout: Layout,
    pub seed: u64,
}

impl Default for RadioMapConfig {
    fn default() -> Self {
        Self {
            width: 100.0,
            height: 80.0,
            n_waps: 60,
            n_fps: 2000,
            tx_power_dbm: -30.0,
            path_loss_exponent: 3.0,
            shadowing_std: 4.0,
            detection_threshold_dbm: -95.0,
            floor: 1,
            layout: Layout::Uniform,
            seed: 0,
        }
    }
}

impl RadioMapConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Generation(m.to_owned()));
        if !(self.width > 0.0 && self.height > 0.0) || !self.width.is_finite() || !self.height.is_finite() {
            return bad("floor extent must be positive");
        }
        if self.n_waps == 0 || self.n_fps == 0 {
            return bad("n_waps and n_fps must be positive");
        }
        if !(self.shadowing_std >= 0.0) {
            return bad("shadowing std must be non-negative");
        }
        if !(self.detection_threshold_dbm < self.tx_power_dbm) {
            return bad("detection threshold must be below the reference power");
        }
        if !self.path_loss_exponent.is_finite() || !self.tx_power_dbm.is_finite() {
            return bad("path-loss parameters must be finite");
        }
        Ok(())
    }

    /// Noise-free RSS at distance `d` meters.
    pub fn mean_rss(&self, d: f64) -> f64 {
        self.tx_power_dbm - 10.0 * self.path_loss_exponent * d.max(1.0).log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WapPlacement {
    pub mac: String,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    pub fingerprints: Vec<Fingerprint>,
    pub waps: Vec<WapPlacement>,
}

/// Locally administered MAC for WAP number `i`.
pub fn wap_mac(i: usize) -> String {
    let b = (i as u32).to_be_bytes();
    format!("02:00:{:02x}:{:02x}:{:02x}:{:02x}", b[0], b[1], b[2], b[3])
}

fn distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

fn grid_position(cfg: &RadioMapConfig, i: usize) -> Position {
    let nx = ((cfg.n_fps as f64 * cfg.width / cfg.height).sqrt().ceil() as usize).max(1);
    let ny = cfg.n_fps.div_ceil(nx);
    let (cx, cy) = (i % nx, i / nx);
    Position::new(
        (cx as f64 + 0.5) * cfg.width / nx as f64,
        (cy as f64 + 0.5) * cfg.height / ny as f64,
    )
}

fn uniform_position(rng: &mut Rng, width: f64, height: f64) -> Position {
    let x = rng::unit(rng) * width;
    let y = rng::unit(rng) * height;
    Position::new(x, y)
}

pub fn generate(cfg: &RadioMapConfig) -> Result<RadioMap> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let waps: Vec<WapPlacement> = (0..cfg.n_waps)
        .map(|i| WapPlacement {
            mac: wap_mac(i),
            position: uniform_position(&mut rng, cfg.width, cfg.height),
        })
        .collect();

    let mut fingerprints = Vec::with_capacity(cfg.n_fps);
    for i in 0..cfg.n_fps {
        let mut attempt = 0;
        let fp = loop {
            if attempt == MAX_RESAMPLE_ATTEMPTS {
                return Err(Error::Generation(format!(
                    "fingerprint {i} observed no WAP after {MAX_RESAMPLE_ATTEMPTS} attempts"
                )));
            }
            attempt += 1;
            let position = match cfg.layout {
                Layout::Uniform => uniform_position(&mut rng, cfg.width, cfg.height),
                Layout::Grid => grid_position(cfg, i),
            };
            let observations: Vec<(String, f64)> = waps
                .iter()
                .filter_map(|w| {
                    let noise = rng::standard_normal(&mut rng);
                    let rss = cfg.mean_rss(distance(position, w.position)) + cfg.shadowing_std * noise;
                    (rss >= cfg.detection_threshold_dbm).then(|| (w.mac.clone(), rss))
                })
                .collect();
            if !observations.is_empty() {
                break Fingerprint::new(i as u64, cfg.floor, position, observations);
            }
        };
        fingerprints.push(fp);
    }
    Ok(RadioMap { fingerprints, waps })
}

/// Replaces the labels of `ceil(fraction * n)` seeded-random fingerprints
/// with uniform positions on the `width x height` floor. RSS is untouched.
pub fn inject_outliers(
    fps: &[Fingerprint],
    fraction: f64,
    width: f64,
    height: f64,
    seed: u64,
) -> Result<(Vec<Fingerprint>, BTreeSet<u64>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::contract(format!("outlier fraction {fraction} outside [0, 1]")));
    }
    let raw = fraction * fps.len() as f64;
    // Absorb representation error so that e.g. 0.05 * 2000 counts as exactly 100.
    let count = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    } as usize;

    let mut rng = rng::seeded(seed);
    let mut order: Vec<usize> = (0..fps.len()).collect();
    rng::shuffle(&mut rng, &mut order);
    order.truncate(count);
    order.sort_unstable();

    let mut out = fps.to_vec();
    let mut ids = BTreeSet::new();
    for i in order {
        out[i].position = uniform_position(&mut rng, width, height);
        ids.insert(out[i].fp_id);
    }
    Ok((out, ids))
}

/// Writes the dataset CSV pair plus `waps_truth.csv` (`mac,x,y`) into `dir`.
pub fn write_radio_map(map: &RadioMap, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write_dataset(&map.fingerprints, dir)?;
    let path = dir.join(WAPS_TRUTH_FILE);
    let io = |e| Error::io(&path, e);
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    writeln!(w, "mac,x,y").map_err(io)?;
    for wap in &map.waps {
        writeln!(w, "{},{},{}", wap.mac, wap.position.x, wap.position.y).map_err(io)?;
    }
    w.flush().map_err(io)
}
