//! Fingerprint datasets: loading, the global WAP index, dense RSS vectors and
//! the seeded train/validation/test split.
//!
//! On disk a dataset is two long-format CSV files:
//!
//! ```text
//! fingerprints.csv   fp_id,floor,x,y
//! observations.csv   fp_id,mac,rss_dbm
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const FINGERPRINTS_FILE: &str = "fingerprints.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const SPLIT_FILE: &str = "split.json";

/// Planar position in meters, floor-local frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// One labeled RSS scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub fp_id: u64,
    pub floor: i32,
    pub position: Position,
    /// MAC address to RSS in dBm. Keyed by MAC so each WAP appears once.
    pub observations: BTreeMap<String, f64>,
}

impl Fingerprint {
    pub fn new(
        fp_id: u64,
        floor: i32,
        position: Position,
        observations: impl IntoIterator<Item = (String, f64)>,
    ) -> Self {
        Self {
            fp_id,
            floor,
            position,
            observations: observations.into_iter().collect(),
        }
    }

    /// Checks the non-empty and finite-value invariants.
    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::EmptyFingerprint(self.fp_id));
        }
        if !self.position.is_finite() {
            return Err(Error::contract(format!(
                "fp_id={} has a non-finite position",
                self.fp_id
            )));
        }
        if let Some((mac, _)) = self.observations.iter().find(|(_, r)| !r.is_finite()) {
            return Err(Error::contract(format!(
                "fp_id={} has a non-finite RSS for {mac}",
                self.fp_id
            )));
        }
        Ok(())
    }
}

/// MAC address to dense index. Known MACs are numbered `1..=size` in
/// lexicographic order; index 0 is the bucket for MACs never seen in training.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WapIndex {
    mac_to_idx: BTreeMap<String, usize>,
}

impl WapIndex {
    pub const UNKNOWN: usize = 0;

    pub fn build(fps: &[Fingerprint]) -> Self {
        let macs: BTreeSet<&str> = fps
            .iter()
            .flat_map(|fp| fp.observations.keys().map(String::as_str))
            .collect();
        let mac_to_idx = macs
            .into_iter()
            .enumerate()
            .map(|(i, mac)| (mac.to_owned(), i + 1))
            .collect();
        Self { mac_to_idx }
    }

    /// Rebuilds an index from a stored mapping, checking it is a bijection
    /// onto `1..=size`.
    pub fn from_map(mac_to_idx: BTreeMap<String, usize>) -> Result<Self> {
        let mut seen = vec![false; mac_to_idx.len() + 1];
        for (mac, &idx) in &mac_to_idx {
            if idx == 0 || idx > mac_to_idx.len() || seen[idx] {
                return Err(Error::contract(format!(
                    "WAP index entry {mac}->{idx} is not a bijection onto 1..={}",
                    mac_to_idx.len()
                )));
            }
            seen[idx] = true;
        }
        Ok(Self { mac_to_idx })
    }

    pub fn size(&self) -> usize {
        self.mac_to_idx.len()
    }

    /// Index of `mac`, or [`WapIndex::UNKNOWN`].
    pub fn get(&self, mac: &str) -> usize {
        self.mac_to_idx.get(mac).copied().unwrap_or(Self::UNKNOWN)
    }

    pub fn contains(&self, mac: &str) -> bool {
        self.mac_to_idx.contains_key(mac)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.mac_to_idx.iter().map(|(m, &i)| (m.as_str(), i))
    }

    pub fn as_map(&self) -> &BTreeMap<String, usize> {
        &self.mac_to_idx
    }
}

pub fn build_wap_index(fps: &[Fingerprint]) -> WapIndex {
    WapIndex::build(fps)
}

/// Dense RSS vector of length `index.size()`: slot `j - 1` holds the RSS of
/// the MAC with index `j`, 0 where unobserved. MACs outside the index are
/// dropped.
pub fn rss_vector(fp: &Fingerprint, index: &WapIndex) -> Vec<f64> {
    let mut v = vec![0.0; index.size()];
    for (mac, &rss) in &fp.observations {
        let j = index.get(mac);
        if j != WapIndex::UNKNOWN {
            v[j - 1] = rss;
        }
    }
    v
}

/// Train/validation/test partition of fingerprint ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<u64>,
    pub validation: Vec<u64>,
    pub test: Vec<u64>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Resolves the three id lists against `fps`. Ids missing from `fps`
    /// are an error.
    pub fn partition<'a>(&self, fps: &'a [Fingerprint]) -> Result<SplitSets<'a>> {
        let by_id: BTreeMap<u64, &Fingerprint> = fps.iter().map(|f| (f.fp_id, f)).collect();
        let pick = |ids: &[u64]| -> Result<Vec<&'a Fingerprint>> {
            ids.iter()
                .map(|id| {
                    by_id.get(id).copied().ok_or_else(|| {
                        Error::contract(format!("split references unknown fp_id={id}"))
                    })
                })
                .collect()
        };
        Ok(SplitSets {
            train: pick(&self.train)?,
            validation: pick(&self.validation)?,
            test: pick(&self.test)?,
        })
    }
}

/// Borrowed fingerprints for each part of a [`DatasetSplit`].
#[derive(Debug, Clone)]
pub struct SplitSets<'a> {
    pub train: Vec<&'a Fingerprint>,
    pub validation: Vec<&'a Fingerprint>,
    pub test: Vec<&'a Fingerprint>,
}

pub const MIN_SPLIT_SIZE: usize = 5;

/// 6:2:2 split. Ids are sorted, shuffled with the seeded generator, then cut
/// at `floor(0.6n)` and `floor(0.6n) + floor(0.2n)`; the rounding remainder
/// goes to train.
pub fn split_dataset(fps: &[Fingerprint], seed: u64) -> Result<DatasetSplit> {
    let n = fps.len();
    if n < MIN_SPLIT_SIZE {
        return Err(Error::TooFewFingerprints {
            required: MIN_SPLIT_SIZE,
            actual: n,
        });
    }
    let mut ids: Vec<u64> = fps.iter().map(|f| f.fp_id).collect();
    ids.sort_unstable();
    rng::shuffle(&mut rng::seeded(seed), &mut ids);

    let n_train = n * 6 / 10;
    let n_val = n * 2 / 10;
    let n_test = n * 2 / 10;
    let remainder = n - n_train - n_val - n_test;

    let test = ids.split_off(n - n_test);
    let validation = ids.split_off(n_train + remainder);
    Ok(DatasetSplit {
        seed,
        train: ids,
        validation,
        test,
    })
}

fn load_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| load_error(path, 1, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(load_error(
            path,
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(reader)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| load_error(path, line, format!("cannot parse {name} from {raw:?}")))
}

fn parse_finite(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64> {
    let v: f64 = parse_field(path, line, name, raw)?;
    if !v.is_finite() {
        return Err(load_error(path, line, format!("{name} must be finite, got {raw:?}")));
    }
    Ok(v)
}

/// Reads `fp_id,mac,rss_dbm` rows into per-fingerprint observation maps.
pub fn read_observations(path: impl AsRef<Path>) -> Result<BTreeMap<u64, BTreeMap<String, f64>>> {
    let path = path.as_ref();
    let mut reader = open_csv(path, &["fp_id", "mac", "rss_dbm"])?;
    let mut out: BTreeMap<u64, BTreeMap<String, f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            load_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(load_error(path, line, format!("expected 3 fields, found {}", record.len())));
        }
        let fp_id: u64 = parse_field(path, line, "fp_id", &record[0])?;
        let mac = record[1].to_owned();
        if mac.is_empty() {
            return Err(load_error(path, line, "empty mac"));
        }
        let rss = parse_finite(path, line, "rss_dbm", &record[2])?;
        if out.entry(fp_id).or_default().insert(mac.clone(), rss).is_some() {
            return Err(Error::DuplicateObservation { fp_id, mac });
        }
    }
    Ok(out)
}

/// Loads and joins the two dataset files.
pub fn load_dataset(
    fingerprints_path: impl AsRef<Path>,
    observations_path: impl AsRef<Path>,
) -> Result<Vec<Fingerprint>> {
    let fp_path = fingerprints_path.as_ref();
    let mut reader = open_csv(fp_path, &["fp_id", "floor", "x", "y"])?;
    let mut fps: BTreeMap<u64, Fingerprint> = BTreeMap::new();
    let mut order = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            load_error(fp_path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(load_error(fp_path, line, format!("expected 4 fields, found {}", record.len())));
        }
        let fp_id: u64 = parse_field(fp_path, line, "fp_id", &record[0])?;
        let floor: i32 = parse_field(fp_path, line, "floor", &record[1])?;
        let x = parse_finite(fp_path, line, "x", &record[2])?;
        let y = parse_finite(fp_path, line, "y", &record[3])?;
        let fp = Fingerprint::new(fp_id, floor, Position::new(x, y), []);
        if fps.insert(fp_id, fp).is_some() {
            return Err(Error::DuplicateFingerprint(fp_id));
        }
        order.push(fp_id);
    }

    for (fp_id, obs) in read_observations(observations_path)? {
        match fps.get_mut(&fp_id) {
            Some(fp) => fp.observations = obs,
            None => return Err(Error::OrphanObservation(fp_id)),
        }
    }

    order
        .into_iter()
        .map(|id| {
            let fp = fps.remove(&id).expect("id recorded on insert");
            fp.validate()?;
            Ok(fp)
        })
        .collect()
}

/// Loads `fingerprints.csv` and `observations.csv` from `dir`.
pub fn load_dataset_dir(dir: impl AsRef<Path>) -> Result<Vec<Fingerprint>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    load_dataset(dir.join(FINGERPRINTS_FILE), dir.join(OBSERVATIONS_FILE))
}

/// Loads unlabeled scans in the observations format. Positions are zero and
/// floors unset; only the observations carry information.
pub fn load_scans(path: impl AsRef<Path>) -> Result<Vec<Fingerprint>> {
    Ok(read_observations(path)?
        .into_iter()
        .map(|(fp_id, obs)| Fingerprint {
            fp_id,
            floor: 0,
            position: Position::default(),
            observations: obs,
        })
        .collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes the dataset pair into `dir` and returns the two paths.
pub fn write_dataset(fps: &[Fingerprint], dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fp_path = dir.join(FINGERPRINTS_FILE);
    let obs_path = dir.join(OBSERVATIONS_FILE);

    let mut w = create(&fp_path)?;
    let io = |e| Error::io(&fp_path, e);
    writeln!(w, "fp_id,floor,x,y").map_err(io)?;
    for fp in fps {
        writeln!(w, "{},{},{},{}", fp.fp_id, fp.floor, fp.position.x, fp.position.y).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let mut w = create(&obs_path)?;
    let io = |e| Error::io(&obs_path, e);
    writeln!(w, "fp_id,mac,rss_dbm").map_err(io)?;
    for fp in fps {
        for (mac, rss) in &fp.observations {
            writeln!(w, "{},{},{}", fp.fp_id, mac, rss).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    Ok((fp_path, obs_path))
}
