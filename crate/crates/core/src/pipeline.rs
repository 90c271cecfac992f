//! Per-floor orchestration: baselines, model training and evaluation over a
//! dataset split. Each floor is handled independently and predictions are
//! pooled across floors into one report per algorithm.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::{compute_report, ErrorReport};
use crate::fingerprint::{build_wap_index, DatasetSplit, Fingerprint, Position};
use crate::model::{self, DnlModel, TrainOutcome, TrainingConfig};
use crate::neighborhood::{estimate, ReferenceSet, Weighting};

/// The split restricted to one floor.
#[derive(Debug, Clone)]
pub struct FloorSplit<'a> {
    pub floor: i32,
    pub train: Vec<&'a Fingerprint>,
    pub validation: Vec<&'a Fingerprint>,
    pub test: Vec<&'a Fingerprint>,
}

/// Groups the split by floor, ascending.
pub fn floor_splits<'a>(fps: &'a [Fingerprint], split: &DatasetSplit) -> Result<Vec<FloorSplit<'a>>> {
    let sets = split.partition(fps)?;
    let mut floors: BTreeMap<i32, FloorSplit<'a>> = BTreeMap::new();
    let parts = [(0, sets.train), (1, sets.validation), (2, sets.test)];
    for (part, members) in parts {
        for fp in members {
            let f = floors.entry(fp.floor).or_insert_with(|| FloorSplit {
                floor: fp.floor,
                train: Vec::new(),
                validation: Vec::new(),
                test: Vec::new(),
            });
            match part {
                0 => f.train.push(fp),
                1 => f.validation.push(fp),
                _ => f.test.push(fp),
            }
        }
    }
    Ok(floors.into_values().collect())
}

/// Predictions and truths pooled over floors, in floor then test order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub fp_ids: Vec<u64>,
    pub predicted: Vec<Position>,
    pub truth: Vec<Position>,
}

impl Predictions {
    pub fn report(&self, name: &str) -> Result<ErrorReport> {
        compute_report(&self.predicted, &self.truth, name)
    }
}

/// KNN or WKNN predictions for every test fingerprint, neighbors drawn from
/// the same floor's training set with a train-only WAP index.
pub fn baseline_predictions(floors: &[FloorSplit<'_>], k: usize, weighting: Weighting) -> Result<Predictions> {
    let mut out = Predictions::default();
    for f in floors {
        if f.test.is_empty() {
            continue;
        }
        let owned: Vec<Fingerprint> = f.train.iter().map(|fp| (*fp).clone()).collect();
        let index = build_wap_index(&owned);
        let refs = ReferenceSet::new(f.train.iter().copied(), &index);
        for fp in &f.test {
            let c = refs.community(fp, k)?;
            out.fp_ids.push(fp.fp_id);
            out.predicted.push(estimate(&c, weighting));
            out.truth.push(fp.position);
        }
    }
    Ok(out)
}

/// KNN and WKNN reports, in that order.
pub fn run_baselines(floors: &[FloorSplit<'_>], k: usize) -> Result<Vec<ErrorReport>> {
    [Weighting::Uniform, Weighting::InverseDistance]
        .into_iter()
        .map(|w| baseline_predictions(floors, k, w)?.report(w.name()))
        .collect()
}

/// Trains one model per floor.
pub fn train_floors(floors: &[FloorSplit<'_>], cfg: &TrainingConfig) -> Result<Vec<(i32, TrainOutcome)>> {
    floors
        .iter()
        .map(|f| {
            if f.validation.is_empty() {
                return Err(Error::contract(format!("floor {} has no validation fingerprints", f.floor)));
            }
            let outcome = model::train(&f.train, &f.validation, cfg)?;
            Ok((f.floor, outcome))
        })
        .collect()
}

/// Model predictions for every test fingerprint using that floor's model.
pub fn model_predictions(floors: &[FloorSplit<'_>], models: &BTreeMap<i32, DnlModel>) -> Result<Predictions> {
    let mut out = Predictions::default();
    for f in floors {
        if f.test.is_empty() {
            continue;
        }
        let model = models
            .get(&f.floor)
            .ok_or_else(|| Error::contract(format!("no model for floor {}", f.floor)))?;
        let refs = ReferenceSet::new(f.train.iter().copied(), &model.wap_index);
        for fp in &f.test {
            out.fp_ids.push(fp.fp_id);
            out.predicted.push(model.predict_with(&refs, fp)?);
            out.truth.push(fp.position);
        }
    }
    Ok(out)
}
