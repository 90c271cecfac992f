//! The graph positioning network and its training loop.
//!
//! ```text
//! FP features (x, y, is_target) --MLP 3-8-8-8--+
//!                                               +--> GIN --> GIN --> mean(FP) + mean(WAP) --> MLP 8-64-2
//! WAP mac_index --embedding [size+1 x 8]-------+
//! ```
//!
//! Each GIN layer is `relu(mlp((1 + eps) h_v + sum_u w_uv h_u))` with a two
//! layer internal MLP and `eps = 0`. Outputs are normalized coordinates; see
//! [`NormalizationParams`].

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, Position, WapIndex};
use crate::graph::{build_graph, fit_normalization, CommunityGraph, NormalizationParams};
use crate::neighborhood::{ReferenceSet, DEFAULT_K};
use crate::nn::{
    self, clip_global_norm, gin_aggregate, gin_aggregate_backward, mean_readout,
    mean_readout_backward, relu, relu_backward, AdamState, Linear, Matrix, PlateauScheduler,
    WeightedEdge,
};
use crate::rng;

pub const HIDDEN: usize = 8;
pub const HEAD_HIDDEN: usize = 64;
pub const FP_FEATURES: usize = 3;
pub const GIN_EPS: f64 = 0.0;
pub const EMBEDDING_STD: f64 = 0.1;
pub const CHECKPOINT_SCHEMA: u32 = 1;

/// Every trainable tensor of the network. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DnlParams {
    pub fp_extractor: [Linear; 3],
    pub wap_embedding: Matrix,
    pub gin1: [Linear; 2],
    pub gin2: [Linear; 2],
    pub head: [Linear; 2],
}

impl DnlParams {
    /// Glorot-uniform linear weights, zero biases, `N(0, 0.1^2)` embeddings.
    pub fn init(wap_count: usize, rng: &mut rng::Rng) -> Self {
        Self {
            fp_extractor: [
                Linear::new(FP_FEATURES, HIDDEN, rng),
                Linear::new(HIDDEN, HIDDEN, rng),
                Linear::new(HIDDEN, HIDDEN, rng),
            ],
            wap_embedding: nn::normal(wap_count + 1, HIDDEN, EMBEDDING_STD, rng),
            gin1: [Linear::new(HIDDEN, HIDDEN, rng), Linear::new(HIDDEN, HIDDEN, rng)],
            gin2: [Linear::new(HIDDEN, HIDDEN, rng), Linear::new(HIDDEN, HIDDEN, rng)],
            head: [Linear::new(HIDDEN, HEAD_HIDDEN, rng), Linear::new(HEAD_HIDDEN, 2, rng)],
        }
    }

    pub fn zeros(wap_count: usize) -> Self {
        Self {
            fp_extractor: [
                Linear::zeros(FP_FEATURES, HIDDEN),
                Linear::zeros(HIDDEN, HIDDEN),
                Linear::zeros(HIDDEN, HIDDEN),
            ],
            wap_embedding: Matrix::zeros(wap_count + 1, HIDDEN),
            gin1: [Linear::zeros(HIDDEN, HIDDEN), Linear::zeros(HIDDEN, HIDDEN)],
            gin2: [Linear::zeros(HIDDEN, HIDDEN), Linear::zeros(HIDDEN, HIDDEN)],
            head: [Linear::zeros(HIDDEN, HEAD_HIDDEN), Linear::zeros(HEAD_HIDDEN, 2)],
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut v: Vec<(String, &Matrix)> = Vec::with_capacity(19);
        for (i, l) in self.fp_extractor.iter().enumerate() {
            v.push((format!("fp_extractor.{i}.weight"), &l.weight));
            v.push((format!("fp_extractor.{i}.bias"), &l.bias));
        }
        v.push(("wap_embedding".to_owned(), &self.wap_embedding));
        let rest = [("gin1.mlp", &self.gin1), ("gin2.mlp", &self.gin2), ("head", &self.head)];
        for (prefix, layers) in rest {
            for (i, l) in layers.iter().enumerate() {
                v.push((format!("{prefix}.{i}.weight"), &l.weight));
                v.push((format!("{prefix}.{i}.bias"), &l.bias));
            }
        }
        v
    }

    /// Mutable tensors in the same order as [`DnlParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = Vec::with_capacity(19);
        for l in self.fp_extractor.iter_mut() {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v.push(&mut self.wap_embedding);
        for l in self
            .gin1
            .iter_mut()
            .chain(self.gin2.iter_mut())
            .chain(self.head.iter_mut())
        {
            v.push(&mut l.weight);
            v.push(&mut l.bias);
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    fn add_assign(&mut self, other: &DnlParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b.1);
        }
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }
}

/// A graph converted into the dense inputs the network consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGraph {
    fp_features: Matrix,
    fp_rows: Vec<usize>,
    wap_rows: Vec<usize>,
    mac_indices: Vec<usize>,
    edges: Vec<WeightedEdge>,
    n_nodes: usize,
    /// Label in normalized coordinates.
    pub target: Option<[f64; 2]>,
}

impl PreparedGraph {
    pub fn new(g: &CommunityGraph, wap_table_rows: usize) -> Result<Self> {
        let mut feats = Vec::with_capacity(g.fp_nodes.len() * FP_FEATURES);
        for n in &g.fp_nodes {
            feats.extend_from_slice(&n.feature);
        }
        if let Some(w) = g.wap_nodes.iter().find(|w| w.mac_index >= wap_table_rows) {
            return Err(Error::contract(format!(
                "mac_index {} outside embedding table of {wap_table_rows} rows",
                w.mac_index
            )));
        }
        Ok(Self {
            fp_features: Matrix::from_vec(g.fp_nodes.len(), FP_FEATURES, feats)?,
            fp_rows: g.fp_nodes.iter().map(|n| n.node_id).collect(),
            wap_rows: g.wap_nodes.iter().map(|n| n.node_id).collect(),
            mac_indices: g.wap_nodes.iter().map(|n| n.mac_index).collect(),
            edges: g
                .edges
                .iter()
                .map(|e| WeightedEdge {
                    a: e.fp_node,
                    b: e.wap_node,
                    weight: e.weight,
                })
                .collect(),
            n_nodes: g.node_count(),
            target: g.label.map(|p| g.norm.normalize(p)),
        })
    }
}

/// Forward-pass intermediates needed by the backward pass.
struct Trace {
    fp_pre: [Matrix; 2],
    fp_act: [Matrix; 2],
    h0: Matrix,
    gin: [GinTrace; 2],
    readout: Matrix,
    head_act: Matrix,
    out: Matrix,
}

struct GinTrace {
    agg: Matrix,
    hidden: Matrix,
    out: Matrix,
}

fn gin_forward(layer: &[Linear; 2], h: &Matrix, edges: &[WeightedEdge]) -> Result<GinTrace> {
    let agg = gin_aggregate(h, edges, GIN_EPS)?;
    let hidden = relu(&layer[0].forward(&agg)?);
    let out = relu(&layer[1].forward(&hidden)?);
    Ok(GinTrace { agg, hidden, out })
}

fn gin_backward(
    layer: &[Linear; 2],
    t: &GinTrace,
    d_out: &Matrix,
    edges: &[WeightedEdge],
    grad: &mut [Linear; 2],
) -> Result<Matrix> {
    let d = relu_backward(&t.out, d_out);
    let d = layer[1].backward(&t.hidden, &d, &mut grad[1]);
    let d = relu_backward(&t.hidden, &d);
    let d = layer[0].backward(&t.agg, &d, &mut grad[0]);
    gin_aggregate_backward(&d, edges, GIN_EPS)
}

impl DnlParams {
    fn trace(&self, g: &PreparedGraph) -> Result<Trace> {
        let [f0, f1, f2] = &self.fp_extractor;
        let p0 = f0.forward(&g.fp_features)?;
        let a0 = relu(&p0);
        let p1 = f1.forward(&a0)?;
        let a1 = relu(&p1);
        let z_fp = f2.forward(&a1)?;

        let mut h0 = Matrix::zeros(g.n_nodes, HIDDEN);
        for (i, &row) in g.fp_rows.iter().enumerate() {
            h0.row_mut(row).copy_from_slice(z_fp.row(i));
        }
        for (&row, &mac) in g.wap_rows.iter().zip(&g.mac_indices) {
            if mac >= self.wap_embedding.rows() {
                return Err(Error::contract(format!("mac_index {mac} outside embedding table")));
            }
            h0.row_mut(row).copy_from_slice(self.wap_embedding.row(mac));
        }

        let t1 = gin_forward(&self.gin1, &h0, &g.edges)?;
        let t2 = gin_forward(&self.gin2, &t1.out, &g.edges)?;
        let readout = mean_readout(&t2.out, &[&g.fp_rows, &g.wap_rows])?;
        let head_act = relu(&self.head[0].forward(&readout)?);
        let out = self.head[1].forward(&head_act)?;
        Ok(Trace {
            fp_pre: [p0, p1],
            fp_act: [a0, a1],
            h0,
            gin: [t1, t2],
            readout,
            head_act,
            out,
        })
    }

    /// Normalized position estimate for one graph.
    pub fn forward(&self, g: &PreparedGraph) -> Result<[f64; 2]> {
        let out = self.trace(g)?.out;
        Ok([out.get(0, 0), out.get(0, 1)])
    }

    /// MSE loss against the graph label and the gradient of every parameter.
    pub fn loss_and_grad(&self, g: &PreparedGraph) -> Result<(f64, DnlParams)> {
        let target = g
            .target
            .ok_or_else(|| Error::contract("loss needs a labeled graph"))?;
        let target = Matrix::row_vector(&target);
        let tr = self.trace(g)?;
        let loss = nn::mse_loss(&tr.out, &target)?;
        let mut grad = DnlParams::zeros(self.wap_embedding.rows() - 1);

        let d_out = nn::mse_loss_backward(&tr.out, &target);
        let d = self.head[1].backward(&tr.head_act, &d_out, &mut grad.head[1]);
        let d = relu_backward(&tr.head_act, &d);
        let d_readout = self.head[0].backward(&tr.readout, &d, &mut grad.head[0]);

        let d_h2 = mean_readout_backward(&d_readout, g.n_nodes, &[&g.fp_rows, &g.wap_rows]);
        let d_h1 = gin_backward(&self.gin2, &tr.gin[1], &d_h2, &g.edges, &mut grad.gin2)?;
        let d_h0 = gin_backward(&self.gin1, &tr.gin[0], &d_h1, &g.edges, &mut grad.gin1)?;
        debug_assert_eq!(d_h0.shape(), tr.h0.shape());

        for (&row, &mac) in g.wap_rows.iter().zip(&g.mac_indices) {
            for (e, d) in grad.wap_embedding.row_mut(mac).iter_mut().zip(d_h0.row(row)) {
                *e += d;
            }
        }
        let mut d_zfp = Matrix::zeros(g.fp_rows.len(), HIDDEN);
        for (i, &row) in g.fp_rows.iter().enumerate() {
            d_zfp.row_mut(i).copy_from_slice(d_h0.row(row));
        }
        let [f0, f1, f2] = &self.fp_extractor;
        let d = f2.backward(&tr.fp_act[1], &d_zfp, &mut grad.fp_extractor[2]);
        let d = relu_backward(&tr.fp_act[1], &d);
        let d = f1.backward(&tr.fp_act[0], &d, &mut grad.fp_extractor[1]);
        let d = relu_backward(&tr.fp_act[0], &d);
        let _ = f0.backward(&g.fp_features, &d, &mut grad.fp_extractor[0]);
        debug_assert_eq!(tr.fp_pre[0].rows(), g.fp_rows.len());

        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Numeric("non-finite loss or gradient".into()));
        }
        Ok((loss, grad))
    }

    /// Loss only, for validation and finite-difference checks.
    pub fn loss(&self, g: &PreparedGraph) -> Result<f64> {
        let target = g
            .target
            .ok_or_else(|| Error::contract("loss needs a labeled graph"))?;
        let out = self.trace(g)?.out;
        nn::mse_loss(&out, &Matrix::row_vector(&target))
    }
}

/// Hyperparameters of a training session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub k: usize,
    pub batch_sizes: Vec<usize>,
    pub epochs: usize,
    pub initial_lr: f64,
    pub seed: u64,
    pub clip_norm: f64,
    /// Worker threads for the batch-size sweep and per-batch gradients.
    /// Results do not depend on it.
    #[serde(skip, default = "one")]
    pub jobs: usize,
    /// Print one line per epoch to stderr.
    #[serde(skip)]
    pub progress: bool,
}

fn one() -> usize {
    1
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            batch_sizes: vec![64, 128, 256],
            epochs: 100,
            initial_lr: 0.01,
            seed: 0,
            clip_norm: 5.0,
            jobs: 1,
            progress: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::contract("k must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be positive"));
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::contract("batch sizes must be a non-empty list of positive sizes"));
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::contract("initial_lr must be positive"));
        }
        Ok(())
    }
}

/// Trained network plus everything needed to encode new scans.
#[derive(Debug, Clone, PartialEq)]
pub struct DnlModel {
    pub params: DnlParams,
    pub norm: NormalizationParams,
    pub wap_index: WapIndex,
    pub k: usize,
    pub seed: u64,
    pub config: TrainingConfig,
    /// Fingerprints neighbors are drawn from at inference (the training set).
    pub reference: Vec<Fingerprint>,
    pub summary: Option<TrainingSummary>,
}

/// Where the saved snapshot came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub best_val_loss: f64,
    pub best_batch_size: usize,
    pub best_epoch: usize,
}

impl DnlModel {
    pub fn new(
        wap_index: WapIndex,
        norm: NormalizationParams,
        config: TrainingConfig,
        reference: Vec<Fingerprint>,
    ) -> Self {
        let params = DnlParams::init(wap_index.size(), &mut rng::seeded(config.seed));
        Self {
            params,
            norm,
            k: config.k,
            seed: config.seed,
            wap_index,
            config,
            reference,
            summary: None,
        }
    }

    pub fn prepare(&self, g: &CommunityGraph) -> Result<PreparedGraph> {
        PreparedGraph::new(g, self.wap_index.size() + 1)
    }

    /// Normalized output for a graph built with this model's norm and index.
    pub fn forward(&self, g: &CommunityGraph) -> Result<[f64; 2]> {
        self.params.forward(&self.prepare(g)?)
    }

    /// Position in meters of `target`, with neighbors from `train_fps`.
    pub fn predict<'a>(
        &'a self,
        target: &'a Fingerprint,
        train_fps: impl IntoIterator<Item = &'a Fingerprint>,
    ) -> Result<Position> {
        let refs = ReferenceSet::new(train_fps, &self.wap_index);
        self.predict_with(&refs, target)
    }

    /// Position in meters using a prebuilt reference set.
    pub fn predict_with(&self, refs: &ReferenceSet<'_>, target: &Fingerprint) -> Result<Position> {
        let community = refs.query(target, self.k)?;
        let g = build_graph(&community, &self.norm, &self.wap_index, false);
        Ok(self.norm.denormalize(self.forward(&g)?))
    }

    /// Positions for many scans against the stored reference set.
    pub fn predict_scans(&self, scans: &[Fingerprint]) -> Result<Vec<Position>> {
        let refs = ReferenceSet::new(&self.reference, &self.wap_index);
        scans.iter().map(|s| self.predict_with(&refs, s)).collect()
    }
}

/// Labeled graphs for one training session.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub wap_index: WapIndex,
    pub norm: NormalizationParams,
    pub train_graphs: Vec<CommunityGraph>,
    pub val_graphs: Vec<CommunityGraph>,
    pub reference: Vec<Fingerprint>,
    pub k: usize,
}

impl TrainingData {
    /// Training graphs draw neighbors from the rest of the training set;
    /// validation graphs draw them from the training set.
    pub fn build(train_fps: &[&Fingerprint], val_fps: &[&Fingerprint], k: usize) -> Result<Self> {
        if train_fps.len() <= k {
            return Err(Error::InsufficientCandidates {
                required: k + 1,
                available: train_fps.len(),
            });
        }
        let owned: Vec<Fingerprint> = train_fps.iter().map(|f| (*f).clone()).collect();
        let wap_index = WapIndex::build(&owned);
        let norm = fit_normalization(&owned)?;
        let refs = ReferenceSet::new(&owned, &wap_index);
        let train_graphs = owned
            .iter()
            .map(|fp| {
                let c = refs.community_excluding_self(fp, k)?;
                Ok(build_graph(&c, &norm, &wap_index, true))
            })
            .collect::<Result<Vec<_>>>()?;
        let val_graphs = val_fps
            .iter()
            .map(|fp| {
                let c = refs.community(fp, k)?;
                Ok(build_graph(&c, &norm, &wap_index, true))
            })
            .collect::<Result<Vec<_>>>()?;
        drop(refs);
        Ok(Self {
            wap_index,
            norm,
            train_graphs,
            val_graphs,
            reference: owned,
            k,
        })
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batch_size: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DnlModel,
    pub log: Vec<EpochRecord>,
    /// Batch sizes whose run was aborted, with the reason.
    pub failed_runs: Vec<(usize, String)>,
}

struct RunResult {
    best: Option<(f64, usize, DnlParams)>,
    log: Vec<EpochRecord>,
    failure: Option<String>,
}

fn mean_loss(params: &DnlParams, graphs: &[PreparedGraph]) -> Result<f64> {
    let losses = graphs
        .par_iter()
        .map(|g| params.loss(g))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn run_batch_size(
    batch_size: usize,
    wap_count: usize,
    train: &[PreparedGraph],
    val: &[PreparedGraph],
    cfg: &TrainingConfig,
) -> RunResult {
    let mut rng = rng::seeded_stream(cfg.seed, batch_size as u64);
    let mut params = DnlParams::init(wap_count, &mut rng);
    let mut adam = AdamState::new(cfg.initial_lr);
    let mut sched = PlateauScheduler::new(cfg.initial_lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut result = RunResult {
        best: None,
        log: Vec::with_capacity(cfg.epochs),
        failure: None,
    };

    for epoch in 1..=cfg.epochs {
        rng::shuffle(&mut rng, &mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let per_graph = batch
                .par_iter()
                .map(|&i| params.loss_and_grad(&train[i]))
                .collect::<Result<Vec<_>>>();
            let per_graph = match per_graph {
                Ok(v) => v,
                Err(e) => {
                    result.failure = Some(format!("epoch {epoch}: {e}"));
                    return result;
                }
            };
            let mut grad = DnlParams::zeros(wap_count);
            for (loss, g) in &per_graph {
                epoch_loss += loss;
                grad.add_assign(g);
            }
            grad.scale(1.0 / batch.len() as f64);
            clip_global_norm(&mut grad.tensors_mut(), cfg.clip_norm);
            adam.lr = sched.current_lr;
            let grads: Vec<&Matrix> = grad.tensors().into_iter().map(|(_, m)| m).collect();
            if let Err(e) = adam.step(&mut params.tensors_mut(), &grads) {
                result.failure = Some(e.to_string());
                return result;
            }
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = match mean_loss(&params, val) {
            Ok(v) => v,
            Err(e) => {
                result.failure = Some(format!("epoch {epoch}: {e}"));
                return result;
            }
        };
        let lr = sched.current_lr;
        result.log.push(EpochRecord {
            epoch,
            batch_size,
            train_loss,
            val_loss,
            lr,
        });
        if cfg.progress {
            eprintln!(
                "batch {batch_size:>4} epoch {epoch:>3}  train {train_loss:.6}  val {val_loss:.6}  lr {lr:.0e}"
            );
        }
        if !train_loss.is_finite() || !val_loss.is_finite() || !params.is_finite() {
            result.failure = Some(format!("epoch {epoch}: non-finite loss"));
            return result;
        }
        if result.best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            result.best = Some((val_loss, epoch, params.clone()));
        }
        sched.step(val_loss);
    }
    result
}

/// Runs the batch-size sweep over prebuilt graphs and keeps the parameters
/// with the lowest validation loss seen in any epoch of any run.
pub fn fit(data: &TrainingData, cfg: &TrainingConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train_graphs.is_empty() || data.val_graphs.is_empty() {
        return Err(Error::contract("training and validation graph sets must be non-empty"));
    }
    let table_rows = data.wap_index.size() + 1;
    let prep = |gs: &[CommunityGraph]| -> Result<Vec<PreparedGraph>> {
        gs.iter()
            .map(|g| {
                if g.label.is_none() {
                    return Err(Error::contract("training graphs must be labeled"));
                }
                PreparedGraph::new(g, table_rows)
            })
            .collect()
    };
    let train = prep(&data.train_graphs)?;
    let val = prep(&data.val_graphs)?;
    let wap_count = data.wap_index.size();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::TrainingFailed(e.to_string()))?;
    let runs: Vec<RunResult> = pool.install(|| {
        cfg.batch_sizes
            .par_iter()
            .map(|&bs| run_batch_size(bs, wap_count, &train, &val, cfg))
            .collect()
    });

    let mut log = Vec::new();
    let mut failed_runs = Vec::new();
    let mut best: Option<(f64, usize, usize, DnlParams)> = None;
    for (run, &bs) in runs.into_iter().zip(&cfg.batch_sizes) {
        log.extend(run.log);
        if let Some(reason) = run.failure {
            failed_runs.push((bs, reason));
        }
        if let Some((loss, epoch, params)) = run.best {
            if best.as_ref().is_none_or(|(b, ..)| loss < *b) {
                best = Some((loss, bs, epoch, params));
            }
        }
    }
    let Some((best_val_loss, best_batch_size, best_epoch, params)) = best else {
        let reasons: Vec<String> = failed_runs
            .iter()
            .map(|(bs, r)| format!("batch {bs}: {r}"))
            .collect();
        return Err(Error::TrainingFailed(reasons.join("; ")));
    };
    Ok(TrainOutcome {
        model: DnlModel {
            params,
            norm: data.norm,
            wap_index: data.wap_index.clone(),
            k: data.k,
            seed: cfg.seed,
            config: TrainingConfig {
                k: data.k,
                jobs: 1,
                progress: false,
                ..cfg.clone()
            },
            reference: data.reference.clone(),
            summary: Some(TrainingSummary {
                best_val_loss,
                best_batch_size,
                best_epoch,
            }),
        },
        log,
        failed_runs,
    })
}

/// Builds the graphs and runs [`fit`].
pub fn train(
    train_fps: &[&Fingerprint],
    val_fps: &[&Fingerprint],
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = TrainingData::build(train_fps, val_fps, cfg.k)?;
    fit(&data, cfg)
}

/// Writes the log as `epoch,batch_size,train_loss,val_loss,lr`.
pub fn write_training_log(log: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("epoch,batch_size,train_loss,val_loss,lr\n");
    for r in log {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.batch_size, r.train_loss, r.val_loss, r.lr
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorRecord {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArchitectureRecord {
    hidden: usize,
    head_hidden: usize,
    fp_extractor: Vec<usize>,
    gin_layers: usize,
    gin_mlp: Vec<usize>,
    gin_eps: f64,
}

impl ArchitectureRecord {
    fn current() -> Self {
        Self {
            hidden: HIDDEN,
            head_hidden: HEAD_HIDDEN,
            fp_extractor: vec![FP_FEATURES, HIDDEN, HIDDEN, HIDDEN],
            gin_layers: 2,
            gin_mlp: vec![HIDDEN, HIDDEN, HIDDEN],
            gin_eps: GIN_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointConfig {
    #[serde(flatten)]
    training: TrainingConfig,
    architecture: ArchitectureRecord,
    summary: Option<TrainingSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    schema: u32,
    config: CheckpointConfig,
    norm: NormalizationParams,
    wap_index: BTreeMap<String, usize>,
    tensors: BTreeMap<String, TensorRecord>,
    reference: Vec<Fingerprint>,
}

fn checkpoint_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl DnlModel {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            schema: CHECKPOINT_SCHEMA,
            config: CheckpointConfig {
                training: self.config.clone(),
                architecture: ArchitectureRecord::current(),
                summary: self.summary,
            },
            norm: self.norm,
            wap_index: self.wap_index.as_map().clone(),
            tensors: self
                .params
                .tensors()
                .into_iter()
                .map(|(name, m)| {
                    (
                        name,
                        TensorRecord {
                            shape: [m.rows(), m.cols()],
                            data: m.data().to_vec(),
                        },
                    )
                })
                .collect(),
            reference: self.reference.clone(),
        };
        let mut text = serde_json::to_string(&file)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| checkpoint_err(format!("parse: {e}")))?;
        if file.schema != CHECKPOINT_SCHEMA {
            return Err(checkpoint_err(format!(
                "schema {} is not supported (expected {CHECKPOINT_SCHEMA})",
                file.schema
            )));
        }
        if file.config.architecture != ArchitectureRecord::current() {
            return Err(checkpoint_err("architecture does not match this build"));
        }
        file.norm.validate()?;
        file.config.training.validate()?;
        let wap_index = WapIndex::from_map(file.wap_index)?;

        let mut params = DnlParams::zeros(wap_index.size());
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        if file.tensors.len() != names.len() {
            return Err(checkpoint_err(format!(
                "expected {} tensors, found {}",
                names.len(),
                file.tensors.len()
            )));
        }
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let rec = file
                .tensors
                .get(name)
                .ok_or_else(|| checkpoint_err(format!("missing tensor {name}")))?;
            let [r, c] = rec.shape;
            if (r, c) != slot.shape() {
                return Err(checkpoint_err(format!(
                    "tensor {name} has shape {r}x{c}, expected {}x{}",
                    slot.rows(),
                    slot.cols()
                )));
            }
            let m = Matrix::from_vec(r, c, rec.data.clone())
                .map_err(|_| checkpoint_err(format!("tensor {name}: data length disagrees with shape")))?;
            if !m.is_finite() {
                return Err(checkpoint_err(format!("tensor {name} has non-finite values")));
            }
            *slot = m;
        }
        for fp in &file.reference {
            fp.validate()?;
        }
        let config = file.config.training;
        Ok(Self {
            params,
            norm: file.norm,
            wap_index,
            k: config.k,
            seed: config.seed,
            config,
            reference: file.reference,
            summary: file.config.summary,
        })
    }
}

pub fn save_checkpoint(model: &DnlModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DnlModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DnlModel::from_json(&text)
}
