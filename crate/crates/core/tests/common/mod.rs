#![allow(dead_code)]

use dnl::fingerprint::Fingerprint;
use dnl::model::{DnlParams, PreparedGraph, TrainingData};
use dnl::rng;
use dnl::synth::{generate, RadioMapConfig};

/// A small synthetic floor.
pub fn small_map(n_fps: usize, seed: u64) -> Vec<Fingerprint> {
    let cfg = RadioMapConfig {
        width: 40.0,
        height: 30.0,
        n_waps: 15,
        n_fps,
        seed,
        ..Default::default()
    };
    generate(&cfg).expect("generate").fingerprints
}

/// Labeled leave-one-out training graphs over a small map, first `n` of them.
pub fn prepared_graphs(n: usize, k: usize, seed: u64) -> (TrainingData, Vec<PreparedGraph>) {
    let fps = small_map(n.max(k + 2) + 10, seed);
    let refs: Vec<&Fingerprint> = fps.iter().collect();
    let (train, val) = refs.split_at(refs.len() - 5);
    let data = TrainingData::build(train, val, k).expect("training data");
    let rows = data.wap_index.size() + 1;
    let graphs = data
        .train_graphs
        .iter()
        .take(n)
        .map(|g| PreparedGraph::new(g, rows).expect("prepare"))
        .collect();
    (data, graphs)
}

/// Norm-wise relative error `|a - b| / max(|a| + |b|, 1e-12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

/// Central-difference gradient of the loss for every tensor, in
/// [`DnlParams::tensors`] order.
pub fn numeric_gradient(params: &DnlParams, g: &PreparedGraph, h: f64) -> Vec<Vec<f64>> {
    let mut p = params.clone();
    let n_tensors = p.tensors().len();
    let mut out = Vec::with_capacity(n_tensors);
    for t in 0..n_tensors {
        let len = p.tensors()[t].1.data().len();
        let mut grad = vec![0.0; len];
        for (i, gi) in grad.iter_mut().enumerate() {
            let orig = p.tensors()[t].1.data()[i];
            p.tensors_mut()[t].data_mut()[i] = orig + h;
            let plus = p.loss(g).expect("loss");
            p.tensors_mut()[t].data_mut()[i] = orig - h;
            let minus = p.loss(g).expect("loss");
            p.tensors_mut()[t].data_mut()[i] = orig;
            *gi = (plus - minus) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}

/// Seeded initial parameters with every entry, biases included, shifted by
/// `U(-0.05, 0.05)` so that no ReLU input sits exactly on its kink.
pub fn generic_params(wap_count: usize, seed: u64) -> DnlParams {
    let mut r = rng::seeded(seed);
    let mut p = DnlParams::init(wap_count, &mut r);
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v += 0.1 * rng::unit(&mut r) - 0.05;
        }
    }
    p
}
