//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Criterion ids given as arguments select a subset,
//! e.g. `cargo test --test acceptance -- 3 7`.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{generic_params, numeric_gradient, prepared_graphs, relative_error};
use dnl::eval::{compute_report, emit_comparison, ErrorReport};
use dnl::fingerprint::{split_dataset, Fingerprint, Position, WapIndex};
use dnl::graph::{build_graph, fit_normalization};
use dnl::model::{self, DnlModel, PreparedGraph, TrainingConfig, TrainingData};
use dnl::neighborhood::{knn_predict, select_neighbors, wknn_predict};
use dnl::nn::PlateauScheduler;
use dnl::pipeline::{floor_splits, model_predictions, run_baselines};
use dnl::rng::{self, Rng};
use dnl::synth::{generate, inject_outliers, RadioMapConfig};

struct Verdict {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, name, pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn mac(i: usize) -> String {
    format!("bb:00:00:00:00:{i:02x}")
}

// Independent brute-force neighbor search: dense vectors over the sorted
// MAC set of the candidates, full sort by (distance, fp_id).
fn brute_neighbors<'a>(target: &Fingerprint, cands: &'a [Fingerprint], k: usize) -> Vec<(f64, &'a Fingerprint)> {
    let macs: Vec<&String> = cands
        .iter()
        .flat_map(|c| c.observations.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dense = |f: &Fingerprint| -> Vec<f64> {
        macs.iter().map(|m| f.observations.get(*m).copied().unwrap_or(0.0)).collect()
    };
    let t = dense(target);
    let mut all: Vec<(f64, &Fingerprint)> = cands
        .iter()
        .map(|c| (t.iter().zip(dense(c)).map(|(a, b)| (a - b).abs()).sum(), c))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.fp_id.cmp(&b.1.fp_id)));
    all.truncate(k);
    all
}

fn brute_knn(nbrs: &[(f64, &Fingerprint)]) -> Position {
    let n = nbrs.len() as f64;
    Position::new(
        nbrs.iter().map(|(_, f)| f.position.x).sum::<f64>() / n,
        nbrs.iter().map(|(_, f)| f.position.y).sum::<f64>() / n,
    )
}

fn brute_wknn(nbrs: &[(f64, &Fingerprint)]) -> Position {
    let exact: Vec<(f64, &Fingerprint)> = nbrs.iter().filter(|(d, _)| *d == 0.0).copied().collect();
    if !exact.is_empty() {
        return brute_knn(&exact);
    }
    let w: f64 = nbrs.iter().map(|(d, _)| 1.0 / d).sum();
    Position::new(
        nbrs.iter().map(|(d, f)| f.position.x / d).sum::<f64>() / w,
        nbrs.iter().map(|(d, f)| f.position.y / d).sum::<f64>() / w,
    )
}

fn criterion_1() -> Vec<Verdict> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for inst in 0..100u64 {
        let mut r = rng::seeded(1_000 + inst);
        let cfg = RadioMapConfig {
            width: 20.0 + 80.0 * rng::unit(&mut r),
            height: 20.0 + 60.0 * rng::unit(&mut r),
            n_waps: 3 + rng::below(&mut r, 28),
            n_fps: 20 + rng::below(&mut r, 181),
            seed: inst,
            ..Default::default()
        };
        let fps = generate(&cfg).unwrap().fingerprints;
        let cut = fps.len() * 4 / 5;
        let (cands, targets) = fps.split_at(cut);
        let index = WapIndex::build(cands);
        let k = (1 + rng::below(&mut r, 15)).min(cands.len());
        for t in targets {
            let nbrs = brute_neighbors(t, cands, k);
            let knn = knn_predict(t, cands, k, &index).unwrap();
            let wknn = wknn_predict(t, cands, k, &index).unwrap();
            for (got, want) in [(knn, brute_knn(&nbrs)), (wknn, brute_wknn(&nbrs))] {
                worst = worst.max((got.x - want.x).abs()).max((got.y - want.y).abs());
            }
            checked += 1;
        }
    }
    let t = start.elapsed();
    vec![verdict(
        "1",
        "baseline oracle equivalence",
        worst <= 1e-12 && within(t, 10),
        format!("100 instances, {checked} targets, max coordinate deviation {worst:.1e} (tol 1e-12), {:.2}s (limit 10s)", t.as_secs_f64()),
    )]
}

fn criterion_2() -> Vec<Verdict> {
    let mut worst: f64 = 0.0;
    for set in 0..50u64 {
        let mut r = rng::seeded(2_000 + set);
        let n = 1 + rng::below(&mut r, 300);
        let pt = |r: &mut Rng| Position::new(100.0 * rng::unit(r), 80.0 * rng::unit(r));
        let preds: Vec<Position> = (0..n).map(|_| pt(&mut r)).collect();
        let truths: Vec<Position> = (0..n).map(|_| pt(&mut r)).collect();
        let rep = compute_report(&preds, &truths, "X").unwrap();

        let e: Vec<f64> = preds
            .iter()
            .zip(&truths)
            .map(|(p, t)| (p.x - t.x) * (p.x - t.x) + (p.y - t.y) * (p.y - t.y))
            .collect();
        let mae = e.iter().map(|v| v.sqrt()).sum::<f64>() / n as f64;
        let rmse = (e.iter().sum::<f64>() / n as f64).sqrt();
        let mut sorted = e.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Smallest rank r with r / n >= q / 100.
        let pct = |q: usize| (1..=n).find(|r| 100 * r >= q * n).map(|r| sorted[r - 1].sqrt()).unwrap();
        for (got, want) in [(rep.mae, mae), (rep.rmse, rmse), (rep.cdf68, pct(68)), (rep.cdf95, pct(95))] {
            worst = worst.max((got - want).abs());
        }
    }
    let o = Position::new(0.0, 0.0);
    let fixed = compute_report(&[Position::new(3.0, 0.0), Position::new(0.0, 4.0), Position::new(3.0, 4.0)], &[o, o, o], "X").unwrap();
    let fixed_ok = fixed.mae == 4.0 && close(fixed.rmse, (50.0f64 / 3.0).sqrt(), 1e-12) && format!("{:.4}", fixed.rmse) == "4.0825";
    vec![verdict(
        "2",
        "metric oracle",
        worst <= 1e-12 && fixed_ok,
        format!("50 sets, max deviation {worst:.1e} (tol 1e-12); {{3,4,5}} case MAE {:.2} RMSE {:.4}", fixed.mae, fixed.rmse),
    )]
}

fn random_fingerprint(r: &mut Rng, id: u64, pool: usize) -> Fingerprint {
    let n_obs = 1 + rng::below(r, pool.min(6));
    let mut macs = BTreeSet::new();
    while macs.len() < n_obs {
        macs.insert(rng::below(r, pool));
    }
    let pos = Position::new(100.0 * rng::unit(r), 80.0 * rng::unit(r));
    Fingerprint::new(id, 1, pos, macs.into_iter().map(|m| (mac(m), -100.0 + 70.0 * rng::unit(r))))
}

fn criterion_3() -> Vec<Verdict> {
    let mut failures = 0usize;
    for c in 0..1000u64 {
        let mut r = rng::seeded(3_000 + c);
        let pool = 2 + rng::below(&mut r, 20);
        let n = 1 + rng::below(&mut r, 40);
        let cands: Vec<Fingerprint> = (0..n as u64).map(|i| random_fingerprint(&mut r, i, pool)).collect();
        let target = random_fingerprint(&mut r, 1_000_000, pool + 5);
        let k = 1 + rng::below(&mut r, n);
        let index = WapIndex::build(&cands);
        let norm = fit_normalization(&cands).unwrap();
        let g = build_graph(&select_neighbors(&target, &cands, k, &index).unwrap(), &norm, &index, true);

        let known: BTreeSet<&String> = cands.iter().flat_map(|f| f.observations.keys()).collect();
        let members: Vec<&Fingerprint> = std::iter::once(&target)
            .chain(g.fp_nodes[1..].iter().map(|f| cands.iter().find(|c| c.fp_id == f.fp_id).unwrap()))
            .collect();
        let mut wap_nodes: BTreeSet<Option<&String>> = BTreeSet::new();
        let mut edges = 0usize;
        for m in &members {
            let slots: BTreeSet<Option<&String>> = m.observations.keys().map(|k| known.get(k).copied()).collect();
            edges += slots.len();
            wap_nodes.extend(slots);
        }
        let ok = g.fp_nodes.len() == k + 1 && g.wap_nodes.len() == wap_nodes.len() && g.edges.len() == edges;
        failures += usize::from(!ok);
    }
    vec![verdict(
        "3",
        "graph count law",
        failures == 0,
        format!("1000 random communities, {failures} mismatches"),
    )]
}

fn criterion_4() -> Vec<Verdict> {
    let start = Instant::now();
    let (data, graphs) = prepared_graphs(10, 10, 404);
    let params = generic_params(data.wap_index.size(), 404);
    let (mut tensor_worst, mut entry_worst): (f64, f64) = (0.0, 0.0);
    for g in &graphs {
        let (_, analytic) = params.loss_and_grad(g).unwrap();
        let numeric = numeric_gradient(&params, g, 1e-6);
        for ((_, a), n) in analytic.tensors().iter().zip(&numeric) {
            tensor_worst = tensor_worst.max(relative_error(a.data(), n));
            for (x, y) in a.data().iter().zip(n) {
                entry_worst = entry_worst.max((x - y).abs() / x.abs().max(y.abs()).max(1e-8));
            }
        }
    }
    let t = start.elapsed();
    vec![verdict(
        "4",
        "gradient fidelity",
        tensor_worst < 1e-4 && within(t, 60),
        format!(
            "10 graphs, h=1e-6, max per-tensor relative error {tensor_worst:.1e} (tol 1e-4; per-entry max {entry_worst:.1e}), {:.1}s (limit 60s)",
            t.as_secs_f64()
        ),
    )]
}

fn training_mae(model: &DnlModel, data: &TrainingData) -> f64 {
    let rows = model.wap_index.size() + 1;
    let mut total = 0.0;
    for g in &data.train_graphs {
        let p = model.norm.denormalize(model.params.forward(&PreparedGraph::new(g, rows).unwrap()).unwrap());
        let l = g.label.unwrap();
        total += ((p.x - l.x).powi(2) + (p.y - l.y).powi(2)).sqrt();
    }
    total / data.train_graphs.len() as f64
}

fn criterion_5() -> Vec<Verdict> {
    let start = Instant::now();
    let map = generate(&RadioMapConfig { n_fps: 40, seed: 5, ..Default::default() }).unwrap();
    let refs: Vec<&Fingerprint> = map.fingerprints.iter().collect();
    let mut data = TrainingData::build(&refs[..32], &refs[32..], 10).unwrap();
    data.val_graphs = data.train_graphs.clone();
    let cfg = TrainingConfig { batch_sizes: vec![8], epochs: 200, seed: 5, ..Default::default() };
    let out = model::fit(&data, &cfg).unwrap();
    let mae = training_mae(&out.model, &data);
    let t = start.elapsed();
    vec![verdict(
        "5",
        "memorization sanity",
        mae < 0.5 && within(t, 120),
        format!("32 graphs on 100x80 m, 200 epochs, batch 8: training MAE {mae:.3} m (limit 0.5 m), {:.1}s", t.as_secs_f64()),
    )]
}

fn criterion_6() -> Vec<Verdict> {
    let start = Instant::now();
    let mut s = PlateauScheduler::new(0.01);
    let lrs: Vec<f64> = (0..40).map(|_| s.step(5.0)).collect();
    // The first 5.0 improves on +inf; three more non-improving epochs cut once.
    let first_cut = lrs.iter().position(|&lr| lr < 0.01);
    let cut_ok = first_cut == Some(3) && close(lrs[3], 0.001, 1e-15) && lrs[..3].iter().all(|&lr| lr == 0.01);
    let floor_ok = lrs.iter().all(|&lr| lr >= 1e-4) && lrs.last() == Some(&1e-4);
    let mut d = PlateauScheduler::new(0.01);
    let steady = (0..100).all(|i| d.step(100.0 - i as f64) == 0.01);
    let t = start.elapsed();
    vec![verdict(
        "6",
        "scheduler conformance",
        cut_ok && floor_ok && steady && t < Duration::from_secs(1),
        format!("lr after 1..5 flat epochs {:?}, final {:e}, decreasing losses keep 0.01: {steady}", &lrs[..5], lrs[39]),
    )]
}

fn target_tmp() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn benchmark_reports(fps: &[Fingerprint], split: &dnl::DatasetSplit) -> Vec<ErrorReport> {
    let floors = floor_splits(fps, split).unwrap();
    let mut reports = run_baselines(&floors, 10).unwrap();
    let cfg = TrainingConfig { seed: 42, ..Default::default() };
    let models = dnl::pipeline::train_floors(&floors, &cfg)
        .unwrap()
        .into_iter()
        .map(|(f, o)| (f, o.model))
        .collect();
    reports.push(model_predictions(&floors, &models).unwrap().report("DNL").unwrap());
    reports
}

fn by_name<'a>(reports: &'a [ErrorReport], name: &str) -> &'a ErrorReport {
    reports.iter().find(|r| r.algorithm == name).unwrap()
}

fn criterion_7() -> Vec<Verdict> {
    let start = Instant::now();
    let cfg = RadioMapConfig { seed: 42, ..Default::default() };
    let map = generate(&cfg).unwrap();
    let split = split_dataset(&map.fingerprints, 42).unwrap();

    let clean = benchmark_reports(&map.fingerprints, &split);
    let (wknn, dnl) = (by_name(&clean, "WKNN"), by_name(&clean, "DNL"));
    let ratio = dnl.mae / wknn.mae;
    let pass_a = ratio <= 1.25;

    let train_ids: BTreeSet<u64> = split.train.iter().copied().collect();
    let train: Vec<Fingerprint> = map.fingerprints.iter().filter(|f| train_ids.contains(&f.fp_id)).cloned().collect();
    let (corrupted, ids) = inject_outliers(&train, 0.05, cfg.width, cfg.height, 42).unwrap();
    let mut noisy = map.fingerprints.clone();
    for fp in corrupted {
        if ids.contains(&fp.fp_id) {
            let slot = noisy.iter_mut().find(|f| f.fp_id == fp.fp_id).unwrap();
            *slot = fp;
        }
    }
    let outlier = benchmark_reports(&noisy, &split);
    let (owknn, odnl) = (by_name(&outlier, "WKNN"), by_name(&outlier, "DNL"));
    let pass_b = odnl.rmse <= owknn.rmse && odnl.cdf95 <= owknn.cdf95;
    let t = start.elapsed();
    let in_time = within(t, 15 * 60);

    let mut notes = vec![format!(
        "Synthetic floor, seed 42: 2000 fingerprints, 60 WAPs, 100 x 80 m, shadowing 4 dB, 6:2:2 split, k = 10, batch sizes 64/128/256, 100 epochs. Runtime {:.0} s.",
        t.as_secs_f64()
    )];
    notes.push(if pass_a {
        format!("Clean data: DNL MAE is {ratio:.3} x WKNN MAE (bound 1.25): met.")
    } else {
        format!(
            "Clean data: DNL MAE is {ratio:.3} x WKNN MAE (bound 1.25): NOT met. The graph model did not close the gap to the weighted-neighbor baseline on this floor."
        )
    });
    let dir = target_tmp().join("benchmark");
    emit_comparison(&clean, dir.join("clean"), &notes).unwrap();
    let outlier_note = format!(
        "Training labels corrupted: {} of {} training fingerprints relocated uniformly at random. RMSE {:.2} vs WKNN {:.2}; 95%CDF {:.2} vs WKNN {:.2}: {}.",
        ids.len(),
        train.len(),
        odnl.rmse,
        owknn.rmse,
        odnl.cdf95,
        owknn.cdf95,
        if pass_b { "DNL is at least as robust on both" } else { "DNL is NOT at least as robust on both" }
    );
    emit_comparison(&outlier, dir.join("outliers"), &[outlier_note]).unwrap();

    let row = |r: &ErrorReport| format!("{} MAE {:.2} RMSE {:.2} 95%CDF {:.2}", r.algorithm, r.mae, r.rmse, r.cdf95);
    vec![
        verdict(
            "7a",
            "end-to-end benchmark, clean",
            pass_a && in_time,
            format!("{}; {}; ratio {ratio:.3} (limit 1.25); report {}", row(wknn), row(dnl), dir.join("clean").display()),
        ),
        verdict(
            "7b",
            "end-to-end benchmark, 5% label outliers",
            pass_b && in_time,
            format!("{}; {}; total {:.0}s (limit 900s); report {}", row(owknn), row(odnl), t.as_secs_f64(), dir.join("outliers").display()),
        ),
    ]
}

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_dnl")).args(args).output().unwrap();
    assert!(out.status.success(), "dnl {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn train_and_evaluate(root: &Path) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let data = root.join("data");
    let d = data.to_str().unwrap();
    let model = root.join("model.json");
    let split = data.join("split.json");
    let eval = root.join("eval");
    run_cli(&["synth", "--fps", "300", "--waps", "25", "--width", "50", "--height", "40", "--seed", "8", "-o", d]);
    run_cli(&["split", "-i", d, "--seed", "8"]);
    run_cli(&[
        "train", "-i", d, "--split", split.to_str().unwrap(), "--seed", "8", "-o", model.to_str().unwrap(),
        "--epochs", "5", "--batch-sizes", "16,32", "--quiet",
    ]);
    run_cli(&[
        "evaluate", "-i", d, "--split", split.to_str().unwrap(), "--model", model.to_str().unwrap(), "--baselines",
        "-o", eval.to_str().unwrap(),
    ]);
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    (read(model), read(eval.join("report.md")), read(eval.join("cdf.csv")))
}

fn criterion_8() -> Vec<Verdict> {
    let root = target_tmp().join("determinism");
    let _ = std::fs::remove_dir_all(&root);
    let a = train_and_evaluate(&root.join("a"));
    let b = train_and_evaluate(&root.join("b"));
    let rows = String::from_utf8_lossy(&a.1).lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Algorithm")).count();
    vec![verdict(
        "8",
        "determinism",
        a == b && rows == 3,
        format!(
            "two train+evaluate runs: checkpoint identical {}, report identical {}, cdf identical {}, {rows} report rows",
            a.0 == b.0,
            a.1 == b.1,
            a.2 == b.2
        ),
    )]
}

fn criterion_9() -> Vec<Verdict> {
    let (data, _) = prepared_graphs(20, 10, 909);
    let cfg = TrainingConfig { k: 10, batch_sizes: vec![16], epochs: 3, seed: 9, ..Default::default() };
    let model = model::fit(&data, &cfg).unwrap().model;
    let path = target_tmp().join("roundtrip.json");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    model::save_checkpoint(&model, &path).unwrap();
    let back = model::load_checkpoint(&path).unwrap();
    let mut mismatches = 0usize;
    for g in data.train_graphs.iter().take(20) {
        let unlabeled = g.unlabeled();
        let a = model.forward(&unlabeled).unwrap();
        let b = back.forward(&unlabeled).unwrap();
        mismatches += usize::from(a.map(f64::to_bits) != b.map(f64::to_bits));
    }
    let params_equal = back.params == model.params && back.norm == model.norm && back.wap_index == model.wap_index;
    vec![verdict(
        "9",
        "checkpoint round trip",
        mismatches == 0 && params_equal,
        format!("20 graphs, {mismatches} bit mismatches, parameters/norm/index equal {params_equal}"),
    )]
}

fn main() {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Vec<Verdict>); 9] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7", criterion_7),
        ("8", criterion_8),
        ("9", criterion_9),
    ];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if !selected.is_empty() && !selected.iter().any(|s| s == id) {
            continue;
        }
        let verdicts = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            vec![verdict(id, "criterion", false, format!("panicked: {msg}"))]
        });
        for v in verdicts {
            println!("{} [{}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
            if !v.pass {
                failed.push(v.id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
