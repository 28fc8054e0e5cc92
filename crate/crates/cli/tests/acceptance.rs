//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use aqua::distortions::{build_dataset, CleanImage, DatasetConfig, DistortionKind};
use aqua::evaluation::{default_bank, roc_auc, LabeledScore};
use aqua::features::{fit_ggd, Extractor};
use aqua::filter::{run_filter, sweep, FilterConfig, Frame, FrameSource, FrameStream};
use aqua::opinion::{
    ccc, cos_supervised, distance, mcos, mcos_ss, nccr, select_distance, ClassifierRecord, DistanceKind,
    OpinionPair, RecordStore, EPSILON,
};
use aqua::regressor::{grad_check, MlpModel};
use aqua::rng;
use aqua_cli::commands::bench::{run_bench, BenchParams};
use aqua_cli::commands::model::read_summary;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------------------
// Brute-force reference implementations.

fn bf_distance(p: &[f64], q: &[f64], kind: DistanceKind) -> f64 {
    let n = p.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for i in 0..p.len() {
        abs += (p[i] - q[i]).abs();
        sq += (p[i] - q[i]) * (p[i] - q[i]);
    }
    match kind {
        DistanceKind::Mad => abs / n,
        DistanceKind::L1 => abs,
        DistanceKind::L2 => sq.sqrt(),
        DistanceKind::Kl => {
            let mut s = 0.0;
            for i in 0..p.len() {
                if p[i] > 0.0 {
                    let qs = (q[i] + EPSILON) / (1.0 + n * EPSILON);
                    s += p[i] * (p[i] / qs).ln();
                }
            }
            s.max(0.0)
        }
        DistanceKind::Js => {
            let mut s = 0.0;
            for i in 0..p.len() {
                let m = 0.5 * (p[i] + q[i]);
                if p[i] > 0.0 {
                    s += 0.5 * p[i] * (p[i] / m).ln();
                }
                if q[i] > 0.0 {
                    s += 0.5 * q[i] * (q[i] / m).ln();
                }
            }
            s.clamp(0.0, std::f64::consts::LN_2)
        }
        DistanceKind::Bhattacharyya => {
            let mut bc = 0.0;
            for i in 0..p.len() {
                bc += (p[i] * q[i]).sqrt();
            }
            (-bc.max(EPSILON).ln()).max(0.0)
        }
    }
}

fn bf_nccr(p: &[f64], t: usize) -> f64 {
    let mut rank = 1;
    for k in 0..p.len() {
        if p[k] > p[t] || (p[k] == p[t] && k < t) {
            rank += 1;
        }
    }
    (p.len() - rank) as f64 / p.len() as f64
}

fn bf_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn bf_spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (bf_ranks(xs), bf_ranks(ys));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..rx.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn random_softmax(r: &mut impl RngCore, n: usize) -> Vec<f64> {
    let mode = r.random_range(0..4);
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(r);
            (2.0 * z).exp()
        })
        .collect();
    if mode == 1 {
        // Sparse support.
        for x in v.iter_mut() {
            if r.random_bool(0.5) {
                *x = 0.0;
            }
        }
        v[r.random_range(0..n)] = 1.0;
    } else if mode == 2 {
        // Ties.
        let level = v[0];
        for x in v.iter_mut().step_by(2) {
            *x = level;
        }
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

// ---------------------------------------------------------------------------

fn c1() -> Outcome {
    let t = Instant::now();
    let mut r = rng::rng(101);
    let mut worst: f64 = 0.0;
    let sizes = [2, 10, 1000];
    for bank_i in 0..1000 {
        let n = sizes[bank_i % 3];
        let members = r.random_range(1..=5);
        let mut pairs = Vec::new();
        let mut raw = Vec::new();
        for m in 0..members {
            let t = r.random_range(0..n);
            let (p, q) = (random_softmax(&mut r, n), random_softmax(&mut r, n));
            let name = format!("c{m}");
            let o = ClassifierRecord::new("x/none", name.as_str(), p.clone(), Some(t)).unwrap();
            let d = ClassifierRecord::new("x/k/0", name.as_str(), q.clone(), Some(t)).unwrap();
            pairs.push(OpinionPair::new(o, d).unwrap());
            raw.push((p, q, t));
        }
        let mut bf_sup = 0.0;
        for ((p, q, t), pair) in raw.iter().zip(&pairs) {
            let so = p[*t] + bf_nccr(p, *t);
            let sd = q[*t] + bf_nccr(q, *t);
            worst = worst.max((nccr(&pair.original).unwrap() - bf_nccr(p, *t)).abs());
            worst = worst.max((ccc(&pair.distorted).unwrap() - q[*t]).abs());
            worst = worst.max((cos_supervised(pair).unwrap() - (so - sd)).abs());
            bf_sup += so - sd;
        }
        worst = worst.max((mcos(&pairs).unwrap() - bf_sup / members as f64).abs());
        for kind in DistanceKind::ALL {
            let want = raw.iter().map(|(p, q, _)| bf_distance(p, q, kind)).sum::<f64>() / members as f64;
            worst = worst.max((mcos_ss(&pairs, kind).unwrap() - want).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst <= 1e-12 && secs < 10.0, format!("max |lib - brute force| = {worst:.2e} over 1000 banks in {secs:.2}s"))
}

fn c2() -> Outcome {
    let mut r = rng::rng(202);
    let mut failures = Vec::new();
    let ln2 = std::f64::consts::LN_2;
    let mut worst_identity: f64 = 0.0;
    let mut worst_symmetry: f64 = 0.0;
    let mut max_js: f64 = 0.0;
    let mut kl_witness: f64 = 0.0;
    // Smoothing leaves KL(p, p) at most N * eps rather than zero.
    let mut kl_self: f64 = 0.0;
    for i in 0..2000 {
        let n = [2, 3, 10, 100][i % 4];
        let p = random_softmax(&mut r, n);
        let q = random_softmax(&mut r, n);
        kl_self = kl_self.max(distance(&p, &p, DistanceKind::Kl).unwrap() / (n as f64 * EPSILON));
        for kind in DistanceKind::ALL {
            if kind != DistanceKind::Kl {
                worst_identity = worst_identity.max(distance(&p, &p, kind).unwrap().abs());
            }
            if kind.is_symmetric() {
                let d = (distance(&p, &q, kind).unwrap() - distance(&q, &p, kind).unwrap()).abs();
                worst_symmetry = worst_symmetry.max(d);
            }
        }
        max_js = max_js.max(distance(&p, &q, DistanceKind::Js).unwrap());
        let kl = (distance(&p, &q, DistanceKind::Kl).unwrap() - distance(&q, &p, DistanceKind::Kl).unwrap()).abs();
        kl_witness = kl_witness.max(kl);
    }
    if worst_identity > 1e-9 {
        failures.push(format!("identity {worst_identity:.2e}"));
    }
    if worst_symmetry > 1e-9 {
        failures.push(format!("symmetry {worst_symmetry:.2e}"));
    }
    if max_js > ln2 {
        failures.push(format!("JS {max_js} > ln 2"));
    }
    if kl_self > 1.0 {
        failures.push(format!("KL(p, p) = {kl_self:.2} * N eps"));
    }
    if kl_witness < 1e-3 {
        failures.push("no KL asymmetry witness".into());
    }
    let mut worst_closed: f64 = 0.0;
    for n in [2, 3, 10, 1000] {
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        a[0] = 1.0;
        b[n - 1] = 1.0;
        for (kind, want) in [
            (DistanceKind::Mad, 2.0 / n as f64),
            (DistanceKind::L1, 2.0),
            (DistanceKind::L2, 2f64.sqrt()),
            (DistanceKind::Js, ln2),
        ] {
            worst_closed = worst_closed.max((distance(&a, &b, kind).unwrap() - want).abs());
        }
    }
    if worst_closed > 1e-9 {
        failures.push(format!("one-hot closed forms off by {worst_closed:.2e}"));
    }
    let detail = format!(
        "identity {worst_identity:.1e}, symmetry {worst_symmetry:.1e}, max JS {max_js:.4}, KL asymmetry {kl_witness:.3}, KL(p, p) <= {kl_self:.2} N eps, closed forms {worst_closed:.1e}"
    );
    outcome(failures.is_empty(), if failures.is_empty() { detail } else { failures.join("; ") })
}

fn c3() -> Outcome {
    let t = Instant::now();
    let (mut gauss_ok, mut lap_ok) = (0, 0);
    for seed in 0..100u64 {
        let mut r = rng::rng(rng::derive(&[303, seed]));
        let g: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut r)).collect();
        let l: Vec<f64> = (0..100_000)
            .map(|_| {
                let u: f64 = r.random_range(-0.5..0.5);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        if (1.85..=2.15).contains(&fit_ggd(&g).unwrap().alpha) {
            gauss_ok += 1;
        }
        if (0.85..=1.15).contains(&fit_ggd(&l).unwrap().alpha) {
            lap_ok += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        gauss_ok >= 95 && lap_ok >= 95 && secs < 30.0,
        format!("Gaussian {gauss_ok}/100, Laplacian {lap_ok}/100 within band in {secs:.2}s"),
    )
}

fn c4() -> Outcome {
    let mut r = rng::rng(404);
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let input = r.random_range(1..=12);
        let mut dims = vec![input];
        for _ in 0..r.random_range(1..=2) {
            dims.push(r.random_range(1..=16));
        }
        dims.push(1);
        let model = MlpModel::init("nss-v1", &dims, i).unwrap();
        let x: Vec<f64> = (0..input).map(|_| r.random_range(-2.0..2.0)).collect();
        let y = r.random_range(-1.0..1.0);
        worst = worst.max(grad_check(&model, &x, y).unwrap());
    }
    outcome(worst < 1e-4, format!("max relative error {worst:.2e} over 100 draws"))
}

fn cli(out: &Path, threads: usize, args: &[&str]) -> anyhow::Result<()> {
    let mut full: Vec<String> = vec!["aqua".into()];
    full.extend(args.iter().map(|s| s.to_string()));
    full.extend(["--out".into(), out.display().to_string(), "--seed".into(), "0".into()]);
    full.extend(["--threads".into(), threads.to_string()]);
    aqua_cli::run_args(full)
}

/// distort -> label -> features -> train -> eval on 200 synthetic images.
fn replication(out: &Path, threads: usize) -> anyhow::Result<f64> {
    let t = Instant::now();
    cli(out, threads, &["distort", "--synthetic", "200", "--size", "64"])?;
    cli(out, threads, &["label", "--mode", "semi_supervised", "--distance", "mad"])?;
    cli(out, threads, &["features", "--extractor", "nss-v1"])?;
    cli(out, threads, &["train", "--learning-rate", "1e-3", "--epochs", "200"])?;
    cli(out, threads, &["eval"])?;
    Ok(t.elapsed().as_secs_f64())
}

fn c5(out: &Path) -> Outcome {
    let secs = match replication(out, 1) {
        Ok(s) => s,
        Err(e) => return outcome(false, aqua_cli::format_error(&e)),
    };
    let summary = read_summary(&out.join("eval/summary.jsonl")).unwrap();
    // A scorer that knows nothing about the frames.
    let manifest = aqua::distortions::DatasetManifest::load(&out.join("manifest.jsonl")).unwrap();
    let store = RecordStore::load(&out.join("records.jsonl")).unwrap();
    let mut r = rng::rng(505);
    let random: Vec<LabeledScore> = manifest
        .split(aqua::distortions::Split::Test)
        .map(|e| {
            let correct = store.require(&e.id, "surrogate-eval").unwrap().top_k_correct(1).unwrap();
            LabeledScore::new(e.id.clone(), r.random::<f64>(), correct)
        })
        .collect();
    let random_auc = roc_auc(&random).unwrap().auc;
    let pass = summary.spearman_all >= 0.7 && summary.auc >= 0.85 && (random_auc - 0.5).abs() <= 0.05 && secs < 600.0;
    outcome(
        pass,
        format!(
            "test n {}: Spearman(all) {:.4}, AUC {:.4} ({} positive), random AUC {:.4}, {:.0}s single-threaded",
            summary.n, summary.spearman_all, summary.auc, summary.positives, random_auc, secs
        ),
    )
}

fn c6() -> Outcome {
    let kinds = vec![
        DistortionKind::MotionBlur,
        DistortionKind::Compression,
        DistortionKind::DefocusBlur,
        DistortionKind::GaussianNoise,
        DistortionKind::LowlightNoise,
    ];
    let clean: Vec<CleanImage> =
        (0..30).map(|i| CleanImage { id: format!("img{i:03}"), path: format!("img{i:03}.png") }).collect();
    let mut selected = Vec::new();
    let mut mismatches = 0usize;
    let mut cells = 0usize;
    for corpus_seed in 0..10u64 {
        let cfg = DatasetConfig { kinds: kinds.clone(), corpus_seed, ..DatasetConfig::default() };
        let manifest = build_dataset(&clean, &cfg).unwrap();
        let bank = default_bank(corpus_seed);
        let mut records = Vec::new();
        for c in &bank {
            records.extend(c.label(&manifest.entries).unwrap());
        }
        let names: Vec<String> = bank.iter().map(|c| c.name.clone()).collect();
        let probs: HashMap<(String, String), Vec<f64>> =
            records.iter().map(|r| ((r.image_id.clone(), r.classifier.clone()), r.probs().to_vec())).collect();
        let store = RecordStore::from_records(records).unwrap();
        let sel = select_distance(&manifest, &store, &names).unwrap();
        selected.push(sel.selected);

        for row in &sel.table {
            for (kind, rho) in &row.per_kind {
                let entries: Vec<_> = manifest.entries.iter().filter(|e| e.spec.kind == *kind).collect();
                let degrees: Vec<f64> = entries.iter().map(|e| e.spec.degree).collect();
                let scores: Vec<f64> = entries
                    .iter()
                    .map(|e| {
                        names
                            .iter()
                            .map(|c| {
                                let p = &probs[&(e.original_id(), c.clone())];
                                let q = &probs[&(e.id.clone(), c.clone())];
                                bf_distance(p, q, row.distance)
                            })
                            .sum::<f64>()
                            / names.len() as f64
                    })
                    .collect();
                cells += 1;
                if bf_spearman(&degrees, &scores).abs() != rho.abs() {
                    mismatches += 1;
                }
            }
        }
    }
    let stable = selected.iter().all(|s| *s == selected[0]);
    outcome(
        mismatches == 0 && stable,
        format!(
            "{}/{cells} |rho| cells equal the oracle exactly; selected {:?} across 10 seeds",
            cells - mismatches,
            selected.iter().map(|d| d.name()).collect::<Vec<_>>()
        ),
    )
}

fn labeled_stream(scores: &[f64], correct: &[bool], r: &mut impl RngCore) -> (FrameStream, HashMap<String, f64>) {
    let frames = scores
        .iter()
        .zip(correct)
        .enumerate()
        .map(|(i, (_, &c))| Frame {
            frame_id: format!("f{i:05}"),
            source: FrameSource::Image(PathBuf::from(format!("f{i:05}"))),
            byte_size: r.random_range(1_000..50_000),
            correct: Some(c),
        })
        .collect();
    let map = scores.iter().enumerate().map(|(i, &s)| (format!("f{i:05}"), s)).collect();
    (FrameStream::new(frames).unwrap(), map)
}

fn c7() -> Outcome {
    let mut r = rng::rng(707);
    let block: Vec<f64> = (0..50).map(|_| r.random::<f64>()).collect();
    let scores: Vec<f64> = (0..1000).map(|i| block[i / 20]).collect();
    let correct = vec![true; 1000];
    let (stream, map) = labeled_stream(&scores, &correct, &mut r);
    let scorer = |f: &Frame| Ok(map[&f.frame_id]);
    let mut sorted = block.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[25];
    let cfg = |stride| FilterConfig { threshold, stride, ..FilterConfig::default() };
    let s1 = run_filter(&stream, &scorer, &cfg(1)).unwrap().summary;
    let s4 = run_filter(&stream, &scorer, &cfg(4)).unwrap().summary;
    let gap = (s1.bandwidth_fraction - s4.bandwidth_fraction).abs();

    let mut overhead_exact = true;
    for n in [1usize, 37, 997, 1000] {
        let (stream, map) = labeled_stream(&scores[..n], &correct[..n], &mut r);
        let scorer = |f: &Frame| Ok(map[&f.frame_id]);
        for x in 1..=50usize {
            let s = run_filter(&stream, &scorer, &cfg(x)).unwrap().summary;
            let want = n.div_ceil(x);
            overhead_exact &= s.frames_scored == want && s.costs.scorer_overhead_ms == want as f64 * cfg(x).scorer_cost_ms;
        }
    }
    outcome(
        gap <= 0.02 && s4.frames_scored == 250 && overhead_exact,
        format!(
            "bandwidth stride 1 {:.4} vs stride 4 {:.4}; stride-4 scored {}; overhead = ceil(n/x) * cost for all n, x: {overhead_exact}",
            s1.bandwidth_fraction, s4.bandwidth_fraction, s4.frames_scored
        ),
    )
}

fn c8() -> Outcome {
    let mut r = rng::rng(808);
    let n = 600;
    let scores: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let correct: Vec<bool> = scores.iter().map(|s| r.random::<f64>() < *s).collect();
    let (stream, map) = labeled_stream(&scores, &correct, &mut r);
    let scorer = |f: &Frame| Ok(map[&f.frame_id]);
    let mut thresholds = vec![f64::NEG_INFINITY, f64::INFINITY];
    thresholds.extend((0..=20).map(|i| i as f64 / 20.0));
    let strides = [1, 2, 3, 4, 7];
    let result = sweep(&stream, &scorer, &thresholds, &strides, &FilterConfig::default()).unwrap();
    let mut problems = Vec::new();
    let mut by_stride: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for c in &result.cells {
        let s = &c.report.summary;
        let conf = s.confusion.expect("labeled stream");
        if conf.tp + conf.fp + conf.fn_ + conf.tn != n || conf.tp + conf.fp != s.passed {
            problems.push(format!("confusion does not partition at ({}, {})", c.threshold, c.stride));
        }
        by_stride.entry(c.stride).or_default().push((c.threshold, s.pass_rate));
        if c.threshold == f64::NEG_INFINITY
            && !(s.passed == n
                && s.passed_bytes == s.total_bytes
                && s.bandwidth_fraction == 1.0
                && s.costs.downstream_ms == s.costs.baseline_ms)
        {
            problems.push(format!("-inf at stride {} is not the baseline", c.stride));
        }
    }
    for (stride, mut rows) in by_stride {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.windows(2).any(|w| w[1].1 > w[0].1) {
            problems.push(format!("pass rate increases with threshold at stride {stride}"));
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{} cells: confusion partitions, pass rate monotone, -inf equals baseline", result.cells.len())
        } else {
            problems.join("; ")
        },
    )
}

fn c9(first: &Path, second: &Path) -> Outcome {
    if let Err(e) = replication(second, 4) {
        return outcome(false, aqua_cli::format_error(&e));
    }
    let files = [
        "manifest.jsonl",
        "records.jsonl",
        "targets.jsonl",
        "features.jsonl",
        "model.jsonl",
        "loss.csv",
        "eval/report.txt",
        "eval/correlation.jsonl",
        "eval/accuracy.jsonl",
        "eval/roc.csv",
        "eval/summary.jsonl",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(first.join(f)).ok() != std::fs::read(second.join(f)).ok())
        .collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files byte-identical between 1-thread and 4-thread runs in separate directories", files.len())
        } else {
            format!("differ: {}", differing.join(", "))
        },
    )
}

fn c10(model_path: &Path) -> Outcome {
    let model = MlpModel::load(model_path).unwrap_or_else(|_| {
        MlpModel::init(&Extractor::Nss.id(), &[aqua::features::NSS_DIM, 64, 1], 0).unwrap()
    });
    let p = BenchParams { size: 224, frames: 16, runs: 31, warmup: 3, model: None, stride: 4 };
    let report = match run_bench(&p, &model, 0) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let assess = report.stage("assess").unwrap().median_ms;
    let nss = report.stage("nss").unwrap().median_ms;
    let forward = report.stage("forward").unwrap().median_ms;
    outcome(
        assess <= 50.0,
        format!("224x224 NSS + forward median {assess:.2} ms (NSS {nss:.2} ms, forward {:.1} us)", forward * 1e3),
    )
}

fn main() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("run1"), dir.path().join("run2"));

    let names = [
        "opinion-score oracle equivalence",
        "distance property suite",
        "distribution-fit recovery",
        "gradient correctness",
        "synthetic end-to-end replication",
        "distance-selection replication",
        "sampling keeps bandwidth",
        "filter accounting identities",
        "determinism",
        "performance sanity",
    ];
    let mut results: Vec<Outcome> = Vec::new();
    results.push(pool.install(c1));
    results.push(pool.install(c2));
    results.push(pool.install(c3));
    results.push(pool.install(c4));
    results.push(c5(&first));
    results.push(pool.install(c6));
    results.push(pool.install(c7));
    results.push(pool.install(c8));
    results.push(c9(&first, &second));
    results.push(pool.install(|| c10(&first.join("model.jsonl"))));

    let mut failed = 0;
    for (i, (name, r)) in names.iter().zip(&results).enumerate() {
        println!("C{:<2} {} {name}: {}", i + 1, if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
