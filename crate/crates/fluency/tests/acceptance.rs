//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fluency::alignment::{format_alignment, parse_alignment, parse_alignment_str, AlignmentError};
use fluency::checkpoint::{self, CheckpointError};
use fluency::dataset::load_dataset;
use fluency::fleb::{self, FlebError};
use fluency::folds_file::{format_folds, parse_folds};
use fluency::manifest::{format_manifest, load_manifest, parse_manifest, ManifestError, ManifestRecord};
use fluency::pipeline::{build_folds, cross_validate_parallel};
use fluency::synth::{write_corpus, SynthConfig};
use fluency_core::folds::FoldAssignment;
use fluency_core::head::{Architecture, FcStackConfig, HeadConfig, HeadModel};
use fluency_core::layers::{combine, resolve_weights, EmbeddingTensor, LayerScheme};
use fluency_core::matrix::Matrix;
use fluency_core::metrics::{ccc, ccl, ccl_gradient, pearson};
use fluency_core::probe::{probe_feature, probe_report, EmbeddingMatrix, FeatureTable, ProbeSplit};
use fluency_core::spans::{AlignedWord, SpanError, WordAlignment, WordSpan};
use fluency_core::trainer::{CvReport, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:.1?}, limit {limit:?}");
    Ok(took)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// Gradient checks compare against a floor so entries that are zero up to
// finite-difference noise are judged in absolute terms.
fn grad_rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- metrics

/// Moments from all pairwise differences; no means are formed.
fn pairwise_moments(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in 0..x.len() {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    let k = 2.0 * n * n;
    (vx / k, vy / k, cxy / k)
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let (vx, vy, c) = pairwise_moments(x, y);
    c / (vx * vy).sqrt()
}

fn oracle_ccc(x: &[f64], y: &[f64]) -> f64 {
    let (vx, vy, c) = pairwise_moments(x, y);
    let shift: f64 = x.iter().zip(y).map(|(a, b)| a - b).sum::<f64>() / x.len() as f64;
    2.0 * c / (vx + vy + shift * shift)
}

fn criterion_metrics() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=128);
        let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let mix = rng.gen_range(-1.0..1.0);
        let offset = rng.gen_range(-1.0..1.0);
        let scale = rng.gen_range(0.2..3.0);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| scale * (mix * v + (1.0 - mix.abs()) * normal(&mut rng)) + offset)
            .collect();
        let (p, c, l) = (pearson(&x, &y).unwrap(), ccc(&x, &y).unwrap(), ccl(&x, &y).unwrap());
        worst = worst
            .max(rel(p, oracle_pearson(&x, &y)))
            .max(rel(c, oracle_ccc(&x, &y)))
            .max(rel(l, 1.0 - oracle_ccc(&x, &y)));
        ensure!(ccc(&x, &x).unwrap() == 1.0, "CCC(x, x) != 1 at n={n}");
        ensure!((0.0..=2.0).contains(&l), "CCL {l} outside [0, 2]");
    }
    ensure!(worst <= 1e-10, "max relative error {worst:e} > 1e-10");
    let took = within(Duration::from_secs(5), start)?;
    Ok(format!("1000 pairs, max rel err {worst:.1e}, {took:.2?}"))
}

// --------------------------------------------------------------- gradients

fn ccl_fd_error(rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.gen_range(2..=64);
    let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let p: Vec<f64> = t.iter().map(|&v| (v + 0.3 * normal(rng)).clamp(0.01, 0.99)).collect();
    let g = ccl_gradient(&p, &t).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut a = p.clone();
        a[i] += h;
        let mut b = p.clone();
        b[i] -= h;
        let fd = (ccl(&a, &t).unwrap() - ccl(&b, &t).unwrap()) / (2.0 * h);
        worst = worst.max(grad_rel(g[i], fd));
    }
    worst
}

fn random_head(rng: &mut ChaCha8Rng, arch: Architecture) -> (HeadModel, Matrix, Vec<WordSpan>) {
    let d = rng.gen_range(2..=6);
    let t = rng.gen_range(1..=6);
    let mut cfg = HeadConfig::new(arch, d);
    let widths = |rng: &mut ChaCha8Rng| (0..rng.gen_range(0..=2)).map(|_| rng.gen_range(1..=5)).collect();
    cfg.pre_pool = FcStackConfig { dropout_p: 0.25, ..FcStackConfig::new(widths(rng)) };
    cfg.post_pool = FcStackConfig { dropout_p: 0.25, ..FcStackConfig::new(widths(rng)) };
    cfg.learnable_prelu = rng.gen_bool(0.5);
    let mut model = HeadModel::init(cfg, rng.gen()).unwrap();
    let mut flat = model.params.to_flat();
    for v in &mut flat {
        *v += 0.3 * normal(rng);
    }
    model.params.set_flat(&flat);
    let x = Matrix::from_vec(t, d, (0..t * d).map(|_| normal(rng)).collect());
    // random partition of the frames into words
    let mut cuts: Vec<usize> = (1..t).filter(|_| rng.gen_bool(0.5)).collect();
    cuts.insert(0, 0);
    cuts.push(t);
    let spans = cuts
        .windows(2)
        .enumerate()
        .map(|(i, w)| WordSpan { word_index: i, start: w[0], end: w[1] })
        .collect();
    (model, x, spans)
}

fn head_fd_error(rng: &mut ChaCha8Rng, arch: Architecture) -> f64 {
    let (model, x, spans) = random_head(rng, arch);
    let train = rng.gen_bool(0.5);
    let seed: u64 = rng.gen();
    let upstream = rng.gen_range(-2.0..2.0);
    let score = |m: &HeadModel, x: &Matrix| {
        m.forward(x, Some(&spans), train, seed).unwrap().score
    };
    let cache = model.forward(&x, Some(&spans), train, seed).unwrap();
    let (grads, dx) = model.backward(&cache, upstream).unwrap();
    let analytic = grads.to_flat();
    let base = model.params.to_flat();
    let slopes = slope_positions(&model);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut m = model.clone();
        let mut p = base.clone();
        p[i] += h;
        m.params.set_flat(&p);
        let up = score(&m, &x);
        p[i] -= 2.0 * h;
        m.params.set_flat(&p);
        let dn = score(&m, &x);
        let mut fd = upstream * (up - dn) / (2.0 * h);
        if !model.config.learnable_prelu && slopes.contains(&i) {
            fd = 0.0;
        }
        worst = worst.max(grad_rel(analytic[i], fd));
    }
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let mut xp = x.clone();
            xp.set(r, c, x.get(r, c) + h);
            let up = score(&model, &xp);
            xp.set(r, c, x.get(r, c) - h);
            let dn = score(&model, &xp);
            worst = worst.max(grad_rel(dx.get(r, c), upstream * (up - dn) / (2.0 * h)));
        }
    }
    worst
}

fn slope_positions(model: &HeadModel) -> Vec<usize> {
    let n_layers = model.params.pre.len() + model.params.post.len();
    let mut at = 0;
    let mut out = Vec::new();
    for (i, t) in model.params.tensors().iter().enumerate() {
        if i < 3 * n_layers && i % 3 == 2 {
            out.push(at);
        }
        at += t.len();
    }
    out
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        worst[0] = worst[0].max(ccl_fd_error(&mut rng));
        worst[1] = worst[1].max(head_fd_error(&mut rng, Architecture::Vanilla));
        worst[2] = worst[2].max(head_fd_error(&mut rng, Architecture::Aligned));
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    ensure!(max < 1e-4, "max rel err ccl {:.1e}, vanilla {:.1e}, aligned {:.1e}", worst[0], worst[1], worst[2]);
    let took = within(Duration::from_secs(30), start)?;
    Ok(format!(
        "100 instances each: ccl {:.1e}, vanilla {:.1e}, aligned {:.1e}, {took:.2?}",
        worst[0], worst[1], worst[2]
    ))
}

// ---------------------------------------------------------- layer weights

fn criterion_layers() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for l in 1..=32usize {
        let mut schemes = vec![LayerScheme::Mean, LayerScheme::Gaussian { sigma: None }];
        schemes.extend([0.5, 1.0, 3.0, 10.0].map(|s| LayerScheme::Gaussian { sigma: Some(s) }));
        schemes.extend((1..=l).map(|k| LayerScheme::Single { k }));
        for scheme in schemes {
            let w = resolve_weights(scheme, l).unwrap();
            let total: f64 = w.iter().sum();
            ensure!((total - 1.0).abs() <= 1e-12, "{scheme:?} L={l}: sum {total}");
            ensure!(w.iter().all(|&v| v >= 0.0), "{scheme:?} L={l}: negative weight");
            if let LayerScheme::Gaussian { .. } = scheme {
                for i in 0..l {
                    ensure!(
                        w[i].to_bits() == w[l - 1 - i].to_bits(),
                        "{scheme:?} L={l}: w[{i}] != w[{}]",
                        l - 1 - i
                    );
                }
                // non-increasing moving away from the centre
                for i in 0..(l / 2).saturating_sub(1) {
                    ensure!(w[i] <= w[i + 1], "{scheme:?} L={l}: not decaying at {i}");
                }
            }
        }
        // brute-force combine
        let (t, d) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let values: Vec<f32> = (0..l * t * d).map(|_| normal(&mut rng) as f32).collect();
        let tensor = EmbeddingTensor::new(l, t, d, values).unwrap();
        for scheme in [LayerScheme::Mean, LayerScheme::Gaussian { sigma: None }, LayerScheme::Single { k: l }] {
            let w = resolve_weights(scheme, l).unwrap();
            let got = combine(&tensor, &w).unwrap();
            for ti in 0..t {
                for di in 0..d {
                    let mut expect = 0.0;
                    for (li, wl) in w.iter().enumerate() {
                        expect += wl * f64::from(tensor.get(li, ti, di));
                    }
                    let err = (got.get(ti, di) - expect).abs() / expect.abs().max(1.0);
                    ensure!(err <= 1e-10, "{scheme:?} L={l}: combine error {err:e}");
                }
            }
        }
    }
    let took = within(Duration::from_secs(5), start)?;
    Ok(format!("L=1..32, all schemes, {took:.2?}"))
}

// ----------------------------------------------------- aligned degeneracy

fn criterion_aligned_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatched = Vec::new();
    for i in 0..50 {
        let d = rng.gen_range(2..=16);
        let t = rng.gen_range(1..=20);
        let vanilla = HeadModel::init(HeadConfig::new(Architecture::Vanilla, d), rng.gen()).unwrap();
        let mut aligned = vanilla.clone();
        aligned.config.architecture = Architecture::Aligned;
        let x = Matrix::from_vec(t, d, (0..t * d).map(|_| normal(&mut rng)).collect());
        let span = [WordSpan { word_index: 0, start: 0, end: t }];
        let a = aligned.score(&x, Some(&span)).unwrap();
        let v = vanilla.score(&x, None).unwrap();
        if a.to_bits() != v.to_bits() {
            mismatched.push((i, t, (a - v).abs()));
        }
    }
    ensure!(
        mismatched.is_empty(),
        "{} of 50 instances differ (e.g. instance {} with T={}: |diff| {:.2e}); the pre-pool \
         stack is applied before the frame mean in one head and after it in the other",
        mismatched.len(),
        mismatched[0].0,
        mismatched[0].1,
        mismatched[0].2
    );
    Ok("50 instances bitwise equal".into())
}

// ------------------------------------------------------- synthetic corpus

struct Corpus {
    _dir: tempfile::TempDir,
    manifest: std::path::PathBuf,
}

fn corpus() -> Corpus {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { seed: 7, ..SynthConfig::default() };
    assert_eq!((cfg.dim, cfg.recordings, cfg.speakers), (64, 200, 20));
    let manifest = write_corpus(dir.path(), &cfg).unwrap();
    Corpus { _dir: dir, manifest }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    threads(1, f)
}

fn threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

fn run_cv(manifest: &Path, seed: u64) -> CvReport {
    let m = load_manifest(manifest).unwrap();
    let data = load_dataset(&m, LayerScheme::Gaussian { sigma: None }, false).unwrap();
    let folds = build_folds(&data, 6, seed).unwrap();
    let head = HeadConfig::new(Architecture::Vanilla, data.dim);
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    cross_validate_parallel(&data.records, &folds, &head, &cfg).unwrap()
}

fn criterion_end_to_end(c: &Corpus) -> Outcome {
    let start = Instant::now();
    let a = single_thread(|| run_cv(&c.manifest, 11));
    let took = within(Duration::from_secs(180), start)?;
    let b = single_thread(|| run_cv(&c.manifest, 11));
    ensure!(a.folds.len() == 6, "{} folds", a.folds.len());
    ensure!(a.predictions.len() == 200, "{} pooled predictions", a.predictions.len());
    ensure!(a.pooled.ccc >= 0.90, "pooled CCC {:.4} < 0.90", a.pooled.ccc);
    ensure!(a.pooled.pearson >= 0.92, "pooled Pearson {:.4} < 0.92", a.pooled.pearson);
    ensure!(a == b, "rerun with the same seed differs");
    Ok(format!(
        "pooled CCC {:.4}, Pearson {:.4}, deterministic, {took:.1?} single-threaded",
        a.pooled.ccc, a.pooled.pearson
    ))
}

// ------------------------------------------------------------------ probe

fn oracle_probe(x: &[Vec<f64>], y: &[f64], split: &ProbeSplit) -> Option<(usize, f64)> {
    let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&j| v[j]).collect::<Vec<f64>>();
    let ytr = pick(y, &split.train);
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in x.iter().enumerate() {
        let xtr = pick(row, &split.train);
        if xtr.iter().all(|&v| v == xtr[0]) {
            continue;
        }
        let r = oracle_pearson(&xtr, &ytr);
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((i, r));
        }
    }
    let (k, _) = best?;
    Some((k + 1, oracle_pearson(&pick(&x[k], &split.test), &pick(y, &split.test))))
}

fn matrix(rows: &[Vec<f64>]) -> EmbeddingMatrix {
    let n = rows[0].len();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    EmbeddingMatrix::from_columns((0..n).map(|j| format!("r{j}")).collect(), &cols).unwrap()
}

fn random_split(rng: &mut ChaCha8Rng, n: usize) -> ProbeSplit {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let cut = (n * 7 / 10).clamp(2, n - 2);
    ProbeSplit { train: idx[..cut].to_vec(), test: idx[cut..].to_vec() }
}

fn criterion_probe() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_p = 0.0f64;
    for inst in 0..100 {
        let d = rng.gen_range(1..=16);
        let n = rng.gen_range(6..=50);
        let mut x: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
        // exercise tie-breaking and constant rows
        if d > 2 && inst % 3 == 0 {
            x[d - 1] = x[0].clone();
            x[1] = vec![0.5; n];
        }
        let y: Vec<f64> = (0..n).map(|j| x[0][j] * rng.gen_range(-1.0..1.0) + normal(&mut rng)).collect();
        let split = random_split(&mut rng, n);
        let got = probe_feature(&matrix(&x), &y, &split, false).ok();
        let want = oracle_probe(&x, &y, &split);
        match (got, want) {
            (Some((k, p)), Some((ko, po))) => {
                ensure!(k == ko, "instance {inst}: k {k} vs oracle {ko}");
                worst_p = worst_p.max(rel(p, po));
            }
            (None, None) => {}
            (g, w) => return Err(format!("instance {inst}: {g:?} vs oracle {w:?}")),
        }
    }
    ensure!(worst_p <= 1e-12, "P differs from oracle by {worst_p:e}");

    let mut recovered = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let (d, n) = (32, 200);
        let x: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
        let k = rng.gen_range(0..d);
        let y: Vec<f64> = (0..n).map(|j| x[k][j] + 0.1 * normal(&mut rng)).collect();
        let split = random_split(&mut rng, n);
        if probe_feature(&matrix(&x), &y, &split, false).map(|r| r.0) == Ok(k + 1) {
            recovered += 1;
        }
    }
    ensure!(recovered >= 95, "recovered {recovered}/100");

    let (d, n) = (8, 60);
    let xc: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
    let xb: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
    let features: Vec<(String, Vec<f64>)> = (0..12)
        .map(|f| {
            let a = rng.gen_range(0.0..1.0);
            let y = (0..n).map(|j| a * xc[f % d][j] + (1.0 - a) * xb[f % 4][j] + 0.3 * normal(&mut rng));
            (format!("f{f}"), y.collect())
        })
        .collect();
    let table = FeatureTable { recording_ids: (0..n).map(|j| format!("r{j}")).collect(), features };
    let split = random_split(&mut rng, n);
    let report = probe_report(&matrix(&xc), &matrix(&xb), &table, &split, false).unwrap();
    ensure!(report.len() == 12, "{} rows for 12 features", report.len());
    let ratios: Vec<f64> = report.iter().map(|o| o.result.as_ref().unwrap().ratio).collect();
    ensure!(ratios.windows(2).all(|w| w[0] > w[1]), "ratios not strictly descending: {ratios:?}");

    let took = within(Duration::from_secs(60), start)?;
    Ok(format!("100 oracle instances, recovery {recovered}/100, sorted report, {took:.2?}"))
}

// ------------------------------------------------------------------ folds

fn fold_stats(manifest: &Path, seed: u64, n_threads: usize) -> (FoldAssignment, String) {
    threads(n_threads, || {
        let m = load_manifest(manifest).unwrap();
        let data = load_dataset(&m, LayerScheme::Mean, false).unwrap();
        let folds = build_folds(&data, 6, seed).unwrap();
        let text = format_folds(&folds);
        (folds, text)
    })
}

fn criterion_folds(c: &Corpus) -> Outcome {
    let m = load_manifest(&c.manifest).unwrap();
    let data = load_dataset(&m, LayerScheme::Mean, false).unwrap();
    // targets over the whole corpus
    let z = data.combined_z().unwrap();
    let (lo, hi) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let target: Vec<f64> = z.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let global = target.iter().sum::<f64>() / target.len() as f64;
    let mut per_speaker: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &data.records {
        *per_speaker.entry(&r.speaker_id).or_default() += 1;
    }
    let largest = *per_speaker.values().max().unwrap();

    let mut worst_dev = 0.0f64;
    for seed in [0u64, 1, 2, 3] {
        let (folds, text) = fold_stats(&c.manifest, seed, 1);
        for n in [2, 4, 8] {
            ensure!(fold_stats(&c.manifest, seed, n).1 == text, "seed {seed}: {n} threads differ");
        }
        ensure!(fold_stats(&c.manifest, seed, 1).1 == text, "seed {seed}: rerun differs");
        let speakers: BTreeSet<&str> = per_speaker.keys().copied().collect();
        let assigned: BTreeSet<&str> = folds.folds.keys().map(String::as_str).collect();
        ensure!(speakers == assigned, "seed {seed}: fold map does not cover exactly the speakers");
        let mut count = [0usize; 6];
        let mut sum = [0.0f64; 6];
        for (r, t) in data.records.iter().zip(&target) {
            let f = folds.fold_of(&r.speaker_id).unwrap();
            ensure!(f < 6, "fold index {f}");
            count[f] += 1;
            sum[f] += t;
        }
        let spread = count.iter().max().unwrap() - count.iter().min().unwrap();
        ensure!(spread <= largest, "seed {seed}: counts {count:?} spread {spread} > {largest}");
        for f in 0..6 {
            let dev = (sum[f] / count[f] as f64 - global).abs();
            worst_dev = worst_dev.max(dev);
            ensure!(dev <= 0.15, "seed {seed}: fold {f} mean target off by {dev:.3}");
        }
    }
    Ok(format!("4 seeds, 1/2/4/8 threads identical, worst mean deviation {worst_dev:.3}"))
}

// ---------------------------------------------------------------- formats

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[&str] = &["a", "Z", "7", "_", "-", " ", "\"", "\\", "é", "語", "\u{1F600}", "/", "\t"];
    (0..rng.gen_range(1..10)).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn criterion_formats() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..200 {
        // FLEB
        let (l, t, d) = (rng.gen_range(1..4), rng.gen_range(1..8), rng.gen_range(1..8));
        let values: Vec<f32> = (0..l * t * d)
            .map(|_| match rng.gen_range(0..4) {
                0 => f32::from_bits((rng.gen::<u32>() & !0x7f80_0000) | (0x0080_0000 * rng.gen_range(0..200))),
                1 => -0.0,
                _ => normal(&mut rng) as f32,
            })
            .collect();
        let tensor = EmbeddingTensor::new(l, t, d, values)
            .unwrap()
            .with_timing(rng.gen_range(0.001..0.1), rng.gen_range(0.0..0.05));
        let bytes = fleb::encode(&tensor);
        ensure!(fleb::encode(&fleb::decode(&bytes).unwrap()) == bytes, "FLEB {i} not byte-identical");

        // manifest
        let records: Vec<ManifestRecord> = (0..rng.gen_range(0..5))
            .map(|j| ManifestRecord {
                recording_id: format!("{}{j}", random_text(&mut rng)),
                speaker_id: random_text(&mut rng),
                text_id: random_text(&mut rng),
                duration_s: rng.gen_range(1e-3..100.0),
                rater1: rng.gen_range(0.0..=5.0),
                rater2: [0.0, 5.0, rng.gen_range(0.0..5.0)][rng.gen_range(0..3)],
                embedding_path: random_text(&mut rng),
                alignment_path: rng.gen_bool(0.5).then(|| random_text(&mut rng)),
            })
            .collect();
        let text = format_manifest(&records);
        let back = parse_manifest(&text).unwrap();
        ensure!(back == records && format_manifest(&back) == text, "manifest {i} not byte-identical");

        // alignment
        let duration = rng.gen_range(1.0..30.0);
        let mut at = 0.0;
        let mut words = Vec::new();
        while at < duration - 0.2 {
            let len = rng.gen_range(0.01..0.5f64).min(duration - at);
            let token: String = random_text(&mut rng).replace(['\t', ' '], "x");
            words.push(AlignedWord { token, start_s: at, end_s: at + len });
            at += len + rng.gen_range(0.0..0.3);
        }
        let a = WordAlignment::new(words, duration).unwrap();
        let text = format_alignment(&a);
        let back = parse_alignment_str(&text, duration).unwrap();
        ensure!(back == a && format_alignment(&back) == text, "alignment {i} not byte-identical");

        // checkpoint
        let arch = if rng.gen_bool(0.5) { Architecture::Vanilla } else { Architecture::Aligned };
        let mut cfg = HeadConfig::new(arch, rng.gen_range(1..10));
        cfg.pre_pool = FcStackConfig::new((0..rng.gen_range(0..3)).map(|_| rng.gen_range(1..6)).collect());
        cfg.post_pool = FcStackConfig::new((0..rng.gen_range(0..3)).map(|_| rng.gen_range(1..6)).collect());
        cfg.pre_pool.dropout_p = rng.gen_range(0.0..0.9);
        cfg.learnable_prelu = rng.gen_bool(0.5);
        let model = HeadModel::init(cfg, rng.gen()).unwrap();
        let bytes = checkpoint::encode(&model);
        let back = checkpoint::decode(&bytes).unwrap();
        ensure!(back == model && checkpoint::encode(&back) == bytes, "checkpoint {i} not byte-identical");

        // fold file
        let folds = FoldAssignment {
            seed: rng.gen(),
            folds: (0..rng.gen_range(1..12)).map(|j| (format!("{}{j}", random_text(&mut rng)), rng.gen_range(0..6))).collect(),
        };
        let text = format_folds(&folds);
        let back = parse_folds(&text).unwrap();
        ensure!(back == folds && format_folds(&back) == text, "fold file {i} not byte-identical");
    }

    // crafted invalid files
    let good = fleb::encode(&EmbeddingTensor::new(2, 2, 2, vec![1.0; 8]).unwrap());
    let mut bad = good.clone();
    bad[..4].copy_from_slice(b"FLEC");
    ensure!(matches!(fleb::decode(&bad), Err(FlebError::BadMagic(_))), "BadMagic");
    ensure!(matches!(fleb::decode(&good[..good.len() - 4]), Err(FlebError::TruncatedFile { .. })), "TruncatedFile");
    let mut inf = good.clone();
    inf[fleb::HEADER_LEN..fleb::HEADER_LEN + 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
    ensure!(matches!(fleb::decode(&inf), Err(FlebError::NonFiniteValue(0))), "NonFiniteValue");

    let row = |id: &str, r1: &str, emb: &str| {
        format!(r#"{{"recording_id":"{id}","speaker_id":"s","text_id":"t","duration_s":3.0,"rater1":{r1},"rater2":2.0,"embedding_path":"{emb}"}}"#)
    };
    std::fs::write(dir.path().join("a.fleb"), &good).unwrap();
    let write = |name: &str, text: String| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let p = write("range.jsonl", format!("{}\n{}\n", row("a", "1", "a.fleb"), row("b", "7", "a.fleb")));
    ensure!(matches!(load_manifest(&p), Err(ManifestError::ParseError { line: 2, .. })), "ParseError");
    let p = write("dup.jsonl", format!("{}\n{}\n", row("a", "1", "a.fleb"), row("a", "2", "a.fleb")));
    ensure!(matches!(load_manifest(&p), Err(ManifestError::DuplicateRecordingId { line: 2, .. })), "DuplicateRecordingId");
    let p = write("missing.jsonl", format!("{}\n{}\n", row("a", "1", "a.fleb"), row("b", "1", "nope.fleb")));
    ensure!(matches!(load_manifest(&p), Err(ManifestError::MissingEmbeddingFile { line: 2, .. })), "MissingEmbeddingFile");
    ensure!(load_manifest(&write("empty.jsonl", String::new())).unwrap().records.is_empty(), "empty manifest");

    let p = write("order.tsv", "a\t0.5\t0.4\n".into());
    ensure!(
        matches!(parse_alignment(&p, 1.0), Err(AlignmentError::Invalid(SpanError::NonMonotoneBoundaries { .. }))),
        "NonMonotoneBoundaries"
    );
    let p = write("late.tsv", "a\t0.1\t0.4\nb\t0.5\t1.2\n".into());
    ensure!(
        matches!(parse_alignment(&p, 1.0), Err(AlignmentError::Invalid(SpanError::OutOfRange { .. }))),
        "OutOfRange"
    );

    let ck = checkpoint::encode(&HeadModel::init(HeadConfig::new(Architecture::Vanilla, 4), 0).unwrap());
    for bad in [&ck[..ck.len() - 1], &ck[..10], &[b"XLCK", &ck[4..]].concat()[..]] {
        ensure!(matches!(checkpoint::decode(bad), Err(CheckpointError::CorruptCheckpoint(_))), "CorruptCheckpoint");
    }
    ensure!(parse_folds("{\"seed\": 1, \"folds\": {\"a\": -1}}").is_err(), "fold file with negative index accepted");
    Ok("200 fuzzed instances per format byte-identical, named errors on crafted files".into())
}

fn main() -> ExitCode {
    // assertion messages are reported on the FAIL line instead
    std::panic::set_hook(Box::new(|_| {}));
    let corpus = corpus();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("metric correctness", Box::new(criterion_metrics)),
        ("gradient suite", Box::new(criterion_gradients)),
        ("layer combiner", Box::new(criterion_layers)),
        ("aligned single-span degeneracy", Box::new(criterion_aligned_degeneracy)),
        ("synthetic end-to-end", Box::new(|| criterion_end_to_end(&corpus))),
        ("probe suite", Box::new(criterion_probe)),
        ("fold protocol", Box::new(|| criterion_folds(&corpus))),
        ("format round-trips", Box::new(criterion_formats)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
