//! The `fluency` command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use fluency_core::dataset::Sample;
use fluency_core::head::{Architecture, HeadModel};
use fluency_core::layers::LayerScheme;
use fluency_core::probe::{extract_point_embeddings, probe_report, probe_split, ProbeResult};
use fluency_core::targets::TargetScaler;
use fluency_core::trainer::{predict, train};
use serde::Serialize;

use crate::checkpoint::{self, CheckpointMeta};
use crate::config::RunConfig;
use crate::dataset::{load_dataset, Dataset};
use crate::error::{Error, Result};
use crate::features::{read_features, reorder};
use crate::folds_file::{read_folds, write_folds};
use crate::manifest::load_manifest;
use crate::pipeline::{build_folds, cross_validate_parallel, fold_summary};
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "fluency", version, about = "Oral reading fluency scoring from speech embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split speakers into score-balanced folds.
    Folds(Args),
    /// Train one head, validating on `val_fold` and training on the rest.
    Train(Args),
    /// Cross-validate over all folds and report per-fold and pooled metrics.
    Evaluate(Args),
    /// Score recordings with a trained checkpoint.
    Predict(Args),
    /// Probe which hand-crafted features survive into the bottleneck.
    Probe(Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Single,
    Mean,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Vanilla,
    Aligned,
}

/// Flags shared by every subcommand. Anything given here overrides `--config`.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Args {
    /// Run configuration JSON, e.g. a previous run's run.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Feature CSV for `probe`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_folds: Option<usize>,
    #[arg(long)]
    pub val_fold: Option<usize>,
    #[arg(long, value_enum)]
    pub layer_scheme: Option<SchemeArg>,
    /// 1-based layer for `--layer-scheme single`.
    #[arg(long)]
    pub layer_k: Option<usize>,
    /// Gaussian width in layers; defaults to L/6.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    /// Probe with |correlation| instead of signed correlation.
    #[arg(long)]
    pub abs: bool,
}

fn layer_override(
    current: LayerScheme,
    scheme: Option<SchemeArg>,
    k: Option<usize>,
    sigma: Option<f64>,
) -> Result<LayerScheme> {
    let kind = scheme.unwrap_or(match current {
        LayerScheme::Single { .. } => SchemeArg::Single,
        LayerScheme::Mean => SchemeArg::Mean,
        LayerScheme::Gaussian { .. } => SchemeArg::Gaussian,
    });
    if k.is_some() && kind != SchemeArg::Single {
        return Err(Error::Usage("--layer-k only applies to --layer-scheme single".into()));
    }
    if sigma.is_some() && kind != SchemeArg::Gaussian {
        return Err(Error::Usage("--sigma only applies to --layer-scheme gaussian".into()));
    }
    Ok(match kind {
        SchemeArg::Single => {
            let k = k.or(match current {
                LayerScheme::Single { k } => Some(k),
                _ => None,
            });
            LayerScheme::Single {
                k: k.ok_or_else(|| Error::Usage("--layer-scheme single needs --layer-k".into()))?,
            }
        }
        SchemeArg::Mean => LayerScheme::Mean,
        SchemeArg::Gaussian => LayerScheme::Gaussian {
            sigma: sigma.or(match current {
                LayerScheme::Gaussian { sigma } => sigma,
                _ => None,
            }),
        },
    })
}

/// Config file (or defaults) with flags applied on top.
pub fn effective_config(args: &Args) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let paths = &mut c.paths;
    for (slot, flag) in [
        (&mut paths.manifest, &args.manifest),
        (&mut paths.folds, &args.folds),
        (&mut paths.checkpoint, &args.checkpoint),
        (&mut paths.features, &args.features),
        (&mut paths.out, &args.out),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(n) = args.n_folds {
        c.n_folds = n;
    }
    if let Some(v) = args.val_fold {
        c.val_fold = v;
    }
    c.layers = layer_override(c.layers, args.layer_scheme, args.layer_k, args.sigma)?;
    if let Some(a) = args.arch {
        c.head.architecture = match a {
            ArchArg::Vanilla => Architecture::Vanilla,
            ArchArg::Aligned => Architecture::Aligned,
        };
    }
    if args.abs {
        c.probe.absolute = true;
    }
    Ok(c.finish()?)
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Usage(format!("missing required --{flag}")))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    write_file(path, s)
}

fn prepare_out(c: &RunConfig) -> Result<PathBuf> {
    let out = need(&c.paths.out, "out")?.to_path_buf();
    fs::create_dir_all(&out).map_err(|source| Error::Output {
        path: out.clone(),
        source,
    })?;
    write_file(&out.join("run.json"), c.to_json())?;
    Ok(out)
}

fn load(c: &RunConfig, scheme: LayerScheme, arch: Architecture) -> Result<Dataset> {
    let manifest = load_manifest(need(&c.paths.manifest, "manifest")?)?;
    load_dataset(&manifest, scheme, arch == Architecture::Aligned)
}

fn load_fold_file(c: &RunConfig) -> Result<fluency_core::folds::FoldAssignment> {
    let path = need(&c.paths.folds, "folds")?;
    read_folds(path).map_err(|source| Error::FoldFile {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_folds(c: &RunConfig) -> Result<()> {
    let data = load(c, c.layers, Architecture::Vanilla)?;
    let folds = build_folds(&data, c.n_folds, c.seed)?;
    let out = prepare_out(c)?;
    let path = out.join("folds.json");
    write_folds(&path, &folds).map_err(|source| Error::FoldFile {
        path: path.clone(),
        source,
    })?;
    print!("{}", report::fold_table(&fold_summary(&data, &folds)?));
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(c: &RunConfig) -> Result<()> {
    let data = load(c, c.layers, c.head.architecture)?;
    let folds = load_fold_file(c)?;
    let fold_of: Vec<usize> = data
        .records
        .iter()
        .map(|r| {
            folds
                .fold_of(&r.speaker_id)
                .ok_or_else(|| Error::Dataset(format!("speaker {} has no fold", r.speaker_id)))
        })
        .collect::<Result<_>>()?;
    let mask: Vec<bool> = fold_of.iter().map(|&f| f != c.val_fold).collect();
    let ratings: Vec<_> = data.records.iter().map(|r| r.ratings).collect();
    let scaler = TargetScaler::fit(&ratings, &mask)?;
    let samples: Vec<Sample> = data
        .records
        .iter()
        .map(|r| r.sample(scaler.score(&r.ratings).train_target))
        .collect();
    let (tr, va): (Vec<_>, Vec<_>) = samples.iter().zip(&mask).partition(|(_, &m)| m);
    let tr: Vec<Sample> = tr.into_iter().map(|(s, _)| *s).collect();
    let va: Vec<Sample> = va.into_iter().map(|(s, _)| *s).collect();

    let head = c.head.build(data.dim);
    let model = HeadModel::init(head.clone(), c.seed)?;
    let start = std::time::Instant::now();
    let (model, mut train_report) = train(model, &tr, &va, &c.train)?;
    train_report.wall_time_s = Some(start.elapsed().as_secs_f64());

    let out = prepare_out(c)?;
    let ckpt = out.join("checkpoint.flck");
    let ck_err = |source| Error::Checkpoint {
        path: ckpt.clone(),
        source,
    };
    checkpoint::save_checkpoint(&ckpt, &model).map_err(ck_err)?;
    let meta = CheckpointMeta {
        seed: c.seed,
        head,
        train: c.train.clone(),
        layers: c.layers,
        layer_weights: data.layer_weights.clone(),
        report: Some(train_report.clone()),
    };
    checkpoint::write_meta(&checkpoint::sidecar_path(&ckpt), &meta).map_err(ck_err)?;
    write_json(&out.join("train_report.json"), &train_report)?;
    print!("{}", report::train_table(&train_report));
    eprintln!("wrote {}", ckpt.display());
    Ok(())
}

#[derive(Serialize)]
struct Evaluation<'a> {
    seed: u64,
    folds: &'a [fluency_core::trainer::FoldResult],
    pooled: fluency_core::metrics::MetricReport,
}

fn cmd_evaluate(c: &RunConfig) -> Result<()> {
    let data = load(c, c.layers, c.head.architecture)?;
    let folds = load_fold_file(c)?;
    let head = c.head.build(data.dim);
    let cv = cross_validate_parallel(&data.records, &folds, &head, &c.train)?;
    let out = prepare_out(c)?;
    write_json(
        &out.join("evaluation.json"),
        &Evaluation {
            seed: c.seed,
            folds: &cv.folds,
            pooled: cv.pooled,
        },
    )?;
    let mut csv = String::from("recording_id,fold,score,target\n");
    for p in &cv.predictions {
        csv.push_str(&format!("{},{},{},{}\n", p.recording_id, p.fold, p.score, p.target));
    }
    write_file(&out.join("predictions.csv"), csv)?;
    print!("{}", report::cv_table(&cv));
    Ok(())
}

fn load_model(c: &RunConfig) -> Result<(HeadModel, CheckpointMeta)> {
    let path = need(&c.paths.checkpoint, "checkpoint")?;
    let err = |source| Error::Checkpoint {
        path: path.to_path_buf(),
        source,
    };
    let model = checkpoint::load_checkpoint(path).map_err(err)?;
    let meta = checkpoint::read_meta(&checkpoint::sidecar_path(path)).map_err(err)?;
    Ok((model, meta))
}

/// Loads recordings the way the checkpoint was trained: its layer weighting
/// and architecture take precedence over the run config.
fn load_for_model(c: &RunConfig, model: &HeadModel, meta: &CheckpointMeta) -> Result<Dataset> {
    let data = load(c, meta.layers, model.config.architecture)?;
    if data.dim != model.config.input_dim {
        return Err(fluency_core::head::HeadError::DimensionMismatch {
            expected: model.config.input_dim,
            got: data.dim,
        }
        .into());
    }
    Ok(data)
}

fn cmd_predict(c: &RunConfig) -> Result<()> {
    let (model, meta) = load_model(c)?;
    let data = load_for_model(c, &model, &meta)?;
    let samples: Vec<Sample> = data.records.iter().map(|r| r.sample(0.0)).collect();
    let scores = predict(&model, &samples)?;
    let out = prepare_out(c)?;
    let mut csv = String::from("recording_id,score\n");
    for (r, s) in data.records.iter().zip(&scores) {
        csv.push_str(&format!("{},{}\n", r.recording_id, s));
    }
    write_file(&out.join("scores.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_probe(c: &RunConfig) -> Result<()> {
    let (model, meta) = load_model(c)?;
    let data = load_for_model(c, &model, &meta)?;
    let fpath = need(&c.paths.features, "features")?;
    let ferr = |source| Error::Features {
        path: fpath.to_path_buf(),
        source,
    };
    let ids = data.recording_ids();
    let table = reorder(&read_features(fpath).map_err(ferr)?, &ids).map_err(ferr)?;
    let samples: Vec<Sample> = data.records.iter().map(|r| r.sample(0.0)).collect();
    let (x_c, x_b) = extract_point_embeddings(&model, &samples, ids)?;
    let split = probe_split(&data.speaker_ids(), c.probe.train_ratio, c.seed)?;
    let outcomes = probe_report(&x_c, &x_b, &table, &split, c.probe.absolute)?;
    let results: Vec<&ProbeResult> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    for o in &outcomes {
        if let Err(e) = &o.result {
            eprintln!("feature {}: {e}", o.feature);
        }
    }
    let out = prepare_out(c)?;
    write_json(&out.join("probe_report.json"), &results)?;
    let text = report::probe_table(&outcomes);
    write_file(&out.join("probe_report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let (args, f): (&Args, fn(&RunConfig) -> Result<()>) = match &cli.command {
        Command::Folds(a) => (a, cmd_folds),
        Command::Train(a) => (a, cmd_train),
        Command::Evaluate(a) => (a, cmd_evaluate),
        Command::Predict(a) => (a, cmd_predict),
        Command::Probe(a) => (a, cmd_probe),
    };
    f(&effective_config(args)?)
}
