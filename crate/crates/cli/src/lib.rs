//! Library side of the `vf` command-line tool. Each `cmd_*` function is one
//! subcommand; `main.rs` only parses flags and reports errors.

mod config;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use vf_core::clustering::{ward_cluster, ClusterAssignment};
use vf_core::embedding::EmbeddingMatrix;
use vf_core::encoder::Checkpoint;
use vf_core::metrics::{evaluate, sweep, MetricsReport, SWEEP_CSV_HEADER};
use vf_core::synth::{generate_corpus, CorpusConfig, Manifest, MANIFEST_FILE};
use vf_core::trainer::{inference_embed, train, LossTrace, TrainConfig, TrainMode};
use vf_core::{Error, Result};

pub use config::{default_thresholds, parse_thresholds, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.vfck";
pub const LOSS_FILE: &str = "loss.csv";
pub const TRAIN_CONFIG_FILE: &str = "train_config.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.vfem";
pub const ASSIGNMENT_FILE: &str = "assignment.csv";
pub const DENDROGRAM_FILE: &str = "dendrogram.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const SWEEP_FILE: &str = "sweep.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Accepts either a manifest file or the directory containing one.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    if path.is_dir() {
        Manifest::load(path.join(MANIFEST_FILE))
    } else {
        Manifest::load(path)
    }
}

/// Ground-truth style per sample id.
pub fn truth_map(manifest: &Manifest) -> Result<HashMap<String, u32>> {
    Ok(manifest.ids().into_iter().zip(manifest.style_labels()?).collect())
}

pub fn cmd_gen_data(corpus: &CorpusConfig, out: &Path) -> Result<Manifest> {
    ensure_dir(out)?;
    generate_corpus(corpus, out)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub trace: LossTrace,
}

/// Trains and writes the checkpoint, the loss trace and the config used.
pub fn cmd_train(config: &TrainConfig, manifest: &Path, out: &Path) -> Result<TrainSummary> {
    let manifest = load_manifest(manifest)?;
    ensure_dir(out)?;
    let result = train(config, &manifest)?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    let loss_csv = out.join(LOSS_FILE);
    result.checkpoint.save(&checkpoint)?;
    result.trace.save_csv(&loss_csv)?;
    let echo = serde_json::to_string_pretty(config).expect("config serializes") + "\n";
    write(&out.join(TRAIN_CONFIG_FILE), &echo)?;
    Ok(TrainSummary {
        checkpoint,
        loss_csv,
        trace: result.trace,
    })
}

/// Embeds every manifest image; `mode` selects the view set and defaults to
/// the checkpoint's training mode.
pub fn cmd_embed(checkpoint: &Path, manifest: &Path, mode: Option<TrainMode>, out: &Path) -> Result<EmbeddingMatrix> {
    let checkpoint = Checkpoint::load(checkpoint)?;
    let manifest = load_manifest(manifest)?;
    ensure_dir(out)?;
    let m = inference_embed(&checkpoint, &manifest, mode.map(TrainMode::view_mode))?;
    m.save(out.join(EMBEDDINGS_FILE))?;
    Ok(m)
}

pub fn cmd_cluster(embeddings: &Path, threshold: f64, out: &Path) -> Result<ClusterAssignment> {
    let m = EmbeddingMatrix::load(embeddings)?;
    ensure_dir(out)?;
    let (assignment, tree) = ward_cluster(&m, threshold)?;
    assignment.save_csv(out.join(ASSIGNMENT_FILE))?;
    tree.save_csv(out.join(DENDROGRAM_FILE))?;
    Ok(assignment)
}

pub fn cmd_eval(assignment: &Path, manifest: &Path, threshold: Option<f64>, out: &Path) -> Result<MetricsReport> {
    let mut a = ClusterAssignment::load_csv(assignment)?;
    if let Some(t) = threshold {
        a.threshold = t;
    }
    let truth = truth_map(&load_manifest(manifest)?)?;
    ensure_dir(out)?;
    let report = evaluate(&a, &truth)?;
    write(&out.join(METRICS_FILE), &report.to_json())?;
    Ok(report)
}

pub fn sweep_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn cmd_sweep(embeddings: &Path, manifest: &Path, thresholds: &[f64], out: &Path) -> Result<Vec<MetricsReport>> {
    if thresholds.is_empty() {
        return Err(Error::Argument("no thresholds to sweep".into()));
    }
    let m = EmbeddingMatrix::load(embeddings)?;
    let truth = truth_map(&load_manifest(manifest)?)?;
    ensure_dir(out)?;
    let reports = sweep(&m, &truth, thresholds)?;
    write(&out.join(SWEEP_FILE), &sweep_csv(&reports))?;
    Ok(reports)
}

/// Row with the highest value of `key`; earlier thresholds win ties.
pub fn best_by(reports: &[MetricsReport], key: impl Fn(&MetricsReport) -> f64) -> Option<&MetricsReport> {
    reports.iter().fold(None, |best: Option<&MetricsReport>, r| match best {
        Some(b) if key(b) >= key(r) => Some(b),
        _ => Some(r),
    })
}
