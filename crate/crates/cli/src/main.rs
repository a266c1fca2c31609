//! `vf`: generate a synthetic corpus, train an encoder, embed, cluster,
//! evaluate and sweep thresholds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vf_cli::{
    best_by, cmd_cluster, cmd_embed, cmd_eval, cmd_gen_data, cmd_sweep, cmd_train, parse_thresholds, RunConfig,
};
use vf_core::trainer::TrainMode;
use vf_core::{Error, Result};

#[derive(Parser)]
#[command(name = "vf", version, about = "Color-variant grouping lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic style × color corpus with a manifest.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Generator seed [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Number of styles [default: 40]
        #[arg(long)]
        styles: Option<u32>,
        /// Number of color variants per style [default: 4]
        #[arg(long)]
        colors: Option<u32>,
        /// Image side in pixels [default: 64]
        #[arg(long)]
        image_size: Option<usize>,
        /// Fraction of styles whose pattern occupies one half [default: 0.5]
        #[arg(long)]
        locality: Option<f64>,
    },
    /// Train an encoder on a manifest.
    Train {
        #[command(flatten)]
        common: Common,
        /// Manifest file or corpus directory
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// Training seed [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Training mode [default: pbcnet]
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TrainMode>,
        /// Number of epochs [default: 30]
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Embed every manifest image with a trained checkpoint.
    Embed {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Manifest file or corpus directory
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// View set to embed with [default: the checkpoint's training mode]
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TrainMode>,
    },
    /// Ward-cluster an embeddings file at one threshold.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Embeddings file written by `embed`
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        /// Ward merge-cost threshold [default: 0.5]
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Score an assignment against the manifest's style labels.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Assignment CSV written by `cluster`
        #[arg(long, value_name = "PATH")]
        assignment: Option<PathBuf>,
        /// Manifest file or corpus directory
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// Threshold to record in the report
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Cluster and score at every threshold of a list.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Embeddings file written by `embed`
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        /// Manifest file or corpus directory
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// `a,b,c` or `start:stop:step` [default: 0.05:1.2:0.05]
        #[arg(long, value_parser = parse_threshold_list)]
        thresholds: Option<Thresholds>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_mode(s: &str) -> std::result::Result<TrainMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

// An alias keeps clap from treating the list as a multi-value flag.
type Thresholds = Vec<f64>;

fn parse_threshold_list(s: &str) -> std::result::Result<Thresholds, String> {
    parse_thresholds(s).map_err(|e| e.to_string())
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Argument(format!("missing --{flag} (or `{flag}` in the config file)")))
}

fn pick(flag: Option<PathBuf>, file: &Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| file.clone())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            common,
            seed,
            styles,
            colors,
            image_size,
            locality,
        } => {
            let mut cfg = base_config(&common)?;
            let c = &mut cfg.corpus;
            c.seed = seed.unwrap_or(c.seed);
            c.n_styles = styles.unwrap_or(c.n_styles);
            c.n_colors = colors.unwrap_or(c.n_colors);
            c.image_size = image_size.unwrap_or(c.image_size);
            c.locality_fraction = locality.unwrap_or(c.locality_fraction);
            let m = cmd_gen_data(&cfg.corpus, &cfg.out_dir)?;
            println!("wrote {} images to {}", m.len(), cfg.out_dir.display());
        }
        Command::Train {
            common,
            manifest,
            seed,
            mode,
            epochs,
        } => {
            let mut cfg = base_config(&common)?;
            let t = &mut cfg.train;
            t.seed = seed.unwrap_or(t.seed);
            t.mode = mode.unwrap_or(t.mode);
            t.epochs = epochs.unwrap_or(t.epochs);
            let manifest = pick(manifest, &cfg.manifest);
            let s = cmd_train(&cfg.train, required(&manifest, "manifest")?, &cfg.out_dir)?;
            let means = s.trace.epoch_means();
            println!(
                "trained {} steps; first-epoch loss {:.6}, final-epoch loss {:.6}; checkpoint {}",
                s.trace.steps.len(),
                means.first().copied().unwrap_or(f64::NAN),
                means.last().copied().unwrap_or(f64::NAN),
                s.checkpoint.display()
            );
        }
        Command::Embed {
            common,
            checkpoint,
            manifest,
            mode,
        } => {
            let cfg = base_config(&common)?;
            let checkpoint = pick(checkpoint, &cfg.checkpoint);
            let manifest = pick(manifest, &cfg.manifest);
            let m = cmd_embed(
                required(&checkpoint, "checkpoint")?,
                required(&manifest, "manifest")?,
                mode,
                &cfg.out_dir,
            )?;
            println!("embedded {} samples ({}-dim)", m.len(), m.dim());
        }
        Command::Cluster {
            common,
            embeddings,
            threshold,
        } => {
            let cfg = base_config(&common)?;
            let embeddings = pick(embeddings, &cfg.embeddings);
            let t = threshold.unwrap_or(cfg.threshold);
            let a = cmd_cluster(required(&embeddings, "embeddings")?, t, &cfg.out_dir)?;
            println!("{} clusters at threshold {t}", a.n_clusters());
        }
        Command::Eval {
            common,
            assignment,
            manifest,
            threshold,
        } => {
            let cfg = base_config(&common)?;
            let assignment = pick(assignment, &cfg.assignment);
            let manifest = pick(manifest, &cfg.manifest);
            let r = cmd_eval(
                required(&assignment, "assignment")?,
                required(&manifest, "manifest")?,
                threshold,
                &cfg.out_dir,
            )?;
            print!("{}", r.to_json());
        }
        Command::Sweep {
            common,
            embeddings,
            manifest,
            thresholds,
        } => {
            let cfg = base_config(&common)?;
            let embeddings = pick(embeddings, &cfg.embeddings);
            let manifest = pick(manifest, &cfg.manifest);
            let thresholds = thresholds.unwrap_or_else(|| cfg.thresholds.clone());
            let reports = cmd_sweep(
                required(&embeddings, "embeddings")?,
                required(&manifest, "manifest")?,
                &thresholds,
                &cfg.out_dir,
            )?;
            if let Some(b) = best_by(&reports, |r| r.cscore) {
                println!(
                    "best cscore {:.4} at threshold {} (ari {:.4}, fms {:.4}, cgacc {:.4})",
                    b.cscore, b.threshold, b.ari, b.fms, b.cgacc
                );
            }
        }
        Command::PrintConfig { common } => {
            print!("{}", base_config(&common)?.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let level = std::env::var("VF_LOG_LEVEL").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new().parse_filters(&level).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
