use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vf_core::synth::CorpusConfig;
use vf_core::trainer::TrainConfig;
use vf_core::{Error, Result};

/// Everything a run needs, loadable from TOML. Unknown keys are rejected;
/// command-line flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub assignment: Option<PathBuf>,
    /// Ward merge-cost threshold for `cluster`.
    pub threshold: f64,
    /// Thresholds evaluated by `sweep`.
    pub thresholds: Vec<f64>,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            manifest: None,
            checkpoint: None,
            embeddings: None,
            assignment: None,
            threshold: 0.5,
            thresholds: default_thresholds(),
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, context: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::format(context, format!("line {line}: {}", e.message()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }
}

/// `0.05, 0.10, …, 1.20`.
pub fn default_thresholds() -> Vec<f64> {
    (1..=24).map(|k| f64::from(k * 5) / 100.0).collect()
}

/// Either a comma-separated list (`0.1,0.2,0.4`) or an inclusive range
/// `start:stop:step`.
pub fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| Error::Argument(format!("bad threshold `{t}`")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let out = match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, h) = (num(start)?, num(stop)?, num(step)?);
            if h <= 0.0 || b < a {
                return Err(Error::Argument(format!("bad threshold range `{s}`")));
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            // Rounded to 12 decimals so 0.1·3 prints as 0.3.
            (0..=n).map(|k| ((a + k as f64 * h) * 1e12).round() / 1e12).collect()
        }
        [_] => s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(Error::Argument(format!("bad threshold list `{s}`"))),
    };
    if out.is_empty() {
        return Err(Error::Argument("empty threshold list".into()));
    }
    Ok(out)
}
