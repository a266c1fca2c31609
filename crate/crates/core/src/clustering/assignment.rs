use std::path::Path;

use crate::error::{Error, Result};

/// Flat clustering: one contiguous cluster id per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub threshold: f64,
}

impl ClusterAssignment {
    pub fn new(ids: Vec<String>, labels: Vec<usize>, threshold: f64) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(Error::dim("cluster_assignment", format!("{} ids for {} labels", ids.len(), labels.len())));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Argument("cluster ids are not contiguous from 0".into()));
        }
        Ok(Self { ids, labels, threshold })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// CSV with header `sample_id,cluster_id`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sample_id", "cluster_id"]).map_err(csv_err)?;
        for (id, l) in self.ids.iter().zip(&self.labels) {
            w.write_record([id.as_str(), &l.to_string()]).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("assignment csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields is UTF-8"))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Reads an assignment CSV; the threshold is not stored in the file and
    /// comes back as NaN.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ctx = path.display().to_string();
        let mut r = csv::Reader::from_path(path).map_err(|e| located(&ctx, e))?;
        let headers = r.headers().map_err(|e| located(&ctx, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["sample_id", "cluster_id"] {
            return Err(Error::format(ctx, "line 1: expected header `sample_id,cluster_id`"));
        }
        let (mut ids, mut labels) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(|e| located(&ctx, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let label = rec[1]
                .parse::<usize>()
                .map_err(|_| Error::format(ctx.clone(), format!("line {line}: bad cluster_id `{}`", &rec[1])))?;
            ids.push(rec[0].to_string());
            labels.push(label);
        }
        Self::new(ids, labels, f64::NAN).map_err(|e| Error::format(ctx, e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("csv", e.to_string())
}

fn located(ctx: &str, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        return Error::format(ctx, e.to_string());
    }
    match e.position() {
        Some(p) => Error::format(ctx, format!("line {}: {e}", p.line())),
        None => Error::format(ctx, e.to_string()),
    }
}

/// Clusters with at least two members, as `(cluster_id, member indices)`.
pub fn detected_groups(assignment: &ClusterAssignment) -> Vec<(usize, Vec<usize>)> {
    let mut members = vec![Vec::new(); assignment.n_clusters()];
    for (i, &l) in assignment.labels.iter().enumerate() {
        members[l].push(i);
    }
    members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| m.len() >= 2)
        .collect()
}
