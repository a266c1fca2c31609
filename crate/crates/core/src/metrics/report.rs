use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{align_truth, ari, cgacc, cscore, fms, pair_counts, rand_index};
use crate::clustering::{ClusterAssignment, Dendrogram};
use crate::embedding::EmbeddingMatrix;
use crate::error::Result;

pub const SWEEP_CSV_HEADER: &str = "threshold,cgacc,ari,fms,cscore,n_detected,n_correct";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub n: usize,
    pub n_clusters: usize,
    pub cgacc: f64,
    pub ari: f64,
    pub fms: f64,
    pub cscore: f64,
    pub rand_index: f64,
    pub n_detected_groups: usize,
    pub n_correct_groups: usize,
    /// Pairs together in both partitions.
    pub s: u64,
    /// Pairs apart in both partitions.
    pub d: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row matching [`SWEEP_CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{}",
            self.threshold, self.cgacc, self.ari, self.fms, self.cscore, self.n_detected_groups, self.n_correct_groups
        )
        .expect("writing to a String");
        s
    }
}

/// Scores a flat clustering against ground-truth groups keyed by sample id.
pub fn evaluate(assignment: &ClusterAssignment, truth: &HashMap<String, u32>) -> Result<MetricsReport> {
    let t = align_truth(assignment, truth)?;
    let p = &assignment.labels;
    let (ri, s, d) = rand_index(p, &t)?;
    let a = ari(p, &t)?;
    let (f, tp, fp, fn_) = fms(p, &t)?;
    let cg = cgacc(p, &t)?;
    debug_assert_eq!(pair_counts(p, &t)?.tp, s);
    Ok(MetricsReport {
        threshold: assignment.threshold,
        n: p.len(),
        n_clusters: assignment.n_clusters(),
        cgacc: cg.value,
        ari: a,
        fms: f,
        cscore: cscore(a, f),
        rand_index: ri,
        n_detected_groups: cg.n_detected,
        n_correct_groups: cg.n_correct,
        s,
        d,
        tp,
        fp,
        fn_,
    })
}

/// Builds the dendrogram once and evaluates each threshold's cut.
pub fn sweep(x: &EmbeddingMatrix, truth: &HashMap<String, u32>, thresholds: &[f64]) -> Result<Vec<MetricsReport>> {
    let tree = Dendrogram::build(&x.to_f64_rows())?;
    thresholds
        .iter()
        .map(|&t| {
            let a = ClusterAssignment::new(x.ids().to_vec(), tree.cut(t)?, t)?;
            evaluate(&a, truth)
        })
        .collect()
}
