//! Grouping quality: color-group accuracy (CGacc), Rand index, adjusted
//! Rand index, Fowlkes–Mallows score and their harmonic mean (CScore).
//!
//! Pair counts follow the usual convention with the prediction first:
//! `tp` pairs are together in both partitions, `fp` together only in the
//! prediction, `fn_` together only in the truth, `tn` apart in both.

mod report;

use std::collections::HashMap;

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};

pub use report::{evaluate, sweep, MetricsReport, SWEEP_CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

fn check_aligned(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Label(format!("{} predictions for {} ground-truth labels", pred.len(), truth.len())));
    }
    Ok(())
}

fn check_pairs(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Argument(format!("pair-counting metrics need at least 2 samples, got {n}")));
    }
    Ok(())
}

/// Contingency-table pair counts, O(N + clusters).
pub fn pair_counts(pred: &[usize], truth: &[usize]) -> Result<PairCounts> {
    check_aligned(pred, truth)?;
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *cells.entry((p, t)).or_default() += 1;
        *rows.entry(p).or_default() += 1;
        *cols.entry(t).or_default() += 1;
    }
    let together_both: u64 = cells.values().map(|&c| choose2(c)).sum();
    let together_pred: u64 = rows.values().map(|&c| choose2(c)).sum();
    let together_truth: u64 = cols.values().map(|&c| choose2(c)).sum();
    let all = choose2(pred.len() as u64);
    Ok(PairCounts {
        tp: together_both,
        fp: together_pred - together_both,
        fn_: together_truth - together_both,
        tn: all + together_both - together_pred - together_truth,
    })
}

/// `(ri, s, d)` with `s` pairs together in both and `d` apart in both.
pub fn rand_index(pred: &[usize], truth: &[usize]) -> Result<(f64, u64, u64)> {
    check_pairs(pred.len())?;
    let c = pair_counts(pred, truth)?;
    Ok(((c.tp + c.tn) as f64 / c.total() as f64, c.tp, c.tn))
}

/// Adjusted Rand index as an exact fraction `(numerator, denominator)`, or
/// `None` in the degenerate case where the expected index equals its maximum.
pub fn ari_fraction(c: &PairCounts) -> Option<(i128, i128)> {
    let (tp, fp, fn_, tn) = (c.tp as i128, c.fp as i128, c.fn_ as i128, c.tn as i128);
    let pairs = tp + fp + fn_ + tn;
    let pred = tp + fp;
    let truth = tp + fn_;
    // (index − expected) / (max − expected), scaled by 2·pairs.
    let num = 2 * (tp * pairs - pred * truth);
    let den = (pred + truth) * pairs - 2 * pred * truth;
    (den != 0).then_some((num, den))
}

/// Adjusted Rand index; degenerate inputs give 1 for identical partitions
/// and 0 otherwise.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_pairs(pred.len())?;
    let c = pair_counts(pred, truth)?;
    Ok(match ari_fraction(&c) {
        Some((n, d)) => n as f64 / d as f64,
        None if c.fp == 0 && c.fn_ == 0 => 1.0,
        None => 0.0,
    })
}

/// `(value, tp, fp, fn)`; the value is 0 when `tp` is 0.
pub fn fms(pred: &[usize], truth: &[usize]) -> Result<(f64, u64, u64, u64)> {
    check_pairs(pred.len())?;
    let c = pair_counts(pred, truth)?;
    let value = if c.tp == 0 {
        0.0
    } else {
        c.tp as f64 / (((c.tp + c.fp) as f64) * ((c.tp + c.fn_) as f64)).sqrt()
    };
    Ok((value, c.tp, c.fp, c.fn_))
}

/// Harmonic mean of ARI and FMS; 0 when their sum is not positive.
pub fn cscore(ari: f64, fms: f64) -> f64 {
    if ari + fms <= 0.0 {
        0.0
    } else {
        2.0 * ari * fms / (ari + fms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgAcc {
    pub value: f64,
    pub n_correct: usize,
    pub n_detected: usize,
}

/// Whether a detected cluster of size `n` whose largest same-group subset has
/// `majority` members counts as a correct color group.
pub fn is_correct_group(n: usize, majority: usize) -> bool {
    n >= 2 && majority >= (n / 2).max(2)
}

/// Correct detected groups over detected groups (clusters of size ≥ 2); 0
/// when nothing is detected.
pub fn cgacc(pred: &[usize], truth: &[usize]) -> Result<CgAcc> {
    check_aligned(pred, truth)?;
    let mut clusters: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *clusters.entry(p).or_default().entry(t).or_default() += 1;
    }
    let (mut n_detected, mut n_correct) = (0, 0);
    for groups in clusters.values() {
        let n: usize = groups.values().sum();
        if n < 2 {
            continue;
        }
        n_detected += 1;
        let majority = groups.values().copied().max().unwrap_or(0);
        if is_correct_group(n, majority) {
            n_correct += 1;
        }
    }
    let value = if n_detected == 0 {
        0.0
    } else {
        n_correct as f64 / n_detected as f64
    };
    Ok(CgAcc {
        value,
        n_correct,
        n_detected,
    })
}

/// Ground-truth group per sample of `assignment`, looked up by sample id.
pub fn align_truth(assignment: &ClusterAssignment, truth: &HashMap<String, u32>) -> Result<Vec<usize>> {
    assignment
        .ids
        .iter()
        .map(|id| {
            truth
                .get(id)
                .map(|&g| g as usize)
                .ok_or_else(|| Error::Label(format!("sample `{id}` has no ground-truth group")))
        })
        .collect()
}
