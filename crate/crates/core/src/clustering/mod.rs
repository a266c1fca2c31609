//! Agglomerative clustering with Ward's minimum-variance criterion.
//!
//! The merge cost between clusters `A` and `B` is
//! `|A||B| / (|A| + |B|) · ||μ_A − μ_B||²`, so two singletons at squared
//! distance `d` merge at cost `d / 2`. Costs of a freshly merged cluster are
//! obtained with the Lance–Williams recurrence. Equal costs are broken by the
//! lexicographically smallest pair of cluster minima (smallest sample index
//! in each cluster).

mod assignment;

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

pub use assignment::{detected_groups, ClusterAssignment};

/// One agglomeration step. Singletons are ids `0..n`; the cluster created by
/// merge `k` gets id `n + k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

/// Candidate ordering: cost, then the pair of cluster minima.
fn better(cost: f64, key: (usize, usize), best_cost: f64, best_key: (usize, usize)) -> bool {
    match cost.partial_cmp(&best_cost) {
        Some(Ordering::Less) => true,
        Some(Ordering::Equal) => key < best_key,
        _ => false,
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Dendrogram {
    /// Full merge sequence for `points` (rows of equal length).
    pub fn build(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Argument("cannot cluster an empty matrix".into()));
        }
        let dim = points[0].len();
        if let Some(i) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::dim("ward_cluster", format!("row {i} has length {} != {dim}", points[i].len())));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite coordinate".into()));
        }

        // Slot i always holds the cluster whose smallest member is sample i,
        // so slot indices double as tie-break keys.
        let mut cost = vec![0.0f64; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let c = 0.5 * sq_dist(&points[i], &points[j]);
                cost[i * n + j] = c;
                cost[j * n + i] = c;
            }
        }
        let mut active = vec![true; n];
        let mut size = vec![1usize; n];
        let mut label: Vec<usize> = (0..n).collect();
        let mut nn = vec![usize::MAX; n];
        let mut nn_cost = vec![f64::INFINITY; n];

        let key = |i: usize, j: usize| (i.min(j), i.max(j));
        let rescan = |i: usize, active: &[bool], cost: &[f64], nn: &mut [usize], nn_cost: &mut [f64]| {
            let (mut best, mut best_c) = (usize::MAX, f64::INFINITY);
            for j in 0..n {
                if j != i && active[j] {
                    let c = cost[i * n + j];
                    if best == usize::MAX || better(c, key(i, j), best_c, key(i, best)) {
                        best = j;
                        best_c = c;
                    }
                }
            }
            nn[i] = best;
            nn_cost[i] = best_c;
        };
        for i in 0..n {
            rescan(i, &active, &cost, &mut nn, &mut nn_cost);
        }

        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for step in 0..n.saturating_sub(1) {
            let mut i = usize::MAX;
            for k in 0..n {
                if active[k] && (i == usize::MAX || better(nn_cost[k], key(k, nn[k]), nn_cost[i], key(i, nn[i]))) {
                    i = k;
                }
            }
            let j = nn[i];
            let (keep, gone) = (i.min(j), i.max(j));
            let c_ij = cost[keep * n + gone];
            let (ni, nj) = (size[keep] as f64, size[gone] as f64);
            merges.push(Merge {
                a: label[keep].min(label[gone]),
                b: label[keep].max(label[gone]),
                cost: c_ij,
                size: size[keep] + size[gone],
            });
            active[gone] = false;
            for k in 0..n {
                if !active[k] || k == keep {
                    continue;
                }
                let nk = size[k] as f64;
                let c = ((ni + nk) * cost[keep * n + k] + (nj + nk) * cost[gone * n + k] - nk * c_ij) / (ni + nj + nk);
                cost[keep * n + k] = c;
                cost[k * n + keep] = c;
            }
            size[keep] += size[gone];
            label[keep] = n + step;

            rescan(keep, &active, &cost, &mut nn, &mut nn_cost);
            for k in 0..n {
                if !active[k] || k == keep {
                    continue;
                }
                if nn[k] == keep || nn[k] == gone {
                    rescan(k, &active, &cost, &mut nn, &mut nn_cost);
                } else if better(cost[k * n + keep], key(k, keep), nn_cost[k], key(k, nn[k])) {
                    nn[k] = keep;
                    nn_cost[k] = cost[k * n + keep];
                }
            }
        }
        Ok(Self { n, merges })
    }

    /// Flat labels after applying every merge up to (not including) the
    /// first whose cost exceeds `threshold`. Labels are numbered 0.. in order
    /// of each cluster's smallest member.
    pub fn cut(&self, threshold: f64) -> Result<Vec<usize>> {
        if !(threshold >= 0.0) {
            return Err(Error::Argument(format!("threshold must be non-negative, got {threshold}")));
        }
        let n = self.n;
        // Representative sample of every cluster id, via union-find on samples.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut rep: Vec<usize> = (0..n).collect();
        for m in &self.merges {
            if m.cost > threshold {
                break;
            }
            let (ra, rb) = (find(&mut parent, rep[m.a]), find(&mut parent, rep[m.b]));
            let root = ra.min(rb);
            parent[ra.max(rb)] = root;
            rep.push(root);
        }
        let mut ids = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = Vec::with_capacity(n);
        for s in 0..n {
            let r = find(&mut parent, s);
            if ids[r] == usize::MAX {
                ids[r] = next;
                next += 1;
            }
            out.push(ids[r]);
        }
        Ok(out)
    }

    /// Merge list as CSV (`step,cluster_a,cluster_b,cost,size`).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,cluster_a,cluster_b,cost,size\n");
        for (k, m) in self.merges.iter().enumerate() {
            writeln!(s, "{k},{},{},{},{}", m.a, m.b, m.cost, m.size).expect("writing to a String");
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Clusters the embedding rows and cuts the tree at `threshold`.
pub fn ward_cluster(x: &EmbeddingMatrix, threshold: f64) -> Result<(ClusterAssignment, Dendrogram)> {
    let tree = Dendrogram::build(&x.to_f64_rows())?;
    let labels = tree.cut(threshold)?;
    Ok((ClusterAssignment::new(x.ids().to_vec(), labels, threshold)?, tree))
}
