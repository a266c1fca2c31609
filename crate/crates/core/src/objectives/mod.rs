//! Training objectives: the temperature-scaled contrastive loss against a
//! FIFO queue of negatives, and the supervised triplet loss.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numeric::{Scalar, Tensor};

/// Allowed deviation of `||v||` from 1 for embeddings fed to the
/// contrastive loss or the queue. Single-precision normalization lands
/// within a few ulps of 1, so this only catches genuinely raw vectors.
pub const UNIT_TOLERANCE: f64 = 1e-5;

pub const DEFAULT_MARGIN: f64 = 0.2;

pub(crate) fn check_unit<T: Scalar>(v: &Tensor<T>, what: &str) -> Result<()> {
    let n = v.norm().to_f64().unwrap_or(f64::NAN);
    if !((n - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(Error::Normalization(format!("{what} has norm {n}")));
    }
    Ok(())
}

fn check_dim<T: Scalar>(v: &Tensor<T>, dim: usize, op: &'static str) -> Result<()> {
    if v.shape() != [dim] {
        return Err(Error::dim(op, format!("expected vector of length {dim}, got shape {:?}", v.shape())));
    }
    Ok(())
}

fn dot_f64<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.to_f64().unwrap_or(f64::NAN) * y.to_f64().unwrap_or(f64::NAN))
        .sum()
}

/// Ring buffer of key embeddings, oldest first. Entries are owned copies,
/// so later encoder updates never touch them.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryQueue<T> {
    capacity: usize,
    dim: usize,
    entries: VecDeque<Tensor<T>>,
}

impl<T: Scalar> MemoryQueue<T> {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("queue embedding dimension must be positive".into()));
        }
        Ok(Self {
            capacity,
            dim,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.iter()
    }

    /// Appends `keys` in order, evicting the oldest entries beyond capacity.
    /// Validates the whole batch before mutating.
    pub fn push(&mut self, keys: &[Tensor<T>]) -> Result<()> {
        for k in keys {
            check_dim(k, self.dim, "queue_push")?;
            check_unit(k, "queue key")?;
        }
        for k in keys {
            if self.capacity == 0 {
                break;
            }
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(k.clone());
        }
        Ok(())
    }
}

/// Batch-mean loss and its gradient with respect to each query.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: f64,
    pub grads: Vec<Tensor<T>>,
}

/// Mean over the batch of `-log softmax_0([q·k_pos, q·n_1, …, q·n_K] / tau)`.
/// Keys and queue entries are constants.
pub fn ntxent_loss<T: Scalar>(
    queries: &[Tensor<T>],
    positives: &[Tensor<T>],
    queue: &MemoryQueue<T>,
    tau: f64,
) -> Result<LossOutput<T>> {
    if !(tau > 0.0) {
        return Err(Error::Argument(format!("tau must be positive, got {tau}")));
    }
    if queries.is_empty() || queries.len() != positives.len() {
        return Err(Error::Argument(format!(
            "need equally many queries and positives, got {} and {}",
            queries.len(),
            positives.len()
        )));
    }
    let dim = queue.dim();
    for (q, k) in queries.iter().zip(positives) {
        check_dim(q, dim, "ntxent_loss")?;
        check_dim(k, dim, "ntxent_loss")?;
        check_unit(q, "query")?;
        check_unit(k, "positive key")?;
    }
    let batch = queries.len() as f64;
    let keys_of = |k_pos: &Tensor<T>| std::iter::once(k_pos.clone()).chain(queue.iter().cloned()).collect::<Vec<_>>();
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(queries.len());
    let mut logits = Vec::with_capacity(queue.len() + 1);
    for (q, k_pos) in queries.iter().zip(positives) {
        logits.clear();
        logits.push(dot_f64(q, k_pos) / tau);
        logits.extend(queue.iter().map(|n| dot_f64(q, n) / tau));
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        total += z.ln() - (logits[0] - m);

        let mut g = vec![0.0f64; dim];
        for (j, key) in keys_of(k_pos).iter().enumerate() {
            let w = (logits[j] - m).exp() / z - if j == 0 { 1.0 } else { 0.0 };
            for (gi, kv) in g.iter_mut().zip(key.data()) {
                *gi += w * kv.to_f64().unwrap_or(f64::NAN);
            }
        }
        let scale = 1.0 / (tau * batch);
        grads.push(Tensor::vector(g.into_iter().map(|v| T::lit(v * scale)).collect()));
    }
    let loss = total / batch;
    if !loss.is_finite() {
        return Err(Error::DegenerateInput(format!("contrastive loss is {loss}")));
    }
    Ok(LossOutput { loss, grads })
}

/// Triplet loss value and gradients for each of the three inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutput<T> {
    pub loss: f64,
    pub grad_anchor: Vec<Tensor<T>>,
    pub grad_positive: Vec<Tensor<T>>,
    pub grad_negative: Vec<Tensor<T>>,
}

/// Mean of `max(0, ||a−p||² − ||a−n||² + margin)`; the hinge is treated as
/// inactive (zero subgradient) when the inner value is exactly 0.
pub fn triplet_loss<T: Scalar>(
    anchors: &[Tensor<T>],
    positives: &[Tensor<T>],
    negatives: &[Tensor<T>],
    margin: f64,
) -> Result<TripletOutput<T>> {
    if anchors.is_empty() || anchors.len() != positives.len() || anchors.len() != negatives.len() {
        return Err(Error::Argument(format!(
            "triplet batch lengths differ or are empty: {} / {} / {}",
            anchors.len(),
            positives.len(),
            negatives.len()
        )));
    }
    let dim = anchors[0].len();
    let batch = anchors.len() as f64;
    let mut out = TripletOutput {
        loss: 0.0,
        grad_anchor: Vec::new(),
        grad_positive: Vec::new(),
        grad_negative: Vec::new(),
    };
    for ((a, p), n) in anchors.iter().zip(positives).zip(negatives) {
        check_dim(a, dim, "triplet_loss")?;
        check_dim(p, dim, "triplet_loss")?;
        check_dim(n, dim, "triplet_loss")?;
        let f = |t: &Tensor<T>| t.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect::<Vec<_>>();
        let (a, p, n) = (f(a), f(p), f(n));
        let d_ap: f64 = a.iter().zip(&p).map(|(x, y)| (x - y) * (x - y)).sum();
        let d_an: f64 = a.iter().zip(&n).map(|(x, y)| (x - y) * (x - y)).sum();
        let inner = d_ap - d_an + margin;
        let active = inner > 0.0;
        if active {
            out.loss += inner;
        }
        let c = if active { 2.0 / batch } else { 0.0 };
        let grad = |vals: Vec<f64>| Tensor::vector(vals.into_iter().map(T::lit).collect());
        out.grad_anchor.push(grad((0..dim).map(|i| c * (n[i] - p[i])).collect()));
        out.grad_positive.push(grad((0..dim).map(|i| c * (p[i] - a[i])).collect()));
        out.grad_negative.push(grad((0..dim).map(|i| c * (a[i] - n[i])).collect()));
    }
    out.loss /= batch;
    Ok(out)
}
