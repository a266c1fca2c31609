//! End-to-end acceptance suite. Runs every criterion at its stated tolerance
//! and prints one `PASS`/`FAIL` line per criterion.
//!
//! Criteria 1-6, 9 and 10 check exact or deterministic properties and make
//! the process exit non-zero on failure. Criteria 7 and 8 are empirical
//! learning outcomes; their lines report the measured numbers and a `FAIL`
//! there is printed but does not abort the suite.

use std::fs;
use std::path::Path;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vf_cli::{
    best_by, cmd_cluster, cmd_embed, cmd_eval, cmd_gen_data, cmd_sweep, cmd_train, default_thresholds,
    ASSIGNMENT_FILE, EMBEDDINGS_FILE, METRICS_FILE, SWEEP_FILE,
};
use vf_core::augment::{slice_views, ViewMode, ViewSet};
use vf_core::clustering::Dendrogram;
use vf_core::encoder::{embed_object, embed_object_tape, momentum_update, EncoderConfig};
use vf_core::metrics::{ari, ari_fraction, cgacc, cscore, fms, pair_counts, SWEEP_CSV_HEADER};
use vf_core::numeric::{ops, relative_error, ParamSet, Scalar, Tape, Tensor};
use vf_core::objectives::{ntxent_loss, triplet_loss, MemoryQueue};
use vf_core::synth::CorpusConfig;
use vf_core::trainer::{TrainConfig, TrainMode};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() {
    let started = Instant::now();
    let work = tempfile::tempdir().expect("temp dir");
    let mut hard_failures = 0;
    let criteria: Vec<(u32, &str, bool, Box<dyn Fn(&Path) -> Outcome>)> = vec![
        (1, "gradient fidelity", true, Box::new(|_| gradient_fidelity())),
        (2, "contrastive loss oracle", true, Box::new(|_| loss_oracle())),
        (3, "ARI/FMS/CScore oracles", true, Box::new(|_| metric_oracles())),
        (4, "CGacc ratios", true, Box::new(|_| cgacc_ratios())),
        (5, "Ward clustering oracle", true, Box::new(|_| clustering_oracle())),
        (6, "queue and momentum semantics", true, Box::new(|_| queue_momentum())),
        (7, "end-to-end learning signal", false, Box::new(learning_signal)),
        (8, "slices vs random crops", false, Box::new(slices_vs_crops)),
        (9, "slice ablation plumbing", true, Box::new(slice_ablations)),
        (10, "pipeline determinism", true, Box::new(determinism)),
    ];
    // VF_ACCEPTANCE_ONLY=1,5 restricts the run to the listed criteria
    let only: Option<Vec<u32>> = std::env::var("VF_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    for (id, name, hard, run) in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(id)) {
            continue;
        }
        let dir = work.path().join(format!("criterion{id}"));
        fs::create_dir_all(&dir).expect("criterion dir");
        let t = Instant::now();
        let outcome = run(&dir);
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} criterion {id:>2} {name}: {} [{:.1}s]",
            outcome.detail,
            t.elapsed().as_secs_f64()
        );
        if !outcome.pass && *hard {
            hard_failures += 1;
        }
    }
    println!("acceptance finished in {:.1}s", started.elapsed().as_secs_f64());
    if hard_failures > 0 {
        std::process::exit(1);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Tensor<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Tensor::vector(v.into_iter().map(|x| x / n).collect())
}

// ---------------------------------------------------------------------------
// 1. gradient fidelity

struct GradProblem {
    cfg: EncoderConfig,
    /// Four samples; for triplets they are anchor, positive, negative rows.
    views: Vec<ViewSet<f64>>,
    positives: Vec<Tensor<f64>>,
    queue: Vec<Tensor<f64>>,
}

fn grad_problem(seed: u64) -> GradProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EncoderConfig::default();
    let views = (0..12)
        .map(|_| {
            let data: Vec<f64> = (0..3 * 64 * 64).map(|_| rng.random_range(0.0..1.0)).collect();
            let image = Tensor::from_vec(&[3, 64, 64], data).unwrap();
            slice_views(&image, ViewMode::FourSlices, cfg.input_size).unwrap()
        })
        .collect();
    let d = cfg.embedding_dim;
    GradProblem {
        positives: (0..4).map(|_| random_unit(&mut rng, d)).collect(),
        queue: (0..16).map(|_| random_unit(&mut rng, d)).collect(),
        cfg,
        views,
    }
}

fn queue_of<T: Scalar>(keys: &[Tensor<f64>], dim: usize) -> MemoryQueue<T> {
    let mut q = MemoryQueue::new(keys.len(), dim).unwrap();
    let cast: Vec<Tensor<T>> = keys.iter().map(Tensor::cast).collect();
    q.push(&cast).unwrap();
    q
}

/// Loss and parameter gradients of encoder + contrastive loss (`triplet`
/// false) or encoder + triplet loss, via the tape in precision `T`.
fn tape_loss<T: Scalar>(p: &GradProblem, params: &ParamSet<T>, triplet: bool) -> (f64, Vec<Tensor<T>>) {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let count = if triplet { 12 } else { 4 };
    let vars: Vec<_> = p.views[..count]
        .iter()
        .map(|v| embed_object_tape(&p.cfg, &mut tape, &bound, &v.cast(), true).unwrap())
        .collect();
    let values: Vec<Tensor<T>> = vars.iter().map(|&v| tape.value(v).clone()).collect();
    let (loss, seeds) = if triplet {
        let out = triplet_loss(&values[0..4], &values[4..8], &values[8..12], 0.2).unwrap();
        let g: Vec<Tensor<T>> = out
            .grad_anchor
            .into_iter()
            .chain(out.grad_positive)
            .chain(out.grad_negative)
            .collect();
        (out.loss, g)
    } else {
        let pos: Vec<Tensor<T>> = p.positives.iter().map(Tensor::cast).collect();
        let out = ntxent_loss(&values, &pos, &queue_of(&p.queue, p.cfg.embedding_dim), 0.05).unwrap();
        (out.loss, out.grads)
    };
    let grads = tape.backward(&vars.into_iter().zip(seeds).collect::<Vec<_>>()).unwrap();
    let mut ps = params.clone();
    ps.clear_grads();
    tape.write_param_grads(&grads, &mut ps).unwrap();
    (loss, ps.grads().unwrap())
}

/// Same loss from the plain (tape-free) forward pass in double precision.
fn plain_loss(p: &GradProblem, params: &ParamSet<f64>, triplet: bool) -> f64 {
    let count = if triplet { 12 } else { 4 };
    let e: Vec<Tensor<f64>> = p.views[..count]
        .iter()
        .map(|v| embed_object(&p.cfg, params, v, true).unwrap())
        .collect();
    if triplet {
        triplet_loss(&e[0..4], &e[4..8], &e[8..12], 0.2).unwrap().loss
    } else {
        ntxent_loss(&e, &p.positives, &queue_of(&p.queue, p.cfg.embedding_dim), 0.05)
            .unwrap()
            .loss
    }
}

/// Which linear piece of the network the parameters sit in: every ReLU sign,
/// every max-pool winner and, for triplets, every hinge state. Central
/// differences only estimate the derivative when the whole stencil stays on
/// one piece.
fn linear_region(p: &GradProblem, params: &ParamSet<f64>, triplet: bool) -> Vec<u32> {
    let count = if triplet { 12 } else { 4 };
    let mut sig = Vec::new();
    for set in &p.views[..count] {
        for view in &set.views {
            let mut x = view.clone();
            for i in 0..p.cfg.channel_widths.len() {
                let (y, _) = ops::conv2d(&x, params.value(2 * i), params.value(2 * i + 1), 1, 1).unwrap();
                sig.extend(y.data().iter().map(|&v| u32::from(v > 0.0)));
                let (pooled, winners) = ops::maxpool2(&ops::relu(&y)).unwrap();
                sig.extend(winners);
                x = pooled;
            }
        }
    }
    if triplet {
        let e: Vec<Tensor<f64>> = p.views[..12]
            .iter()
            .map(|v| embed_object(&p.cfg, params, v, true).unwrap())
            .collect();
        for i in 0..4 {
            let d = |a: &Tensor<f64>, b: &Tensor<f64>| a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            sig.push(u32::from(d(&e[i], &e[4 + i]) - d(&e[i], &e[8 + i]) + 0.2 > 0.0));
        }
    }
    sig
}

/// Worst relative error of `analytic` against central differences over
/// `probes` random scalars whose stencil stays in one linear region.
/// Returns `(worst, skipped)`.
fn probe_gradient(p: &GradProblem, params: &ParamSet<f64>, triplet: bool, analytic: &[f64], probes: usize, eps: f64, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = linear_region(p, params, triplet);
    let mut probe = params.clone();
    let (mut worst, mut done, mut skipped) = (0.0f64, 0, 0);
    while done < probes {
        let idx = rng.random_range(0..params.num_scalars());
        let x = probe.scalar(idx);
        probe.set_scalar(idx, x + eps);
        let plus = plain_loss(p, &probe, triplet);
        let smooth_plus = linear_region(p, &probe, triplet) == base;
        probe.set_scalar(idx, x - eps);
        let minus = plain_loss(p, &probe, triplet);
        let smooth_minus = linear_region(p, &probe, triplet) == base;
        probe.set_scalar(idx, x);
        if !(smooth_plus && smooth_minus) {
            skipped += 1;
            assert!(skipped < 10 * probes, "almost every probe crosses a kink");
            continue;
        }
        worst = worst.max(relative_error(analytic[idx], (plus - minus) / (2.0 * eps)));
        done += 1;
    }
    (worst, skipped)
}

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let mut worst = [0.0f64; 4];
    let mut skipped = 0;
    for (k, triplet) in [false, true].into_iter().enumerate() {
        let p = grad_problem(100 + k as u64);
        let params: ParamSet<f64> = p.cfg.init_params(7 + k as u64).unwrap();
        let flat = |g: Vec<Tensor<f64>>| g.iter().flat_map(|t| t.data().to_vec()).collect::<Vec<f64>>();
        // tape gradients in both precisions against double-precision differences
        let g64 = flat(tape_loss::<f64>(&p, &params, triplet).1);
        let g32 = flat(tape_loss::<f32>(&p, &params.cast(), triplet).1.iter().map(Tensor::cast).collect());
        let (w64, s64) = probe_gradient(&p, &params, triplet, &g64, 30, 1e-4, 11);
        let (w32, s32) = probe_gradient(&p, &params, triplet, &g32, 30, 1e-4, 13);
        worst[2 * k] = w32;
        worst[2 * k + 1] = w64;
        skipped += s64 + s32;
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst[0] < 1e-3 && worst[2] < 1e-3 && worst[1] < 1e-6 && worst[3] < 1e-6 && secs < 60.0;
    Outcome::new(
        pass,
        format!(
            "contrastive f32 {:.2e} f64 {:.2e}, triplet f32 {:.2e} f64 {:.2e} (limits 1e-3 / 1e-6); 30 probes each, {skipped} kink-crossing probes redrawn; {secs:.1}s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. contrastive loss oracle

/// `-log(exp(q·k+/τ) / Σ_i exp(q·k_i/τ))` evaluated literally.
fn direct_loss(q: &[Tensor<f64>], pos: &[Tensor<f64>], queue: &[Tensor<f64>], tau: f64) -> f64 {
    let mut total = 0.0;
    for (qi, ki) in q.iter().zip(pos) {
        let num = (qi.dot(ki) / tau).exp();
        let den = num + queue.iter().map(|n| (qi.dot(n) / tau).exp()).sum::<f64>();
        total += -(num / den).ln();
    }
    total / q.len() as f64
}

fn loss_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..=16);
        let b = rng.random_range(1..=6);
        let k = rng.random_range(0..=40);
        let tau = rng.random_range(0.05..1.0);
        let q: Vec<_> = (0..b).map(|_| random_unit(&mut rng, d)).collect();
        let pos: Vec<_> = (0..b).map(|_| random_unit(&mut rng, d)).collect();
        let negs: Vec<_> = (0..k).map(|_| random_unit(&mut rng, d)).collect();
        let got = ntxent_loss(&q, &pos, &queue_of(&negs, d), tau).unwrap().loss;
        worst = worst.max((got - direct_loss(&q, &pos, &negs, tau)).abs());
    }
    // worked examples
    let e = |v: &[f64]| Tensor::vector(v.to_vec());
    let empty = ntxent_loss(&[e(&[0.6, 0.8])], &[e(&[1.0, 0.0])], &MemoryQueue::new(4, 2).unwrap(), 0.05)
        .unwrap()
        .loss;
    let orth = [e(&[0.0, 1.0, 0.0, 0.0]), e(&[0.0, 0.0, 1.0, 0.0]), e(&[0.0, 0.0, 0.0, 1.0])];
    // q orthogonal to the positive and to all three queue entries
    let uniform3 = ntxent_loss(&[e(&[1.0, 0.0, 0.0, 0.0])], &[e(&[0.0, 1.0, 0.0, 0.0])], &queue_of(&orth, 4), 0.05)
        .unwrap()
        .loss;
    let sharp = ntxent_loss(&[e(&[1.0, 0.0])], &[e(&[1.0, 0.0])], &queue_of(&[e(&[0.0, 1.0])], 2), 0.05)
        .unwrap()
        .loss;
    let sharp_expected = (1.0 + (-20.0f64).exp()).ln();
    let examples_ok = empty == 0.0
        && (uniform3 - 4f64.ln()).abs() < 1e-12
        && (sharp - sharp_expected).abs() < 1e-15;
    Outcome::new(
        worst < 1e-6 && examples_ok,
        format!(
            "max |loss - direct| {worst:.2e} over 100 instances (limit 1e-6); empty queue {empty}, uniform N=3 {uniform3:.6} vs ln4, sharp {sharp:.3e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. metric oracles

fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    // restricted growth strings
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=max + 1 {
            cur[i] = v;
            rec(i + 1, max.max(v), cur, out);
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    rec(1, 0, &mut cur, &mut out);
    out
}

/// `(tp, fp, fn, tn)` by looking at every pair.
fn brute_pairs(pred: &[usize], truth: &[usize]) -> (i128, i128, i128, i128) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    (tp, fp, fn_, tn)
}

/// ARI from its definition `(RI − E[RI]) / (max RI − E[RI])` in exact
/// arithmetic; `None` when the denominator vanishes.
fn brute_ari(pred: &[usize], truth: &[usize]) -> Option<Ratio<i128>> {
    let (tp, fp, fn_, tn) = brute_pairs(pred, truth);
    let pairs = Ratio::from_integer(tp + fp + fn_ + tn);
    let sp = Ratio::from_integer(tp + fp);
    let st = Ratio::from_integer(tp + fn_);
    let index = Ratio::from_integer(tp);
    let expected = sp * st / pairs;
    let max = (sp + st) / Ratio::from_integer(2);
    let den = max - expected;
    (den != Ratio::from_integer(0)).then(|| (index - expected) / den)
}

fn check_metrics_pair(pred: &[usize], truth: &[usize]) -> Result<(), String> {
    let (tp, fp, fn_, _) = brute_pairs(pred, truth);
    let c = pair_counts(pred, truth).unwrap();
    if (c.tp as i128, c.fp as i128, c.fn_ as i128) != (tp, fp, fn_) {
        return Err(format!("pair counts differ for {pred:?} / {truth:?}"));
    }
    match (ari_fraction(&c), brute_ari(pred, truth)) {
        (Some((n, d)), Some(r)) => {
            if Ratio::new(n, d) != r {
                return Err(format!("ARI {n}/{d} != {r} for {pred:?} / {truth:?}"));
            }
            if (ari(pred, truth).unwrap() - *r.numer() as f64 / *r.denom() as f64).abs() > 1e-12 {
                return Err(format!("ARI float disagrees for {pred:?} / {truth:?}"));
            }
        }
        (None, None) => {
            let expected = if pred_same(pred, truth) { 1.0 } else { 0.0 };
            if ari(pred, truth).unwrap() != expected {
                return Err(format!("degenerate ARI convention broken for {pred:?} / {truth:?}"));
            }
        }
        _ => return Err(format!("degeneracy disagrees for {pred:?} / {truth:?}")),
    }
    // FMS² = tp² / ((tp+fp)(tp+fn)) exactly; the float value must round to it
    let (value, ftp, ffp, ffn) = fms(pred, truth).unwrap();
    if (ftp as i128, ffp as i128, ffn as i128) != (tp, fp, fn_) {
        return Err(format!("FMS counts differ for {pred:?} / {truth:?}"));
    }
    let exact_sq = if tp == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(tp * tp, (tp + fp) * (tp + fn_))
    };
    let sq = *exact_sq.numer() as f64 / *exact_sq.denom() as f64;
    if (value * value - sq).abs() > 1e-12 {
        return Err(format!("FMS {value} vs exact sqrt({exact_sq}) for {pred:?} / {truth:?}"));
    }
    Ok(())
}

/// Whether the two labelings induce the same partition.
fn pred_same(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

fn metric_oracles() -> Outcome {
    let t = Instant::now();
    let mut checked = 0usize;
    for n in 2..=6 {
        let parts = set_partitions(n);
        for p in &parts {
            for q in &parts {
                if let Err(e) = check_metrics_pair(p, q) {
                    return Outcome::new(false, e);
                }
                checked += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..200 {
        let kp = rng.random_range(1..=8);
        let kt = rng.random_range(1..=8);
        let p: Vec<usize> = (0..20).map(|_| rng.random_range(0..kp)).collect();
        let q: Vec<usize> = (0..20).map(|_| rng.random_range(0..kt)).collect();
        if let Err(e) = check_metrics_pair(&p, &q) {
            return Outcome::new(false, e);
        }
        checked += 1;
    }
    // (ARI, FMS, printed CScore) reference rows
    let rows = [
        (0.69, 0.71, 0.700),
        (0.09, 0.15, 0.110),
        (0.15, 0.22, 0.182),
        (0.12, 0.20, 0.152),
        (0.27, 0.30, 0.281),
        (0.66, 0.71, 0.680),
        (0.75, 0.76, 0.756),
        (1.0, 1.0, 1.0),
        (0.0, 0.22, 0.0),
        (0.09, 0.30, 0.135),
        (0.28, 0.45, 0.341),
        (0.64, 0.71, 0.674),
        (0.44, 0.49, 0.466),
        (0.07, 0.12, 0.089),
        (0.06, 0.17, 0.090),
        (0.04, 0.13, 0.063),
        (0.20, 0.24, 0.214),
        (0.58, 0.64, 0.610),
        (0.79, 0.80, 0.796),
    ];
    let worst_row = rows
        .iter()
        .map(|&(a, f, c)| (cscore(a, f) - c).abs())
        .fold(0.0f64, f64::max);
    let secs = t.elapsed().as_secs_f64();
    Outcome::new(
        worst_row < 5e-3 && secs < 60.0,
        format!(
            "{checked} partition pairs exact; worst CScore row error {worst_row:.4} (limit 5e-3); ARI .75/FMS .76 -> {:.4}, {secs:.1}s",
            cscore(0.75, 0.76)
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. CGacc ratios

/// A clustering with exactly `n_detected` clusters of size ≥ 2, of which
/// `n_correct` pass the majority rule, plus a few singletons. Cluster sizes
/// vary so the floor rule is exercised.
fn cgacc_fixture(n_correct: usize, n_detected: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    let mut next_truth = 0;
    for c in 0..n_detected {
        let size = rng.random_range(2..=7);
        // correct: majority = max(2, floor(size/2)); incorrect: one below
        let need = (size / 2).max(2);
        let majority = if c < n_correct { need.min(size) } else { need - 1 };
        let majority = if c < n_correct && size == 2 { 2 } else { majority };
        for k in 0..size {
            pred.push(c);
            if k < majority {
                truth.push(next_truth);
            } else {
                next_truth += 1;
                truth.push(next_truth);
            }
        }
        next_truth += 1;
    }
    for s in 0..3 {
        pred.push(n_detected + s);
        truth.push(next_truth + s);
    }
    (pred, truth)
}

fn cgacc_ratios() -> Outcome {
    // (correct, detected, printed value) for every method/dataset cell
    let cells: [(usize, usize, f64); 44] = [
        (2, 3, 0.67), (1, 2, 0.5), (2, 3, 0.67), (1, 1, 1.0), (1, 2, 0.5), (2, 2, 1.0), (2, 2, 1.0),
        (4, 4, 1.0), (2, 3, 0.67), (1, 4, 0.25), (2, 2, 1.0), (3, 4, 0.75), (4, 5, 0.8), (3, 4, 0.75),
        (3, 4, 0.75), (2, 5, 0.4), (2, 6, 0.33), (0, 5, 0.0), (0, 6, 0.0), (0, 7, 0.0), (1, 2, 0.5), (3, 6, 0.5), (3, 5, 0.6),
        (4, 6, 0.67), (2, 5, 0.4), (1, 2, 0.5), (3, 6, 0.5), (3, 6, 0.5), (3, 3, 1.0), (6, 7, 0.85),
        (1, 1, 1.0), (0, 1, 0.0), (1, 2, 0.5), (1, 3, 0.33), (1, 2, 0.5), (1, 1, 1.0), (1, 1, 1.0),
        (5, 6, 0.83), (2, 4, 0.5), (2, 4, 0.5), (4, 5, 0.8), (3, 5, 0.6), (6, 6, 1.0), (7, 7, 1.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for &(nc, nd, printed) in &cells {
        let (pred, truth) = cgacc_fixture(nc, nd, &mut rng);
        let got = cgacc(&pred, &truth).unwrap();
        if (got.n_correct, got.n_detected) != (nc, nd) {
            return Outcome::new(false, format!("fixture {nc}/{nd} scored {}/{}", got.n_correct, got.n_detected));
        }
        worst = worst.max((got.value - printed).abs());
    }
    let c67 = cgacc_fixture(6, 7, &mut rng);
    let c77 = cgacc_fixture(7, 7, &mut rng);
    let v67 = cgacc(&c67.0, &c67.1).unwrap().value;
    let v77 = cgacc(&c77.0, &c77.1).unwrap().value;
    Outcome::new(
        worst < 0.01 && v77 == 1.0,
        format!(
            "{} cells, worst |value - printed| {worst:.4} (limit 0.01); 6/7 -> {v67:.3}, 7/7 -> {v77}",
            cells.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Ward oracle

fn ward_cost(points: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
    let mean = |m: &[usize]| {
        let mut c = vec![0.0; points[0].len()];
        for &i in m {
            for (cj, v) in c.iter_mut().zip(&points[i]) {
                *cj += v / m.len() as f64;
            }
        }
        c
    };
    let (ma, mb) = (mean(a), mean(b));
    let d: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
    (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64 * d
}

/// Recomputes every pairwise Ward cost from the raw points at every step.
/// Returns merges as (id, id, cost) and the partition after each merge.
#[allow(clippy::type_complexity)]
fn ward_oracle(points: &[Vec<f64>]) -> (Vec<(usize, usize, f64)>, Vec<Vec<Vec<usize>>>) {
    let n = points.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    let mut partitions = vec![clusters.iter().map(|c| c.1.clone()).collect()];
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let c = ward_cost(points, &clusters[x].1, &clusters[y].1);
                let key = (clusters[x].1[0].min(clusters[y].1[0]), clusters[x].1[0].max(clusters[y].1[0]));
                let tol = 1e-12 * c.abs().max(1.0);
                let take = match best {
                    None => true,
                    Some((bc, bk, _, _)) => c < bc - tol || ((c - bc).abs() <= tol && key < bk),
                };
                if take {
                    best = Some((c, key, x, y));
                }
            }
        }
        let (c, _, x, y) = best.unwrap();
        let (ix, iy) = (clusters[x].0, clusters[y].0);
        merges.push((ix.min(iy), ix.max(iy), c));
        let mut members = clusters[x].1.clone();
        members.extend(&clusters[y].1);
        members.sort();
        clusters.remove(y);
        clusters[x] = (n + step, members);
        partitions.push(clusters.iter().map(|c| c.1.clone()).collect());
    }
    (merges, partitions)
}

fn canonical(mut p: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for c in &mut p {
        c.sort();
    }
    p.sort();
    p
}

fn partition_of(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut p = vec![Vec::new(); labels.iter().max().map_or(0, |m| m + 1)];
    for (i, &l) in labels.iter().enumerate() {
        p[l].push(i);
    }
    canonical(p)
}

fn clustering_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for run in 0..100 {
        let n = rng.random_range(2..=10);
        let d = rng.random_range(1..=4);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let tree = Dendrogram::build(&points).unwrap();
        let (merges, partitions) = ward_oracle(&points);
        for (m, &(a, b, c)) in tree.merges.iter().zip(&merges) {
            if (m.a, m.b) != (a, b) || (m.cost - c).abs() > 1e-9 * c.max(1.0) {
                return Outcome::new(false, format!("dataset {run}: merge ({}, {}, {}) vs ({a}, {b}, {c})", m.a, m.b, m.cost));
            }
        }
        if tree.merges.windows(2).any(|w| w[1].cost < w[0].cost) {
            return Outcome::new(false, format!("dataset {run}: merge costs decrease"));
        }
        let top = merges.last().map_or(1.0, |m| m.2);
        for _ in 0..5 {
            let t = rng.random_range(0.0..top * 1.1);
            let applied = merges.iter().take_while(|m| m.2 <= t).count();
            if partition_of(&tree.cut(t).unwrap()) != canonical(partitions[applied].clone()) {
                return Outcome::new(false, format!("dataset {run}: cut at {t} differs"));
            }
        }
    }
    Outcome::new(true, "100 datasets (N<=10, D<=4), identical merges and 5 cuts each, costs non-decreasing")
}

// ---------------------------------------------------------------------------
// 6. queue and momentum

fn queue_momentum() -> Outcome {
    let key = |i: usize| {
        let mut v = vec![0.0f64; 8];
        v[i % 8] = if i < 8 { 1.0 } else { -1.0 };
        Tensor::vector(v)
    };
    let contents = |q: &MemoryQueue<f64>| q.iter().cloned().collect::<Vec<_>>();
    let mut fifo_ok = true;
    // three keys into an empty queue of two
    let mut q = MemoryQueue::new(2, 8).unwrap();
    q.push(&[key(0), key(1), key(2)]).unwrap();
    fifo_ok &= contents(&q) == vec![key(1), key(2)];
    q.push(&[]).unwrap();
    fifo_ok &= contents(&q) == vec![key(1), key(2)];
    // K+1 single pushes against a hand-simulated ring
    for cap in [1usize, 3, 5] {
        let mut q = MemoryQueue::new(cap, 8).unwrap();
        let mut sim: Vec<Tensor<f64>> = Vec::new();
        for i in 0..=cap * 3 {
            q.push(&[key(i)]).unwrap();
            sim.push(key(i));
            if sim.len() > cap {
                sim.remove(0);
            }
            fifo_ok &= contents(&q) == sim;
        }
    }

    let cfg = EncoderConfig::default();
    let query: ParamSet<f64> = cfg.init_params(1).unwrap();
    let key0: ParamSet<f64> = cfg.init_params(2).unwrap();
    let mut k = key0.clone();
    momentum_update(&mut k, &query, 1.0).unwrap();
    let noop = k == key0;
    let mut k = key0.clone();
    momentum_update(&mut k, &query, 0.0).unwrap();
    let copy = k.iter().zip(query.iter()).all(|(a, b)| a.value == b.value);
    // k_n = θ^n k_0 + (1 − θ^n) q for a fixed query
    let theta = 0.999f64;
    let mut k = key0.clone();
    let mut worst: f64 = 0.0;
    for n in 1..=1000 {
        momentum_update(&mut k, &query, theta).unwrap();
        let w = theta.powi(n);
        for i in 0..k.num_scalars() {
            let expected = w * key0.scalar(i) + (1.0 - w) * query.scalar(i);
            worst = worst.max((k.scalar(i) - expected).abs());
        }
    }
    Outcome::new(
        fifo_ok && noop && copy && worst < 1e-6,
        format!("FIFO {fifo_ok}, theta=1 no-op {noop}, theta=0 copy {copy}, geometric series max error {worst:.2e} over 1000 steps"),
    )
}

// ---------------------------------------------------------------------------
// 7-10. end-to-end pipeline

struct RunResult {
    epoch_means: Vec<f64>,
    best_ari: f64,
    best_cscore: f64,
    untrained_ari: f64,
}

fn make_corpus(dir: &Path, locality: f64) -> std::path::PathBuf {
    let corpus = CorpusConfig {
        locality_fraction: locality,
        ..CorpusConfig::default()
    };
    let out = dir.join(format!("corpus_loc{locality}"));
    if !out.exists() {
        cmd_gen_data(&corpus, &out).unwrap();
    }
    out
}

/// Trains, embeds and sweeps; with `baseline` also sweeps the untrained
/// encoder (same initialization, zero learning rate).
fn run_pipeline(dir: &Path, corpus: &Path, mode: TrainMode, seed: u64, baseline: bool) -> RunResult {
    let thresholds = default_thresholds();
    let cfg = TrainConfig {
        mode,
        seed,
        ..TrainConfig::default()
    };
    let run = dir.join(format!("{}_{seed}", mode.cli_name()));
    let summary = cmd_train(&cfg, corpus, &run).unwrap();
    cmd_embed(&summary.checkpoint, corpus, None, &run).unwrap();
    let reports = cmd_sweep(&run.join(EMBEDDINGS_FILE), corpus, &thresholds, &run).unwrap();
    let untrained_ari = if baseline {
        let frozen = TrainConfig {
            lr: 0.0,
            epochs: 1,
            ..cfg.clone()
        };
        let base = dir.join(format!("{}_{seed}_untrained", mode.cli_name()));
        let s = cmd_train(&frozen, corpus, &base).unwrap();
        cmd_embed(&s.checkpoint, corpus, None, &base).unwrap();
        let r = cmd_sweep(&base.join(EMBEDDINGS_FILE), corpus, &thresholds, &base).unwrap();
        best_by(&r, |r| r.ari).unwrap().ari
    } else {
        f64::NAN
    };
    RunResult {
        epoch_means: summary.trace.epoch_means(),
        best_ari: best_by(&reports, |r| r.ari).unwrap().ari,
        best_cscore: best_by(&reports, |r| r.cscore).unwrap().cscore,
        untrained_ari,
    }
}

fn learning_signal(dir: &Path) -> Outcome {
    let t = Instant::now();
    let corpus = make_corpus(dir, 0.5);
    let runs: Vec<RunResult> = (0..3).map(|s| run_pipeline(dir, &corpus, TrainMode::Pbcnet, s, true)).collect();
    let drop = median(runs.iter().map(|r| r.epoch_means[0] - r.epoch_means.last().unwrap()).collect());
    let best = median(runs.iter().map(|r| r.best_ari).collect());
    let gain = median(runs.iter().map(|r| r.best_ari - r.untrained_ari).collect());
    let secs = t.elapsed().as_secs_f64();
    let (a, b) = (drop > 0.0, best >= 0.6 && gain >= 0.3);
    Outcome::new(
        a && b && secs <= 900.0,
        format!(
            "(a) {} median first-last epoch loss {drop:.4}; (b) {} median best ARI {best:.3} (need 0.6), gain over untrained {gain:.3} (need 0.3); per-seed ARI {:?}; {secs:.0}s",
            if a { "ok" } else { "fails" },
            if b { "ok" } else { "fails" },
            runs.iter().map(|r| format!("{:.3}/{:.3}", r.best_ari, r.untrained_ari)).collect::<Vec<_>>()
        ),
    )
}

fn slices_vs_crops(dir: &Path) -> Outcome {
    let corpus = make_corpus(dir, 1.0);
    let score = |mode| median((0..3).map(|s| run_pipeline(dir, &corpus, mode, s, false).best_cscore).collect());
    let slices = score(TrainMode::Pbcnet);
    let crops = score(TrainMode::CropContrastive);
    Outcome::new(
        slices >= crops,
        format!("median best CScore: slices {slices:.3}, random crops {crops:.3}"),
    )
}

fn slice_ablations(dir: &Path) -> Outcome {
    let corpus = make_corpus(dir, 0.5);
    let n = default_thresholds().len();
    let mut details = Vec::new();
    let mut ok = true;
    for mode in [TrainMode::PbcnetHoriz, TrainMode::PbcnetVert] {
        let r = run_pipeline(dir, &corpus, mode, 0, false);
        let csv = fs::read_to_string(dir.join(format!("{}_0", mode.cli_name())).join(SWEEP_FILE)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        ok &= lines[0] == SWEEP_CSV_HEADER && lines.len() == n + 1;
        details.push(format!("{}: {} rows, best CScore {:.3}", mode.cli_name(), lines.len() - 1, r.best_cscore));
    }
    Outcome::new(ok, details.join("; "))
}

fn determinism(dir: &Path) -> Outcome {
    let run = |tag: &str| {
        let root = dir.join(tag);
        let corpus = root.join("corpus");
        cmd_gen_data(&CorpusConfig::default(), &corpus).unwrap();
        let cfg = TrainConfig {
            seed: 3,
            ..TrainConfig::default()
        };
        let s = cmd_train(&cfg, &corpus, &root).unwrap();
        cmd_embed(&s.checkpoint, &corpus, None, &root).unwrap();
        cmd_cluster(&root.join(EMBEDDINGS_FILE), 0.5, &root).unwrap();
        cmd_eval(&root.join(ASSIGNMENT_FILE), &corpus, None, &root).unwrap();
        let read = |f: &str| fs::read(root.join(f)).unwrap();
        (s.trace, read(ASSIGNMENT_FILE), read(METRICS_FILE))
    };
    let (ta, aa, ma) = run("first");
    let (tb, ab, mb) = run("second");
    let same_len = ta.steps.len() == tb.steps.len();
    let worst = ta
        .steps
        .iter()
        .zip(&tb.steps)
        .map(|(a, b)| (a.loss - b.loss).abs())
        .fold(0.0f64, f64::max);
    let files = aa == ab && ma == mb;
    Outcome::new(
        same_len && worst <= 1e-6 && files,
        format!(
            "{} steps, max loss difference {worst:.1e} (limit 1e-6), assignment/metrics byte-identical {files}",
            ta.steps.len()
        ),
    )
}
