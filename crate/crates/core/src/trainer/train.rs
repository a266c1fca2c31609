use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};

use super::{TrainConfig, TrainMode};
use crate::augment::{color_distort, random_resized_crop, slice_views, ViewMode, ViewSet};
use crate::encoder::{embed_object, embed_object_tape, Checkpoint, EncoderPair};
use crate::error::{Error, Result};
use crate::numeric::{sgd_step, Tape, Tensor, Var};
use crate::objectives::{ntxent_loss, triplet_loss, MemoryQueue};
use crate::rng::{mix, rng_for};
use crate::synth::Manifest;

const STREAM_INIT: u64 = 1;
const STREAM_PERMUTE: u64 = 2;
const STREAM_AUGMENT: u64 = 3;
const STREAM_WARMUP: u64 = 4;
const STREAM_TRIPLET: u64 = 5;

const SIDE_QUERY: u64 = 0;
const SIDE_KEY: u64 = 1;
const SIDE_WARMUP: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub epoch: usize,
    /// Global optimizer step, counted from 0.
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub steps: Vec<StepLoss>,
}

impl LossTrace {
    /// Mean step loss per epoch, in epoch order.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for s in &self.steps {
            if out.len() <= s.epoch {
                out.resize(s.epoch + 1, (0.0, 0));
            }
            out[s.epoch].0 += s.loss;
            out[s.epoch].1 += 1;
        }
        out.into_iter().map(|(sum, n)| sum / n.max(1) as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,step,loss\n");
        for r in &self.steps {
            writeln!(s, "{},{},{}", r.epoch, r.step, r.loss).expect("writing to a String");
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ctx = path.display().to_string();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "epoch,step,loss")) => {}
            _ => return Err(Error::format(ctx, "line 1: expected header `epoch,step,loss`")),
        }
        let mut steps = Vec::new();
        for (i, line) in lines {
            let bad = || Error::format(ctx.clone(), format!("line {}: malformed row `{line}`", i + 1));
            let mut f = line.split(',');
            let (Some(e), Some(s), Some(l), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(bad());
            };
            steps.push(StepLoss {
                epoch: e.parse().map_err(|_| bad())?,
                step: s.parse().map_err(|_| bad())?,
                loss: l.parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { steps })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub trace: LossTrace,
}

/// Owns all mutable training state. `train` drives it epoch by epoch; tests
/// may drive single steps.
pub struct Trainer {
    config: TrainConfig,
    images: Vec<Tensor<f32>>,
    labels: Option<Vec<u32>>,
    pair: EncoderPair<f32>,
    queue: MemoryQueue<f32>,
    step: usize,
    trace: LossTrace,
}

impl Trainer {
    /// Initializes the encoders and, for contrastive modes, fills the queue to
    /// capacity with key embeddings of distorted training images. When the
    /// queue is larger than the corpus, images repeat with fresh distortions,
    /// so the softmax denominator has the same size at every step.
    pub fn new(config: TrainConfig, images: Vec<Tensor<f32>>, labels: Option<Vec<u32>>) -> Result<Self> {
        config.validate()?;
        if images.is_empty() {
            return Err(Error::Argument("training set is empty".into()));
        }
        if images.len() < config.batch {
            return Err(Error::Argument(format!(
                "batch {} exceeds corpus size {}",
                config.batch,
                images.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != images.len() {
                return Err(Error::Label(format!("{} labels for {} images", l.len(), images.len())));
            }
        }
        if config.mode == TrainMode::Triplet {
            let labels = labels
                .as_ref()
                .ok_or_else(|| Error::Label("triplet training needs style labels".into()))?;
            check_triplet_labels(labels)?;
        }
        let query = config.encoder.init_params::<f32>(mix(config.seed, &[STREAM_INIT]))?;
        let pair = EncoderPair::new(query, config.theta as f32);
        let queue = MemoryQueue::new(config.queue_capacity, config.encoder.embedding_dim)?;
        let mut t = Self {
            config,
            images,
            labels,
            pair,
            queue,
            step: 0,
            trace: LossTrace::default(),
        };
        if t.config.mode.is_contrastive() {
            t.warm_up()?;
        }
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn pair(&self) -> &EncoderPair<f32> {
        &self.pair
    }

    pub fn queue(&self) -> &MemoryQueue<f32> {
        &self.queue
    }

    pub fn trace(&self) -> &LossTrace {
        &self.trace
    }

    /// Number of optimizer steps taken so far.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.images.len() / self.config.batch
    }

    fn warm_up(&mut self) -> Result<()> {
        let n = self.config.queue_capacity;
        let mut order: Vec<usize> = Vec::with_capacity(n + self.images.len());
        let mut pass = 0u64;
        while order.len() < n {
            let mut perm: Vec<usize> = (0..self.images.len()).collect();
            perm.shuffle(&mut rng_for(self.config.seed, &[STREAM_WARMUP, pass]));
            order.extend(perm);
            pass += 1;
        }
        let mut keys = Vec::with_capacity(n);
        for (slot, &i) in order[..n].iter().enumerate() {
            let views = self.augment(i, &[STREAM_WARMUP, slot as u64, SIDE_WARMUP])?;
            keys.push(embed_object(&self.config.encoder, &self.pair.key, &views, true)?);
        }
        self.queue.push(&keys)
    }

    /// Color distortion followed by the mode's view extraction.
    fn augment(&self, index: usize, stream: &[u64]) -> Result<ViewSet<f32>> {
        let mut rng = rng_for(self.config.seed, stream);
        let image = color_distort(&self.images[index], &self.config.distortion, &mut rng)?;
        let size = self.config.encoder.input_size;
        match self.config.mode {
            TrainMode::CropContrastive => {
                let v = random_resized_crop(&image, self.config.crop_scale, self.config.crop_aspect, &mut rng, size)?;
                Ok(ViewSet {
                    views: vec![v],
                    mode: ViewMode::Crop,
                })
            }
            mode => slice_views(&image, mode.view_mode(), size),
        }
    }

    /// One pass over a fresh permutation; the last partial batch is dropped.
    /// Returns the epoch's mean loss.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.images.len()).collect();
        order.shuffle(&mut rng_for(self.config.seed, &[STREAM_PERMUTE, epoch as u64]));
        let mut sum = 0.0;
        let batches: Vec<Vec<usize>> = order.chunks_exact(self.config.batch).map(<[usize]>::to_vec).collect();
        for batch in &batches {
            sum += self.step(epoch, batch)?;
        }
        let mean = sum / batches.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        Ok(mean)
    }

    /// One optimizer step on the given sample indices.
    pub fn step(&mut self, epoch: usize, batch: &[usize]) -> Result<f64> {
        let result = match self.config.mode {
            TrainMode::Triplet => self.triplet_step(batch),
            _ => self.contrastive_step(batch),
        };
        // Overflowing activations surface as degenerate normalizations.
        let loss = match result {
            Err(Error::DegenerateInput(detail)) => return Err(Error::Divergence { step: self.step, detail }),
            other => other?,
        };
        if !self.pair.query.is_finite() {
            return Err(Error::Divergence {
                step: self.step,
                detail: "non-finite encoder parameters".into(),
            });
        }
        self.trace.steps.push(StepLoss {
            epoch,
            step: self.step,
            loss,
        });
        log::debug!("step {}: loss {loss:.6}", self.step);
        self.step += 1;
        Ok(loss)
    }

    fn divergence(&self, loss: f64) -> Result<()> {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(Error::Divergence {
                step: self.step,
                detail: format!("loss is {loss}"),
            })
        }
    }

    fn optimizer_step(&mut self) -> Result<()> {
        let c = &self.config;
        sgd_step(&mut self.pair.query, c.lr as f32, c.sgd_momentum as f32, c.weight_decay as f32)
    }

    fn contrastive_step(&mut self, batch: &[usize]) -> Result<f64> {
        let cfg = self.config.encoder.clone();
        let step = self.step as u64;
        let mut tape = Tape::new();
        let bound = tape.bind(&self.pair.query);
        let mut q_vars = Vec::with_capacity(batch.len());
        let mut keys = Vec::with_capacity(batch.len());
        for (slot, &i) in batch.iter().enumerate() {
            let q_views = self.augment(i, &[STREAM_AUGMENT, step, slot as u64, SIDE_QUERY])?;
            let k_views = self.augment(i, &[STREAM_AUGMENT, step, slot as u64, SIDE_KEY])?;
            q_vars.push(embed_object_tape(&cfg, &mut tape, &bound, &q_views, true)?);
            keys.push(embed_object(&cfg, &self.pair.key, &k_views, true)?);
        }
        let queries: Vec<Tensor<f32>> = q_vars.iter().map(|&v| tape.value(v).clone()).collect();
        let out = ntxent_loss(&queries, &keys, &self.queue, self.config.tau)?;
        self.divergence(out.loss)?;
        self.backward(&tape, q_vars.into_iter().zip(out.grads).collect())?;
        self.optimizer_step()?;
        self.pair.momentum_update()?;
        self.queue.push(&keys)?;
        Ok(out.loss)
    }

    fn triplet_step(&mut self, batch: &[usize]) -> Result<f64> {
        let labels = self.labels.as_ref().expect("checked in Trainer::new");
        let step = self.step as u64;
        let mut rng = rng_for(self.config.seed, &[STREAM_TRIPLET, step]);
        let cfg = self.config.encoder.clone();
        let mut tape = Tape::new();
        let bound = tape.bind(&self.pair.query);
        let mut vars: [Vec<Var>; 3] = Default::default();
        for (slot, &a) in batch.iter().enumerate() {
            let same: Vec<usize> = (0..labels.len()).filter(|&j| j != a && labels[j] == labels[a]).collect();
            let other: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != labels[a]).collect();
            // A singleton group pairs the anchor with another distortion of itself.
            let p = same.choose(&mut rng).copied().unwrap_or(a);
            let n = *other.choose(&mut rng).expect("at least two groups exist");
            for (role, idx) in [a, p, n].into_iter().enumerate() {
                let views = self.augment(idx, &[STREAM_AUGMENT, step, slot as u64, role as u64])?;
                vars[role].push(embed_object_tape(&cfg, &mut tape, &bound, &views, true)?);
            }
        }
        let values = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>();
        let out = triplet_loss(&values(&vars[0]), &values(&vars[1]), &values(&vars[2]), self.config.margin)?;
        self.divergence(out.loss)?;
        let [va, vp, vn] = vars;
        let seeds = va
            .into_iter()
            .zip(out.grad_anchor)
            .chain(vp.into_iter().zip(out.grad_positive))
            .chain(vn.into_iter().zip(out.grad_negative))
            .collect();
        self.backward(&tape, seeds)?;
        self.optimizer_step()?;
        Ok(out.loss)
    }

    fn backward(&mut self, tape: &Tape<f32>, seeds: Vec<(Var, Tensor<f32>)>) -> Result<()> {
        let grads = tape.backward(&seeds)?;
        self.pair.query.clear_grads();
        tape.write_param_grads(&grads, &mut self.pair.query)
    }

    pub fn finish(self) -> Result<TrainOutput> {
        let checkpoint = Checkpoint::new(self.config.mode, self.config.encoder, self.pair.query)?;
        Ok(TrainOutput {
            checkpoint,
            trace: self.trace,
        })
    }
}

fn check_triplet_labels(labels: &[u32]) -> Result<()> {
    let mut counts = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    if counts.values().filter(|&&c| c >= 2).count() < 2 {
        return Err(Error::Label(
            "triplet training needs at least two groups with two or more members each".into(),
        ));
    }
    Ok(())
}

/// Trains on a manifest's images. Labels are read when present and are
/// required for triplet mode.
pub fn train(config: &TrainConfig, manifest: &Manifest) -> Result<TrainOutput> {
    if manifest.is_empty() {
        return Err(Error::Argument("manifest is empty".into()));
    }
    let labels = match manifest.style_labels() {
        Ok(l) => Some(l),
        Err(e) if config.mode == TrainMode::Triplet => return Err(e),
        Err(_) => None,
    };
    train_images(config, manifest.load_images()?, labels)
}

pub fn train_images(config: &TrainConfig, images: Vec<Tensor<f32>>, labels: Option<Vec<u32>>) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(config.clone(), images, labels)?;
    for epoch in 0..config.epochs {
        trainer.run_epoch(epoch)?;
    }
    trainer.finish()
}
