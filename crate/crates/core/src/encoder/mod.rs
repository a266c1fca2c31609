//! The convolutional encoder: `conv3×3 → relu → maxpool2` per width, then
//! global average pooling (and an optional two-layer projector). Object
//! embeddings are the sum of per-view embeddings, optionally l2-normalized.

mod checkpoint;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::augment::ViewSet;
use crate::error::{Error, Result};
use crate::numeric::{ops, ParamSet, Scalar, Tape, Tensor, Var};
use crate::rng::rng_for;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Side of each (square) view fed to the encoder.
    pub input_size: usize,
    pub channel_widths: Vec<usize>,
    pub embedding_dim: usize,
    pub use_projector: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_size: 32,
            channel_widths: vec![16, 32, 32],
            embedding_dim: 32,
            use_projector: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let Some(&last) = self.channel_widths.last() else {
            return Err(Error::Argument("channel_widths is empty".into()));
        };
        if self.channel_widths.contains(&0) || self.embedding_dim == 0 {
            return Err(Error::Argument("zero channel width or embedding_dim".into()));
        }
        let factor = 1usize << self.channel_widths.len();
        if self.input_size == 0 || !self.input_size.is_multiple_of(factor) {
            return Err(Error::Argument(format!(
                "input_size {} must be a positive multiple of {factor} for {} pooling stages",
                self.input_size,
                self.channel_widths.len()
            )));
        }
        if !self.use_projector && self.embedding_dim != last {
            return Err(Error::Argument(format!(
                "embedding_dim {} must equal the last channel width {last} without a projector",
                self.embedding_dim
            )));
        }
        Ok(())
    }

    fn projector_hidden(&self) -> usize {
        2 * self.channel_widths.last().copied().unwrap_or(0)
    }

    /// Parameter names and shapes in declaration order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c_in = 3;
        for (i, &c) in self.channel_widths.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![c, c_in, 3, 3]));
            out.push((format!("conv{i}.bias"), vec![c]));
            c_in = c;
        }
        if self.use_projector {
            let hidden = self.projector_hidden();
            out.push(("proj0.weight".into(), vec![hidden, c_in]));
            out.push(("proj0.bias".into(), vec![hidden]));
            out.push(("proj1.weight".into(), vec![self.embedding_dim, hidden]));
            out.push(("proj1.bias".into(), vec![self.embedding_dim]));
        }
        out
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ParamSet<T>> {
        self.validate()?;
        let mut rng = rng_for(seed, &[0x494e_4954]);
        let mut ps = ParamSet::new();
        for (name, shape) in self.layout() {
            let n: usize = shape.iter().product();
            let value = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let data = (0..n).map(|_| T::lit(normal.sample(&mut rng))).collect();
                Tensor::from_vec(&shape, data)?
            };
            ps.push(name, value)?;
        }
        Ok(ps)
    }

    /// Verifies that `params` has exactly this architecture's layout.
    pub fn check_params<T: Scalar>(&self, params: &ParamSet<T>) -> Result<()> {
        let layout = self.layout();
        if layout.len() != params.len() {
            return Err(Error::dim(
                "encoder",
                format!("expected {} parameters, got {}", layout.len(), params.len()),
            ));
        }
        for ((name, shape), p) in layout.iter().zip(params.iter()) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::dim(
                    "encoder",
                    format!("parameter `{}` {:?} != expected `{name}` {shape:?}", p.name, p.value.shape()),
                ));
            }
        }
        Ok(())
    }

    fn check_view<T: Scalar>(&self, view: &Tensor<T>) -> Result<()> {
        let s = self.input_size;
        if view.shape() != [3, s, s] {
            return Err(Error::dim(
                "encode_view",
                format!("view shape {:?} != [3, {s}, {s}]", view.shape()),
            ));
        }
        Ok(())
    }

    fn conv_count(&self) -> usize {
        self.channel_widths.len()
    }
}

/// Raw (un-normalized) embedding of one view.
pub fn encode_view<T: Scalar>(cfg: &EncoderConfig, params: &ParamSet<T>, view: &Tensor<T>) -> Result<Tensor<T>> {
    cfg.check_view(view)?;
    let mut x = view.clone();
    for i in 0..cfg.conv_count() {
        let (y, _) = ops::conv2d(&x, params.value(2 * i), params.value(2 * i + 1), 1, 1)?;
        x = ops::maxpool2(&ops::relu(&y))?.0;
    }
    let mut e = ops::global_avg_pool(&x)?;
    if cfg.use_projector {
        let k = 2 * cfg.conv_count();
        let h = ops::relu(&ops::linear(&e, params.value(k), params.value(k + 1))?);
        e = ops::linear(&h, params.value(k + 2), params.value(k + 3))?;
    }
    Ok(e)
}

/// Sum of per-view embeddings, l2-normalized when `normalize` is set.
pub fn embed_object<T: Scalar>(
    cfg: &EncoderConfig,
    params: &ParamSet<T>,
    views: &ViewSet<T>,
    normalize: bool,
) -> Result<Tensor<T>> {
    let (first, rest) = views
        .views
        .split_first()
        .ok_or_else(|| Error::Argument("empty view set".into()))?;
    let mut sum = encode_view(cfg, params, first)?;
    for v in rest {
        sum.add_assign(&encode_view(cfg, params, v)?)?;
    }
    if normalize {
        Ok(ops::l2_normalize(&sum)?.0)
    } else {
        Ok(sum)
    }
}

/// [`encode_view`] recorded on a tape; `bound` comes from [`Tape::bind`].
pub fn encode_view_tape<T: Scalar>(
    cfg: &EncoderConfig,
    tape: &mut Tape<T>,
    bound: &[Var],
    view: Tensor<T>,
) -> Result<Var> {
    cfg.check_view(&view)?;
    let mut x = tape.input(view);
    for i in 0..cfg.conv_count() {
        let y = tape.conv2d(x, bound[2 * i], bound[2 * i + 1], 1, 1)?;
        let r = tape.relu(y);
        x = tape.maxpool2(r)?;
    }
    let mut e = tape.global_avg_pool(x)?;
    if cfg.use_projector {
        let k = 2 * cfg.conv_count();
        let h = tape.linear(e, bound[k], bound[k + 1])?;
        let h = tape.relu(h);
        e = tape.linear(h, bound[k + 2], bound[k + 3])?;
    }
    Ok(e)
}

/// [`embed_object`] recorded on a tape.
pub fn embed_object_tape<T: Scalar>(
    cfg: &EncoderConfig,
    tape: &mut Tape<T>,
    bound: &[Var],
    views: &ViewSet<T>,
    normalize: bool,
) -> Result<Var> {
    if views.is_empty() {
        return Err(Error::Argument("empty view set".into()));
    }
    let per_view = views
        .views
        .iter()
        .map(|v| encode_view_tape(cfg, tape, bound, v.clone()))
        .collect::<Result<Vec<_>>>()?;
    let sum = if per_view.len() == 1 {
        per_view[0]
    } else {
        tape.sum(&per_view)?
    };
    if normalize {
        tape.l2_normalize(sum)
    } else {
        Ok(sum)
    }
}

/// Query encoder (trained by gradient descent) and key encoder (an
/// exponential moving average of the query).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderPair<T> {
    pub query: ParamSet<T>,
    pub key: ParamSet<T>,
    pub theta: T,
}

impl<T: Scalar> EncoderPair<T> {
    /// The key starts as an exact copy of the query.
    pub fn new(query: ParamSet<T>, theta: T) -> Self {
        let key = query.clone();
        Self { query, key, theta }
    }

    /// `key ← θ·key + (1 − θ)·query` for every parameter.
    pub fn momentum_update(&mut self) -> Result<()> {
        momentum_update(&mut self.key, &self.query, self.theta)
    }
}

pub fn momentum_update<T: Scalar>(key: &mut ParamSet<T>, query: &ParamSet<T>, theta: T) -> Result<()> {
    if !key.same_layout(query) {
        return Err(Error::dim("momentum_update", "key and query parameter shapes differ"));
    }
    let keep = theta;
    let take = T::one() - theta;
    for (k, q) in key.iter_mut().zip(query.iter()) {
        for (kv, &qv) in k.value.data_mut().iter_mut().zip(q.value.data()) {
            *kv = keep * *kv + take * qv;
        }
    }
    Ok(())
}
