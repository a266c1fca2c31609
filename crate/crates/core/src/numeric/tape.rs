//! Reverse-mode gradient tape. Nodes are appended in evaluation order, so the
//! node list is already a topological order and backward is a reverse replay.

use super::ops::{self, Conv2dCache};
use super::params::ParamSet;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Param(usize),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        cache: Conv2dCache<T>,
    },
    Relu(Var),
    MaxPool2 { input: Var, argmax: Vec<u32> },
    GlobalAvgPool(Var),
    Linear { x: Var, weight: Var, bias: Var },
    L2Normalize { x: Var, norm: T },
    Sum(Vec<Var>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of leaf nodes after [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    /// Records a constant (no gradient is propagated into it).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Records every parameter of `params` as a gradient-carrying leaf.
    pub fn bind(&mut self, params: &ParamSet<T>) -> Vec<Var> {
        params
            .iter()
            .enumerate()
            .map(|(i, p)| self.push(p.value.clone(), Op::Param(i), true))
            .collect()
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let (out, cache) = ops::conv2d(self.value(input), self.value(weight), self.value(bias), stride, pad)?;
        let rg = self.requires(&[input, weight, bias]);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                cache,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        let rg = self.requires(&[x]);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = ops::maxpool2(self.value(x))?;
        let rg = self.requires(&[x]);
        Ok(self.push(out, Op::MaxPool2 { input: x, argmax }, rg))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let out = ops::global_avg_pool(self.value(x))?;
        let rg = self.requires(&[x]);
        Ok(self.push(out, Op::GlobalAvgPool(x), rg))
    }

    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = ops::linear(self.value(x), self.value(weight), self.value(bias))?;
        let rg = self.requires(&[x, weight, bias]);
        Ok(self.push(out, Op::Linear { x, weight, bias }, rg))
    }

    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let (out, norm) = ops::l2_normalize(self.value(x))?;
        let rg = self.requires(&[x]);
        Ok(self.push(out, Op::L2Normalize { x, norm }, rg))
    }

    /// Elementwise sum of equally shaped values.
    pub fn sum(&mut self, vars: &[Var]) -> Result<Var> {
        let (first, rest) = vars
            .split_first()
            .ok_or_else(|| Error::Argument("sum of zero tensors".into()))?;
        let mut out = self.value(*first).clone();
        for v in rest {
            out.add_assign(self.value(*v))?;
        }
        let rg = self.requires(vars);
        Ok(self.push(out, Op::Sum(vars.to_vec()), rg))
    }

    /// Replays the tape in reverse from the given output gradients.
    pub fn backward(&self, seeds: &[(Var, Tensor<T>)]) -> Result<Gradients<T>> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (var, g) in seeds {
            self.value(*var).check_same_shape("backward seed", g)?;
            accumulate(&mut grads, *var, g.clone())?;
        }
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            if matches!(node.op, Op::Input | Op::Param(_)) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let wants = |v: &Var| self.nodes[v.0].requires_grad;
            match &node.op {
                Op::Input | Op::Param(_) => unreachable!(),
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    cache,
                } => {
                    let (gx, gw, gb) = ops::conv2d_backward(&g, self.value(*weight), cache, wants(input))?;
                    if let Some(gx) = gx {
                        accumulate(&mut grads, *input, gx)?;
                    }
                    if wants(weight) {
                        accumulate(&mut grads, *weight, gw)?;
                    }
                    if wants(bias) {
                        accumulate(&mut grads, *bias, gb)?;
                    }
                }
                Op::Relu(x) => {
                    let gx = ops::relu_backward(&g, self.value(*x));
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::MaxPool2 { input, argmax } => {
                    let gx = ops::maxpool2_backward(&g, argmax, self.value(*input).shape())?;
                    accumulate(&mut grads, *input, gx)?;
                }
                Op::GlobalAvgPool(x) => {
                    let gx = ops::global_avg_pool_backward(&g, self.value(*x).shape())?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Linear { x, weight, bias } => {
                    let (gx, gw, gb) = ops::linear_backward(&g, self.value(*x), self.value(*weight))?;
                    if wants(x) {
                        accumulate(&mut grads, *x, gx)?;
                    }
                    if wants(weight) {
                        accumulate(&mut grads, *weight, gw)?;
                    }
                    if wants(bias) {
                        accumulate(&mut grads, *bias, gb)?;
                    }
                }
                Op::L2Normalize { x, norm } => {
                    let gx = ops::l2_normalize_backward(&g, &node.value, *norm);
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::Sum(vars) => {
                    for v in vars {
                        if wants(v) {
                            accumulate(&mut grads, *v, g.clone())?;
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Adds the gradient of every bound parameter into `params`. A bound
    /// parameter that received no gradient gets an explicit zero.
    pub fn write_param_grads(&self, grads: &Gradients<T>, params: &mut ParamSet<T>) -> Result<()> {
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pi) = node.op {
                match grads.grads[idx].as_ref() {
                    Some(g) => params.accumulate_grad(pi, g)?,
                    None => params.accumulate_grad(pi, &Tensor::zeros(node.value.shape()))?,
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], var: Var, g: Tensor<T>) -> Result<()> {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
