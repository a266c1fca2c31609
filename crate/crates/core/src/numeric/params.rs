use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// One learnable tensor with its gradient slot and SGD momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    pub momentum: Tensor<T>,
}

/// Ordered, named collection of parameters. Declaration order is the
/// serialization order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::Argument(format!("duplicate parameter name `{name}`")));
        }
        let momentum = Tensor::zeros(value.shape());
        self.params.push(Param {
            name,
            value,
            grad: None,
            momentum,
        });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Param<T>> {
        self.params.iter_mut()
    }

    pub fn param(&self, index: usize) -> &Param<T> {
        &self.params[index]
    }

    pub fn value(&self, index: usize) -> &Tensor<T> {
        &self.params[index].value
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Tensor<T> {
        &mut self.params[index].value
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Adds `grad` into the gradient slot of parameter `index`.
    pub fn accumulate_grad(&mut self, index: usize, grad: &Tensor<T>) -> Result<()> {
        let p = &mut self.params[index];
        p.value.check_same_shape("accumulate_grad", grad)?;
        match &mut p.grad {
            Some(g) => g.add_assign(grad)?,
            None => p.grad = Some(grad.clone()),
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn grads(&self) -> Result<Vec<Tensor<T>>> {
        self.params
            .iter()
            .map(|p| {
                p.grad
                    .clone()
                    .ok_or_else(|| Error::IncompleteBackward(p.name.clone()))
            })
            .collect()
    }

    pub fn same_layout<U: Scalar>(&self, other: &ParamSet<U>) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Copy of the values in another precision. Gradients and momentum
    /// buffers are reset.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: None,
                    momentum: Tensor::zeros(p.value.shape()),
                })
                .collect(),
        }
    }

    /// Reads the `flat`-th scalar across all parameters in declaration order.
    pub fn scalar(&self, flat: usize) -> T {
        let (i, j) = self.locate(flat);
        self.params[i].value.data()[j]
    }

    pub fn set_scalar(&mut self, flat: usize, value: T) {
        let (i, j) = self.locate(flat);
        self.params[i].value.data_mut()[j] = value;
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, p) in self.params.iter().enumerate() {
            if flat < p.value.len() {
                return (i, flat);
            }
            flat -= p.value.len();
        }
        panic!("scalar index out of range");
    }
}
