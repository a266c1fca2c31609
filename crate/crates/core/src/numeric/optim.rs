use super::params::ParamSet;
use super::tensor::Scalar;
use crate::error::{Error, Result};

/// One SGD step with classical momentum and L2 weight decay:
/// `buf ← μ·buf + (g + λ·θ)`, `θ ← θ − η·buf`. Gradients are cleared
/// afterward.
pub fn sgd_step<T: Scalar>(params: &mut ParamSet<T>, lr: T, momentum: T, weight_decay: T) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
        return Err(Error::IncompleteBackward(p.name.clone()));
    }
    for p in params.iter_mut() {
        let grad = p.grad.take().expect("checked above");
        let buf = p.momentum.data_mut();
        let value = p.value.data_mut();
        for ((b, v), &g) in buf.iter_mut().zip(value.iter_mut()).zip(grad.data()) {
            *b = momentum * *b + (g + weight_decay * *v);
            *v -= lr * *b;
        }
    }
    Ok(())
}
