//! Central-difference gradient verification.

use rand::Rng;

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks the analytical gradient returned by `loss_fn` against central
/// differences on `probe_count` randomly chosen scalars. Returns the worst
/// relative error.
pub fn grad_check<F>(params: &ParamSet<f64>, mut loss_fn: F, probe_count: usize, eps: f64, seed: u64) -> Result<f64>
where
    F: FnMut(&ParamSet<f64>) -> Result<(f64, Vec<Tensor<f64>>)>,
{
    let (loss, analytic) = loss_fn(params)?;
    let (again, _) = loss_fn(params)?;
    if loss.to_bits() != again.to_bits() {
        return Err(Error::Determinism(format!(
            "two forward passes gave {loss:e} and {again:e}"
        )));
    }
    check_against(params, &analytic, |p| loss_fn(p).map(|(l, _)| l), probe_count, eps, seed)
}

/// Like [`grad_check`] but with a precomputed analytical gradient, e.g. one
/// obtained from a single-precision run of the same model.
pub fn check_against<F>(
    params: &ParamSet<f64>,
    analytic: &[Tensor<f64>],
    mut loss_only: F,
    probe_count: usize,
    eps: f64,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&ParamSet<f64>) -> Result<f64>,
{
    if analytic.len() != params.len()
        || analytic
            .iter()
            .zip(params.iter())
            .any(|(g, p)| g.shape() != p.value.shape())
    {
        return Err(Error::dim("grad_check", "analytical gradient layout differs from parameters"));
    }
    let total = params.num_scalars();
    if total == 0 {
        return Err(Error::Argument("no parameters to probe".into()));
    }
    let flat_grad: Vec<f64> = analytic.iter().flat_map(|g| g.data().iter().copied()).collect();
    let mut rng = rng_for(seed, &[0x6772_6164]);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..probe_count {
        let idx = rng.random_range(0..total);
        let original = probe.scalar(idx);
        probe.set_scalar(idx, original + eps);
        let plus = loss_only(&probe)?;
        probe.set_scalar(idx, original - eps);
        let minus = loss_only(&probe)?;
        probe.set_scalar(idx, original);
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(flat_grad[idx], numeric));
    }
    Ok(worst)
}
