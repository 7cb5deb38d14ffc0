use nalgebra::DMatrix;

use super::{param_at, HyperParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{Composition, KernelFamily, ParamId};
use crate::linalg::CholeskyFactor;

/// Objective value reported to the optimizer when `K` cannot be factorized.
/// Finite so that line searches can back off.
pub const FAILED_OBJECTIVE: f64 = 1e12;

/// `l(ψ, τ) = log det K + Yᵀ K⁻¹ Y` for a fixed dataset and kernel family.
#[derive(Clone, Copy, Debug)]
pub struct Likelihood<'a> {
    dataset: &'a Dataset,
    family: KernelFamily,
    composition: Composition,
}

struct Factorized {
    factor: CholeskyFactor,
    alpha: nalgebra::DVector<f64>,
    value: f64,
}

impl<'a> Likelihood<'a> {
    pub fn new(dataset: &'a Dataset, family: KernelFamily, composition: Composition) -> Self {
        Self {
            dataset,
            family,
            composition,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn dims(&self) -> usize {
        self.dataset.dims()
    }

    fn factorize(&self, params: &HyperParams) -> Result<(crate::Kernel, Factorized)> {
        if params.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: params.dims(),
            });
        }
        let kernel = params.kernel(self.family, self.composition)?;
        let cov = kernel.cov_matrix(self.dataset.design(), params.noise)?;
        let factor = CholeskyFactor::new(&cov).ok_or(Error::NotPositiveDefinite)?;
        let y = self.dataset.response();
        let alpha = factor.solve(y);
        let value = factor.log_det() + y.dot(&alpha);
        Ok((kernel, Factorized { factor, alpha, value }))
    }

    pub fn value(&self, params: &HyperParams) -> Result<f64> {
        Ok(self.factorize(params)?.1.value)
    }

    /// Value and partial derivatives with respect to `wrt`, using
    /// `∂l/∂p = tr(K⁻¹ ∂K) - αᵀ ∂K α` with `α = K⁻¹ Y`.
    pub fn value_and_gradient(&self, params: &HyperParams, wrt: &[ParamId]) -> Result<(f64, Vec<f64>)> {
        let (kernel, f) = self.factorize(params)?;
        // W = K⁻¹ - α αᵀ, so that ∂l/∂p = Σ_ij W_ij ∂K_ij
        let mut w: DMatrix<f64> = f.factor.inverse();
        w.ger(-1.0, &f.alpha, &f.alpha, 1.0);
        let design = self.dataset.design();
        let grad = wrt
            .iter()
            .map(|&p| match p {
                ParamId::Noise => Ok(w.trace()),
                _ => Ok(w.dot(&kernel.grad_cov_matrix(design, params.noise, p)?)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((f.value, grad))
    }

    /// Value and full gradient in flat order, or `None` if `K` is singular.
    pub(crate) fn eval_flat(&self, x: &[f64], wrt: &[usize]) -> Option<(f64, Vec<f64>)> {
        let params = HyperParams::from_slice(self.dims(), x).ok()?;
        let ids: Vec<ParamId> = wrt.iter().map(|&i| param_at(i, self.dims())).collect();
        match self.value_and_gradient(&params, &ids) {
            Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => Some((v, g)),
            _ => None,
        }
    }
}

/// Negative log-likelihood of Gaussian responses (constants dropped):
/// `log det K + Yᵀ K⁻¹ Y`.
pub fn neg_log_likelihood(
    params: &HyperParams,
    dataset: &Dataset,
    family: KernelFamily,
    composition: Composition,
) -> Result<f64> {
    Likelihood::new(dataset, family, composition).value(params)
}

/// Gradient of [`neg_log_likelihood`] in flat order
/// `[σ_1² … σ_d², θ_1 … θ_d, τ²]`.
pub fn nll_gradient(
    params: &HyperParams,
    dataset: &Dataset,
    family: KernelFamily,
    composition: Composition,
) -> Result<Vec<f64>> {
    let d = dataset.dims();
    let ids: Vec<ParamId> = (0..2 * d + 1).map(|i| param_at(i, d)).collect();
    Ok(Likelihood::new(dataset, family, composition)
        .value_and_gradient(params, &ids)?
        .1)
}
