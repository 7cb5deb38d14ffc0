//! Maximum-likelihood estimation of kernel hyperparameters.
//!
//! Two drivers share one box-constrained quasi-Newton optimizer:
//!
//! * [`estimate_ulm`] optimizes all `2d + 1` parameters jointly.
//! * [`estimate_rlm`] starts with every directional variance at zero and
//!   cycles over the directions, each time re-optimizing that direction's
//!   `(σ², θ)` together with the noise variance `τ²` while the other
//!   directions stay fixed. `τ²` absorbs whatever the not-yet-fitted
//!   directions (and any non-additive part of the response) cannot explain.
//!
//! Drivers use the responses as given; fit on a centered dataset
//! (see [`Dataset::centered`](crate::Dataset::centered)).

mod drivers;
mod likelihood;
mod optimizer;
mod trace;

pub use drivers::{estimate_rlm, estimate_ulm, Estimate, RlmConfig, UlmConfig};
pub use likelihood::{neg_log_likelihood, nll_gradient, Likelihood, FAILED_OBJECTIVE};
pub use optimizer::{minimize_box, OptimOptions, OptimResult, Termination};
pub use trace::{EstimationTrace, StepRecord};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{Composition, Kernel, KernelFamily, ParamId};

/// Per-direction `(σ_i², θ_i)` plus the noise variance `τ²`.
///
/// As a flat vector the order is `[σ_1² … σ_d², θ_1 … θ_d, τ²]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub variances: Vec<f64>,
    pub ranges: Vec<f64>,
    pub noise: f64,
}

impl HyperParams {
    pub fn new(variances: Vec<f64>, ranges: Vec<f64>, noise: f64) -> Result<Self> {
        if variances.len() != ranges.len() {
            return Err(Error::DimensionMismatch {
                expected: variances.len(),
                found: ranges.len(),
            });
        }
        Ok(Self {
            variances,
            ranges,
            noise,
        })
    }

    pub fn dims(&self) -> usize {
        self.variances.len()
    }

    pub fn len(&self) -> usize {
        2 * self.dims() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.variances);
        v.extend_from_slice(&self.ranges);
        v.push(self.noise);
        v
    }

    pub fn from_slice(dims: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 2 * dims + 1 {
            return Err(Error::DimensionMismatch {
                expected: 2 * dims + 1,
                found: v.len(),
            });
        }
        Ok(Self {
            variances: v[..dims].to_vec(),
            ranges: v[dims..2 * dims].to_vec(),
            noise: v[2 * dims],
        })
    }

    pub fn kernel(&self, family: KernelFamily, composition: Composition) -> Result<Kernel> {
        Kernel::new(family, composition, &self.variances, &self.ranges)
    }

    pub fn from_kernel(kernel: &Kernel, noise: f64) -> Self {
        Self {
            variances: kernel.variances(),
            ranges: kernel.ranges(),
            noise,
        }
    }
}

/// Position of a parameter in the flat vector of a `dims`-direction model.
pub fn param_index(param: ParamId, dims: usize) -> usize {
    match param {
        ParamId::Variance(i) => i,
        ParamId::Range(i) => dims + i,
        ParamId::Noise => 2 * dims,
    }
}

/// Inverse of [`param_index`].
pub fn param_at(index: usize, dims: usize) -> ParamId {
    if index < dims {
        ParamId::Variance(index)
    } else if index < 2 * dims {
        ParamId::Range(index - dims)
    } else {
        ParamId::Noise
    }
}

/// Box constraints on the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// `τ²` floor relative to the response variance.
pub const NOISE_FLOOR_REL: f64 = 1e-8;
pub const RANGE_BOUNDS: (f64, f64) = (1e-3, 3.0);
pub const VARIANCE_UPPER_REL: f64 = 10.0;

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() % 2 != 1 {
            return Err(Error::invalid("bounds need 2d+1 matching lower/upper entries"));
        }
        let b = Self { lower, upper };
        let d = b.dims();
        for (i, (&lo, &hi)) in b.lower.iter().zip(&b.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!("invalid bound [{lo}, {hi}] at index {i}")));
            }
            let ok = match param_at(i, d) {
                ParamId::Variance(_) | ParamId::Noise => lo >= 0.0,
                ParamId::Range(_) => lo > 0.0,
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "bound [{lo}, {hi}] not admissible at index {i}"
                )));
            }
        }
        Ok(b)
    }

    /// `σ² ∈ [0, 10 var(Y)]`, `θ ∈ [1e-3, 3]`, `τ² ∈ [1e-8 var(Y), var(Y)]`.
    ///
    /// With the tensor-product composition only the overall variance is
    /// identifiable, so `σ_2² … σ_d²` are pinned to one.
    pub fn default_for(dataset: &Dataset, composition: Composition) -> Result<Self> {
        let var = dataset.response_variance();
        if !(var > 0.0) {
            return Err(Error::invalid("responses are constant; cannot scale default bounds"));
        }
        let d = dataset.dims();
        let mut lower = vec![0.0; d];
        let mut upper = vec![VARIANCE_UPPER_REL * var; d];
        if composition == Composition::TensorProduct {
            for i in 1..d {
                lower[i] = 1.0;
                upper[i] = 1.0;
            }
        }
        lower.extend(std::iter::repeat_n(RANGE_BOUNDS.0, d));
        upper.extend(std::iter::repeat_n(RANGE_BOUNDS.1, d));
        lower.push(NOISE_FLOOR_REL * var);
        upper.push(var);
        Self::new(lower, upper)
    }

    pub fn dims(&self) -> usize {
        self.lower.len() / 2
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lower.len()
            && x.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((v, l), u)| v >= l && v <= u)
    }
}

/// Share of the total variance carried by the additive part:
/// `Σσ_i² / (Σσ_i² + τ²)`.
pub fn additivity_ratio(params: &HyperParams) -> Result<f64> {
    let s: f64 = params.variances.iter().sum();
    let total = s + params.noise;
    if !(total > 0.0) {
        return Err(Error::invalid("additivity ratio undefined when all variances are zero"));
    }
    Ok(s / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additivity_ratio_cases() {
        let p = |v: Vec<f64>, t: f64| HyperParams::new(v, vec![0.2, 0.2], t).unwrap();
        assert_eq!(additivity_ratio(&p(vec![1.0, 2.0], 0.0)).unwrap(), 1.0);
        assert_eq!(additivity_ratio(&p(vec![0.0, 0.0], 0.3)).unwrap(), 0.0);
        assert_eq!(additivity_ratio(&p(vec![1.0, 1.0], 2.0)).unwrap(), 0.5);
        assert!(additivity_ratio(&p(vec![0.0, 0.0], 0.0)).is_err());
    }

    #[test]
    fn flat_layout_round_trip() {
        let p = HyperParams::new(vec![1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3], 0.5).unwrap();
        let v = p.to_vec();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 0.1, 0.2, 0.3, 0.5]);
        assert_eq!(HyperParams::from_slice(3, &v).unwrap(), p);
        for i in 0..7 {
            assert_eq!(param_index(param_at(i, 3), 3), i);
        }
    }

    #[test]
    fn bounds_validation() {
        assert!(Bounds::new(vec![0.0, 0.1, 0.0], vec![1.0, 1.0, 1.0]).is_ok());
        assert!(Bounds::new(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(Bounds::new(vec![2.0, 0.1, 0.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(Bounds::new(vec![0.0, 0.1], vec![1.0, 1.0]).is_err());
    }
}
