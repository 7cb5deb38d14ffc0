//! Simple-kriging models: prediction, additive sub-models and centered
//! univariate effects, and detection of designs whose additive covariance
//! matrix is singular.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{Composition, Kernel};
use crate::linalg::{cholesky_solve, rank_revealing_cholesky, CholeskyFactor};

/// Negative variances down to `-NEGATIVE_VARIANCE_WINDOW · max(1, K(x,x))`
/// are treated as round-off and clamped to zero.
pub const NEGATIVE_VARIANCE_WINDOW: f64 = 1e-10;

/// Linear dependencies among design points under a given kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    /// Number of design points.
    pub size: usize,
    pub rank: usize,
    /// Independent points, in visiting order.
    pub pivot_indices: Vec<usize>,
    pub dependent_point_indices: Vec<usize>,
    /// `coefficients[k][j]` weights pivot `pivot_indices[j]` in the
    /// combination reproducing `dependent_point_indices[k]`.
    pub coefficients: Vec<Vec<f64>>,
}

impl DegeneracyReport {
    pub fn is_full_rank(&self) -> bool {
        self.dependent_point_indices.is_empty()
    }
}

/// Default tolerance of [`detect_degenerate_design`]: `1e-8 · trace(K) / n`.
pub fn default_degeneracy_tol(cov: &DMatrix<f64>) -> f64 {
    1e-8 * cov.trace() / cov.nrows() as f64
}

/// Finds design points whose process value is (numerically) a linear
/// combination of earlier points. Points are visited in row order, so the
/// later point of a dependent group is the one reported.
pub fn detect_degenerate_design(
    kernel: &Kernel,
    design: &DMatrix<f64>,
    noise: f64,
    tol: Option<f64>,
) -> Result<DegeneracyReport> {
    let cov = kernel.cov_matrix(design, noise)?;
    Ok(degeneracy_of(&cov, tol.unwrap_or_else(|| default_degeneracy_tol(&cov))))
}

fn degeneracy_of(cov: &DMatrix<f64>, tol: f64) -> DegeneracyReport {
    let rr = rank_revealing_cholesky(cov, tol);
    let coefficients = rr
        .dependent
        .iter()
        .map(|&j| {
            let rhs = DVector::from_iterator(rr.pivots.len(), rr.pivots.iter().map(|&p| cov[(p, j)]));
            if rr.pivots.is_empty() {
                Vec::new()
            } else {
                cholesky_solve(&rr.pivot_factor, &rhs).iter().copied().collect()
            }
        })
        .collect();
    DegeneracyReport {
        size: cov.nrows(),
        rank: rr.pivots.len(),
        pivot_indices: rr.pivots,
        dependent_point_indices: rr.dependent,
        coefficients,
    }
}

/// Integrals of direction `i` used by the centered effects.
#[derive(Clone, Debug)]
struct EffectIntegrals {
    /// `I[j] = ∫₀¹ K_i(x_j^{(i)}, s) ds`
    cross: DVector<f64>,
    /// `K⁻¹ I`
    solved: DVector<f64>,
    /// `∬ K_i - Iᵀ K⁻¹ I`
    constant: f64,
    /// `∫₀¹ m_i(s) ds = Iᵀ α`
    mean_integral: f64,
}

/// A kriging model with fixed hyperparameters.
#[derive(Clone, Debug)]
pub struct FittedGp {
    kernel: Kernel,
    noise: f64,
    dataset: Dataset,
    offset: f64,
    factor: CholeskyFactor,
    weights: DVector<f64>,
    effects: Vec<EffectIntegrals>,
}

impl FittedGp {
    /// Fits simple kriging to the responses as given (assumed centered).
    ///
    /// Fails with [`Error::CholeskyFailure`] when `K + τ²I` is singular to
    /// tolerance; no jitter is ever added.
    pub fn fit(kernel: &Kernel, dataset: &Dataset, noise: f64) -> Result<Self> {
        Self::fit_with_offset(kernel, dataset.clone(), noise, 0.0)
    }

    /// Subtracts the empirical response mean before fitting and adds it
    /// back to every predicted mean.
    pub fn fit_centered(kernel: &Kernel, dataset: &Dataset, noise: f64) -> Result<Self> {
        let (centered, offset) = dataset.centered();
        Self::fit_with_offset(kernel, centered, noise, offset)
    }

    pub(crate) fn fit_with_offset(kernel: &Kernel, dataset: Dataset, noise: f64, offset: f64) -> Result<Self> {
        if kernel.dims() != dataset.dims() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dims(),
                found: dataset.dims(),
            });
        }
        let cov = kernel.cov_matrix(dataset.design(), noise)?;
        let factor = CholeskyFactor::new(&cov).ok_or_else(|| {
            let mut report = degeneracy_of(&cov, default_degeneracy_tol(&cov));
            if report.is_full_rank() {
                // singular at the factorization threshold but not at the
                // detection tolerance; report the numerical rank anyway
                report = degeneracy_of(&cov, crate::linalg::PIVOT_REL_TOL * cov.diagonal().max());
            }
            Error::CholeskyFailure { report }
        })?;
        let weights = factor.solve(dataset.response());
        let effects = if kernel.composition() == Composition::Additive {
            kernel
                .components()
                .iter()
                .enumerate()
                .map(|(i, comp)| {
                    let cross = dataset.design().column(i).map(|xj| comp.integral(xj));
                    let solved = factor.solve(&cross);
                    EffectIntegrals {
                        constant: comp.double_integral() - cross.dot(&solved),
                        mean_integral: cross.dot(&weights),
                        cross,
                        solved,
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            kernel: kernel.clone(),
            noise,
            dataset,
            offset,
            factor,
            weights,
            effects,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Dataset the model was fitted on (centered if built by `fit_centered`).
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Constant added back to predicted means.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `α = K⁻¹ Y`
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn log_det(&self) -> f64 {
        self.factor.log_det()
    }

    pub fn dims(&self) -> usize {
        self.kernel.dims()
    }

    /// Kriging mean `k(x)ᵀ α` (plus the centering offset).
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        let k = self.kernel.cross_cov(self.dataset.design(), x)?;
        Ok(self.offset + k.dot(&self.weights))
    }

    /// Prediction variance of the latent process, `K(x,x) - k(x)ᵀ K⁻¹ k(x)`.
    pub fn predict_var(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict(x)?.1)
    }

    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let k = self.kernel.cross_cov(self.dataset.design(), x)?;
        let mean = self.offset + k.dot(&self.weights);
        let prior = self.kernel.eval(x, x)?;
        let v = self.factor.solve_lower(&k);
        let var = clamp_variance(prior - v.norm_squared(), prior)?;
        Ok((mean, var))
    }

    fn require_additive(&self, direction: usize) -> Result<()> {
        if self.kernel.composition() != Composition::Additive {
            return Err(Error::Unsupported("univariate effects need an additive kernel"));
        }
        self.kernel.component(direction).map(|_| ())
    }

    /// Sub-model `(m_i(t), v_i(t))` of direction `i`.
    pub fn sub_model(&self, direction: usize, t: f64) -> Result<(f64, f64)> {
        self.require_additive(direction)?;
        let comp = self.kernel.component(direction)?;
        let k = self.kernel.direction_cross_cov(self.dataset.design(), direction, t)?;
        let mean = k.dot(&self.weights);
        let prior = comp.value(t, t);
        let var = clamp_variance(prior - self.factor.solve_lower(&k).norm_squared(), prior)?;
        Ok((mean, var))
    }

    /// Centered effect `(m_i*(t), v_i*(t))`: conditional mean and variance of
    /// `Z_i(t) - ∫₀¹ Z_i(s) ds`.
    pub fn centered_effect(&self, direction: usize, t: f64) -> Result<(f64, f64)> {
        self.require_additive(direction)?;
        let comp = self.kernel.component(direction)?;
        let ints = &self.effects[direction];
        let k = self.kernel.direction_cross_cov(self.dataset.design(), direction, t)?;
        let mean = k.dot(&self.weights) - ints.mean_integral;
        let prior = comp.value(t, t);
        let sub_var = prior - self.factor.solve_lower(&k).norm_squared();
        let var = sub_var - 2.0 * comp.integral(t) + 2.0 * k.dot(&ints.solved) + ints.constant;
        let scale = prior + comp.double_integral();
        Ok((mean, clamp_variance(var, scale)?))
    }

    /// `∫₀¹ K_i(x_j^{(i)}, s) ds` for every design point.
    pub fn direction_integrals(&self, direction: usize) -> Result<&DVector<f64>> {
        self.require_additive(direction)?;
        Ok(&self.effects[direction].cross)
    }

    /// Predicts at every row of `points`.
    pub fn predict_many(&self, points: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
        if points.ncols() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: points.ncols(),
            });
        }
        points
            .row_iter()
            .map(|r| self.predict(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }
}

fn clamp_variance(var: f64, scale: f64) -> Result<f64> {
    if var >= 0.0 {
        return Ok(var);
    }
    if var > -NEGATIVE_VARIANCE_WINDOW * scale.max(1.0) {
        return Ok(0.0);
    }
    Err(Error::Internal(format!(
        "negative prediction variance {var:e}; factorization is inconsistent"
    )))
}
