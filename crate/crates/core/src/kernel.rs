//! Univariate covariance kernels and their sum / product compositions.
//!
//! A [`Kernel`] acts on points of `[0,1]^d` and is built from one
//! [`UnivariateKernelSpec`] per input direction. With
//! [`Composition::Additive`] the covariance is the sum of the directional
//! kernels, so the induced process has additive paths. The tensor-product
//! composition is kept as the classical kriging baseline.
//!
//! Designs are `n × d` matrices with one point per row.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `σ² exp(-(x-y)² / (2θ²))`
    Gaussian,
    /// `σ² (1 + √3|x-y|/θ) exp(-√3|x-y|/θ)`
    Matern32,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "matern32" => Ok(KernelFamily::Matern32),
            other => Err(Error::invalid(format!("unknown kernel family '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Composition {
    Additive,
    #[serde(rename = "tensor")]
    TensorProduct,
}

impl std::str::FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "additive" => Ok(Composition::Additive),
            "tensor" => Ok(Composition::TensorProduct),
            other => Err(Error::invalid(format!("unknown composition '{other}'"))),
        }
    }
}

/// Selects one hyperparameter of a kernel plus observation noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamId {
    Variance(usize),
    Range(usize),
    Noise,
}

/// One direction's kernel: family, variance `σ²` and range `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnivariateKernelSpec {
    pub family: KernelFamily,
    pub variance: f64,
    pub range: f64,
}

impl UnivariateKernelSpec {
    pub fn new(family: KernelFamily, variance: f64, range: f64) -> Result<Self> {
        let spec = Self {
            family,
            variance,
            range,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(Error::invalid(format!(
                "kernel variance must be finite and >= 0, got {}",
                self.variance
            )));
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::invalid(format!(
                "kernel range must be finite and > 0, got {}",
                self.range
            )));
        }
        Ok(())
    }

    /// Unit-variance correlation at distance `r = |x - y|`.
    #[inline]
    pub fn correlation(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.family {
            KernelFamily::Gaussian => {
                let u = r / self.range;
                (-0.5 * u * u).exp()
            }
            KernelFamily::Matern32 => {
                let z = SQRT_3 * r / self.range;
                (1.0 + z) * (-z).exp()
            }
        }
    }

    /// Derivative of [`correlation`](Self::correlation) with respect to the range.
    #[inline]
    pub fn correlation_range_derivative(&self, r: f64) -> f64 {
        let r = r.abs();
        let theta = self.range;
        match self.family {
            KernelFamily::Gaussian => {
                let u = r / theta;
                (-0.5 * u * u).exp() * u * u / theta
            }
            KernelFamily::Matern32 => {
                let z = SQRT_3 * r / theta;
                z * z * (-z).exp() / theta
            }
        }
    }

    #[inline]
    pub(crate) fn value(&self, x: f64, y: f64) -> f64 {
        self.variance * self.correlation(x - y)
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite("kernel argument"));
        }
        Ok(self.value(x, y))
    }

    /// Odd antiderivative of the unit correlation: `∫₀ᵗ ρ(u) du`.
    fn correlation_antiderivative(&self, t: f64) -> f64 {
        let theta = self.range;
        match self.family {
            KernelFamily::Gaussian => theta * FRAC_PI_2.sqrt() * libm::erf(t / (SQRT_2 * theta)),
            KernelFamily::Matern32 => {
                let a = SQRT_3 / theta;
                let l = t.abs();
                let e = (-a * l).exp();
                let val = 2.0 / a * (1.0 - e) - l * e;
                val.copysign(t)
            }
        }
    }

    /// `∫₀¹ K(x, s) ds`, in closed form. `x` may lie outside `[0,1]`.
    pub fn integral(&self, x: f64) -> f64 {
        if self.variance == 0.0 {
            return 0.0;
        }
        self.variance * (self.correlation_antiderivative(1.0 - x) - self.correlation_antiderivative(-x))
    }

    /// `∫₀¹∫₀¹ K(s, t) ds dt`, in closed form.
    pub fn double_integral(&self) -> f64 {
        if self.variance == 0.0 {
            return 0.0;
        }
        let theta = self.range;
        // 2 ∫₀¹ (1-u) ρ(u) du
        let first_moment = match self.family {
            KernelFamily::Gaussian => -theta * theta * (-0.5 / (theta * theta)).exp_m1(),
            KernelFamily::Matern32 => {
                let a = SQRT_3 / theta;
                (3.0 - (-a).exp() * (a * a + 3.0 * a + 3.0)) / (a * a)
            }
        };
        self.variance * 2.0 * (self.correlation_antiderivative(1.0) - first_moment)
    }

    /// Same as [`integral`](Self::integral) but by adaptive Gauss–Kronrod quadrature.
    pub fn integral_by_quadrature(&self, x: f64) -> Result<f64> {
        if self.variance == 0.0 {
            return Ok(0.0);
        }
        // split at the kink / peak so each panel is smooth
        let split = x.clamp(0.0, 1.0);
        let f = |s: f64| self.value(x, s);
        let left = quadrature::integrate(f, 0.0, split, quadrature::DEFAULT_ABS_TOL / 2.0)?;
        let right = quadrature::integrate(f, split, 1.0, quadrature::DEFAULT_ABS_TOL / 2.0)?;
        Ok(left + right)
    }

    /// Same as [`double_integral`](Self::double_integral) but by quadrature of
    /// `2 ∫₀¹ (1-u) K(0, u) du`.
    pub fn double_integral_by_quadrature(&self) -> Result<f64> {
        if self.variance == 0.0 {
            return Ok(0.0);
        }
        let f = |u: f64| 2.0 * (1.0 - u) * self.value(0.0, u);
        quadrature::integrate(f, 0.0, 1.0, quadrature::DEFAULT_ABS_TOL)
    }
}

/// Covariance kernel over `[0,1]^d`, one univariate component per direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelJson", into = "KernelJson")]
pub struct Kernel {
    family: KernelFamily,
    composition: Composition,
    components: Vec<UnivariateKernelSpec>,
}

impl Kernel {
    pub fn new(family: KernelFamily, composition: Composition, variances: &[f64], ranges: &[f64]) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::invalid("kernel needs at least one direction"));
        }
        if variances.len() != ranges.len() {
            return Err(Error::DimensionMismatch {
                expected: variances.len(),
                found: ranges.len(),
            });
        }
        let components = variances
            .iter()
            .zip(ranges)
            .map(|(&v, &r)| UnivariateKernelSpec::new(family, v, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            family,
            composition,
            components,
        })
    }

    pub fn additive(family: KernelFamily, variances: &[f64], ranges: &[f64]) -> Result<Self> {
        Self::new(family, Composition::Additive, variances, ranges)
    }

    pub fn tensor(family: KernelFamily, variances: &[f64], ranges: &[f64]) -> Result<Self> {
        Self::new(family, Composition::TensorProduct, variances, ranges)
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn composition(&self) -> Composition {
        self.composition
    }

    pub fn components(&self) -> &[UnivariateKernelSpec] {
        &self.components
    }

    pub fn component(&self, direction: usize) -> Result<&UnivariateKernelSpec> {
        self.components.get(direction).ok_or_else(|| {
            Error::invalid(format!(
                "direction {direction} out of range for a {}-dimensional kernel",
                self.dims()
            ))
        })
    }

    pub fn variances(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.variance).collect()
    }

    pub fn ranges(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.range).collect()
    }

    /// `K(x, x)`, constant for these stationary kernels.
    pub fn prior_variance(&self) -> f64 {
        match self.composition {
            Composition::Additive => self.components.iter().map(|c| c.variance).sum(),
            Composition::TensorProduct => self.components.iter().map(|c| c.variance).product(),
        }
    }

    #[inline]
    pub(crate) fn value<'a>(&self, x: impl IntoIterator<Item = &'a f64>, y: impl IntoIterator<Item = &'a f64>) -> f64 {
        let pairs = self.components.iter().zip(x.into_iter().zip(y));
        match self.composition {
            Composition::Additive => pairs.map(|(c, (a, b))| c.value(*a, *b)).sum(),
            Composition::TensorProduct => pairs.map(|(c, (a, b))| c.value(*a, *b)).product(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.value(x, y))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel argument"));
        }
        Ok(())
    }

    fn check_design(&self, design: &DMatrix<f64>) -> Result<()> {
        if design.ncols() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: design.ncols(),
            });
        }
        if design.nrows() == 0 {
            return Err(Error::invalid("design has no points"));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design"));
        }
        Ok(())
    }

    /// `M[i][j] = K(x_i, x_j) + noise·1{i=j}`.
    pub fn cov_matrix(&self, design: &DMatrix<f64>, noise: f64) -> Result<DMatrix<f64>> {
        self.check_design(design)?;
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::invalid(format!("noise variance must be >= 0, got {noise}")));
        }
        let n = design.nrows();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.value(design.row(i).iter(), design.row(j).iter());
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            m[(i, i)] += noise;
        }
        Ok(m)
    }

    /// Cross-covariance vector `k(x) = (K(x, x_1), …, K(x, x_n))`.
    pub fn cross_cov(&self, design: &DMatrix<f64>, x: &[f64]) -> Result<DVector<f64>> {
        self.check_design(design)?;
        self.check_point(x)?;
        Ok(DVector::from_iterator(
            design.nrows(),
            design.row_iter().map(|row| self.value(row.iter(), x)),
        ))
    }

    /// Direction-`i` cross-covariance `k_i(t) = (K_i(t, x_1^{(i)}), …)`.
    pub fn direction_cross_cov(&self, design: &DMatrix<f64>, direction: usize, t: f64) -> Result<DVector<f64>> {
        self.check_design(design)?;
        let c = self.component(direction)?;
        if !t.is_finite() {
            return Err(Error::NonFinite("kernel argument"));
        }
        Ok(DVector::from_iterator(
            design.nrows(),
            design.column(direction).iter().map(|&xi| c.value(t, xi)),
        ))
    }

    /// Element-wise partial derivative of [`cov_matrix`](Self::cov_matrix).
    pub fn grad_cov_matrix(&self, design: &DMatrix<f64>, noise: f64, param: ParamId) -> Result<DMatrix<f64>> {
        self.check_design(design)?;
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::invalid(format!("noise variance must be >= 0, got {noise}")));
        }
        let n = design.nrows();
        let direction = match param {
            ParamId::Noise => return Ok(DMatrix::identity(n, n)),
            ParamId::Variance(i) | ParamId::Range(i) => i,
        };
        let comp = *self.component(direction)?;
        let col = design.column(direction);
        let partial = |a: f64, b: f64| -> f64 {
            match param {
                ParamId::Variance(_) => comp.correlation(a - b),
                ParamId::Range(_) => comp.variance * comp.correlation_range_derivative(a - b),
                ParamId::Noise => unreachable!(),
            }
        };
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut v = partial(col[i], col[j]);
                if self.composition == Composition::TensorProduct {
                    for (k, other) in self.components.iter().enumerate() {
                        if k != direction {
                            v *= other.value(design[(i, k)], design[(j, k)]);
                        }
                    }
                }
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// Copy with new per-direction parameters, keeping family and composition.
    pub fn with_params(&self, variances: &[f64], ranges: &[f64]) -> Result<Self> {
        Self::new(self.family, self.composition, variances, ranges)
    }
}

#[derive(Serialize, Deserialize)]
struct KernelJson {
    family: KernelFamily,
    dims: usize,
    composition: Composition,
    variance: Vec<f64>,
    range: Vec<f64>,
}

impl TryFrom<KernelJson> for Kernel {
    type Error = Error;

    fn try_from(j: KernelJson) -> Result<Self> {
        if j.variance.len() != j.dims || j.range.len() != j.dims {
            return Err(Error::invalid(format!(
                "kernel spec declares dims={} but has {} variances and {} ranges",
                j.dims,
                j.variance.len(),
                j.range.len()
            )));
        }
        Kernel::new(j.family, j.composition, &j.variance, &j.range)
    }
}

impl From<Kernel> for KernelJson {
    fn from(k: Kernel) -> Self {
        KernelJson {
            family: k.family,
            dims: k.dims(),
            composition: k.composition,
            variance: k.variances(),
            range: k.ranges(),
        }
    }
}
