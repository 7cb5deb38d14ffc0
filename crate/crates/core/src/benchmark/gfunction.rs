use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sobol's g-function `g(x) = ∏ (|4x_k - 2| + a_k) / (1 + a_k)` on `[0,1]^d`.
///
/// Every factor has unit mean, so `E[g] = 1`. The larger the `a_k`, the
/// closer `g` is to additive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GFunction {
    a: Vec<f64>,
}

impl GFunction {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::invalid("g-function needs at least one coefficient"));
        }
        if let Some(bad) = a.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!(
                "g-function coefficients must be positive, got {bad}"
            )));
        }
        Ok(Self { a })
    }

    /// `a_k = k` for `k = 1..=d`.
    pub fn linear(d: usize) -> Result<Self> {
        Self::new((1..=d).map(|k| k as f64).collect())
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.a
    }

    pub fn dims(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("g-function is defined on the unit hypercube"));
        }
        Ok(x.iter()
            .zip(&self.a)
            .map(|(&xk, &ak)| ((4.0 * xk - 2.0).abs() + ak) / (1.0 + ak))
            .product())
    }

    fn partial_variance(a: f64) -> f64 {
        1.0 / (3.0 * (1.0 + a) * (1.0 + a))
    }

    /// First-order Sobol index of direction `i` (0-based).
    pub fn sobol_index(&self, i: usize) -> Result<f64> {
        let ai = *self.a.get(i).ok_or(Error::DimensionMismatch {
            expected: self.dims(),
            found: i + 1,
        })?;
        let total: f64 = self.a.iter().map(|&a| 1.0 + Self::partial_variance(a)).product::<f64>() - 1.0;
        Ok(Self::partial_variance(ai) / total)
    }

    pub fn sobol_indices(&self) -> Vec<f64> {
        (0..self.dims())
            .map(|i| self.sobol_index(i).expect("index in range"))
            .collect()
    }

    /// Centered main effect `E[g | x_i] - E[g] = (|4x_i - 2| - 1) / (1 + a_i)`.
    pub fn main_effect(&self, i: usize, xi: f64) -> Result<f64> {
        let ai = *self.a.get(i).ok_or(Error::DimensionMismatch {
            expected: self.dims(),
            found: i + 1,
        })?;
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::invalid("main effect argument must lie in [0, 1]"));
        }
        Ok(((4.0 * xi - 2.0).abs() - 1.0) / (1.0 + ai))
    }
}

impl TryFrom<Vec<f64>> for GFunction {
    type Error = Error;

    fn try_from(a: Vec<f64>) -> Result<Self> {
        Self::new(a)
    }
}

impl From<GFunction> for Vec<f64> {
    fn from(g: GFunction) -> Self {
        g.a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_values() {
        let g = GFunction::linear(4).unwrap();
        assert_abs_diff_eq!(g.eval(&[0.5; 4]).unwrap(), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(g.eval(&[0.0; 4]).unwrap(), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.eval(&[1.0; 4]).unwrap(), 3.0, epsilon = 1e-14);
        assert!(g.eval(&[1.1, 0.0, 0.0, 0.0]).is_err());
        assert!(g.eval(&[0.5; 3]).is_err());
        assert!(GFunction::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn sobol_indices() {
        let s = GFunction::linear(4).unwrap().sobol_indices();
        let sum: f64 = s.iter().sum();
        assert!((sum - 0.95).abs() <= 0.005, "{sum}");
        assert!(s.windows(2).all(|w| w[0] > w[1]));
        for a in [0.1, 1.0, 7.5] {
            assert_abs_diff_eq!(
                GFunction::new(vec![a]).unwrap().sobol_index(0).unwrap(),
                1.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn monte_carlo_mean_and_main_effects() {
        let g = GFunction::linear(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let m = 1_000_000;
        let mut x = [0.0; 4];
        let mut total = 0.0;
        for _ in 0..m {
            x.iter_mut().for_each(|v| *v = rng.random());
            total += g.eval(&x).unwrap();
        }
        assert!((total / m as f64 - 1.0).abs() <= 0.01);

        // conditional means with x_i frozen
        for i in 0..4 {
            for xi in [0.0, 0.25, 0.9] {
                let mut acc = 0.0;
                for _ in 0..m / 4 {
                    x.iter_mut().for_each(|v| *v = rng.random());
                    x[i] = xi;
                    acc += g.eval(&x).unwrap();
                }
                let mc = acc / (m / 4) as f64 - 1.0;
                assert!((mc - g.main_effect(i, xi).unwrap()).abs() <= 0.01, "i={i} x={xi}");
            }
            assert_abs_diff_eq!(g.main_effect(i, 0.5).unwrap(), -1.0 / (2.0 + i as f64), epsilon = 1e-15);
            // piecewise linear: the midpoint rule on a grid aligned with the kink is exact
            let n = 1000;
            let integral: f64 = (0..n)
                .map(|j| g.main_effect(i, (j as f64 + 0.5) / n as f64).unwrap())
                .sum::<f64>()
                / n as f64;
            assert_abs_diff_eq!(integral, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn vertex_is_maximum() {
        let g = GFunction::new(vec![0.5, 2.0, 9.0]).unwrap();
        let top: f64 = g.coefficients().iter().map(|a| (2.0 + a) / (1.0 + a)).product();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            let v = g.eval(&x).unwrap();
            assert!(v > 0.0 && v <= top);
        }
        assert_abs_diff_eq!(g.eval(&[1.0, 0.0, 1.0]).unwrap(), top, epsilon = 1e-14);
    }
}
