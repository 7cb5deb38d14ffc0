use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Diagonal jitter relative to the mean prior variance.
pub const PATH_JITTER_REL: f64 = 1e-10;

/// Draws `Y = L ξ` with `L Lᵀ = K + εI`, `ε = 1e-10 · tr(K)/n`, and
/// `ξ` standard normal from a generator seeded with `seed`.
///
/// A kernel with zero variance everywhere gets `ε = 1e-10`.
pub fn sample_gp_path(kernel: &Kernel, design: &DMatrix<f64>, seed: u64) -> Result<DVector<f64>> {
    let n = design.nrows();
    let cov = kernel.cov_matrix(design, 0.0)?;
    let mean_var = cov.trace() / n as f64;
    let jitter = PATH_JITTER_REL * if mean_var > 0.0 { mean_var } else { 1.0 };
    let cov = kernel.cov_matrix(design, jitter)?;
    let l = cov
        .cholesky()
        .ok_or_else(|| {
            Error::invalid("path covariance is not factorizable; use a design with distinct, better spread points")
        })?
        .unpack();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
    Ok(l * xi)
}
