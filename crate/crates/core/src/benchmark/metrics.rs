use crate::error::{Error, Result};

/// Predictivity coefficient `Q2 = 1 - Σ(y - ŷ)² / Σ(y - ȳ)²`.
pub fn q2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: y_hat.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::invalid("Q2 needs at least two test points"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let total: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if !(total > 0.0) {
        return Err(Error::invalid("Q2 is undefined for constant test responses"));
    }
    let residual: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - residual / total)
}
