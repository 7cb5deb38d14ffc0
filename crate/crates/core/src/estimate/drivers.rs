use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::Likelihood;
use super::optimizer::{minimize_box, OptimOptions, OptimResult};
use super::trace::{EstimationTrace, StepRecord};
use super::{param_index, Bounds, HyperParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{Composition, KernelFamily, ParamId};

#[derive(Clone, Debug, PartialEq)]
pub struct UlmConfig {
    /// The first restart starts mid-box, later ones uniformly in the box.
    pub n_restarts: usize,
    pub seed: u64,
    pub options: OptimOptions,
}

impl Default for UlmConfig {
    fn default() -> Self {
        Self {
            n_restarts: 1,
            seed: 0,
            options: OptimOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlmConfig {
    pub n_iterations: usize,
    /// Range given to every direction before it is first fitted.
    pub initial_range: f64,
    /// Options of each 3-parameter inner optimization.
    pub inner: OptimOptions,
    /// Stop once a full cycle lowers `l` by less than this relative amount.
    /// `None` always runs `n_iterations` cycles.
    pub early_stop_rel: Option<f64>,
}

impl Default for RlmConfig {
    fn default() -> Self {
        Self {
            n_iterations: 5,
            initial_range: 0.2,
            inner: OptimOptions {
                max_evals: 200,
                ..OptimOptions::default()
            },
            early_stop_rel: Some(1e-6),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Estimate {
    pub params: HyperParams,
    /// `l` at `params`.
    pub value: f64,
    pub trace: EstimationTrace,
    /// False when the evaluation budget ran out before a stopping test held.
    pub converged: bool,
}

/// Optimizer coordinates: `ln p` for parameters with a positive lower
/// bound, `p` itself otherwise. Ranges and noise variances vary over
/// orders of magnitude and the likelihood is far better conditioned in
/// their logarithms; variances stay linear so that they can reach zero.
struct Scaling {
    log: Vec<bool>,
}

impl Scaling {
    fn new(bounds: &Bounds) -> Self {
        Self {
            log: bounds.lower.iter().map(|&l| l > 0.0).collect(),
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.log)
            .map(|(&v, &lg)| if lg { v.ln() } else { v })
            .collect()
    }

    fn backward(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.log)
            .map(|(&v, &lg)| if lg { v.exp() } else { v })
            .collect()
    }

    /// Box in optimizer coordinates; `fixed` entries collapse to `x`.
    fn bounds(&self, bounds: &Bounds, x: &[f64], free: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut lower = x.to_vec();
        let mut upper = x.to_vec();
        for &i in free {
            lower[i] = bounds.lower[i];
            upper[i] = bounds.upper[i];
        }
        (self.forward(&lower), self.forward(&upper))
    }

    /// Wraps a natural-coordinate objective restricted to `free`.
    fn objective<'a>(
        &'a self,
        lik: &'a Likelihood<'a>,
        free: &'a [usize],
    ) -> impl FnMut(&[f64]) -> Option<(f64, Vec<f64>)> + 'a {
        move |y: &[f64]| {
            let x = self.backward(y);
            let (v, g) = lik.eval_flat(&x, free)?;
            let mut full = vec![0.0; y.len()];
            for (&i, gi) in free.iter().zip(g) {
                full[i] = if self.log[i] { gi * x[i] } else { gi };
            }
            Some((v, full))
        }
    }

    /// Maps a result back, snapping to the natural bounds that `exp`
    /// may miss by an ulp.
    fn finish(&self, bounds: &Bounds, y: &[f64]) -> Vec<f64> {
        let mut x = self.backward(y);
        bounds.clamp(&mut x);
        x
    }
}

fn check_bounds(dataset: &Dataset, bounds: &Bounds) -> Result<()> {
    if bounds.dims() != dataset.dims() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dims(),
            found: bounds.dims(),
        });
    }
    Ok(())
}

/// Joint maximum-likelihood estimation of all `2d + 1` parameters.
pub fn estimate_ulm(
    dataset: &Dataset,
    family: KernelFamily,
    composition: Composition,
    bounds: &Bounds,
    config: &UlmConfig,
) -> Result<Estimate> {
    check_bounds(dataset, bounds)?;
    if config.n_restarts == 0 {
        return Err(Error::invalid("n_restarts must be at least 1"));
    }
    let d = dataset.dims();
    let lik = Likelihood::new(dataset, family, composition);
    let all: Vec<usize> = (0..2 * d + 1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = EstimationTrace::default();
    let mut best: Option<OptimResult> = None;
    let mut any_converged = false;
    let scaling = Scaling::new(bounds);
    let (lower, upper) = scaling.bounds(bounds, &bounds.lower, &all);
    for restart in 0..config.n_restarts {
        let start: Vec<f64> = if restart == 0 {
            bounds.midpoint()
        } else {
            bounds
                .lower
                .iter()
                .zip(&bounds.upper)
                .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
                .collect()
        };
        let objective = scaling.objective(&lik, &all);
        let res = match minimize_box(objective, &lower, &upper, &scaling.forward(&start), &config.options) {
            Ok(mut r) => {
                r.x = scaling.finish(bounds, &r.x);
                r
            }
            Err(Error::NoFiniteEvaluation) => continue,
            Err(e) => return Err(e),
        };
        trace.push_calls(&res.best_by_call);
        any_converged |= res.converged();
        if best.as_ref().is_none_or(|b| res.value < b.value) {
            best = Some(res.clone());
        }
        let incumbent = best.as_ref().expect("set above");
        trace.steps.push(StepRecord {
            iteration: restart + 1,
            direction: None,
            n_calls: res.n_calls,
            n_calls_cum: trace.total_calls(),
            best_value: incumbent.value,
            tau2: incumbent.x[2 * d],
            converged: res.converged(),
        });
    }
    let best = best.ok_or(Error::NoFiniteEvaluation)?;
    Ok(Estimate {
        params: HyperParams::from_slice(d, &best.x)?,
        value: best.value,
        trace,
        converged: any_converged,
    })
}

/// Relaxed likelihood maximization for the additive kernel.
///
/// All directional variances start at their lower bound (zero by
/// default) and `τ²` at `var(Y)`. Each cycle visits the directions in
/// order and re-optimizes `(σ_l², θ_l, τ²)` from the incumbent, holding
/// every other direction fixed.
pub fn estimate_rlm(dataset: &Dataset, family: KernelFamily, bounds: &Bounds, config: &RlmConfig) -> Result<Estimate> {
    check_bounds(dataset, bounds)?;
    if config.n_iterations == 0 {
        return Err(Error::invalid("n_iterations must be at least 1"));
    }
    if !(config.initial_range > 0.0) {
        return Err(Error::invalid("initial_range must be positive"));
    }
    let d = dataset.dims();
    let lik = Likelihood::new(dataset, family, Composition::Additive);
    let noise = param_index(ParamId::Noise, d);

    let mut x = bounds.lower.clone();
    for i in 0..d {
        x[d + i] = config.initial_range;
    }
    x[noise] = dataset.response_variance();
    bounds.clamp(&mut x);

    let scaling = Scaling::new(bounds);
    let mut trace = EstimationTrace::default();
    let mut value = f64::INFINITY;
    let mut converged = true;
    for k in 1..=config.n_iterations {
        let cycle_start = value;
        converged = true;
        for l in 0..d {
            let wrt = [l, d + l, noise];
            let (lower, upper) = scaling.bounds(bounds, &x, &wrt);
            let res = minimize_box(
                scaling.objective(&lik, &wrt),
                &lower,
                &upper,
                &scaling.forward(&x),
                &config.inner,
            )?;
            trace.push_calls(&res.best_by_call);
            let step_converged = res.converged();
            converged &= step_converged;
            let fitted = scaling.finish(bounds, &res.x);
            // keep the fixed directions bit-identical
            for &i in &wrt {
                x[i] = fitted[i];
            }
            value = res.value;
            trace.steps.push(StepRecord {
                iteration: k,
                direction: Some(l),
                n_calls: res.n_calls,
                n_calls_cum: trace.total_calls(),
                best_value: value,
                tau2: x[noise],
                converged: step_converged,
            });
        }
        if let Some(tol) = config.early_stop_rel {
            if k >= 2 && cycle_start - value <= tol * cycle_start.abs().max(1.0) {
                break;
            }
        }
    }
    Ok(Estimate {
        params: HyperParams::from_slice(d, &x)?,
        value,
        trace,
        converged,
    })
}
