//! Box-constrained quasi-Newton minimization.
//!
//! Projected BFGS in the style of two-metric projection methods: variables
//! sitting on a bound with the gradient pushing outward are held by a
//! steepest-descent step that the projection clips, the remaining ones get
//! the BFGS direction, and an Armijo backtracking search runs along the
//! projected arc. The search works on box-normalized coordinates
//! `z = (x - lower) / (upper - lower)`; parameters whose bounds coincide
//! are fixed and never enter the iteration.

use nalgebra::{DMatrix, DVector};

use super::FAILED_OBJECTIVE;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimOptions {
    /// Objective evaluations allowed, line-search probes included.
    pub max_evals: usize,
    /// Stop when `max_i |x_i - P(x - ∇f)_i|` falls below this.
    pub pg_tol: f64,
    /// Stop when an unshortened step reduces `f` by less than
    /// `f_rel_tol · max(|f|, 1)`.
    pub f_rel_tol: f64,
    pub max_backtracks: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_evals: 5000,
            pg_tol: 1e-5,
            f_rel_tol: 1e7 * f64::EPSILON,
            max_backtracks: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ProjectedGradient,
    RelativeReduction,
    /// No acceptable step even from a steepest-descent direction.
    LineSearchStalled,
    /// Every parameter is pinned by its bounds.
    FixedPoint,
    BudgetExhausted,
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub n_calls: usize,
    pub termination: Termination,
    pub projected_gradient_norm: f64,
    /// Best objective value seen after each call.
    pub best_by_call: Vec<f64>,
}

impl OptimResult {
    pub fn converged(&self) -> bool {
        self.termination != Termination::BudgetExhausted
    }
}

struct Evaluator<'a, F> {
    f: F,
    lower: &'a [f64],
    width: &'a [f64],
    vars: &'a [usize],
    x: Vec<f64>,
    n_calls: usize,
    best_by_call: Vec<f64>,
}

impl<F> Evaluator<'_, F>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    fn load_natural(&mut self, z: &DVector<f64>) {
        for (k, &i) in self.vars.iter().enumerate() {
            self.x[i] = self.lower[i] + self.width[i] * z[k];
        }
    }

    /// Value and z-space gradient; `None` gradient for a failed evaluation.
    fn eval(&mut self, z: &DVector<f64>) -> (f64, Option<DVector<f64>>) {
        self.load_natural(z);
        self.n_calls += 1;
        let out = (self.f)(&self.x);
        let (value, grad) = match out {
            Some((v, g)) => {
                let gz = DVector::from_iterator(self.vars.len(), self.vars.iter().map(|&i| g[i] * self.width[i]));
                (v, Some(gz))
            }
            None => (FAILED_OBJECTIVE, None),
        };
        let best = self.best_by_call.last().map_or(value, |b: &f64| b.min(value));
        self.best_by_call.push(best);
        (value, grad)
    }
}

fn clamp01(z: &DVector<f64>) -> DVector<f64> {
    z.map(|v| v.clamp(0.0, 1.0))
}

/// Minimizes `f` over the box `[lower, upper]` starting from `start`.
///
/// `f` returns the value and the full gradient, or `None` where the
/// objective is undefined; such points are scored [`FAILED_OBJECTIVE`].
pub fn minimize_box<F>(f: F, lower: &[f64], upper: &[f64], start: &[f64], opts: &OptimOptions) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = start.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: lower.len().min(upper.len()),
        });
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::invalid("lower bound exceeds upper bound"));
    }
    if opts.max_evals == 0 {
        return Err(Error::invalid("optimizer needs a positive evaluation budget"));
    }
    let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
    let vars: Vec<usize> = (0..n).filter(|&i| width[i] > 0.0).collect();
    let m = vars.len();
    let mut x0: Vec<f64> = start.to_vec();
    for i in 0..n {
        x0[i] = x0[i].clamp(lower[i], upper[i]);
    }
    let mut ev = Evaluator {
        f,
        lower,
        width: &width,
        vars: &vars,
        x: x0.clone(),
        n_calls: 0,
        best_by_call: Vec::new(),
    };
    let mut z = DVector::from_iterator(m, vars.iter().map(|&i| (x0[i] - lower[i]) / width[i]));
    let (mut fz, gz0) = ev.eval(&z);
    let Some(mut gz) = gz0 else {
        return Err(Error::NoFiniteEvaluation);
    };

    let pg_natural = |z: &DVector<f64>, gz: &DVector<f64>| -> f64 {
        let mut worst = 0.0f64;
        for (k, &i) in vars.iter().enumerate() {
            let x = lower[i] + width[i] * z[k];
            let g = gz[k] / width[i];
            let proj = (x - g).clamp(lower[i], upper[i]);
            worst = worst.max((x - proj).abs());
        }
        worst
    };

    let mut h = DMatrix::<f64>::identity(m, m);
    let mut h_is_identity = true;
    let termination = if m == 0 {
        Termination::FixedPoint
    } else {
        loop {
            if pg_natural(&z, &gz) <= opts.pg_tol {
                break Termination::ProjectedGradient;
            }
            if ev.n_calls >= opts.max_evals {
                break Termination::BudgetExhausted;
            }
            let pgz = (&z - clamp01(&(&z - &gz))).amax();
            let eps = pgz.min(1e-3);
            let active: Vec<bool> = (0..m)
                .map(|k| (z[k] <= eps && gz[k] > 0.0) || (z[k] >= 1.0 - eps && gz[k] < 0.0))
                .collect();
            let mut d = DVector::zeros(m);
            for a in 0..m {
                if active[a] {
                    d[a] = -gz[a];
                } else {
                    d[a] = -(0..m).filter(|&b| !active[b]).map(|b| h[(a, b)] * gz[b]).sum::<f64>();
                }
            }

            let mut alpha = if h_is_identity { (0.1 / d.amax()).min(1.0) } else { 1.0 };
            let mut accepted = None;
            let mut budget_hit = false;
            let mut first_trial = true;
            for _ in 0..opts.max_backtracks {
                if ev.n_calls >= opts.max_evals {
                    budget_hit = true;
                    break;
                }
                let zt = clamp01(&(&z + alpha * &d));
                let slope = gz.dot(&(&zt - &z));
                if !(slope < 0.0) {
                    break;
                }
                let (ft, gt) = ev.eval(&zt);
                if let Some(gt) = gt.filter(|_| ft <= fz + 1e-4 * slope) {
                    accepted = Some((zt, ft, gt));
                    break;
                }
                let curvature = ft - fz - slope;
                let shrink = if ft < FAILED_OBJECTIVE && curvature > 0.0 {
                    (-0.5 * slope / curvature).clamp(0.1, 0.5)
                } else {
                    0.1
                };
                alpha *= shrink;
                first_trial = false;
            }
            let Some((zt, ft, gt)) = accepted else {
                if budget_hit {
                    break Termination::BudgetExhausted;
                }
                if h_is_identity {
                    break Termination::LineSearchStalled;
                }
                h = DMatrix::identity(m, m);
                h_is_identity = true;
                continue;
            };

            let s = &zt - &z;
            let y = &gt - &gz;
            let reduction = fz - ft;
            let scale = fz.abs().max(ft.abs()).max(1.0);
            let sy = s.dot(&y);
            if sy > 1e-10 * s.norm() * y.norm() {
                if h_is_identity {
                    h *= sy / y.dot(&y);
                    h_is_identity = false;
                }
                // H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
                let rho = 1.0 / sy;
                let hy = &h * &y;
                let yhy = y.dot(&hy);
                h.ger(-rho, &hy, &s, 1.0);
                h.ger(-rho, &s, &hy, 1.0);
                h.ger(rho * rho * yhy + rho, &s, &s, 1.0);
            }
            z = zt;
            fz = ft;
            gz = gt;
            // a backtracked step says more about the direction than about convergence
            if first_trial && reduction <= opts.f_rel_tol * scale {
                break Termination::RelativeReduction;
            }
        }
    };
    let pg = if m == 0 { 0.0 } else { pg_natural(&z, &gz) };
    ev.load_natural(&z);
    Ok(OptimResult {
        x: ev.x,
        value: fz,
        n_calls: ev.n_calls,
        termination,
        projected_gradient_norm: pg,
        best_by_call: ev.best_by_call,
    })
}
