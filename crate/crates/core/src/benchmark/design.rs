use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default number of exchange proposals for maximin improvement.
pub const DEFAULT_LHS_STEPS: usize = 10_000;

/// A Latin hypercube together with its maximin bookkeeping.
#[derive(Clone, Debug)]
pub struct MaximinLhs {
    pub design: DMatrix<f64>,
    pub initial_min_distance: f64,
    pub min_distance: f64,
    pub accepted_exchanges: usize,
}

/// Random Latin hypercube improved towards maximin by coordinate exchange.
///
/// Each proposal swaps the coordinates of two random points in one random
/// column, which keeps exactly one point per stratum `[j/n, (j+1)/n)` in
/// every column. A swap is kept when it increases the minimum pairwise
/// distance, or keeps it while reducing the number of pairs attaining it.
pub fn maximin_lhs(n: usize, d: usize, seed: u64, steps: usize) -> Result<MaximinLhs> {
    if n < 2 {
        return Err(Error::invalid("a Latin hypercube needs at least two points"));
    }
    if d == 0 {
        return Err(Error::invalid("a Latin hypercube needs at least one dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, d);
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(&mut rng);
        for i in 0..n {
            x[(i, j)] = (strata[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }

    let mut dist = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            let s: f64 = (0..d).map(|j| (x[(a, j)] - x[(b, j)]).powi(2)).sum();
            dist[(a, b)] = s;
            dist[(b, a)] = s;
        }
    }
    let (mut best, mut count) = min_pairs(&dist);
    let initial = best;
    let mut accepted = 0;
    let mut row_a = vec![0.0; n];
    let mut row_b = vec![0.0; n];
    for _ in 0..steps {
        let j = rng.random_range(0..d);
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n - 1);
        let b = if b >= a { b + 1 } else { b };
        let (xa, xb) = (x[(a, j)], x[(b, j)]);
        // squared distances after swapping x[a,j] and x[b,j]
        for k in 0..n {
            let xk = x[(k, j)];
            row_a[k] = dist[(a, k)] - (xa - xk).powi(2) + (xb - xk).powi(2);
            row_b[k] = dist[(b, k)] - (xb - xk).powi(2) + (xa - xk).powi(2);
        }
        row_a[a] = 0.0;
        row_b[b] = 0.0;
        row_a[b] = dist[(a, b)];
        row_b[a] = dist[(a, b)];
        let saved_a: Vec<f64> = dist.row(a).iter().copied().collect();
        let saved_b: Vec<f64> = dist.row(b).iter().copied().collect();
        write_row(&mut dist, a, &row_a);
        write_row(&mut dist, b, &row_b);
        let (m, c) = min_pairs(&dist);
        if m > best || (m == best && c < count) {
            x[(a, j)] = xb;
            x[(b, j)] = xa;
            best = m;
            count = c;
            accepted += 1;
        } else {
            write_row(&mut dist, a, &saved_a);
            write_row(&mut dist, b, &saved_b);
        }
    }
    Ok(MaximinLhs {
        design: x,
        initial_min_distance: initial.sqrt(),
        min_distance: best.sqrt(),
        accepted_exchanges: accepted,
    })
}

/// Maximin Latin hypercube design of `n` points in `[0,1]^d`.
pub fn lhs_maximin(n: usize, d: usize, seed: u64, steps: usize) -> Result<DMatrix<f64>> {
    Ok(maximin_lhs(n, d, seed, steps)?.design)
}

fn write_row(dist: &mut DMatrix<f64>, i: usize, row: &[f64]) {
    for (k, &v) in row.iter().enumerate() {
        dist[(i, k)] = v;
        dist[(k, i)] = v;
    }
}

/// Smallest off-diagonal entry and how many pairs attain it.
fn min_pairs(dist: &DMatrix<f64>) -> (f64, usize) {
    let n = dist.nrows();
    let mut best = f64::INFINITY;
    let mut count = 0;
    for b in 1..n {
        for a in 0..b {
            let v = dist[(a, b)];
            if v < best {
                best = v;
                count = 1;
            } else if v == best {
                count += 1;
            }
        }
    }
    (best, count)
}

/// Smallest Euclidean distance between two rows.
pub fn min_distance(design: &DMatrix<f64>) -> f64 {
    let n = design.nrows();
    let mut best = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            best = best.min((design.row(a) - design.row(b)).norm());
        }
    }
    best
}
