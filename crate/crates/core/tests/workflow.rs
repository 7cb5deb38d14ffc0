//! End-to-end use of the public API: sample, estimate, fit, predict, persist.

use akrig::benchmark::{lhs_maximin, q2, sample_gp_path};
use akrig::estimate::{minimize_box, Likelihood, Termination};
use akrig::{
    estimate_rlm, estimate_ulm, neg_log_likelihood, Bounds, Composition, Dataset, FittedGp, HyperParams, Kernel,
    KernelFamily, ParamId, RlmConfig, UlmConfig,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn additive_path(d: usize, n: usize, seed: u64) -> (Kernel, Dataset) {
    let kernel = Kernel::additive(KernelFamily::Matern32, &vec![1.0; d], &vec![0.3; d]).unwrap();
    let x = lhs_maximin(n, d, seed, 2000).unwrap();
    let y = sample_gp_path(&kernel, &x, seed + 1).unwrap();
    (kernel, Dataset::new(x, y).unwrap())
}

#[test]
fn estimates_beat_the_generating_parameters() {
    let (kernel, ds) = additive_path(3, 45, 10);
    let bounds = Bounds::default_for(&ds, Composition::Additive).unwrap();
    let mut truth = HyperParams::from_kernel(&kernel, 0.0);
    truth.noise = bounds.lower[6];
    let l_true = neg_log_likelihood(&truth, &ds, KernelFamily::Matern32, Composition::Additive).unwrap();

    let rlm = estimate_rlm(&ds, KernelFamily::Matern32, &bounds, &RlmConfig::default()).unwrap();
    let ulm = estimate_ulm(
        &ds,
        KernelFamily::Matern32,
        Composition::Additive,
        &bounds,
        &UlmConfig::default(),
    )
    .unwrap();
    for est in [&rlm, &ulm] {
        assert!(bounds.contains(&est.params.to_vec()));
        let recomputed = neg_log_likelihood(&est.params, &ds, KernelFamily::Matern32, Composition::Additive).unwrap();
        assert!((recomputed - est.value).abs() <= 1e-9 * recomputed.abs().max(1.0));
        assert!(
            est.value <= l_true + 1e-6,
            "l = {} above the generating value {l_true}",
            est.value
        );
    }
    // RLM trace: every step names a direction and the best value never increases
    let best: Vec<f64> = rlm.trace.steps.iter().map(|s| s.best_value).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    assert!(rlm.trace.steps.iter().all(|s| s.direction.is_some_and(|i| i < 3)));
}

#[test]
fn fitted_model_predicts_held_out_path_values() {
    let d = 2;
    let kernel = Kernel::additive(KernelFamily::Gaussian, &[1.0, 0.5], &[0.3, 0.3]).unwrap();
    let train = lhs_maximin(30, d, 4, 2000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let test = DMatrix::from_fn(200, d, |_, _| rng.random::<f64>());
    let mut all = DMatrix::zeros(230, d);
    all.rows_mut(0, 30).copy_from(&train);
    all.rows_mut(30, 200).copy_from(&test);
    let y = sample_gp_path(&kernel, &all, 5).unwrap();
    let ds = Dataset::new(train, y.rows(0, 30).into_owned()).unwrap();
    let bounds = Bounds::default_for(&ds, Composition::Additive).unwrap();
    let est = estimate_rlm(&ds, KernelFamily::Gaussian, &bounds, &RlmConfig::default()).unwrap();
    let gp = FittedGp::fit(
        &est.params
            .kernel(KernelFamily::Gaussian, Composition::Additive)
            .unwrap(),
        &ds,
        est.params.noise,
    )
    .unwrap();
    let pred: Vec<f64> = gp.predict_many(&test).unwrap().into_iter().map(|(m, _)| m).collect();
    let truth: Vec<f64> = y.rows(30, 200).iter().copied().collect();
    let score = q2(&truth, &pred).unwrap();
    assert!(score >= 0.9, "Q2 = {score}");

    let mut buf = Vec::new();
    gp.write_json(&mut buf).unwrap();
    let back = FittedGp::read_json(buf.as_slice()).unwrap();
    let again: Vec<f64> = back.predict_many(&test).unwrap().into_iter().map(|(m, _)| m).collect();
    assert_eq!(pred, again);
}

#[test]
fn box_optimizer_reaches_a_stationary_point_of_the_likelihood() {
    let (_, ds) = additive_path(2, 24, 21);
    let bounds = Bounds::default_for(&ds, Composition::Additive).unwrap();
    let lik = Likelihood::new(&ds, KernelFamily::Matern32, Composition::Additive);
    let ids: Vec<ParamId> = (0..5).map(|i| akrig::estimate::param_at(i, 2)).collect();
    let f = |x: &[f64]| {
        let p = HyperParams::from_slice(2, x).ok()?;
        lik.value_and_gradient(&p, &ids).ok()
    };
    let start = bounds.midpoint();
    let res = minimize_box(f, &bounds.lower, &bounds.upper, &start, &Default::default()).unwrap();
    assert!(
        matches!(
            res.termination,
            Termination::ProjectedGradient | Termination::RelativeReduction
        ),
        "{:?} after {} calls",
        res.termination,
        res.n_calls
    );
    // first-order conditions, checked independently of the optimizer
    let p = HyperParams::from_slice(2, &res.x).unwrap();
    let (_, g) = lik.value_and_gradient(&p, &ids).unwrap();
    for (i, gi) in g.iter().enumerate() {
        let (lo, hi, x) = (bounds.lower[i], bounds.upper[i], res.x[i]);
        let projected = (x - gi).clamp(lo, hi) - x;
        let scale = (hi - lo).max(1e-12);
        assert!(projected.abs() / scale <= 1e-4, "parameter {i}: x = {x}, gradient {gi}");
    }
}
