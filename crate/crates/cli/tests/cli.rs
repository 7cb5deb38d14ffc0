use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use akrig::benchmark::{derive_seed, lhs_maximin, median};
use akrig::{Dataset, FittedGp, GFunction, Kernel, KernelFamily};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn akrig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_akrig"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn numeric_column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_table(path);
    let k = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

/// A 40-point maximin design on the d=4 g-function with `a_k = k`.
fn gfunction_dataset(dir: &Path, seed: u64) -> (PathBuf, GFunction) {
    let g = GFunction::linear(4).unwrap();
    let x = lhs_maximin(40, 4, seed, 10_000).unwrap();
    let y: Vec<f64> = x
        .row_iter()
        .map(|r| g.eval(&r.iter().copied().collect::<Vec<_>>()).unwrap())
        .collect();
    let path = dir.join("g.csv");
    Dataset::new(x, y.into()).unwrap().write_csv(&path).unwrap();
    (path, g)
}

fn stdout_value(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no '{key}' in output:\n{text}"))
        .parse()
        .unwrap()
}

fn write_model(gp: &FittedGp, path: &Path) {
    gp.write_json(fs::File::create(path).unwrap()).unwrap();
}

#[test]
fn rlm_rejects_zero_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = gfunction_dataset(dir.path(), 1);
    let out = akrig(&[
        "fit",
        "--data",
        s(&data),
        "--method",
        "rlm",
        "--iterations",
        "0",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("model.json").exists());
}

#[test]
fn usage_and_input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(akrig(&["fit", "--no-such-flag"]).status.code(), Some(2));
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        akrig(&["fit", "--data", s(&missing), "--out", s(dir.path())])
            .status
            .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n").unwrap();
    assert_eq!(
        akrig(&["fit", "--data", s(&bad), "--out", s(dir.path())]).status.code(),
        Some(2)
    );
    let (data, _) = gfunction_dataset(dir.path(), 1);
    let out = akrig(&[
        "fit",
        "--data",
        s(&data),
        "--method",
        "rlm",
        "--composition",
        "tensor",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gfunction_fit_recovers_small_noise_and_main_effect() {
    let dir = tempfile::tempdir().unwrap();
    // the twenty designs of the default g-function study
    let mut deviations = Vec::new();
    for j in 0..20 {
        let (data, g) = gfunction_dataset(dir.path(), derive_seed(0, j));
        let fit_dir = dir.path().join(format!("fit{j}"));
        let out = akrig(&[
            "fit",
            "--data",
            s(&data),
            "--method",
            "rlm",
            "--iterations",
            "5",
            "--out",
            s(&fit_dir),
        ]);
        ok(&out);
        let tau2 = stdout_value(&out, "tau2");
        assert!(tau2 <= 0.05, "design {j}: tau2 = {tau2}");
        let ratio = stdout_value(&out, "additivity_ratio");
        assert!((0.0..=1.0).contains(&ratio));
        stdout_value(&out, "l");
        for f in ["model.json", "trace.csv", "estimate.json", "config.json"] {
            assert!(fit_dir.join(f).exists(), "{f} missing");
        }
        let (header, rows) = read_table(&fit_dir.join("trace.csv"));
        assert_eq!(
            header,
            ["run_id", "iteration", "direction", "n_calls_cum", "best_value", "tau2"]
        );
        assert!(!rows.is_empty() && rows.len() <= 20);

        let eff_dir = dir.path().join(format!("effects{j}"));
        let model = fit_dir.join("model.json");
        ok(&akrig(&[
            "effects",
            "--model",
            s(&model),
            "--direction",
            "1",
            "--grid-size",
            "201",
            "--out",
            s(&eff_dir),
        ]));
        let path = eff_dir.join("effects.csv");
        let x = numeric_column(&path, "x");
        let m_star = numeric_column(&path, "m_star");
        let dev = x
            .iter()
            .zip(&m_star)
            .map(|(&t, &m)| (m - g.main_effect(0, t).unwrap()).abs())
            .fold(0.0, f64::max);
        deviations.push(dev);
    }
    // single designs stray at the edges of [0, 1], where the interactions
    // of g are largest; the typical design stays within the band
    let typical = median(&deviations).unwrap();
    assert!(
        typical <= 0.15,
        "median max deviation {typical}, per design {deviations:?}"
    );
}

#[test]
fn fit_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = gfunction_dataset(dir.path(), 5);
    for method in ["rlm", "ulm"] {
        let a = dir.path().join(format!("{method}-a"));
        let b = dir.path().join(format!("{method}-b"));
        for out in [&a, &b] {
            ok(&akrig(&[
                "fit",
                "--data",
                s(&data),
                "--method",
                method,
                "--seed",
                "11",
                "--restarts",
                "2",
                "--out",
                s(out),
            ]));
        }
        for f in ["model.json", "trace.csv", "estimate.json"] {
            assert!(
                fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(),
                "{method}: {f} differs"
            );
        }
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = gfunction_dataset(dir.path(), 2);
    let cfg = dir.path().join("fit.json");
    fs::write(
        &cfg,
        format!(r#"{{"data": {:?}, "kernel": "gaussian", "method": "ulm", "seed": 4, "estimation": {{"ulm_budget": 300}}}}"#, s(&data)),
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    ok(&akrig(&[
        "fit",
        "--config",
        s(&cfg),
        "--method",
        "rlm",
        "--iterations",
        "2",
        "--out",
        s(&out_dir),
    ]));
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["kernel"], "gaussian");
    assert_eq!(echo["method"], "rlm");
    assert_eq!(echo["seed"], 4);
    assert_eq!(echo["estimation"]["rlm_iterations"], 2);
    assert_eq!(echo["estimation"]["ulm_budget"], 300);
    assert_eq!(echo["schema_version"], 1);
}

#[test]
fn degenerate_design_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("rect.csv");
    fs::write(
        &data,
        "x1,x2,y\n0.2,0.3,1.0\n0.8,0.3,2.0\n0.2,0.7,0.5\n0.8,0.7,1.5\n0.5,0.5,1.2\n",
    )
    .unwrap();
    let out = akrig(&["fit", "--data", s(&data), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dependent_point_indices"), "{err}");
    let out = akrig(&["fit", "--data", s(&data), "--allow-degenerate", "--out", s(dir.path())]);
    assert!(matches!(out.status.code(), Some(0) | Some(3)), "{:?}", out.status);
    assert!(dir.path().join("model.json").exists());
}

#[test]
fn predict_matches_library_and_interpolates() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = DMatrix::from_fn(15, 3, |_, _| rng.random::<f64>());
    let y = DVector::from_fn(15, |_, _| rng.random_range(-1.0..3.0));
    let ds = Dataset::new(x.clone(), y).unwrap();
    let kernel = Kernel::additive(KernelFamily::Matern32, &[1.0, 0.5, 2.0], &[0.3, 0.4, 0.2]).unwrap();
    let gp = FittedGp::fit_centered(&kernel, &ds, 0.0).unwrap();
    let model = dir.path().join("model.json");
    write_model(&gp, &model);

    let queries = DMatrix::from_fn(100, 3, |_, _| rng.random::<f64>());
    let qpath = dir.path().join("points.csv");
    let mut text = String::from("x1,x2,x3\n");
    for r in queries.row_iter() {
        text += &format!("{},{},{}\n", r[0], r[1], r[2]);
    }
    fs::write(&qpath, text).unwrap();
    ok(&akrig(&[
        "predict",
        "--model",
        s(&model),
        "--points",
        s(&qpath),
        "--out",
        s(dir.path()),
    ]));
    let preds = dir.path().join("predictions.csv");
    let (header, _) = read_table(&preds);
    assert_eq!(header, ["mean", "variance"]);
    let means = numeric_column(&preds, "mean");
    assert_eq!(means.len(), 100);
    for (r, m) in queries.row_iter().zip(&means) {
        let expected = gp.predict_mean(&r.iter().copied().collect::<Vec<_>>()).unwrap();
        assert_eq!(*m, expected);
    }

    // the design itself, with its response column, as query points
    let dpath = dir.path().join("design.csv");
    ds.write_csv(&dpath).unwrap();
    let out_dir = dir.path().join("at-design");
    ok(&akrig(&[
        "predict",
        "--model",
        s(&model),
        "--points",
        s(&dpath),
        "--out",
        s(&out_dir),
    ]));
    let var = numeric_column(&out_dir.join("predictions.csv"), "variance");
    let mean = numeric_column(&out_dir.join("predictions.csv"), "mean");
    for i in 0..15 {
        assert!(var[i] <= 1e-9, "variance {} at design point {i}", var[i]);
        assert!((mean[i] - ds.response()[i]).abs() <= 1e-9);
    }

    let wrong = dir.path().join("wrong.csv");
    fs::write(&wrong, "x1,x2\n0.1,0.2\n").unwrap();
    assert_eq!(
        akrig(&[
            "predict",
            "--model",
            s(&model),
            "--points",
            s(&wrong),
            "--out",
            s(dir.path())
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn rectangle_corner_has_no_variance() {
    let dir = tempfile::tempdir().unwrap();
    let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.7, 0.2, 0.1, 0.9]);
    let y = DVector::from_vec(vec![1.0, 2.5, -0.5]);
    let kernel = Kernel::additive(KernelFamily::Gaussian, &[1.3, 0.6], &[0.25, 0.4]).unwrap();
    let gp = FittedGp::fit(&kernel, &Dataset::new(x, y).unwrap(), 0.0).unwrap();
    let model = dir.path().join("model.json");
    write_model(&gp, &model);
    let points = dir.path().join("corner.csv");
    fs::write(&points, "x1,x2\n0.7,0.9\n").unwrap();
    ok(&akrig(&[
        "predict",
        "--model",
        s(&model),
        "--points",
        s(&points),
        "--out",
        s(dir.path()),
    ]));
    let preds = dir.path().join("predictions.csv");
    assert!(numeric_column(&preds, "variance")[0] <= 1e-8);
    assert!((numeric_column(&preds, "mean")[0] - (2.5 - 0.5 - 1.0)).abs() <= 1e-8);
}

#[test]
fn effects_are_centered_and_nonnegative() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = DMatrix::from_fn(20, 2, |_, _| rng.random::<f64>());
    let y = DVector::from_fn(20, |i, _| (6.0 * x[(i, 0)]).sin() + x[(i, 1)].powi(2));
    let kernel = Kernel::additive(KernelFamily::Matern32, &[1.0, 0.4], &[0.3, 0.5]).unwrap();
    let gp = FittedGp::fit_centered(&kernel, &Dataset::new(x, y).unwrap(), 1e-4).unwrap();
    let model = dir.path().join("model.json");
    write_model(&gp, &model);
    for direction in ["1", "2"] {
        let out = dir.path().join(direction);
        ok(&akrig(&[
            "effects",
            "--model",
            s(&model),
            "--direction",
            direction,
            "--grid-size",
            "20001",
            "--out",
            s(&out),
        ]));
        let path = out.join("effects.csv");
        let (header, _) = read_table(&path);
        assert_eq!(header, ["x", "m", "v", "m_star", "v_star"]);
        let xs = numeric_column(&path, "x");
        let m_star = numeric_column(&path, "m_star");
        assert_eq!(xs.first(), Some(&0.0));
        assert_eq!(xs.last(), Some(&1.0));
        let integral: f64 = xs
            .windows(2)
            .zip(m_star.windows(2))
            .map(|(x, m)| 0.5 * (x[1] - x[0]) * (m[0] + m[1]))
            .sum();
        assert!(integral.abs() <= 1e-6, "direction {direction}: integral {integral}");
        assert!(numeric_column(&path, "v_star").iter().all(|&v| v >= 0.0));
        assert!(numeric_column(&path, "v").iter().all(|&v| v >= 0.0));
    }
    assert_eq!(
        akrig(&[
            "effects",
            "--model",
            s(&model),
            "--direction",
            "3",
            "--out",
            s(dir.path())
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn effects_reject_tensor_models() {
    let dir = tempfile::tempdir().unwrap();
    let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.7, 0.4, 0.3, 0.9]);
    let kernel = Kernel::tensor(KernelFamily::Gaussian, &[1.0, 1.0], &[0.3, 0.3]).unwrap();
    let gp = FittedGp::fit(
        &kernel,
        &Dataset::new(x, DVector::from_vec(vec![1.0, 0.0, 2.0])).unwrap(),
        0.0,
    )
    .unwrap();
    let model = dir.path().join("model.json");
    write_model(&gp, &model);
    let out = akrig(&[
        "effects",
        "--model",
        s(&model),
        "--direction",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported"));
}

fn paths_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("paths.json");
    fs::write(
        &cfg,
        r#"{"dims": [3], "n_paths": 20, "methods": ["rlm-additive"], "estimation": {"rlm_early_stop": null}}"#,
    )
    .unwrap();
    cfg
}

#[test]
fn paths_bench_writes_one_trace_row_per_inner_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = paths_config(dir.path());
    let out = dir.path().join("bench");
    ok(&akrig(&[
        "bench",
        "paths",
        "--config",
        s(&cfg),
        "--workers",
        "2",
        "--out",
        s(&out),
    ]));
    let (_, traces) = read_table(&out.join("traces.csv"));
    assert_eq!(traces.len(), 20 * 5 * 3);
    let (_, runs) = read_table(&out.join("runs.csv"));
    assert_eq!(runs.len(), 20);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["runs"].as_array().unwrap().len(), 20);
    for f in ["convergence.csv", "designs.csv", "config.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn bench_output_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = paths_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&akrig(&[
        "bench",
        "paths",
        "--config",
        s(&cfg),
        "--workers",
        "1",
        "--out",
        s(&a),
    ]));
    ok(&akrig(&[
        "bench",
        "paths",
        "--config",
        s(&cfg),
        "--workers",
        "3",
        "--out",
        s(&b),
    ]));
    for f in [
        "runs.csv",
        "traces.csv",
        "convergence.csv",
        "designs.csv",
        "summary.json",
    ] {
        assert!(
            fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

fn designs(path: &Path) -> Vec<(String, Vec<Vec<f64>>)> {
    let (header, rows) = read_table(path);
    let cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('x'))
        .map(|(k, _)| k)
        .collect();
    let mut out: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for r in rows {
        let point: Vec<f64> = cols
            .iter()
            .filter(|&&k| !r[k].is_empty())
            .map(|&k| r[k].parse().unwrap())
            .collect();
        match out.last_mut() {
            Some((id, pts)) if *id == r[0] => pts.push(point),
            _ => out.push((r[0].clone(), vec![point])),
        }
    }
    out
}

fn is_latin(points: &[Vec<f64>]) -> bool {
    let n = points.len();
    (0..points[0].len()).all(|k| {
        let mut strata: Vec<usize> = points.iter().map(|p| (p[k] * n as f64).floor() as usize).collect();
        strata.sort_unstable();
        strata == (0..n).collect::<Vec<_>>()
    })
}

#[test]
fn seed_changes_designs_but_keeps_latin_property() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    fs::write(
        &cfg,
        r#"{"n_designs": 4, "test_size": 200, "methods": ["rlm-additive"], "lhs_steps": 2000}"#,
    )
    .unwrap();
    let mut all = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        ok(&akrig(&[
            "bench",
            "gfunction",
            "--config",
            s(&cfg),
            "--seed",
            seed,
            "--out",
            s(&out),
        ]));
        let d = designs(&out.join("designs.csv"));
        assert_eq!(d.len(), 4);
        for (id, pts) in &d {
            assert_eq!(pts.len(), 40);
            assert!(is_latin(pts), "seed {seed}: {id} is not a Latin hypercube");
        }
        all.push(d);
    }
    for (a, b) in all[0].iter().zip(&all[1]) {
        assert_ne!(a.1, b.1, "{} unchanged by the seed", a.0);
    }
}
