use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{lhs_maximin, DEFAULT_LHS_STEPS};
use super::gfunction::GFunction;
use super::metrics::q2;
use super::paths::{sample_gp_path, PATH_JITTER_REL};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{
    estimate_rlm, estimate_ulm, Bounds, Estimate, EstimationTrace, HyperParams, OptimOptions, RlmConfig, UlmConfig,
};
use crate::gp::FittedGp;
use crate::kernel::{Composition, Kernel, KernelFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RlmAdditive,
    UlmAdditive,
    UlmTensor,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::RlmAdditive, Method::UlmAdditive, Method::UlmTensor];

    pub fn label(self) -> &'static str {
        match self {
            Method::RlmAdditive => "rlm-additive",
            Method::UlmAdditive => "ulm-additive",
            Method::UlmTensor => "ulm-tensor",
        }
    }

    pub fn composition(self) -> Composition {
        match self {
            Method::UlmTensor => Composition::TensorProduct,
            _ => Composition::Additive,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Optimizer settings shared by the experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSettings {
    pub rlm_iterations: usize,
    pub rlm_initial_range: f64,
    /// `None` disables the early stop and always runs every cycle.
    pub rlm_early_stop: Option<f64>,
    pub inner_budget: usize,
    pub ulm_budget: usize,
    pub ulm_restarts: usize,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        let rlm = RlmConfig::default();
        let ulm = UlmConfig::default();
        Self {
            rlm_iterations: rlm.n_iterations,
            rlm_initial_range: rlm.initial_range,
            rlm_early_stop: rlm.early_stop_rel,
            inner_budget: rlm.inner.max_evals,
            ulm_budget: ulm.options.max_evals,
            ulm_restarts: ulm.n_restarts,
        }
    }
}

impl EstimationSettings {
    fn validate(&self) -> Result<()> {
        if self.rlm_iterations == 0 || self.inner_budget == 0 || self.ulm_budget == 0 || self.ulm_restarts == 0 {
            return Err(Error::invalid("iteration counts and budgets must be positive"));
        }
        Ok(())
    }

    /// Estimates with `method`; `seed` drives ULM restarts.
    pub fn estimate(&self, method: Method, dataset: &Dataset, family: KernelFamily, seed: u64) -> Result<Estimate> {
        let bounds = Bounds::default_for(dataset, method.composition())?;
        match method {
            Method::RlmAdditive => {
                let cfg = RlmConfig {
                    n_iterations: self.rlm_iterations,
                    initial_range: self.rlm_initial_range,
                    inner: OptimOptions {
                        max_evals: self.inner_budget,
                        ..OptimOptions::default()
                    },
                    early_stop_rel: self.rlm_early_stop,
                };
                estimate_rlm(dataset, family, &bounds, &cfg)
            }
            Method::UlmAdditive | Method::UlmTensor => {
                let cfg = UlmConfig {
                    n_restarts: self.ulm_restarts,
                    seed,
                    options: OptimOptions {
                        max_evals: self.ulm_budget,
                        ..OptimOptions::default()
                    },
                };
                estimate_ulm(dataset, family, method.composition(), &bounds, &cfg)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GFunctionConfig {
    pub coefficients: Vec<f64>,
    pub n_designs: usize,
    pub design_size: usize,
    pub test_size: usize,
    pub family: KernelFamily,
    pub methods: Vec<Method>,
    pub lhs_steps: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub estimation: EstimationSettings,
}

impl Default for GFunctionConfig {
    fn default() -> Self {
        Self {
            coefficients: vec![1.0, 2.0, 3.0, 4.0],
            n_designs: 20,
            design_size: 40,
            test_size: 1000,
            family: KernelFamily::Matern32,
            methods: Method::ALL.to_vec(),
            lhs_steps: DEFAULT_LHS_STEPS,
            seed: 0,
            workers: 0,
            estimation: EstimationSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dims: Vec<usize>,
    pub n_paths: usize,
    /// Design size is `points_per_dim · d`.
    pub points_per_dim: usize,
    pub variance: f64,
    pub range: f64,
    pub family: KernelFamily,
    pub methods: Vec<Method>,
    pub lhs_steps: usize,
    pub seed: u64,
    pub workers: usize,
    pub estimation: EstimationSettings,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dims: vec![3, 6],
            n_paths: 20,
            points_per_dim: 10,
            variance: 1.0,
            range: 0.2,
            family: KernelFamily::Gaussian,
            methods: vec![Method::RlmAdditive, Method::UlmAdditive],
            lhs_steps: DEFAULT_LHS_STEPS,
            seed: 0,
            workers: 0,
            estimation: EstimationSettings::default(),
        }
    }
}

/// Outcome of one (design or path, method) estimation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub method: Method,
    pub d: usize,
    /// Seed of the design (and path) this run was fitted on.
    pub seed: u64,
    pub q2: Option<f64>,
    pub tau2_final: Option<f64>,
    pub n_calls_total: Option<usize>,
    pub l_final: Option<f64>,
    pub converged: Option<bool>,
    pub params: Option<HyperParams>,
    pub error: Option<String>,
    #[serde(skip)]
    pub trace: EstimationTrace,
}

impl RunRecord {
    fn new(run_id: String, method: Method, d: usize, seed: u64) -> Self {
        Self {
            run_id,
            method,
            d,
            seed,
            q2: None,
            tau2_final: None,
            n_calls_total: None,
            l_final: None,
            converged: None,
            params: None,
            error: None,
            trace: EstimationTrace::default(),
        }
    }

    fn record(&mut self, est: Estimate) {
        self.tau2_final = Some(est.params.noise);
        self.n_calls_total = Some(est.trace.total_calls());
        self.l_final = Some(est.value);
        self.converged = Some(est.converged);
        self.params = Some(est.params);
        self.trace = est.trace;
    }

    fn fail(&mut self, e: Error) {
        self.error = Some(e.to_string());
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Aggregates over the successful runs of one method at one dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub d: usize,
    pub n_runs: usize,
    pub n_failed: usize,
    pub mean_q2: Option<f64>,
    pub sd_q2: Option<f64>,
    pub mean_tau2: Option<f64>,
    pub median_l_final: Option<f64>,
    pub median_calls: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    /// Sampling jitter relative to `tr(K)/n`, for path studies.
    pub path_jitter_rel: Option<f64>,
    pub summaries: Vec<MethodSummary>,
    pub runs: Vec<RunRecord>,
    /// Every dataset the runs were fitted on.
    #[serde(skip)]
    pub datasets: Vec<StudyDataset>,
}

/// A seeded design with its responses.
#[derive(Clone, Debug)]
pub struct StudyDataset {
    pub id: String,
    pub seed: u64,
    pub dataset: Dataset,
}

/// Independent 64-bit seed for stream `stream` of a run seeded by `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.random()
}

const TEST_SAMPLE_STREAM: u64 = u64::MAX;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sample_sd(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    (v.len() >= 2).then(|| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

fn summarize(runs: &[RunRecord], methods: &[Method], dims: &[usize]) -> Vec<MethodSummary> {
    let mut out = Vec::new();
    for &d in dims {
        for &method in methods {
            let group: Vec<&RunRecord> = runs.iter().filter(|r| r.method == method && r.d == d).collect();
            let ok: Vec<&&RunRecord> = group.iter().filter(|r| r.succeeded()).collect();
            let q2s: Vec<f64> = ok.iter().filter_map(|r| r.q2).collect();
            let tau: Vec<f64> = ok.iter().filter_map(|r| r.tau2_final).collect();
            let ls: Vec<f64> = ok.iter().filter_map(|r| r.l_final).collect();
            let calls: Vec<f64> = ok.iter().filter_map(|r| r.n_calls_total.map(|c| c as f64)).collect();
            out.push(MethodSummary {
                method,
                d,
                n_runs: group.len(),
                n_failed: group.len() - ok.len(),
                mean_q2: mean(&q2s),
                sd_q2: sample_sd(&q2s),
                mean_tau2: mean(&tau),
                median_l_final: median(&ls),
                median_calls: median(&calls),
            });
        }
    }
    out
}

fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

fn check_methods(methods: &[Method]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::invalid("no methods selected"));
    }
    Ok(())
}

/// Q2 study on Sobol's g-function over seeded maximin designs.
///
/// Responses are centered before estimation; all methods and designs
/// share one uniform test sample.
pub fn run_gfunction_benchmark(config: &GFunctionConfig) -> Result<BenchmarkReport> {
    let g = GFunction::new(config.coefficients.clone())?;
    check_methods(&config.methods)?;
    config.estimation.validate()?;
    if config.n_designs == 0 || config.design_size < 2 || config.test_size < 2 {
        return Err(Error::invalid("need n_designs ≥ 1, design_size ≥ 2 and test_size ≥ 2"));
    }
    let d = g.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, TEST_SAMPLE_STREAM));
    let test = DMatrix::from_fn(config.test_size, d, |_, _| rng.random::<f64>());
    let test_y: Vec<f64> = test
        .row_iter()
        .map(|r| g.eval(&r.iter().copied().collect::<Vec<_>>()))
        .collect::<Result<_>>()?;

    let datasets: Vec<(u64, Result<Dataset>)> = (0..config.n_designs)
        .map(|j| {
            let seed = derive_seed(config.seed, j as u64);
            let ds = lhs_maximin(config.design_size, d, seed, config.lhs_steps).and_then(|x| {
                let y = x
                    .row_iter()
                    .map(|r| g.eval(&r.iter().copied().collect::<Vec<_>>()))
                    .collect::<Result<Vec<_>>>()?;
                Dataset::new(x, y.into())
            });
            (seed, ds)
        })
        .collect();
    let jobs: Vec<(usize, Method)> = (0..config.n_designs)
        .flat_map(|j| config.methods.iter().map(move |&m| (j, m)))
        .collect();
    let runs = with_workers(config.workers, || {
        jobs.par_iter()
            .map(|&(j, method)| {
                let (seed, ds) = &datasets[j];
                let mut rec = RunRecord::new(format!("design{j:02}-{method}"), method, d, *seed);
                let outcome = ds.as_ref().map_err(|e| Error::invalid(e.to_string())).and_then(|ds| {
                    let (centered, _) = ds.centered();
                    let est = config.estimation.estimate(method, &centered, config.family, *seed)?;
                    let kernel = est.params.kernel(config.family, method.composition())?;
                    let gp = FittedGp::fit_centered(&kernel, ds, est.params.noise)?;
                    let pred: Vec<f64> = gp.predict_many(&test)?.into_iter().map(|(m, _)| m).collect();
                    Ok((est, q2(&test_y, &pred)?))
                });
                match outcome {
                    Ok((est, q)) => {
                        rec.record(est);
                        rec.q2 = Some(q);
                    }
                    Err(e) => rec.fail(e),
                }
                rec
            })
            .collect::<Vec<_>>()
    })?;
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: "gfunction".into(),
        seed: config.seed,
        path_jitter_rel: None,
        summaries: summarize(&runs, &config.methods, &[d]),
        runs,
        datasets: datasets
            .into_iter()
            .enumerate()
            .filter_map(|(j, (seed, ds))| {
                ds.ok().map(|dataset| StudyDataset {
                    id: format!("design{j:02}"),
                    seed,
                    dataset,
                })
            })
            .collect(),
    })
}

/// Likelihood study on sampled additive-GP paths.
///
/// Each path is a zero-mean draw, so responses are used as given.
pub fn run_paths_benchmark(config: &PathsConfig) -> Result<BenchmarkReport> {
    check_methods(&config.methods)?;
    config.estimation.validate()?;
    if config.methods.contains(&Method::UlmTensor) {
        return Err(Error::invalid("the path study compares additive estimators only"));
    }
    if config.dims.is_empty() || config.dims.contains(&0) || config.n_paths == 0 || config.points_per_dim == 0 {
        return Err(Error::invalid("need positive dims, n_paths and points_per_dim"));
    }
    let mut jobs = Vec::new();
    for &d in &config.dims {
        for p in 0..config.n_paths {
            for &m in &config.methods {
                jobs.push((d, p, m));
            }
        }
    }
    let path_seed = |d: usize, p: usize| derive_seed(config.seed, ((d as u64) << 32) | p as u64);
    let sample = |d: usize, p: usize| -> Result<Dataset> {
        let seed = path_seed(d, p);
        let kernel = Kernel::additive(config.family, &vec![config.variance; d], &vec![config.range; d])?;
        let x = lhs_maximin(config.points_per_dim * d, d, seed, config.lhs_steps)?;
        let y = sample_gp_path(&kernel, &x, derive_seed(seed, 1))?;
        Dataset::new(x, y)
    };
    let paths: Vec<(usize, usize)> = config
        .dims
        .iter()
        .flat_map(|&d| (0..config.n_paths).map(move |p| (d, p)))
        .collect();
    let (samples, runs) = with_workers(config.workers, || {
        let samples: Vec<Result<Dataset>> = paths.par_iter().map(|&(d, p)| sample(d, p)).collect();
        let index = |d: usize, p: usize| paths.iter().position(|&q| q == (d, p)).expect("path enumerated");
        let runs = jobs
            .par_iter()
            .map(|&(d, p, method)| {
                let seed = path_seed(d, p);
                let mut rec = RunRecord::new(format!("d{d:02}-path{p:02}-{method}"), method, d, seed);
                let outcome = samples[index(d, p)]
                    .as_ref()
                    .map_err(|e| Error::invalid(e.to_string()))
                    .and_then(|ds| config.estimation.estimate(method, ds, config.family, seed));
                match outcome {
                    Ok(est) => rec.record(est),
                    Err(e) => rec.fail(e),
                }
                rec
            })
            .collect::<Vec<_>>();
        (samples, runs)
    })?;
    let datasets = paths
        .iter()
        .zip(samples)
        .filter_map(|(&(d, p), ds)| {
            ds.ok().map(|dataset| StudyDataset {
                id: format!("d{d:02}-path{p:02}"),
                seed: path_seed(d, p),
                dataset,
            })
        })
        .collect();
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: "paths".into(),
        seed: config.seed,
        path_jitter_rel: Some(PATH_JITTER_REL),
        summaries: summarize(&runs, &config.methods, &config.dims),
        runs,
        datasets,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchmarkReport {
    pub fn runs_for(&self, method: Method, d: usize) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.method == method && r.d == d)
    }

    pub fn summary(&self, method: Method, d: usize) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method && s.d == d)
    }

    /// `run_id,method,d,seed,q2,tau2_final,n_calls_total,l_final`; failed
    /// runs leave the numeric fields empty.
    pub fn write_runs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "run_id",
            "method",
            "d",
            "seed",
            "q2",
            "tau2_final",
            "n_calls_total",
            "l_final",
        ])?;
        for r in &self.runs {
            w.write_record([
                r.run_id.clone(),
                r.method.to_string(),
                r.d.to_string(),
                r.seed.to_string(),
                opt(r.q2),
                opt(r.tau2_final),
                opt(r.n_calls_total),
                opt(r.l_final),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Concatenated estimation traces of every successful run.
    pub fn write_traces_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(EstimationTrace::CSV_HEADER)?;
        for r in self.runs.iter().filter(|r| r.succeeded()) {
            r.trace.write_csv_rows(&r.run_id, &mut w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Best value against call count, one row per improving call.
    pub fn write_convergence_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["run_id", "method", "d", "n_calls", "best_value"])?;
        for r in self.runs.iter().filter(|r| r.succeeded()) {
            let mut last = f64::INFINITY;
            for (i, &v) in r.trace.best_by_call.iter().enumerate() {
                if v < last {
                    w.write_record([
                        r.run_id.clone(),
                        r.method.to_string(),
                        r.d.to_string(),
                        (i + 1).to_string(),
                        v.to_string(),
                    ])?;
                    last = v;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `design_id,seed,point,x1..xD,y` with `D` the largest dimension;
    /// unused coordinates are empty.
    pub fn write_designs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let width = self.datasets.iter().map(|s| s.dataset.dims()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["design_id".to_string(), "seed".into(), "point".into()];
        header.extend((1..=width).map(|k| format!("x{k}")));
        header.push("y".into());
        w.write_record(&header)?;
        for s in &self.datasets {
            let ds = &s.dataset;
            for i in 0..ds.len() {
                let mut row = vec![s.id.clone(), s.seed.to_string(), (i + 1).to_string()];
                row.extend((0..width).map(|k| {
                    if k < ds.dims() {
                        ds.design()[(i, k)].to_string()
                    } else {
                        String::new()
                    }
                }));
                row.push(ds.response()[i].to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, writer: W) -> Result<()> {
        let mut writer = writer;
        serde_json::to_writer_pretty(&mut writer, self)?;
        writeln!(writer)?;
        Ok(())
    }
}
