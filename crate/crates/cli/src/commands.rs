use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use akrig::benchmark::{
    run_gfunction_benchmark, run_paths_benchmark, BenchmarkReport, EstimationSettings, GFunctionConfig, PathsConfig,
};
use akrig::dataset::read_points_csv;
use akrig::{
    additivity_ratio, detect_degenerate_design, Composition, Dataset, DegeneracyReport, Error, FittedGp, Kernel,
    KernelFamily, Method,
};

use crate::{
    BenchArgs, CompositionArg, EffectsArgs, Experiment, FitArgs, KernelArg, MethodArg, PredictArgs, EXIT_INPUT,
    EXIT_NUMERICAL, EXIT_PARTIAL_BENCH,
};

/// Version of the `config.json` echo written by every command.
const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Range of the reference kernel used to screen designs for degeneracy.
const SCREEN_RANGE: f64 = 0.2;

#[derive(Debug)]
struct DegenerateDesign(DegeneracyReport);

impl std::fmt::Display for DegenerateDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let dependent: Vec<usize> = self.0.dependent_point_indices.iter().map(|i| i + 1).collect();
        write!(
            f,
            "degenerate design: rank {} of {}, dependent rows {:?} (pass --allow-degenerate to fit anyway)",
            self.0.rank, self.0.size, dependent
        )
    }
}

impl std::error::Error for DegenerateDesign {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::CholeskyFailure { .. }
                | Error::NotPositiveDefinite
                | Error::QuadratureNonConvergence(_)
                | Error::Internal(_)
                | Error::NoFiniteEvaluation => EXIT_NUMERICAL,
                _ => EXIT_INPUT,
            };
        }
    }
    EXIT_INPUT
}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidInput(msg.into()).into()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)
        .map_err(Error::from)
        .with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(Error::from)
        .with_context(|| format!("cannot parse {}", path.display()))
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(Error::from)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn load_model(path: &Path) -> Result<FittedGp> {
    let file = File::open(path)
        .map_err(Error::from)
        .with_context(|| format!("cannot open {}", path.display()))?;
    FittedGp::read_json(std::io::BufReader::new(file)).with_context(|| format!("cannot load model {}", path.display()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitFile {
    data: Option<PathBuf>,
    kernel: Option<KernelArg>,
    composition: Option<CompositionArg>,
    method: Option<MethodArg>,
    seed: Option<u64>,
    allow_degenerate: Option<bool>,
    estimation: Option<EstimationSettings>,
}

#[derive(Debug, Serialize)]
struct FitConfig {
    schema_version: u32,
    command: &'static str,
    data: PathBuf,
    kernel: KernelArg,
    composition: CompositionArg,
    method: MethodArg,
    seed: u64,
    allow_degenerate: bool,
    estimation: EstimationSettings,
}

impl FitConfig {
    fn resolve(args: &FitArgs) -> Result<Self> {
        let file: FitFile = match &args.config {
            Some(path) => read_json(path)?,
            None => FitFile::default(),
        };
        let mut estimation = file.estimation.unwrap_or_default();
        if let Some(n) = args.iterations {
            estimation.rlm_iterations = n;
        }
        if let Some(n) = args.restarts {
            estimation.ulm_restarts = n;
        }
        let data = args
            .data
            .clone()
            .or(file.data)
            .ok_or_else(|| input_error("no dataset given (use --data or the config file)"))?;
        Ok(Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            command: "fit",
            data,
            kernel: args.kernel.or(file.kernel).unwrap_or(KernelArg::Matern32),
            composition: args
                .composition
                .or(file.composition)
                .unwrap_or(CompositionArg::Additive),
            method: args.method.or(file.method).unwrap_or(MethodArg::Rlm),
            seed: args.seed.or(file.seed).unwrap_or(0),
            allow_degenerate: args.allow_degenerate || file.allow_degenerate.unwrap_or(false),
            estimation,
        })
    }

    fn method(&self) -> Result<Method> {
        match (self.method, self.composition) {
            (MethodArg::Rlm, CompositionArg::Additive) => Ok(Method::RlmAdditive),
            (MethodArg::Rlm, CompositionArg::Tensor) => {
                Err(input_error("rlm estimation needs the additive composition"))
            }
            (MethodArg::Ulm, CompositionArg::Additive) => Ok(Method::UlmAdditive),
            (MethodArg::Ulm, CompositionArg::Tensor) => Ok(Method::UlmTensor),
        }
    }
}

#[derive(Serialize)]
struct EstimateSummary<'a> {
    schema_version: u32,
    method: Method,
    kernel: KernelFamily,
    composition: Composition,
    params: &'a akrig::HyperParams,
    l: f64,
    tau2: f64,
    additivity_ratio: f64,
    converged: bool,
    n_calls: usize,
}

pub fn fit(args: FitArgs) -> Result<u8> {
    let cfg = FitConfig::resolve(&args)?;
    let method = cfg.method()?;
    if cfg.estimation.rlm_iterations == 0 {
        return Err(input_error("--iterations must be at least 1"));
    }
    let family = KernelFamily::from(cfg.kernel);
    let composition = Composition::from(cfg.composition);
    let dataset =
        Dataset::read_csv(&cfg.data).with_context(|| format!("cannot read dataset {}", cfg.data.display()))?;
    prepare_out(&args.out)?;
    write_json(&args.out, "config.json", &cfg)?;

    let d = dataset.dims();
    let screen = Kernel::new(
        KernelFamily::Matern32,
        composition,
        &vec![1.0; d],
        &vec![SCREEN_RANGE; d],
    )?;
    let report = detect_degenerate_design(&screen, dataset.design(), 0.0, None)?;
    if !report.is_full_rank() {
        eprintln!("{}", serde_json::to_string_pretty(&report)?);
        if !cfg.allow_degenerate {
            return Err(DegenerateDesign(report).into());
        }
        eprintln!("warning: design is degenerate; fitting anyway");
    }

    let (centered, _) = dataset.centered();
    let est = cfg.estimation.estimate(method, &centered, family, cfg.seed)?;
    let kernel = est.params.kernel(family, composition)?;
    let gp = FittedGp::fit_centered(&kernel, &dataset, est.params.noise)?;

    let mut w = create(&args.out, "model.json")?;
    gp.write_json(&mut w)?;
    w.flush()?;
    let mut w = create(&args.out, "trace.csv")?;
    est.trace.write_csv("fit", &mut w)?;
    w.flush()?;

    let ratio = additivity_ratio(&est.params)?;
    write_json(
        &args.out,
        "estimate.json",
        &EstimateSummary {
            schema_version: CONFIG_SCHEMA_VERSION,
            method,
            kernel: family,
            composition,
            params: &est.params,
            l: est.value,
            tau2: est.params.noise,
            additivity_ratio: ratio,
            converged: est.converged,
            n_calls: est.trace.total_calls(),
        },
    )?;

    println!("l = {}", est.value);
    println!("tau2 = {}", est.params.noise);
    println!("additivity_ratio = {ratio}");
    println!("calls = {}", est.trace.total_calls());
    if !est.converged {
        eprintln!("warning: optimizer budget exhausted before convergence; artifacts written");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(0)
}

#[derive(Serialize)]
struct PredictConfig<'a> {
    schema_version: u32,
    command: &'static str,
    model: &'a Path,
    points: &'a Path,
}

pub fn predict(args: PredictArgs) -> Result<u8> {
    let gp = load_model(&args.model)?;
    let file = File::open(&args.points)
        .map_err(Error::from)
        .with_context(|| format!("cannot open {}", args.points.display()))?;
    let points = read_points_csv(std::io::BufReader::new(file))
        .with_context(|| format!("cannot read points {}", args.points.display()))?;
    let preds = gp.predict_many(&points)?;
    prepare_out(&args.out)?;
    write_json(
        &args.out,
        "config.json",
        &PredictConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            command: "predict",
            model: &args.model,
            points: &args.points,
        },
    )?;
    let mut w = csv::Writer::from_writer(create(&args.out, "predictions.csv")?);
    w.write_record(["mean", "variance"])?;
    for (m, v) in preds {
        w.write_record([m.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(0)
}

#[derive(Serialize)]
struct EffectsConfig<'a> {
    schema_version: u32,
    command: &'static str,
    model: &'a Path,
    direction: usize,
    grid_size: usize,
}

pub fn effects(args: EffectsArgs) -> Result<u8> {
    let gp = load_model(&args.model)?;
    let d = gp.dims();
    if args.direction == 0 || args.direction > d {
        return Err(input_error(format!("--direction must be in 1..={d}")));
    }
    if args.grid_size < 2 {
        return Err(input_error("--grid-size must be at least 2"));
    }
    let i = args.direction - 1;
    let step = 1.0 / (args.grid_size - 1) as f64;
    let rows = (0..args.grid_size)
        .map(|k| {
            let x = if k + 1 == args.grid_size { 1.0 } else { k as f64 * step };
            let (m, v) = gp.sub_model(i, x)?;
            let (ms, vs) = gp.centered_effect(i, x)?;
            Ok([x, m, v, ms, vs])
        })
        .collect::<akrig::Result<Vec<_>>>()?;
    prepare_out(&args.out)?;
    write_json(
        &args.out,
        "config.json",
        &EffectsConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            command: "effects",
            model: &args.model,
            direction: args.direction,
            grid_size: args.grid_size,
        },
    )?;
    let mut w = csv::Writer::from_writer(create(&args.out, "effects.csv")?);
    w.write_record(["x", "m", "v", "m_star", "v_star"])?;
    for row in rows {
        w.write_record(row.map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(0)
}

#[derive(Serialize)]
#[serde(untagged)]
enum StudyConfig {
    GFunction(GFunctionConfig),
    Paths(PathsConfig),
}

#[derive(Serialize)]
struct BenchConfig {
    schema_version: u32,
    command: &'static str,
    experiment: Experiment,
    config: StudyConfig,
}

fn resolve_workers(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}

pub fn bench(args: BenchArgs) -> Result<u8> {
    let config = match args.experiment {
        Experiment::Gfunction => {
            let mut c: GFunctionConfig = match &args.config {
                Some(p) => read_json(p)?,
                None => GFunctionConfig::default(),
            };
            c.seed = args.seed.unwrap_or(c.seed);
            c.workers = resolve_workers(args.workers.unwrap_or(c.workers));
            StudyConfig::GFunction(c)
        }
        Experiment::Paths => {
            let mut c: PathsConfig = match &args.config {
                Some(p) => read_json(p)?,
                None => PathsConfig::default(),
            };
            c.seed = args.seed.unwrap_or(c.seed);
            c.workers = resolve_workers(args.workers.unwrap_or(c.workers));
            StudyConfig::Paths(c)
        }
    };
    prepare_out(&args.out)?;
    let echo = BenchConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        command: "bench",
        experiment: args.experiment,
        config,
    };
    write_json(&args.out, "config.json", &echo)?;
    let report = match &echo.config {
        StudyConfig::GFunction(c) => run_gfunction_benchmark(c)?,
        StudyConfig::Paths(c) => run_paths_benchmark(c)?,
    };
    write_report(&args.out, &report)?;
    print_summary(&report);
    let failed = report.runs.iter().filter(|r| !r.succeeded()).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} runs failed", report.runs.len());
        return Ok(EXIT_PARTIAL_BENCH);
    }
    Ok(0)
}

fn write_report(out: &Path, report: &BenchmarkReport) -> Result<()> {
    let mut w = create(out, "runs.csv")?;
    report.write_runs_csv(&mut w)?;
    w.flush()?;
    let mut w = create(out, "traces.csv")?;
    report.write_traces_csv(&mut w)?;
    w.flush()?;
    let mut w = create(out, "convergence.csv")?;
    report.write_convergence_csv(&mut w)?;
    w.flush()?;
    let mut w = create(out, "designs.csv")?;
    report.write_designs_csv(&mut w)?;
    w.flush()?;
    let mut w = create(out, "summary.json")?;
    report.write_summary_json(&mut w)?;
    w.flush()?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn print_summary(report: &BenchmarkReport) {
    println!(
        "{:<14} {:>3} {:>5} {:>6} {:>8} {:>8} {:>10} {:>12}",
        "method", "d", "runs", "failed", "mean_q2", "sd_q2", "mean_tau2", "median_l"
    );
    for s in &report.summaries {
        println!(
            "{:<14} {:>3} {:>5} {:>6} {:>8} {:>8} {:>10} {:>12}",
            s.method.label(),
            s.d,
            s.n_runs,
            s.n_failed,
            fmt_opt(s.mean_q2),
            fmt_opt(s.sd_q2),
            fmt_opt(s.mean_tau2),
            fmt_opt(s.median_l_final)
        );
    }
}
