//! `gem` command-line driver.
//!
//! Exit codes: 0 on success, 1 when a computation fails (with a JSON error
//! object on standard error), 2 on a usage error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gem_core::bounds::{self, BoundInputs, OlsBoundMode, TailSpec};
use gem_core::estimators::{fit_fsr, fit_ols, fit_penalized, FsrConfig, Penalty, PenaltySpec, SolverConfig};
use gem_core::selector::{lambda_grid, select, LambdaGrid, SelectOptions, SelectionMode, TestScaling};
use gem_core::sim::{self, EstimatorKind, SimConfig, StudySelection};
use gem_core::{metrics, Dataset, Error};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Parser, Serialize)]
#[command(name = "gem", version, about = "Penalized regression with generalization-error model selection")]
struct Cli {
    /// Seed for every random choice (splits, folds, simulated data).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for parallel sections; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Write artifacts and `manifest.json` here instead of printing JSON.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
enum Command {
    /// Fit one estimator at a fixed penalty.
    Fit(FitArgs),
    /// Choose λ by validation or cross-validation.
    Select(SelectArgs),
    /// Evaluate a generalization-error bound.
    Bound(BoundArgs),
    /// Number of folds minimizing the expected bound.
    OptimalK(OptimalKArgs),
    /// Monte Carlo comparison of estimators on the equicorrelated design.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum EstimatorArg {
    Lasso,
    Ridge,
    Bridge,
    Ols,
    Fsr,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Bridge exponent, > 1.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PenaltyArg {
    Lasso,
    Ridge,
    Bridge,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ScalingArg {
    Independent,
    Train,
}

#[derive(Debug, Args, Serialize)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "lasso")]
    penalty: PenaltyArg,
    #[arg(long)]
    gamma: Option<f64>,
    /// K-fold cross-validation; validation is used otherwise.
    #[arg(long, conflicts_with = "ratio")]
    cv: Option<usize>,
    /// Training share of the validation split.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long, default_value_t = 100)]
    grid_points: usize,
    #[arg(long, default_value_t = 1e-4)]
    min_ratio: f64,
    /// Explicit comma-separated λ values instead of the log grid.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "independent")]
    test_scaling: ScalingArg,
    /// Also bound the distance to the unpenalized fit at this confidence.
    #[arg(long)]
    l2_diff_varpi: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BoundKindArg {
    /// Population error from training error.
    Population,
    /// Held-out error after a single split.
    Validation,
    /// K-fold averaged held-out error; needs `--gaps`, `--n`, `--k`.
    Cv,
    /// Least-squares held-out error under Gaussian noise.
    Gaussian,
    /// Gaussian case averaged over K folds; needs `--n`, `--k`.
    GaussianCv,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TailArg {
    Bounded,
    Light,
    Heavy,
}

#[derive(Debug, Args, Serialize)]
struct BoundArgs {
    #[arg(long, value_enum)]
    kind: BoundKindArg,
    #[arg(long)]
    nt: usize,
    #[arg(long)]
    ns: usize,
    /// Model complexity (VC dimension); `p` for linear models.
    #[arg(long)]
    h: usize,
    #[arg(long, default_value_t = 0.9)]
    varpi: f64,
    /// Confidence slack of the population bound; defaults to `1/nt`.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    ete: f64,
    #[arg(long, value_enum, default_value = "light")]
    tail: TailArg,
    /// Loss ceiling for the bounded tail.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    varq: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    meanq: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Per-fold gaps `eGE_q − eTE_q/(1 − √ε)`, comma separated.
    #[arg(long, value_delimiter = ',')]
    gaps: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
struct OptimalKArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    h: usize,
    #[arg(long)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.9)]
    varpi: f64,
    #[arg(long, default_value_t = 2)]
    kmin: usize,
    #[arg(long, default_value_t = 25)]
    kmax: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PresetArg {
    /// The published lasso versus OLS/FSR comparison; `--sigma2` names the
    /// column (1 or 5, the latter being noise variance 25).
    Published,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Noise variance, or the column label under a preset.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorArg>>,
    #[arg(long, conflicts_with = "ratio")]
    cv: Option<usize>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long, default_value_t = 20)]
    histogram_bins: usize,
}

/// Output of one subcommand: a JSON result plus named CSV artifacts.
struct Outcome {
    result: Value,
    csv: Vec<(&'static str, String)>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Error> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

fn load(path: &Path) -> Result<Dataset, Error> {
    Dataset::load_csv(path)
}

fn cmd_fit(a: &FitArgs) -> Result<Outcome, Error> {
    let data = load(&a.input)?;
    let std = data.standardize()?;
    let fit = match a.estimator {
        EstimatorArg::Ols => fit_ols(&std)?,
        EstimatorArg::Fsr => fit_fsr(&std, &FsrConfig::default_for(&std)),
        e => {
            let penalty = match e {
                EstimatorArg::Lasso => Penalty::Lasso,
                EstimatorArg::Ridge => Penalty::Ridge,
                _ => Penalty::Bridge(a.gamma.ok_or_else(|| invalid("bridge needs --gamma"))?),
            };
            let spec = PenaltySpec::new(penalty, a.lambda)?;
            fit_penalized(&std, spec, None, &SolverConfig::default())?
        }
    };
    let original = fit.to_original_units(&std)?;
    let ete = metrics::ete(&fit, &std)?;
    let names: Vec<&String> = std.names().iter().skip(1).collect();
    let mut csv = String::from("name,standardized,original\n");
    for (j, name) in names.iter().enumerate() {
        csv.push_str(&format!("{name},{},{}\n", fit.b[j], original.b[j]));
    }
    csv.push_str(&format!("(intercept),{},{}\n", fit.intercept, original.intercept));
    Ok(Outcome {
        result: json!({
            "estimator": a.estimator,
            "lambda": a.lambda,
            "standardized": fit,
            "original_units": original,
            "names": names,
            "ete": ete,
            "r2_t": 1.0 - ete,
            "dataset": std.meta(),
        }),
        csv: vec![("coefficients.csv", csv)],
    })
}

fn cmd_select(a: &SelectArgs, seed: u64) -> Result<Outcome, Error> {
    let data = load(&a.input)?;
    let penalty = match a.penalty {
        PenaltyArg::Lasso => Penalty::Lasso,
        PenaltyArg::Ridge => Penalty::Ridge,
        PenaltyArg::Bridge => Penalty::Bridge(a.gamma.ok_or_else(|| invalid("bridge needs --gamma"))?),
    };
    let grid = match &a.lambdas {
        Some(v) => LambdaGrid::from_values(v.clone())?,
        None => lambda_grid(&data.standardize()?, a.grid_points, a.min_ratio)?,
    };
    let mode = match a.cv {
        Some(k) => SelectionMode::Cv { k, seed },
        None => SelectionMode::Validation {
            ratio: a.ratio.unwrap_or(0.8),
            seed,
        },
    };
    let opts = SelectOptions {
        solver: SolverConfig::default(),
        test_scaling: match a.test_scaling {
            ScalingArg::Independent => TestScaling::Independent,
            ScalingArg::Train => TestScaling::TrainConstants,
        },
    };
    let report = select(&data, penalty, &grid, mode, &opts)?;
    let mut result = json!({ "selection": report });
    if let Some(varpi) = a.l2_diff_varpi {
        let l2 = bounds::l2_diff_from_report(&data, &report, varpi, None, &bounds::Curvature::Ordinary)?;
        result["l2_diff"] = to_value(&l2)?;
    }
    Ok(Outcome {
        result,
        csv: vec![("path.csv", report.path_csv())],
    })
}

fn tail_from(a: &BoundArgs) -> Result<TailSpec, Error> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| invalid(format!("{} tail needs --{flag}", tail_name(a.tail))));
    Ok(match a.tail {
        TailArg::Bounded => TailSpec::bounded(need(a.b, "b")?),
        TailArg::Light => TailSpec::light(a.nu.unwrap_or(4.0), need(a.varq, "varq")?),
        TailArg::Heavy => TailSpec::heavy(need(a.nu, "nu")?, need(a.tau, "tau")?, need(a.meanq, "meanq")?),
    })
}

fn tail_name(t: TailArg) -> &'static str {
    match t {
        TailArg::Bounded => "bounded",
        TailArg::Light => "light",
        TailArg::Heavy => "heavy",
    }
}

fn cmd_bound(a: &BoundArgs) -> Result<Outcome, Error> {
    let need_n_k = || -> Result<(usize, usize), Error> {
        Ok((
            a.n.ok_or_else(|| invalid("this bound needs --n"))?,
            a.k.ok_or_else(|| invalid("this bound needs --k"))?,
        ))
    };
    let sigma2 = || a.sigma2.ok_or_else(|| invalid("Gaussian bounds need --sigma2"));
    let report = match a.kind {
        BoundKindArg::Gaussian => bounds::ols_ege_bound(a.ete, a.nt, a.ns, a.h, a.varpi, sigma2()?, OlsBoundMode::Validation)?,
        BoundKindArg::GaussianCv => {
            let (n, k) = need_n_k()?;
            bounds::ols_ege_bound(a.ete, a.nt, a.ns, a.h, a.varpi, sigma2()?, OlsBoundMode::Cv { n, k })?
        }
        kind => {
            let inputs = BoundInputs {
                n_t: a.nt,
                n_s: a.ns,
                h: a.h,
                eta: a.eta.unwrap_or(1.0 / a.nt.max(1) as f64),
                varpi: a.varpi,
                tail: tail_from(a)?,
                ete: a.ete,
            };
            match kind {
                BoundKindArg::Population => bounds::vc_population_bound(&inputs)?,
                BoundKindArg::Validation => bounds::ege_bound_validation(&inputs)?,
                _ => {
                    let (n, k) = need_n_k()?;
                    let gaps = a.gaps.as_ref().ok_or_else(|| invalid("cv bound needs --gaps"))?;
                    let stats = bounds::GapStats::from_gaps(gaps)?;
                    bounds::ege_bound_cv(&inputs, n, k, &stats)?
                }
            }
        }
    };
    let csv = format!("{}\n{}\n", bounds::BoundReport::CSV_HEADER, report.csv_row());
    Ok(Outcome {
        result: to_value(&report)?,
        csv: vec![("bound.csv", csv)],
    })
}

fn cmd_optimal_k(a: &OptimalKArgs) -> Result<Outcome, Error> {
    let res = bounds::optimal_k(a.n, a.h, a.sigma2, a.varpi, a.kmin..=a.kmax)?;
    let mut csv = String::from("k,n_t,epsilon,bias_term,variance_term,objective,vacuous\n");
    for p in &res.curve {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.k, p.n_t, p.epsilon, p.bias_term, p.variance_term, p.objective, p.vacuous
        ));
    }
    Ok(Outcome {
        result: to_value(&res)?,
        csv: vec![("optimal_k.csv", csv)],
    })
}

fn estimator_kind(e: EstimatorArg) -> Result<EstimatorKind, Error> {
    Ok(match e {
        EstimatorArg::Lasso => EstimatorKind::Lasso,
        EstimatorArg::Ridge => EstimatorKind::Ridge,
        EstimatorArg::Ols => EstimatorKind::Ols,
        EstimatorArg::Fsr => EstimatorKind::Fsr,
        EstimatorArg::Bridge => return Err(invalid("simulate supports lasso, ridge, ols and fsr")),
    })
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> Result<Outcome, Error> {
    let mut cfg = match a.preset {
        Some(PresetArg::Published) => SimConfig::published(
            a.p.ok_or_else(|| invalid("the published preset needs --p"))?,
            a.sigma2.ok_or_else(|| invalid("the published preset needs --sigma2"))?,
        )?,
        None => SimConfig {
            sigma2: a.sigma2.unwrap_or(1.0),
            ..SimConfig::default()
        },
    };
    cfg.root_seed = seed;
    if let Some(n) = a.n {
        cfg.n = n;
        cfg.n_holdout = n;
    }
    if let (Some(p), None) = (a.p, a.preset) {
        cfg.p = p;
    }
    if let Some(r) = a.rho {
        cfg.rho_x = r;
    }
    if let Some(r) = a.reps {
        cfg.replications = r;
    }
    if let Some(es) = &a.estimators {
        cfg.estimators = es.iter().map(|&e| estimator_kind(e)).collect::<Result<_, _>>()?;
    }
    if let Some(k) = a.cv {
        cfg.selection = StudySelection::Cv { k };
    } else if let Some(ratio) = a.ratio {
        cfg.selection = StudySelection::Validation { ratio };
    }
    let report = sim::run_study(&cfg)?;
    let manifest: Value = serde_json::from_str(&report.manifest_json()?).map_err(|e| Error::Io(e.to_string()))?;
    Ok(Outcome {
        result: manifest,
        csv: vec![
            ("table.csv", sim::aggregates_csv(&[&report])),
            ("boxplot.csv", report.boxplot_csv()),
            ("gr2_histogram.csv", report.gr2_histogram_csv(a.histogram_bins)),
        ],
    })
}

fn execute(cli: &Cli) -> Result<Outcome, Error> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a, cli.seed),
        Command::Bound(a) => cmd_bound(a),
        Command::OptimalK(a) => cmd_optimal_k(a),
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
    }
}

fn error_kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

fn write_outputs(dir: &Path, manifest: &Value, out: &Outcome) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let pretty = |v: &Value| serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()));
    fs::write(dir.join("manifest.json"), pretty(manifest)? + "\n")?;
    fs::write(dir.join("result.json"), pretty(&out.result)? + "\n")?;
    for (name, body) in &out.csv {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn finish(cli: &Cli, out: Outcome) -> Result<(), Error> {
    let manifest = json!({
        "tool": "gem",
        "version": env!("CARGO_PKG_VERSION"),
        "options": to_value(cli)?,
        "seed": cli.seed,
        "artifacts": out.csv.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
    });
    match &cli.output_dir {
        Some(dir) => {
            write_outputs(dir, &manifest, &out)?;
            println!("{}", json!({ "output_dir": dir, "manifest": dir.join("manifest.json") }));
        }
        None => {
            let csv: serde_json::Map<String, Value> =
                out.csv.iter().map(|(n, b)| (n.to_string(), Value::String(b.clone()))).collect();
            let doc = json!({ "manifest": manifest, "result": out.result, "csv": csv });
            println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?);
        }
    }
    Ok(())
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}", json!({ "error": "ThreadPool", "message": e.to_string() }));
            return 1;
        }
    };
    match pool.install(|| execute(&cli).and_then(|out| finish(&cli, out))) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({ "error": error_kind(&e), "message": e.to_string() }));
            1
        }
    }
}
