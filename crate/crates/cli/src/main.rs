//! Command-line front end: fit PLS on CSV data, run seeded Monte Carlo MSEP
//! experiments, evaluate optimality criteria, and demo the trace-rule
//! identities.
//!
//! Exit codes: 0 success, 2 input/config error, 3 numerical precondition
//! failure, 4 experiment skip-policy violation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use plsopt_core::born::{
    born_expectation, born_expectation_double_sum, criterion46_via_born, DensityOperator,
    ScalarMap, SpectralOperator,
};
use plsopt_core::estimators::EstimatorSpec;
use plsopt_core::model::{reduce_to_theta, relevant_component_count, AlternativeReduction};
use plsopt_core::optimality::{
    assumption_a, corollary2_check, thm5_criterion, CriterionName, CriterionReport, GammaPrior,
};
use plsopt_core::sample::{fit_pls, Dataset};
use plsopt_core::simulation::{msep_experiment_with, DesignSpec, ExperimentOptions, McResult};
use plsopt_core::{EstimatorError, FullParameter, PlsError};

#[derive(Parser)]
#[command(name = "plsopt", version, about = "Linear-prediction model reduction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the a-component PLS estimator on a CSV dataset.
    Fit(FitArgs),
    /// Run a seeded Monte Carlo MSEP experiment from a JSON config.
    Simulate(SimulateArgs),
    /// Evaluate optimality criteria for a stored population.
    Criteria(CriteriaArgs),
    /// Print the non-informative-state identity checks.
    BornDemo(BornDemoArgs),
}

#[derive(Args)]
struct FitArgs {
    /// CSV file: first p columns predictors, last column response.
    #[arg(long)]
    csv: PathBuf,
    /// Number of PLS components.
    #[arg(long)]
    a: usize,
    /// Treat the first CSV row as a header.
    #[arg(long)]
    header: bool,
    /// Also produce a k-fold cross-validation MSEP table for a = 1..=MAX.
    #[arg(long, value_name = "MAX")]
    cv_max_a: Option<usize>,
    /// Folds for the cross-validation table.
    #[arg(long, default_value_t = 5)]
    cv_folds: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Generator seed; the experiment is a deterministic function of it.
    #[arg(long)]
    seed: u64,
    /// Worker threads for the replicate pool (default: all cores). Results
    /// do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for results.csv / results.json.
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    format: OutputFormat,
}

#[derive(Args)]
struct CriteriaArgs {
    /// Population file (JSON with sigma_xx, sigma_xy, sigma2).
    #[arg(long)]
    population: Option<PathBuf>,
    /// Rival reduction file (JSON with a `zeta` array on the eigenbasis).
    #[arg(long)]
    eta: Option<PathBuf>,
    /// Variance-criterion config (JSON with prior, lambdas, irrelevant_gamma).
    #[arg(long)]
    thm5_config: Option<PathBuf>,
    /// Restrict the report to one criterion.
    #[arg(long)]
    criterion: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BornDemoArgs {
    /// Operator dimension for the identity checks.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Base grid size for the variance-criterion convergence sweep.
    #[arg(long, default_value_t = 64)]
    grid: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
    Both,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    fn policy(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Criteria(args) => cmd_criteria(args),
        Command::BornDemo(args) => cmd_born_demo(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

// ---------------------------------------------------------------------------
// fit

#[derive(Serialize)]
struct FitReport {
    a: usize,
    beta_hat: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv_table: Option<Vec<CvRow>>,
}

#[derive(Serialize)]
struct CvRow {
    a: usize,
    msep: Option<f64>,
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let data = Dataset::from_csv(&args.csv, args.header)
        .map_err(|e| Failure::input(format!("{}: {e}", args.csv.display())))?;
    let fit = fit_pls(&data, args.a).map_err(map_pls_error)?;
    let cv_table = match args.cv_max_a {
        Some(max_a) => Some(cv_table(&data, max_a, args.cv_folds)?),
        None => None,
    };
    let report = FitReport {
        a: fit.a,
        beta_hat: fit.beta_hat.iter().copied().collect(),
        x_mean: fit.x_mean.iter().copied().collect(),
        y_mean: fit.y_mean,
        cv_table,
    };
    let text = serde_json::to_string_pretty(&report).expect("plain data serializes");
    emit(args.output.as_deref(), &text)
}

fn map_pls_error(e: PlsError) -> Failure {
    match e {
        PlsError::RankDeficientKrylov { .. }
        | PlsError::DegenerateScore { .. }
        | PlsError::SingularGram => Failure::numeric(e.to_string()),
        other => Failure::input(other.to_string()),
    }
}

/// Deterministic k-fold MSEP table over the component grid; folds are taken
/// by row index stride. Component counts the folds cannot support are
/// reported with a null MSEP.
fn cv_table(data: &Dataset, max_a: usize, folds: usize) -> Result<Vec<CvRow>, Failure> {
    if folds < 2 || folds > data.n() {
        return Err(Failure::input(format!(
            "cv folds must be in 2..=n, got {folds}"
        )));
    }
    if max_a == 0 || max_a > data.p() {
        return Err(Failure::input(format!(
            "cv component grid must be in 1..=p, got {max_a}"
        )));
    }
    let n = data.n();
    let mut rows = Vec::with_capacity(max_a);
    for a in 1..=max_a {
        let mut sq_err = 0.0f64;
        let mut count = 0usize;
        let mut feasible = true;
        for fold in 0..folds {
            let train_rows: Vec<usize> = (0..n).filter(|i| i % folds != fold).collect();
            let test_rows: Vec<usize> = (0..n).filter(|i| i % folds == fold).collect();
            if train_rows.len() < 2 || test_rows.is_empty() {
                feasible = false;
                break;
            }
            let train = Dataset::new(
                data.x().select_rows(&train_rows),
                data.y().select_rows(&train_rows),
            )
            .map_err(|e| Failure::input(e.to_string()))?;
            match fit_pls(&train, a) {
                Ok(fit) => {
                    for &i in &test_rows {
                        let pred = fit
                            .predict(&data.x().row(i).transpose())
                            .map_err(map_pls_error)?;
                        let d = data.y()[i] - pred;
                        sq_err += d * d;
                        count += 1;
                    }
                }
                Err(PlsError::RankDeficientKrylov { .. }) => {
                    feasible = false;
                    break;
                }
                Err(e) => return Err(map_pls_error(e)),
            }
        }
        rows.push(CvRow {
            a,
            msep: if feasible && count > 0 {
                Some(sq_err / count as f64)
            } else {
                None
            },
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Deserialize)]
struct ExperimentConfig {
    design: DesignSpec,
    estimators: Vec<String>,
    replicates: usize,
    #[serde(default)]
    criteria: Vec<String>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::input(format!("thread pool: {e}")))?;
    }
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::input(format!("{}: {e}", args.config.display())))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("config: {e}")))?;
    config.design.seed = args.seed;
    let estimators: Vec<EstimatorSpec> = config
        .estimators
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, EstimatorError>>()
        .map_err(|e| Failure::input(e.to_string()))?;
    let mut attach_criteria = false;
    for name in &config.criteria {
        let parsed: CriterionName = name
            .parse()
            .map_err(|e: String| Failure::input(format!("config: {e}")))?;
        match parsed {
            CriterionName::Thm6Eq31 | CriterionName::Thm7Eq47 => {
                if !estimators.iter().any(|e| matches!(e, EstimatorSpec::Pls(_))) {
                    return Err(Failure::input(
                        "estimator-level criteria need a pls:<a> entry in the estimator list"
                            .into(),
                    ));
                }
                attach_criteria = true;
            }
            other => {
                return Err(Failure::input(format!(
                    "criterion {other} is population-level; use the criteria subcommand"
                )));
            }
        }
    }
    let opts = ExperimentOptions {
        replicates: config.replicates,
        attach_criteria,
        ..ExperimentOptions::new(config.replicates)
    };
    let results = msep_experiment_with(&config.design, &estimators, opts).map_err(|e| match e {
        plsopt_core::SimError::TooManySkips { .. } => Failure::policy(e.to_string()),
        plsopt_core::SimError::InvalidSpec(_) => Failure::input(e.to_string()),
        other => Failure::numeric(other.to_string()),
    })?;
    std::fs::create_dir_all(&args.output_dir)
        .map_err(|e| Failure::input(format!("{}: {e}", args.output_dir.display())))?;
    if matches!(args.format, OutputFormat::Csv | OutputFormat::Both) {
        let path = args.output_dir.join("results.csv");
        std::fs::write(&path, results_csv(&results))
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    if matches!(args.format, OutputFormat::Json | OutputFormat::Both) {
        let path = args.output_dir.join("results.json");
        let mut text = serde_json::to_string_pretty(&results).expect("plain data serializes");
        text.push('\n');
        std::fs::write(&path, text)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn results_csv(results: &[McResult]) -> String {
    let mut out = String::from(
        "estimator,msep_mean,msep_stderr,replicates,criterion_name,lhs,rhs,margin,satisfied\n",
    );
    for r in results {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.estimator, r.msep_mean, r.msep_stderr, r.n_replicates
        );
        match &r.criterion {
            Some(c) => {
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{}",
                    c.name, c.lhs, c.rhs, c.margin, c.satisfied
                );
            }
            None => out.push_str(",,,,,\n"),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// criteria

#[derive(Deserialize)]
struct EtaFile {
    zeta: Vec<f64>,
}

#[derive(Deserialize)]
struct Thm5Config {
    prior: GammaPrior,
    lambdas: Vec<f64>,
    irrelevant_gamma: Vec<f64>,
}

fn cmd_criteria(args: CriteriaArgs) -> Result<(), Failure> {
    let wanted: Option<CriterionName> = match &args.criterion {
        Some(name) => Some(
            name.parse()
                .map_err(|e: String| Failure::input(e))?,
        ),
        None => None,
    };
    let mut reports: Vec<CriterionReport> = Vec::new();
    if let Some(eta_path) = &args.eta {
        let pop_path = args.population.as_ref().ok_or_else(|| {
            Failure::input("--eta needs --population for the spectral basis".to_string())
        })?;
        let phi = load_population(pop_path)?;
        let eta_file: EtaFile = load_json(eta_path)?;
        let eta = AlternativeReduction::new(DVector::from_vec(eta_file.zeta))
            .map_err(|e| Failure::input(e.to_string()))?;
        let m = relevant_component_count(&phi);
        let theta = reduce_to_theta(&phi, m).map_err(|e| Failure::numeric(e.to_string()))?;
        if wanted.is_none() || wanted == Some(CriterionName::AssumptionA) {
            reports.push(
                assumption_a(&phi, &theta, &eta).map_err(|e| Failure::numeric(e.to_string()))?,
            );
        }
        if wanted.is_none() || wanted == Some(CriterionName::Cor2) {
            reports.push(
                corollary2_check(&phi, &theta, &eta)
                    .map_err(|e| Failure::numeric(e.to_string()))?,
            );
        }
    }
    if let Some(t5_path) = &args.thm5_config {
        if wanted.is_none() || wanted == Some(CriterionName::Thm5Eq46) {
            let cfg: Thm5Config = load_json(t5_path)?;
            reports.push(
                thm5_criterion(&cfg.prior, &cfg.lambdas, &cfg.irrelevant_gamma)
                    .map_err(|e| Failure::input(e.to_string()))?,
            );
        }
    }
    if reports.is_empty() {
        return Err(Failure::input(
            "nothing to evaluate: pass --eta (with --population) and/or --thm5-config".to_string(),
        ));
    }
    let text = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0]).expect("plain data serializes")
    } else {
        serde_json::to_string_pretty(&reports).expect("plain data serializes")
    };
    emit(args.output.as_deref(), &text)
}

fn load_population(path: &Path) -> Result<FullParameter, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    FullParameter::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// born-demo

fn cmd_born_demo(args: BornDemoArgs) -> Result<(), Failure> {
    use plsopt_core::optimality::{GammaDist, GammaPrior};
    let r = args.dim.max(2);
    // deterministic spread of eigenvalues for the identity check
    let eigenvalues: Vec<f64> = (0..r).map(|i| (i as f64 + 1.0) / r as f64 * 2.0 - 0.5).collect();
    let op = SpectralOperator::from_real_diagonal(&eigenvalues);
    let rho = DensityOperator::uniform(r);
    let identity = ScalarMap::Fn(&|x| x);
    let expect = born_expectation(&rho, &op, &identity)
        .map_err(|e| Failure::numeric(e.to_string()))?;
    let mean = eigenvalues.iter().sum::<f64>() / r as f64;
    println!(
        "uniform-state expectation vs eigenvalue mean: {expect} vs {mean} (|diff| = {:e})",
        (expect - mean).abs()
    );
    let oracle = born_expectation_double_sum(&rho, &op, &identity)
        .map_err(|e| Failure::numeric(e.to_string()))?;
    println!(
        "trace rule vs outcome double sum:             {expect} vs {oracle} (|diff| = {:e})",
        (expect - oracle).abs()
    );
    let prior = GammaPrior::independent(vec![GammaDist::Normal { mean: 0.0, sd: 1.0 }])
        .map_err(|e| Failure::input(e.to_string()))?;
    println!("variance criterion via discretized states, normal prior (target 1):");
    let mut grid = args.grid.max(8);
    for _ in 0..4 {
        let v = criterion46_via_born(&prior, &[1.0], grid)
            .map_err(|e| Failure::numeric(e.to_string()))?;
        println!("  grid {grid:5}: value {v:.9} (error {:.3e})", (v - 1.0).abs());
        grid *= 2;
    }
    Ok(())
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n"))
            .map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
