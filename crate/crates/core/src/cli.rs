//! The `rmtl` command line: `fit`, `simulate`, `generate`, `predict`,
//! `validate` and `serve`.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data, numerical
//! or I/O failures. Diagnostics go to standard error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{load_dataset, load_profiles, CovariateSchema};
use crate::error::{Error, Result};
use crate::estimator::{backward_stepwise, fit, fit_static, wald_table, write_wald_csv, FitOptions, FittedModel, Link};
use crate::evaluation::{isotonic_increasing, predict_encoded, validate, RangePolicy};
use crate::serve::{serve, ServeConfig};
use crate::simulation::{generate_cohort, run_monte_carlo, MonteCarloConfig, SimulationScenario};
use crate::stacking::{build_stacked, build_time_grid, GridBound, GridConfig, HorizonGrid, TimeBasis, DEFAULT_GRID_POINTS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rmtl", version, about = "Dynamic-effect RMTL regression for competing risks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a cohort CSV and write model JSON plus a Wald table.
    Fit(FitArgs),
    /// Run the Monte Carlo harness for a scenario and write a metrics CSV.
    Simulate(SimulateArgs),
    /// Draw one cohort from a scenario and write it as CSV.
    Generate(GenerateArgs),
    /// Predict RMTL trajectories for patient profiles.
    Predict(PredictArgs),
    /// Score a model on external data: C-index and prediction error per horizon.
    Validate(ValidateArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Lower grid end, a number or `auto` (10th percentile of cause-1 times).
    #[arg(long, default_value = "auto")]
    lmin: GridBound,
    /// Upper grid end, a number or `auto` (95th percentile of cause-1 times).
    #[arg(long, default_value = "auto")]
    lmax: GridBound,
    #[arg(long = "grid-points", default_value_t = DEFAULT_GRID_POINTS)]
    grid_points: usize,
}

impl GridArgs {
    fn config(&self) -> GridConfig {
        GridConfig { l_min: self.lmin, l_max: self.lmax, points: self.grid_points }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "identity")]
    link: Link,
    /// Backward elimination of time-basis terms by Wald p-value.
    #[arg(long)]
    stepwise: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Fit the static model at this single horizon instead of a grid.
    #[arg(long = "static", value_name = "TAU", conflicts_with = "stepwise")]
    static_tau: Option<f64>,
    /// Model JSON destination.
    #[arg(long)]
    out: PathBuf,
    /// Wald table CSV destination (standard output when omitted).
    #[arg(long)]
    wald: Option<PathBuf>,
    /// Also write the stacked dataset as CSV.
    #[arg(long)]
    stacked: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 500)]
    replications: usize,
    /// Horizons at which coefficients are scored.
    #[arg(long = "eval-points", value_delimiter = ',', default_value = "0.75,1,1.5")]
    eval_points: Vec<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "identity")]
    link: Link,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the covariate schema of the cohort as JSON.
    #[arg(long = "schema-out")]
    schema_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HorizonArgs {
    /// Explicit horizons; otherwise an equally spaced grid over the model range.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<f64>>,
    #[arg(long)]
    lmin: Option<f64>,
    #[arg(long)]
    lmax: Option<f64>,
    #[arg(long = "grid-points", default_value_t = DEFAULT_GRID_POINTS)]
    grid_points: usize,
}

impl HorizonArgs {
    fn resolve(&self, model: &FittedModel) -> Result<Vec<f64>> {
        if let Some(h) = &self.horizons {
            return Ok(h.clone());
        }
        let lo = self.lmin.unwrap_or(model.grid.min());
        let hi = self.lmax.unwrap_or(model.grid.max());
        Ok(HorizonGrid::equally_spaced(lo, hi, self.grid_points)?.points().to_vec())
    }
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// A profile object, an array of profiles, or an object of named profiles.
    #[arg(long)]
    profile: PathBuf,
    #[command(flatten)]
    horizons: HorizonArgs,
    /// Project each trajectory onto non-decreasing sequences.
    #[arg(long)]
    isotonic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Validation cohort CSV (same schema as the model).
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    horizons: HorizonArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory of static files served for unmatched paths.
    #[arg(long = "static-dir")]
    static_dir: Option<PathBuf>,
}

/// Parse `argv` (program name first), run the command and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let schema = CovariateSchema::from_json(&read(&a.schema)?)?;
    let data = load_dataset(File::open(&a.data)?, &schema)?;
    let model = if let Some(tau) = a.static_tau {
        fit_static(&data, tau, a.link)?
    } else {
        let grid = build_time_grid(&data, &a.grid.config())?;
        let basis = TimeBasis::full(schema.width());
        if a.stepwise {
            let result = backward_stepwise(&data, &grid, &basis, a.link, a.alpha, FitOptions::default())?;
            for (term, p) in &result.removed {
                eprintln!("stepwise: removed column {} power {} (p = {p:.4})", term.column, term.power);
            }
            result.model
        } else {
            fit(&build_stacked(&data, &grid, &basis)?, a.link, FitOptions::default())?
        }
    };
    if let Some(path) = &a.stacked {
        build_stacked(&data, &model.grid, &model.basis)?.write_csv(File::create(path)?)?;
    }
    std::fs::write(&a.out, model.to_json() + "\n")?;
    write_wald_csv(&wald_table(&model), output(a.wald.as_deref())?)?;
    eprintln!(
        "fitted {} terms on {} subjects x {} horizons (equation norm {:.2e})",
        model.coefficients.len(),
        model.n_subjects,
        model.grid.len(),
        model.convergence.equation_norm
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let scenario = SimulationScenario::from_json(&read(&a.scenario)?)?;
    let mut config = MonteCarloConfig::new(a.replications, a.eval_points, a.seed);
    config.grid = a.grid.config();
    config.link = a.link;
    let table = run_monte_carlo(&scenario, &config)?;
    if table.failures > 0 {
        eprintln!("{} of {} replications failed and were excluded", table.failures, table.replications);
    }
    table.write_csv(output(a.out.as_deref())?)
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let scenario = SimulationScenario::from_json(&read(&a.scenario)?)?;
    let data = generate_cohort(&scenario, a.seed)?;
    if let Some(path) = &a.schema_out {
        std::fs::write(path, serde_json::to_string_pretty(data.schema())? + "\n")?;
    }
    data.write_csv(output(a.out.as_deref())?)
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = FittedModel::from_json(&read(&a.model)?)?;
    let profiles = load_profiles(&read(&a.profile)?)?;
    let horizons = a.horizons.resolve(&model)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["profile", "l", "rmtl", "se", "ci_lower", "ci_upper"])?;
    for (name, profile) in &profiles {
        let z = model
            .schema
            .encode_profile(profile)
            .map_err(|e| Error::InvalidInput(format!("profile {name}: {e}")))?;
        let mut points = horizons
            .iter()
            .map(|&l| predict_encoded(&model, &z, l, RangePolicy::Strict))
            .collect::<Result<Vec<_>>>()?;
        if a.isotonic {
            let fitted = isotonic_increasing(&points.iter().map(|p| p.rmtl).collect::<Vec<_>>());
            for (p, v) in points.iter_mut().zip(fitted) {
                let shift = v - p.rmtl;
                p.rmtl = v;
                p.ci_lower += shift;
                p.ci_upper += shift;
            }
        }
        for p in points {
            w.write_record([
                name.clone(),
                format!("{}", p.l),
                format!("{:.6}", p.rmtl),
                format!("{:.6}", p.se),
                format!("{:.6}", p.ci_lower),
                format!("{:.6}", p.ci_upper),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let model = FittedModel::from_json(&read(&a.model)?)?;
    let data = load_dataset(File::open(&a.data)?, &model.schema)?;
    let horizons = a.horizons.resolve(&model)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["l", "c_index", "prediction_error"])?;
    for p in validate(&model, &data, &horizons)? {
        w.write_record([format!("{}", p.l), format!("{:.6}", p.c_index), format!("{:.6}", p.prediction_error)])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(serve(ServeConfig { model_path: a.model, static_dir: a.static_dir, port: a.port }))
}
