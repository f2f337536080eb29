//! `dropf` command-line front end.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 when a solve fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dropf::dro_core::{ForecastDataset, GroundNorm};
use dropf::evaluation::{
    check_disjoint, out_of_sample_eval, predicted_cvar, sampling_error_study, stream_rng, subsample, synth_errors,
    tradeoff_sweep, SamplingConfig, SweepConfig, SyntheticErrorConfig,
};
use dropf::horizon_model::{validate_case, HorizonModel, NetworkCase};
use dropf::io::{
    load_case, load_dataset, load_matrix_csv, load_policy, load_solution, save_dataset, write_json, write_mpc_csv,
    write_records_csv, Report, RunManifest, SolutionFile,
};
use dropf::mpc::{mpc_run, HorizonMode, MpcConfig, PersistenceForecast, RecordedDisturbance, TemplateForecast, ZeroDisturbance};
use dropf::opf_assembler::{risk_rows, solve, RiskConfig};
use dropf::policy::AffinePolicy;
use dropf::qp::{QpSettings, QpStatus};
use dropf::Error;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde_json::json;

#[derive(Parser)]
#[command(name = "dropf", version, about = "Distributionally robust multi-period DC optimal power flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a case file (and optionally a dataset against it).
    Validate {
        #[command(flatten)]
        case: CaseArgs,
        /// Dataset CSV to check against the case dimensions.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Solve the risk-constrained problem and write the solution JSON.
    Solve(SolveArgs),
    /// Trade-off sweep over ρ and ε; writes a CSV table.
    Sweep(SweepArgs),
    /// Predicted versus realized CVaR over training-set sizes.
    Sampling(SamplingArgs),
    /// Out-of-sample evaluation of a stored policy.
    Eval(EvalArgs),
    /// Closed-loop receding or shrinking horizon simulation.
    Mpc(MpcArgs),
    /// Synthetic leptokurtic forecast errors.
    Synth(SynthArgs),
}

#[derive(Args)]
struct CaseArgs {
    /// Case JSON.
    #[arg(long)]
    case: PathBuf,
    /// Comma-separated `from-to` lines whose limits enter the risk term;
    /// overrides the case file.
    #[arg(long, value_delimiter = ',')]
    monitored_lines: Option<Vec<String>>,
}

#[derive(Args)]
struct RiskArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Ground norm of the transport metric: `1` or `inf`.
    #[arg(long, default_value = "1")]
    ground_norm: GroundNorm,
}

#[derive(Args)]
struct SolverArgs {
    /// Solver tolerance on the KKT residuals.
    #[arg(long, default_value_t = QpSettings::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = QpSettings::default().max_iter)]
    max_iter: u32,
}

impl SolverArgs {
    fn settings(&self) -> QpSettings {
        QpSettings {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Training errors CSV.
    #[arg(long)]
    data: PathBuf,
    /// Random subsample of this size; all rows when omitted.
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    risk: RiskArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Solution JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Error samples to draw training sets from.
    #[arg(long)]
    data: PathBuf,
    /// Separate evaluation samples. When omitted, `--eval-size` rows (or
    /// half) of `--data` are held out.
    #[arg(long)]
    eval_data: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    train_size: usize,
    #[arg(long)]
    eval_size: Option<usize>,
    /// ρ values: a list `a,b,c` or `log:lo:hi:count`.
    #[arg(long, default_value = "log:0.01:100:9")]
    rho_grid: String,
    /// ε values: a list or `log:lo:hi:count`.
    #[arg(long, default_value = "0,0.04,0.08")]
    eps_grid: String,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Add a Gaussian baseline trained on this many synthetic draws.
    #[arg(long)]
    gaussian_samples: Option<usize>,
    /// Draw a new training subsample for every ρ instead of one per trial.
    #[arg(long)]
    resample_per_rho: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value = "1")]
    ground_norm: GroundNorm,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output CSV; a `.manifest.json` sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SamplingArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    eval_data: Option<PathBuf>,
    #[arg(long)]
    eval_size: Option<usize>,
    /// Training-set sizes.
    #[arg(long, value_delimiter = ',', default_value = "30,100")]
    sizes: Vec<usize>,
    #[arg(long, default_value = "0,0.08")]
    eps_grid: String,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value = "1")]
    ground_norm: GroundNorm,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Solution or policy JSON.
    #[arg(long)]
    policy: PathBuf,
    /// Evaluation errors CSV.
    #[arg(long)]
    data: PathBuf,
    /// Training set, checked to share no rows with `--data`.
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    eval_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Receding,
    Shrinking,
}

#[derive(Clone, Copy, ValueEnum)]
enum ForecastArg {
    Persistence,
    Template,
}

#[derive(Args)]
struct MpcArgs {
    /// Template case; its horizon is the window length.
    #[command(flatten)]
    case: CaseArgs,
    /// Training errors over one template window; no samples means a
    /// nominal (certainty-equivalent) controller.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Receding)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ForecastArg::Persistence)]
    forecast: ForecastArg,
    /// Realized errors, one row of `n_xi` values per step; zero when omitted.
    #[arg(long)]
    disturbances: Option<PathBuf>,
    #[command(flatten)]
    risk: RiskArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Trace JSON.
    #[arg(long)]
    out: PathBuf,
    /// Flat per-step trace CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Standard deviation in MW.
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Columns; taken from `--case` when given, else 1.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    case: Option<PathBuf>,
    /// Values are written in units of this many MW.
    #[arg(long, default_value_t = 1000.0)]
    base_mw: f64,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_validation() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn solve_failure(message: String) -> Failure {
    Failure { code: 3, message }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { case, data } => cmd_validate(&case, data.as_deref()),
        Command::Solve(a) => cmd_solve(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Sampling(a) => cmd_sampling(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Mpc(a) => cmd_mpc(&a),
        Command::Synth(a) => cmd_synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Missing inputs are a usage error, not a runtime failure.
fn require(path: &Path) -> Result<&Path, Error> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Parameter(format!("input file {} not found", path.display())))
    }
}

fn read_case(args: &CaseArgs) -> Result<NetworkCase, Error> {
    let mut case = load_case(require(&args.case)?)?;
    if let Some(lines) = &args.monitored_lines {
        case.monitored_lines = lines.iter().map(|s| s.trim().to_string()).collect();
    }
    Ok(case)
}

fn read_model(args: &CaseArgs) -> Result<HorizonModel, Error> {
    validate_case(read_case(args)?)
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Error> {
    let bad = |m: String| Error::Parameter(format!("grid '{text}': {m}"));
    if let Some(spec) = text.strip_prefix("log:") {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected log:lo:hi:count".into()));
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad(format!("'{}' is not a number", parts[0])))?;
        let hi: f64 = parts[1].parse().map_err(|_| bad(format!("'{}' is not a number", parts[1])))?;
        let count: usize = parts[2].parse().map_err(|_| bad(format!("'{}' is not a count", parts[2])))?;
        if !(lo > 0.0 && hi >= lo && count >= 1) {
            return Err(bad("need 0 < lo <= hi and count >= 1".into()));
        }
        if count == 1 {
            return Ok(vec![lo]);
        }
        let step = (hi / lo).ln() / (count - 1) as f64;
        return Ok((0..count).map(|k| lo * (step * k as f64).exp()).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("'{}' is not a number", s.trim())))
        })
        .collect()
}

fn risk_config(a: &RiskArgs) -> Result<RiskConfig, Error> {
    RiskConfig::new(a.alpha, a.rho, a.epsilon, a.ground_norm)
}

fn manifest(command: &str, case: &Path, data: Option<&Path>) -> Result<RunManifest, Error> {
    let m = RunManifest::new(command).with_case(case)?;
    match data {
        Some(d) => m.with_dataset(d),
        None => Ok(m),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<(), Error> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

/// Split `data` into (training pool, evaluation set): `eval_size` rows (or
/// half) chosen at random go to evaluation.
fn holdout(data: &ForecastDataset, eval_size: Option<usize>, seed: u64) -> Result<(ForecastDataset, ForecastDataset), Error> {
    let n = data.len();
    let k = eval_size.unwrap_or(n / 2);
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!(
            "cannot hold out {k} of {n} samples for evaluation"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, u64::MAX));
    let (eval, train) = idx.split_at_mut(k);
    eval.sort_unstable();
    train.sort_unstable();
    Ok((data.select(train)?, data.select(eval)?))
}

fn cmd_validate(case: &CaseArgs, data: Option<&Path>) -> Outcome {
    let model = read_model(case)?;
    let mut summary = json!({
        "buses": model.case.buses.len(),
        "lines": model.n_lines(),
        "devices": model.n_devices(),
        "injections": model.case.injections.len(),
        "horizon": model.horizon(),
        "n_xi": model.n_xi(),
        "xi_dim": model.xi_dim(),
        "risk_rows": risk_rows(&model).len(),
    });
    if let Some(path) = data {
        let d = load_dataset(require(path)?, Some(model.xi_dim()))?;
        summary["samples"] = json!(d.len());
    }
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> Outcome {
    let model = read_model(&a.case)?;
    let risk = risk_config(&a.risk)?;
    let mut data = load_dataset(require(&a.data)?, Some(model.xi_dim()))?;
    if let Some(size) = a.train_size {
        if size == 0 || size > data.len() {
            return Err(Error::Parameter(format!("training size {size} exceeds the {} available samples", data.len())).into());
        }
        data = subsample(&data, size, &mut stream_rng(a.seed, 0))?;
    }
    let mut m = manifest("solve", &a.case.case, Some(&a.data))?;
    m.risk = Some(risk);
    m.seeds = vec![a.seed];
    m.parameters = json!({ "train_size": a.train_size, "tol": a.solver.tol, "max_iter": a.solver.max_iter,
                           "monitored_lines": model.case.monitored_lines });
    let sol = solve(&model, &data, &risk, &a.solver.settings())?;
    let predicted = sol.is_solved().then(|| predicted_cvar(&model, &sol, &data)).transpose()?;
    emit_json(a.out.as_deref(), &SolutionFile::new(&sol, Some(m.finish()), predicted))?;
    if sol.status != QpStatus::Solved {
        return Err(solve_failure(format!("solver finished with status {:?}", sol.status)));
    }
    Ok(())
}

fn pools(
    model: &HorizonModel,
    data: &Path,
    eval_data: Option<&Path>,
    eval_size: Option<usize>,
    seed: u64,
) -> Result<(ForecastDataset, ForecastDataset, Option<usize>), Error> {
    let master = load_dataset(require(data)?, Some(model.xi_dim()))?;
    match eval_data {
        Some(p) => Ok((master, load_dataset(require(p)?, Some(model.xi_dim()))?, eval_size)),
        None => {
            let (train, eval) = holdout(&master, eval_size, seed)?;
            Ok((train, eval, None))
        }
    }
}

fn cmd_sweep(a: &SweepArgs) -> Outcome {
    let model = read_model(&a.case)?;
    let (master, eval, eval_size) = pools(&model, &a.data, a.eval_data.as_deref(), a.eval_size, a.seed)?;
    let config = SweepConfig {
        alpha: a.alpha,
        ground_norm: a.ground_norm,
        rho_grid: parse_grid(&a.rho_grid)?,
        eps_grid: parse_grid(&a.eps_grid)?,
        train_size: a.train_size,
        eval_size,
        trials: a.trials,
        seed: a.seed,
        gaussian_samples: a.gaussian_samples,
        resample_per_rho: a.resample_per_rho,
        settings: a.solver.settings(),
    };
    let mut m = manifest("sweep", &a.case.case, Some(&a.data))?;
    if let Some(p) = &a.eval_data {
        m.parameters = json!({ "eval_data": p.display().to_string(), "eval_sha256": dropf::io::sha256_file(p)? });
    }
    m.seeds = vec![a.seed];
    m.parameters = json!({ "config": config, "extra": m.parameters, "monitored_lines": model.case.monitored_lines });
    let records = tradeoff_sweep(&model, &master, &eval, &config)?;
    write_records_csv(&a.out, &records)?;
    write_json(&sidecar(&a.out), &m.finish())?;
    let failed = records.iter().filter(|r| !r.is_solved()).count();
    if failed > 0 {
        return Err(solve_failure(format!("{failed} of {} sweep points did not solve", records.len())));
    }
    Ok(())
}

fn cmd_sampling(a: &SamplingArgs) -> Outcome {
    let model = read_model(&a.case)?;
    let (master, eval, _) = pools(&model, &a.data, a.eval_data.as_deref(), a.eval_size, a.seed)?;
    let config = SamplingConfig {
        alpha: a.alpha,
        rho: a.rho,
        ground_norm: a.ground_norm,
        sizes: a.sizes.clone(),
        eps_grid: parse_grid(&a.eps_grid)?,
        trials: a.trials,
        seed: a.seed,
        settings: a.solver.settings(),
    };
    let mut m = manifest("sampling", &a.case.case, Some(&a.data))?;
    m.seeds = vec![a.seed];
    m.parameters = json!({ "config": config, "monitored_lines": model.case.monitored_lines });
    let records = sampling_error_study(&model, &master, &eval, &config)?;
    write_records_csv(&a.out, &records)?;
    write_json(&sidecar(&a.out), &m.finish())?;
    let failed = records.iter().filter(|r| r.status != "solved").count();
    if failed > 0 {
        return Err(solve_failure(format!("{failed} of {} solves did not finish", records.len())));
    }
    Ok(())
}

fn read_policy(model: &HorizonModel, path: &Path) -> Result<AffinePolicy, Error> {
    let policy = match load_solution(require(path)?) {
        Ok(sol) => sol.policy,
        Err(_) => load_policy(path)?,
    };
    policy.to_policy(model)
}

fn cmd_eval(a: &EvalArgs) -> Outcome {
    let model = read_model(&a.case)?;
    let policy = read_policy(&model, &a.policy)?;
    let mut eval = load_dataset(require(&a.data)?, Some(model.xi_dim()))?;
    if let Some(size) = a.eval_size {
        eval = subsample(&eval, size.min(eval.len()), &mut stream_rng(a.seed, 0))?;
    }
    if let Some(p) = &a.train_data {
        check_disjoint(&load_dataset(require(p)?, Some(model.xi_dim()))?, &eval)?;
    }
    let mut m = manifest("eval", &a.case.case, Some(&a.data))?;
    m.seeds = vec![a.seed];
    m.parameters = json!({ "policy": a.policy.display().to_string(),
                           "policy_sha256": dropf::io::sha256_file(&a.policy)?,
                           "alpha": a.alpha, "eval_size": a.eval_size });
    let mut report = out_of_sample_eval(&model, &policy, &risk_rows(&model), &eval, a.alpha)?;
    report.seed = Some(a.seed);
    emit_json(a.out.as_deref(), &Report::new(m.finish(), report))?;
    Ok(())
}

fn cmd_mpc(a: &MpcArgs) -> Outcome {
    let template = read_case(&a.case)?;
    validate_case(template.clone())?;
    let dim = template.xi_dim();
    let training = match &a.data {
        Some(p) => load_dataset(require(p)?, Some(dim))?,
        None => ForecastDataset::unbounded(DMatrix::zeros(1, dim))?,
    };
    let risk = risk_config(&a.risk)?;
    let config = MpcConfig {
        template: template.clone(),
        steps: a.steps,
        mode: match a.mode {
            ModeArg::Receding => HorizonMode::Receding,
            ModeArg::Shrinking => HorizonMode::Shrinking,
        },
        risk,
        training,
        settings: a.solver.settings(),
    };
    let mut m = manifest("mpc", &a.case.case, a.data.as_deref())?;
    m.risk = Some(risk);
    m.parameters = json!({ "steps": a.steps, "mode": config.mode,
                           "disturbances": a.disturbances.as_ref().map(|p| p.display().to_string()) });
    let mut provider: Box<dyn dropf::mpc::ForecastProvider> = match a.forecast {
        ForecastArg::Persistence => Box::new(PersistenceForecast),
        ForecastArg::Template => Box::new(TemplateForecast),
    };
    let trace = match &a.disturbances {
        Some(p) => {
            let rows = load_matrix_csv(require(p)?)?;
            if rows.ncols() != template.n_xi {
                return Err(Error::Dimension(format!(
                    "disturbances have {} columns, the case has n_xi = {}",
                    rows.ncols(),
                    template.n_xi
                ))
                .into());
            }
            mpc_run(&config, provider.as_mut(), &mut RecordedDisturbance { rows })?
        }
        None => mpc_run(&config, provider.as_mut(), &mut ZeroDisturbance)?,
    };
    write_json(&a.out, &Report::new(m.finish(), trace.clone()))?;
    if let Some(csv) = &a.csv {
        write_mpc_csv(csv, &trace, &template)?;
    }
    if let Some(f) = trace.failure {
        return Err(solve_failure(format!("step {} failed: {}", f.step, f.message)));
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Outcome {
    if !(a.base_mw.is_finite() && a.base_mw > 0.0) {
        return Err(Error::Parameter("--base-mw must be positive".into()).into());
    }
    let dim = match (&a.case, a.dim) {
        (_, Some(d)) => d,
        (Some(p), None) => load_case(require(p)?)?.xi_dim(),
        (None, None) => 1,
    };
    let config = SyntheticErrorConfig::new(a.sigma / a.base_mw, dim, a.seed);
    let data = synth_errors(&config, a.count)?;
    save_dataset(&a.out, &data)?;
    let mut m = RunManifest::new("synth");
    m.seeds = vec![a.seed];
    m.parameters = json!({ "sigma_mw": a.sigma, "base_mw": a.base_mw, "count": a.count, "dim": dim,
                           "config": config });
    write_json(&sidecar(&a.out), &m.finish())?;
    Ok(())
}
