//! Out-of-sample evaluation, baselines, tradeoff sweeps and the sampling
//! error study.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dro_core::{check_alpha, empirical_cvar, ForecastDataset, GroundNorm};
use crate::error::{Error, Result};
use crate::horizon_model::HorizonModel;
use crate::linexpr::LinExpr;
use crate::opf_assembler::{
    expected_cost, risk_row_name, row_map, risk_rows, sample_cost, solve, ObjectiveBreakdown, RiskConfig,
    RiskRow, Solution,
};
use crate::policy::{balance_constraints, AffinePolicy, PolicyLayout};
use crate::qp::{solve_qp, QpBuilder, QpSettings, QpStatus};

/// Independent RNG stream `stream` of a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Zero-mean two-component Gaussian scale mixture.
///
/// With probability `narrow_weight` a sample has standard deviation `s`,
/// otherwise `scale_ratio·s`, where `s` is chosen so the overall standard
/// deviation is `sigma`. Coordinates are independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticErrorConfig {
    pub sigma: f64,
    pub dim: usize,
    pub narrow_weight: f64,
    pub scale_ratio: f64,
    pub seed: u64,
}

impl SyntheticErrorConfig {
    pub fn new(sigma: f64, dim: usize, seed: u64) -> Self {
        Self {
            sigma,
            dim,
            narrow_weight: 0.7,
            scale_ratio: 4.0,
            seed,
        }
    }

    /// Single-component limit of the mixture.
    pub fn gaussian(sigma: f64, dim: usize, seed: u64) -> Self {
        Self {
            narrow_weight: 1.0,
            scale_ratio: 1.0,
            ..Self::new(sigma, dim, seed)
        }
    }

    fn narrow_sigma(&self) -> f64 {
        let w = self.narrow_weight;
        let k = self.scale_ratio;
        self.sigma / (w + (1.0 - w) * k * k).sqrt()
    }

    pub fn excess_kurtosis(&self) -> f64 {
        let w = self.narrow_weight;
        let k2 = self.scale_ratio * self.scale_ratio;
        3.0 * (w + (1.0 - w) * k2 * k2) / (w + (1.0 - w) * k2).powi(2) - 3.0
    }

    fn validate(&self) -> Result<()> {
        let ok = self.sigma.is_finite()
            && self.sigma >= 0.0
            && self.dim >= 1
            && (0.0..=1.0).contains(&self.narrow_weight)
            && self.scale_ratio.is_finite()
            && self.scale_ratio > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid synthetic error config {self:?}")))
        }
    }
}

pub fn synth_errors(config: &SyntheticErrorConfig, count: usize) -> Result<ForecastDataset> {
    config.validate()?;
    if count == 0 {
        return Err(Error::Parameter("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let narrow = config.narrow_sigma();
    let wide = narrow * config.scale_ratio;
    let mut values = Vec::with_capacity(count * config.dim);
    for _ in 0..count * config.dim {
        let s = if rng.random::<f64>() < config.narrow_weight { narrow } else { wide };
        let z: f64 = StandardNormal.sample(&mut rng);
        values.push(s * z);
    }
    ForecastDataset::unbounded(DMatrix::from_row_slice(count, config.dim, &values))
}

/// Mean, standard deviation (divisor `n`) and excess kurtosis.
pub fn sample_moments(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (mean, m2.sqrt(), m4 / (m2 * m2) - 3.0)
}

/// Realized constraint values `g_v` for one error realization, computed by
/// simulating every device and recomputing DC flows from bus injections.
pub fn realized_values(
    model: &HorizonModel,
    policy: &AffinePolicy,
    rows: &[RiskRow],
    xi: &DVector<f64>,
) -> Vec<f64> {
    let horizon = model.horizon();
    let mut bus = DMatrix::zeros(model.case.buses.len(), horizon);
    let mut states = Vec::with_capacity(model.n_devices());
    let mut inputs = Vec::with_capacity(model.n_devices());
    for ((dev, stack), p) in model.case.devices.iter().zip(&model.devices).zip(&policy.devices) {
        let u = p.input(xi);
        let x = &stack.a_x0 + &stack.b_stack * &u;
        let b = model.bus_index[&dev.bus];
        for t in 0..horizon {
            bus[(b, t)] += x[t * stack.n];
        }
        states.push(x);
        inputs.push(u);
    }
    for inj in &model.case.injections {
        let b = model.bus_index[&inj.bus];
        let p = &inj.r + &inj.g * xi;
        for t in 0..horizon {
            bus[(b, t)] += p[t];
        }
    }
    let flows = model.flows_from_bus_injections(&bus);
    rows.iter()
        .map(|r| match *r {
            RiskRow::Line { row } => flows[row] - model.p_bar[row],
            RiskRow::Device { device, row } => {
                let local = &model.case.devices[device].local;
                (local.t.row(row) * &states[device])[0]
                    + (local.u.row(row) * &inputs[device])[0]
                    + (local.z.row(row) * xi)[0]
                    - local.w[row]
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub name: String,
    pub cvar: f64,
    pub violation_probability: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub alpha: f64,
    pub constraints: Vec<ConstraintReport>,
    pub mean_cost: f64,
    pub samples: usize,
    pub seed: Option<u64>,
}

impl EvaluationReport {
    pub fn max_cvar(&self) -> f64 {
        self.constraints.iter().map(|c| c.cvar).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_violation_probability(&self) -> f64 {
        self.constraints.iter().map(|c| c.violation_probability).fold(0.0, f64::max)
    }
}

pub fn out_of_sample_eval(
    model: &HorizonModel,
    policy: &AffinePolicy,
    rows: &[RiskRow],
    eval: &ForecastDataset,
    alpha: f64,
) -> Result<EvaluationReport> {
    check_alpha(alpha)?;
    policy.check_dims(model)?;
    if eval.dim() != model.xi_dim() {
        return Err(Error::Dimension(format!(
            "evaluation data has {} columns, the case needs {}",
            eval.dim(),
            model.xi_dim()
        )));
    }
    let n = eval.len();
    let dim = eval.dim();
    // realized values are affine in ξ: recover the map from d + 1 probes
    let base = DVector::from_vec(realized_values(model, policy, rows, &DVector::zeros(dim)));
    let mut slopes = DMatrix::zeros(rows.len(), dim);
    for j in 0..dim {
        let unit = DVector::from_fn(dim, |k, _| if k == j { 1.0 } else { 0.0 });
        let probe = DVector::from_vec(realized_values(model, policy, rows, &unit));
        slopes.set_column(j, &(probe - &base));
    }
    let all = &eval.samples * slopes.transpose();
    let values: Vec<Vec<f64>> = (0..rows.len()).map(|v| all.column(v).iter().map(|g| g + base[v]).collect()).collect();
    let cost: f64 = (0..n).map(|i| sample_cost(model, policy, &eval.sample_vector(i))).sum();
    let constraints = rows
        .iter()
        .zip(&values)
        .map(|(r, g)| {
            Ok(ConstraintReport {
                name: risk_row_name(model, r),
                cvar: empirical_cvar(g, alpha)?,
                violation_probability: g.iter().filter(|&&x| x > 0.0).count() as f64 / n as f64,
                mean: g.iter().sum::<f64>() / n as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        alpha,
        constraints,
        mean_cost: cost / n as f64,
        samples: n,
        seed: None,
    })
}

/// Fails when a row of `eval` also occurs in `train`.
pub fn check_disjoint(train: &ForecastDataset, eval: &ForecastDataset) -> Result<()> {
    let seen: std::collections::HashSet<[u8; 32]> = train.row_hashes().into_iter().collect();
    let shared = eval.row_hashes().iter().filter(|h| seen.contains(*h)).count();
    if shared > 0 {
        return Err(Error::Parameter(format!(
            "{shared} evaluation samples also occur in the training set"
        )));
    }
    Ok(())
}

/// CVaR per risk row as predicted by the solved model on its training set.
///
/// On unbounded support this is the worst case over the ball,
/// `CVaR_emp(g) + ε·‖a‖_*/α`; otherwise the DRO term divided by `ρα`.
pub fn predicted_cvar(model: &HorizonModel, sol: &Solution, train: &ForecastDataset) -> Result<Vec<f64>> {
    let risk = &sol.risk;
    sol.rows
        .iter()
        .enumerate()
        .map(|(v, r)| {
            let (a, b) = row_map(model, r)?.coefficients(&sol.policy);
            let g: Vec<f64> = (0..train.len()).map(|i| a.dot(&train.sample_vector(i)) + b).collect();
            let base = empirical_cvar(&g, risk.alpha)?;
            if train.support.is_unbounded() {
                let lip = risk.ground_norm.dual_norm(a.as_slice());
                Ok(base + risk.epsilon * lip / risk.alpha)
            } else if risk.rho > 0.0 {
                Ok(sol.objective.dro[v] / (risk.rho * risk.alpha))
            } else {
                Ok(base)
            }
        })
        .collect()
}

/// Mean and unbiased covariance of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianFit {
    pub fn fit(data: &ForecastDataset) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(Error::Parameter("a Gaussian fit needs at least two samples".into()));
        }
        let mean = data.mean();
        let mut centered = data.samples.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        Ok(Self { mean, cov })
    }

    /// Draws via a symmetric square root with eigenvalues floored at
    /// `1e-12·trace`.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let dim = self.mean.len();
        let floor = 1e-12 * self.cov.trace().max(0.0);
        let eig = SymmetricEigen::new(self.cov.clone());
        let roots = eig.eigenvalues.map(|l| l.max(floor).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        let mut out = DMatrix::zeros(count, dim);
        for i in 0..count {
            let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
            let x = &self.mean + &factor * z;
            out.set_row(i, &x.transpose());
        }
        out
    }
}

/// Symmetric `S^p` with eigenvalues below `1e-12·trace` treated as zero.
fn sym_power(s: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let floor = 1e-12 * s.trace().abs().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(s.clone());
    let d = eig.eigenvalues.map(|l| if l > floor { l.powf(p) } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Affinely maps `draws` so that their mean and `1/M` second moment equal
/// those of `data`.
pub fn moment_match(draws: &DMatrix<f64>, data: &ForecastDataset) -> Result<DMatrix<f64>> {
    if draws.ncols() != data.dim() {
        return Err(Error::Dimension(format!(
            "draws have {} columns, data has {}",
            draws.ncols(),
            data.dim()
        )));
    }
    let mean = data.mean();
    let target = data.second_moment() - &mean * mean.transpose();
    let mut centered = draws.clone();
    let draw_mean = draws.row_mean();
    for mut row in centered.row_iter_mut() {
        row -= &draw_mean;
    }
    let cov = centered.transpose() * &centered / draws.nrows().max(1) as f64;
    let map = sym_power(&cov, -0.5) * sym_power(&target, 0.5);
    let mut out = centered * map;
    for mut row in out.row_iter_mut() {
        row += mean.transpose();
    }
    Ok(out)
}

/// Sample-average CVaR OPF on `samples` synthetic draws from a Gaussian fit
/// of `data`, moment-matched to `data`. Returns the solution and the
/// synthetic set it was trained on.
pub fn gaussian_baseline(
    model: &HorizonModel,
    data: &ForecastDataset,
    risk: &RiskConfig,
    samples: usize,
    rng: &mut impl Rng,
    settings: &QpSettings,
) -> Result<(Solution, ForecastDataset)> {
    let fit = GaussianFit::fit(data)?;
    let synthetic = ForecastDataset::unbounded(moment_match(&fit.sample(samples.max(2), rng), data)?)?;
    let sol = solve(model, &synthetic, &risk.with_epsilon(0.0), settings)?;
    Ok((sol, synthetic))
}

/// Sample-average CVaR OPF in the Rockafellar–Uryasev form
/// `min cost + ρ·Σ_v (mean_i z_iv − α·τ_v)`, `z_iv ≥ g_iv + τ_v`, `z ≥ 0`.
///
/// Written independently of the Wasserstein epigraph; at `ε = 0` both must
/// agree.
pub fn saa_cvar_baseline(
    model: &HorizonModel,
    data: &ForecastDataset,
    risk: &RiskConfig,
    settings: &QpSettings,
) -> Result<Solution> {
    risk.validate()?;
    let rows = risk_rows(model);
    let mut qp = QpBuilder::new();
    let layout = PolicyLayout::new(model, 0);
    qp.add_vars(layout.len());
    let cost = expected_cost(model, data, &layout)?;
    cost.add_to(&mut qp);
    for row in balance_constraints(model, &layout)? {
        qp.add_eq(row.expr);
    }
    let n = data.len();
    let tau = qp.add_vars(rows.len());
    let z = qp.add_vars(rows.len() * n);
    for (v, r) in rows.iter().enumerate() {
        let map = row_map(model, r)?;
        let t = tau.start + v;
        qp.add_objective(&LinExpr::var(t, -risk.rho * risk.alpha), 1.0);
        for i in 0..n {
            let zi = z.start + v * n + i;
            qp.add_objective(&LinExpr::var(zi, risk.rho / n as f64), 1.0);
            let xi = data.sample(i);
            let mut g = LinExpr::constant(map.constant);
            for (c, &x) in xi.iter().enumerate() {
                g.constant += map.xi_coeff[c] * x;
            }
            for (j, w) in map.weights.iter().enumerate() {
                for (row, &wr) in w.iter().enumerate() {
                    if wr != 0.0 {
                        g.add_scaled(&layout.input_expr(j, row, &xi), wr);
                    }
                }
            }
            g.add_term(t, 1.0);
            g.add_term(zi, -1.0);
            qp.add_le(g.compact());
            qp.add_le(LinExpr::var(zi, -1.0));
        }
    }
    let problem = qp.build();
    let sol = solve_qp(&problem, settings)?;
    let zv = &sol.z;
    let cost_value = cost.eval(zv);
    let dro: Vec<f64> = (0..rows.len())
        .map(|v| {
            let mean_z = (0..n).map(|i| zv[z.start + v * n + i]).sum::<f64>() / n as f64;
            risk.rho * (mean_z - risk.alpha * zv[tau.start + v])
        })
        .collect();
    Ok(Solution {
        policy: layout.extract(model, zv),
        tau: tau.clone().map(|i| zv[i]).collect(),
        lambda: vec![0.0; rows.len()],
        objective: ObjectiveBreakdown {
            total: cost_value + dro.iter().sum::<f64>(),
            cost: cost_value,
            dro,
        },
        status: sol.status,
        kkt: sol.kkt,
        iterations: sol.iterations,
        solve_time: sol.solve_time,
        risk: risk.with_epsilon(0.0),
        row_names: rows.iter().map(|r| risk_row_name(model, r)).collect(),
        rows,
        z: sol.z.clone(),
    })
}

/// Without-replacement subsample of `size` rows.
pub fn subsample(data: &ForecastDataset, size: usize, rng: &mut impl Rng) -> Result<ForecastDataset> {
    if size == 0 || size > data.len() {
        return Err(Error::Parameter(format!(
            "cannot draw {size} samples from a dataset of {}",
            data.len()
        )));
    }
    let mut idx = sample_indices(rng, data.len(), size).into_vec();
    idx.sort_unstable();
    data.select(&idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alpha: f64,
    pub ground_norm: GroundNorm,
    pub rho_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub train_size: usize,
    /// Evaluate on a fresh subsample of this size; `None` uses all of it.
    pub eval_size: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Add a Gaussian baseline point per ρ with this many synthetic samples.
    pub gaussian_samples: Option<usize>,
    /// Draw a fresh training subsample for every ρ. When false, each trial
    /// reuses one subsample (and one set of Gaussian draws) across the ρ grid.
    pub resample_per_rho: bool,
    pub settings: QpSettings,
}

/// One sweep point. Column names are the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub method: String,
    pub trial: usize,
    pub rho_index: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub train_size: usize,
    pub status: String,
    pub train_objective: f64,
    pub train_cost: f64,
    pub train_dro: f64,
    pub predicted_cvar: f64,
    pub oos_cvar: f64,
    pub oos_violation_probability: f64,
    pub oos_mean_cost: f64,
}

impl SweepRecord {
    fn failed(method: &str, trial: usize, rho_index: usize, rho: f64, epsilon: f64, train_size: usize, status: String) -> Self {
        Self {
            method: method.into(),
            trial,
            rho_index,
            rho,
            epsilon,
            train_size,
            status,
            train_objective: f64::NAN,
            train_cost: f64::NAN,
            train_dro: f64::NAN,
            predicted_cvar: f64::NAN,
            oos_cvar: f64::NAN,
            oos_violation_probability: f64::NAN,
            oos_mean_cost: f64::NAN,
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == "solved"
    }
}

pub fn status_name(status: QpStatus) -> String {
    serde_json::to_value(status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| format!("{status:?}"))
}

fn record_for(
    model: &HorizonModel,
    method: &str,
    point: (usize, usize, usize),
    sol: &Solution,
    train: &ForecastDataset,
    eval: &ForecastDataset,
) -> Result<SweepRecord> {
    let (trial, rho_index, train_size) = point;
    let risk = &sol.risk;
    if !sol.is_solved() {
        return Ok(SweepRecord::failed(
            method,
            trial,
            rho_index,
            risk.rho,
            risk.epsilon,
            train_size,
            status_name(sol.status),
        ));
    }
    let predicted = predicted_cvar(model, sol, train)?;
    let report = out_of_sample_eval(model, &sol.policy, &sol.rows, eval, risk.alpha)?;
    Ok(SweepRecord {
        method: method.into(),
        trial,
        rho_index,
        rho: risk.rho,
        epsilon: risk.epsilon,
        train_size,
        status: status_name(sol.status),
        train_objective: sol.objective.total,
        train_cost: sol.objective.cost,
        train_dro: sol.objective.dro.iter().sum(),
        predicted_cvar: predicted.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        oos_cvar: report.max_cvar(),
        oos_violation_probability: report.max_violation_probability(),
        oos_mean_cost: report.mean_cost,
    })
}

/// One solve per `(trial, ρ, ε)`; all ε at a given `(trial, ρ)` share one
/// training subsample, and so does the whole ρ grid unless
/// `resample_per_rho` is set. Records come back ordered by trial, ρ, then
/// ε with the Gaussian point last.
pub fn tradeoff_sweep(
    model: &HorizonModel,
    master: &ForecastDataset,
    eval: &ForecastDataset,
    config: &SweepConfig,
) -> Result<Vec<SweepRecord>> {
    if config.rho_grid.is_empty() || config.eps_grid.is_empty() {
        return Err(Error::Parameter("sweep grids must be nonempty".into()));
    }
    if config.trials == 0 {
        return Err(Error::Parameter("sweep needs at least one trial".into()));
    }
    RiskConfig::new(config.alpha, 0.0, 0.0, config.ground_norm)?;
    for &v in config.rho_grid.iter().chain(&config.eps_grid) {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Parameter(format!("grid value {v} must be nonnegative")));
        }
    }
    if config.train_size == 0 || config.train_size > master.len() {
        return Err(Error::Parameter(format!(
            "training size {} exceeds the {} available samples",
            config.train_size,
            master.len()
        )));
    }
    let rho_len = config.rho_grid.len();
    let points: Vec<(usize, usize)> = (0..config.trials)
        .flat_map(|t| (0..rho_len).map(move |k| (t, k)))
        .collect();
    let results: Vec<Vec<SweepRecord>> = points
        .par_iter()
        .map(|&(trial, k)| {
            let stream = if config.resample_per_rho { trial * rho_len + k } else { trial };
            let mut rng = stream_rng(config.seed, stream as u64);
            let rho = config.rho_grid[k];
            let train = subsample(master, config.train_size, &mut rng)?;
            let eval_set = match config.eval_size {
                Some(size) => subsample(eval, size.min(eval.len()), &mut rng)?,
                None => eval.clone(),
            };
            let point = (trial, k, config.train_size);
            let mut out = Vec::new();
            for &eps in &config.eps_grid {
                let risk = RiskConfig::new(config.alpha, rho, eps, config.ground_norm)?;
                out.push(match solve(model, &train, &risk, &config.settings) {
                    Ok(sol) => record_for(model, "dro", point, &sol, &train, &eval_set)?,
                    Err(e) => SweepRecord::failed("dro", trial, k, rho, eps, config.train_size, format!("error: {e}")),
                });
            }
            if let Some(m) = config.gaussian_samples {
                let risk = RiskConfig::new(config.alpha, rho, 0.0, config.ground_norm)?;
                out.push(match gaussian_baseline(model, &train, &risk, m, &mut rng, &config.settings) {
                    Ok((sol, synthetic)) => record_for(model, "gaussian", point, &sol, &synthetic, &eval_set)?,
                    Err(e) => SweepRecord::failed("gaussian", trial, k, rho, 0.0, config.train_size, format!("error: {e}")),
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// Piecewise-linear `y(x)` through points sorted by `x`, clamped at the ends.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.iter().cloned().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    if pts.is_empty() {
        return None;
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    if x <= pts[0].0 {
        return Some(pts[0].1);
    }
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x <= x1 {
            if x1 == x0 {
                return Some(y0.min(y1));
            }
            return Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0));
        }
    }
    pts.last().map(|p| p.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub alpha: f64,
    pub rho: f64,
    pub ground_norm: GroundNorm,
    pub sizes: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub settings: QpSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRecord {
    pub size: usize,
    pub trial: usize,
    pub epsilon: f64,
    pub status: String,
    pub predicted_cvar: f64,
    pub realized_cvar: f64,
    pub underestimated: bool,
}

/// Predicted versus realized CVaR for repeated small training sets. Every
/// ε at a given `(size, trial)` uses the same subsample.
pub fn sampling_error_study(
    model: &HorizonModel,
    master: &ForecastDataset,
    eval: &ForecastDataset,
    config: &SamplingConfig,
) -> Result<Vec<SamplingRecord>> {
    for &size in &config.sizes {
        if size == 0 || size > master.len() {
            return Err(Error::Parameter(format!(
                "sample size {size} exceeds the {} available samples",
                master.len()
            )));
        }
    }
    let points: Vec<(usize, usize)> = config
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(s, _)| (0..config.trials).map(move |t| (s, t)))
        .collect();
    let results: Vec<Vec<SamplingRecord>> = points
        .par_iter()
        .map(|&(s, trial)| {
            let size = config.sizes[s];
            let mut rng = stream_rng(config.seed, (s * config.trials + trial) as u64);
            let train = subsample(master, size, &mut rng)?;
            let mut out = Vec::new();
            for &eps in &config.eps_grid {
                let risk = RiskConfig::new(config.alpha, config.rho, eps, config.ground_norm)?;
                let sol = solve(model, &train, &risk, &config.settings)?;
                if !sol.is_solved() {
                    out.push(SamplingRecord {
                        size,
                        trial,
                        epsilon: eps,
                        status: status_name(sol.status),
                        predicted_cvar: f64::NAN,
                        realized_cvar: f64::NAN,
                        underestimated: false,
                    });
                    continue;
                }
                let predicted = predicted_cvar(model, &sol, &train)?
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
                let realized = out_of_sample_eval(model, &sol.policy, &sol.rows, eval, config.alpha)?.max_cvar();
                out.push(SamplingRecord {
                    size,
                    trial,
                    epsilon: eps,
                    status: status_name(sol.status),
                    predicted_cvar: predicted,
                    realized_cvar: realized,
                    underestimated: predicted < realized,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// Share of solved trials at `(size, ε)` whose predicted CVaR fell short.
pub fn underestimation_frequency(records: &[SamplingRecord], size: usize, epsilon: f64) -> f64 {
    let hits: Vec<&SamplingRecord> = records
        .iter()
        .filter(|r| r.size == size && r.epsilon == epsilon && r.status == "solved")
        .collect();
    if hits.is_empty() {
        return f64::NAN;
    }
    hits.iter().filter(|r| r.underestimated).count() as f64 / hits.len() as f64
}

/// Persistence forecast errors: the forecast for step `t+1` is the value at
/// `t`, so the error is the difference of consecutive measurements.
pub fn persistence_errors(series: &DMatrix<f64>) -> DMatrix<f64> {
    let n = series.nrows();
    if n < 2 {
        return DMatrix::zeros(0, series.ncols());
    }
    series.rows(1, n - 1) - series.rows(0, n - 1)
}

/// Stack `horizon` consecutive rows into one sample (overlapping windows).
pub fn horizon_windows(errors: &DMatrix<f64>, horizon: usize) -> DMatrix<f64> {
    let cols = errors.ncols();
    let count = (errors.nrows() + 1).saturating_sub(horizon);
    DMatrix::from_fn(count, cols * horizon, |i, c| errors[(i + c / cols, c % cols)])
}

/// Shift each column to zero mean and scale it to standard deviation
/// `sigma` (divisor `n`).
pub fn standardize(errors: &mut DMatrix<f64>, sigma: f64) {
    for mut col in errors.column_iter_mut() {
        let values: Vec<f64> = col.iter().cloned().collect();
        let (mean, sd, _) = sample_moments(&values);
        for v in col.iter_mut() {
            *v = if sd > 0.0 { (*v - mean) * sigma / sd } else { 0.0 };
        }
    }
}
