//! Assembly of the distributionally robust multi-period OPF as one QP.
//!
//! Decision vector layout, in order: free `D` entries of every device, all
//! `e`, then per risk row `v` the CVaR threshold `τ_v`, the radii multipliers
//! `λ_v`, the epigraph variables `s_{iv}` (v-major), the support multipliers
//! `γ_{ikv}` and auxiliary norm variables.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dro_core::{
    check_alpha, cvar_pieces, dro_epigraph, AmbiguityConfig, EpigraphShape, EpigraphVars,
    ForecastDataset, GroundNorm,
};
use crate::error::{Error, Result};
use crate::horizon_model::HorizonModel;
use crate::linexpr::LinExpr;
use crate::policy::{balance_constraints, AffinePolicy, PolicyLayout};
use crate::qp::{solve_qp, KktReport, QpBuilder, QpProblem, QpSettings, QpStatus, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub alpha: f64,
    pub rho: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub ground_norm: GroundNorm,
}

impl RiskConfig {
    pub fn new(alpha: f64, rho: f64, epsilon: f64, ground_norm: GroundNorm) -> Result<Self> {
        let risk = Self {
            alpha,
            rho,
            epsilon,
            ground_norm,
        };
        risk.validate()?;
        Ok(risk)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::Parameter(format!("rho must be nonnegative, got {}", self.rho)));
        }
        AmbiguityConfig::new(self.epsilon, self.ground_norm)?;
        Ok(())
    }

    pub fn ambiguity(&self) -> AmbiguityConfig {
        AmbiguityConfig {
            epsilon: self.epsilon,
            ground_norm: self.ground_norm,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..*self }
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..*self }
    }
}

/// A constraint routed through the risk term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RiskRow {
    /// Directed line-time row.
    Line { row: usize },
    /// Row `row` of device `device`'s local constraints.
    Device { device: usize, row: usize },
}

/// Monitored line rows first, then local rows device by device.
pub fn risk_rows(model: &HorizonModel) -> Vec<RiskRow> {
    let mut rows: Vec<RiskRow> = model.monitored.iter().map(|&row| RiskRow::Line { row }).collect();
    for (device, d) in model.case.devices.iter().enumerate() {
        rows.extend((0..d.local.len()).map(|row| RiskRow::Device { device, row }));
    }
    rows
}

pub fn risk_row_name(model: &HorizonModel, row: &RiskRow) -> String {
    match *row {
        RiskRow::Line { row } => model.row_name(row),
        RiskRow::Device { device, row } => format!("{}#{}", model.case.devices[device].id, row),
    }
}

/// Constraint value `g(ξ) = Σ_j w_j'u_j + κ'ξ + c` in terms of the stacked
/// device inputs; `g ≤ 0` is the constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMap {
    pub weights: Vec<DVector<f64>>,
    pub xi_coeff: DVector<f64>,
    pub constant: f64,
}

impl RowMap {
    /// `(a-map, b-map)`: `g = ⟨a, ξ⟩ + b` with both affine in `(D, e)`.
    pub fn exprs(&self, layout: &PolicyLayout) -> (Vec<LinExpr>, LinExpr) {
        let dim = self.xi_coeff.len();
        let mut a: Vec<LinExpr> = self.xi_coeff.iter().map(|&k| LinExpr::constant(k)).collect();
        let mut b = LinExpr::constant(self.constant);
        for (j, w) in self.weights.iter().enumerate() {
            for (r, &wr) in w.iter().enumerate() {
                if wr == 0.0 {
                    continue;
                }
                b.add_term(layout.e_var(j, r), wr);
                for (c, ac) in a.iter_mut().enumerate().take(dim) {
                    if let Some(v) = layout.d_var(j, r, c) {
                        ac.add_term(v, wr);
                    }
                }
            }
        }
        (a.into_iter().map(LinExpr::compact).collect(), b.compact())
    }

    /// Numeric `(a, b)` for a fixed policy.
    pub fn coefficients(&self, policy: &AffinePolicy) -> (DVector<f64>, f64) {
        let mut a = self.xi_coeff.clone();
        let mut b = self.constant;
        for (w, p) in self.weights.iter().zip(&policy.devices) {
            a += p.d.transpose() * w;
            b += w.dot(&p.e);
        }
        (a, b)
    }
}

/// Flow on a directed line-time row minus its limit.
pub fn line_loss_coeffs(model: &HorizonModel, row: usize) -> RowMap {
    let weights = model
        .devices
        .iter()
        .zip(&model.gamma_devices)
        .map(|(dev, gamma)| dev.cb.transpose() * gamma.row(row).transpose())
        .collect();
    let mut constant = -model.p_bar[row];
    for (dev, gamma) in model.devices.iter().zip(&model.gamma_devices) {
        constant += gamma.row(row).dot(&dev.ca_x0.transpose());
    }
    let mut xi_coeff = DVector::zeros(model.xi_dim());
    for (inj, gamma) in model.case.injections.iter().zip(&model.gamma_injections) {
        constant += gamma.row(row).dot(&inj.r.transpose());
        xi_coeff += inj.g.transpose() * gamma.row(row).transpose();
    }
    RowMap {
        weights,
        xi_coeff,
        constant,
    }
}

/// Local row `T·x + U·u + Z·ξ − w` of one device.
pub fn device_loss_coeffs(model: &HorizonModel, device: usize, row: usize) -> Result<RowMap> {
    let dev = model
        .case
        .devices
        .get(device)
        .ok_or_else(|| Error::Parameter(format!("device index {device} out of range")))?;
    if row >= dev.local.len() {
        return Err(Error::Parameter(format!(
            "device {} has {} local rows, asked for row {row}",
            dev.id,
            dev.local.len()
        )));
    }
    let stack = &model.devices[device];
    let t_row = dev.local.t.row(row);
    let weights = model
        .devices
        .iter()
        .enumerate()
        .map(|(j, s)| {
            if j == device {
                (t_row * &stack.b_stack + dev.local.u.row(row)).transpose()
            } else {
                DVector::zeros(s.m * model.horizon())
            }
        })
        .collect();
    Ok(RowMap {
        weights,
        xi_coeff: dev.local.z.row(row).transpose(),
        constant: t_row.dot(&stack.a_x0.transpose()) - dev.local.w[row],
    })
}

pub fn row_map(model: &HorizonModel, row: &RiskRow) -> Result<RowMap> {
    match *row {
        RiskRow::Line { row } => Ok(line_loss_coeffs(model, row)),
        RiskRow::Device { device, row } => device_loss_coeffs(model, device, row),
    }
}

/// `½ z'Pz + q'z + constant` over a prefix of the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    /// Symmetric, both triangles stored.
    pub p: SparseMatrix,
    pub q: Vec<f64>,
    pub constant: f64,
}

impl QuadForm {
    pub fn eval(&self, z: &[f64]) -> f64 {
        let pz = self.p.mul_vec(&z[..self.q.len()]);
        let quad: f64 = pz.iter().zip(z).map(|(a, b)| a * b).sum();
        let lin: f64 = self.q.iter().zip(z).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.constant
    }

    pub fn add_to(&self, qp: &mut QpBuilder) {
        for &(i, j, v) in &self.p.triplets {
            if i <= j {
                qp.add_quad(i, j, v);
            }
        }
        let mut lin = LinExpr::constant(self.constant);
        for (i, &v) in self.q.iter().enumerate() {
            lin.add_term(i, v);
        }
        qp.add_objective(&lin, 1.0);
    }
}

/// Sample-average cost over `data` as a quadratic in `(D, e)`, built from
/// the sample mean and second moment of the errors.
pub fn expected_cost(model: &HorizonModel, data: &ForecastDataset, layout: &PolicyLayout) -> Result<QuadForm> {
    if data.dim() != model.xi_dim() {
        return Err(Error::Dimension(format!(
            "dataset has {} columns, the case needs {}",
            data.dim(),
            model.xi_dim()
        )));
    }
    let n = layout.offset + layout.len();
    let mu = data.mean();
    let second = data.second_moment();
    let mut p = SparseMatrix::new(n, n);
    let mut q = vec![0.0; n];
    let mut constant = 0.0;

    for (j, (dev, stack)) in model.case.devices.iter().zip(&model.devices).enumerate() {
        let b = &stack.b_stack;
        let hx_b = &dev.cost.h_x * b;
        let m_mat = b.transpose() * &hx_b + &dev.cost.h_u;
        let g = &dev.cost.f_u + b.transpose() * &dev.cost.f_x + hx_b.transpose() * &stack.a_x0;
        constant += dev.cost.c
            + dev.cost.f_x.dot(&stack.a_x0)
            + 0.5 * stack.a_x0.dot(&(&dev.cost.h_x * &stack.a_x0));

        let rows = m_mat.nrows();
        let free = &layout.d_entries[j];
        // local index: free D entries, then e rows
        let var = |k: usize| {
            if k < free.len() {
                layout.d_start(j) + k
            } else {
                layout.e_var(j, k - free.len())
            }
        };
        let local = free.len() + rows;
        let mut hess = DMatrix::<f64>::zeros(local, local);
        let mut lin = DVector::<f64>::zeros(local);
        for (k, &(r, c)) in free.iter().enumerate() {
            lin[k] = g[r] * mu[c];
            for (k2, &(r2, c2)) in free.iter().enumerate() {
                hess[(k, k2)] = m_mat[(r, r2)] * second[(c, c2)];
            }
            for r2 in 0..rows {
                let v = m_mat[(r2, r)] * mu[c];
                hess[(free.len() + r2, k)] = v;
                hess[(k, free.len() + r2)] = v;
            }
        }
        for r in 0..rows {
            lin[free.len() + r] = g[r];
            for r2 in 0..rows {
                hess[(free.len() + r, free.len() + r2)] = m_mat[(r, r2)];
            }
        }
        for a in 0..local {
            q[var(a)] += lin[a];
            for bb in 0..local {
                p.push(var(a), var(bb), hess[(a, bb)]);
            }
        }
    }
    p.canonicalize();
    Ok(QuadForm { p, q, constant })
}

/// Total device cost for one error realization under a fixed policy.
pub fn sample_cost(model: &HorizonModel, policy: &AffinePolicy, xi: &DVector<f64>) -> f64 {
    model
        .case
        .devices
        .iter()
        .zip(&model.devices)
        .zip(&policy.devices)
        .map(|((dev, stack), p)| {
            let u = p.input(xi);
            let x = &stack.a_x0 + &stack.b_stack * &u;
            let c = &dev.cost;
            c.c + c.f_x.dot(&x) + 0.5 * x.dot(&(&c.h_x * &x)) + c.f_u.dot(&u) + 0.5 * u.dot(&(&c.h_u * &u))
        })
        .sum()
}

/// Named slices of the decision vector; they partition `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroIndex {
    pub d: Range<usize>,
    pub e: Range<usize>,
    pub tau: Range<usize>,
    pub lambda: Range<usize>,
    pub s: Range<usize>,
    pub gamma: Range<usize>,
    pub aux: Range<usize>,
    pub samples: usize,
    pub gamma_per_row: usize,
    pub aux_per_row: usize,
}

impl DroIndex {
    pub fn n(&self) -> usize {
        self.aux.end
    }

    pub fn rows(&self) -> usize {
        self.tau.len()
    }

    pub fn s_of(&self, v: usize) -> Range<usize> {
        let start = self.s.start + v * self.samples;
        start..start + self.samples
    }

    fn epigraph_vars(&self, v: usize) -> EpigraphVars {
        let g = self.gamma.start + v * self.gamma_per_row;
        let a = self.aux.start + v * self.aux_per_row;
        EpigraphVars {
            lambda: self.lambda.start + v,
            s: self.s_of(v),
            gamma: g..g + self.gamma_per_row,
            aux: a..a + self.aux_per_row,
        }
    }
}

/// The assembled program with everything needed to interpret its solution.
#[derive(Debug, Clone)]
pub struct DroQp {
    pub qp: QpProblem,
    pub index: DroIndex,
    pub layout: PolicyLayout,
    pub risk: RiskConfig,
    pub rows: Vec<RiskRow>,
    pub row_names: Vec<String>,
    pub cost: QuadForm,
}

impl DroQp {
    pub fn dro_terms(&self, z: &[f64]) -> Vec<f64> {
        let n = self.index.samples as f64;
        (0..self.index.rows())
            .map(|v| {
                self.risk.epsilon * z[self.index.lambda.start + v]
                    + self.index.s_of(v).map(|i| z[i]).sum::<f64>() / n
            })
            .collect()
    }
}

/// Serializable view of a [`DroQp`] for debugging and diffing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DroQpFile {
    pub format_version: u32,
    pub risk: RiskConfig,
    pub rows: Vec<String>,
    pub index: DroIndex,
    pub qp: QpProblem,
}

impl From<&DroQp> for DroQpFile {
    fn from(d: &DroQp) -> Self {
        Self {
            format_version: 1,
            risk: d.risk,
            rows: d.row_names.clone(),
            index: d.index.clone(),
            qp: d.qp.clone(),
        }
    }
}

pub fn assemble(model: &HorizonModel, data: &ForecastDataset, risk: &RiskConfig) -> Result<DroQp> {
    risk.validate()?;
    if data.is_empty() {
        return Err(Error::Parameter("training dataset is empty".into()));
    }
    if data.dim() != model.xi_dim() {
        return Err(Error::Dimension(format!(
            "dataset has {} columns, the case needs {}",
            data.dim(),
            model.xi_dim()
        )));
    }
    let amb = risk.ambiguity();
    let rows = risk_rows(model);
    let maps = rows.iter().map(|r| row_map(model, r)).collect::<Result<Vec<_>>>()?;

    let mut qp = QpBuilder::new();
    let layout = PolicyLayout::new(model, 0);
    qp.add_vars(layout.len());
    let balance = balance_constraints(model, &layout)?;

    let v_count = rows.len();
    let shape = EpigraphShape {
        samples: data.len(),
        pieces: 2,
        support_rows: data.support.rows(),
        dim: data.dim(),
        ground_norm: amb.ground_norm,
    };
    let tau = qp.add_vars(v_count);
    let lambda = qp.add_vars(v_count);
    let s = qp.add_vars(v_count * shape.samples);
    let gamma = qp.add_vars(v_count * shape.gamma_len());
    let aux = qp.add_vars(v_count * shape.aux_len());
    let index = DroIndex {
        d: layout.d_range(),
        e: layout.e_range(),
        tau,
        lambda,
        s,
        gamma,
        aux,
        samples: shape.samples,
        gamma_per_row: shape.gamma_len(),
        aux_per_row: shape.aux_len(),
    };

    let cost = expected_cost(model, data, &layout)?;
    cost.add_to(&mut qp);
    for row in balance {
        qp.add_eq(row.expr);
    }
    for (v, map) in maps.iter().enumerate() {
        let (a, b) = map.exprs(&layout);
        let loss = cvar_pieces(a, b, risk.alpha, index.tau.start + v)?;
        dro_epigraph(&loss, data, &amb, risk.rho, &index.epigraph_vars(v), &mut qp)?;
    }

    let row_names = rows.iter().map(|r| risk_row_name(model, r)).collect();
    Ok(DroQp {
        qp: qp.build(),
        index,
        layout,
        risk: *risk,
        rows,
        row_names,
        cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    pub cost: f64,
    /// `λ_v·ε + mean_i s_{iv}` per risk row, already weighted by `ρ`.
    pub dro: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub policy: AffinePolicy,
    pub tau: Vec<f64>,
    pub lambda: Vec<f64>,
    pub objective: ObjectiveBreakdown,
    pub status: QpStatus,
    pub kkt: KktReport,
    pub iterations: u32,
    pub solve_time: f64,
    pub risk: RiskConfig,
    pub rows: Vec<RiskRow>,
    pub row_names: Vec<String>,
    pub z: Vec<f64>,
}

impl Solution {
    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }
}

/// Assemble and solve, then polish the policy onto the balance equalities.
pub fn solve(
    model: &HorizonModel,
    data: &ForecastDataset,
    risk: &RiskConfig,
    settings: &QpSettings,
) -> Result<Solution> {
    let dro = assemble(model, data, risk)?;
    solve_assembled(model, &dro, settings)
}

pub fn solve_assembled(model: &HorizonModel, dro: &DroQp, settings: &QpSettings) -> Result<Solution> {
    let sol = solve_qp(&dro.qp, settings)?;
    let mut z = sol.z.clone();
    if sol.status == QpStatus::Solved {
        project_onto_equalities(&dro.qp, dro.layout.len(), &mut z);
    }
    let cost = dro.cost.eval(&z);
    let terms = dro.dro_terms(&z);
    Ok(Solution {
        policy: dro.layout.extract(model, &z),
        tau: dro.index.tau.clone().map(|i| z[i]).collect(),
        lambda: dro.index.lambda.clone().map(|i| z[i]).collect(),
        objective: ObjectiveBreakdown {
            total: cost + terms.iter().sum::<f64>(),
            cost,
            dro: terms,
        },
        status: sol.status,
        kkt: sol.kkt,
        iterations: sol.iterations,
        solve_time: sol.solve_time,
        risk: dro.risk,
        rows: dro.rows.clone(),
        row_names: dro.row_names.clone(),
        z,
    })
}

/// Minimal-norm correction of the first `cols` variables so that
/// `A_eq z = b_eq` holds to rounding; the equalities only involve them.
fn project_onto_equalities(qp: &QpProblem, cols: usize, z: &mut [f64]) {
    let rows = qp.b_eq.len();
    if rows == 0 || cols == 0 {
        return;
    }
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    for &(r, c, v) in &qp.a_eq.triplets {
        if c >= cols {
            return;
        }
        a[(r, c)] += v;
    }
    let az = qp.a_eq.mul_vec(z);
    let resid = DVector::from_iterator(rows, qp.b_eq.iter().zip(&az).map(|(b, v)| b - v));
    let gram = &a * a.transpose();
    let svd = gram.svd(true, true);
    let Ok(y) = svd.solve(&resid, 1e-12 * svd.singular_values.max().max(1.0)) else {
        return;
    };
    let delta = a.transpose() * y;
    for (zi, d) in z.iter_mut().zip(delta.iter()) {
        *zi += d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dro_core::{empirical_cvar, worst_case_expectation_oracle, FixedPiece, SupportPolytope};
    use crate::horizon_model::test_cases::{generator, injection, two_bus};
    use crate::horizon_model::{validate_case, DeviceCost, LocalConstraints, NetworkCase};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(values: &[f64], dim: usize) -> ForecastDataset {
        ForecastDataset::unbounded(DMatrix::from_row_slice(values.len() / dim, dim, values)).unwrap()
    }

    /// Battery at bus 2: state (injection, SOC), input = charge setpoint.
    fn battery_case(horizon: usize) -> NetworkCase {
        let mut case = two_bus(5.0);
        case.horizon = horizon;
        case.same_step_recourse = false;
        let mut g = generator("g1", "1", 1.0, 0.5, horizon, 1);
        g.cost.h_u = DMatrix::identity(horizon, horizon) * 2.0;
        let mut bat = generator("bat", "2", 0.0, 0.0, horizon, 1);
        bat.a_step = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        bat.b_step = DMatrix::from_row_slice(2, 1, &[1.0, -0.9]);
        bat.x0 = DVector::from_vec(vec![0.0, 2.0]);
        bat.cost = DeviceCost::zero(2, 1, horizon);
        bat.cost.h_x = DMatrix::identity(2 * horizon, 2 * horizon) * 0.3;
        bat.cost.f_x = DVector::from_fn(2 * horizon, |i, _| 0.1 * i as f64);
        bat.cost.c = 0.7;
        // SOC ≤ 3 at every step
        let mut local = LocalConstraints::empty(2, 1, horizon, 1);
        local.t = DMatrix::from_fn(horizon, 2 * horizon, |r, c| if c == 2 * r + 1 { 1.0 } else { 0.0 });
        local.u = DMatrix::zeros(horizon, horizon);
        local.z = DMatrix::zeros(horizon, horizon);
        local.w = DVector::from_element(horizon, 3.0);
        bat.local = local;
        case.devices = vec![g, bat];
        case.injections = vec![injection(
            "w2",
            "2",
            vec![1.0; horizon],
            DMatrix::from_fn(horizon, horizon, |r, c| if r == c + 1 { 1.0 } else { 0.0 }),
        )];
        case
    }

    fn random_policy(model: &HorizonModel, layout: &PolicyLayout, rng: &mut ChaCha8Rng) -> (AffinePolicy, Vec<f64>) {
        let mut z = vec![0.0; layout.len()];
        for v in z.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        (layout.extract(model, &z), z)
    }

    #[test]
    fn expected_cost_matches_sample_average() {
        let model = validate_case(battery_case(3)).unwrap();
        let layout = PolicyLayout::new(&model, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = ForecastDataset::unbounded(DMatrix::from_fn(7, 3, |_, _| rng.random_range(-2.0..2.0))).unwrap();
        let form = expected_cost(&model, &data, &layout).unwrap();
        for _ in 0..5 {
            let (policy, z) = random_policy(&model, &layout, &mut rng);
            let direct = (0..data.len())
                .map(|i| sample_cost(&model, &policy, &data.sample_vector(i)))
                .sum::<f64>()
                / data.len() as f64;
            let quad = form.eval(&z);
            assert!((quad - direct).abs() < 1e-10 * (1.0 + direct.abs()), "{quad} vs {direct}");
        }
    }

    #[test]
    fn expected_cost_scalar_example() {
        // J = ½u², u = Dξ + e, samples ±1
        let mut case = two_bus(10.0);
        case.devices[0].cost.h_u = DMatrix::from_element(1, 1, 1.0);
        let model = validate_case(case).unwrap();
        let layout = PolicyLayout::new(&model, 0);
        let form = expected_cost(&model, &dataset(&[-1.0, 1.0], 1), &layout).unwrap();
        let (d, e) = (0.7, -1.3);
        let z = [d, e];
        assert!((form.eval(&z) - 0.5 * (e * e + d * d)).abs() < 1e-14);
    }

    #[test]
    fn expected_cost_without_recourse_ignores_data() {
        let model = validate_case(battery_case(2)).unwrap();
        let layout = PolicyLayout::new(&model, 0);
        let a = expected_cost(&model, &dataset(&[0.0, 1.0, 5.0, -3.0], 2), &layout).unwrap();
        let b = expected_cost(&model, &dataset(&[9.0, 9.0], 2), &layout).unwrap();
        let mut z = vec![0.0; layout.len()];
        for (k, i) in layout.e_range().enumerate() {
            z[i] = 0.3 * k as f64 - 0.4;
        }
        assert!((a.eval(&z) - b.eval(&z)).abs() < 1e-12);
    }

    #[test]
    fn two_bus_line_loss() {
        let model = validate_case(two_bus(4.0)).unwrap();
        let map = line_loss_coeffs(&model, 0);
        let (d, e) = (0.25, 0.5);
        let mut policy = AffinePolicy::open_loop(&model, vec![DVector::from_element(1, e)]);
        policy.devices[0].d[(0, 0)] = d;
        let (a, b) = map.coefficients(&policy);
        assert!((a[0] + (d + 1.0)).abs() < 1e-14);
        assert!((b - (-(1.0 + e) - 4.0)).abs() < 1e-14);
        let (a_rev, b_rev) = line_loss_coeffs(&model, 1).coefficients(&policy);
        assert!((a_rev[0] - (d + 1.0)).abs() < 1e-14);
        assert!((b_rev - ((1.0 + e) - 4.0)).abs() < 1e-14);
    }

    #[test]
    fn hedging_policy_removes_line_exposure() {
        let model = validate_case(two_bus(4.0)).unwrap();
        let mut policy = AffinePolicy::open_loop(&model, vec![DVector::from_element(1, -1.0)]);
        policy.devices[0].d[(0, 0)] = -1.0;
        for row in 0..2 {
            let (a, _) = line_loss_coeffs(&model, row).coefficients(&policy);
            assert_eq!(a[0], 0.0);
        }
    }

    #[test]
    fn line_map_exprs_agree_with_coefficients() {
        let model = validate_case(battery_case(3)).unwrap();
        let layout = PolicyLayout::new(&model, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (policy, z) = random_policy(&model, &layout, &mut rng);
        for r in risk_rows(&model) {
            let map = row_map(&model, &r).unwrap();
            let (a_expr, b_expr) = map.exprs(&layout);
            let (a, b) = map.coefficients(&policy);
            assert!((b_expr.eval(&z) - b).abs() < 1e-12);
            for c in 0..a.len() {
                assert!((a_expr[c].eval(&z) - a[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn box_bound_on_input() {
        let mut case = two_bus(4.0);
        let mut local = LocalConstraints::empty(1, 1, 1, 1);
        local.t = DMatrix::zeros(1, 1);
        local.u = DMatrix::from_element(1, 1, 1.0);
        local.z = DMatrix::zeros(1, 1);
        local.w = DVector::from_element(1, 2.5);
        case.devices[0].local = local;
        let model = validate_case(case).unwrap();
        let mut policy = AffinePolicy::open_loop(&model, vec![DVector::from_element(1, 0.75)]);
        policy.devices[0].d[(0, 0)] = -0.4;
        let (a, b) = device_loss_coeffs(&model, 0, 0).unwrap().coefficients(&policy);
        assert!((a[0] + 0.4).abs() < 1e-15);
        assert!((b - (0.75 - 2.5)).abs() < 1e-15);
        assert!(device_loss_coeffs(&model, 0, 1).is_err());
    }

    #[test]
    fn soc_bound_matches_simulation() {
        let model = validate_case(battery_case(2)).unwrap();
        let layout = PolicyLayout::new(&model, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (policy, _) = random_policy(&model, &layout, &mut rng);
        let xi = DVector::from_vec(vec![0.8, -1.1]);
        let u = policy.devices[1].input(&xi);
        // step the battery by hand
        let mut soc = 2.0;
        for (t, ut) in u.iter().enumerate() {
            soc += -0.9 * ut;
            let (a, b) = device_loss_coeffs(&model, 1, t).unwrap().coefficients(&policy);
            let g = a.dot(&xi) + b;
            assert!((g - (soc - 3.0)).abs() < 1e-12, "step {t}: {g} vs {}", soc - 3.0);
        }
    }

    /// Two generators and wind at two buses, one training sample pair.
    fn tiny_case(limit: f64) -> NetworkCase {
        let mut case = two_bus(limit);
        case.devices = vec![generator("g1", "1", 2.0, 1.0, 1, 1), generator("g2", "2", 1.0, 3.0, 1, 1)];
        case.injections = vec![injection("w2", "2", vec![-2.0], DMatrix::from_element(1, 1, 1.0))];
        case.monitored_lines = vec!["1-2".into()];
        case
    }

    #[test]
    fn tiny_instance_has_hand_counted_size() {
        let model = validate_case(tiny_case(1.0)).unwrap();
        let data = dataset(&[-0.5, 1.0], 1);
        let risk = RiskConfig::new(0.1, 1.0, 0.05, GroundNorm::One).unwrap();
        let dro = assemble(&model, &data, &risk).unwrap();
        // D: 2 gens × 1 free entry; e: 2; τ, λ: 2 rows; s: 2×2
        assert_eq!(dro.index.d, 0..2);
        assert_eq!(dro.index.e, 2..4);
        assert_eq!(dro.index.tau, 4..6);
        assert_eq!(dro.index.lambda, 6..8);
        assert_eq!(dro.index.s, 8..12);
        assert!(dro.index.gamma.is_empty() && dro.index.aux.is_empty());
        assert_eq!(dro.qp.n, 12);
        // nominal and ξ-coefficient balance
        assert_eq!(dro.qp.b_eq.len(), 2);
        // per row: 2 pieces × (2 norm rows + 2 sample rows)
        assert_eq!(dro.qp.u_in.len(), 2 * 2 * (2 + 2));
    }

    #[test]
    fn unbounded_support_omits_gamma() {
        let mut case = tiny_case(1.0);
        case.monitored_lines = vec!["2-1".into()];
        let model = validate_case(case).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = ForecastDataset::unbounded(DMatrix::from_fn(100, 1, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let dro = assemble(&model, &data, &RiskConfig::new(0.1, 1.0, 0.04, GroundNorm::One).unwrap()).unwrap();
        assert_eq!(dro.index.rows(), 2);
        assert_eq!(dro.index.s.len(), 200);
        assert_eq!(dro.index.gamma.len(), 0);
    }

    #[test]
    fn support_adds_gamma_variables() {
        let model = validate_case(tiny_case(1.0)).unwrap();
        let data = ForecastDataset::new(
            DMatrix::from_row_slice(3, 1, &[-0.5, 0.2, 1.0]),
            SupportPolytope::boxed(&[-2.0], &[2.0]),
        )
        .unwrap();
        let risk = RiskConfig::new(0.1, 1.0, 0.05, GroundNorm::Inf).unwrap();
        let dro = assemble(&model, &data, &risk).unwrap();
        assert_eq!(dro.index.gamma.len(), 2 * 3 * 2 * 2);
        assert_eq!(dro.index.aux.len(), 2 * 3 * 2);
        assert_eq!(dro.index.n(), dro.qp.n);
        let sol = solve_assembled(&model, &dro, &QpSettings::default()).unwrap();
        assert!(sol.is_solved());
    }

    fn random_data(seed: u64, n: usize) -> ForecastDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ForecastDataset::unbounded(DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.5..1.5))).unwrap()
    }

    #[test]
    fn zero_rho_minimizes_cost_under_balance() {
        let model = validate_case(tiny_case(0.1)).unwrap();
        let data = random_data(2, 10);
        let risk = RiskConfig::new(0.1, 0.0, 0.05, GroundNorm::One).unwrap();
        let sol = solve(&model, &data, &risk, &QpSettings::default()).unwrap();
        assert!(sol.is_solved());
        // closed form: minimize ½·2e1² + e1 + ½e2² + 3e2 s.t. e1 + e2 = 2
        // stationarity 2e1 + 1 = e2 + 3 → e1 = 4/3
        let e1 = sol.policy.devices[0].e[0];
        assert!((e1 - 4.0 / 3.0).abs() < 1e-6, "{e1}");
        assert!(sol.objective.dro.iter().all(|v| v.abs() < 1e-7));
    }

    #[test]
    fn zero_radius_epigraph_is_sample_average() {
        let model = validate_case(tiny_case(0.2)).unwrap();
        let data = random_data(4, 12);
        let risk = RiskConfig::new(0.2, 3.0, 0.0, GroundNorm::One).unwrap();
        let dro = assemble(&model, &data, &risk).unwrap();
        let sol = solve_assembled(&model, &dro, &QpSettings::default()).unwrap();
        assert!(sol.is_solved());
        for (v, r) in sol.rows.iter().enumerate() {
            let (a, b) = row_map(&model, r).unwrap().coefficients(&sol.policy);
            let tau = sol.tau[v];
            let avg = (0..data.len())
                .map(|i| {
                    let g = a.dot(&data.sample_vector(i)) + b;
                    risk.rho * ((g + tau).max(0.0) - risk.alpha * tau)
                })
                .sum::<f64>()
                / data.len() as f64;
            let mean_s = dro.index.s_of(v).map(|i| sol.z[i]).sum::<f64>() / data.len() as f64;
            assert!((mean_s - avg).abs() < 1e-7, "{mean_s} vs {avg}");
        }
    }

    #[test]
    fn lambda_sits_on_dual_norm_bound() {
        let model = validate_case(tiny_case(0.2)).unwrap();
        let data = random_data(6, 8);
        let risk = RiskConfig::new(0.1, 2.0, 0.1, GroundNorm::One).unwrap();
        let sol = solve(&model, &data, &risk, &QpSettings::default()).unwrap();
        assert!(sol.is_solved());
        for (v, r) in sol.rows.iter().enumerate() {
            let (a, _) = row_map(&model, r).unwrap().coefficients(&sol.policy);
            let bound = risk.rho * a.amax();
            assert!((sol.lambda[v] - bound).abs() < 1e-7, "{} vs {bound}", sol.lambda[v]);
        }
    }

    #[test]
    fn objective_nonincreasing_in_limit() {
        let data = random_data(8, 10);
        let risk = RiskConfig::new(0.1, 5.0, 0.05, GroundNorm::One).unwrap();
        let mut last = f64::INFINITY;
        for limit in [0.05, 0.25, 0.5, 1.0, 2.0, 4.0] {
            let model = validate_case(tiny_case(limit)).unwrap();
            let sol = solve(&model, &data, &risk, &QpSettings::default()).unwrap();
            assert!(sol.is_solved());
            let j = sol.objective.total;
            assert!(j <= last + 1e-7 * (1.0 + j.abs()), "limit {limit}: {j} > {last}");
            last = j;
        }
    }

    #[test]
    fn objective_matches_independent_reevaluation() {
        let model = validate_case(battery_case(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = ForecastDataset::unbounded(DMatrix::from_fn(15, 2, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let risk = RiskConfig::new(0.1, 1.5, 0.05, GroundNorm::One).unwrap();
        let sol = solve(&model, &data, &risk, &QpSettings::default()).unwrap();
        assert!(sol.is_solved(), "{:?}", sol.status);
        let cost = (0..data.len())
            .map(|i| sample_cost(&model, &sol.policy, &data.sample_vector(i)))
            .sum::<f64>()
            / data.len() as f64;
        let mut total = cost;
        for (v, r) in sol.rows.iter().enumerate() {
            let (a, b) = row_map(&model, r).unwrap().coefficients(&sol.policy);
            let tau = sol.tau[v];
            let pieces = [
                FixedPiece {
                    a: a.iter().map(|x| risk.rho * x).collect(),
                    b: risk.rho * (b + (1.0 - risk.alpha) * tau),
                },
                FixedPiece {
                    a: vec![0.0; a.len()],
                    b: -risk.rho * risk.alpha * tau,
                },
            ];
            total += worst_case_expectation_oracle(&pieces, &data, &risk.ambiguity()).unwrap();
        }
        let j = sol.objective.total;
        assert!((j - total).abs() <= 1e-6 * (1.0 + j.abs()), "{j} vs {total}");
        let parts = sol.objective.cost + sol.objective.dro.iter().sum::<f64>();
        assert!((parts - j).abs() <= 1e-8 * (1.0 + j.abs()));
    }

    #[test]
    fn solution_policy_balances_every_sample() {
        let model = validate_case(battery_case(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = ForecastDataset::unbounded(DMatrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let risk = RiskConfig::new(0.1, 1.0, 0.02, GroundNorm::One).unwrap();
        let sol = solve(&model, &data, &risk, &QpSettings::default()).unwrap();
        assert!(sol.is_solved());
        for _ in 0..100 {
            let xi = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            for t in 0..3 {
                let mut total = 0.0;
                for inj in &model.case.injections {
                    total += inj.r[t] + (inj.g.row(t) * &xi)[0];
                }
                for (stack, p) in model.devices.iter().zip(&sol.policy.devices) {
                    let u = p.input(&xi);
                    total += (&stack.ca_x0 + &stack.cb * u)[t];
                }
                assert!(total.abs() < 1e-9, "step {t}: {total}");
            }
        }
    }

    #[test]
    fn predicted_cvar_identity_holds_at_optimum() {
        let model = validate_case(tiny_case(0.2)).unwrap();
        let data = random_data(10, 20);
        let risk = RiskConfig::new(0.2, 2.0, 0.03, GroundNorm::One).unwrap();
        let sol = solve(&model, &data, &risk, &QpSettings::default()).unwrap();
        for (v, r) in sol.rows.iter().enumerate() {
            let (a, b) = row_map(&model, r).unwrap().coefficients(&sol.policy);
            let g: Vec<f64> = (0..data.len()).map(|i| a.dot(&data.sample_vector(i)) + b).collect();
            let formula = empirical_cvar(&g, risk.alpha).unwrap() + risk.epsilon * a.amax() / risk.alpha;
            let from_terms = sol.objective.dro[v] / (risk.rho * risk.alpha);
            assert!((formula - from_terms).abs() < 1e-6 * (1.0 + formula.abs()), "{formula} vs {from_terms}");
        }
    }

    #[test]
    fn assembly_is_deterministic_and_serializes() {
        let model = validate_case(tiny_case(0.5)).unwrap();
        let data = random_data(3, 5);
        let risk = RiskConfig::new(0.1, 1.0, 0.05, GroundNorm::One).unwrap();
        let a = serde_json::to_string(&DroQpFile::from(&assemble(&model, &data, &risk).unwrap())).unwrap();
        let b = serde_json::to_string(&DroQpFile::from(&assemble(&model, &data, &risk).unwrap())).unwrap();
        assert_eq!(a, b);
        let back: DroQpFile = serde_json::from_str(&a).unwrap();
        assert_eq!(back.qp.n, 8 + 2 * 5);
    }

    #[test]
    fn assemble_rejects_bad_input() {
        let model = validate_case(tiny_case(0.5)).unwrap();
        let risk = RiskConfig::new(0.1, 1.0, 0.05, GroundNorm::One).unwrap();
        assert!(matches!(assemble(&model, &dataset(&[1.0, 2.0], 2), &risk), Err(Error::Dimension(_))));
        assert!(RiskConfig::new(0.0, 1.0, 0.0, GroundNorm::One).is_err());
        assert!(RiskConfig::new(0.1, -1.0, 0.0, GroundNorm::One).is_err());
        assert!(RiskConfig::new(0.1, 1.0, -0.1, GroundNorm::One).is_err());
    }
}
