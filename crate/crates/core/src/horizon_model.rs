//! Network case description and the horizon-stacked matrices derived from it.
//!
//! A [`NetworkCase`] is the raw, user-supplied description: buses, lines with
//! reactances and limits, controllable devices with linear dynamics, and
//! uncontrollable injections driven by forecast errors. [`validate_case`]
//! checks it and produces an immutable [`HorizonModel`] holding
//!
//! * per device the stacked dynamics `x = A_stack·x0 + B_stack·u` together
//!   with the injection selector `C` (first state coordinate at every step),
//! * DC power-transfer distribution factors and, per device and injection,
//!   the line-mapping matrix `Γ` over `2·L·T` directed line-time rows,
//! * the stacked line limits and the subset of rows monitored for risk.
//!
//! Directed line-time rows are ordered `row = 2·(t·L + l) + dir`, where
//! `dir = 0` is the from→to direction and `dir = 1` the reverse.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bus identifier. Case files may use integers or strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "BusIdRepr", into = "BusIdRepr")]
pub struct BusId(pub String);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BusIdRepr {
    Int(i64),
    Str(String),
}

impl From<BusIdRepr> for BusId {
    fn from(r: BusIdRepr) -> Self {
        match r {
            BusIdRepr::Int(i) => BusId(i.to_string()),
            BusIdRepr::Str(s) => BusId(s),
        }
    }
}

impl From<BusId> for BusIdRepr {
    fn from(b: BusId) -> Self {
        match b.0.parse::<i64>() {
            Ok(i) if i.to_string() == b.0 => BusIdRepr::Int(i),
            _ => BusIdRepr::Str(b.0),
        }
    }
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BusId {
    fn from(s: &str) -> Self {
        BusId(s.to_string())
    }
}

impl From<u32> for BusId {
    fn from(i: u32) -> Self {
        BusId(i.to_string())
    }
}

/// Convex quadratic device cost over the stacked state and input trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceCost {
    pub f_x: DVector<f64>,
    pub h_x: DMatrix<f64>,
    pub f_u: DVector<f64>,
    pub h_u: DMatrix<f64>,
    pub c: f64,
}

impl DeviceCost {
    pub fn zero(n: usize, m: usize, horizon: usize) -> Self {
        Self {
            f_x: DVector::zeros(n * horizon),
            h_x: DMatrix::zeros(n * horizon, n * horizon),
            f_u: DVector::zeros(m * horizon),
            h_u: DMatrix::zeros(m * horizon, m * horizon),
            c: 0.0,
        }
    }
}

/// Local linear constraints `T·x + U·u + Z·ξ ≤ w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalConstraints {
    pub t: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub w: DVector<f64>,
}

impl LocalConstraints {
    pub fn empty(n: usize, m: usize, horizon: usize, n_xi: usize) -> Self {
        Self {
            t: DMatrix::zeros(0, n * horizon),
            u: DMatrix::zeros(0, m * horizon),
            z: DMatrix::zeros(0, n_xi * horizon),
            w: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllableDevice {
    pub id: String,
    pub bus: BusId,
    /// One-step dynamics matrix, n×n.
    pub a_step: DMatrix<f64>,
    /// One-step input matrix, n×m.
    pub b_step: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub cost: DeviceCost,
    pub local: LocalConstraints,
}

impl ControllableDevice {
    pub fn n(&self) -> usize {
        self.a_step.nrows()
    }

    pub fn m(&self) -> usize {
        self.b_step.ncols()
    }
}

/// Fixed injection `r + G·ξ` (positive = into the network).
#[derive(Debug, Clone, PartialEq)]
pub struct UncontrollableInjection {
    pub id: String,
    pub bus: BusId,
    pub r: DVector<f64>,
    pub g: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub x_pu: f64,
    pub limit_mw: f64,
    /// Limit for the to→from direction when it differs from `limit_mw`.
    pub limit_reverse_mw: Option<f64>,
}

impl Line {
    pub fn name(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub buses: Vec<BusId>,
    pub slack: BusId,
    pub lines: Vec<Line>,
    pub devices: Vec<ControllableDevice>,
    pub injections: Vec<UncontrollableInjection>,
    pub horizon: usize,
    pub n_xi: usize,
    /// `"from-to"` names; empty means every line.
    pub monitored_lines: Vec<String>,
    /// Allow inputs at step t to react to errors revealed at step t.
    pub same_step_recourse: bool,
}

impl NetworkCase {
    pub fn xi_dim(&self) -> usize {
        self.n_xi * self.horizon
    }
}

/// Horizon-stacked matrices of a single device.
#[derive(Debug, Clone)]
pub struct DeviceStack {
    pub n: usize,
    pub m: usize,
    /// nT×n
    pub a_stack: DMatrix<f64>,
    /// nT×mT, block lower-triangular
    pub b_stack: DMatrix<f64>,
    /// T×nT, selects the first state coordinate at each step
    pub c_sel: DMatrix<f64>,
    /// `C·B`, T×mT
    pub cb: DMatrix<f64>,
    /// `C·A·x0`, length T
    pub ca_x0: DVector<f64>,
    /// `A·x0`, length nT
    pub a_x0: DVector<f64>,
}

/// DC power-transfer distribution factors, `L × (#buses)`.
///
/// Entry `(l, b)` is the flow on line `l` (from→to positive) caused by one
/// unit injected at bus `b` and withdrawn at the slack bus.
#[derive(Debug, Clone)]
pub struct Ptdf {
    pub factors: DMatrix<f64>,
}

impl Ptdf {
    /// Line-mapping matrix `Γ` (2LT×T) for something connected at `bus`.
    pub fn gamma(&self, bus: usize, horizon: usize) -> DMatrix<f64> {
        let lines = self.factors.nrows();
        let mut g = DMatrix::zeros(2 * lines * horizon, horizon);
        for t in 0..horizon {
            for l in 0..lines {
                let f = self.factors[(l, bus)];
                let row = 2 * (t * lines + l);
                g[(row, t)] = f;
                g[(row + 1, t)] = -f;
            }
        }
        g
    }
}

/// Validated, immutable model shared by assembly, evaluation and MPC.
#[derive(Debug, Clone)]
pub struct HorizonModel {
    pub case: NetworkCase,
    pub devices: Vec<DeviceStack>,
    pub ptdf: Ptdf,
    pub bus_index: HashMap<BusId, usize>,
    pub gamma_devices: Vec<DMatrix<f64>>,
    pub gamma_injections: Vec<DMatrix<f64>>,
    pub p_bar: DVector<f64>,
    /// Directed line-time rows routed through the risk term, ascending.
    pub monitored: Vec<usize>,
}

impl HorizonModel {
    pub fn horizon(&self) -> usize {
        self.case.horizon
    }

    pub fn n_xi(&self) -> usize {
        self.case.n_xi
    }

    pub fn xi_dim(&self) -> usize {
        self.case.xi_dim()
    }

    pub fn n_lines(&self) -> usize {
        self.case.lines.len()
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    /// Total number of local-device constraint rows.
    pub fn n_local(&self) -> usize {
        self.case.devices.iter().map(|d| d.local.len()).sum()
    }

    /// `(line, time, direction)` of a directed line-time row.
    pub fn row_label(&self, row: usize) -> (usize, usize, usize) {
        let lines = self.n_lines();
        let dir = row % 2;
        let lt = row / 2;
        (lt % lines, lt / lines, dir)
    }

    pub fn row_name(&self, row: usize) -> String {
        let (l, t, dir) = self.row_label(row);
        let line = &self.case.lines[l];
        if dir == 0 {
            format!("{}->{}@{}", line.from, line.to, t)
        } else {
            format!("{}->{}@{}", line.to, line.from, t)
        }
    }

    /// Line flows on all directed rows for explicit bus injections (MW per
    /// bus and step, `#buses × T`). Injections need not be balanced; the
    /// slack absorbs the remainder.
    pub fn flows_from_bus_injections(&self, injections: &DMatrix<f64>) -> DVector<f64> {
        let lines = self.n_lines();
        let horizon = self.horizon();
        let line_flows = &self.ptdf.factors * injections;
        let mut out = DVector::zeros(2 * lines * horizon);
        for t in 0..horizon {
            for l in 0..lines {
                let row = 2 * (t * lines + l);
                out[row] = line_flows[(l, t)];
                out[row + 1] = -line_flows[(l, t)];
            }
        }
        out
    }
}

/// Stack one-step dynamics over `horizon` steps.
///
/// Row block `t` of `A_stack` is `Ā^{t+1}`; block `(t, s)` of `B_stack` is
/// `Ā^{t-s}·B̄` for `s ≤ t` and zero above the diagonal.
pub fn stack_dynamics(
    a_step: &DMatrix<f64>,
    b_step: &DMatrix<f64>,
    horizon: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_step.nrows();
    if a_step.ncols() != n {
        return Err(Error::CaseValidation(format!(
            "dynamics matrix is {}x{}, expected square",
            a_step.nrows(),
            a_step.ncols()
        )));
    }
    if b_step.nrows() != n {
        return Err(Error::CaseValidation(format!(
            "input matrix has {} rows, expected {n}",
            b_step.nrows()
        )));
    }
    if horizon == 0 {
        return Err(Error::CaseValidation("horizon must be at least 1".into()));
    }
    let m = b_step.ncols();
    let mut a_stack = DMatrix::zeros(n * horizon, n);
    let mut b_stack = DMatrix::zeros(n * horizon, m * horizon);

    // powers[k] = Ā^k
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::<f64>::identity(n, n));
    for k in 1..=horizon {
        let next = a_step * &powers[k - 1];
        powers.push(next);
    }
    let ab: Vec<DMatrix<f64>> = powers[..horizon].iter().map(|p| p * b_step).collect();

    for t in 0..horizon {
        a_stack
            .view_mut((t * n, 0), (n, n))
            .copy_from(&powers[t + 1]);
        for s in 0..=t {
            b_stack
                .view_mut((t * n, s * m), (n, m))
                .copy_from(&ab[t - s]);
        }
    }
    Ok((a_stack, b_stack))
}

/// Injection selector picking the first state coordinate of every step.
pub fn injection_selector(n: usize, horizon: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(horizon, n * horizon);
    for t in 0..horizon {
        c[(t, t * n)] = 1.0;
    }
    c
}

/// DC power-transfer distribution factors from line reactances.
///
/// Uses the nodal susceptance matrix with the slack row and column removed.
pub fn build_ptdf(case: &NetworkCase) -> Result<Ptdf> {
    let bus_index = index_buses(case)?;
    check_lines(case, &bus_index)?;
    check_connected(case, &bus_index)?;

    let nb = case.buses.len();
    let slack = bus_index[&case.slack];
    let reduced: Vec<usize> = (0..nb).filter(|&b| b != slack).collect();
    let mut pos = vec![usize::MAX; nb];
    for (k, &b) in reduced.iter().enumerate() {
        pos[b] = k;
    }

    let nr = reduced.len();
    let mut b_red = DMatrix::<f64>::zeros(nr, nr);
    for line in &case.lines {
        let f = bus_index[&line.from];
        let t = bus_index[&line.to];
        let y = 1.0 / line.x_pu;
        if f != slack {
            b_red[(pos[f], pos[f])] += y;
        }
        if t != slack {
            b_red[(pos[t], pos[t])] += y;
        }
        if f != slack && t != slack {
            b_red[(pos[f], pos[t])] -= y;
            b_red[(pos[t], pos[f])] -= y;
        }
    }

    // angle sensitivities, zero row/column at the slack
    let mut x_full = DMatrix::<f64>::zeros(nb, nb);
    if nr > 0 {
        let lu = b_red.clone().lu();
        let inv = lu.try_inverse().ok_or_else(|| {
            Error::SingularSusceptance(format!("slack bus {} island", case.slack))
        })?;
        let scale = b_red.amax().max(1.0);
        let check = &b_red * &inv - DMatrix::<f64>::identity(nr, nr);
        if !inv.iter().all(|v| v.is_finite()) || check.amax() > 1e-6 * scale {
            // locate the worst-conditioned bus to name it
            let worst = (0..nr)
                .max_by(|&a, &b| {
                    inv[(a, a)]
                        .abs()
                        .partial_cmp(&inv[(b, b)].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .map(|k| case.buses[reduced[k]].to_string())
                .unwrap_or_default();
            return Err(Error::SingularSusceptance(format!(
                "ill-conditioned around bus {worst}"
            )));
        }
        for (i, &bi) in reduced.iter().enumerate() {
            for (j, &bj) in reduced.iter().enumerate() {
                x_full[(bi, bj)] = inv[(i, j)];
            }
        }
    }

    let mut factors = DMatrix::zeros(case.lines.len(), nb);
    for (l, line) in case.lines.iter().enumerate() {
        let f = bus_index[&line.from];
        let t = bus_index[&line.to];
        for b in 0..nb {
            factors[(l, b)] = (x_full[(f, b)] - x_full[(t, b)]) / line.x_pu;
        }
    }
    Ok(Ptdf { factors })
}

fn index_buses(case: &NetworkCase) -> Result<HashMap<BusId, usize>> {
    let mut idx = HashMap::with_capacity(case.buses.len());
    for (k, b) in case.buses.iter().enumerate() {
        if idx.insert(b.clone(), k).is_some() {
            return Err(Error::CaseValidation(format!("duplicate bus {b}")));
        }
    }
    if !idx.contains_key(&case.slack) {
        return Err(Error::CaseValidation(format!(
            "slack bus {} is not in the bus list",
            case.slack
        )));
    }
    Ok(idx)
}

fn check_lines(case: &NetworkCase, idx: &HashMap<BusId, usize>) -> Result<()> {
    for line in &case.lines {
        let name = line.name();
        for end in [&line.from, &line.to] {
            if !idx.contains_key(end) {
                return Err(Error::CaseValidation(format!(
                    "line {name}: unknown bus {end}"
                )));
            }
        }
        if line.from == line.to {
            return Err(Error::CaseValidation(format!("line {name}: self loop")));
        }
        if !(line.x_pu.is_finite() && line.x_pu > 0.0) {
            return Err(Error::CaseValidation(format!(
                "line {name}: reactance must be positive, got {}",
                line.x_pu
            )));
        }
        let rev = line.limit_reverse_mw.unwrap_or(line.limit_mw);
        if !(line.limit_mw.is_finite() && line.limit_mw > 0.0 && rev.is_finite() && rev > 0.0)
        {
            return Err(Error::CaseValidation(format!(
                "line {name}: limits must be positive, got {} / {rev}",
                line.limit_mw
            )));
        }
    }
    Ok(())
}

fn check_connected(case: &NetworkCase, idx: &HashMap<BusId, usize>) -> Result<()> {
    let nb = case.buses.len();
    let mut adj = vec![Vec::new(); nb];
    for line in &case.lines {
        let f = idx[&line.from];
        let t = idx[&line.to];
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut seen = vec![false; nb];
    let start = idx[&case.slack];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(b) = queue.pop_front() {
        for &nbr in &adj[b] {
            if !seen[nbr] {
                seen[nbr] = true;
                queue.push_back(nbr);
            }
        }
    }
    let unreachable: Vec<String> = (0..nb)
        .filter(|&b| !seen[b])
        .map(|b| case.buses[b].to_string())
        .collect();
    if unreachable.is_empty() {
        Ok(())
    } else {
        Err(Error::Disconnected(unreachable))
    }
}

fn check_psd(name: &str, what: &str, h: &DMatrix<f64>) -> Result<()> {
    if h.nrows() == 0 {
        return Ok(());
    }
    let norm = h.norm();
    let asym = (h - h.transpose()).amax();
    if asym > 1e-9 * norm.max(1.0) {
        return Err(Error::CaseValidation(format!(
            "device {name}: {what} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-9 * norm {
        return Err(Error::CaseValidation(format!(
            "device {name}: {what} is not positive semidefinite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(())
}

fn check_shape(
    owner: &str,
    what: &str,
    got: (usize, usize),
    want: (usize, usize),
) -> Result<()> {
    if got != want {
        return Err(Error::CaseValidation(format!(
            "{owner}: {what} is {}x{}, expected {}x{}",
            got.0, got.1, want.0, want.1
        )));
    }
    Ok(())
}

fn check_finite<'a>(owner: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::CaseValidation(format!("{owner}: non-finite entry")))
    }
}

fn validate_device(d: &ControllableDevice, horizon: usize, n_xi: usize) -> Result<()> {
    let owner = format!("device {}", d.id);
    let n = d.n();
    let m = d.m();
    if n == 0 || m == 0 {
        return Err(Error::CaseValidation(format!(
            "{owner}: state and input dimensions must be positive"
        )));
    }
    let nt = n * horizon;
    let mt = m * horizon;
    check_shape(&owner, "a", d.a_step.shape(), (n, n))?;
    check_shape(&owner, "b", d.b_step.shape(), (n, m))?;
    check_shape(&owner, "x0", d.x0.shape(), (n, 1))?;
    check_shape(&owner, "f_x", d.cost.f_x.shape(), (nt, 1))?;
    check_shape(&owner, "h_x", d.cost.h_x.shape(), (nt, nt))?;
    check_shape(&owner, "f_u", d.cost.f_u.shape(), (mt, 1))?;
    check_shape(&owner, "h_u", d.cost.h_u.shape(), (mt, mt))?;
    let l = d.local.w.len();
    check_shape(&owner, "local t", d.local.t.shape(), (l, nt))?;
    check_shape(&owner, "local u", d.local.u.shape(), (l, mt))?;
    check_shape(&owner, "local z", d.local.z.shape(), (l, n_xi * horizon))?;
    for (what, vals) in [
        ("a", d.a_step.as_slice()),
        ("b", d.b_step.as_slice()),
        ("x0", d.x0.as_slice()),
        ("f_x", d.cost.f_x.as_slice()),
        ("h_x", d.cost.h_x.as_slice()),
        ("f_u", d.cost.f_u.as_slice()),
        ("h_u", d.cost.h_u.as_slice()),
        ("local", d.local.t.as_slice()),
        ("local", d.local.u.as_slice()),
        ("local", d.local.z.as_slice()),
        ("local", d.local.w.as_slice()),
    ] {
        check_finite(&format!("{owner} {what}"), vals)?;
    }
    if !d.cost.c.is_finite() {
        return Err(Error::CaseValidation(format!("{owner}: non-finite cost offset")));
    }
    check_psd(&d.id, "h_x", &d.cost.h_x)?;
    check_psd(&d.id, "h_u", &d.cost.h_u)?;
    Ok(())
}

/// Resolve `"from-to"` names (either orientation) to line indices.
pub fn resolve_lines(case: &NetworkCase, names: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for name in names {
        let mut found = false;
        for (split, _) in name.match_indices('-') {
            let a = BusId(name[..split].trim().to_string());
            let b = BusId(name[split + 1..].trim().to_string());
            for (l, line) in case.lines.iter().enumerate() {
                if (line.from == a && line.to == b) || (line.from == b && line.to == a) {
                    out.push(l);
                    found = true;
                }
            }
            if found {
                break;
            }
        }
        if !found {
            return Err(Error::CaseValidation(format!(
                "monitored line {name} does not exist"
            )));
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Check every invariant of `case` and build the stacked model.
pub fn validate_case(case: NetworkCase) -> Result<HorizonModel> {
    let horizon = case.horizon;
    if horizon == 0 {
        return Err(Error::CaseValidation("horizon must be at least 1".into()));
    }
    if case.n_xi == 0 {
        return Err(Error::CaseValidation(
            "uncertainty dimension n_xi must be at least 1".into(),
        ));
    }
    if case.devices.is_empty() {
        return Err(Error::CaseValidation(
            "at least one controllable device is required".into(),
        ));
    }
    let bus_index = index_buses(&case)?;
    let mut ids = HashMap::new();
    for d in &case.devices {
        if ids.insert(d.id.clone(), ()).is_some() {
            return Err(Error::CaseValidation(format!("duplicate device id {}", d.id)));
        }
        if !bus_index.contains_key(&d.bus) {
            return Err(Error::CaseValidation(format!(
                "device {}: unknown bus {}",
                d.id, d.bus
            )));
        }
        validate_device(d, horizon, case.n_xi)?;
    }
    for inj in &case.injections {
        let owner = format!("injection {}", inj.id);
        if !bus_index.contains_key(&inj.bus) {
            return Err(Error::CaseValidation(format!("{owner}: unknown bus {}", inj.bus)));
        }
        check_shape(&owner, "r", inj.r.shape(), (horizon, 1))?;
        check_shape(&owner, "g", inj.g.shape(), (horizon, case.xi_dim()))?;
        check_finite(&owner, inj.r.iter().chain(inj.g.iter()))?;
    }

    let ptdf = build_ptdf(&case)?;

    let devices = case
        .devices
        .iter()
        .map(|d| {
            let (a_stack, b_stack) = stack_dynamics(&d.a_step, &d.b_step, horizon)?;
            let c_sel = injection_selector(d.n(), horizon);
            let cb = &c_sel * &b_stack;
            let a_x0 = &a_stack * &d.x0;
            let ca_x0 = &c_sel * &a_x0;
            Ok(DeviceStack {
                n: d.n(),
                m: d.m(),
                a_stack,
                b_stack,
                c_sel,
                cb,
                ca_x0,
                a_x0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let gamma_devices = case
        .devices
        .iter()
        .map(|d| ptdf.gamma(bus_index[&d.bus], horizon))
        .collect();
    let gamma_injections = case
        .injections
        .iter()
        .map(|i| ptdf.gamma(bus_index[&i.bus], horizon))
        .collect();

    let lines = case.lines.len();
    let mut p_bar = DVector::zeros(2 * lines * horizon);
    for t in 0..horizon {
        for (l, line) in case.lines.iter().enumerate() {
            let row = 2 * (t * lines + l);
            p_bar[row] = line.limit_mw;
            p_bar[row + 1] = line.limit_reverse_mw.unwrap_or(line.limit_mw);
        }
    }

    let monitored_lines: Vec<usize> = if case.monitored_lines.is_empty() {
        (0..lines).collect()
    } else {
        resolve_lines(&case, &case.monitored_lines)?
    };
    let mut monitored = Vec::with_capacity(2 * monitored_lines.len() * horizon);
    for t in 0..horizon {
        for &l in &monitored_lines {
            let row = 2 * (t * lines + l);
            monitored.push(row);
            monitored.push(row + 1);
        }
    }
    monitored.sort_unstable();

    Ok(HorizonModel {
        case,
        devices,
        ptdf,
        bus_index,
        gamma_devices,
        gamma_injections,
        p_bar,
        monitored,
    })
}
