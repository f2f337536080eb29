//! Canonical convex QP and its solve contract.
//!
//! ```text
//! minimize    ½ z'Pz + q'z + constant
//! subject to  A_eq z  = b_eq
//!             A_in z ≤ u_in
//! ```
//!
//! Problems are assembled through [`QpBuilder`] and solved by [`solve_qp`],
//! which runs the Clarabel interior-point method and then re-checks the
//! returned point with [`kkt_residuals`]. A point whose residuals miss the
//! tolerance is never reported as [`QpStatus::Solved`].

use std::ops::Range;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linexpr::LinExpr;

/// Coordinate-format sparse matrix; repeated entries add up.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            triplets: Vec::new(),
        }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.triplets.push((r, c, v));
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    pub fn mul_t_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        for &(r, c, v) in &self.triplets {
            x[c] += v * y[r];
        }
        x
    }

    /// Sort by (row, col) and merge duplicates.
    pub fn canonicalize(&mut self) {
        self.triplets.sort_by_key(|t| (t.0, t.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(self.triplets.len());
        for &(r, c, v) in &self.triplets {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|t| t.2 != 0.0);
        self.triplets = merged;
    }

    fn to_csc(&self, upper_only: bool) -> CscMatrix<f64> {
        let mut i = Vec::with_capacity(self.triplets.len());
        let mut j = Vec::with_capacity(self.triplets.len());
        let mut v = Vec::with_capacity(self.triplets.len());
        for &(r, c, x) in &self.triplets {
            if upper_only && r > c {
                continue;
            }
            i.push(r);
            j.push(c);
            v.push(x);
        }
        CscMatrix::new_from_triplets(self.rows, self.cols, i, j, v)
    }
}

/// The canonical problem handed to the solver.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub n: usize,
    /// Symmetric; both triangles stored.
    pub p: SparseMatrix,
    pub q: Vec<f64>,
    pub constant: f64,
    pub a_eq: SparseMatrix,
    pub b_eq: Vec<f64>,
    pub a_in: SparseMatrix,
    pub u_in: Vec<f64>,
}

impl QpProblem {
    pub fn objective(&self, z: &[f64]) -> f64 {
        let pz = self.p.mul_vec(z);
        let quad: f64 = z.iter().zip(&pz).map(|(a, b)| a * b).sum();
        let lin: f64 = z.iter().zip(&self.q).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.constant
    }

    /// Lagrangian dual value at `(z, y_eq, y_in)`; a lower bound on the
    /// optimum whenever `z` satisfies stationarity and `y_in ≥ 0`.
    pub fn dual_objective(&self, z: &[f64], y_eq: &[f64], y_in: &[f64]) -> f64 {
        let pz = self.p.mul_vec(z);
        let quad: f64 = z.iter().zip(&pz).map(|(a, b)| a * b).sum();
        let by: f64 = self.b_eq.iter().zip(y_eq).map(|(a, b)| a * b).sum();
        let uy: f64 = self.u_in.iter().zip(y_in).map(|(a, b)| a * b).sum();
        -0.5 * quad - by - uy + self.constant
    }

    pub fn check_dims(&self) -> Result<()> {
        let within = |m: &SparseMatrix| {
            m.triplets
                .iter()
                .all(|&(r, c, v)| r < m.rows && c < m.cols && v.is_finite())
        };
        let ok = self.p.rows == self.n
            && self.p.cols == self.n
            && self.q.len() == self.n
            && self.a_eq.cols == self.n
            && self.a_in.cols == self.n
            && self.a_eq.rows == self.b_eq.len()
            && self.a_in.rows == self.u_in.len()
            && within(&self.p)
            && within(&self.a_eq)
            && within(&self.a_in)
            && self.q.iter().chain(&self.b_eq).chain(&self.u_in).all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("inconsistent QP data".into()))
        }
    }
}

/// Incremental assembly of a [`QpProblem`] from affine expressions.
#[derive(Debug, Default)]
pub struct QpBuilder {
    n: usize,
    p: Vec<(usize, usize, f64)>,
    objective: LinExpr,
    eq: Vec<LinExpr>,
    ineq: Vec<LinExpr>,
}

impl QpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn add_vars(&mut self, count: usize) -> Range<usize> {
        let start = self.n;
        self.n += count;
        start..self.n
    }

    /// Adds `v` to `P[i,j]` and `P[j,i]` (once when `i == j`).
    pub fn add_quad(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        if i == j {
            self.p.push((i, i, v));
        } else {
            self.p.push((i, j, v));
            self.p.push((j, i, v));
        }
    }

    pub fn add_objective(&mut self, expr: &LinExpr, scale: f64) {
        self.objective.add_scaled(expr, scale);
    }

    /// `expr = 0`.
    pub fn add_eq(&mut self, expr: LinExpr) {
        self.eq.push(expr);
    }

    /// `expr ≤ 0`.
    pub fn add_le(&mut self, expr: LinExpr) {
        self.ineq.push(expr);
    }

    pub fn n_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq.len()
    }

    pub fn build(self) -> QpProblem {
        let n = self.n;
        let mut p = SparseMatrix {
            rows: n,
            cols: n,
            triplets: self.p,
        };
        p.canonicalize();
        let mut q = vec![0.0; n];
        for &(i, c) in &self.objective.terms {
            q[i] += c;
        }
        let (a_eq, b_eq) = rows_to_matrix(self.eq, n);
        let (a_in, u_in) = rows_to_matrix(self.ineq, n);
        QpProblem {
            n,
            p,
            q,
            constant: self.objective.constant,
            a_eq,
            b_eq,
            a_in,
            u_in,
        }
    }
}

fn rows_to_matrix(rows: Vec<LinExpr>, n: usize) -> (SparseMatrix, Vec<f64>) {
    let mut a = SparseMatrix::new(rows.len(), n);
    let mut rhs = Vec::with_capacity(rows.len());
    for (r, expr) in rows.into_iter().enumerate() {
        for &(c, v) in &expr.terms {
            a.push(r, c, v);
        }
        rhs.push(-expr.constant);
    }
    a.canonicalize();
    (a, rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// Infinity norms of the KKT conditions at a candidate point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub dual_feasibility: f64,
    pub complementarity: f64,
}

/// Residuals of `(z, y_eq, y_in)` against the KKT system of `qp`.
///
/// Stationarity is `‖Pz + q + A_eq'y_eq + A_in'y_in‖∞`; the sign convention
/// matches `y_in ≥ 0` for `A_in z ≤ u_in`.
pub fn kkt_residuals(qp: &QpProblem, z: &[f64], y_eq: &[f64], y_in: &[f64]) -> KktReport {
    let mut grad = qp.p.mul_vec(z);
    for (g, q) in grad.iter_mut().zip(&qp.q) {
        *g += q;
    }
    for (g, v) in grad.iter_mut().zip(qp.a_eq.mul_t_vec(y_eq)) {
        *g += v;
    }
    for (g, v) in grad.iter_mut().zip(qp.a_in.mul_t_vec(y_in)) {
        *g += v;
    }
    let eq = qp.a_eq.mul_vec(z);
    let ineq = qp.a_in.mul_vec(z);
    let primal_eq = eq
        .iter()
        .zip(&qp.b_eq)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let primal_ineq = ineq
        .iter()
        .zip(&qp.u_in)
        .map(|(a, u)| (a - u).max(0.0))
        .fold(0.0, f64::max);
    let dual_feasibility = y_in.iter().map(|&y| (-y).max(0.0)).fold(0.0, f64::max);
    let complementarity = ineq
        .iter()
        .zip(&qp.u_in)
        .zip(y_in)
        .map(|((a, u), y)| (y * (u - a)).abs())
        .fold(0.0, f64::max);
    KktReport {
        stationarity: grad.iter().map(|g| g.abs()).fold(0.0, f64::max),
        primal_eq,
        primal_ineq,
        dual_feasibility,
        complementarity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpSolution {
    pub status: QpStatus,
    pub z: Vec<f64>,
    pub y_eq: Vec<f64>,
    pub y_in: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub iterations: u32,
    pub solve_time: f64,
    pub kkt: KktReport,
}

impl QpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }
}

/// Whether a KKT report meets the acceptance thresholds for `qp`.
///
/// Residuals are measured relative to the magnitudes of the terms they
/// balance: primal rows against `1 + max(‖b‖∞, ‖Az‖∞)`, stationarity
/// against `1 + max(‖q‖∞, ‖Pz‖∞, ‖A'y‖∞)`.
pub fn kkt_acceptable(qp: &QpProblem, z: &[f64], y_eq: &[f64], y_in: &[f64], kkt: &KktReport, tol: f64) -> bool {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let primal_scale = 1.0
        + inf(&qp.b_eq)
            .max(inf(&qp.u_in))
            .max(inf(&qp.a_eq.mul_vec(z)))
            .max(inf(&qp.a_in.mul_vec(z)));
    let dual_scale = 1.0
        + inf(&qp.q)
            .max(inf(&qp.p.mul_vec(z)))
            .max(inf(&qp.a_eq.mul_t_vec(y_eq)))
            .max(inf(&qp.a_in.mul_t_vec(y_in)));
    kkt.primal_eq <= tol * primal_scale
        && kkt.primal_ineq <= tol * primal_scale
        && kkt.stationarity <= tol * dual_scale
        && kkt.dual_feasibility <= tol * dual_scale
}

/// Solve `qp` to tolerance `settings.tol`.
///
/// Only dimension errors are returned as `Err`; solver outcomes are carried
/// in [`QpSolution::status`].
pub fn solve_qp(qp: &QpProblem, settings: &QpSettings) -> Result<QpSolution> {
    qp.check_dims()?;
    let started = Instant::now();
    let n = qp.n;
    let m_eq = qp.b_eq.len();
    let m_in = qp.u_in.len();

    let p = qp.p.to_csc(true);
    let mut stacked = SparseMatrix::new(m_eq + m_in, n);
    stacked.triplets.extend(qp.a_eq.triplets.iter().cloned());
    stacked
        .triplets
        .extend(qp.a_in.triplets.iter().map(|&(r, c, v)| (r + m_eq, c, v)));
    let a = stacked.to_csc(false);
    let mut b = qp.b_eq.clone();
    b.extend_from_slice(&qp.u_in);
    let mut cones = Vec::new();
    if m_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(m_eq));
    }
    if m_in > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(m_in));
    }

    // the IPM runs tighter than the acceptance test; one retry tighter still
    let mut attempt = 0;
    loop {
        let inner = settings.tol * if attempt == 0 { 0.1 } else { 1e-3 };
        let clarabel_settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(settings.max_iter)
            .tol_gap_abs(inner)
            .tol_gap_rel(inner)
            .tol_feas(inner)
            .tol_ktratio(1e-7)
            .presolve_enable(false)
            .build()
            .map_err(|e| Error::Solve(format!("solver settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &qp.q, &a, &b, &cones, clarabel_settings)
            .map_err(|e| Error::Solve(format!("solver setup: {e}")))?;
        solver.solve();
        let sol = &solver.solution;

        let z = sol.x.clone();
        let y_eq = sol.z[..m_eq].to_vec();
        let y_in = sol.z[m_eq..].to_vec();
        let kkt = kkt_residuals(qp, &z, &y_eq, &y_in);

        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                if kkt_acceptable(qp, &z, &y_eq, &y_in, &kkt, settings.tol) {
                    QpStatus::Solved
                } else if attempt == 0 {
                    attempt += 1;
                    continue;
                } else {
                    QpStatus::MaxIterations
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                QpStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => QpStatus::Unbounded,
            _ => QpStatus::MaxIterations,
        };

        return Ok(QpSolution {
            status,
            objective: qp.objective(&z),
            dual_objective: qp.dual_objective(&z, &y_eq, &y_in),
            z,
            y_eq,
            y_in,
            iterations: sol.iterations,
            solve_time: started.elapsed().as_secs_f64(),
            kkt,
        });
    }
}
