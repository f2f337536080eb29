//! Wasserstein distributionally robust expectation of max-affine losses.
//!
//! For a loss `h(ξ) = max_k ⟨a_k, ξ⟩ + b_k` and the ball of radius `ε`
//! around the empirical distribution of `N` samples, the worst-case
//! expectation is the optimal value of
//!
//! ```text
//! min  λ·ε + (1/N)·Σ_i s_i
//! s.t. ρ(b_k + ⟨a_k, ξ̂_i⟩) + ⟨γ_ik, d − H·ξ̂_i⟩ ≤ s_i      ∀ i, k
//!      ‖H'γ_ik − ρ·a_k‖_* ≤ λ                              ∀ i, k
//!      γ_ik ≥ 0
//! ```
//!
//! where `{ξ : Hξ ≤ d}` is the support and `‖·‖_*` the dual of the ground
//! norm. [`dro_epigraph`] emits exactly these rows into a [`QpBuilder`]; the
//! coefficients `a_k`, `b_k` may themselves be affine in other decision
//! variables, which keeps the whole program a QP.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linexpr::LinExpr;
use crate::qp::QpBuilder;

/// `{ξ : H·ξ ≤ d}`; zero rows means all of `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPolytope {
    pub h: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl SupportPolytope {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            h: DMatrix::zeros(0, dim),
            d: DVector::zeros(0),
        }
    }

    /// Axis-aligned box `lo ≤ ξ ≤ hi`.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Self {
        let dim = lo.len();
        let mut h = DMatrix::zeros(2 * dim, dim);
        let mut d = DVector::zeros(2 * dim);
        for c in 0..dim {
            h[(2 * c, c)] = 1.0;
            d[2 * c] = hi[c];
            h[(2 * c + 1, c)] = -1.0;
            d[2 * c + 1] = -lo[c];
        }
        Self { h, d }
    }

    pub fn is_unbounded(&self) -> bool {
        self.h.nrows() == 0
    }

    pub fn rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn contains(&self, xi: &[f64], tol: f64) -> bool {
        (0..self.h.nrows()).all(|r| {
            let lhs: f64 = (0..self.h.ncols()).map(|c| self.h[(r, c)] * xi[c]).sum();
            lhs <= self.d[r] + tol
        })
    }
}

/// Training samples of the forecast error, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDataset {
    pub samples: DMatrix<f64>,
    pub support: SupportPolytope,
}

impl ForecastDataset {
    pub fn new(samples: DMatrix<f64>, support: SupportPolytope) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::Parameter("dataset needs at least one sample".into()));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % samples.nrows(), pos / samples.nrows());
            return Err(Error::Parameter(format!(
                "dataset entry ({r}, {c}) is not finite"
            )));
        }
        if !support.is_unbounded() {
            if support.h.ncols() != samples.ncols() || support.d.len() != support.h.nrows() {
                return Err(Error::Dimension(format!(
                    "support polytope is {}x{} for {}-dimensional samples",
                    support.h.nrows(),
                    support.h.ncols(),
                    samples.ncols()
                )));
            }
            for i in 0..samples.nrows() {
                let row: Vec<f64> = samples.row(i).iter().cloned().collect();
                if !support.contains(&row, 1e-9) {
                    return Err(Error::Parameter(format!(
                        "sample {i} lies outside the support polytope"
                    )));
                }
            }
        }
        Ok(Self { samples, support })
    }

    pub fn unbounded(samples: DMatrix<f64>) -> Result<Self> {
        let dim = samples.ncols();
        Self::new(samples, SupportPolytope::unbounded(dim))
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.samples.row(i).iter().cloned().collect()
    }

    pub fn sample_vector(&self, i: usize) -> DVector<f64> {
        self.samples.row(i).transpose()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.samples.row_mean().transpose()
    }

    /// `(1/N)·Σ ξ̂_i ξ̂_i'`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        self.samples.transpose() * &self.samples / self.len() as f64
    }

    /// Rows `indices` in the given order, keeping the support.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let samples = self.samples.select_rows(indices);
        Self::new(samples, self.support.clone())
    }

    /// SHA-256 over the sample values, used to detect train/eval overlap.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.samples.nrows() as u64).to_le_bytes());
        hasher.update((self.samples.ncols() as u64).to_le_bytes());
        for i in 0..self.samples.nrows() {
            for c in 0..self.samples.ncols() {
                hasher.update(self.samples[(i, c)].to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }

    /// Per-row hashes, for overlap checks between two datasets.
    pub fn row_hashes(&self) -> Vec<[u8; 32]> {
        (0..self.len())
            .map(|i| {
                let mut hasher = Sha256::new();
                for c in 0..self.dim() {
                    hasher.update(self.samples[(i, c)].to_le_bytes());
                }
                let out = hasher.finalize();
                let mut arr = [0u8; 32];
                arr.copy_from_slice(&out);
                arr
            })
            .collect()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Ground norm of the transport cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundNorm {
    #[default]
    One,
    Inf,
}

impl GroundNorm {
    /// Norm dual to the ground norm.
    pub fn dual_norm(&self, v: &[f64]) -> f64 {
        match self {
            GroundNorm::One => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            GroundNorm::Inf => v.iter().map(|x| x.abs()).sum(),
        }
    }

    pub fn ground_norm(&self, v: &[f64]) -> f64 {
        match self {
            GroundNorm::One => v.iter().map(|x| x.abs()).sum(),
            GroundNorm::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

impl std::str::FromStr for GroundNorm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "one" | "l1" => Ok(GroundNorm::One),
            "inf" | "linf" | "infinity" => Ok(GroundNorm::Inf),
            _ => Err(Error::Parameter(format!("unknown ground norm {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityConfig {
    pub epsilon: f64,
    pub ground_norm: GroundNorm,
}

impl AmbiguityConfig {
    pub fn new(epsilon: f64, ground_norm: GroundNorm) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::Parameter(format!(
                "Wasserstein radius must be nonnegative, got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            ground_norm,
        })
    }
}

/// One piece `⟨a, ξ⟩ + b` with coefficients affine in the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub a: Vec<LinExpr>,
    pub b: LinExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxAffineLoss {
    pub pieces: Vec<AffinePiece>,
}

/// A piece with numeric coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPiece {
    pub a: Vec<f64>,
    pub b: f64,
}

impl FixedPiece {
    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.b + self.a.iter().zip(xi).map(|(a, x)| a * x).sum::<f64>()
    }
}

impl MaxAffineLoss {
    pub fn dim(&self) -> usize {
        self.pieces.first().map_or(0, |p| p.a.len())
    }

    /// Evaluate the coefficients at a decision vector.
    pub fn fix(&self, z: &[f64]) -> Vec<FixedPiece> {
        self.pieces
            .iter()
            .map(|p| FixedPiece {
                a: p.a.iter().map(|e| e.eval(z)).collect(),
                b: p.b.eval(z),
            })
            .collect()
    }

    /// Loss with constant coefficients.
    pub fn constant(pieces: &[FixedPiece]) -> Self {
        Self {
            pieces: pieces
                .iter()
                .map(|p| AffinePiece {
                    a: p.a.iter().map(|&v| LinExpr::constant(v)).collect(),
                    b: LinExpr::constant(p.b),
                })
                .collect(),
        }
    }
}

pub fn max_affine(pieces: &[FixedPiece], xi: &[f64]) -> f64 {
    pieces
        .iter()
        .map(|p| p.eval(xi))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("CVaR level must lie in (0, 1], got {alpha}")))
    }
}

/// Two-piece loss whose expectation is `E[g + τ]_+ − α·τ` for the affine
/// function `g(ξ) = ⟨ā, ξ⟩ + b̄`.
///
/// Piece one is `(ā, b̄ + (1 − α)·τ)`, piece two `(0, −α·τ)`, with `τ` the
/// decision variable at `tau_index`.
pub fn cvar_pieces(
    a_bar: Vec<LinExpr>,
    b_bar: LinExpr,
    alpha: f64,
    tau_index: usize,
) -> Result<MaxAffineLoss> {
    check_alpha(alpha)?;
    let dim = a_bar.len();
    let mut b1 = b_bar;
    b1.add_term(tau_index, 1.0 - alpha);
    let b2 = LinExpr::var(tau_index, -alpha);
    Ok(MaxAffineLoss {
        pieces: vec![
            AffinePiece { a: a_bar, b: b1 },
            AffinePiece {
                a: vec![LinExpr::zero(); dim],
                b: b2,
            },
        ],
    })
}

/// Number of auxiliary variables one epigraph needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpigraphShape {
    pub samples: usize,
    pub pieces: usize,
    pub support_rows: usize,
    pub dim: usize,
    pub ground_norm: GroundNorm,
}

impl EpigraphShape {
    pub fn new(loss: &MaxAffineLoss, data: &ForecastDataset, amb: &AmbiguityConfig) -> Self {
        Self {
            samples: data.len(),
            pieces: loss.pieces.len(),
            support_rows: data.support.rows(),
            dim: data.dim(),
            ground_norm: amb.ground_norm,
        }
    }

    pub fn gamma_len(&self) -> usize {
        self.samples * self.pieces * self.support_rows
    }

    /// Per-coordinate bounds for the 1-norm dual constraint.
    pub fn aux_len(&self) -> usize {
        match self.ground_norm {
            GroundNorm::One => 0,
            GroundNorm::Inf if self.support_rows > 0 => self.samples * self.pieces * self.dim,
            GroundNorm::Inf => self.pieces * self.dim,
        }
    }
}

/// Where an epigraph's variables live in the decision vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpigraphVars {
    pub lambda: usize,
    pub s: Range<usize>,
    pub gamma: Range<usize>,
    pub aux: Range<usize>,
}

impl EpigraphVars {
    /// Allocate contiguously in `qp`, for stand-alone use.
    pub fn allocate(qp: &mut QpBuilder, shape: &EpigraphShape) -> Self {
        let lambda = qp.add_vars(1).start;
        let s = qp.add_vars(shape.samples);
        let gamma = qp.add_vars(shape.gamma_len());
        let aux = qp.add_vars(shape.aux_len());
        Self {
            lambda,
            s,
            gamma,
            aux,
        }
    }
}

/// Emit the worst-case expectation of `scale·loss` over the Wasserstein
/// ball into `qp`: constraints plus the objective term `λ·ε + mean(s)`.
///
/// Rows are emitted sample by sample, piece by piece. Without a support
/// polytope the `γ` variables are omitted and the dual-norm bound on `λ`
/// is emitted once per piece.
pub fn dro_epigraph(
    loss: &MaxAffineLoss,
    data: &ForecastDataset,
    amb: &AmbiguityConfig,
    scale: f64,
    vars: &EpigraphVars,
    qp: &mut QpBuilder,
) -> Result<()> {
    let shape = EpigraphShape::new(loss, data, amb);
    if shape.pieces == 0 {
        return Err(Error::Parameter("loss needs at least one piece".into()));
    }
    if loss.pieces.iter().any(|p| p.a.len() != data.dim()) {
        return Err(Error::Dimension(format!(
            "loss coefficients do not match {}-dimensional samples",
            data.dim()
        )));
    }
    if vars.s.len() != shape.samples
        || vars.gamma.len() != shape.gamma_len()
        || vars.aux.len() != shape.aux_len()
    {
        return Err(Error::Dimension("epigraph variable blocks have the wrong size".into()));
    }

    let n = data.len();
    let dim = data.dim();
    let rows_h = shape.support_rows;
    let support = &data.support;

    qp.add_objective(&LinExpr::var(vars.lambda, amb.epsilon), 1.0);
    for s in vars.s.clone() {
        qp.add_objective(&LinExpr::var(s, 1.0 / n as f64), 1.0);
    }

    let gamma_index = |i: usize, k: usize, r: usize| vars.gamma.start + (i * shape.pieces + k) * rows_h + r;
    let aux_index = |i: usize, k: usize, c: usize| {
        if rows_h > 0 {
            vars.aux.start + (i * shape.pieces + k) * dim + c
        } else {
            vars.aux.start + k * dim + c
        }
    };

    // ‖H'γ − ρ·a‖_* ≤ λ for one (i, k); gamma is None without support
    let norm_rows = |qp: &mut QpBuilder, i: usize, k: usize, with_gamma: bool| {
        let piece = &loss.pieces[k];
        let mut coords = Vec::with_capacity(dim);
        for c in 0..dim {
            let mut w = piece.a[c].scaled(-scale);
            if with_gamma {
                for r in 0..rows_h {
                    w.add_term(gamma_index(i, k, r), support.h[(r, c)]);
                }
            }
            coords.push(w);
        }
        match amb.ground_norm {
            GroundNorm::One => {
                for w in coords {
                    let mut up = w.clone();
                    up.add_term(vars.lambda, -1.0);
                    qp.add_le(up.compact());
                    let mut down = w.scaled(-1.0);
                    down.add_term(vars.lambda, -1.0);
                    qp.add_le(down.compact());
                }
            }
            GroundNorm::Inf => {
                let mut total = LinExpr::var(vars.lambda, -1.0);
                for (c, w) in coords.into_iter().enumerate() {
                    let t = aux_index(i, k, c);
                    let mut up = w.clone();
                    up.add_term(t, -1.0);
                    qp.add_le(up.compact());
                    let mut down = w.scaled(-1.0);
                    down.add_term(t, -1.0);
                    qp.add_le(down.compact());
                    total.add_term(t, 1.0);
                }
                qp.add_le(total);
            }
        }
    };

    if rows_h == 0 {
        for k in 0..shape.pieces {
            norm_rows(qp, 0, k, false);
        }
    }

    for i in 0..n {
        let xi = data.sample(i);
        let slack_hxi: Vec<f64> = if rows_h > 0 {
            (0..rows_h)
                .map(|r| support.d[r] - (0..dim).map(|c| support.h[(r, c)] * xi[c]).sum::<f64>())
                .collect()
        } else {
            Vec::new()
        };
        for (k, piece) in loss.pieces.iter().enumerate() {
            let mut row = piece.b.scaled(scale);
            for (a, x) in piece.a.iter().zip(xi.iter()) {
                row.add_scaled(a, scale * x);
            }
            for (r, &sl) in slack_hxi.iter().enumerate() {
                row.add_term(gamma_index(i, k, r), sl);
            }
            row.add_term(vars.s.start + i, -1.0);
            qp.add_le(row.compact());
            if rows_h > 0 {
                norm_rows(qp, i, k, true);
            }
        }
    }

    for g in vars.gamma.clone() {
        qp.add_le(LinExpr::var(g, -1.0));
    }
    Ok(())
}

/// Closed-form worst-case expectation of a fixed max-affine loss over the
/// Wasserstein ball on unbounded support:
/// `mean_i max_k(⟨a_k, ξ̂_i⟩ + b_k) + ε·max_k ‖a_k‖_*`.
///
/// Independent of [`dro_epigraph`]; used to check it.
pub fn worst_case_expectation_oracle(
    pieces: &[FixedPiece],
    data: &ForecastDataset,
    amb: &AmbiguityConfig,
) -> Result<f64> {
    if !data.support.is_unbounded() {
        return Err(Error::UnsupportedOracle);
    }
    let n = data.len();
    let avg = (0..n)
        .map(|i| max_affine(pieces, &data.sample(i)))
        .sum::<f64>()
        / n as f64;
    let lip = pieces
        .iter()
        .map(|p| amb.ground_norm.dual_norm(&p.a))
        .fold(0.0, f64::max);
    Ok(avg + amb.epsilon * lip)
}

/// Empirical CVaR of the upper `alpha` tail of `values`.
///
/// Equals `min_τ −τ + (1/α)·mean([v + τ]_+)`, evaluated as the mean of the
/// largest `α·M` values with a fractional weight on the boundary atom.
pub fn empirical_cvar(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Parameter("empirical CVaR of an empty list".into()));
    }
    check_alpha(alpha)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let m = sorted.len();
    let mass = alpha * m as f64;
    let mut remaining = mass;
    let mut acc = 0.0;
    for &v in &sorted {
        if remaining <= 0.0 {
            break;
        }
        let w = remaining.min(1.0);
        acc += w * v;
        remaining -= w;
    }
    Ok(acc / mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve_qp, QpSettings, QpStatus};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn data(rows: &[&[f64]]) -> ForecastDataset {
        let dim = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().cloned()).collect();
        ForecastDataset::unbounded(DMatrix::from_row_slice(rows.len(), dim, &flat)).unwrap()
    }

    /// Solve the epigraph subproblem for a fixed loss.
    fn epigraph_value(pieces: &[FixedPiece], data: &ForecastDataset, amb: &AmbiguityConfig) -> (f64, Vec<f64>) {
        let loss = MaxAffineLoss::constant(pieces);
        let mut qp = QpBuilder::new();
        let shape = EpigraphShape::new(&loss, data, amb);
        let vars = EpigraphVars::allocate(&mut qp, &shape);
        dro_epigraph(&loss, data, amb, 1.0, &vars, &mut qp).unwrap();
        let sol = solve_qp(&qp.build(), &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        (sol.objective, sol.z)
    }

    #[test]
    fn cvar_pieces_match_rearranged_constraint() {
        // g(ξ) = ξ − p̄ with p̄ = 2
        let loss = cvar_pieces(vec![LinExpr::constant(1.0)], LinExpr::constant(-2.0), 0.1, 0).unwrap();
        let tau = 3.0;
        let fixed = loss.fix(&[tau]);
        assert_eq!(fixed[0].a, vec![1.0]);
        assert!((fixed[0].b - (-2.0 + 0.9 * tau)).abs() < 1e-15);
        assert_eq!(fixed[1].a, vec![0.0]);
        assert!((fixed[1].b + 0.1 * tau).abs() < 1e-15);
        // max of the two pieces is [g + τ]_+ − ατ pointwise
        for xi in [-3.0, 0.0, 1.5, 7.0] {
            let direct = (xi - 2.0 + tau).max(0.0) - 0.1 * tau;
            assert!((max_affine(&fixed, &[xi]) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn cvar_pieces_reject_bad_alpha() {
        assert!(cvar_pieces(vec![], LinExpr::zero(), 0.0, 0).is_err());
        assert!(cvar_pieces(vec![], LinExpr::zero(), 1.5, 0).is_err());
        let loss = cvar_pieces(vec![LinExpr::constant(2.0)], LinExpr::constant(1.0), 1.0, 0).unwrap();
        let fixed = loss.fix(&[4.0]);
        assert_eq!(fixed[0].b, 1.0);
        assert_eq!(fixed[1].b, -4.0);
    }

    #[test]
    fn deterministic_loss_minimizes_at_minus_c() {
        let alpha = 0.2;
        for c in [-1.5, 0.0, 2.0] {
            let loss = cvar_pieces(vec![], LinExpr::constant(c), alpha, 0).unwrap();
            // max(c + (1−α)τ, −ατ) is minimized where both pieces meet
            let value = |tau: f64| max_affine(&loss.fix(&[tau]), &[]);
            let at = value(-c);
            assert!((at - alpha * c).abs() < 1e-12);
            for d in [-0.5, -1e-3, 1e-3, 0.5] {
                assert!(value(-c + d) >= at);
            }
            assert_eq!(at <= 0.0, c <= 0.0);
        }
    }

    #[test]
    fn zero_radius_is_sample_average() {
        let d = data(&[&[0.5, -1.0], &[2.0, 1.0], &[-1.0, 0.0]]);
        let pieces = vec![
            FixedPiece { a: vec![1.0, -2.0], b: 0.3 },
            FixedPiece { a: vec![-0.5, 1.0], b: -0.2 },
        ];
        let amb = AmbiguityConfig::new(0.0, GroundNorm::One).unwrap();
        let (v, _) = epigraph_value(&pieces, &d, &amb);
        let avg = (0..3).map(|i| max_affine(&pieces, &d.sample(i))).sum::<f64>() / 3.0;
        assert!((v - avg).abs() < 1e-7);
    }

    #[test]
    fn single_piece_shifts_mass_by_radius() {
        let d = data(&[&[0.0], &[1.0]]);
        let pieces = vec![FixedPiece { a: vec![1.0], b: 0.0 }];
        let amb = AmbiguityConfig::new(0.5, GroundNorm::One).unwrap();
        let (v, _) = epigraph_value(&pieces, &d, &amb);
        assert!((v - 1.0).abs() < 1e-7);
    }

    #[test]
    fn xi_independent_loss_ignores_radius() {
        let d = data(&[&[0.0, 1.0], &[3.0, -2.0]]);
        let pieces = vec![
            FixedPiece { a: vec![0.0, 0.0], b: 1.5 },
            FixedPiece { a: vec![0.0, 0.0], b: -0.5 },
        ];
        for eps in [0.0, 0.3, 10.0] {
            let amb = AmbiguityConfig::new(eps, GroundNorm::One).unwrap();
            let (v, z) = epigraph_value(&pieces, &d, &amb);
            assert!((v - 1.5).abs() < 1e-7);
            if eps > 0.0 {
                assert!(z[0].abs() < 1e-6, "lambda = {}", z[0]);
            }
        }
    }

    #[test]
    fn oracle_examples() {
        let abs = vec![FixedPiece { a: vec![1.0], b: 0.0 }, FixedPiece { a: vec![-1.0], b: 0.0 }];
        let amb = AmbiguityConfig::new(2.0, GroundNorm::One).unwrap();
        assert_eq!(worst_case_expectation_oracle(&abs, &data(&[&[0.0]]), &amb).unwrap(), 2.0);

        let constant = vec![FixedPiece { a: vec![0.0], b: 5.0 }];
        assert_eq!(worst_case_expectation_oracle(&constant, &data(&[&[1.0], &[4.0]]), &amb).unwrap(), 5.0);

        let zero = AmbiguityConfig::new(0.0, GroundNorm::One).unwrap();
        let v = worst_case_expectation_oracle(&abs, &data(&[&[1.0], &[-3.0]]), &zero).unwrap();
        assert_eq!(v, 2.0);

        let mut boxed = data(&[&[0.0]]);
        boxed.support = SupportPolytope::boxed(&[-1.0], &[1.0]);
        assert!(matches!(
            worst_case_expectation_oracle(&abs, &boxed, &amb),
            Err(Error::UnsupportedOracle)
        ));
    }

    #[test]
    fn inf_ground_norm_uses_one_norm_dual() {
        let d = data(&[&[0.0, 0.0]]);
        let pieces = vec![FixedPiece { a: vec![1.0, -2.0], b: 0.0 }];
        let amb = AmbiguityConfig::new(0.5, GroundNorm::Inf).unwrap();
        let (v, _) = epigraph_value(&pieces, &d, &amb);
        assert!((v - 1.5).abs() < 1e-7);
        assert!((worst_case_expectation_oracle(&pieces, &d, &amb).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn support_caps_the_worst_case() {
        // |ξ| on [−1, 1] with a single atom at 0: sup is at most 1
        let mut d = data(&[&[0.0]]);
        d.support = SupportPolytope::boxed(&[-1.0], &[1.0]);
        let abs = vec![FixedPiece { a: vec![1.0], b: 0.0 }, FixedPiece { a: vec![-1.0], b: 0.0 }];
        let small = AmbiguityConfig::new(0.25, GroundNorm::One).unwrap();
        assert!((epigraph_value(&abs, &d, &small).0 - 0.25).abs() < 1e-7);
        let large = AmbiguityConfig::new(50.0, GroundNorm::One).unwrap();
        assert!((epigraph_value(&abs, &d, &large).0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(ForecastDataset::unbounded(DMatrix::zeros(0, 2)).is_err());
        assert!(ForecastDataset::unbounded(DMatrix::from_element(1, 1, f64::NAN)).is_err());
        let outside = ForecastDataset::new(
            DMatrix::from_element(1, 1, 3.0),
            SupportPolytope::boxed(&[-1.0], &[1.0]),
        );
        assert!(outside.is_err());
    }

    #[test]
    fn empirical_cvar_examples() {
        assert!((empirical_cvar(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.4).unwrap() - 4.5).abs() < 1e-12);
        assert!((empirical_cvar(&[2.5; 7], 0.13).unwrap() - 2.5).abs() < 1e-12);
        assert!((empirical_cvar(&[1.0, -2.0, 4.0], 1.0).unwrap() - 1.0).abs() < 1e-12);
        // fractional boundary atom: top 1.5 of {3, 1, 0}
        assert!((empirical_cvar(&[0.0, 3.0, 1.0], 0.5).unwrap() - (3.0 + 0.5) / 1.5).abs() < 1e-12);
        assert!(empirical_cvar(&[], 0.5).is_err());
        assert!(empirical_cvar(&[1.0], 0.0).is_err());
    }

    fn random_pieces(rng: &mut impl Rng, k: usize, dim: usize) -> Vec<FixedPiece> {
        (0..k)
            .map(|_| FixedPiece {
                a: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                b: rng.random_range(-1.0..1.0),
            })
            .collect()
    }

    fn random_data(rng: &mut impl Rng, n: usize, dim: usize) -> ForecastDataset {
        ForecastDataset::unbounded(DMatrix::from_fn(n, dim, |_, _| rng.random_range(-3.0..3.0))).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn epigraph_matches_closed_form(seed in 0u64..1_000_000, k in 1usize..=4, dim in 1usize..=6, n in 1usize..=20, inf in any::<bool>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pieces = random_pieces(&mut rng, k, dim);
            let d = random_data(&mut rng, n, dim);
            let norm = if inf { GroundNorm::Inf } else { GroundNorm::One };
            let amb = AmbiguityConfig::new(rng.random_range(0.0..1.0), norm).unwrap();
            let (v, _) = epigraph_value(&pieces, &d, &amb);
            let want = worst_case_expectation_oracle(&pieces, &d, &amb).unwrap();
            prop_assert!((v - want).abs() <= 1e-7 * (1.0 + want.abs()), "{} vs {}", v, want);
        }

        #[test]
        fn epigraph_is_monotone_in_radius(seed in 0u64..1_000_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pieces = random_pieces(&mut rng, 3, 2);
            let mut d = random_data(&mut rng, 5, 2);
            if seed % 2 == 0 {
                d.support = SupportPolytope::boxed(&[-4.0, -4.0], &[4.0, 4.0]);
            }
            let mut last = f64::NEG_INFINITY;
            for step in 0..=10 {
                let amb = AmbiguityConfig::new(0.01 * step as f64, GroundNorm::One).unwrap();
                let (v, _) = epigraph_value(&pieces, &d, &amb);
                prop_assert!(v >= last - 1e-8 * (1.0 + v.abs()));
                last = v;
            }
        }

        #[test]
        fn boxed_worst_case_below_vertex_max(seed in 0u64..1_000_000, dim in 1usize..=3) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pieces = random_pieces(&mut rng, 3, dim);
            let lo: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..-0.5)).collect();
            let hi: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..3.0)).collect();
            let samples = DMatrix::from_fn(6, dim, |_, c| rng.random_range(lo[c]..hi[c]));
            let d = ForecastDataset::new(samples, SupportPolytope::boxed(&lo, &hi)).unwrap();
            let amb = AmbiguityConfig::new(100.0, GroundNorm::One).unwrap();
            let (v, _) = epigraph_value(&pieces, &d, &amb);
            let mut vmax = f64::NEG_INFINITY;
            for mask in 0..(1usize << dim) {
                let vertex: Vec<f64> = (0..dim).map(|c| if mask >> c & 1 == 1 { hi[c] } else { lo[c] }).collect();
                vmax = vmax.max(max_affine(&pieces, &vertex));
            }
            prop_assert!(v <= vmax + 1e-6 * (1.0 + vmax.abs()), "{} > {}", v, vmax);
        }

        #[test]
        fn empirical_cvar_dominates_mean(values in proptest::collection::vec(-100.0f64..100.0, 1..50), alpha in 0.01f64..=1.0, shift in -50.0f64..50.0) {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let cvar = empirical_cvar(&values, alpha).unwrap();
            prop_assert!(cvar >= mean - 1e-9 * (1.0 + mean.abs()));
            let at_one = empirical_cvar(&values, 1.0).unwrap();
            prop_assert!((at_one - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            let moved = empirical_cvar(&shifted, alpha).unwrap();
            prop_assert!((moved - cvar - shift).abs() <= 1e-9 * (1.0 + cvar.abs() + shift.abs()));
        }
    }
}
