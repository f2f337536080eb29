//! Causal affine reserve policies `u_j = D_j·ξ + e_j`.
//!
//! `D_j` is `(m·T) × (N_ξ·T)` and split into `m × N_ξ` blocks `(t, s)`: the
//! input at step `t` reacting to the error revealed at step `s`. By default
//! errors of step `t` arrive after `u_t` is committed, so only blocks with
//! `s < t` are free. Cases may opt into same-step recourse (`s ≤ t`), which
//! is what a single-period AGC-style reserve needs.
//!
//! Fixed zeros never become decision variables: [`PolicyLayout`] numbers
//! only the free entries.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::horizon_model::HorizonModel;
use crate::linexpr::LinExpr;

/// Free-entry pattern of one device's `D` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CausalMask {
    pub m: usize,
    pub n_xi: usize,
    pub horizon: usize,
    pub same_step: bool,
}

impl CausalMask {
    pub fn rows(&self) -> usize {
        self.m * self.horizon
    }

    pub fn cols(&self) -> usize {
        self.n_xi * self.horizon
    }

    pub fn block_is_free(&self, t: usize, s: usize) -> bool {
        if self.same_step {
            s <= t
        } else {
            s < t
        }
    }

    pub fn is_free(&self, row: usize, col: usize) -> bool {
        self.block_is_free(row / self.m, col / self.n_xi)
    }

    /// Free `(row, col)` entries in row-major order.
    pub fn free_entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.count());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                if self.is_free(r, c) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    pub fn count(&self) -> usize {
        let t = self.horizon;
        let blocks = if self.same_step {
            t * (t + 1) / 2
        } else {
            t * t.saturating_sub(1) / 2
        };
        self.m * self.n_xi * blocks
    }

    pub fn as_matrix(&self) -> DMatrix<bool> {
        DMatrix::from_fn(self.rows(), self.cols(), |r, c| self.is_free(r, c))
    }
}

/// Strictly causal mask: block `(t, s)` free iff `s < t`.
pub fn causality_mask(m: usize, horizon: usize, n_xi: usize) -> CausalMask {
    CausalMask {
        m,
        n_xi,
        horizon,
        same_step: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevicePolicy {
    pub device: String,
    pub d: DMatrix<f64>,
    pub e: DVector<f64>,
    pub mask: CausalMask,
}

impl DevicePolicy {
    /// `u = D·ξ + e`.
    pub fn input(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.d * xi + &self.e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    pub devices: Vec<DevicePolicy>,
}

impl AffinePolicy {
    /// Open-loop policy with `D = 0`.
    pub fn open_loop(model: &HorizonModel, e: Vec<DVector<f64>>) -> Self {
        let layout = PolicyLayout::new(model, 0);
        let devices = e
            .into_iter()
            .enumerate()
            .map(|(j, e)| DevicePolicy {
                device: model.case.devices[j].id.clone(),
                d: DMatrix::zeros(layout.masks[j].rows(), layout.masks[j].cols()),
                e,
                mask: layout.masks[j],
            })
            .collect();
        Self { devices }
    }

    pub fn check_dims(&self, model: &HorizonModel) -> Result<()> {
        if self.devices.len() != model.n_devices() {
            return Err(Error::Dimension(format!(
                "policy has {} devices, model has {}",
                self.devices.len(),
                model.n_devices()
            )));
        }
        for (p, d) in self.devices.iter().zip(&model.devices) {
            let rows = d.m * model.horizon();
            if p.d.shape() != (rows, model.xi_dim()) || p.e.len() != rows {
                return Err(Error::Dimension(format!(
                    "policy for {} has D {}x{} and e {}, expected {}x{} and {}",
                    p.device,
                    p.d.nrows(),
                    p.d.ncols(),
                    p.e.len(),
                    rows,
                    model.xi_dim(),
                    rows
                )));
            }
        }
        Ok(())
    }
}

/// Decision-vector numbering of the free `D` entries followed by all `e`.
#[derive(Debug, Clone)]
pub struct PolicyLayout {
    pub offset: usize,
    pub masks: Vec<CausalMask>,
    /// Per device, the free entries in the order they are numbered.
    pub d_entries: Vec<Vec<(usize, usize)>>,
    d_start: Vec<usize>,
    e_start: Vec<usize>,
    /// Per device dense lookup `row * cols + col -> variable`.
    d_lookup: Vec<Vec<Option<usize>>>,
    n_d: usize,
    n_e: usize,
}

impl PolicyLayout {
    pub fn new(model: &HorizonModel, offset: usize) -> Self {
        let horizon = model.horizon();
        let masks: Vec<CausalMask> = model
            .devices
            .iter()
            .map(|d| CausalMask {
                m: d.m,
                n_xi: model.n_xi(),
                horizon,
                same_step: model.case.same_step_recourse,
            })
            .collect();
        let mut next = offset;
        let mut d_start = Vec::new();
        let mut d_entries = Vec::new();
        let mut d_lookup = Vec::new();
        for mask in &masks {
            d_start.push(next);
            let entries = mask.free_entries();
            let mut lookup = vec![None; mask.rows() * mask.cols()];
            for (k, &(r, c)) in entries.iter().enumerate() {
                lookup[r * mask.cols() + c] = Some(next + k);
            }
            next += entries.len();
            d_entries.push(entries);
            d_lookup.push(lookup);
        }
        let n_d = next - offset;
        let mut e_start = Vec::new();
        for mask in &masks {
            e_start.push(next);
            next += mask.rows();
        }
        let n_e = next - offset - n_d;
        Self {
            offset,
            masks,
            d_entries,
            d_start,
            e_start,
            d_lookup,
            n_d,
            n_e,
        }
    }

    pub fn len(&self) -> usize {
        self.n_d + self.n_e
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_d
    }

    pub fn e_range(&self) -> std::ops::Range<usize> {
        self.offset + self.n_d..self.offset + self.n_d + self.n_e
    }

    pub fn d_var(&self, device: usize, row: usize, col: usize) -> Option<usize> {
        let cols = self.masks[device].cols();
        self.d_lookup[device][row * cols + col]
    }

    pub fn e_var(&self, device: usize, row: usize) -> usize {
        self.e_start[device] + row
    }

    /// First variable of device `j`'s free D entries.
    pub fn d_start(&self, device: usize) -> usize {
        self.d_start[device]
    }

    /// Input `u_j[row]` at a given error realization as an affine expression.
    pub fn input_expr(&self, device: usize, row: usize, xi: &[f64]) -> LinExpr {
        let mut expr = LinExpr::var(self.e_var(device, row), 1.0);
        let cols = self.masks[device].cols();
        for (c, &x) in xi.iter().enumerate().take(cols) {
            if let Some(v) = self.d_var(device, row, c) {
                expr.add_term(v, x);
            }
        }
        expr
    }

    /// Read a policy out of a decision vector.
    pub fn extract(&self, model: &HorizonModel, z: &[f64]) -> AffinePolicy {
        let devices = self
            .masks
            .iter()
            .enumerate()
            .map(|(j, mask)| {
                let mut d = DMatrix::zeros(mask.rows(), mask.cols());
                for (k, &(r, c)) in self.d_entries[j].iter().enumerate() {
                    d[(r, c)] = z[self.d_start[j] + k];
                }
                let e = DVector::from_fn(mask.rows(), |r, _| z[self.e_var(j, r)]);
                DevicePolicy {
                    device: model.case.devices[j].id.clone(),
                    d,
                    e,
                    mask: *mask,
                }
            })
            .collect();
        AffinePolicy { devices }
    }

    /// Write a policy into a decision vector (masked entries are ignored).
    pub fn insert(&self, policy: &AffinePolicy, z: &mut [f64]) {
        for (j, p) in policy.devices.iter().enumerate() {
            for (k, &(r, c)) in self.d_entries[j].iter().enumerate() {
                z[self.d_start[j] + k] = p.d[(r, c)];
            }
            for r in 0..p.e.len() {
                z[self.e_var(j, r)] = p.e[r];
            }
        }
    }
}

/// One balance equality `expr = 0`, tagged with what it balances.
#[derive(Debug, Clone)]
pub struct BalanceRow {
    pub expr: LinExpr,
    /// `(t, None)` for nominal balance at step t, `(t, Some(c))` for the
    /// coefficient of error coordinate c at step t.
    pub tag: (usize, Option<usize>),
}

/// Linear equalities on `(D, e)` making total injection zero for every ξ.
///
/// Rows without any free variable are dropped when already satisfied and
/// reported as structural infeasibility otherwise.
pub fn balance_constraints(model: &HorizonModel, layout: &PolicyLayout) -> Result<Vec<BalanceRow>> {
    let horizon = model.horizon();
    let xi_dim = model.xi_dim();
    let mut rows = Vec::new();

    for t in 0..horizon {
        let mut expr = LinExpr::zero();
        for inj in &model.case.injections {
            expr.constant += inj.r[t];
        }
        for (j, dev) in model.devices.iter().enumerate() {
            expr.constant += dev.ca_x0[t];
            for r in 0..dev.cb.ncols() {
                expr.add_term(layout.e_var(j, r), dev.cb[(t, r)]);
            }
        }
        push_row(&mut rows, expr.compact(), (t, None), 1.0, model.n_xi())?;
    }

    let g_scale = model
        .case
        .injections
        .iter()
        .map(|i| i.g.amax())
        .fold(1.0, f64::max);
    for t in 0..horizon {
        for c in 0..xi_dim {
            let mut expr = LinExpr::zero();
            for inj in &model.case.injections {
                expr.constant += inj.g[(t, c)];
            }
            for (j, dev) in model.devices.iter().enumerate() {
                for r in 0..dev.cb.ncols() {
                    let w = dev.cb[(t, r)];
                    if w == 0.0 {
                        continue;
                    }
                    if let Some(v) = layout.d_var(j, r, c) {
                        expr.add_term(v, w);
                    }
                }
            }
            push_row(&mut rows, expr.compact(), (t, Some(c)), g_scale, model.n_xi())?;
        }
    }
    Ok(rows)
}

fn push_row(
    rows: &mut Vec<BalanceRow>,
    expr: LinExpr,
    tag: (usize, Option<usize>),
    scale: f64,
    n_xi: usize,
) -> Result<()> {
    if !expr.terms.is_empty() {
        rows.push(BalanceRow { expr, tag });
        return Ok(());
    }
    if expr.constant.abs() <= 1e-12 * scale {
        return Ok(());
    }
    let (t, c) = tag;
    Err(Error::StructuralInfeasibility(match c {
        Some(c) => format!(
            "error coordinate {c} (step {}) enters the injection at step {t} but no causal input can react to it",
            c / n_xi
        ),
        None => format!("nominal imbalance {} at step {t} cannot be reached by any input", expr.constant),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyBlock {
    pub row: usize,
    pub col: usize,
    pub block: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DevicePolicyFile {
    pub device: String,
    pub e: Vec<f64>,
    pub d_blocks: Vec<PolicyBlock>,
}

/// JSON form: dense `e` and the free `D` blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub devices: Vec<DevicePolicyFile>,
}

impl From<&AffinePolicy> for PolicyFile {
    fn from(p: &AffinePolicy) -> Self {
        let devices = p
            .devices
            .iter()
            .map(|dp| {
                let mask = dp.mask;
                let mut blocks = Vec::new();
                for t in 0..mask.horizon {
                    for s in 0..mask.horizon {
                        if !mask.block_is_free(t, s) {
                            continue;
                        }
                        let block = (0..mask.m)
                            .map(|i| {
                                (0..mask.n_xi)
                                    .map(|k| dp.d[(t * mask.m + i, s * mask.n_xi + k)])
                                    .collect()
                            })
                            .collect();
                        blocks.push(PolicyBlock { row: t, col: s, block });
                    }
                }
                DevicePolicyFile {
                    device: dp.device.clone(),
                    e: dp.e.iter().cloned().collect(),
                    d_blocks: blocks,
                }
            })
            .collect();
        PolicyFile { devices }
    }
}

impl PolicyFile {
    /// Rebuild against a model; blocks outside the causal mask are rejected.
    pub fn to_policy(&self, model: &HorizonModel) -> Result<AffinePolicy> {
        let layout = PolicyLayout::new(model, 0);
        if self.devices.len() != model.n_devices() {
            return Err(Error::Dimension(format!(
                "policy lists {} devices, model has {}",
                self.devices.len(),
                model.n_devices()
            )));
        }
        let mut devices = Vec::new();
        for (j, f) in self.devices.iter().enumerate() {
            let mask = layout.masks[j];
            if f.device != model.case.devices[j].id {
                return Err(Error::Dimension(format!(
                    "policy device {} does not match case device {}",
                    f.device, model.case.devices[j].id
                )));
            }
            if f.e.len() != mask.rows() {
                return Err(Error::Dimension(format!(
                    "policy for {}: e has {} entries, expected {}",
                    f.device,
                    f.e.len(),
                    mask.rows()
                )));
            }
            let mut d = DMatrix::zeros(mask.rows(), mask.cols());
            for b in &f.d_blocks {
                if b.row >= mask.horizon || b.col >= mask.horizon || !mask.block_is_free(b.row, b.col) {
                    return Err(Error::Dimension(format!(
                        "policy for {}: block ({}, {}) violates causality",
                        f.device, b.row, b.col
                    )));
                }
                if b.block.len() != mask.m || b.block.iter().any(|r| r.len() != mask.n_xi) {
                    return Err(Error::Dimension(format!(
                        "policy for {}: block ({}, {}) must be {}x{}",
                        f.device, b.row, b.col, mask.m, mask.n_xi
                    )));
                }
                for (i, row) in b.block.iter().enumerate() {
                    for (k, &v) in row.iter().enumerate() {
                        d[(b.row * mask.m + i, b.col * mask.n_xi + k)] = v;
                    }
                }
            }
            devices.push(DevicePolicy {
                device: f.device.clone(),
                d,
                e: DVector::from_vec(f.e.clone()),
                mask,
            });
        }
        Ok(AffinePolicy { devices })
    }
}
