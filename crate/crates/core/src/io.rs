//! File formats: JSON cases, policies and reports, CSV datasets and tables.
//!
//! Matrices are nested row-major arrays. Every JSON document carries a
//! `format_version`; this crate reads and writes version 1.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dro_core::{hex, ForecastDataset};
use crate::error::{Error, Result};
use crate::horizon_model::{
    BusId, ControllableDevice, DeviceCost, Line, LocalConstraints, NetworkCase, UncontrollableInjection,
};
use crate::mpc::MpcTrace;
use crate::opf_assembler::{ObjectiveBreakdown, RiskConfig, Solution};
use crate::policy::PolicyFile;
use crate::qp::{KktReport, QpStatus};

pub const FORMAT_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

fn matrix_from_rows(owner: &str, field: &str, rows: &Rows, cols_if_empty: usize) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, cols_if_empty));
    }
    let cols = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Format(format!(
            "{owner}: {field} row {bad} has {} entries, row 0 has {cols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().cloned().collect()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_x: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_u: Option<Rows>,
    #[serde(default)]
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalFile {
    #[serde(default)]
    pub t: Rows,
    #[serde(default)]
    pub u: Rows,
    #[serde(default)]
    pub z: Rows,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFile {
    pub id: String,
    pub bus: BusId,
    pub a: Rows,
    pub b: Rows,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub cost: CostFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local: Option<LocalFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionFile {
    pub id: String,
    pub bus: BusId,
    pub r: Vec<f64>,
    pub g: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineFile {
    pub from: BusId,
    pub to: BusId,
    pub x_pu: f64,
    pub limit_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_reverse_mw: Option<f64>,
}

/// On-disk case layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub format_version: u32,
    pub buses: Vec<BusId>,
    pub slack: BusId,
    pub lines: Vec<LineFile>,
    pub devices: Vec<DeviceFile>,
    #[serde(default)]
    pub injections: Vec<InjectionFile>,
    pub horizon: usize,
    pub n_xi: usize,
    #[serde(default)]
    pub same_step_recourse: bool,
    #[serde(default)]
    pub monitored_lines: Vec<String>,
}

impl CaseFile {
    pub fn into_case(self) -> Result<NetworkCase> {
        check_version(self.format_version)?;
        let horizon = self.horizon;
        let n_xi = self.n_xi;
        let devices = self
            .devices
            .into_iter()
            .map(|d| {
                let owner = format!("device {}", d.id);
                let a = matrix_from_rows(&owner, "a", &d.a, 0)?;
                let n = a.nrows();
                let b = matrix_from_rows(&owner, "b", &d.b, 0)?;
                let m = b.ncols();
                let zero = DeviceCost::zero(n, m, horizon);
                let cost = DeviceCost {
                    f_x: d.cost.f_x.map_or(zero.f_x, DVector::from_vec),
                    h_x: match &d.cost.h_x {
                        Some(h) => matrix_from_rows(&owner, "h_x", h, n * horizon)?,
                        None => zero.h_x,
                    },
                    f_u: d.cost.f_u.map_or(zero.f_u, DVector::from_vec),
                    h_u: match &d.cost.h_u {
                        Some(h) => matrix_from_rows(&owner, "h_u", h, m * horizon)?,
                        None => zero.h_u,
                    },
                    c: d.cost.c,
                };
                let local = match d.local {
                    Some(l) => LocalConstraints {
                        t: matrix_from_rows(&owner, "local.t", &l.t, n * horizon)?,
                        u: matrix_from_rows(&owner, "local.u", &l.u, m * horizon)?,
                        z: matrix_from_rows(&owner, "local.z", &l.z, n_xi * horizon)?,
                        w: DVector::from_vec(l.w),
                    },
                    None => LocalConstraints::empty(n, m, horizon, n_xi),
                };
                Ok(ControllableDevice {
                    id: d.id,
                    bus: d.bus,
                    a_step: a,
                    b_step: b,
                    x0: DVector::from_vec(d.x0),
                    cost,
                    local,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let injections = self
            .injections
            .into_iter()
            .map(|i| {
                let g = matrix_from_rows(&format!("injection {}", i.id), "g", &i.g, n_xi * horizon)?;
                Ok(UncontrollableInjection {
                    id: i.id,
                    bus: i.bus,
                    r: DVector::from_vec(i.r),
                    g,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NetworkCase {
            buses: self.buses,
            slack: self.slack,
            lines: self
                .lines
                .into_iter()
                .map(|l| Line {
                    from: l.from,
                    to: l.to,
                    x_pu: l.x_pu,
                    limit_mw: l.limit_mw,
                    limit_reverse_mw: l.limit_reverse_mw,
                })
                .collect(),
            devices,
            injections,
            horizon,
            n_xi,
            monitored_lines: self.monitored_lines,
            same_step_recourse: self.same_step_recourse,
        })
    }
}

impl From<&NetworkCase> for CaseFile {
    fn from(c: &NetworkCase) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            buses: c.buses.clone(),
            slack: c.slack.clone(),
            lines: c
                .lines
                .iter()
                .map(|l| LineFile {
                    from: l.from.clone(),
                    to: l.to.clone(),
                    x_pu: l.x_pu,
                    limit_mw: l.limit_mw,
                    limit_reverse_mw: l.limit_reverse_mw,
                })
                .collect(),
            devices: c
                .devices
                .iter()
                .map(|d| DeviceFile {
                    id: d.id.clone(),
                    bus: d.bus.clone(),
                    a: rows_of(&d.a_step),
                    b: rows_of(&d.b_step),
                    x0: vec_of(&d.x0),
                    cost: CostFile {
                        f_x: Some(vec_of(&d.cost.f_x)),
                        h_x: Some(rows_of(&d.cost.h_x)),
                        f_u: Some(vec_of(&d.cost.f_u)),
                        h_u: Some(rows_of(&d.cost.h_u)),
                        c: d.cost.c,
                    },
                    local: (!d.local.is_empty()).then(|| LocalFile {
                        t: rows_of(&d.local.t),
                        u: rows_of(&d.local.u),
                        z: rows_of(&d.local.z),
                        w: vec_of(&d.local.w),
                    }),
                })
                .collect(),
            injections: c
                .injections
                .iter()
                .map(|i| InjectionFile {
                    id: i.id.clone(),
                    bus: i.bus.clone(),
                    r: vec_of(&i.r),
                    g: rows_of(&i.g),
                })
                .collect(),
            horizon: c.horizon,
            n_xi: c.n_xi,
            same_step_recourse: c.same_step_recourse,
            monitored_lines: c.monitored_lines.clone(),
        }
    }
}

fn check_version(v: u32) -> Result<()> {
    if v == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::Format(format!(
            "unsupported format_version {v}, expected {FORMAT_VERSION}"
        )))
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Format(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Parse a case file. Schema errors carry line and column; use
/// [`crate::horizon_model::validate_case`] for the semantic checks.
pub fn load_case(path: &Path) -> Result<NetworkCase> {
    let file: CaseFile = read_json(path)?;
    file.into_case()
}

pub fn save_case(path: &Path, case: &NetworkCase) -> Result<()> {
    write_json(path, &CaseFile::from(case))
}

/// Parse an error dataset: one sample per row, optional header, comma
/// separated. Ragged rows, non-numeric and non-finite cells are rejected
/// with their 1-based row and column.
pub fn load_dataset(path: &Path, expected_cols: Option<usize>) -> Result<ForecastDataset> {
    let samples = load_matrix_csv(path)?;
    if let Some(cols) = expected_cols {
        if samples.ncols() != cols {
            return Err(Error::Dimension(format!(
                "{}: dataset has {} columns, the case needs {cols}",
                path.display(),
                samples.ncols()
            )));
        }
    }
    ForecastDataset::unbounded(samples)
}

/// Numeric CSV with an optional all-text header row.
pub fn load_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let name = path.display().to_string();
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: name.clone(),
        row,
        column,
        message,
    };
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| parse_err(line, 0, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 && record.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(line, record.len().min(c) + 1, format!("expected {c} columns, found {}", record.len())))
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, c + 1, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, c + 1, format!("'{field}' is not finite")));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format(format!("{name}: no data rows")))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_dataset(path: &Path, data: &ForecastDataset) -> Result<()> {
    save_matrix_csv(path, &data.samples, "xi")
}

/// Write with a `prefix0,prefix1,…` header; values use the shortest
/// representation that parses back to the same `f64`.
pub fn save_matrix_csv(path: &Path, m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..m.ncols()).map(|c| format!("{prefix}{c}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicyFile> {
    let doc: Versioned<PolicyFile> = read_json(path)?;
    check_version(doc.format_version)?;
    Ok(doc.body)
}

pub fn save_policy(path: &Path, policy: &PolicyFile) -> Result<()> {
    write_json(
        path,
        &Versioned {
            format_version: FORMAT_VERSION,
            body: policy.clone(),
        },
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Versioned<T> {
    format_version: u32,
    #[serde(flatten)]
    body: T,
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Inputs and settings that produced a result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub case_path: Option<String>,
    pub case_sha256: Option<String>,
    pub dataset_path: Option<String>,
    pub dataset_sha256: Option<String>,
    pub risk: Option<RiskConfig>,
    pub seeds: Vec<u64>,
    pub parameters: serde_json::Value,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: Option<f64>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            case_path: None,
            case_sha256: None,
            dataset_path: None,
            dataset_sha256: None,
            risk: None,
            seeds: Vec::new(),
            parameters: serde_json::Value::Null,
            started_at: unix_now(),
            finished_at: None,
        }
    }

    pub fn with_case(mut self, path: &Path) -> Result<Self> {
        self.case_sha256 = Some(sha256_file(path)?);
        self.case_path = Some(path.display().to_string());
        Ok(self)
    }

    pub fn with_dataset(mut self, path: &Path) -> Result<Self> {
        self.dataset_sha256 = Some(sha256_file(path)?);
        self.dataset_path = Some(path.display().to_string());
        Ok(self)
    }

    pub fn finish(mut self) -> Self {
        self.finished_at = Some(unix_now());
        self
    }

    /// Hash of the reproducibility-relevant fields (timestamps excluded).
    pub fn input_hash(&self) -> String {
        let key = serde_json::json!({
            "tool_version": self.tool_version,
            "command": self.command,
            "case_sha256": self.case_sha256,
            "dataset_sha256": self.dataset_sha256,
            "risk": self.risk,
            "seeds": self.seeds,
            "parameters": self.parameters,
        });
        hex(&Sha256::digest(key.to_string().as_bytes()))
    }
}

/// JSON form of a [`Solution`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub format_version: u32,
    pub manifest: Option<RunManifest>,
    pub status: QpStatus,
    pub risk: RiskConfig,
    pub objective: ObjectiveBreakdown,
    pub rows: Vec<String>,
    pub tau: Vec<f64>,
    pub lambda: Vec<f64>,
    pub predicted_cvar: Option<Vec<f64>>,
    pub policy: PolicyFile,
    pub kkt: KktReport,
    pub iterations: u32,
    pub solve_time: f64,
}

impl SolutionFile {
    pub fn new(sol: &Solution, manifest: Option<RunManifest>, predicted_cvar: Option<Vec<f64>>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            manifest,
            status: sol.status,
            risk: sol.risk,
            objective: sol.objective.clone(),
            rows: sol.row_names.clone(),
            tau: sol.tau.clone(),
            lambda: sol.lambda.clone(),
            predicted_cvar,
            policy: PolicyFile::from(&sol.policy),
            kkt: sol.kkt,
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        }
    }
}

pub fn load_solution(path: &Path) -> Result<SolutionFile> {
    let file: SolutionFile = read_json(path)?;
    check_version(file.format_version)?;
    Ok(file)
}

/// Any JSON report wrapped with its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub format_version: u32,
    pub manifest: RunManifest,
    pub result: T,
}

impl<T> Report<T> {
    pub fn new(manifest: RunManifest, result: T) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            manifest,
            result,
        }
    }
}

pub fn load_report<T: DeserializeOwned>(path: &Path) -> Result<Report<T>> {
    let report: Report<T> = read_json(path)?;
    check_version(report.format_version)?;
    Ok(report)
}

/// Serde records to CSV, header from field names.
pub fn write_records_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| {
            rec.map_err(|e| Error::Parse {
                path: path.display().to_string(),
                row: i + 2,
                column: 0,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Flat per-step table of a closed-loop trace, one row per applied step.
pub fn write_mpc_csv(path: &Path, trace: &MpcTrace, template: &NetworkCase) -> Result<()> {
    let fmt_err = |e: csv::Error| Error::Format(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(fmt_err)?;
    let mut header: Vec<String> = ["step", "window", "status", "objective", "stage_cost"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..template.n_xi).map(|k| format!("xi{k}")));
    for d in &template.devices {
        header.extend((0..d.m()).map(|i| format!("u_{}_{i}", d.id)));
        header.extend((0..d.n()).map(|i| format!("x_{}_{i}", d.id)));
    }
    header.extend(template.devices.iter().map(|d| format!("p_{}", d.id)));
    header.extend(template.injections.iter().map(|i| format!("w_{}", i.id)));
    header.extend(template.lines.iter().map(|l| format!("flow_{}-{}", l.from, l.to)));
    w.write_record(&header).map_err(fmt_err)?;
    for r in &trace.steps {
        let mut row = vec![
            r.step.to_string(),
            r.window.to_string(),
            r.status.clone(),
            format!("{:?}", r.objective),
            format!("{:?}", r.stage_cost),
        ];
        let mut push = |v: &[f64]| row.extend(v.iter().map(|x| format!("{x:?}")));
        push(&r.xi);
        for (u, x) in r.inputs.iter().zip(&r.states) {
            push(u);
            push(x);
        }
        push(&r.device_injections);
        push(&r.uncontrollable_injections);
        push(&r.flows);
        w.write_record(&row).map_err(fmt_err)?;
    }
    w.flush()?;
    Ok(())
}
