#![allow(dead_code)]

use std::path::PathBuf;

use dropf::horizon_model::{
    ControllableDevice, DeviceCost, Line, LocalConstraints, NetworkCase, UncontrollableInjection,
};
use nalgebra::{DMatrix, DVector};

pub fn case118_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/case118.json")
}

/// Memoryless generator: x_{t+1} = u_t, cost ½·h·u² + f·u per step.
pub fn generator(id: &str, bus: &str, h: f64, f: f64, horizon: usize, n_xi: usize) -> ControllableDevice {
    let mut cost = DeviceCost::zero(1, 1, horizon);
    cost.h_u = DMatrix::identity(horizon, horizon) * h;
    cost.f_u = DVector::from_element(horizon, f);
    ControllableDevice {
        id: id.into(),
        bus: bus.into(),
        a_step: DMatrix::zeros(1, 1),
        b_step: DMatrix::from_element(1, 1, 1.0),
        x0: DVector::zeros(1),
        cost,
        local: LocalConstraints::empty(1, 1, horizon, n_xi),
    }
}

/// Storage with state (injection, SOC): injection_{t+1} = u, SOC_{t+1} = SOC − u,
/// kept in `[0, soc_max]` through local rows.
pub fn battery(horizon: usize, soc0: f64, soc_max: f64) -> ControllableDevice {
    let mut bat = generator("bat", "2", 0.0, 0.0, horizon, 1);
    bat.a_step = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    bat.b_step = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
    bat.x0 = DVector::from_vec(vec![0.0, soc0]);
    bat.cost = DeviceCost::zero(2, 1, horizon);
    bat.cost.h_u = DMatrix::identity(horizon, horizon) * 0.2;
    let mut local = LocalConstraints::empty(2, 1, horizon, 1);
    local.t = DMatrix::from_fn(2 * horizon, 2 * horizon, |r, c| {
        match (c == 2 * (r / 2) + 1, r % 2 == 0) {
            (true, true) => 1.0,
            (true, false) => -1.0,
            _ => 0.0,
        }
    });
    local.u = DMatrix::zeros(2 * horizon, horizon);
    local.z = DMatrix::zeros(2 * horizon, horizon);
    local.w = DVector::from_fn(2 * horizon, |r, _| if r % 2 == 0 { soc_max } else { 0.0 });
    bat.local = local;
    bat
}

pub fn injection(id: &str, bus: &str, r: Vec<f64>, g: DMatrix<f64>) -> UncontrollableInjection {
    UncontrollableInjection {
        id: id.into(),
        bus: bus.into(),
        r: DVector::from_vec(r),
        g,
    }
}

pub fn line(from: &str, to: &str, x: f64, limit: f64) -> Line {
    Line {
        from: from.into(),
        to: to.into(),
        x_pu: x,
        limit_mw: limit,
        limit_reverse_mw: None,
    }
}

pub fn two_bus_case(limit: f64, horizon: usize) -> NetworkCase {
    NetworkCase {
        buses: vec!["1".into(), "2".into()],
        slack: "1".into(),
        lines: vec![line("1", "2", 0.1, limit)],
        devices: vec![],
        injections: vec![],
        horizon,
        n_xi: 1,
        monitored_lines: vec![],
        same_step_recourse: true,
    }
}
