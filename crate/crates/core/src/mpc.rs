//! Closed-loop rolling-horizon operation.
//!
//! Each step builds a window case from a template (device data truncated to
//! the window, forecasts from a [`ForecastProvider`], initial states set to
//! the realized ones), solves it, applies the first-step inputs and advances
//! every device with the realized error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dro_core::ForecastDataset;
use crate::error::{Error, Result};
use crate::horizon_model::{validate_case, DeviceCost, LocalConstraints, NetworkCase};
use crate::opf_assembler::{solve, RiskConfig, Solution};
use crate::qp::QpSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonMode {
    /// Every window has the template's length.
    #[default]
    Receding,
    /// Windows end at the last step of the run.
    Shrinking,
}

#[derive(Debug, Clone)]
pub struct MpcConfig {
    /// Device and network data; its horizon is the window length.
    pub template: NetworkCase,
    pub steps: usize,
    pub mode: HorizonMode,
    pub risk: RiskConfig,
    /// Error samples over a full template window.
    pub training: ForecastDataset,
    pub settings: QpSettings,
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Parameter("MPC needs at least one step".into()));
        }
        if self.template.horizon == 0 {
            return Err(Error::Parameter("MPC window must be at least one step".into()));
        }
        if self.mode == HorizonMode::Shrinking && self.template.horizon < self.steps {
            return Err(Error::Parameter(format!(
                "shrinking horizon needs a template of at least {} steps, got {}",
                self.steps, self.template.horizon
            )));
        }
        if self.training.dim() != self.template.xi_dim() {
            return Err(Error::Dimension(format!(
                "training data has {} columns, the template needs {}",
                self.training.dim(),
                self.template.xi_dim()
            )));
        }
        self.risk.validate()
    }

    pub fn window_len(&self, step: usize) -> usize {
        match self.mode {
            HorizonMode::Receding => self.template.horizon,
            HorizonMode::Shrinking => self.steps - step,
        }
    }
}

/// Nominal injections and error maps of every uncontrollable injection.
pub trait ForecastProvider {
    /// Forecast `(r, G)` per injection for the window of `len` steps that
    /// starts at `step`. `realized[k][i]` is what injection `i` produced at
    /// step `k`.
    fn forecast(
        &mut self,
        step: usize,
        len: usize,
        template: &NetworkCase,
        realized: &[Vec<f64>],
    ) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>>;
}

/// Next value equals the last realized one; the template's first value
/// before anything is realized.
#[derive(Debug, Clone, Copy, Default)]
pub struct PersistenceForecast;

impl ForecastProvider for PersistenceForecast {
    fn forecast(
        &mut self,
        _step: usize,
        len: usize,
        template: &NetworkCase,
        realized: &[Vec<f64>],
    ) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
        Ok(template
            .injections
            .iter()
            .enumerate()
            .map(|(i, inj)| {
                let last = realized.last().map_or(inj.r[0], |r| r[i]);
                (DVector::from_element(len, last), leading_block(&inj.g, len, len * template.n_xi))
            })
            .collect())
    }
}

/// Reads the template's own trajectory, shifted to the window start and
/// held at its last value past the end.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateForecast;

impl ForecastProvider for TemplateForecast {
    fn forecast(
        &mut self,
        step: usize,
        len: usize,
        template: &NetworkCase,
        _realized: &[Vec<f64>],
    ) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
        Ok(template
            .injections
            .iter()
            .map(|inj| {
                let last = inj.r.len() - 1;
                let r = DVector::from_fn(len, |k, _| inj.r[(step + k).min(last)]);
                (r, leading_block(&inj.g, len, len * template.n_xi))
            })
            .collect())
    }
}

/// Realized error `ξ_t` (length `n_xi`) at each step.
pub trait DisturbanceSource {
    fn next(&mut self, step: usize, n_xi: usize) -> DVector<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDisturbance;

impl DisturbanceSource for ZeroDisturbance {
    fn next(&mut self, _step: usize, n_xi: usize) -> DVector<f64> {
        DVector::zeros(n_xi)
    }
}

/// Plays back rows of a matrix, wrapping around at the end.
#[derive(Debug, Clone)]
pub struct RecordedDisturbance {
    pub rows: DMatrix<f64>,
}

impl DisturbanceSource for RecordedDisturbance {
    fn next(&mut self, step: usize, n_xi: usize) -> DVector<f64> {
        let row = step % self.rows.nrows().max(1);
        DVector::from_fn(n_xi, |c, _| self.rows[(row, c)])
    }
}

fn leading_block(m: &DMatrix<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    m.view((0, 0), (rows, cols)).into_owned()
}

/// The template restricted to its first `len` steps.
///
/// Local constraint rows touching later steps are dropped.
pub fn truncate_case(template: &NetworkCase, len: usize) -> Result<NetworkCase> {
    if len == 0 || len > template.horizon {
        return Err(Error::Parameter(format!(
            "cannot cut a {}-step case to {len} steps",
            template.horizon
        )));
    }
    let n_xi = template.n_xi;
    let mut case = template.clone();
    case.horizon = len;
    for dev in &mut case.devices {
        let (n, m) = (dev.n(), dev.m());
        let c = &dev.cost;
        dev.cost = DeviceCost {
            f_x: c.f_x.rows(0, n * len).into_owned(),
            h_x: leading_block(&c.h_x, n * len, n * len),
            f_u: c.f_u.rows(0, m * len).into_owned(),
            h_u: leading_block(&c.h_u, m * len, m * len),
            c: c.c,
        };
        let l = &dev.local;
        let keep: Vec<usize> = (0..l.len())
            .filter(|&r| {
                let beyond = |mat: &DMatrix<f64>, from: usize| (from..mat.ncols()).any(|c| mat[(r, c)] != 0.0);
                !beyond(&l.t, n * len) && !beyond(&l.u, m * len) && !beyond(&l.z, n_xi * len)
            })
            .collect();
        dev.local = LocalConstraints {
            t: l.t.select_rows(&keep).columns(0, n * len).into_owned(),
            u: l.u.select_rows(&keep).columns(0, m * len).into_owned(),
            z: l.z.select_rows(&keep).columns(0, n_xi * len).into_owned(),
            w: DVector::from_iterator(keep.len(), keep.iter().map(|&r| l.w[r])),
        };
    }
    for inj in &mut case.injections {
        inj.r = inj.r.rows(0, len).into_owned();
        inj.g = leading_block(&inj.g, len, n_xi * len);
    }
    Ok(case)
}

/// Realized states and history carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcState {
    pub states: Vec<DVector<f64>>,
    /// Realized uncontrollable injections per past step.
    pub realized: Vec<Vec<f64>>,
}

impl MpcState {
    pub fn initial(template: &NetworkCase) -> Self {
        Self {
            states: template.devices.iter().map(|d| d.x0.clone()).collect(),
            realized: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcStepRecord {
    pub step: usize,
    pub window: usize,
    pub status: String,
    pub objective: f64,
    pub xi: Vec<f64>,
    /// Applied input per device.
    pub inputs: Vec<Vec<f64>>,
    /// State per device after the step.
    pub states: Vec<Vec<f64>>,
    /// Realized injection per device.
    pub device_injections: Vec<f64>,
    pub uncontrollable_injections: Vec<f64>,
    /// Realized from→to flow on every line.
    pub flows: Vec<f64>,
    /// Stage cost from the first block of each device's cost.
    pub stage_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcFailure {
    pub step: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcTrace {
    pub steps: Vec<MpcStepRecord>,
    pub failure: Option<MpcFailure>,
}

/// Result of one closed-loop step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub record: MpcStepRecord,
    pub solution: Solution,
    pub next: MpcState,
}

/// Stage cost of one device from the first blocks of its cost.
pub fn stage_cost(cost: &DeviceCost, x_next: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let (n, m) = (x_next.len(), u.len());
    let hx = cost.h_x.view((0, 0), (n, n));
    let hu = cost.h_u.view((0, 0), (m, m));
    cost.f_x.rows(0, n).dot(x_next)
        + 0.5 * x_next.dot(&(hx * x_next))
        + cost.f_u.rows(0, m).dot(u)
        + 0.5 * u.dot(&(hu * u))
}

pub fn mpc_step(
    state: &MpcState,
    config: &MpcConfig,
    step: usize,
    provider: &mut dyn ForecastProvider,
    xi_now: &DVector<f64>,
) -> Result<StepOutcome> {
    let len = config.window_len(step);
    let n_xi = config.template.n_xi;
    let mut case = truncate_case(&config.template, len)?;
    for (dev, x) in case.devices.iter_mut().zip(&state.states) {
        dev.x0 = x.clone();
    }
    let forecasts = provider.forecast(step, len, &config.template, &state.realized)?;
    for (inj, (r, g)) in case.injections.iter_mut().zip(forecasts) {
        inj.r = r;
        inj.g = g;
    }
    let model = validate_case(case)?;
    let cols: Vec<usize> = (0..n_xi * len).collect();
    let training = ForecastDataset::new(
        config.training.samples.select_columns(&cols),
        crate::dro_core::SupportPolytope::unbounded(n_xi * len),
    )?;
    let solution = solve(&model, &training, &config.risk, &config.settings)?;
    if !solution.is_solved() {
        return Err(Error::Solve(format!(
            "step {step}: window problem ended with status {:?}",
            solution.status
        )));
    }

    // only the current step's error is known; later ones are zero-padded
    let mut window_xi = DVector::zeros(n_xi * len);
    window_xi.rows_mut(0, n_xi).copy_from(xi_now);

    let mut inputs = Vec::new();
    let mut states = Vec::new();
    let mut device_injections = Vec::new();
    let mut stage = 0.0;
    let mut bus = DVector::zeros(model.case.buses.len());
    for (j, (dev, p)) in model.case.devices.iter().zip(&solution.policy.devices).enumerate() {
        let m = dev.m();
        let u = p.input(&window_xi).rows(0, m).into_owned();
        let x_next = &dev.a_step * &state.states[j] + &dev.b_step * &u;
        stage += stage_cost(&dev.cost, &x_next, &u);
        bus[model.bus_index[&dev.bus]] += x_next[0];
        device_injections.push(x_next[0]);
        inputs.push(u);
        states.push(x_next);
    }
    let mut uncontrollable = Vec::new();
    for inj in &model.case.injections {
        let p = inj.r[0] + (inj.g.view((0, 0), (1, n_xi)) * xi_now)[0];
        bus[model.bus_index[&inj.bus]] += p;
        uncontrollable.push(p);
    }
    let flows = &model.ptdf.factors * &bus;

    let mut realized = state.realized.clone();
    realized.push(uncontrollable.clone());
    let record = MpcStepRecord {
        step,
        window: len,
        status: "solved".into(),
        objective: solution.objective.total,
        xi: xi_now.iter().cloned().collect(),
        inputs: inputs.iter().map(|u| u.iter().cloned().collect()).collect(),
        states: states.iter().map(|x| x.iter().cloned().collect()).collect(),
        device_injections,
        uncontrollable_injections: uncontrollable,
        flows: flows.iter().cloned().collect(),
        stage_cost: stage,
    };
    Ok(StepOutcome {
        record,
        solution,
        next: MpcState { states, realized },
    })
}

/// Run every step; a failing step ends the run with the trace so far.
pub fn mpc_run(
    config: &MpcConfig,
    provider: &mut dyn ForecastProvider,
    disturbances: &mut dyn DisturbanceSource,
) -> Result<MpcTrace> {
    config.validate()?;
    let mut state = MpcState::initial(&config.template);
    let mut steps = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let xi = disturbances.next(step, config.template.n_xi);
        match mpc_step(&state, config, step, provider, &xi) {
            Ok(outcome) => {
                steps.push(outcome.record);
                state = outcome.next;
            }
            Err(e) => {
                return Ok(MpcTrace {
                    steps,
                    failure: Some(MpcFailure {
                        step,
                        message: e.to_string(),
                    }),
                })
            }
        }
    }
    Ok(MpcTrace { steps, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dro_core::GroundNorm;
    use crate::horizon_model::test_cases::{generator, injection, two_bus};
    use crate::horizon_model::{validate_case, ControllableDevice};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn risk(rho: f64) -> RiskConfig {
        RiskConfig::new(0.1, rho, 0.02, GroundNorm::One).unwrap()
    }

    fn zeros(n: usize, dim: usize) -> ForecastDataset {
        ForecastDataset::unbounded(DMatrix::zeros(n, dim)).unwrap()
    }

    /// Battery with state (injection, SOC); SOC falls by the discharge.
    pub(crate) fn battery(horizon: usize, soc0: f64, soc_max: f64) -> ControllableDevice {
        let mut bat = generator("bat", "2", 0.0, 0.0, horizon, 1);
        bat.a_step = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        bat.b_step = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        bat.x0 = DVector::from_vec(vec![0.0, soc0]);
        bat.cost = DeviceCost::zero(2, 1, horizon);
        bat.cost.h_u = DMatrix::identity(horizon, horizon) * 0.2;
        // 0 ≤ SOC ≤ soc_max at every step
        let mut local = LocalConstraints::empty(2, 1, horizon, 1);
        local.t = DMatrix::from_fn(2 * horizon, 2 * horizon, |r, c| {
            if c == 2 * (r / 2) + 1 {
                if r % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            } else {
                0.0
            }
        });
        local.u = DMatrix::zeros(2 * horizon, horizon);
        local.z = DMatrix::zeros(2 * horizon, horizon);
        local.w = DVector::from_fn(2 * horizon, |r, _| if r % 2 == 0 { soc_max } else { 0.0 });
        bat.local = local;
        bat
    }

    fn battery_case(horizon: usize) -> NetworkCase {
        let mut case = two_bus(50.0);
        case.horizon = horizon;
        case.same_step_recourse = true;
        let mut g = generator("g1", "1", 1.0, 2.0, horizon, 1);
        g.cost.h_u = DMatrix::identity(horizon, horizon);
        case.devices = vec![g, battery(horizon, 3.0, 5.0)];
        case.injections = vec![injection(
            "w2",
            "2",
            vec![1.0; horizon],
            DMatrix::identity(horizon, horizon),
        )];
        case
    }

    fn static_case(horizon: usize) -> NetworkCase {
        let mut case = two_bus(0.5);
        case.horizon = horizon;
        case.devices = vec![generator("g1", "1", 2.0, 1.0, horizon, 1), generator("g2", "2", 1.0, 3.0, horizon, 1)];
        case.injections = vec![injection("w2", "2", vec![-2.0; horizon], DMatrix::identity(horizon, horizon))];
        case
    }

    #[test]
    fn truncation_keeps_leading_blocks() {
        let case = battery_case(3);
        let cut = truncate_case(&case, 2).unwrap();
        assert_eq!(cut.horizon, 2);
        assert_eq!(cut.devices[1].local.len(), 4);
        assert_eq!(cut.devices[0].cost.h_u.shape(), (2, 2));
        assert_eq!(cut.injections[0].g.shape(), (2, 2));
        validate_case(cut).unwrap();
        assert!(truncate_case(&case, 4).is_err());
    }

    fn zero_noise_run(case: NetworkCase, steps: usize, mode: HorizonMode) -> (MpcTrace, Solution) {
        let config = MpcConfig {
            training: zeros(5, case.xi_dim()),
            template: case,
            steps,
            mode,
            risk: risk(1.0),
            settings: QpSettings::default(),
        };
        let trace = mpc_run(&config, &mut TemplateForecast, &mut ZeroDisturbance).unwrap();
        let model = validate_case(config.template.clone()).unwrap();
        let plan = solve(&model, &config.training, &config.risk, &config.settings).unwrap();
        (trace, plan)
    }

    #[test]
    fn zero_noise_static_plant_follows_plan() {
        let (trace, plan) = zero_noise_run(static_case(3), 5, HorizonMode::Receding);
        assert!(trace.failure.is_none());
        for rec in &trace.steps {
            for (j, u) in rec.inputs.iter().enumerate() {
                // static plant: every block of the plan is the same
                assert!((u[0] - plan.policy.devices[j].e[0]).abs() < 1e-6, "{} vs {}", u[0], plan.policy.devices[j].e[0]);
            }
        }
    }

    #[test]
    fn zero_noise_battery_follows_plan_and_cost() {
        let steps = 4;
        let (trace, plan) = zero_noise_run(battery_case(steps), steps, HorizonMode::Shrinking);
        assert!(trace.failure.is_none());
        let template = battery_case(steps);
        let mut planned_cost = 0.0;
        let mut x: Vec<DVector<f64>> = template.devices.iter().map(|d| d.x0.clone()).collect();
        for (t, rec) in trace.steps.iter().enumerate() {
            for (j, dev) in template.devices.iter().enumerate() {
                let u_plan = plan.policy.devices[j].e.rows(t, 1).into_owned();
                assert!((rec.inputs[j][0] - u_plan[0]).abs() < 1e-6, "step {t} device {j}");
                let x_next = &dev.a_step * &x[j] + &dev.b_step * &u_plan;
                planned_cost += stage_cost(&dev.cost, &x_next, &u_plan);
                x[j] = x_next;
            }
        }
        let realized: f64 = trace.steps.iter().map(|r| r.stage_cost).sum();
        assert!((realized - planned_cost).abs() < 1e-5 * (1.0 + planned_cost.abs()));
    }

    #[test]
    fn state_recursion_is_exact() {
        let case = battery_case(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let training = ForecastDataset::unbounded(DMatrix::from_fn(20, 3, |_, _| rng.random_range(-0.5..0.5))).unwrap();
        let config = MpcConfig {
            template: case.clone(),
            steps: 6,
            mode: HorizonMode::Receding,
            risk: risk(2.0),
            training,
            settings: QpSettings::default(),
        };
        let rows = DMatrix::from_fn(6, 1, |_, _| rng.random_range(-0.5..0.5));
        let trace = mpc_run(&config, &mut PersistenceForecast, &mut RecordedDisturbance { rows }).unwrap();
        assert!(trace.failure.is_none());
        let mut x: Vec<DVector<f64>> = case.devices.iter().map(|d| d.x0.clone()).collect();
        for rec in &trace.steps {
            for (j, dev) in case.devices.iter().enumerate() {
                let u = DVector::from_vec(rec.inputs[j].clone());
                let next = &dev.a_step * &x[j] + &dev.b_step * u;
                assert_eq!(next.as_slice(), rec.states[j].as_slice());
                x[j] = next;
            }
            // realized power balance at every step
            let total: f64 = rec.device_injections.iter().chain(&rec.uncontrollable_injections).sum();
            assert!(total.abs() < 1e-6, "imbalance {total}");
        }
    }

    #[test]
    fn fixed_seed_gives_identical_traces() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let training = ForecastDataset::unbounded(DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let config = MpcConfig {
                template: battery_case(2),
                steps: 4,
                mode: HorizonMode::Receding,
                risk: risk(1.0),
                training,
                settings: QpSettings::default(),
            };
            let rows = DMatrix::from_fn(4, 1, |_, _| rng.random_range(-1.0..1.0));
            serde_json::to_string(&mpc_run(&config, &mut PersistenceForecast, &mut RecordedDisturbance { rows }).unwrap()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn horizon_one_is_independent_single_steps() {
        let case = static_case(1);
        let config = MpcConfig {
            training: zeros(3, 1),
            template: case.clone(),
            steps: 3,
            mode: HorizonMode::Receding,
            risk: risk(1.0),
            settings: QpSettings::default(),
        };
        let trace = mpc_run(&config, &mut TemplateForecast, &mut ZeroDisturbance).unwrap();
        let model = validate_case(case).unwrap();
        let single = solve(&model, &config.training, &config.risk, &config.settings).unwrap();
        for rec in &trace.steps {
            assert_eq!(rec.window, 1);
            assert!((rec.objective - single.objective.total).abs() < 1e-9 * (1.0 + single.objective.total.abs()));
        }
    }

    #[test]
    fn persistence_uses_last_realized_value() {
        let case = static_case(2);
        let f = PersistenceForecast.forecast(3, 2, &case, &[vec![-1.0], vec![-2.5]]).unwrap();
        assert_eq!(f[0].0.as_slice(), &[-2.5, -2.5]);
        let first = PersistenceForecast.forecast(0, 2, &case, &[]).unwrap();
        assert_eq!(first[0].0.as_slice(), &[-2.0, -2.0]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let case = static_case(2);
        let mut config = MpcConfig {
            training: zeros(3, 2),
            template: case,
            steps: 0,
            mode: HorizonMode::Receding,
            risk: risk(1.0),
            settings: QpSettings::default(),
        };
        assert!(mpc_run(&config, &mut TemplateForecast, &mut ZeroDisturbance).is_err());
        config.steps = 3;
        config.mode = HorizonMode::Shrinking;
        assert!(mpc_run(&config, &mut TemplateForecast, &mut ZeroDisturbance).is_err());
    }

    #[test]
    fn failing_step_truncates_trace() {
        // strict causality and same-step wind error: no window can balance
        let mut case = static_case(2);
        case.same_step_recourse = false;
        let config = MpcConfig {
            training: zeros(3, 2),
            template: case,
            steps: 3,
            mode: HorizonMode::Receding,
            risk: risk(1.0),
            settings: QpSettings::default(),
        };
        let trace = mpc_run(&config, &mut TemplateForecast, &mut ZeroDisturbance).unwrap();
        assert!(trace.steps.is_empty());
        assert_eq!(trace.failure.as_ref().map(|f| f.step), Some(0));
    }

    #[test]
    fn receding_feasible_whenever_shrinking_is() {
        // exhaustive over small toy variants: recourse timing × error timing × SOC room
        for same_step in [false, true] {
            for delayed in [false, true] {
                for soc_max in [0.5, 5.0] {
                    let build = || {
                        let mut case = battery_case(3);
                        case.same_step_recourse = same_step;
                        case.devices[1] = battery(3, 0.25, soc_max);
                        case.injections[0].g = DMatrix::from_fn(3, 3, |r, c| {
                            let hit = if delayed { r == c + 1 } else { r == c };
                            if hit { 1.0 } else { 0.0 }
                        });
                        case
                    };
                    let run = |template: NetworkCase, mode| {
                        let config = MpcConfig {
                            training: zeros(3, 3),
                            template,
                            steps: 3,
                            mode,
                            risk: risk(1.0),
                            settings: QpSettings::default(),
                        };
                        mpc_run(&config, &mut TemplateForecast, &mut ZeroDisturbance).unwrap()
                    };
                    let shrinking = run(build(), HorizonMode::Shrinking);
                    let receding = run(build(), HorizonMode::Receding);
                    if shrinking.failure.is_none() {
                        assert!(
                            receding.failure.is_none(),
                            "same_step={same_step} delayed={delayed} soc_max={soc_max}: {:?}",
                            receding.failure
                        );
                    }
                }
            }
        }
    }
}
