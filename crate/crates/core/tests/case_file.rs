mod common;

use common::case118_path;
use dropf::dro_core::ForecastDataset;
use dropf::horizon_model::validate_case;
use dropf::io::{load_case, save_case};
use dropf::opf_assembler::{risk_rows, solve, RiskConfig};
use dropf::qp::QpSettings;
use nalgebra::DMatrix;

#[test]
fn shipped_case_has_the_expected_shape() {
    let case = load_case(&case118_path()).unwrap();
    assert_eq!(case.buses.len(), 118);
    assert_eq!(case.lines.len(), 186);
    assert_eq!((case.horizon, case.n_xi), (1, 1));
    assert!(case.same_step_recourse);
    assert_eq!(case.monitored_lines, vec!["8-9".to_string()]);

    let l89 = case.lines.iter().find(|l| l.from.0 == "8" && l.to.0 == "9").unwrap();
    assert_eq!(l89.limit_mw, 950.0);
    let wind = case.injections.iter().find(|i| i.id == "wind9").unwrap();
    assert_eq!(wind.g[(0, 0)], 1000.0);

    let model = validate_case(case).unwrap();
    assert_eq!(risk_rows(&model).len(), 2);
    // bus 9 is a leaf behind line 8–9, so all of its injection crosses that line
    let k = model.case.lines.iter().position(|l| l.from.0 == "8" && l.to.0 == "9").unwrap();
    let b9 = model.bus_index[&"9".into()];
    assert!((model.ptdf.factors[(k, b9)].abs() - 1.0).abs() < 1e-9);
}

#[test]
fn shipped_case_round_trips_through_json() {
    let case = load_case(&case118_path()).unwrap();
    let path = std::env::temp_dir().join(format!("dropf-case118-{}.json", std::process::id()));
    save_case(&path, &case).unwrap();
    assert_eq!(load_case(&path).unwrap(), case);
    std::fs::remove_file(path).ok();
}

#[test]
fn zero_error_solution_balances_the_nominal_injections() {
    let model = validate_case(load_case(&case118_path()).unwrap()).unwrap();
    let data = ForecastDataset::unbounded(DMatrix::zeros(3, 1)).unwrap();
    let risk = RiskConfig::new(0.05, 1.0, 0.0, Default::default()).unwrap();
    let sol = solve(&model, &data, &risk, &QpSettings::default()).unwrap();
    assert!(sol.is_solved());
    let generation: f64 = sol.policy.devices.iter().map(|p| p.e[0]).sum();
    let injected: f64 = model.case.injections.iter().map(|i| i.r[0]).sum();
    assert!((generation + injected).abs() < 1e-6, "{}", generation + injected);
}
