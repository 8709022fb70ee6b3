mod common;

use std::process::Command;

use common::{reference_config, short_attack_config};
use sta_core::scenario::{
    parse_config, run_attack, run_nominal, run_sweep, Outcome, ScenarioConfig, SweepParameter,
    SUMMARY_FILE, TRAJECTORY_FILE,
};

fn scalar_config(x0: f64) -> ScenarioConfig {
    parse_config(&format!(
        r#"{{ "plant": {{ "n": 1, "k": 1, "A": [0], "B": [1] }}, "x0": [{x0}], "grid": {{ "T": 5, "N": 1000 }} }}"#
    ))
    .unwrap()
}

#[test]
fn nominal_reference_gain() {
    let out = run_nominal(&reference_config()).unwrap();
    let k = &out.summary.nominal.k_lqr;
    assert!((k[0] - 1.26).abs() <= 0.02 && (k[1] - 4.76).abs() <= 0.02, "{k:?}");
    assert!(out.summary.nominal.care_residual <= 1e-8);
    assert_eq!(out.summary.nominal.s_nominal, out.summary.nominal.j_nominal);
    assert!(out.summary.attack.is_none());
}

#[test]
fn nominal_scalar_closed_form() {
    let out = run_nominal(&scalar_config(1.0)).unwrap();
    let n = &out.summary.nominal;
    assert!((n.k_lqr[0] - 1.0).abs() < 1e-9);
    // x = e^{-t}, u = -e^{-t}: running cost 2e^{-2t}
    let exact = 1.0 - (-10.0_f64).exp();
    let dt: f64 = 5.0 / 1000.0;
    assert!((n.s_nominal - exact).abs() < 4.0 * dt * dt / 6.0, "{} vs {exact}", n.s_nominal);
}

#[test]
fn nominal_zero_state_costs_nothing() {
    let out = run_nominal(&scalar_config(0.0)).unwrap();
    assert_eq!(out.summary.nominal.s_nominal, 0.0);
}

#[test]
fn nominal_rejects_singular_output_map() {
    let cfg = parse_config(
        r#"{ "plant": { "n": 2, "k": 1, "j": 1, "A": [1, 2, 1, 2], "B": [2, 1], "L": [1, 0] },
             "x0": [1, 1], "grid": { "T": 10, "N": 100 } }"#,
    )
    .unwrap();
    match run_nominal(&cfg) {
        Err(sta_core::StaError::Config { path, .. }) => assert_eq!(path, "plant.L"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn output_lqr_gain_maps_through_inverse() {
    let mut cfg = reference_config();
    cfg.plant.l = Some(vec![2.0, 0.0, 0.0, 0.5]);
    let scaled = run_nominal(&cfg).unwrap().summary.nominal;
    let plain = run_nominal(&reference_config()).unwrap().summary.nominal;
    assert!((scaled.k_lqr[0] * 2.0 - plain.k_lqr[0]).abs() < 1e-9);
    assert!((scaled.k_lqr[1] * 0.5 - plain.k_lqr[1]).abs() < 1e-9);
    assert!((scaled.s_nominal - plain.s_nominal).abs() < 1e-9);
}

#[test]
fn attack_is_stealthy_and_arithmetic_holds() {
    let cfg = short_attack_config();
    let out = run_attack(&cfg).unwrap();
    let a = out.summary.attack.as_ref().unwrap();
    let s_nom = out.summary.nominal.s_nominal;
    assert!(a.sup_residual <= cfg.stealth.alpha);
    assert!(a.s_attack > s_nom);
    let pct = 100.0 * (a.s_attack - s_nom) / s_nom;
    assert!((a.percent_s_increase.unwrap() - pct).abs() <= 1e-9);
    assert!((a.j_attack - (a.s_attack - a.e_attack)).abs() <= 1e-12);
}

#[test]
fn vanishing_alpha_vanishes_the_attack() {
    let mut cfg = short_attack_config();
    cfg.stealth.alpha = 1e-9;
    let a = run_attack(&cfg).unwrap().summary.attack.unwrap();
    assert!(a.mu0 > 0.0 && a.mu0 < 1e-6, "mu0 {}", a.mu0);
    assert!(a.percent_s_increase.unwrap().abs() < 0.1);
}

#[test]
fn effort_dominated_run_barely_moves_s() {
    let mut cfg = short_attack_config();
    cfg.cost.gamma = 1000.0;
    cfg.gad.lambda_delta = 1e-4;
    let a = run_attack(&cfg).unwrap().summary.attack.unwrap();
    assert!(a.percent_s_increase.unwrap() <= 1.0, "{:?}", a.percent_s_increase);
}

#[test]
fn non_convergence_is_reported_not_raised() {
    let mut cfg = short_attack_config();
    cfg.gad.max_iters = 3;
    let a = run_attack(&cfg).unwrap().summary.attack.unwrap();
    assert!(!a.converged);
    assert_eq!(a.iterations, 3);
}

#[test]
fn csv_is_well_formed() {
    let cfg = short_attack_config();
    let out = run_attack(&cfg).unwrap();
    let csv = out.trajectory_csv.unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,u1,u_plus_delta1,delta1,residual");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), cfg.grid.intervals + 1);
    let a = out.summary.attack.unwrap();
    for r in &rows {
        assert_eq!(r.len(), 7);
        // u = -K0 z and the plant input is u + δ
        let u = -(a.k0[0] * r[1] + a.k0[1] * r[2]);
        assert!((r[3] - u).abs() <= 1e-9 * (1.0 + u.abs()));
        assert!((r[4] - (r[3] + r[5])).abs() <= 1e-12 * (1.0 + r[4].abs()));
        assert!(r[6] <= cfg.stealth.alpha);
    }
    for field in csv.lines().nth(1).unwrap().split(',') {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17, "{field}");
    }
}

#[test]
fn identical_configs_write_identical_files() {
    let cfg = short_attack_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_attack(&cfg).unwrap().write(d.path()).unwrap();
    }
    for name in [SUMMARY_FILE, TRAJECTORY_FILE] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn emit_trajectory_flag_is_honored() {
    let mut cfg = short_attack_config();
    cfg.outputs.emit_trajectory = false;
    let out: Outcome = run_nominal(&cfg).unwrap();
    assert!(out.trajectory_csv.is_none());
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(out.write(dir.path()).unwrap().len(), 1);
}

#[test]
fn single_value_sweep_matches_attack() {
    let cfg = short_attack_config();
    let sweep = run_sweep(&cfg, SweepParameter::Alpha, &[cfg.stealth.alpha]).unwrap();
    let a = run_attack(&cfg).unwrap().summary.attack.unwrap();
    let row = &sweep.rows[0];
    assert_eq!(row.s_attack, Some(a.s_attack));
    assert_eq!(row.e_attack, Some(a.e_attack));
    assert_eq!(row.mu0, Some(a.mu0));
    assert_eq!(row.percent_s_increase, a.percent_s_increase);
}

#[test]
fn alpha_sweep_mu_is_nondecreasing() {
    let cfg = short_attack_config();
    let values = [1e-5, 1e-4, 1e-3, 3e-3, 1e-2, 0.1];
    let sweep = run_sweep(&cfg, SweepParameter::Alpha, &values).unwrap();
    let got: Vec<f64> = sweep.rows.iter().map(|r| r.value).collect();
    assert_eq!(got, values);
    let mu: Vec<f64> = sweep.rows.iter().map(|r| r.mu0.unwrap()).collect();
    for w in mu.windows(2) {
        assert!(w[1] >= w[0], "{mu:?}");
    }
}

#[test]
fn gamma_sweep_unscaled_effort_is_nonincreasing() {
    let cfg = short_attack_config();
    let values = [1.0, 2.0, 5.0, 10.0, 20.0];
    let sweep = run_sweep(&cfg, SweepParameter::Gamma, &values).unwrap();
    let e: Vec<f64> = sweep.rows.iter().map(|r| r.e_unscaled.unwrap()).collect();
    for w in e.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{e:?}");
    }
}

#[test]
fn sweep_records_row_failures_and_continues() {
    let cfg = short_attack_config();
    let sweep = run_sweep(&cfg, SweepParameter::Gamma, &[-1.0, 1.0]).unwrap();
    assert!(sweep.rows[0].error.as_deref().unwrap().contains("cost.gamma"));
    assert!(sweep.rows[1].error.is_none());
    assert!(run_sweep(&cfg, SweepParameter::Gamma, &[]).is_err());
}

fn sta(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sta")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let out = path("out");

    std::fs::write(path("good.json"), short_attack_config().to_json()).unwrap();
    let ok = sta(&["nominal", "--config", &path("good.json"), "--out", &out]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("out").join(SUMMARY_FILE).exists());
    assert!(dir.path().join("out").join(TRAJECTORY_FILE).exists());

    std::fs::write(path("bad.json"), "{ \"plant\": ").unwrap();
    assert_eq!(sta(&["attack", "--config", &path("bad.json"), "--out", &out]).status.code(), Some(2));
    assert_eq!(sta(&["attack", "--config", &path("missing.json"), "--out", &out]).status.code(), Some(2));

    let mut short = short_attack_config();
    short.gad.max_iters = 2;
    std::fs::write(path("short.json"), short.to_json()).unwrap();
    assert_eq!(sta(&["attack", "--config", &path("short.json"), "--out", &out]).status.code(), Some(3));

    let unstable = parse_config(
        r#"{ "plant": { "n": 1, "k": 1, "A": [1], "B": [1] }, "x0": [1], "grid": { "T": 100, "N": 100 },
             "gad": { "lambda_K": 1e6, "backtrack_max": 0 } }"#,
    )
    .unwrap();
    std::fs::write(path("diverge.json"), unstable.to_json()).unwrap();
    let code = sta(&["attack", "--config", &path("diverge.json"), "--out", &out]).status.code();
    assert_eq!(code, Some(4));

    let sweep = sta(&[
        "sweep", "--config", &path("good.json"), "--out", &out, "--param", "alpha", "--values", "0.001,0.01",
    ]);
    assert_eq!(sweep.status.code(), Some(0));
    let table = String::from_utf8(sweep.stdout).unwrap();
    assert_eq!(table.lines().count(), 3);
}
