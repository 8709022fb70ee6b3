use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Scenario, ScenarioConfig};
use super::output::trajectory_csv;
use super::report::{percent_increase, AttackSummary, NominalSummary, Provenance, SummaryReport};
use crate::adjoint::{grad_attack, grad_gain, integrate_costate};
use crate::cost::{effort_cost, impact_effort_cost, sustainability_cost, CostSpec};
use crate::cps::{
    is_stabilizing, simulate_closed_loop, AttackSignal, FeedbackGain, PlantModel, SampledSignal,
    ScenarioState, TimeGrid, Trajectory,
};
use crate::error::{Result, StaError};
use crate::gad::{gain_entries, run_gad, GadResult};
use crate::lqr::{lqr_gain, solve_care, RiccatiSolution};
use crate::stealth::{stealth_scale, StealthResult};

/// Summary plus the trajectory CSV, if one was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: SummaryReport,
    pub trajectory_csv: Option<String>,
}

#[derive(Debug, Clone)]
pub struct NominalRun {
    /// Output-feedback gain, `K_state · L⁻¹`.
    pub gain: FeedbackGain,
    pub riccati: RiccatiSolution,
    pub trajectory: Trajectory,
    pub s: f64,
    pub j: f64,
}

impl NominalRun {
    pub fn summary(&self) -> NominalSummary {
        NominalSummary {
            k_lqr: gain_entries(&self.gain),
            care_residual: self.riccati.residual_norm,
            s_nominal: self.s,
            j_nominal: self.j,
        }
    }
}

/// Solves the LQR problem on the state and maps the gain through `L⁻¹`.
pub fn nominal_baseline(sc: &Scenario) -> Result<NominalRun> {
    let plant = &sc.plant;
    let l_inv = Some(plant.l())
        .filter(|l| l.is_square())
        .and_then(|l| l.clone().try_inverse())
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| StaError::config("plant.L", "the LQR baseline needs a square invertible output map"))?;
    let riccati = solve_care(plant.a(), plant.b(), sc.spec.qx(), sc.spec.ru())?;
    let k_state = lqr_gain(&riccati, plant.b(), sc.spec.ru())?;
    let gain = FeedbackGain::new(k_state.matrix() * l_inv)?;
    let zero = AttackSignal::zeros(plant.k(), &sc.grid);
    let trajectory = simulate_closed_loop(plant, &gain, &zero, &sc.x0, &sc.grid)?;
    let s = sustainability_cost(&trajectory, &sc.spec, &sc.grid)?;
    let j = impact_effort_cost(&trajectory, &zero, &sc.spec, &sc.grid)?;
    Ok(NominalRun {
        gain,
        riccati,
        trajectory,
        s,
        j,
    })
}

pub fn run_nominal(config: &ScenarioConfig) -> Result<Outcome> {
    let sc = config.build()?;
    let nominal = nominal_baseline(&sc)?;
    let csv = config.outputs.emit_trajectory.then(|| {
        let zeros = vec![0.0; sc.grid.len()];
        trajectory_csv(&nominal.trajectory, &sc.grid, &zeros)
    });
    Ok(Outcome {
        summary: SummaryReport {
            nominal: nominal.summary(),
            attack: None,
            provenance: Provenance::of(config),
        },
        trajectory_csv: csv,
    })
}

#[derive(Debug, Clone)]
pub struct AttackRun {
    pub summary: AttackSummary,
    pub gad: GadResult,
    pub stealth: StealthResult,
}

fn settled_magnitude(attack: &SampledSignal) -> f64 {
    let len = attack.len();
    let start = len - (len / 10).max(1);
    let total: f64 = (start..len)
        .map(|i| attack.row(i).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .sum();
    total / (len - start) as f64
}

/// GAD from the LQR gain, stealth scaling, and the final closed loop under `(K₀, δ₀)`.
pub fn attack_pipeline(sc: &Scenario, nominal: &NominalRun) -> Result<AttackRun> {
    let gad = run_gad(
        &sc.plant,
        &sc.spec,
        &sc.grid,
        &sc.x0,
        &sc.gad,
        &nominal.gain,
        &sc.init_delta,
    )?;
    let stealth = stealth_scale(&sc.plant, &gad.k0, &gad.delta_unscaled, &sc.x0, &sc.grid, &sc.stealth)?;
    let s_attack = sustainability_cost(&stealth.trajectory, &sc.spec, &sc.grid)?;
    let e_attack = effort_cost(&stealth.delta_final, sc.spec.gamma(), &sc.grid)?;
    let e_unscaled = effort_cost(&gad.delta_unscaled, sc.spec.gamma(), &sc.grid)?;
    let summary = AttackSummary {
        k0: gain_entries(&gad.k0),
        mu0: stealth.mu.min(),
        sup_residual: stealth.sup_residual,
        s_attack,
        e_attack,
        j_attack: s_attack - e_attack,
        e_unscaled,
        settled_delta: settled_magnitude(stealth.delta_final.samples()),
        settled_delta_unscaled: settled_magnitude(gad.delta_unscaled.samples()),
        iterations: gad.iterations,
        converged: gad.converged,
        percent_s_increase: percent_increase(s_attack, nominal.s),
    };
    Ok(AttackRun { summary, gad, stealth })
}

pub fn run_attack(config: &ScenarioConfig) -> Result<Outcome> {
    let sc = config.build()?;
    let nominal = nominal_baseline(&sc)?;
    let attack = attack_pipeline(&sc, &nominal)?;
    let csv = config
        .outputs
        .emit_trajectory
        .then(|| trajectory_csv(&attack.stealth.trajectory, &sc.grid, &attack.stealth.residual));
    Ok(Outcome {
        summary: SummaryReport {
            nominal: nominal.summary(),
            attack: Some(attack.summary),
            provenance: Provenance::of(config),
        },
        trajectory_csv: csv,
    })
}

pub const GRAD_CHECK_TOL: f64 = 1e-3;
pub const GRAD_CHECK_MIN_SHRINK: f64 = 3.5;
pub const GRAD_CHECK_POINTS: usize = 20;
pub const GRAD_CHECK_GAIN_SCALE: f64 = 0.75;
const FD_STEP_GAIN: f64 = 1e-5;
const FD_STEP_ATTACK: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub quantity: String,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckPass {
    pub dt: f64,
    pub entries: Vec<GradCheckEntry>,
    /// `‖adjoint − fd‖₂ / ‖fd‖₂` over all gain entries.
    pub gain_error: f64,
    /// Same, over all sampled attack entries.
    pub attack_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Gain and attack the gradients are taken at.
    pub eval_gain: Vec<f64>,
    pub base: GradCheckPass,
    /// Same check with `dt` halved.
    pub refined: GradCheckPass,
    pub shrink_gain: f64,
    pub shrink_attack: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn table(&self) -> String {
        let mut out = format!("{:<16} {:>14} {:>14} {:>10}\n", "quantity", "adjoint", "fin.diff", "rel.err");
        for (label, pass) in [("dt", &self.base), ("dt/2", &self.refined)] {
            out.push_str(&format!("-- {label} = {}\n", pass.dt));
            for e in &pass.entries {
                out.push_str(&format!(
                    "{:<16} {:>14.6e} {:>14.6e} {:>10.2e}\n",
                    e.quantity, e.adjoint, e.finite_difference, e.rel_error
                ));
            }
            out.push_str(&format!("gain error {:.3e}  attack error {:.3e}\n", pass.gain_error, pass.attack_error));
        }
        out.push_str(&format!(
            "shrink gain {:.2}  shrink attack {:.2}\n{}\n",
            self.shrink_gain,
            self.shrink_attack,
            if self.passed { "PASS" } else { "FAIL" }
        ));
        out
    }
}

fn normwise_error(pairs: &[(f64, f64)]) -> f64 {
    let diff: f64 = pairs.iter().map(|(a, f)| (a - f) * (a - f)).sum();
    let scale: f64 = pairs.iter().map(|(a, f)| (a * a).max(f * f)).sum();
    if scale == 0.0 {
        0.0
    } else {
        (diff / scale).sqrt()
    }
}

fn rel_error(a: f64, fd: f64) -> f64 {
    let scale = a.abs().max(fd.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - fd).abs() / scale
    }
}

/// Smooth random attack: a few low-frequency sinusoids per channel.
pub fn smooth_probe_attack(k: usize, grid: &TimeGrid, seed: u64) -> Result<AttackSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<Vec<(f64, f64, f64)>> = (0..k)
        .map(|_| {
            (0..3)
                .map(|_| {
                    (
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(1..=5) as f64,
                        rng.gen_range(0.0..2.0 * PI),
                    )
                })
                .collect()
        })
        .collect();
    let horizon = grid.horizon();
    let samples = SampledSignal::from_fn(k, grid, |t| {
        modes
            .iter()
            .map(|m| m.iter().map(|(a, f, p)| a * (2.0 * PI * f * t / horizon + p).sin()).sum())
            .collect()
    })?;
    AttackSignal::new(samples)
}

fn j_at(
    plant: &PlantModel,
    spec: &CostSpec,
    grid: &TimeGrid,
    x0: &ScenarioState,
    gain: &FeedbackGain,
    attack: &AttackSignal,
) -> Result<f64> {
    let traj = simulate_closed_loop(plant, gain, attack, x0, grid)?;
    impact_effort_cost(&traj, attack, spec, grid)
}

fn grad_check_pass(
    plant: &PlantModel,
    spec: &CostSpec,
    grid: &TimeGrid,
    x0: &ScenarioState,
    gain: &FeedbackGain,
    attack: &AttackSignal,
    times: &[f64],
) -> Result<GradCheckPass> {
    let traj = simulate_closed_loop(plant, gain, attack, x0, grid)?;
    let costate = integrate_costate(&traj, plant, gain, spec, grid)?;
    let gk = grad_gain(&traj, &costate, plant, gain, spec, grid)?;
    let gd = grad_attack(&traj, &costate, plant, gain, spec, grid)?;

    let mut entries = Vec::new();
    let mut gain_pairs = Vec::new();
    let k = gain.matrix();
    for r in 0..k.nrows() {
        for c in 0..k.ncols() {
            let h = FD_STEP_GAIN * k[(r, c)].abs().max(1.0);
            let mut plus = k.clone();
            plus[(r, c)] += h;
            let mut minus = k.clone();
            minus[(r, c)] -= h;
            let jp = j_at(plant, spec, grid, x0, &FeedbackGain::new(plus)?, attack)?;
            let jm = j_at(plant, spec, grid, x0, &FeedbackGain::new(minus)?, attack)?;
            let fd = (jp - jm) / (2.0 * h);
            let err = rel_error(gk.0[(r, c)], fd);
            gain_pairs.push((gk.0[(r, c)], fd));
            entries.push(GradCheckEntry {
                quantity: format!("K[{r},{c}]"),
                adjoint: gk.0[(r, c)],
                finite_difference: fd,
                rel_error: err,
            });
        }
    }

    // per-sample difference quotient divided by the quadrature weight of that sample
    let mut attack_pairs = Vec::new();
    for &t in times {
        let i = (t / grid.dt()).round() as usize;
        let w = grid.trapezoid_weight(i);
        for c in 0..plant.k() {
            let mut plus = attack.clone();
            plus.samples_mut().row_mut(i)[c] += FD_STEP_ATTACK;
            let mut minus = attack.clone();
            minus.samples_mut().row_mut(i)[c] -= FD_STEP_ATTACK;
            let jp = j_at(plant, spec, grid, x0, gain, &plus)?;
            let jm = j_at(plant, spec, grid, x0, gain, &minus)?;
            let fd = (jp - jm) / (2.0 * FD_STEP_ATTACK * w);
            let a = gd.samples.row(i)[c];
            let err = rel_error(a, fd);
            attack_pairs.push((a, fd));
            entries.push(GradCheckEntry {
                quantity: format!("delta[t={t:.4},{c}]"),
                adjoint: a,
                finite_difference: fd,
                rel_error: err,
            });
        }
    }
    Ok(GradCheckPass {
        dt: grid.dt(),
        entries,
        gain_error: normwise_error(&gain_pairs),
        attack_error: normwise_error(&attack_pairs),
    })
}

fn shrink(base: f64, refined: f64) -> f64 {
    if base == 0.0 {
        f64::INFINITY
    } else {
        base / refined
    }
}

/// Adjoint versus central finite differences at `(gain, smooth random attack)`, on
/// `grid` and on the grid with `dt` halved.
pub fn grad_check(
    plant: &PlantModel,
    spec: &CostSpec,
    grid: &TimeGrid,
    x0: &ScenarioState,
    gain: &FeedbackGain,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = grid.intervals();
    let times: Vec<f64> = (0..GRAD_CHECK_POINTS)
        .map(|_| grid.time(rng.gen_range(1..n)))
        .collect();
    let fine = grid.refined();
    let base_attack = smooth_probe_attack(plant.k(), grid, seed)?;
    let fine_attack = smooth_probe_attack(plant.k(), &fine, seed)?;
    let base = grad_check_pass(plant, spec, grid, x0, gain, &base_attack, &times)?;
    let refined = grad_check_pass(plant, spec, &fine, x0, gain, &fine_attack, &times)?;
    let shrink_gain = shrink(base.gain_error, refined.gain_error);
    let shrink_attack = shrink(base.attack_error, refined.attack_error);
    let within = base.gain_error <= GRAD_CHECK_TOL && base.attack_error <= GRAD_CHECK_TOL;
    let passed = within && shrink_gain >= GRAD_CHECK_MIN_SHRINK && shrink_attack >= GRAD_CHECK_MIN_SHRINK;
    Ok(GradCheckReport {
        eval_gain: gain_entries(gain),
        base,
        refined,
        shrink_gain,
        shrink_attack,
        passed,
    })
}

/// Runs [`grad_check`] at `GRAD_CHECK_GAIN_SCALE` times the LQR gain.
pub fn run_grad_check(config: &ScenarioConfig) -> Result<GradCheckReport> {
    let sc = config.build()?;
    let nominal = nominal_baseline(&sc)?;
    let scaled = FeedbackGain::new(nominal.gain.matrix() * GRAD_CHECK_GAIN_SCALE)?;
    let gain = if is_stabilizing(&sc.plant, &scaled) {
        scaled
    } else {
        nominal.gain
    };
    grad_check(&sc.plant, &sc.spec, &sc.grid, &sc.x0, &gain, sc.seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Gamma,
    Alpha,
}

impl std::str::FromStr for SweepParameter {
    type Err = StaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParameter::Gamma),
            "alpha" => Ok(SweepParameter::Alpha),
            other => Err(StaError::config("param", format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(rename = "S_attack")]
    pub s_attack: Option<f64>,
    #[serde(rename = "E_attack")]
    pub e_attack: Option<f64>,
    #[serde(rename = "E_unscaled")]
    pub e_unscaled: Option<f64>,
    pub mu0: Option<f64>,
    #[serde(rename = "percent_S_increase")]
    pub percent_s_increase: Option<f64>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub nominal: NominalSummary,
    pub rows: Vec<SweepRow>,
    pub provenance: Provenance,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.16e}")).unwrap_or_default()
        }
        let mut out = String::from("value,S_attack,E_attack,E_unscaled,mu0,percent_S_increase,converged,error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{},{},{},{},{},{},{}\n",
                r.value,
                cell(r.s_attack),
                cell(r.e_attack),
                cell(r.e_unscaled),
                cell(r.mu0),
                cell(r.percent_s_increase),
                r.converged.map(|c| c.to_string()).unwrap_or_default(),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            ));
        }
        out
    }
}

fn sweep_row(base: &ScenarioConfig, nominal: &NominalRun, parameter: SweepParameter, value: f64) -> SweepRow {
    let mut cfg = base.clone();
    match parameter {
        SweepParameter::Gamma => cfg.cost.gamma = value,
        SweepParameter::Alpha => cfg.stealth.alpha = value,
    }
    let run = cfg.build().and_then(|sc| attack_pipeline(&sc, nominal));
    match run {
        Ok(a) => SweepRow {
            value,
            s_attack: Some(a.summary.s_attack),
            e_attack: Some(a.summary.e_attack),
            e_unscaled: Some(a.summary.e_unscaled),
            mu0: Some(a.summary.mu0),
            percent_s_increase: a.summary.percent_s_increase,
            converged: Some(a.summary.converged),
            error: None,
        },
        Err(e) => SweepRow {
            value,
            s_attack: None,
            e_attack: None,
            e_unscaled: None,
            mu0: None,
            percent_s_increase: None,
            converged: None,
            error: Some(e.to_string()),
        },
    }
}

/// One attack run per value against a shared nominal baseline; rows keep input order.
pub fn run_sweep(config: &ScenarioConfig, parameter: SweepParameter, values: &[f64]) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(StaError::config("values", "sweep needs at least one value"));
    }
    let sc = config.build()?;
    let nominal = nominal_baseline(&sc)?;
    let rows = values
        .par_iter()
        .map(|&v| sweep_row(config, &nominal, parameter, v))
        .collect();
    Ok(SweepReport {
        parameter,
        nominal: nominal.summary(),
        rows,
        provenance: Provenance::of(config),
    })
}
