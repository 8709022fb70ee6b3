//! Alternating gradient descent on the gain and gradient ascent on the attack.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::{grad_attack, grad_gain, hamiltonian, integrate_costate};
use crate::cost::{impact_effort_cost, CostSpec};
use crate::cps::{
    is_stabilizing, simulate_closed_loop, AttackSignal, FeedbackGain, PlantModel, ScenarioState,
    TimeGrid, Trajectory,
};
use crate::error::{Result, StaError};

/// Hyperparameters of the ascent-descent loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GadConfig {
    pub lambda_k: f64,
    pub lambda_delta: f64,
    /// Stop once successive `J` values differ by less than this.
    pub eta: f64,
    pub max_iters: usize,
    /// Half-width of the admissible attack box `‖δ(t)‖∞ ≤ delta_max`.
    pub delta_max: f64,
    pub backtrack_max: usize,
    /// Reuse the pre-descent costate for the ascent step instead of re-integrating it.
    pub stale_costate: bool,
}

impl Default for GadConfig {
    fn default() -> Self {
        GadConfig {
            lambda_k: 1e-3,
            lambda_delta: 1e-2,
            eta: 1e-6,
            max_iters: 5000,
            delta_max: 10.0,
            backtrack_max: 20,
            stale_costate: false,
        }
    }
}

impl GadConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gad.lambda_K", self.lambda_k),
            ("gad.eta", self.eta),
            ("gad.delta_max", self.delta_max),
        ];
        for (path, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(StaError::config(path, "must be positive and finite"));
            }
        }
        // zero disables the ascent half, which is how pure descent runs are expressed
        if !(self.lambda_delta.is_finite() && self.lambda_delta >= 0.0) {
            return Err(StaError::config("gad.lambda_delta", "must be nonnegative and finite"));
        }
        if self.max_iters == 0 {
            return Err(StaError::config("gad.max_iters", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GadResult {
    pub k0: FeedbackGain,
    /// Attack before stealth scaling.
    pub delta_unscaled: AttackSignal,
    /// `J` of the initial guess followed by one value per iteration.
    pub j_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl GadResult {
    pub fn final_cost(&self) -> f64 {
        *self.j_history.last().expect("history holds the initial cost")
    }
}

fn project_into_box(attack: &mut AttackSignal, bound: f64) {
    for v in attack.samples_mut().as_flat_mut() {
        *v = v.clamp(-bound, bound);
    }
}

fn at(iteration: usize) -> impl FnOnce(StaError) -> StaError {
    move |e| StaError::AtIteration {
        iteration,
        source: Box::new(e),
    }
}

/// Evaluates `J` and returns it with the trajectory it came from.
pub fn evaluate(
    plant: &PlantModel,
    spec: &CostSpec,
    grid: &TimeGrid,
    x0: &ScenarioState,
    gain: &FeedbackGain,
    attack: &AttackSignal,
) -> Result<(Trajectory, f64)> {
    let traj = simulate_closed_loop(plant, gain, attack, x0, grid)?;
    let j = impact_effort_cost(&traj, attack, spec, grid)?;
    Ok((traj, j))
}

pub fn run_gad(
    plant: &PlantModel,
    spec: &CostSpec,
    grid: &TimeGrid,
    x0: &ScenarioState,
    config: &GadConfig,
    init_k: &FeedbackGain,
    init_delta: &AttackSignal,
) -> Result<GadResult> {
    config.validate()?;
    init_k.check_shape(plant)?;
    spec.check_plant(plant)?;
    init_delta.check_on(grid, plant.k())?;
    if !is_stabilizing(plant, init_k) {
        return Err(StaError::config("gad.init_K", "initial gain is not stabilizing"));
    }
    if init_delta.max_abs() > config.delta_max {
        return Err(StaError::config(
            "gad.init_delta",
            format!("initial attack leaves the box |δ| <= {}", config.delta_max),
        ));
    }

    let mut gain = init_k.clone();
    let mut attack = init_delta.clone();
    let (mut traj, j0) = evaluate(plant, spec, grid, x0, &gain, &attack).map_err(at(0))?;
    let mut history = vec![j0];
    let mut converged = false;
    let mut iterations = 0;

    for l in 1..=config.max_iters {
        iterations = l;
        let costate = integrate_costate(&traj, plant, &gain, spec, grid).map_err(at(l))?;
        let g = grad_gain(&traj, &costate, plant, &gain, spec, grid)?;

        let mut step = config.lambda_k;
        let mut next_gain = None;
        for _ in 0..=config.backtrack_max {
            let candidate = FeedbackGain::new(gain.matrix() - &g.0 * step)?;
            if is_stabilizing(plant, &candidate) {
                next_gain = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        let next_gain = next_gain.ok_or(StaError::StepFailure {
            iteration: l,
            halvings: config.backtrack_max,
        })?;

        if config.lambda_delta > 0.0 {
            let grad = if config.stale_costate {
                grad_attack(&traj, &costate, plant, &next_gain, spec, grid)?
            } else {
                let mid = simulate_closed_loop(plant, &next_gain, &attack, x0, grid).map_err(at(l))?;
                let mid_costate = integrate_costate(&mid, plant, &next_gain, spec, grid).map_err(at(l))?;
                grad_attack(&mid, &mid_costate, plant, &next_gain, spec, grid)?
            };
            let step = config.lambda_delta;
            for (d, gd) in attack
                .samples_mut()
                .as_flat_mut()
                .iter_mut()
                .zip(grad.samples.as_flat())
            {
                *d += step * gd;
            }
            project_into_box(&mut attack, config.delta_max);
        }
        gain = next_gain;

        let (next_traj, j) = evaluate(plant, spec, grid, x0, &gain, &attack).map_err(at(l))?;
        traj = next_traj;
        let previous = *history.last().expect("nonempty");
        history.push(j);
        if (j - previous).abs() < config.eta {
            converged = true;
            break;
        }
    }

    Ok(GadResult {
        k0: gain,
        delta_unscaled: attack,
        j_history: history,
        iterations,
        converged,
    })
}

/// Outcome of the pointwise Hamiltonian-maximization spot check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximumPrincipleReport {
    /// Largest `H(δ') − H(δ₀) − tol` over all probes; positive means a violation.
    pub worst_excess: f64,
    pub worst_time_index: usize,
    pub holds: bool,
    /// Largest `‖∇_δ H‖₂` at times where `δ₀(t)` lies strictly inside the box.
    pub max_interior_gradient: f64,
    pub interior_samples: usize,
    pub probes: usize,
}

pub const INTERIOR_GRADIENT_TOL: f64 = 1e-3;

pub fn maximum_principle_tolerance(h: f64) -> f64 {
    1e-4 * (1.0 + h.abs())
}

/// Probes `H(x₀(t), Ω₀(t), δ₀(t)) ≥ H(x₀(t), Ω₀(t), δ')` at random times and random
/// feasible `δ'` drawn uniformly from the box.
#[allow(clippy::too_many_arguments)]
pub fn verify_maximum_principle(
    result: &GadResult,
    plant: &PlantModel,
    spec: &CostSpec,
    grid: &TimeGrid,
    x0: &ScenarioState,
    delta_max: f64,
    n_times: usize,
    n_perturbations: usize,
    seed: u64,
) -> Result<MaximumPrincipleReport> {
    let gain = &result.k0;
    let attack = &result.delta_unscaled;
    let traj = simulate_closed_loop(plant, gain, attack, x0, grid)?;
    let costate = integrate_costate(&traj, plant, gain, spec, grid)?;
    let grad = grad_attack(&traj, &costate, plant, gain, spec, grid)?;

    let mut max_interior_gradient: f64 = 0.0;
    let mut interior_samples = 0;
    for i in 0..grid.len() {
        if attack.row(i).iter().all(|v| v.abs() < delta_max * (1.0 - 1e-9)) {
            interior_samples += 1;
            let g = grad.samples.row(i);
            max_interior_gradient = max_interior_gradient.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_time_index = 0;
    let mut probe = vec![0.0; plant.k()];
    for _ in 0..n_times {
        let i = rng.gen_range(0..grid.len());
        let x = traj.x().row(i);
        let om = costate.omega.row(i);
        let h0 = hamiltonian(x, om, attack.row(i), plant, gain, spec)?;
        let tol = maximum_principle_tolerance(h0);
        for _ in 0..n_perturbations {
            for p in probe.iter_mut() {
                *p = rng.gen_range(-delta_max..=delta_max);
            }
            let h = hamiltonian(x, om, &probe, plant, gain, spec)?;
            let excess = h - h0 - tol;
            if excess > worst_excess {
                worst_excess = excess;
                worst_time_index = i;
            }
        }
    }
    Ok(MaximumPrincipleReport {
        worst_excess,
        worst_time_index,
        holds: worst_excess <= 0.0,
        max_interior_gradient,
        interior_samples,
        probes: n_times * n_perturbations,
    })
}

/// Gain matrix as a flat row-major vector, for reports.
pub fn gain_entries(gain: &FeedbackGain) -> Vec<f64> {
    let m: &DMatrix<f64> = gain.matrix();
    (0..m.nrows())
        .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
        .collect()
}
