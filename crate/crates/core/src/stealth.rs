//! Residual detector and α-stealthy scaling of an attack.
//!
//! The reference output `z_ref` is the attack-free closed loop under the same
//! gain and initial state, so a zero attack never raises the residual.

use serde::{Deserialize, Serialize};

use crate::cps::{
    simulate_closed_loop, AttackSignal, ClosedLoopStepper, FeedbackGain, PlantModel, ScenarioState,
    TimeGrid, Trajectory,
};
use crate::error::{Result, StaError};
use crate::linalg::RowMajor;

/// Smallest scale factor the search will accept before declaring the attack undeployable.
pub const MIN_SCALE: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StealthMode {
    /// One scale factor for the whole horizon.
    #[default]
    ConstantMu,
    /// Causal per-sample scale factors chosen in a forward pass.
    PointwiseGreedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StealthConfig {
    pub alpha: f64,
    pub mode: StealthMode,
    pub bisection_tol: f64,
}

impl StealthConfig {
    pub fn new(alpha: f64, mode: StealthMode) -> Result<Self> {
        let cfg = StealthConfig {
            alpha,
            mode,
            bisection_tol: 1e-4,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(StaError::config("stealth.alpha", "must be positive and finite"));
        }
        if !(self.bisection_tol > 0.0 && self.bisection_tol < 0.1) {
            return Err(StaError::config("stealth.bisection_tol", "must lie in (0, 0.1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScaleProfile {
    Constant(f64),
    Pointwise(Vec<f64>),
}

impl ScaleProfile {
    /// The constant factor, or the smallest pointwise factor.
    pub fn min(&self) -> f64 {
        match self {
            ScaleProfile::Constant(mu) => *mu,
            ScaleProfile::Pointwise(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn at(&self, i: usize) -> f64 {
        match self {
            ScaleProfile::Constant(mu) => *mu,
            ScaleProfile::Pointwise(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StealthResult {
    pub mu: ScaleProfile,
    pub delta_final: AttackSignal,
    pub residual: Vec<f64>,
    pub sup_residual: f64,
    /// Final closed-loop trajectory under the scaled attack.
    pub trajectory: Trajectory,
}

/// `r(tᵢ) = ‖z_ref(tᵢ) − z(tᵢ)‖₂`.
pub fn residual(traj: &Trajectory, ref_traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.len() != ref_traj.len() || traj.z().dim() != ref_traj.z().dim() {
        return Err(StaError::Dimension("trajectories are on different grids".into()));
    }
    Ok(traj
        .z()
        .rows()
        .zip(ref_traj.z().rows())
        .map(|(z, zr)| z.iter().zip(zr).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt())
        .collect())
}

fn sup(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

struct Evaluation {
    traj: Trajectory,
    residual: Vec<f64>,
    sup: f64,
}

fn evaluate(
    plant: &PlantModel,
    gain: &FeedbackGain,
    attack: &AttackSignal,
    x0: &ScenarioState,
    grid: &TimeGrid,
    reference: &Trajectory,
) -> Result<Evaluation> {
    let traj = simulate_closed_loop(plant, gain, attack, x0, grid)?;
    let residual = residual(&traj, reference)?;
    let sup = sup(&residual);
    Ok(Evaluation { traj, residual, sup })
}

/// Largest `c ∈ (0, 1]` with `sup r(c·attack) ≤ α`, found by bracketing then bisection.
fn bisect_global_scale(
    plant: &PlantModel,
    gain: &FeedbackGain,
    attack: &AttackSignal,
    x0: &ScenarioState,
    grid: &TimeGrid,
    reference: &Trajectory,
    config: &StealthConfig,
) -> Result<(f64, Evaluation)> {
    let full = evaluate(plant, gain, attack, x0, grid, reference)?;
    if full.sup <= config.alpha {
        return Ok((1.0, full));
    }
    // shrink until feasible; the upper end of the bracket is always infeasible
    let mut hi = 1.0;
    let mut lo = 0.5;
    let mut lo_eval = loop {
        let e = evaluate(plant, gain, &attack.scaled(lo), x0, grid, reference)?;
        if e.sup <= config.alpha {
            break e;
        }
        hi = lo;
        lo *= 0.5;
        if lo < MIN_SCALE {
            return Err(StaError::Infeasible(format!(
                "no scale factor above {MIN_SCALE:e} keeps the residual below alpha = {}",
                config.alpha
            )));
        }
    };
    let mut count = 0;
    while hi - lo > config.bisection_tol * hi && count < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let e = evaluate(plant, gain, &attack.scaled(mid), x0, grid, reference)?;
        if e.sup <= config.alpha {
            lo = mid;
            lo_eval = e;
        } else {
            hi = mid;
        }
        count += 1;
    }
    Ok((lo, lo_eval))
}

/// Forward pass choosing, per sample, the largest factor that keeps the next residual
/// sample below α given the already-scaled past. Returns the factors and whether
/// some step had no feasible factor at all.
fn greedy_profile(
    plant: &PlantModel,
    gain: &FeedbackGain,
    attack: &AttackSignal,
    x0: &ScenarioState,
    grid: &TimeGrid,
    reference: &Trajectory,
    config: &StealthConfig,
) -> Result<(Vec<f64>, bool)> {
    let n = plant.n();
    let k = plant.k();
    let len = grid.len();
    let l = RowMajor::new(plant.l());
    let mut stepper = ClosedLoopStepper::new(plant, gain, grid.dt())?;
    let mut mu = vec![1.0; len];
    let mut stuck = false;

    let mut x = x0.vector().as_slice().to_vec();
    let mut next = vec![0.0; n];
    let mut z = vec![0.0; plant.j()];
    let mut d0 = vec![0.0; k];
    let mut d1 = vec![0.0; k];

    let mut residual_after = |stepper: &mut ClosedLoopStepper,
                              x: &[f64],
                              d0: &[f64],
                              d1: &[f64],
                              i: usize,
                              next: &mut [f64]|
     -> f64 {
        stepper.step(x, d0, d1, next);
        l.mul_into(next, &mut z);
        z.iter()
            .zip(reference.z().row(i + 1))
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    };

    for i in 0..grid.intervals() {
        // the first interval scales both of its endpoint samples together
        let scale_start = i == 0;
        let mut trial = |m: f64, next: &mut [f64]| -> f64 {
            let m0 = if scale_start { m } else { mu[i] };
            for (d, v) in d0.iter_mut().zip(attack.row(i)) {
                *d = m0 * v;
            }
            for (d, v) in d1.iter_mut().zip(attack.row(i + 1)) {
                *d = m * v;
            }
            residual_after(&mut stepper, &x, &d0, &d1, i, next)
        };

        let chosen = if trial(1.0, &mut next) <= config.alpha {
            1.0
        } else if trial(0.0, &mut next) > config.alpha {
            stuck = true;
            MIN_SCALE
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            while hi - lo > config.bisection_tol {
                let mid = 0.5 * (lo + hi);
                if trial(mid, &mut next) <= config.alpha {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo.max(MIN_SCALE)
        };
        trial(chosen, &mut next);
        if scale_start {
            mu[0] = chosen;
        }
        mu[i + 1] = chosen;
        x.copy_from_slice(&next);
    }
    Ok((mu, stuck))
}

pub fn stealth_scale(
    plant: &PlantModel,
    gain: &FeedbackGain,
    delta_unscaled: &AttackSignal,
    x0: &ScenarioState,
    grid: &TimeGrid,
    config: &StealthConfig,
) -> Result<StealthResult> {
    config.validate()?;
    delta_unscaled.check_on(grid, plant.k())?;
    let reference = simulate_closed_loop(plant, gain, &AttackSignal::zeros(plant.k(), grid), x0, grid)?;

    match config.mode {
        StealthMode::ConstantMu => {
            let (mu, eval) = bisect_global_scale(plant, gain, delta_unscaled, x0, grid, &reference, config)?;
            Ok(StealthResult {
                mu: ScaleProfile::Constant(mu),
                delta_final: if mu == 1.0 {
                    delta_unscaled.clone()
                } else {
                    delta_unscaled.scaled(mu)
                },
                residual: eval.residual,
                sup_residual: eval.sup,
                trajectory: eval.traj,
            })
        }
        StealthMode::PointwiseGreedy => {
            let (mut mu, _stuck) = greedy_profile(plant, gain, delta_unscaled, x0, grid, &reference, config)?;
            let shaped = delta_unscaled.scaled_pointwise(&mu)?;
            // a greedy pass can paint itself into a corner; a global rescale restores feasibility
            let (c, eval) = bisect_global_scale(plant, gain, &shaped, x0, grid, &reference, config)?;
            let delta_final = if c == 1.0 {
                shaped
            } else {
                mu.iter_mut().for_each(|m| *m *= c);
                delta_unscaled.scaled_pointwise(&mu)?
            };
            let eval = if c == 1.0 {
                eval
            } else {
                evaluate(plant, gain, &delta_final, x0, grid, &reference)?
            };
            if eval.sup > config.alpha {
                return Err(StaError::Infeasible("pointwise scaling could not meet alpha".into()));
            }
            Ok(StealthResult {
                mu: ScaleProfile::Pointwise(mu),
                delta_final,
                residual: eval.residual,
                sup_residual: eval.sup,
                trajectory: eval.traj,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cps::SampledSignal;
    use nalgebra::DMatrix;

    fn reference() -> (PlantModel, FeedbackGain) {
        (
            PlantModel::full_state(
                DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]),
                DMatrix::from_row_slice(2, 1, &[2.0, 1.0]),
            )
            .unwrap(),
            FeedbackGain::new(DMatrix::from_row_slice(1, 2, &[2.74, 12.55])).unwrap(),
        )
    }

    #[test]
    fn residual_examples() {
        let (plant, gain) = reference();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let x0 = ScenarioState::from_slice(&[1.0, 1.0]).unwrap();
        let a = simulate_closed_loop(&plant, &gain, &AttackSignal::zeros(1, &grid), &x0, &grid).unwrap();
        assert!(residual(&a, &a).unwrap().iter().all(|r| *r == 0.0));

        let zero = AttackSignal::zeros(1, &grid);
        let g0 = FeedbackGain::zeros(&plant);
        let zs = Trajectory::from_states(&plant, &g0, SampledSignal::zeros(2, grid.len()), &zero).unwrap();
        let fixed = SampledSignal::from_fn(2, &grid, |_| vec![3.0, 4.0]).unwrap();
        let t34 = Trajectory::from_states(&plant, &g0, fixed, &zero).unwrap();
        assert!(residual(&t34, &zs).unwrap().iter().all(|r| (*r - 5.0).abs() < 1e-15));
    }

    #[test]
    fn zero_attack_needs_no_scaling() {
        let (plant, gain) = reference();
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let x0 = ScenarioState::from_slice(&[1.0, 1.0]).unwrap();
        let cfg = StealthConfig::new(0.003, StealthMode::ConstantMu).unwrap();
        let res = stealth_scale(&plant, &gain, &AttackSignal::zeros(1, &grid), &x0, &grid, &cfg).unwrap();
        assert_eq!(res.mu, ScaleProfile::Constant(1.0));
        assert!(res.residual.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn loose_threshold_is_inactive() {
        let (plant, gain) = reference();
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let x0 = ScenarioState::from_slice(&[1.0, 1.0]).unwrap();
        let attack = AttackSignal::constant(&[0.37], &grid).unwrap();
        let cfg = StealthConfig::new(1e9, StealthMode::ConstantMu).unwrap();
        let res = stealth_scale(&plant, &gain, &attack, &x0, &grid, &cfg).unwrap();
        assert_eq!(res.mu, ScaleProfile::Constant(1.0));
        assert_eq!(res.delta_final, attack);
    }

    #[test]
    fn constant_mode_matches_linear_closed_form() {
        let (plant, gain) = reference();
        let grid = TimeGrid::new(10.0, 1000).unwrap();
        let x0 = ScenarioState::from_slice(&[1.0, 1.0]).unwrap();
        let attack = AttackSignal::new(
            SampledSignal::from_fn(1, &grid, |t| vec![0.37 * (1.0 - (-t).exp())]).unwrap(),
        )
        .unwrap();
        let alpha = 0.003;
        let cfg = StealthConfig::new(alpha, StealthMode::ConstantMu).unwrap();
        let res = stealth_scale(&plant, &gain, &attack, &x0, &grid, &cfg).unwrap();

        let reference = simulate_closed_loop(&plant, &gain, &AttackSignal::zeros(1, &grid), &x0, &grid).unwrap();
        let attacked = simulate_closed_loop(&plant, &gain, &attack, &x0, &grid).unwrap();
        let closed = (alpha / sup(&residual(&attacked, &reference).unwrap())).min(1.0);
        let ScaleProfile::Constant(mu) = res.mu else { panic!() };
        assert!((mu - closed).abs() <= cfg.bisection_tol);
        assert!(res.sup_residual <= alpha);
    }

    #[test]
    fn pointwise_mode_is_feasible() {
        let (plant, gain) = reference();
        let grid = TimeGrid::new(10.0, 1000).unwrap();
        let x0 = ScenarioState::from_slice(&[1.0, 1.0]).unwrap();
        let attack = AttackSignal::new(SampledSignal::from_fn(1, &grid, |t| vec![0.4 * (0.5 * t).sin()]).unwrap()).unwrap();
        let cfg = StealthConfig::new(0.003, StealthMode::PointwiseGreedy).unwrap();
        let res = stealth_scale(&plant, &gain, &attack, &x0, &grid, &cfg).unwrap();
        assert!(res.sup_residual <= 0.003);
        let ScaleProfile::Pointwise(mu) = &res.mu else { panic!() };
        assert!(mu.iter().all(|m| *m > 0.0 && *m <= 1.0));
        for i in 0..grid.len() {
            assert_eq!(res.delta_final.row(i)[0], mu[i] * attack.row(i)[0]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(StealthConfig::new(0.0, StealthMode::ConstantMu).is_err());
        let mut c = StealthConfig::new(1.0, StealthMode::ConstantMu).unwrap();
        c.bisection_tol = 0.5;
        assert!(c.validate().is_err());
    }
}
