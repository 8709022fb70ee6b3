//! Quadratic sustainability, effort and impact-effort costs.

use nalgebra::DMatrix;

use crate::cps::{AttackSignal, PlantModel, TimeGrid, Trajectory};
use crate::error::{Result, StaError};
use crate::linalg::{dot, is_symmetric, min_symmetric_eigenvalue, quad_form};

const PSD_TOL: f64 = 1e-10;
const PD_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// Weights of the running cost `xᵀQx x + uᵀRu u`, the terminal cost
/// `x(T)ᵀQf x(T)` and the attacker effort `γ‖δ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    qx: DMatrix<f64>,
    ru: DMatrix<f64>,
    qf: DMatrix<f64>,
    gamma: f64,
}

impl CostSpec {
    pub fn new(qx: DMatrix<f64>, ru: DMatrix<f64>, qf: DMatrix<f64>, gamma: f64) -> Result<Self> {
        Self::validate_psd("cost.Qx", &qx)?;
        Self::validate_psd("cost.Qf", &qf)?;
        if qx.shape() != qf.shape() {
            return Err(StaError::Dimension("cost.Qx and cost.Qf must have equal shape".into()));
        }
        if !ru.is_square() || ru.nrows() == 0 {
            return Err(StaError::config("cost.Ru", "must be square"));
        }
        if !is_symmetric(&ru, SYMMETRY_TOL) {
            return Err(StaError::config("cost.Ru", "must be symmetric"));
        }
        if min_symmetric_eigenvalue(&ru) <= PD_TOL {
            return Err(StaError::config("cost.Ru", "must be positive definite"));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(StaError::config("cost.gamma", "must be finite and nonnegative"));
        }
        Ok(CostSpec { qx, ru, qf, gamma })
    }

    /// Builds a spec that may also use a zero input weight.
    ///
    /// Only used for the degenerate "all weights zero" diagnostics where gradients
    /// must vanish identically; normal configurations go through [`CostSpec::new`].
    pub fn new_semidefinite(
        qx: DMatrix<f64>,
        ru: DMatrix<f64>,
        qf: DMatrix<f64>,
        gamma: f64,
    ) -> Result<Self> {
        Self::validate_psd("cost.Qx", &qx)?;
        Self::validate_psd("cost.Qf", &qf)?;
        Self::validate_psd("cost.Ru", &ru)?;
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(StaError::config("cost.gamma", "must be finite and nonnegative"));
        }
        Ok(CostSpec { qx, ru, qf, gamma })
    }

    /// Identity state and input weights, no terminal cost.
    pub fn identity(n: usize, k: usize, gamma: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(n, n),
            DMatrix::identity(k, k),
            DMatrix::zeros(n, n),
            gamma,
        )
    }

    fn validate_psd(path: &str, m: &DMatrix<f64>) -> Result<()> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(StaError::config(path, "must be square"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(StaError::config(path, "entries must be finite"));
        }
        if !is_symmetric(m, SYMMETRY_TOL) {
            return Err(StaError::config(path, "must be symmetric"));
        }
        if min_symmetric_eigenvalue(m) < -PSD_TOL {
            return Err(StaError::config(path, "must be positive semidefinite"));
        }
        Ok(())
    }

    pub fn qx(&self) -> &DMatrix<f64> {
        &self.qx
    }

    pub fn ru(&self) -> &DMatrix<f64> {
        &self.ru
    }

    pub fn qf(&self) -> &DMatrix<f64> {
        &self.qf
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same weights with a different effort regularization.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(StaError::config("cost.gamma", "must be finite and nonnegative"));
        }
        Ok(CostSpec {
            gamma,
            ..self.clone()
        })
    }

    pub fn check_plant(&self, plant: &PlantModel) -> Result<()> {
        if self.qx.nrows() != plant.n() {
            return Err(StaError::Dimension(format!(
                "cost.Qx is {0}x{0}, plant has n = {1}",
                self.qx.nrows(),
                plant.n()
            )));
        }
        if self.ru.nrows() != plant.k() {
            return Err(StaError::Dimension(format!(
                "cost.Ru is {0}x{0}, plant has k = {1}",
                self.ru.nrows(),
                plant.k()
            )));
        }
        Ok(())
    }
}

/// `xᵀQx x + uᵀRu u`.
pub fn running_cost(x: &[f64], u: &[f64], spec: &CostSpec) -> Result<f64> {
    if x.len() != spec.qx.nrows() || u.len() != spec.ru.nrows() {
        return Err(StaError::Dimension(format!(
            "running cost expects x in R^{} and u in R^{}, got {} and {}",
            spec.qx.nrows(),
            spec.ru.nrows(),
            x.len(),
            u.len()
        )));
    }
    Ok(quad_form(&spec.qx, x) + quad_form(&spec.ru, u))
}

/// Composite trapezoid rule over samples of a scalar integrand.
pub fn trapezoid(grid: &TimeGrid, values: impl IntoIterator<Item = f64>) -> f64 {
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| grid.trapezoid_weight(i) * v)
        .sum()
}

/// `∫ (xᵀQx x + uᵀRu u) dt + x(T)ᵀQf x(T)`.
pub fn sustainability_cost(traj: &Trajectory, spec: &CostSpec, grid: &TimeGrid) -> Result<f64> {
    traj.check_on(grid)?;
    let mut acc = 0.0;
    for i in 0..traj.len() {
        acc += grid.trapezoid_weight(i) * running_cost(traj.x().row(i), traj.u().row(i), spec)?;
    }
    Ok(acc + quad_form(&spec.qf, traj.x().last()))
}

/// `∫ γ‖δ‖² dt`.
pub fn effort_cost(attack: &AttackSignal, gamma: f64, grid: &TimeGrid) -> Result<f64> {
    if attack.len() != grid.len() {
        return Err(StaError::Dimension(format!(
            "attack has {} samples, grid has {}",
            attack.len(),
            grid.len()
        )));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    Ok(gamma * trapezoid(grid, attack.samples().rows().map(|d| dot(d, d))))
}

/// `J = S − E`.
pub fn impact_effort_cost(
    traj: &Trajectory,
    attack: &AttackSignal,
    spec: &CostSpec,
    grid: &TimeGrid,
) -> Result<f64> {
    Ok(sustainability_cost(traj, spec, grid)? - effort_cost(attack, spec.gamma(), grid)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cps::{FeedbackGain, SampledSignal, ScenarioState};

    fn scalar_plant() -> PlantModel {
        PlantModel::new(
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn traj_from(plant: &PlantModel, grid: &TimeGrid, f: impl FnMut(f64) -> Vec<f64>) -> Trajectory {
        let x = SampledSignal::from_fn(plant.n(), grid, f).unwrap();
        Trajectory::from_states(plant, &FeedbackGain::zeros(plant), x, &AttackSignal::zeros(plant.k(), grid))
            .unwrap()
    }

    #[test]
    fn running_cost_examples() {
        let s1 = CostSpec::identity(1, 1, 1.0).unwrap();
        let s2 = CostSpec::identity(2, 1, 1.0).unwrap();
        assert_eq!(running_cost(&[0.0], &[0.0], &s1).unwrap(), 0.0);
        assert_eq!(running_cost(&[2.0], &[3.0], &s1).unwrap(), 13.0);
        assert!((running_cost(&[-0.10, 0.05], &[0.0], &s2).unwrap() - 0.0125).abs() < 1e-15);
        assert!(running_cost(&[1.0, 2.0], &[0.0], &s1).is_err());
    }

    #[test]
    fn sustainability_of_decaying_exponential() {
        let plant = scalar_plant();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let spec = CostSpec::identity(1, 1, 1.0).unwrap();
        let traj = traj_from(&plant, &grid, |t| vec![(-t).exp()]);
        let s = sustainability_cost(&traj, &spec, &grid).unwrap();
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        // leading trapezoid error is dt²/12·[f'(1) − f'(0)] = 1e-4·(1 − e⁻²)/6 ≈ 1.44e-5
        let predicted = 1e-4 * (1.0 - (-2.0f64).exp()) / 6.0;
        assert!((s - exact - predicted).abs() < 1e-8, "{s} vs {exact}");
        assert!((s - exact).abs() < 1.5e-5);
    }

    #[test]
    fn sustainability_constant_and_zero() {
        let plant = scalar_plant();
        let spec = CostSpec::identity(1, 1, 1.0).unwrap();
        let grid = TimeGrid::new(100.0, 1000).unwrap();
        let ones = traj_from(&plant, &grid, |_| vec![1.0]);
        assert!((sustainability_cost(&ones, &spec, &grid).unwrap() - 100.0).abs() < 1e-9);
        let zeros = traj_from(&plant, &grid, |_| vec![0.0]);
        assert_eq!(sustainability_cost(&zeros, &spec, &grid).unwrap(), 0.0);
    }

    #[test]
    fn terminal_weight_is_added() {
        let plant = scalar_plant();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let spec = CostSpec::new(
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::from_element(1, 1, 3.0),
            0.0,
        )
        .unwrap();
        let traj = traj_from(&plant, &grid, |_| vec![2.0]);
        assert!((sustainability_cost(&traj, &spec, &grid).unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn effort_examples() {
        let grid = TimeGrid::new(100.0, 1000).unwrap();
        assert_eq!(effort_cost(&AttackSignal::zeros(1, &grid), 1.0, &grid).unwrap(), 0.0);
        let c = AttackSignal::constant(&[0.37], &grid).unwrap();
        assert!((effort_cost(&c, 1.0, &grid).unwrap() - 13.69).abs() < 1e-9);
        let wavy = AttackSignal::new(
            SampledSignal::from_fn(1, &grid, |t| vec![(0.3 * t).sin()]).unwrap(),
        )
        .unwrap();
        let e1 = effort_cost(&wavy, 0.7, &grid).unwrap();
        let e2 = effort_cost(&wavy.scaled(2.0), 0.7, &grid).unwrap();
        assert!((e2 - 4.0 * e1).abs() <= 1e-12 * e2);
    }

    #[test]
    fn impact_effort_examples() {
        let plant = scalar_plant();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let spec = CostSpec::identity(1, 1, 1.0).unwrap();
        let zero = AttackSignal::zeros(1, &grid);
        let gain = FeedbackGain::zeros(&plant);
        let x0 = ScenarioState::from_slice(&[0.5]).unwrap();
        let traj = crate::cps::simulate_closed_loop(&plant, &gain, &zero, &x0, &grid).unwrap();
        assert_eq!(
            impact_effort_cost(&traj, &zero, &spec, &grid).unwrap(),
            sustainability_cost(&traj, &spec, &grid).unwrap()
        );

        // x ≡ 0, u ≡ 0 while δ ≡ 1 is charged as effort only
        let traj0 = traj_from(&plant, &grid, |_| vec![0.0]);
        let one = AttackSignal::constant(&[1.0], &grid).unwrap();
        assert!((impact_effort_cost(&traj0, &one, &spec, &grid).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(impact_effort_cost(&traj0, &zero, &spec, &grid).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_weights() {
        let not_psd = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let err = CostSpec::new(not_psd, DMatrix::identity(1, 1), DMatrix::zeros(2, 2), 1.0).unwrap_err();
        assert!(matches!(err, StaError::Config { ref path, .. } if path == "cost.Qx"));
        let err = CostSpec::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(2, 2),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, StaError::Config { ref path, .. } if path == "cost.Ru"));
        assert!(CostSpec::identity(2, 1, -1.0).is_err());
    }
}
