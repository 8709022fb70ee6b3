//! Linear plant model and closed-loop simulation.
//!
//! The plant is `ẋ = A x + B u` with measured output `z = L x` and an
//! input corrupted by an additive attack, `u = -K z + δ`. Every signal lives
//! on a uniform [`TimeGrid`] shared with the costate integrator and the
//! quadrature rules in [`crate::cost`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StaError};
use crate::linalg::{all_finite, spectral_abscissa, RowMajor};

/// States with any component above this magnitude are treated as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Eigenvalue real parts must sit below `-STABILITY_MARGIN` to count as Hurwitz.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// State, input and observation matrices of a linear plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    l: DMatrix<f64>,
}

impl PlantModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, l: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(StaError::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(StaError::Dimension(format!(
                "B must be {n}xk with k >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if l.ncols() != n || l.nrows() == 0 {
            return Err(StaError::Dimension(format!(
                "L must be jx{n} with j >= 1, got {}x{}",
                l.nrows(),
                l.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("L", &l)] {
            if !all_finite(m) {
                return Err(StaError::config(name, "entries must be finite"));
            }
        }
        Ok(PlantModel { a, b, l })
    }

    /// Plant with full-state measurement (`L = I`).
    pub fn full_state(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, b, DMatrix::identity(n, n))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn k(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension.
    pub fn j(&self) -> usize {
        self.l.nrows()
    }
}

/// Static output-feedback gain `K` (k×j).
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGain(DMatrix<f64>);

impl FeedbackGain {
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if !all_finite(&k) {
            return Err(StaError::config("K", "entries must be finite"));
        }
        Ok(FeedbackGain(k))
    }

    pub fn zeros(plant: &PlantModel) -> Self {
        FeedbackGain(DMatrix::zeros(plant.k(), plant.j()))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn check_shape(&self, plant: &PlantModel) -> Result<()> {
        if self.0.shape() != (plant.k(), plant.j()) {
            return Err(StaError::Dimension(format!(
                "gain must be {}x{}, got {}x{}",
                plant.k(),
                plant.j(),
                self.0.nrows(),
                self.0.ncols()
            )));
        }
        Ok(())
    }
}

/// Uniform grid `tᵢ = i·dt`, `i = 0..=N`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, intervals: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(StaError::config("grid.T", "horizon must be positive and finite"));
        }
        if intervals < 2 {
            return Err(StaError::config("grid.N", "need at least 2 intervals"));
        }
        Ok(TimeGrid { horizon, intervals })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of grid points, `N + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    /// Composite trapezoid weight of sample `i`.
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.intervals {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }

    /// Same horizon with twice the intervals.
    pub fn refined(&self) -> Self {
        TimeGrid {
            horizon: self.horizon,
            intervals: self.intervals * 2,
        }
    }
}

/// Vector-valued samples on a grid, stored contiguously (sample-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    dim: usize,
    data: Vec<f64>,
}

impl SampledSignal {
    pub fn zeros(dim: usize, len: usize) -> Self {
        SampledSignal {
            dim,
            data: vec![0.0; dim * len],
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(StaError::Dimension(format!(
                "{} values cannot be split into samples of dimension {dim}",
                data.len()
            )));
        }
        Ok(SampledSignal { dim, data })
    }

    pub fn from_fn(dim: usize, grid: &TimeGrid, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * grid.len());
        for i in 0..grid.len() {
            let v = f(grid.time(i));
            if v.len() != dim {
                return Err(StaError::Dimension(format!(
                    "sample {i} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            data.extend(v);
        }
        Ok(SampledSignal { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.len() - 1)
    }

    /// Largest absolute entry over all samples.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_on(&self, grid: &TimeGrid, dim: usize, what: &str) -> Result<()> {
        if self.dim != dim || self.len() != grid.len() {
            return Err(StaError::Dimension(format!(
                "{what} must hold {} samples of dimension {dim}, got {} of dimension {}",
                grid.len(),
                self.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// Gridded attack samples `δ(tᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSignal(SampledSignal);

impl AttackSignal {
    pub fn new(samples: SampledSignal) -> Result<Self> {
        if samples.as_flat().iter().any(|v| !v.is_finite()) {
            return Err(StaError::config("delta", "attack samples must be finite"));
        }
        Ok(AttackSignal(samples))
    }

    pub fn zeros(k: usize, grid: &TimeGrid) -> Self {
        AttackSignal(SampledSignal::zeros(k, grid.len()))
    }

    /// The same vector at every grid point.
    pub fn constant(value: &[f64], grid: &TimeGrid) -> Result<Self> {
        let data = value.iter().copied().cycle().take(value.len() * grid.len()).collect();
        Self::new(SampledSignal::from_flat(value.len(), data)?)
    }

    pub fn samples(&self) -> &SampledSignal {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.0.clone();
        s.as_flat_mut().iter_mut().for_each(|v| *v *= factor);
        AttackSignal(s)
    }

    /// Per-sample scaling `μᵢ·δᵢ`.
    pub fn scaled_pointwise(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.len() {
            return Err(StaError::Dimension("one scale factor per sample required".into()));
        }
        let mut s = self.0.clone();
        for (i, f) in factors.iter().enumerate() {
            s.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        Ok(AttackSignal(s))
    }

    pub(crate) fn samples_mut(&mut self) -> &mut SampledSignal {
        &mut self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    pub fn check_on(&self, grid: &TimeGrid, k: usize) -> Result<()> {
        self.0.check_on(grid, k, "attack")
    }
}

/// Initial state `x(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioState(DVector<f64>);

impl ScenarioState {
    pub fn new(x0: DVector<f64>) -> Result<Self> {
        if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
            return Err(StaError::config("x0", "initial state must be non-empty and finite"));
        }
        Ok(ScenarioState(x0))
    }

    pub fn from_slice(x0: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(x0))
    }

    pub fn zeros(n: usize) -> Self {
        ScenarioState(DVector::zeros(n))
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Simulated state, applied input, output and attack on a grid.
///
/// Built only from states, so `z = L x` and `u = -K z + δ` hold sample by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    x: SampledSignal,
    u: SampledSignal,
    z: SampledSignal,
    delta: SampledSignal,
}

impl Trajectory {
    /// Completes a state sequence with the outputs and inputs implied by `gain` and `attack`.
    pub fn from_states(
        plant: &PlantModel,
        gain: &FeedbackGain,
        x: SampledSignal,
        attack: &AttackSignal,
    ) -> Result<Self> {
        gain.check_shape(plant)?;
        if x.dim() != plant.n() || x.len() != attack.len() || attack.dim() != plant.k() {
            return Err(StaError::Dimension(format!(
                "states ({}x{}) and attack ({}x{}) do not fit the plant (n={}, k={})",
                x.len(),
                x.dim(),
                attack.len(),
                attack.dim(),
                plant.n(),
                plant.k()
            )));
        }
        let len = x.len();
        let (k, j) = (plant.k(), plant.j());
        let l = RowMajor::new(plant.l());
        let kg = RowMajor::new(gain.matrix());
        let mut z = SampledSignal::zeros(j, len);
        let mut u = SampledSignal::zeros(k, len);
        for i in 0..len {
            l.mul_into(x.row(i), z.row_mut(i));
            let ui = u.row_mut(i);
            kg.mul_into(z.row(i), ui);
            for (uv, dv) in ui.iter_mut().zip(attack.row(i)) {
                *uv = *dv - *uv;
            }
        }
        Ok(Trajectory {
            x,
            u,
            z,
            delta: attack.samples().clone(),
        })
    }

    pub fn x(&self) -> &SampledSignal {
        &self.x
    }

    pub fn u(&self) -> &SampledSignal {
        &self.u
    }

    pub fn z(&self) -> &SampledSignal {
        &self.z
    }

    pub fn delta(&self) -> &SampledSignal {
        &self.delta
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn check_on(&self, grid: &TimeGrid) -> Result<()> {
        if self.len() != grid.len() {
            return Err(StaError::Dimension(format!(
                "trajectory has {} samples, grid has {}",
                self.len(),
                grid.len()
            )));
        }
        Ok(())
    }
}

/// `A − B K L`.
pub fn closed_loop_matrix(plant: &PlantModel, gain: &FeedbackGain) -> Result<DMatrix<f64>> {
    gain.check_shape(plant)?;
    Ok(plant.a() - plant.b() * gain.matrix() * plant.l())
}

/// True when every closed-loop eigenvalue has real part below `-1e-9`.
pub fn is_stabilizing(plant: &PlantModel, gain: &FeedbackGain) -> bool {
    match closed_loop_matrix(plant, gain) {
        Ok(acl) => spectral_abscissa(&acl) < -STABILITY_MARGIN,
        Err(_) => false,
    }
}

/// One RK4 step of the closed loop, reused by the simulator and the causal stealth scaler.
pub(crate) struct ClosedLoopStepper {
    acl: RowMajor,
    b: RowMajor,
    dt: f64,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
    d_mid: Vec<f64>,
}

impl ClosedLoopStepper {
    pub(crate) fn new(plant: &PlantModel, gain: &FeedbackGain, dt: f64) -> Result<Self> {
        let n = plant.n();
        Ok(ClosedLoopStepper {
            acl: RowMajor::new(&closed_loop_matrix(plant, gain)?),
            b: RowMajor::new(plant.b()),
            dt,
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
            d_mid: vec![0.0; plant.k()],
        })
    }

    fn rhs(acl: &RowMajor, b: &RowMajor, state: &[f64], d: &[f64], out: &mut [f64]) {
        acl.mul_into(state, out);
        b.mul_add_into(d, out);
    }

    /// Advances `x` over one interval with attack samples `d0` (start) and `d1` (end).
    pub(crate) fn step(&mut self, x: &[f64], d0: &[f64], d1: &[f64], out: &mut [f64]) {
        let dt = self.dt;
        let n = x.len();
        for ((m, a), c) in self.d_mid.iter_mut().zip(d0).zip(d1) {
            *m = 0.5 * (a + c);
        }
        Self::rhs(&self.acl, &self.b, x, d0, &mut self.k1);
        for r in 0..n {
            self.stage[r] = x[r] + 0.5 * dt * self.k1[r];
        }
        Self::rhs(&self.acl, &self.b, &self.stage, &self.d_mid, &mut self.k2);
        for r in 0..n {
            self.stage[r] = x[r] + 0.5 * dt * self.k2[r];
        }
        Self::rhs(&self.acl, &self.b, &self.stage, &self.d_mid, &mut self.k3);
        for r in 0..n {
            self.stage[r] = x[r] + dt * self.k3[r];
        }
        Self::rhs(&self.acl, &self.b, &self.stage, d1, &mut self.k4);
        for r in 0..n {
            out[r] = x[r] + dt / 6.0 * (self.k1[r] + 2.0 * self.k2[r] + 2.0 * self.k3[r] + self.k4[r]);
        }
    }
}

/// Classical RK4 on `ẋ = (A − BKL) x + B δ` with δ linearly interpolated at half steps.
pub fn simulate_closed_loop(
    plant: &PlantModel,
    gain: &FeedbackGain,
    attack: &AttackSignal,
    x0: &ScenarioState,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let n = plant.n();
    let k = plant.k();
    attack.check_on(grid, k)?;
    if x0.vector().len() != n {
        return Err(StaError::Dimension(format!(
            "x0 has length {}, plant has n = {n}",
            x0.vector().len()
        )));
    }
    let mut stepper = ClosedLoopStepper::new(plant, gain, grid.dt())?;
    let mut x = SampledSignal::zeros(n, grid.len());
    x.row_mut(0).copy_from_slice(x0.vector().as_slice());
    let mut next = vec![0.0; n];
    for i in 0..grid.intervals() {
        stepper.step(x.row(i), attack.row(i), attack.row(i + 1), &mut next);
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD) {
            return Err(StaError::Divergence {
                index: i + 1,
                time: grid.time(i + 1),
            });
        }
        x.row_mut(i + 1).copy_from_slice(&next);
    }
    Trajectory::from_states(plant, gain, x, attack)
}
