//! Hamiltonian, backward costate integration and adjoint gradients of `J`.
//!
//! For the quadratic instance the Hamiltonian is
//!
//! ```text
//! H = Ωᵀ[(A − BKL)x + Bδ] + xᵀQx x + uᵀRu u − γ δᵀδ,   u = −KLx + δ
//! ```
//!
//! and the costate obeys `Ω̇ = −∂H/∂x = −[(A − BKL)ᵀΩ + 2Qx x − 2(KL)ᵀRu u]`
//! with `Ω(T) = 2 Qf x(T)`. The `−2(KL)ᵀRu u` term comes from the dependence of
//! `u` on `x`. Half-step states for the backward RK4 pass come from cubic
//! Hermite interpolation using the closed-loop vector field.

use nalgebra::DMatrix;

use crate::cost::CostSpec;
use crate::cps::{
    closed_loop_matrix, FeedbackGain, PlantModel, SampledSignal, TimeGrid, Trajectory,
    DIVERGENCE_THRESHOLD,
};
use crate::error::{Result, StaError};
use crate::linalg::{dot, quad_form, RowMajor};

/// Samples `Ω(tᵢ)` of the costate.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory {
    pub omega: SampledSignal,
}

/// Time-integrated `∂H/∂K` (k×j).
#[derive(Debug, Clone, PartialEq)]
pub struct GainGradient(pub DMatrix<f64>);

/// Pointwise `∂H/∂δ(tᵢ)`. The gradient of `J` with respect to sample `i` is
/// this value times the trapezoid weight of `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackGradient {
    pub samples: SampledSignal,
}

fn applied_input(plant: &PlantModel, gain: &FeedbackGain, x: &[f64], delta: &[f64]) -> Vec<f64> {
    let z = plant.l() * nalgebra::DVector::from_column_slice(x);
    let kz = gain.matrix() * z;
    delta.iter().zip(kz.iter()).map(|(d, v)| d - v).collect()
}

pub fn hamiltonian(
    x: &[f64],
    omega: &[f64],
    delta: &[f64],
    plant: &PlantModel,
    gain: &FeedbackGain,
    spec: &CostSpec,
) -> Result<f64> {
    gain.check_shape(plant)?;
    spec.check_plant(plant)?;
    if x.len() != plant.n() || omega.len() != plant.n() || delta.len() != plant.k() {
        return Err(StaError::Dimension(format!(
            "hamiltonian expects x, Ω in R^{} and δ in R^{}",
            plant.n(),
            plant.k()
        )));
    }
    let acl = closed_loop_matrix(plant, gain)?;
    let xv = nalgebra::DVector::from_column_slice(x);
    let dv = nalgebra::DVector::from_column_slice(delta);
    let flow = &acl * &xv + plant.b() * &dv;
    let u = applied_input(plant, gain, x, delta);
    Ok(dot(omega, flow.as_slice()) + quad_form(spec.qx(), x) + quad_form(spec.ru(), &u)
        - spec.gamma() * dot(delta, delta))
}

/// Backward RK4 for the costate on the forward grid.
pub fn integrate_costate(
    traj: &Trajectory,
    plant: &PlantModel,
    gain: &FeedbackGain,
    spec: &CostSpec,
    grid: &TimeGrid,
) -> Result<CostateTrajectory> {
    traj.check_on(grid)?;
    spec.check_plant(plant)?;
    let n = plant.n();
    let len = grid.len();
    let acl = closed_loop_matrix(plant, gain)?;
    let acl_t = RowMajor::new(&acl.transpose());
    let kl = gain.matrix() * plant.l();
    // f(t) = 2Qx x − 2(KL)ᵀRu u with u = −KLx + δ, i.e. f = Fx x + Fd δ
    let coupling = kl.transpose() * spec.ru() * 2.0;
    let fx = RowMajor::new(&(spec.qx() * 2.0 + &coupling * &kl));
    let fd = RowMajor::new(&(-coupling));

    let mut forcing = SampledSignal::zeros(n, len);
    for i in 0..len {
        let f = forcing.row_mut(i);
        fx.mul_into(traj.x().row(i), f);
        fd.mul_add_into(traj.delta().row(i), f);
    }

    // half-step states by cubic Hermite interpolation with ẋ = (A − BKL)x + Bδ,
    // which keeps the backward pass at the forward integrator's order
    let flow = RowMajor::new(&acl);
    let b = RowMajor::new(plant.b());
    let mut slope = SampledSignal::zeros(n, len);
    for i in 0..len {
        let s = slope.row_mut(i);
        flow.mul_into(traj.x().row(i), s);
        b.mul_add_into(traj.delta().row(i), s);
    }
    let dt = grid.dt();
    let mut mid_forcing = SampledSignal::zeros(n, len - 1);
    let mut x_mid = vec![0.0; n];
    let mut d_mid = vec![0.0; plant.k()];
    for i in 0..len - 1 {
        let (x0, x1) = (traj.x().row(i), traj.x().row(i + 1));
        let (s0, s1) = (slope.row(i), slope.row(i + 1));
        for r in 0..n {
            x_mid[r] = 0.5 * (x0[r] + x1[r]) + dt / 8.0 * (s0[r] - s1[r]);
        }
        for ((m, a), c) in d_mid.iter_mut().zip(traj.delta().row(i)).zip(traj.delta().row(i + 1)) {
            *m = 0.5 * (a + c);
        }
        let f = mid_forcing.row_mut(i);
        fx.mul_into(&x_mid, f);
        fd.mul_add_into(&d_mid, f);
    }

    let mut omega = SampledSignal::zeros(n, len);
    {
        let terminal = omega.row_mut(len - 1);
        RowMajor::new(&(spec.qf() * 2.0)).mul_into(traj.x().last(), terminal);
    }

    // in reversed time s = T − t: dΩ/ds = (A − BKL)ᵀ Ω + f
    let h = grid.dt();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let rhs = |w: &[f64], f: &[f64], out: &mut [f64]| {
        acl_t.mul_into(w, out);
        for (o, fv) in out.iter_mut().zip(f) {
            *o += fv;
        }
    };
    for i in (1..len).rev() {
        let f_start = forcing.row(i);
        let f_end = forcing.row(i - 1);
        let f_mid = mid_forcing.row(i - 1);
        let wi = omega.row(i).to_vec();
        rhs(&wi, f_start, &mut k1);
        for r in 0..n {
            stage[r] = wi[r] + 0.5 * h * k1[r];
        }
        rhs(&stage, f_mid, &mut k2);
        for r in 0..n {
            stage[r] = wi[r] + 0.5 * h * k2[r];
        }
        rhs(&stage, f_mid, &mut k3);
        for r in 0..n {
            stage[r] = wi[r] + h * k3[r];
        }
        rhs(&stage, f_end, &mut k4);
        let prev = omega.row_mut(i - 1);
        for r in 0..n {
            prev[r] = wi[r] + h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
        }
        if prev.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD) {
            return Err(StaError::Divergence {
                index: i - 1,
                time: grid.time(i - 1),
            });
        }
    }
    Ok(CostateTrajectory { omega })
}

fn check_aligned(traj: &Trajectory, costate: &CostateTrajectory, plant: &PlantModel, grid: &TimeGrid) -> Result<()> {
    traj.check_on(grid)?;
    if costate.omega.len() != grid.len() || costate.omega.dim() != plant.n() {
        return Err(StaError::Dimension("costate is not aligned with the grid".into()));
    }
    Ok(())
}

/// Sensitivity `BᵀΩ + 2 Ru u` at every grid point, with `u = −KLx + δ` for `gain`.
fn input_sensitivity(
    traj: &Trajectory,
    costate: &CostateTrajectory,
    plant: &PlantModel,
    gain: &FeedbackGain,
    spec: &CostSpec,
) -> SampledSignal {
    let k = plant.k();
    let len = traj.len();
    let bt = RowMajor::new(&plant.b().transpose());
    let ru2 = RowMajor::new(&(spec.ru() * 2.0));
    let kg = RowMajor::new(gain.matrix());
    let mut out = SampledSignal::zeros(k, len);
    let mut u = vec![0.0; k];
    for i in 0..len {
        kg.mul_into(traj.z().row(i), &mut u);
        for (uv, dv) in u.iter_mut().zip(traj.delta().row(i)) {
            *uv = *dv - *uv;
        }
        let s = out.row_mut(i);
        bt.mul_into(costate.omega.row(i), s);
        ru2.mul_add_into(&u, s);
    }
    out
}

/// Trapezoid quadrature of `∇_K H = −(BᵀΩ + 2Ru u)(Lx)ᵀ`.
pub fn grad_gain(
    traj: &Trajectory,
    costate: &CostateTrajectory,
    plant: &PlantModel,
    gain: &FeedbackGain,
    spec: &CostSpec,
    grid: &TimeGrid,
) -> Result<GainGradient> {
    gain.check_shape(plant)?;
    spec.check_plant(plant)?;
    check_aligned(traj, costate, plant, grid)?;
    let (k, j) = (plant.k(), plant.j());
    let sens = input_sensitivity(traj, costate, plant, gain, spec);
    let mut g = DMatrix::zeros(k, j);
    for i in 0..traj.len() {
        let w = grid.trapezoid_weight(i);
        let s = sens.row(i);
        let z = traj.z().row(i);
        for r in 0..k {
            for c in 0..j {
                g[(r, c)] -= w * s[r] * z[c];
            }
        }
    }
    Ok(GainGradient(g))
}

/// `∇_δ H(tᵢ) = BᵀΩ(tᵢ) + 2 Ru u(tᵢ) − 2γ δ(tᵢ)`, with `u` formed from `gain`.
pub fn grad_attack(
    traj: &Trajectory,
    costate: &CostateTrajectory,
    plant: &PlantModel,
    gain: &FeedbackGain,
    spec: &CostSpec,
    grid: &TimeGrid,
) -> Result<AttackGradient> {
    gain.check_shape(plant)?;
    spec.check_plant(plant)?;
    check_aligned(traj, costate, plant, grid)?;
    let mut samples = input_sensitivity(traj, costate, plant, gain, spec);
    let g2 = 2.0 * spec.gamma();
    for i in 0..traj.len() {
        let d = traj.delta().row(i);
        for (s, dv) in samples.row_mut(i).iter_mut().zip(d) {
            *s -= g2 * dv;
        }
    }
    Ok(AttackGradient { samples })
}
