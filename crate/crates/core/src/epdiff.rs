//! Geodesics on `Diff(S¹)`: the Lagrangian flow of diffeomorphisms and the
//! Eulerian momentum equation
//!
//! ```text
//! m_t + u m_θ + 2 u_θ m = 0,    m = (1 + Δ)^p u,
//! ```
//!
//! which is Camassa–Holm for `p = 1`. The two solvers share no code beyond
//! the grid, which is what makes [`lagrangian_vs_eulerian`] a meaningful check.
//!
//! A diffeomorphism is stored through its displacement, `φ(θ) = θ + η(θ)`,
//! so `η` is periodic. With `σ = φ' = 1 + ∂_θη` the flat circle pulls back to
//! the density `σ`, the unit tangent is `1` and the curvature vanishes; the
//! geodesic equation collapses to
//!
//! ```text
//! P_φ φ_tt = -2 (P_φ φ_t) ∂_s φ_t - (∇_{φ_t} P) φ_t,    ∂_s = σ⁻¹ ∂_θ.
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ScalarField, TangentField};
use crate::grid::{signed_mode, PeriodicGrid};
use crate::operator::{OperatorSpec, WeightedOperator};

/// Orientation-preserving circle diffeomorphism `θ ↦ θ + η(θ)`.
#[derive(Debug, Clone)]
pub struct CircleDiffeo {
    grid: PeriodicGrid,
    displacement: ScalarField,
}

impl CircleDiffeo {
    pub fn new(grid: PeriodicGrid, displacement: ScalarField) -> Result<Self> {
        grid.check_len(displacement.len())?;
        let phi = Self { grid, displacement };
        let slope = phi.derivative();
        if let Some(node) = (0..slope.len()).find(|&j| !(slope.values()[j] > 0.0)) {
            return Err(Error::NotMonotone {
                node,
                derivative: slope.values()[node],
            });
        }
        Ok(phi)
    }

    pub fn identity(grid: PeriodicGrid) -> Self {
        let n = grid.n();
        Self {
            grid,
            displacement: ScalarField::zeros(n),
        }
    }

    /// Rigid rotation by `angle`.
    pub fn rotation(grid: PeriodicGrid, angle: f64) -> Self {
        let n = grid.n();
        Self {
            grid,
            displacement: ScalarField::constant(n, angle),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn displacement(&self) -> &ScalarField {
        &self.displacement
    }

    /// `φ(θ_j)`, not reduced mod `2π`.
    pub fn values(&self) -> ScalarField {
        &self.grid.nodes() + &self.displacement
    }

    /// `φ' = 1 + ∂_θη`.
    pub fn derivative(&self) -> ScalarField {
        let d = self.grid.diff_matrix() * self.displacement.values();
        ScalarField::new(d.map(|x| 1.0 + x))
    }

    /// Solves `x + η(x) = y` for each target by Newton's method on the
    /// trigonometric interpolant of `η`.
    pub fn inverse_at(&self, targets: &[f64]) -> Result<Vec<f64>> {
        let eta = self.grid.interpolant(self.displacement.as_slice())?;
        targets
            .iter()
            .map(|&y| {
                let mut x = y - eta.eval(y);
                for _ in 0..50 {
                    let r = x + eta.eval(x) - y;
                    let slope = 1.0 + eta.eval_derivative(x);
                    if !(slope > 0.0) {
                        return Err(Error::NotMonotone {
                            node: 0,
                            derivative: slope,
                        });
                    }
                    let dx = r / slope;
                    x -= dx;
                    if dx.abs() <= 1e-15 * (1.0 + x.abs()) {
                        return Ok(x);
                    }
                }
                Err(Error::InvalidParameter(format!(
                    "inverse of circle map did not converge at {y}"
                )))
            })
            .collect()
    }

    /// `u ∘ φ⁻¹` at the grid nodes, by trigonometric interpolation of `u`.
    pub fn push_forward(&self, u: &ScalarField) -> Result<ScalarField> {
        self.grid.check_len(u.len())?;
        let pre = self.inverse_at(self.grid.nodes().as_slice())?;
        let interp = self.grid.interpolant(u.as_slice())?;
        Ok(ScalarField::from_vec(pre.iter().map(|&x| interp.eval(x)).collect()))
    }
}

fn column(u: &ScalarField) -> TangentField {
    TangentField::from_scalar(u, &[1.0])
}

fn scalar(h: TangentField) -> ScalarField {
    h.component(0)
}

/// Operator `P_φ` of a diffeomorphism.
pub fn diffeo_operator(phi: &CircleDiffeo, spec: OperatorSpec) -> Result<WeightedOperator> {
    WeightedOperator::from_density(phi.grid.clone(), phi.derivative(), spec)
}

/// `φ_tt` at `(φ, φ_t)`.
pub fn diffeo_spray_rhs(phi: &CircleDiffeo, spec: OperatorSpec, phi_t: &ScalarField) -> Result<ScalarField> {
    spec.require_diffeo_order()?;
    let op = diffeo_operator(phi, spec)?;
    diffeo_spray_with_operator(phi, &op, phi_t)
}

fn diffeo_spray_with_operator(phi: &CircleDiffeo, op: &WeightedOperator, u: &ScalarField) -> Result<ScalarField> {
    phi.grid.check_len(u.len())?;
    let sigma = phi.derivative();
    let du = ScalarField::new(phi.grid.diff_matrix() * u.values());
    let rho = du.component_mul(&sigma.map(f64::recip));
    let uc = column(u);
    let pu = scalar(op.apply(&uc)?);
    let variation = scalar(op.density_derivative_apply(rho.values(), &uc)?);
    let rhs = &(&pu.component_mul(&rho) * -2.0) - &variation;
    Ok(scalar(op.apply_inverse(&column(&rhs))?))
}

/// `G_φ(u, u)`.
pub fn diffeo_energy(phi: &CircleDiffeo, spec: OperatorSpec, u: &ScalarField) -> Result<f64> {
    let uc = column(u);
    diffeo_operator(phi, spec)?.inner(&uc, &uc)
}

#[derive(Debug, Clone)]
pub struct DiffeoState {
    pub phi: CircleDiffeo,
    pub phi_t: ScalarField,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct DiffeoTrajectory {
    pub states: Vec<DiffeoState>,
    pub energies: Vec<f64>,
    pub step: f64,
}

impl DiffeoTrajectory {
    pub fn last(&self) -> &DiffeoState {
        self.states.last().expect("trajectory is never empty")
    }

    /// `max_t |G(t) − G(0)| / G(0)`.
    pub fn max_drift(&self) -> f64 {
        let e0 = self.energies[0];
        if e0 <= 0.0 {
            return 0.0;
        }
        self.energies.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max)
    }
}

/// Lagrangian geodesic from `(φ0, u0)` by RK4. A stage whose map stops
/// being increasing is reported as a particle crossing.
pub fn diffeo_geodesic(
    phi0: &CircleDiffeo,
    u0: &ScalarField,
    spec: OperatorSpec,
    t_end: f64,
    dt: f64,
) -> Result<DiffeoTrajectory> {
    spec.require_diffeo_order()?;
    phi0.grid.check_len(u0.len())?;
    let (steps, dt) = crate::geodesic::step_count(t_end, dt)?;
    let grid = phi0.grid.clone();
    let crossing = |t: f64, e: Error| match e {
        Error::NotMonotone { derivative, .. } => Error::ParticleCrossing {
            time: t,
            min_derivative: derivative,
        },
        other => other,
    };
    let mut op = diffeo_operator(phi0, spec)?;
    let mut traj = DiffeoTrajectory {
        states: vec![DiffeoState {
            phi: phi0.clone(),
            phi_t: u0.clone(),
            t: 0.0,
        }],
        energies: vec![op.inner(&column(u0), &column(u0))?],
        step: dt,
    };
    for i in 0..steps {
        let t_next = if i + 1 == steps { t_end } else { (i + 1) as f64 * dt };
        let last = traj.last();
        let (eta, u) = (last.phi.displacement.clone(), last.phi_t.clone());
        let stage = |eta: ScalarField, u: &ScalarField| -> Result<ScalarField> {
            let phi = CircleDiffeo::new(grid.clone(), eta)?;
            diffeo_spray_rhs(&phi, spec, u)
        };
        let step = || -> Result<(ScalarField, ScalarField)> {
            let a1 = diffeo_spray_with_operator(&last.phi, &op, &u)?;
            let u2 = &u + &(&a1 * (0.5 * dt));
            let a2 = stage(&eta + &(&u * (0.5 * dt)), &u2)?;
            let u3 = &u + &(&a2 * (0.5 * dt));
            let a3 = stage(&eta + &(&u2 * (0.5 * dt)), &u3)?;
            let u4 = &u + &(&a3 * dt);
            let a4 = stage(&eta + &(&u3 * dt), &u4)?;
            let deta = &(&(&u + &u4) + &(&(&u2 + &u3) * 2.0)) * (dt / 6.0);
            let du = &(&(&a1 + &a4) + &(&(&a2 + &a3) * 2.0)) * (dt / 6.0);
            Ok((&eta + &deta, &u + &du))
        };
        let (eta_next, u_next) = step().map_err(|e| crossing(t_next, e))?;
        let phi = CircleDiffeo::new(grid.clone(), eta_next).map_err(|e| crossing(t_next, e))?;
        op = diffeo_operator(&phi, spec)?;
        traj.energies.push(op.inner(&column(&u_next), &column(&u_next))?);
        traj.states.push(DiffeoState {
            phi,
            phi_t: u_next,
            t: t_next,
        });
    }
    Ok(traj)
}

/// Eulerian velocity and momentum.
#[derive(Debug, Clone)]
pub struct EulerianState {
    pub u: ScalarField,
    pub m: ScalarField,
    pub t: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EulerianOptions {
    /// Damp the top sixth of the modes after every step.
    pub filter: bool,
    /// Abort once `‖u‖∞` exceeds this.
    pub blow_up_bound: f64,
}

impl Default for EulerianOptions {
    fn default() -> Self {
        Self {
            filter: false,
            blow_up_bound: 1e6,
        }
    }
}

/// Pseudospectral solver for the momentum equation at the flat identity
/// metric, where `(1 + Δ)^p` is the Fourier multiplier `(1 + ν²)^p`.
pub struct EulerianSolver {
    grid: PeriodicGrid,
    spec: OperatorSpec,
    options: EulerianOptions,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    modes: Vec<f64>,
    filter: Vec<f64>,
}

impl std::fmt::Debug for EulerianSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EulerianSolver")
            .field("n", &self.grid.n())
            .field("spec", &self.spec)
            .field("options", &self.options)
            .finish()
    }
}

impl EulerianSolver {
    pub fn new(grid: PeriodicGrid, spec: OperatorSpec, options: EulerianOptions) -> Result<Self> {
        spec.require_diffeo_order()?;
        let n = grid.n();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let modes: Vec<f64> = (0..n).map(|k| signed_mode(k, n) as f64).collect();
        let top = ((n - 1) / 2) as f64;
        let cut = top * 5.0 / 6.0;
        let filter = modes
            .iter()
            .map(|nu| {
                let x = (nu.abs() - cut) / (top - cut);
                if x <= 0.0 {
                    1.0
                } else {
                    (-36.0 * x.powi(4)).exp()
                }
            })
            .collect();
        Ok(Self {
            grid,
            spec,
            options,
            forward,
            inverse,
            modes,
            filter,
        })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    fn spectrum(&self, u: &ScalarField) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = u.as_slice().iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    fn synthesize(&self, mut buf: Vec<Complex<f64>>) -> ScalarField {
        self.inverse.process(&mut buf);
        let scale = 1.0 / buf.len() as f64;
        ScalarField::from_vec(buf.iter().map(|z| z.re * scale).collect())
    }

    fn multiplier(&self, nu: f64, sign: f64) -> f64 {
        (1.0 + nu * nu).powf(sign * self.spec.p)
    }

    /// `m = (1 + Δ)^p u`.
    pub fn momentum(&self, u: &ScalarField) -> Result<ScalarField> {
        self.grid.check_len(u.len())?;
        let spec: Vec<_> = self
            .spectrum(u)
            .into_iter()
            .zip(&self.modes)
            .map(|(z, &nu)| z * self.multiplier(nu, 1.0))
            .collect();
        Ok(self.synthesize(spec))
    }

    /// `u = (1 + Δ)^{-p} m`.
    pub fn velocity(&self, m: &ScalarField) -> Result<ScalarField> {
        self.grid.check_len(m.len())?;
        let spec: Vec<_> = self
            .spectrum(m)
            .into_iter()
            .zip(&self.modes)
            .map(|(z, &nu)| z * self.multiplier(nu, -1.0))
            .collect();
        Ok(self.synthesize(spec))
    }

    fn derivative(&self, u: &ScalarField) -> ScalarField {
        let spec: Vec<_> = self
            .spectrum(u)
            .into_iter()
            .zip(&self.modes)
            .map(|(z, &nu)| z * Complex::new(0.0, nu))
            .collect();
        self.synthesize(spec)
    }

    pub fn state(&self, u: ScalarField, t: f64) -> Result<EulerianState> {
        let m = self.momentum(&u)?;
        Ok(EulerianState { u, m, t })
    }

    /// `∫ u m dθ`.
    pub fn energy(&self, state: &EulerianState) -> f64 {
        self.grid.quadrature(&state.u.component_mul(&state.m))
    }

    fn rhs(&self, m: &ScalarField) -> Result<ScalarField> {
        let u = self.velocity(m)?;
        let mt = u.component_mul(&self.derivative(m));
        let um = self.derivative(&u).component_mul(m);
        Ok(&(&mt + &(&um * 2.0)) * -1.0)
    }

    /// One RK4 step.
    pub fn step(&self, state: &EulerianState, dt: f64) -> Result<EulerianState> {
        self.grid.check_len(state.m.len())?;
        let m = &state.m;
        let k1 = self.rhs(m)?;
        let k2 = self.rhs(&(m + &(&k1 * (0.5 * dt))))?;
        let k3 = self.rhs(&(m + &(&k2 * (0.5 * dt))))?;
        let k4 = self.rhs(&(m + &(&k3 * dt)))?;
        let dm = &(&(&k1 + &k4) + &(&(&k2 + &k3) * 2.0)) * (dt / 6.0);
        let mut m_next = m + &dm;
        if self.options.filter {
            let spec: Vec<_> = self
                .spectrum(&m_next)
                .into_iter()
                .zip(&self.filter)
                .map(|(z, &s)| z * s)
                .collect();
            m_next = self.synthesize(spec);
        }
        let u = self.velocity(&m_next)?;
        let t = state.t + dt;
        let norm = u.max_abs();
        if !(norm <= self.options.blow_up_bound) {
            return Err(Error::BlowUp {
                time: t,
                norm,
                bound: self.options.blow_up_bound,
            });
        }
        Ok(EulerianState { u, m: m_next, t })
    }

    /// Integrates to `t_end`, returning every state.
    pub fn integrate(&self, u0: &ScalarField, t_end: f64, dt: f64) -> Result<Vec<EulerianState>> {
        let (steps, dt) = crate::geodesic::step_count(t_end, dt)?;
        let mut states = vec![self.state(u0.clone(), 0.0)?];
        for i in 0..steps {
            let mut next = self.step(states.last().expect("nonempty"), dt)?;
            if i + 1 == steps {
                next.t = t_end;
            }
            states.push(next);
        }
        Ok(states)
    }
}

/// One RK4 step of the momentum equation with default options.
pub fn epdiff_eulerian_step(state: &EulerianState, spec: OperatorSpec, dt: f64) -> Result<EulerianState> {
    let grid = PeriodicGrid::new(state.u.len())?;
    EulerianSolver::new(grid, spec, EulerianOptions::default())?.step(state, dt)
}

#[derive(Debug, Clone)]
pub struct CrossCheck {
    /// `sup |u_E(t_end) − φ_t ∘ φ⁻¹(t_end)|`.
    pub discrepancy: f64,
    pub lagrangian_energies: Vec<f64>,
    pub eulerian_energies: Vec<f64>,
    pub times: Vec<f64>,
    pub lagrangian: DiffeoTrajectory,
    pub eulerian: Vec<EulerianState>,
}

impl CrossCheck {
    pub fn lagrangian_drift(&self) -> f64 {
        relative_drift(&self.lagrangian_energies)
    }

    pub fn eulerian_drift(&self) -> f64 {
        relative_drift(&self.eulerian_energies)
    }

    pub fn eulerian_final(&self) -> &EulerianState {
        self.eulerian.last().expect("nonempty")
    }

    /// Discrepancy at every recorded time.
    pub fn discrepancy_series(&self) -> Result<Vec<f64>> {
        self.lagrangian
            .states
            .iter()
            .zip(&self.eulerian)
            .map(|(l, e)| Ok((&l.phi.push_forward(&l.phi_t)? - &e.u).max_abs()))
            .collect()
    }

    /// `|G_L(0) − G_E(0)| / G_E(0)`.
    pub fn energy_gap(&self) -> f64 {
        let (l, e) = (self.lagrangian_energies[0], self.eulerian_energies[0]);
        if e == 0.0 {
            l.abs()
        } else {
            (l - e).abs() / e.abs()
        }
    }
}

fn relative_drift(e: &[f64]) -> f64 {
    let e0 = e[0];
    if e0 == 0.0 {
        return e.iter().map(|x| x.abs()).fold(0.0, f64::max);
    }
    e.iter().map(|x| (x - e0).abs() / e0.abs()).fold(0.0, f64::max)
}

/// Runs both solvers from `u0` and compares the final Eulerian velocities.
pub fn lagrangian_vs_eulerian(u0: &ScalarField, spec: OperatorSpec, t_end: f64, dt: f64) -> Result<CrossCheck> {
    lagrangian_vs_eulerian_with(u0, spec, t_end, dt, EulerianOptions::default())
}

pub fn lagrangian_vs_eulerian_with(
    u0: &ScalarField,
    spec: OperatorSpec,
    t_end: f64,
    dt: f64,
    options: EulerianOptions,
) -> Result<CrossCheck> {
    spec.require_diffeo_order()?;
    let grid = PeriodicGrid::new(u0.len())?;
    let lagrangian = diffeo_geodesic(&CircleDiffeo::identity(grid.clone()), u0, spec, t_end, dt)
        .map_err(|e| e.in_solver("lagrangian"))?;
    let solver = EulerianSolver::new(grid, spec, options)?;
    let eulerian = solver.integrate(u0, t_end, dt).map_err(|e| e.in_solver("eulerian"))?;
    let last = lagrangian.last();
    let pushed = last
        .phi
        .push_forward(&last.phi_t)
        .map_err(|e| e.in_solver("lagrangian"))?;
    let discrepancy = (&pushed - &eulerian.last().expect("nonempty").u).max_abs();
    Ok(CrossCheck {
        discrepancy,
        lagrangian_energies: lagrangian.energies.clone(),
        eulerian_energies: eulerian.iter().map(|s| solver.energy(s)).collect(),
        times: eulerian.iter().map(|s| s.t).collect(),
        lagrangian,
        eulerian,
    })
}

/// `∫ (u² + u_θ²) dθ`, the Camassa–Holm energy.
pub fn h1_energy(grid: &PeriodicGrid, u: &ScalarField) -> Result<f64> {
    let du = grid.diff_theta(u)?;
    Ok(grid.quadrature(&(&u.component_mul(u) + &du.component_mul(&du))))
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    x.rem_euclid(2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(n).unwrap()
    }

    #[test]
    fn folding_map_is_rejected() {
        let g = grid(17);
        let eta = g.sample(|t| 1.5 * t.sin());
        assert!(matches!(CircleDiffeo::new(g, eta), Err(Error::NotMonotone { .. })));
    }

    #[test]
    fn inverse_undoes_the_map() {
        let g = grid(33);
        let phi = CircleDiffeo::new(g.clone(), g.sample(|t| 0.3 * t.sin() + 0.1)).unwrap();
        let targets = phi.values();
        let back = phi.inverse_at(targets.as_slice()).unwrap();
        for (j, x) in back.iter().enumerate() {
            assert!((x - g.theta(j)).abs() < 1e-13);
        }
    }

    #[test]
    fn spray_of_zero_and_rotation() {
        let g = grid(33);
        let spec = OperatorSpec::standard(1.0).unwrap();
        let phi = CircleDiffeo::new(g.clone(), g.sample(|t| 0.2 * (2.0 * t).cos())).unwrap();
        assert!(diffeo_spray_rhs(&phi, spec, &ScalarField::zeros(33)).unwrap().max_abs() < 1e-15);
        let rot = CircleDiffeo::rotation(g, 0.7);
        let a = diffeo_spray_rhs(&rot, spec, &ScalarField::constant(33, 0.4)).unwrap();
        assert!(a.max_abs() < 1e-12, "{}", a.max_abs());
    }

    #[test]
    fn spray_is_quadratic() {
        let g = grid(33);
        let spec = OperatorSpec::standard(0.75).unwrap();
        let phi = CircleDiffeo::new(g.clone(), g.sample(|t| 0.2 * (2.0 * t).cos())).unwrap();
        let u = g.sample(|t| t.sin() + 0.2);
        let base = diffeo_spray_rhs(&phi, spec, &u).unwrap();
        let scaled = diffeo_spray_rhs(&phi, spec, &(&u * 2.0)).unwrap();
        assert!((&scaled - &(&base * 4.0)).max_abs() < 1e-12 * base.max_abs());
    }

    #[test]
    fn order_below_half_is_rejected() {
        let g = grid(33);
        let u = g.sample(f64::sin);
        let spec = OperatorSpec::standard(0.4).unwrap();
        assert!(diffeo_spray_rhs(&CircleDiffeo::identity(g.clone()), spec, &u).is_err());
        assert!(EulerianSolver::new(g, spec, EulerianOptions::default()).is_err());
    }

    #[test]
    fn momentum_round_trip() {
        let g = grid(33);
        let spec = OperatorSpec::standard(1.5).unwrap();
        let solver = EulerianSolver::new(g.clone(), spec, EulerianOptions::default()).unwrap();
        let u = g.sample(|t| (2.0 * t).cos() + 0.3);
        let m = solver.momentum(&u).unwrap();
        let want = g.sample(|t| 5f64.powf(1.5) * (2.0 * t).cos() + 0.3);
        assert!((&m - &want).max_abs() < 1e-11, "{}", (&m - &want).max_abs());
        assert!((&solver.velocity(&m).unwrap() - &u).max_abs() < 1e-14);
    }

    #[test]
    fn constant_velocity_is_steady() {
        let g = grid(33);
        let spec = OperatorSpec::standard(1.0).unwrap();
        let state = EulerianSolver::new(g.clone(), spec, EulerianOptions::default())
            .unwrap()
            .state(ScalarField::constant(33, 0.3), 0.0)
            .unwrap();
        let next = epdiff_eulerian_step(&state, spec, 0.1).unwrap();
        assert!(
            (&next.m - &state.m).max_abs() < 1e-14,
            "{}",
            (&next.m - &state.m).max_abs()
        );
    }

    #[test]
    fn blow_up_guard_trips() {
        let g = grid(33);
        let spec = OperatorSpec::standard(1.0).unwrap();
        let options = EulerianOptions {
            blow_up_bound: 0.1,
            ..EulerianOptions::default()
        };
        let solver = EulerianSolver::new(g.clone(), spec, options).unwrap();
        let state = solver.state(g.sample(f64::sin), 0.0).unwrap();
        assert!(matches!(solver.step(&state, 0.01), Err(Error::BlowUp { .. })));
    }
}
