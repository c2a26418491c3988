//! Geodesics of `G^P` on immersed loops: the spray, the exponential map by
//! fixed-step RK4, path energy and the log map by shooting.
//!
//! For a curve the geodesic equation reads
//!
//! ```text
//! P f_tt = ½ Adj(∇P)(f_t, f_t)^⊥ − ⟨P f_t, ∂_s f_t⟩ v − ½ ⟨P f_t, f_t⟩ H
//!          − (∇_{f_t} P) f_t − ⟨∂_s f_t, v⟩ P f_t
//! ```
//!
//! and every term is evaluated on the same assembled operator.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ScalarField, TangentField};
use crate::geometry::ImmersedLoop;
use crate::operator::{weighted_pairing, OperatorSpec, WeightedOperator};
use crate::variation::adjoint_normal_exact;

/// Relative drift above which [`exp_map`] flags a trajectory.
pub const DEFAULT_ENERGY_DRIFT_WARN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GeodesicState {
    pub f: ImmersedLoop,
    pub ft: TangentField,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<GeodesicState>,
    /// `G_f(f_t, f_t)` per state.
    pub energies: Vec<f64>,
    pub step: f64,
    /// Half-step Richardson estimates of the local error, one per step, when
    /// the monitor was enabled.
    pub error_estimates: Vec<f64>,
    /// `max_t |G(t) − G(0)| / G(0)`, zero when `G(0) = 0`.
    pub max_drift: f64,
    pub drift_warning: bool,
}

impl Trajectory {
    /// Builds a trajectory from states, evaluating `G_f(f_t, f_t)` with `spec`.
    pub fn from_states(states: Vec<GeodesicState>, spec: OperatorSpec, step: f64) -> Result<Self> {
        let energies = states
            .iter()
            .map(|s| WeightedOperator::assemble(&s.f, spec)?.inner(&s.ft, &s.ft))
            .collect::<Result<Vec<_>>>()?;
        let mut traj = Self {
            states,
            energies,
            step,
            error_estimates: Vec::new(),
            max_drift: 0.0,
            drift_warning: false,
        };
        traj.validate()?;
        traj.update_drift(DEFAULT_ENERGY_DRIFT_WARN);
        Ok(traj)
    }

    fn validate(&self) -> Result<()> {
        if self.states.len() != self.energies.len() {
            return Err(Error::LengthMismatch {
                expected: self.states.len(),
                got: self.energies.len(),
            });
        }
        if self.states.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidParameter("trajectory times must increase".into()));
        }
        if self.energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter("non-finite energy in trajectory".into()));
        }
        Ok(())
    }

    fn update_drift(&mut self, bound: f64) {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        self.max_drift = if e0 > 0.0 {
            self.energies.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max)
        } else {
            0.0
        };
        self.drift_warning = self.max_drift > bound;
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &GeodesicState {
        &self.states[0]
    }

    pub fn last(&self) -> &GeodesicState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// Trapezoidal quadrature of `½ G` over the recorded energies.
    pub fn recorded_path_energy(&self) -> f64 {
        trapezoid(&self.times(), &self.energies) * 0.5
    }
}

fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

/// How operators are obtained inside an RK step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OperatorMode {
    /// Reassemble `P` at every stage.
    #[default]
    Reassemble,
    /// Reuse the operator of the step's initial loop for all four stages.
    /// Approximate: only for exploratory runs.
    Stale,
}

#[derive(Debug, Clone, Copy)]
pub struct ExpOptions {
    pub operator_mode: OperatorMode,
    /// Also take two half steps and record the Richardson error estimate.
    pub error_monitor: bool,
    pub energy_drift_warn: f64,
}

impl Default for ExpOptions {
    fn default() -> Self {
        Self {
            operator_mode: OperatorMode::Reassemble,
            error_monitor: false,
            energy_drift_warn: DEFAULT_ENERGY_DRIFT_WARN,
        }
    }
}

/// `f_tt` for the loop `f` with velocity `ft`.
pub fn spray_rhs(f: &ImmersedLoop, spec: OperatorSpec, ft: &TangentField) -> Result<TangentField> {
    spec.require_geodesic_order()?;
    let op = WeightedOperator::assemble(f, spec)?;
    spray_with_operator(f, &op, ft)
}

/// [`spray_rhs`] on an operator assembled by the caller.
pub fn spray_with_operator(f: &ImmersedLoop, op: &WeightedOperator, ft: &TangentField) -> Result<TangentField> {
    f.check_field(ft)?;
    let pu = op.apply(ft)?;
    let dsu = f.arclength_derivative(ft)?;
    let v = f.unit_tangent();
    let rho = dsu.dot(&v);
    let adj = adjoint_normal_exact(f, op, ft, ft)?.value;
    let tangential = v.scale_rows(&pu.dot(&dsu));
    let bending = f.curvature().scale_rows(&pu.dot(ft));
    let variation = op.density_derivative_apply(rho.values(), ft)?;
    let stretch = pu.scale_rows(&rho);
    let rhs = &(&(&adj - &bending) * 0.5) - &(&(&tangential + &variation) + &stretch);
    op.apply_inverse(&rhs)
}

struct Stepper {
    spec: OperatorSpec,
    mode: OperatorMode,
}

impl Stepper {
    fn accel(&self, f: &ImmersedLoop, u: &TangentField, stale: &WeightedOperator) -> Result<TangentField> {
        match self.mode {
            OperatorMode::Reassemble => spray_with_operator(f, &WeightedOperator::assemble(f, self.spec)?, u),
            OperatorMode::Stale => spray_with_operator(f, stale, u),
        }
    }

    /// One RK4 step from `(f, u)`; `op` is the operator at `f`.
    fn step(
        &self,
        f: &ImmersedLoop,
        u: &TangentField,
        op: &WeightedOperator,
        dt: f64,
    ) -> Result<(ImmersedLoop, TangentField)> {
        let x = f.points();
        let a1 = spray_with_operator(f, op, u)?;
        let u1 = u;

        let f2 = f.with_points(x + &(u1 * (0.5 * dt)))?;
        let u2 = u + &(&a1 * (0.5 * dt));
        let a2 = self.accel(&f2, &u2, op)?;

        let f3 = f.with_points(x + &(&u2 * (0.5 * dt)))?;
        let u3 = u + &(&a2 * (0.5 * dt));
        let a3 = self.accel(&f3, &u3, op)?;

        let f4 = f.with_points(x + &(&u3 * dt))?;
        let u4 = u + &(&a3 * dt);
        let a4 = self.accel(&f4, &u4, op)?;

        let dx = &(&(u1 + &u4) + &(&(&u2 + &u3) * 2.0)) * (dt / 6.0);
        let du = &(&(&a1 + &a4) + &(&(&a2 + &a3) * 2.0)) * (dt / 6.0);
        let next_u = u + &du;
        if !next_u.is_finite() || !dx.is_finite() {
            return Err(Error::InvalidParameter("non-finite state".into()));
        }
        Ok((f.with_points(x + &dx)?, next_u))
    }
}

/// Number of steps and the adjusted step that land exactly on `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!("final time {t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    if steps == 0 {
        return Ok((0, dt));
    }
    Ok((steps, t_end / steps as f64))
}

/// Integrates the geodesic from `(f0, h0)` up to `t_end` with default options.
pub fn exp_map(f0: &ImmersedLoop, h0: &TangentField, spec: OperatorSpec, t_end: f64, dt: f64) -> Result<Trajectory> {
    exp_map_with(f0, h0, spec, t_end, dt, ExpOptions::default())
}

/// Integrates the geodesic with RK4. If `t_end / dt` is not an integer the
/// step is shortened so that the last state lands on `t_end`.
pub fn exp_map_with(
    f0: &ImmersedLoop,
    h0: &TangentField,
    spec: OperatorSpec,
    t_end: f64,
    dt: f64,
    options: ExpOptions,
) -> Result<Trajectory> {
    spec.require_geodesic_order()?;
    f0.check_field(h0)?;
    let (steps, dt) = step_count(t_end, dt)?;
    let stepper = Stepper {
        spec,
        mode: options.operator_mode,
    };
    let mut op = WeightedOperator::assemble(f0, spec)?;
    let mut traj = Trajectory {
        states: vec![GeodesicState {
            f: f0.clone(),
            ft: h0.clone(),
            t: 0.0,
        }],
        energies: vec![op.inner(h0, h0)?],
        step: dt,
        error_estimates: Vec::new(),
        max_drift: 0.0,
        drift_warning: false,
    };
    for i in 0..steps {
        let (f, u) = {
            let last = traj.last();
            (&last.f, &last.ft)
        };
        let t_next = if i + 1 == steps { t_end } else { (i + 1) as f64 * dt };
        let advanced = stepper.step(f, u, &op, dt).and_then(|full| {
            if !options.error_monitor {
                return Ok((full, None));
            }
            let (fh, uh) = stepper.step(f, u, &op, 0.5 * dt)?;
            let oph = WeightedOperator::assemble(&fh, spec)?;
            let (fh2, uh2) = stepper.step(&fh, &uh, &oph, 0.5 * dt)?;
            let err = (fh2.points() - full.0.points())
                .max_abs()
                .max((&uh2 - &full.1).max_abs())
                / 15.0;
            Ok((full, Some(err)))
        });
        let ((f_next, u_next), estimate) = match advanced {
            Ok(ok) => ok,
            Err(Error::ImmersionFloor { .. }) | Err(Error::Eigen(_)) | Err(Error::InvalidParameter(_)) => {
                traj.update_drift(options.energy_drift_warn);
                return Err(Error::ImmersionLost {
                    time: t_next,
                    step: i + 1,
                    partial: Box::new(traj),
                });
            }
            Err(e) => return Err(e),
        };
        op = WeightedOperator::assemble(&f_next, spec)?;
        traj.energies.push(op.inner(&u_next, &u_next)?);
        traj.states.push(GeodesicState {
            f: f_next,
            ft: u_next,
            t: t_next,
        });
        if let Some(e) = estimate {
            traj.error_estimates.push(e);
        }
    }
    traj.update_drift(options.energy_drift_warn);
    Ok(traj)
}

/// `E = ½ ∫ G_f(f_t, f_t) dt` by the trapezoidal rule, with `G` evaluated
/// for `spec` at every state.
pub fn path_energy(traj: &Trajectory, spec: OperatorSpec) -> Result<f64> {
    let g = traj
        .states
        .iter()
        .map(|s| WeightedOperator::assemble(&s.f, spec)?.inner(&s.ft, &s.ft))
        .collect::<Result<Vec<_>>>()?;
    Ok(0.5 * trapezoid(&traj.times(), &g))
}

/// Fourier tail energy of the loop samples above `cutoff`, per state.
pub fn regularity_diagnostic(traj: &Trajectory, cutoff: usize) -> Result<Vec<f64>> {
    let Some(first) = traj.states.first() else {
        return Ok(Vec::new());
    };
    let grid = first.f.grid();
    if 2 * cutoff >= grid.n() {
        return Err(Error::InvalidParameter(format!(
            "tail cutoff {cutoff} must be below n/2 = {}",
            grid.n() as f64 / 2.0
        )));
    }
    traj.states
        .iter()
        .map(|s| grid.fourier_tail_energy(s.f.points(), cutoff))
        .collect()
}

#[derive(Debug, Clone)]
pub struct LogOptions {
    /// Step of the inner exponential map.
    pub dt: f64,
    /// Gauss–Newton iterations per mode level.
    pub max_iter: usize,
    /// Trust radius: `‖f1 − f0‖ / ‖f0 − centroid‖`, both in `L²(vol_{f0})`.
    pub trust_radius: f64,
    /// Mode levels `K`; `h` uses the lowest `2K + 1` Fourier modes.
    pub modes: Vec<usize>,
    /// Relative forward-difference step for the Jacobian.
    pub jacobian_eps: f64,
    pub operator_mode: OperatorMode,
}

impl Default for LogOptions {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_iter: 12,
            trust_radius: 0.5,
            modes: vec![4, 8, 16],
            jacobian_eps: 1e-7,
            operator_mode: OperatorMode::Reassemble,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogResult {
    pub velocity: TangentField,
    /// `‖exp(h) − f1‖` in `L²(vol_{f0})`.
    pub residual: f64,
    pub iterations: usize,
    /// Mode level at which the search stopped.
    pub modes: usize,
}

/// Weighted-L² distance between sample sets, weights of `f`.
pub fn weighted_distance(f: &ImmersedLoop, a: &TangentField, b: &TangentField) -> f64 {
    let diff = (a - b).into_inner();
    weighted_pairing(&f.weights().into_inner(), &diff, &diff).sqrt()
}

/// Shooting solution of `exp_{f0}(h) = f1` with default options.
pub fn log_map(f0: &ImmersedLoop, f1: &ImmersedLoop, spec: OperatorSpec, tol: f64) -> Result<LogResult> {
    log_map_with(f0, f1, spec, tol, &LogOptions::default())
}

struct Shooting<'a> {
    f0: &'a ImmersedLoop,
    target: &'a TangentField,
    spec: OperatorSpec,
    options: &'a LogOptions,
    sqrt_w: DVector<f64>,
}

impl Shooting<'_> {
    fn basis(&self, k: usize) -> DMatrix<f64> {
        let grid = self.f0.grid();
        DMatrix::from_fn(grid.n(), 2 * k + 1, |j, c| {
            let t = grid.theta(j);
            let nu = c.div_ceil(2) as f64;
            match c {
                0 => 1.0,
                _ if c % 2 == 1 => (nu * t).cos(),
                _ => (nu * t).sin(),
            }
        })
    }

    fn field(&self, basis: &DMatrix<f64>, coeffs: &DVector<f64>) -> TangentField {
        let d = self.f0.d();
        let c = DMatrix::from_column_slice(basis.ncols(), d, coeffs.as_slice());
        TangentField::new(basis * c)
    }

    fn residual(&self, h: &TangentField) -> Result<DVector<f64>> {
        let end = exp_map_with(
            self.f0,
            h,
            self.spec,
            1.0,
            self.options.dt,
            ExpOptions {
                operator_mode: self.options.operator_mode,
                ..ExpOptions::default()
            },
        )?;
        let diff = end.last().f.points() - self.target;
        let (n, d) = (diff.n(), diff.d());
        Ok(DVector::from_fn(n * d, |i, _| {
            let (c, j) = (i / n, i % n);
            self.sqrt_w[j] * diff.matrix()[(j, c)]
        }))
    }
}

/// Damped Gauss–Newton on the shooting residual over a coarse-to-fine
/// Fourier parameterization of `h`.
pub fn log_map_with(
    f0: &ImmersedLoop,
    f1: &ImmersedLoop,
    spec: OperatorSpec,
    tol: f64,
    options: &LogOptions,
) -> Result<LogResult> {
    spec.require_geodesic_order()?;
    f0.check_field(f1.points())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("shooting tolerance {tol}")));
    }
    if options.modes.is_empty() || options.max_iter == 0 {
        return Err(Error::InvalidParameter(
            "shooting needs at least one mode level and iteration".into(),
        ));
    }
    let (n, d) = (f0.n(), f0.d());
    let distance = weighted_distance(f0, f1.points(), f0.points());
    let centroid = f0.centroid();
    let centered = TangentField::from_fn(n, d, |j, c| f0.points().matrix()[(j, c)] - centroid[c]);
    let scale = weighted_distance(f0, &centered, &TangentField::zeros(n, d));
    let radius = options.trust_radius * scale;
    if distance > radius {
        return Err(Error::OutsideTrustRegion { distance, radius });
    }
    if distance <= tol {
        return Ok(LogResult {
            velocity: TangentField::zeros(n, d),
            residual: distance,
            iterations: 0,
            modes: 0,
        });
    }
    let shooting = Shooting {
        f0,
        target: f1.points(),
        spec,
        options,
        sqrt_w: f0.weights().into_inner().map(f64::sqrt),
    };
    let max_k = (n - 1) / 2;
    let mut coeffs: Option<(usize, DVector<f64>)> = None;
    let mut best: Option<(f64, f64, TangentField)> = None;
    let mut iterations = 0;
    let mut last_k = 0;

    for &k in &options.modes {
        let k = k.min(max_k);
        if k < last_k || (k == last_k && coeffs.is_some()) {
            continue;
        }
        last_k = k;
        let basis = shooting.basis(k);
        let m = basis.ncols();
        let mut c = match coeffs.take() {
            None => {
                // Least-squares fit of f1 − f0, a first-order guess for h.
                let diff = (f1.points() - f0.points()).into_inner();
                let fit = basis
                    .clone()
                    .svd(true, true)
                    .solve(&diff, 1e-12)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                DVector::from_column_slice(fit.as_slice())
            }
            Some((old_k, old)) => {
                let old_m = 2 * old_k + 1;
                DVector::from_fn(m * d, |i, _| {
                    let (comp, mode) = (i / m, i % m);
                    if mode < old_m {
                        old[comp * old_m + mode]
                    } else {
                        0.0
                    }
                })
            }
        };
        let mut h = shooting.field(&basis, &c);
        let mut r = shooting.residual(&h)?;
        for _ in 0..options.max_iter {
            let norm = r.norm();
            record_best(&mut best, norm, f0, &h);
            if norm <= tol {
                break;
            }
            iterations += 1;
            let jacobian = jacobian(&shooting, &basis, &c, &r, scale)?;
            let step = jacobian
                .svd(true, true)
                .solve(&(-&r), 1e-12)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut accepted = false;
            let mut alpha = 1.0;
            for _ in 0..12 {
                let trial_c = &c + &step * alpha;
                let trial_h = shooting.field(&basis, &trial_c);
                if let Ok(trial_r) = shooting.residual(&trial_h) {
                    if trial_r.norm() < norm {
                        c = trial_c;
                        h = trial_h;
                        r = trial_r;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        record_best(&mut best, r.norm(), f0, &h);
        coeffs = Some((k, c));
        let (residual, _, velocity) = best.as_ref().expect("best is recorded");
        if *residual <= tol {
            return Ok(LogResult {
                velocity: velocity.clone(),
                residual: *residual,
                iterations,
                modes: k,
            });
        }
    }
    let (residual, _, velocity) = best.expect("best is recorded");
    Err(Error::NoConvergence {
        iterations,
        residual,
        best: Box::new(velocity),
    })
}

/// Keeps the iterate with the smaller residual; ties go to the smaller `‖h‖`.
fn record_best(best: &mut Option<(f64, f64, TangentField)>, residual: f64, f0: &ImmersedLoop, h: &TangentField) {
    let h_norm = weighted_distance(f0, h, &TangentField::zeros(h.n(), h.d()));
    let better = match best {
        None => true,
        Some((r, norm, _)) => residual < *r || (residual == *r && h_norm < *norm),
    };
    if better {
        *best = Some((residual, h_norm, h.clone()));
    }
}

fn jacobian(
    shooting: &Shooting<'_>,
    basis: &DMatrix<f64>,
    c: &DVector<f64>,
    r: &DVector<f64>,
    scale: f64,
) -> Result<DMatrix<f64>> {
    let eps = shooting.options.jacobian_eps;
    let columns = (0..c.len())
        .into_par_iter()
        .map(|i| {
            let delta = eps * c[i].abs().max(scale);
            let mut shifted = c.clone();
            shifted[i] += delta;
            let ri = shooting.residual(&shooting.field(basis, &shifted))?;
            Ok((ri - r) / delta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// Scalar helper for callers that only need `G_f(h, h)`.
pub fn energy(f: &ImmersedLoop, spec: OperatorSpec, h: &TangentField) -> Result<f64> {
    WeightedOperator::assemble(f, spec)?.inner(h, h)
}

/// Pointwise speeds `|f_t|` of a state, handy for diagnostics.
pub fn speeds(state: &GeodesicState) -> ScalarField {
    state.ft.norms()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;

    fn blob(n: usize) -> ImmersedLoop {
        let g = PeriodicGrid::new(n).unwrap();
        ImmersedLoop::from_fn(g, 2, |t| {
            let r = 1.0 + 0.1 * (2.0 * t).cos();
            vec![r * t.cos(), 0.9 * r * t.sin()]
        })
        .unwrap()
    }

    fn wiggle(f: &ImmersedLoop) -> TangentField {
        let g = f.grid().clone();
        TangentField::from_fn(f.n(), 2, |j, c| {
            let t = g.theta(j);
            0.1 * if c == 0 { (2.0 * t).cos() } else { (t + 0.4).sin() }
        })
    }

    #[test]
    fn spray_of_zero_is_zero() {
        let f = blob(25);
        let spec = OperatorSpec::standard(1.5).unwrap();
        let a = spray_rhs(&f, spec, &TangentField::zeros(25, 2)).unwrap();
        assert!(a.max_abs() < 1e-14);
    }

    #[test]
    fn spray_is_quadratic() {
        let f = blob(25);
        let spec = OperatorSpec::standard(2.0).unwrap();
        let h = wiggle(&f);
        let base = spray_rhs(&f, spec, &h).unwrap();
        let scaled = spray_rhs(&f, spec, &(&h * -3.0)).unwrap();
        let err = (&scaled - &(&base * 9.0)).max_abs() / (9.0 * base.max_abs());
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn spray_rejects_low_order() {
        let f = blob(25);
        let spec = OperatorSpec::standard(0.5).unwrap();
        assert!(matches!(
            spray_rhs(&f, spec, &wiggle(&f)),
            Err(Error::InvalidOrder { .. })
        ));
    }

    #[test]
    fn step_count_lands_on_end() {
        assert_eq!(step_count(1.0, 0.1).unwrap().0, 10);
        let (steps, dt) = step_count(1.0, 0.3).unwrap();
        assert_eq!(steps, 4);
        assert!((dt - 0.25).abs() < 1e-15);
        assert_eq!(step_count(0.0, 0.1).unwrap().0, 0);
        assert!(step_count(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_velocity_is_constant() {
        let f = blob(17);
        let spec = OperatorSpec::standard(1.0).unwrap();
        let traj = exp_map(&f, &TangentField::zeros(17, 2), spec, 0.2, 0.05).unwrap();
        assert_eq!(traj.len(), 5);
        for s in &traj.states {
            assert!((s.f.points() - f.points()).max_abs() < 1e-15);
        }
        assert_eq!(path_energy(&traj, spec).unwrap(), 0.0);
        let tails = regularity_diagnostic(&traj, 5).unwrap();
        assert!(tails.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn regularity_cutoff_is_checked() {
        let f = blob(17);
        let spec = OperatorSpec::standard(1.0).unwrap();
        let traj = exp_map(&f, &TangentField::zeros(17, 2), spec, 0.1, 0.05).unwrap();
        assert!(regularity_diagnostic(&traj, 9).is_err());
    }

    #[test]
    fn error_monitor_records_each_step() {
        let f = blob(17);
        let spec = OperatorSpec::standard(1.0).unwrap();
        let options = ExpOptions {
            error_monitor: true,
            ..ExpOptions::default()
        };
        let traj = exp_map_with(&f, &wiggle(&f), spec, 0.1, 0.025, options).unwrap();
        assert_eq!(traj.error_estimates.len(), 4);
        assert!(traj.error_estimates.iter().all(|e| *e < 1e-8));
    }

    #[test]
    fn log_of_same_loop_is_zero() {
        let f = blob(17);
        let spec = OperatorSpec::standard(1.0).unwrap();
        let res = log_map(&f, &f, spec, 1e-10).unwrap();
        assert_eq!(res.velocity.max_abs(), 0.0);
    }

    #[test]
    fn log_rejects_far_targets() {
        let g = PeriodicGrid::new(17).unwrap();
        let f0 = ImmersedLoop::circle(g.clone(), 1.0).unwrap();
        let f1 = ImmersedLoop::circle(g, 3.0).unwrap();
        let spec = OperatorSpec::standard(1.0).unwrap();
        assert!(matches!(
            log_map(&f0, &f1, spec, 1e-8),
            Err(Error::OutsideTrustRegion { .. })
        ));
    }
}
