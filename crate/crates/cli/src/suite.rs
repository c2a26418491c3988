//! The invariant battery behind `sobgeo suite`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sobgeo::epdiff::{lagrangian_vs_eulerian, EulerianOptions, EulerianSolver};
use sobgeo::error::Error as CoreError;
use sobgeo::field::{ScalarField, TangentField};
use sobgeo::geodesic::{exp_map, log_map, regularity_diagnostic, spray_rhs};
use sobgeo::geometry::ImmersedLoop;
use sobgeo::grid::{signed_mode, PeriodicGrid};
use sobgeo::operator::{OperatorFamily, OperatorSpec, WeightedOperator};
use sobgeo::sample::{random_loop, random_smooth_field, seeded_rng};
use sobgeo::variation::{adjoint_normal_closed_form, adjoint_normal_exact, adjoint_normal_fd};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub status: Status,
    pub measured: Option<f64>,
    pub tolerance: f64,
    /// `tolerance − measured`; negative on failure.
    pub margin: Option<f64>,
    pub detail: String,
}

enum Outcome {
    Measured(f64),
    Skip(String),
}

type CheckFn = fn(&RunConfig) -> Result<Outcome, CoreError>;

struct Check {
    name: &'static str,
    tolerance: f64,
    run: CheckFn,
}

fn skip(reason: impl Into<String>) -> Result<Outcome, CoreError> {
    Ok(Outcome::Skip(reason.into()))
}

fn grid(cfg: &RunConfig) -> Result<PeriodicGrid, CoreError> {
    PeriodicGrid::new(cfg.grid_size())
}

fn with_floor(cfg: &RunConfig, f: ImmersedLoop) -> Result<ImmersedLoop, CoreError> {
    ImmersedLoop::with_floor(f.grid().clone(), f.points().clone(), cfg.tol_immersion_floor)
}

fn circle(cfg: &RunConfig, g: PeriodicGrid) -> Result<ImmersedLoop, CoreError> {
    let points = TangentField::from_fn(g.n(), cfg.dimension().max(2), |j, c| match c {
        0 => g.theta(j).cos(),
        1 => g.theta(j).sin(),
        _ => 0.0,
    });
    ImmersedLoop::with_floor(g, points, cfg.tol_immersion_floor)
}

fn blob(cfg: &RunConfig, n: usize) -> Result<ImmersedLoop, CoreError> {
    let g = PeriodicGrid::new(n)?;
    let points = TangentField::from_fn(n, cfg.dimension().max(2), |j, c| {
        let t = g.theta(j);
        let r = 1.0 + 0.1 * (2.0 * t).cos();
        match c {
            0 => r * t.cos(),
            1 => 0.9 * r * t.sin(),
            _ => 0.0,
        }
    });
    ImmersedLoop::with_floor(g, points, cfg.tol_immersion_floor)
}

fn smooth_velocity(f: &ImmersedLoop, scale: f64) -> TangentField {
    let g = f.grid().clone();
    TangentField::from_fn(f.n(), f.d(), |j, c| {
        let t = g.theta(j);
        scale
            * match c {
                0 => (2.0 * t).cos() + 0.3 * t.sin(),
                1 => 0.5 * t.sin() + 0.2 * (3.0 * t).cos(),
                _ => 0.1 * t.cos(),
            }
    })
}

fn geodesic_spec(cfg: &RunConfig) -> Option<OperatorSpec> {
    OperatorSpec::new(cfg.p, cfg.family).ok().filter(|s| s.p >= 1.0)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn differentiation(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let g = grid(cfg)?;
    let d = g.diff_matrix();
    let mut worst: f64 = 0.0;
    for i in 0..g.n() {
        for j in 0..g.n() {
            if d[(i, j)] != -d[(j, i)] {
                worst = f64::INFINITY;
            }
        }
    }
    for k in 1..=g.max_mode() {
        let kf = k as f64;
        let u = g.sample(|t| (kf * t).sin());
        let du = g.diff_theta(&u)?;
        let exact = g.sample(|t| kf * (kf * t).cos());
        worst = worst.max((&du - &exact).max_abs() / kf);
    }
    Ok(Outcome::Measured(worst))
}

fn spectrum_circle(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let spec = OperatorSpec::new(cfg.p, cfg.family)?;
    let f = circle(cfg, grid(cfg)?)?;
    let op = WeightedOperator::assemble(&f, spec)?;
    let n = f.n();
    let (c0, c1) = match spec.family {
        OperatorFamily::Standard => (1.0, 1.0),
        OperatorFamily::ScaleInvariant => ((2.0 * PI).powi(-3), (2.0 * PI).recip()),
    };
    let mut expected: Vec<f64> = (0..n)
        .map(|k| (c0 + c1 * (signed_mode(k, n) as f64).powi(2)).powf(spec.p))
        .collect();
    expected.sort_by(f64::total_cmp);
    let got = op.operator_eigenvalues();
    let worst = (0..n).map(|i| relative(got[i], expected[i])).fold(0.0, f64::max);
    Ok(Outcome::Measured(worst))
}

fn random_instances(
    cfg: &RunConfig,
    count: usize,
) -> Result<Vec<(ImmersedLoop, TangentField, TangentField)>, CoreError> {
    let g = PeriodicGrid::new(cfg.grid_size().min(33))?;
    let mut rng = seeded_rng(cfg.seed);
    (0..count)
        .map(|_| {
            let f = with_floor(cfg, random_loop(&g, cfg.dimension().max(2), &mut rng, 4, 0.15)?)?;
            let h = random_smooth_field(&g, f.d(), &mut rng, 6, 1.0);
            let k = random_smooth_field(&g, f.d(), &mut rng, 6, 1.0);
            Ok((f, h, k))
        })
        .collect()
}

fn self_adjoint(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let spec = OperatorSpec::new(cfg.p, cfg.family)?;
    let mut worst: f64 = 0.0;
    for (f, h, k) in random_instances(cfg, 20)? {
        let op = WeightedOperator::assemble(&f, spec)?;
        let (hk, kh) = (op.inner(&h, &k)?, op.inner(&k, &h)?);
        let scale = (op.inner(&h, &h)? * op.inner(&k, &k)?).sqrt();
        worst = worst.max((hk - kh).abs() / scale);
    }
    Ok(Outcome::Measured(worst))
}

fn positivity(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let spec = OperatorSpec::new(cfg.p, cfg.family)?;
    let mut worst: f64 = 0.0;
    for (f, h, _) in random_instances(cfg, 20)? {
        let op = WeightedOperator::assemble(&f, spec)?;
        let floor = match spec.family {
            OperatorFamily::Standard => 1.0,
            OperatorFamily::ScaleInvariant => f.length().powi(-3).powf(spec.p),
        };
        let ratio = op.inner(&h, &h)? / (floor * f.l2_norm_sq(&h)?);
        worst = worst.max(1.0 - ratio);
    }
    Ok(Outcome::Measured(worst.max(0.0)))
}

fn rotation_equivariance(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let spec = OperatorSpec::new(cfg.p, cfg.family)?;
    let (f, h, _) = random_instances(cfg, 1)?.remove(0);
    let k = f.n() / 3;
    let lhs = WeightedOperator::assemble(&f.rotate(k), spec)?.apply(&h.rotate(k))?;
    let rhs = WeightedOperator::assemble(&f, spec)?.apply(&h)?.rotate(k);
    Ok(Outcome::Measured((&lhs - &rhs).max_abs() / rhs.max_abs()))
}

fn adjoint_fd(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let spec = OperatorSpec::new(cfg.p, cfg.family)?;
    let f = blob(cfg, 25)?;
    let h = smooth_velocity(&f, 1.0);
    let k = smooth_velocity(&f.rotate(5), 1.0);
    let op = WeightedOperator::assemble(&f, spec)?;
    let exact = adjoint_normal_exact(&f, &op, &h, &k)?.value;
    let fd = adjoint_normal_fd(&f, spec, &h, &k)?.value;
    Ok(Outcome::Measured((&exact - &fd).max_abs() / exact.max_abs()))
}

fn adjoint_closed_form(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let spec = OperatorSpec::new(cfg.p, cfg.family)?;
    if spec.integer_order().filter(|p| *p >= 1).is_none() {
        return skip("closed form needs a positive integer order");
    }
    let f = blob(cfg, 65)?;
    let h = smooth_velocity(&f, 1.0);
    let k = smooth_velocity(&f.rotate(7), 1.0);
    let op = WeightedOperator::assemble(&f, spec)?;
    let exact = adjoint_normal_exact(&f, &op, &h, &k)?.value;
    let closed = adjoint_normal_closed_form(&f, spec, &h, &k)?.value;
    Ok(Outcome::Measured((&exact - &closed).max_abs() / exact.max_abs()))
}

fn spray_quadratic(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let Some(spec) = geodesic_spec(cfg) else {
        return skip("geodesic engine needs p >= 1");
    };
    let f = blob(cfg, 33)?;
    let h = smooth_velocity(&f, 0.1);
    let base = spray_rhs(&f, spec, &h)?;
    let mut worst: f64 = 0.0;
    for lambda in [-1.0, 2.0, 10.0] {
        let scaled = spray_rhs(&f, spec, &(&h * lambda))?;
        let want = &base * (lambda * lambda);
        worst = worst.max((&scaled - &want).max_abs() / want.max_abs());
    }
    Ok(Outcome::Measured(worst))
}

fn energy_conservation(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let Some(spec) = geodesic_spec(cfg) else {
        return skip("geodesic engine needs p >= 1");
    };
    let f = blob(cfg, cfg.grid_size().min(65))?;
    let traj = exp_map(&f, &smooth_velocity(&f, 0.1), spec, cfg.t_end.min(0.25), cfg.dt)?;
    Ok(Outcome::Measured(traj.max_drift))
}

fn exp_log_roundtrip(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let Some(spec) = geodesic_spec(cfg) else {
        return skip("geodesic engine needs p >= 1");
    };
    let f = blob(cfg, 25)?;
    let h = smooth_velocity(&f, 0.05);
    let end = exp_map(&f, &h, spec, 1.0, 0.05)?;
    let rec = log_map(&f, &end.last().f, spec, 1e-11)?;
    Ok(Outcome::Measured((&rec.velocity - &h).max_abs() / h.max_abs()))
}

fn regularity(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let Some(spec) = geodesic_spec(cfg) else {
        return skip("geodesic engine needs p >= 1");
    };
    let f = blob(cfg, cfg.grid_size())?;
    let traj = exp_map(&f, &smooth_velocity(&f, 0.1), spec, 0.1, cfg.dt.max(1e-2))?;
    let tails = regularity_diagnostic(&traj, cfg.cutoff())?;
    Ok(Outcome::Measured(tails.into_iter().fold(0.0, f64::max)))
}

fn diffeo_order(cfg: &RunConfig) -> Option<OperatorSpec> {
    OperatorSpec::new(cfg.p, OperatorFamily::Standard)
        .ok()
        .filter(|s| s.p >= 0.5)
}

fn rotations_steady(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let Some(spec) = diffeo_order(cfg) else {
        return skip("diffeomorphism solvers need p >= 1/2");
    };
    let n = cfg.grid_size();
    let check = lagrangian_vs_eulerian(&ScalarField::constant(n, 0.3), spec, 0.05, 5e-3)?;
    Ok(Outcome::Measured(check.discrepancy))
}

fn lagrangian_eulerian(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let Some(spec) = diffeo_order(cfg) else {
        return skip("diffeomorphism solvers need p >= 1/2");
    };
    let g = grid(cfg)?;
    let check = lagrangian_vs_eulerian(&g.sample(|t| 0.2 * t.sin()), spec, 0.1, 2e-3)?;
    Ok(Outcome::Measured(check.discrepancy))
}

fn eulerian_energy(cfg: &RunConfig) -> Result<Outcome, CoreError> {
    let Some(spec) = diffeo_order(cfg) else {
        return skip("diffeomorphism solvers need p >= 1/2");
    };
    let g = grid(cfg)?;
    let solver = EulerianSolver::new(g.clone(), spec, EulerianOptions::default())?;
    let states = solver.integrate(&g.sample(|t| 0.2 * t.sin() + 0.1 * (2.0 * t).cos()), 0.5, 1e-3)?;
    let e: Vec<f64> = states.iter().map(|s| solver.energy(s)).collect();
    Ok(Outcome::Measured(
        e.iter().map(|x| relative(*x, e[0])).fold(0.0, f64::max),
    ))
}

const CHECKS: &[Check] = &[
    Check {
        name: "grid.differentiation",
        tolerance: 1e-10,
        run: differentiation,
    },
    Check {
        name: "operator.spectrum_circle",
        tolerance: 1e-9,
        run: spectrum_circle,
    },
    Check {
        name: "operator.self_adjoint",
        tolerance: 1e-11,
        run: self_adjoint,
    },
    Check {
        name: "operator.positivity",
        tolerance: 1e-9,
        run: positivity,
    },
    Check {
        name: "operator.rotation_equivariance",
        tolerance: 1e-12,
        run: rotation_equivariance,
    },
    Check {
        name: "variation.adjoint_exact_vs_fd",
        tolerance: 1e-6,
        run: adjoint_fd,
    },
    Check {
        name: "variation.adjoint_closed_form",
        tolerance: 1e-8,
        run: adjoint_closed_form,
    },
    Check {
        name: "geodesic.spray_quadratic",
        tolerance: 1e-9,
        run: spray_quadratic,
    },
    Check {
        name: "geodesic.energy_conservation",
        tolerance: 1e-6,
        run: energy_conservation,
    },
    Check {
        name: "geodesic.exp_log_roundtrip",
        tolerance: 1e-4,
        run: exp_log_roundtrip,
    },
    Check {
        name: "geodesic.regularity_tail",
        tolerance: 1e-8,
        run: regularity,
    },
    Check {
        name: "epdiff.rotations_steady",
        tolerance: 1e-10,
        run: rotations_steady,
    },
    Check {
        name: "epdiff.lagrangian_vs_eulerian",
        tolerance: 1e-4,
        run: lagrangian_eulerian,
    },
    Check {
        name: "epdiff.eulerian_energy",
        tolerance: 1e-7,
        run: eulerian_energy,
    },
];

fn precondition(e: &CoreError) -> Option<String> {
    match e {
        CoreError::ImmersionFloor { .. } => Some(format!("precondition: {e}")),
        CoreError::Solver { source, .. } => precondition(source),
        _ => None,
    }
}

fn evaluate(cfg: &RunConfig, check: &Check) -> CheckReport {
    let report = |status, measured: Option<f64>, detail: String| CheckReport {
        name: check.name,
        status,
        measured,
        tolerance: check.tolerance,
        margin: measured.map(|m| check.tolerance - m),
        detail,
    };
    match (check.run)(cfg) {
        Ok(Outcome::Measured(m)) if m <= check.tolerance => report(Status::Pass, Some(m), String::new()),
        Ok(Outcome::Measured(m)) => report(Status::Fail, Some(m), "tolerance exceeded".into()),
        Ok(Outcome::Skip(reason)) => report(Status::Skip, None, reason),
        Err(e) => match precondition(&e) {
            Some(reason) => report(Status::Skip, None, reason),
            None => report(Status::Fail, None, e.to_string()),
        },
    }
}

/// Runs every check; the order of the report does not depend on scheduling.
pub fn run(cfg: &RunConfig) -> (Value, usize) {
    let reports: Vec<CheckReport> = CHECKS.par_iter().map(|c| evaluate(cfg, c)).collect();
    let count = |s| reports.iter().filter(|r| r.status == s).count();
    let (passed, failed, skipped) = (count(Status::Pass), count(Status::Fail), count(Status::Skip));
    let report = json!({
        "config": cfg.to_json(),
        "summary": {
            "passed": passed,
            "failed": failed,
            "skipped": skipped,
            "flagged": skipped > 0,
        },
        "checks": reports,
    });
    (report, failed)
}
