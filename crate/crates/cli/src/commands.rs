use std::path::Path;

use serde_json::{json, Value};
use sobgeo::epdiff::{lagrangian_vs_eulerian_with, EulerianOptions};
use sobgeo::error::Error as CoreError;
use sobgeo::field::TangentField;
use sobgeo::geodesic::{exp_map_with, log_map_with, ExpOptions, LogOptions, OperatorMode, Trajectory};
use sobgeo::geometry::ImmersedLoop;
use sobgeo::grid::{signed_mode, PeriodicGrid};
use sobgeo::operator::{OperatorFamily, WeightedOperator};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{out_path, write_csv, write_json, write_jsonl, SampleFile};

fn grid(n: usize) -> CliResult<PeriodicGrid> {
    PeriodicGrid::new(n).map_err(|e| CliError::Validation(e.to_string()))
}

fn immersed(cfg: &RunConfig, grid: PeriodicGrid, points: TangentField, what: &str) -> CliResult<ImmersedLoop> {
    ImmersedLoop::with_floor(grid, points, cfg.tol_immersion_floor)
        .map_err(|e| CliError::Validation(format!("{what}: {e}")))
}

fn same_shape(a: &SampleFile, b: &SampleFile) -> CliResult<()> {
    if (a.n, a.d) != (b.n, b.d) {
        return Err(CliError::Validation(format!(
            "input shapes differ: n = {}, d = {} vs n = {}, d = {}",
            a.n, a.d, b.n, b.d
        )));
    }
    Ok(())
}

fn operator_mode(cfg: &RunConfig) -> OperatorMode {
    if cfg.stale_operator {
        OperatorMode::Stale
    } else {
        OperatorMode::Reassemble
    }
}

fn write_trajectory(cfg: &RunConfig, traj: &Trajectory, out: &Path) -> CliResult<()> {
    let config = cfg.to_json();
    let cutoff = cfg.cutoff();
    let tails = traj
        .states
        .iter()
        .map(|s| s.f.grid().fourier_tail_energy(s.f.points(), cutoff))
        .collect::<Result<Vec<_>, _>>()?;
    let records = traj
        .states
        .iter()
        .zip(&traj.energies)
        .zip(&tails)
        .map(|((s, e), tail)| {
            json!({
                "t": s.t,
                "points": s.f.points().to_rows(),
                "velocity": s.ft.to_rows(),
                "energy": e,
                "tail_energy": tail,
            })
        });
    write_jsonl(&out_path(out, "trajectory.jsonl"), &config, records)?;
    let rows: Vec<Vec<f64>> = traj
        .states
        .iter()
        .zip(&traj.energies)
        .zip(&tails)
        .map(|((s, e), tail)| vec![s.t, *e, *tail])
        .collect();
    write_csv(&out_path(out, "energy.csv"), &config, &["t", "energy", "tail"], &rows)
}

fn exp_summary(cfg: &RunConfig, traj: &Trajectory, status: &str) -> Value {
    let max_estimate = traj
        .error_estimates
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
    json!({
        "config": cfg.to_json(),
        "status": status,
        "steps": traj.len() - 1,
        "step": traj.step,
        "t_final": traj.last().t,
        "initial_energy": traj.energies[0],
        "max_relative_drift": traj.max_drift,
        "drift_warning": traj.drift_warning,
        "max_error_estimate": max_estimate,
        "operator_mode": if cfg.stale_operator { "stale (approximate)" } else { "reassemble" },
    })
}

pub fn exp(cfg: &mut RunConfig, curve: &Path, velocity: &Path, out: &Path) -> CliResult<()> {
    let cf = SampleFile::read(curve)?;
    let vf = SampleFile::read(velocity)?;
    same_shape(&cf, &vf)?;
    cfg.bind_shape(cf.n, Some(cf.d))?;
    let spec = cfg.geodesic_spec()?;
    let f0 = immersed(cfg, grid(cf.n)?, cf.field(), "curve")?;
    let options = ExpOptions {
        operator_mode: operator_mode(cfg),
        error_monitor: cfg.error_monitor,
        energy_drift_warn: cfg.tol_energy_drift_warn,
    };
    match exp_map_with(&f0, &vf.field(), spec, cfg.t_end, cfg.dt, options) {
        Ok(traj) => {
            write_trajectory(cfg, &traj, out)?;
            write_json(&out_path(out, "exp_summary.json"), &exp_summary(cfg, &traj, "ok"))?;
            if traj.drift_warning {
                eprintln!(
                    "warning: relative energy drift {:e} exceeds {:e}",
                    traj.max_drift, cfg.tol_energy_drift_warn
                );
            }
            Ok(())
        }
        Err(CoreError::ImmersionLost { time, step, partial }) => {
            write_trajectory(cfg, &partial, out)?;
            let mut summary = exp_summary(cfg, &partial, "immersion_lost");
            summary["failure_time"] = json!(time);
            write_json(&out_path(out, "exp_summary.json"), &summary)?;
            Err(CoreError::ImmersionLost { time, step, partial }.into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn log(cfg: &mut RunConfig, curve_a: &Path, curve_b: &Path, out: &Path) -> CliResult<()> {
    let af = SampleFile::read(curve_a)?;
    let bf = SampleFile::read(curve_b)?;
    same_shape(&af, &bf)?;
    cfg.bind_shape(af.n, Some(af.d))?;
    let spec = cfg.geodesic_spec()?;
    let g = grid(af.n)?;
    let f0 = immersed(cfg, g.clone(), af.field(), "curve_a")?;
    let f1 = immersed(cfg, g, bf.field(), "curve_b")?;
    let options = LogOptions {
        dt: cfg.shooting_dt,
        max_iter: cfg.shooting_max_iter,
        trust_radius: cfg.trust_radius,
        operator_mode: operator_mode(cfg),
        ..LogOptions::default()
    };
    let config = cfg.to_json();
    match log_map_with(&f0, &f1, spec, cfg.tol_shooting, &options) {
        Ok(res) => {
            write_json(
                &out_path(out, "log_velocity.json"),
                &SampleFile::from_field(&res.velocity, Some(config.clone())),
            )?;
            write_json(
                &out_path(out, "log_report.json"),
                &json!({
                    "config": config,
                    "status": "converged",
                    "residual": res.residual,
                    "tolerance": cfg.tol_shooting,
                    "iterations": res.iterations,
                    "modes": res.modes,
                }),
            )
        }
        Err(CoreError::NoConvergence {
            iterations,
            residual,
            best,
        }) => {
            write_json(
                &out_path(out, "log_velocity_best.json"),
                &SampleFile::from_field(&best, Some(config.clone())),
            )?;
            write_json(
                &out_path(out, "log_report.json"),
                &json!({
                    "config": config,
                    "status": "no_convergence",
                    "residual": residual,
                    "tolerance": cfg.tol_shooting,
                    "iterations": iterations,
                }),
            )?;
            Err(CoreError::NoConvergence {
                iterations,
                residual,
                best,
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn epdiff(cfg: &mut RunConfig, u0: &Path, out: &Path) -> CliResult<()> {
    let uf = SampleFile::read(u0)?;
    let u0 = uf.scalar()?;
    cfg.bind_shape(uf.n, None)?;
    let spec = cfg.diffeo_spec()?;
    let options = EulerianOptions {
        filter: cfg.filter,
        blow_up_bound: cfg.blow_up_bound,
    };
    let check = lagrangian_vs_eulerian_with(&u0, spec, cfg.t_end, cfg.dt, options)?;
    let series = check.discrepancy_series()?;
    let config = cfg.to_json();
    let mut records = Vec::with_capacity(series.len());
    let mut rows = Vec::with_capacity(series.len());
    for (i, (l, e)) in check.lagrangian.states.iter().zip(&check.eulerian).enumerate() {
        records.push(json!({
            "t": e.t,
            "u": e.u.as_slice(),
            "m": e.m.as_slice(),
            "phi_displacement": l.phi.displacement().as_slice(),
            "phi_t": l.phi_t.as_slice(),
            "lagrangian_energy": check.lagrangian_energies[i],
            "eulerian_energy": check.eulerian_energies[i],
            "discrepancy": series[i],
        }));
        rows.push(vec![
            e.t,
            check.lagrangian_energies[i],
            check.eulerian_energies[i],
            series[i],
        ]);
    }
    write_jsonl(&out_path(out, "epdiff.jsonl"), &config, records)?;
    write_csv(
        &out_path(out, "epdiff_energy.csv"),
        &config,
        &["t", "lagrangian_energy", "eulerian_energy", "discrepancy"],
        &rows,
    )?;
    write_json(
        &out_path(out, "epdiff_report.json"),
        &json!({
            "config": config,
            "discrepancy": check.discrepancy,
            "lagrangian_drift": check.lagrangian_drift(),
            "eulerian_drift": check.eulerian_drift(),
            "energy_gap": check.energy_gap(),
        }),
    )
}

pub fn spectrum(cfg: &mut RunConfig, curve: Option<&Path>, out: &Path) -> CliResult<()> {
    let (f, reference) = match curve {
        Some(path) => {
            let cf = SampleFile::read(path)?;
            cfg.bind_shape(cf.n, Some(cf.d))?;
            (immersed(cfg, grid(cf.n)?, cf.field(), "curve")?, false)
        }
        None => {
            cfg.validate()?;
            let g = grid(cfg.grid_size())?;
            let points = TangentField::from_fn(g.n(), cfg.dimension().max(2), |j, c| match c {
                0 => g.theta(j).cos(),
                1 => g.theta(j).sin(),
                _ => 0.0,
            });
            (immersed(cfg, g, points, "unit circle")?, true)
        }
    };
    let spec = cfg.spec()?;
    let op = WeightedOperator::assemble(&f, spec)?;
    let generator = op.eigenvalues();
    let n = f.n();
    let config = cfg.to_json();
    let mut rows = Vec::with_capacity(n);
    let mut max_rel = 0.0f64;
    let expected: Option<Vec<f64>> = reference.then(|| {
        let (c0, c1) = match spec.family {
            OperatorFamily::Standard => (1.0, 1.0),
            OperatorFamily::ScaleInvariant => {
                let v = 2.0 * std::f64::consts::PI;
                (v.powi(-3), v.recip())
            }
        };
        let mut e: Vec<f64> = (0..n)
            .map(|k| {
                let nu = signed_mode(k, n) as f64;
                (c0 + c1 * nu * nu).powf(spec.p)
            })
            .collect();
        e.sort_by(f64::total_cmp);
        e
    });
    for i in 0..n {
        let value = generator[i].powf(spec.p);
        let mut row = vec![i as f64, generator[i], value];
        if let Some(e) = &expected {
            let rel = (value - e[i]).abs() / e[i];
            max_rel = max_rel.max(rel);
            row.extend([e[i], rel]);
        }
        rows.push(row);
    }
    let columns: &[&str] = if reference {
        &["index", "generator", "operator", "expected", "rel_error"]
    } else {
        &["index", "generator", "operator"]
    };
    write_csv(&out_path(out, "spectrum.csv"), &config, columns, &rows)?;
    write_json(
        &out_path(out, "spectrum.json"),
        &json!({
            "config": config,
            "reference": if reference { "unit circle" } else { "input curve" },
            "min_eigenvalue": generator[0].powf(spec.p),
            "max_eigenvalue": generator[n - 1].powf(spec.p),
            "max_rel_error": reference.then_some(max_rel),
        }),
    )
}
