//! Run configuration: a JSON file, overridden field by field by flags.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use sobgeo::geometry::DEFAULT_IMMERSION_FLOOR;
use sobgeo::grid::MIN_NODES;
use sobgeo::operator::{OperatorFamily, OperatorSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Grid size. When absent it is taken from the input files, or 65.
    pub n: Option<usize>,
    /// Ambient dimension. When absent it is taken from the input files, or 2.
    pub d: Option<usize>,
    pub p: f64,
    pub family: OperatorFamily,
    pub dt: f64,
    pub t_end: f64,
    pub tol_immersion_floor: f64,
    pub tol_fd_eps: f64,
    pub tol_shooting: f64,
    pub tol_energy_drift_warn: f64,
    pub seed: u64,
    /// Fourier cutoff of the tail energy; `n / 3` when absent.
    pub tail_cutoff: Option<usize>,
    /// Inner step of the shooting exponential map.
    pub shooting_dt: f64,
    pub shooting_max_iter: usize,
    pub trust_radius: f64,
    pub stale_operator: bool,
    pub error_monitor: bool,
    pub filter: bool,
    pub blow_up_bound: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: None,
            d: None,
            p: 1.0,
            family: OperatorFamily::Standard,
            dt: 1e-3,
            t_end: 1.0,
            tol_immersion_floor: DEFAULT_IMMERSION_FLOOR,
            tol_fd_eps: sobgeo::variation::DEFAULT_FD_EPS,
            tol_shooting: 1e-10,
            tol_energy_drift_warn: sobgeo::geodesic::DEFAULT_ENERGY_DRIFT_WARN,
            seed: 0,
            tail_cutoff: None,
            shooting_dt: 0.05,
            shooting_max_iter: 12,
            trust_radius: 0.5,
            stale_operator: false,
            error_monitor: false,
            filter: false,
            blow_up_bound: 1e6,
        }
    }
}

/// Flags that override config fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Grid size (odd, at least 9)
    #[arg(long)]
    pub n: Option<usize>,
    /// Ambient dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Operator order
    #[arg(long)]
    pub p: Option<f64>,
    /// Operator family: standard | scale_invariant
    #[arg(long)]
    pub family: Option<OperatorFamily>,
    /// Time step
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Immersion floor, relative to the mean speed
    #[arg(long)]
    pub immersion_floor: Option<f64>,
    /// Base finite-difference step
    #[arg(long)]
    pub fd_eps: Option<f64>,
    /// Shooting residual tolerance
    #[arg(long)]
    pub shooting_tol: Option<f64>,
    /// Relative energy drift that triggers a warning
    #[arg(long)]
    pub energy_drift_warn: Option<f64>,
    /// Fourier cutoff for the tail energy
    #[arg(long)]
    pub tail_cutoff: Option<usize>,
    /// Reuse one operator per RK step (approximate)
    #[arg(long)]
    pub stale_operator: bool,
    /// Record half-step error estimates
    #[arg(long)]
    pub error_monitor: bool,
    /// Damp the top sixth of the modes in the Eulerian solver
    #[arg(long)]
    pub filter: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides, seed: Option<u64>) {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        if o.n.is_some() {
            self.n = o.n;
        }
        if o.d.is_some() {
            self.d = o.d;
        }
        set(&mut self.p, &o.p);
        set(&mut self.family, &o.family);
        set(&mut self.dt, &o.dt);
        set(&mut self.t_end, &o.t_end);
        set(&mut self.tol_immersion_floor, &o.immersion_floor);
        set(&mut self.tol_fd_eps, &o.fd_eps);
        set(&mut self.tol_shooting, &o.shooting_tol);
        set(&mut self.tol_energy_drift_warn, &o.energy_drift_warn);
        if o.tail_cutoff.is_some() {
            self.tail_cutoff = o.tail_cutoff;
        }
        self.stale_operator |= o.stale_operator;
        self.error_monitor |= o.error_monitor;
        self.filter |= o.filter;
        set(&mut self.seed, &seed);
    }

    /// Checks everything that does not depend on the chosen command.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Validation(msg));
        if let Some(n) = self.n {
            if n < MIN_NODES || n % 2 == 0 {
                return bad(format!("n = {n}: must be odd and at least {MIN_NODES}"));
            }
        }
        if let Some(d) = self.d {
            if d == 0 {
                return bad("d must be positive".into());
            }
        }
        let positive = [
            ("dt", self.dt),
            ("shooting_dt", self.shooting_dt),
            ("tol_fd_eps", self.tol_fd_eps),
            ("tol_shooting", self.tol_shooting),
            ("tol_energy_drift_warn", self.tol_energy_drift_warn),
            ("trust_radius", self.trust_radius),
            ("blow_up_bound", self.blow_up_bound),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return bad(format!("{name} = {value}: must be positive"));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {}: must be nonnegative", self.t_end));
        }
        if !(self.tol_immersion_floor >= 0.0) {
            return bad(format!("tol_immersion_floor = {}", self.tol_immersion_floor));
        }
        if self.shooting_max_iter == 0 {
            return bad("shooting_max_iter must be positive".into());
        }
        self.spec()?;
        Ok(())
    }

    pub fn spec(&self) -> CliResult<OperatorSpec> {
        OperatorSpec::new(self.p, self.family).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Spec for the immersion engine, which needs `p ≥ 1`.
    pub fn geodesic_spec(&self) -> CliResult<OperatorSpec> {
        let spec = self.spec()?;
        spec.require_geodesic_order()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(spec)
    }

    /// Spec for the diffeomorphism solvers, which need `p ≥ 1/2`.
    pub fn diffeo_spec(&self) -> CliResult<OperatorSpec> {
        let spec = self.spec()?;
        spec.require_diffeo_order()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(spec)
    }

    /// Fixes `n` and `d` from an input file, rejecting a conflict with the
    /// configured values.
    pub fn bind_shape(&mut self, n: usize, d: Option<usize>) -> CliResult<()> {
        match self.n {
            Some(cn) if cn != n => {
                return Err(CliError::Validation(format!(
                    "config has n = {cn} but input has n = {n}"
                )))
            }
            _ => self.n = Some(n),
        }
        if let Some(d) = d {
            match self.d {
                Some(cd) if cd != d => {
                    return Err(CliError::Validation(format!(
                        "config has d = {cd} but input has d = {d}"
                    )))
                }
                _ => self.d = Some(d),
            }
        }
        self.validate()
    }

    pub fn grid_size(&self) -> usize {
        self.n.unwrap_or(65)
    }

    pub fn dimension(&self) -> usize {
        self.d.unwrap_or(2)
    }

    pub fn cutoff(&self) -> usize {
        self.tail_cutoff.unwrap_or(self.grid_size() / 3)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
