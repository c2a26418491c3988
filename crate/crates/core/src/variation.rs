//! Variations of `P_f` with respect to the foot point and the normal part of
//! the adjoint `Adj(∇P)^⊥`.
//!
//! `Adj(∇P)^⊥(h, k)` is the vector field dual, in `L²(vol)`, to the linear
//! functional
//!
//! ```text
//! m ↦ ∫ ⟨(∇_{m^⊥} P) h, k⟩ vol.
//! ```
//!
//! Three routes are provided and cross-checked in the tests:
//!
//! * [`adjoint_normal_fd`] evaluates the functional on every nodal basis
//!   field by central differences of reassembled operators. This is the
//!   ground truth, but it costs `2·n·d` assemblies.
//! * [`adjoint_normal_exact`] differentiates the discrete operator in closed
//!   form. Since `P_f` depends on `f` only through the density `σ = |∂_θ f|`
//!   and `δσ[m] = ⟨v, ∂_θ m⟩`, the functional is `m ↦ Σ_j γ_j ⟨v_j, (D m^⊥)_j⟩`
//!   with `γ = ∂Φ/∂σ`, whose Riesz representer is `-Π D(γ v) / w`.
//! * [`adjoint_normal_closed_form`] evaluates the integer-order formula
//!   `Σ_i (2⟨∂_s a_i, ∂_s b_i⟩ - ∂_s⟨∂_s a_i, b_i⟩) H` with
//!   `a_i = A^{p-i-1} h`, `b_i = A^i k`, using only repeated application of
//!   the dense generator.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, TangentField};
use crate::geometry::ImmersedLoop;
use crate::operator::{weighted_pairing, OperatorFamily, OperatorSpec, WeightedOperator};

/// Base finite-difference step, scaled by `‖f‖∞ / ‖m‖∞`.
pub const DEFAULT_FD_EPS: f64 = 5e-4;

/// Default Richardson levels for dualization. Nodal probes are rough, so the
/// plain central difference is far from its asymptotic regime.
pub const DEFAULT_FD_LEVELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointMethod {
    FdDual,
    ClosedForm,
    Exact,
}

#[derive(Debug, Clone)]
pub struct AdjointResult {
    pub value: TangentField,
    pub method: AdjointMethod,
}

#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    /// Base step before scaling by `‖f‖∞ / ‖m‖∞`.
    pub eps: f64,
    /// Richardson levels over the steps `ε, ε/2, ε/4, ...`. Each level
    /// cancels the next even power of `ε`.
    pub levels: usize,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_FD_EPS,
            levels: DEFAULT_FD_LEVELS,
        }
    }
}

/// Step actually used for direction `m`.
pub fn scaled_eps(f: &ImmersedLoop, m: &TangentField, base: f64) -> f64 {
    let fm = f.points().max_abs();
    let mm = m.max_abs();
    if mm == 0.0 || fm == 0.0 {
        base
    } else {
        base * fm / mm
    }
}

/// Central difference `(P_{f+εm} h - P_{f-εm} h) / 2ε` with the given `ε`.
pub fn derivative_p(
    f: &ImmersedLoop,
    spec: OperatorSpec,
    m: &TangentField,
    h: &TangentField,
    eps: f64,
) -> Result<TangentField> {
    f.check_field(m)?;
    f.check_field(h)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step {eps}")));
    }
    if m.max_abs() == 0.0 {
        return Ok(TangentField::zeros(h.n(), h.d()));
    }
    let plus = WeightedOperator::assemble(&f.perturbed(m, eps)?, spec)?.apply(h)?;
    let minus = WeightedOperator::assemble(&f.perturbed(m, -eps)?, spec)?.apply(h)?;
    Ok(&(&plus - &minus) * (0.5 / eps))
}

/// Richardson combination of [`derivative_p`] at `ε` and `ε/2`.
pub fn derivative_p_richardson(
    f: &ImmersedLoop,
    spec: OperatorSpec,
    m: &TangentField,
    h: &TangentField,
    eps: f64,
) -> Result<TangentField> {
    derivative_p_extrapolated(f, spec, m, h, eps, 1)
}

/// Richardson table over `ε / 2^i`, `i = 0..=levels`.
pub fn derivative_p_extrapolated(
    f: &ImmersedLoop,
    spec: OperatorSpec,
    m: &TangentField,
    h: &TangentField,
    eps: f64,
    levels: usize,
) -> Result<TangentField> {
    let mut table = (0..=levels)
        .map(|i| derivative_p(f, spec, m, h, eps / f64::from(1u32 << i)))
        .collect::<Result<Vec<_>>>()?;
    for level in 1..=levels {
        let factor = f64::from(1u32 << (2 * level));
        table = table
            .windows(2)
            .map(|pair| &(&(&pair[1] * factor) - &pair[0]) * (1.0 / (factor - 1.0)))
            .collect();
    }
    Ok(table.pop().expect("table has one entry left"))
}

/// Relative density variation `δσ/σ = ⟨v, ∂_s m⟩` in direction `m`.
pub fn relative_density_variation(f: &ImmersedLoop, m: &TangentField) -> Result<DVector<f64>> {
    let ds = f.arclength_derivative(m)?;
    Ok(ds.dot(&f.unit_tangent()).into_inner())
}

/// Exact directional derivative `(∇_m P) h` of the assembled operator.
pub fn derivative_p_exact(
    f: &ImmersedLoop,
    op: &WeightedOperator,
    m: &TangentField,
    h: &TangentField,
) -> Result<TangentField> {
    f.check_field(h)?;
    let rho = relative_density_variation(f, m)?;
    op.density_derivative_apply(&rho, h)
}

/// `∫ ⟨(∇_{m^⊥} P) h, k⟩ vol` for a single direction, without assembling
/// the adjoint.
pub fn adjoint_pairing(
    f: &ImmersedLoop,
    op: &WeightedOperator,
    m: &TangentField,
    h: &TangentField,
    k: &TangentField,
) -> Result<f64> {
    f.check_field(k)?;
    let normal = f.normal_part(m)?;
    let dp = derivative_p_exact(f, op, &normal, h)?;
    Ok(weighted_pairing(&f.weights().into_inner(), dp.matrix(), k.matrix()))
}

/// Finite-difference dualization with default options.
pub fn adjoint_normal_fd(
    f: &ImmersedLoop,
    spec: OperatorSpec,
    h: &TangentField,
    k: &TangentField,
) -> Result<AdjointResult> {
    adjoint_normal_fd_with(f, spec, h, k, FdOptions::default())
}

/// Finite-difference dualization: probes the functional on all `n·d` nodal
/// basis fields. Probes run in parallel and are reduced in node order.
pub fn adjoint_normal_fd_with(
    f: &ImmersedLoop,
    spec: OperatorSpec,
    h: &TangentField,
    k: &TangentField,
    options: FdOptions,
) -> Result<AdjointResult> {
    f.check_field(h)?;
    f.check_field(k)?;
    let (n, d) = (f.n(), f.d());
    if h.max_abs() == 0.0 || k.max_abs() == 0.0 {
        return Ok(AdjointResult {
            value: TangentField::zeros(n, d),
            method: AdjointMethod::FdDual,
        });
    }
    let weights = f.weights().into_inner();
    let v = f.unit_tangent();
    let probe = |idx: usize| -> Result<f64> {
        let (j, c) = (idx / d, idx % d);
        let mut m = TangentField::zeros(n, d);
        for c2 in 0..d {
            let e = if c2 == c { 1.0 } else { 0.0 };
            m.matrix_mut()[(j, c2)] = e - v.matrix()[(j, c)] * v.matrix()[(j, c2)];
        }
        let eps = scaled_eps(f, &m, options.eps);
        let dp = derivative_p_extrapolated(f, spec, &m, h, eps, options.levels)?;
        Ok(weighted_pairing(&weights, dp.matrix(), k.matrix()))
    };
    let values: Vec<f64> = (0..n * d).into_par_iter().map(probe).collect::<Result<Vec<_>>>()?;
    let raw = TangentField::from_fn(n, d, |j, c| values[j * d + c] / weights[j]);
    Ok(AdjointResult {
        value: f.normal_part(&raw)?,
        method: AdjointMethod::FdDual,
    })
}

/// Exact discrete adjoint from the density gradient of the operator.
pub fn adjoint_normal_exact(
    f: &ImmersedLoop,
    op: &WeightedOperator,
    h: &TangentField,
    k: &TangentField,
) -> Result<AdjointResult> {
    f.check_field(h)?;
    f.check_field(k)?;
    let weights = f.weights();
    let a = k.scale_rows(&weights);
    let gamma = ScalarField::new(op.density_gradient(&a, h)?);
    let v = f.unit_tangent();
    let dual = TangentField::new(-(f.grid().diff_matrix() * v.scale_rows(&gamma).matrix()));
    let raw = dual.scale_rows(&weights.map(f64::recip));
    Ok(AdjointResult {
        value: f.normal_part(&raw)?,
        method: AdjointMethod::Exact,
    })
}

/// Integer-order closed form, flat ambient space, curves.
pub fn adjoint_normal_closed_form(
    f: &ImmersedLoop,
    spec: OperatorSpec,
    h: &TangentField,
    k: &TangentField,
) -> Result<AdjointResult> {
    f.check_field(h)?;
    f.check_field(k)?;
    let p = match spec.integer_order() {
        Some(p) if p >= 1 => p as usize,
        _ => {
            return Err(Error::Unsupported(format!(
                "closed-form adjoint needs a positive integer order, got p = {}",
                spec.p
            )))
        }
    };
    let ds = |u: &TangentField| f.arclength_derivative(u).expect("field checked against loop");
    let volume = f.length();
    let weights = f.weights().into_inner();
    // Generator A = c0 + c1 Δ with Δ = -∂_s∂_s.
    let (c0, c1) = match spec.family {
        OperatorFamily::Standard => (1.0, 1.0),
        OperatorFamily::ScaleInvariant => (volume.powi(-3), volume.recip()),
    };
    let laplace = |u: &TangentField| -&ds(&ds(u));
    let apply_a = |u: &TangentField| &(u * c0) + &(&laplace(u) * c1);
    let mut powers_h = vec![h.clone()];
    let mut powers_k = vec![k.clone()];
    for _ in 1..p {
        let next_h = apply_a(powers_h.last().expect("nonempty"));
        let next_k = apply_a(powers_k.last().expect("nonempty"));
        powers_h.push(next_h);
        powers_k.push(next_k);
    }
    let n = f.n();
    let mut coeff = ScalarField::zeros(n);
    for i in 0..p {
        let a = &powers_h[p - i - 1];
        let b = &powers_k[i];
        let da = ds(a);
        let db = ds(b);
        let pointwise = &(&da.dot(&db) * 2.0)
            - &ScalarField::new(f.grid().diff_matrix() * da.dot(b).values())
                .component_mul(&f.volume_density().map(f64::recip));
        coeff = &coeff + &(&pointwise * c1);
        if spec.family == OperatorFamily::ScaleInvariant {
            let mass = weights.dot(a.dot(b).values());
            let stiffness = weights.dot(laplace(a).dot(b).values());
            let global = 3.0 * volume.powi(-4) * mass + volume.powi(-2) * stiffness;
            coeff = &coeff + &ScalarField::constant(n, global);
        }
    }
    Ok(AdjointResult {
        value: f.curvature().scale_rows(&coeff),
        method: AdjointMethod::ClosedForm,
    })
}
