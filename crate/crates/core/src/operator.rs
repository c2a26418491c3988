//! The inertia operator `P_f` and its functional calculus.
//!
//! For a loop with volume density `σ = |∂_θ f|` the generator is
//!
//! ```text
//! A = 1 - D_s D_s,          D_s = diag(σ)⁻¹ D           (standard)
//! A = V⁻³ + V⁻¹(-D_s D_s),  V = length of the loop      (scale invariant)
//! ```
//!
//! with `D` the antisymmetric spectral differentiation matrix. `A` is
//! self-adjoint in the weighted inner product `⟨u, w⟩ = Σ_j w_j u_j v_j`,
//! `w_j = σ_j 2π/n`. Conjugating by `G^{1/2} = diag(σ)^{1/2}` gives the
//! symmetric matrix
//!
//! ```text
//! S = G^{1/2} A G^{-1/2} = c₀ + c₁ K,   K = EᵀE,   E = G^{-1/2} D G^{-1/2},
//! ```
//!
//! whose eigendecomposition `S = Q Λ Qᵀ` defines every power
//! `A^q = G^{-1/2} Q Λ^q Qᵀ G^{1/2}` exactly on the discrete spectrum.
//!
//! The operator depends on the loop only through `σ`. Derivatives with
//! respect to `σ` are computed in closed form from the eigendecomposition
//! (first-order perturbation of a symmetric matrix function, with divided
//! differences of `λ ↦ λ^q`).

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, TangentField};
use crate::geometry::ImmersedLoop;
use crate::grid::PeriodicGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorFamily {
    /// `(1 + Δ)^p`
    Standard,
    /// `(V⁻³ + V⁻¹Δ)^p` with `V` the length of the loop.
    ScaleInvariant,
}

impl std::fmt::Display for OperatorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorFamily::Standard => f.write_str("standard"),
            OperatorFamily::ScaleInvariant => f.write_str("scale_invariant"),
        }
    }
}

impl std::str::FromStr for OperatorFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(OperatorFamily::Standard),
            "scale_invariant" | "scale-invariant" => Ok(OperatorFamily::ScaleInvariant),
            other => Err(Error::InvalidParameter(format!("unknown operator family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub p: f64,
    pub family: OperatorFamily,
}

impl OperatorSpec {
    pub fn new(p: f64, family: OperatorFamily) -> Result<Self> {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidOrder {
                p,
                reason: "order must be finite and nonnegative",
            });
        }
        Ok(Self { p, family })
    }

    pub fn standard(p: f64) -> Result<Self> {
        Self::new(p, OperatorFamily::Standard)
    }

    pub fn scale_invariant(p: f64) -> Result<Self> {
        Self::new(p, OperatorFamily::ScaleInvariant)
    }

    /// Orders admitted by the geodesic routines on immersions.
    pub fn require_geodesic_order(&self) -> Result<()> {
        if self.p < 1.0 {
            return Err(Error::InvalidOrder {
                p: self.p,
                reason: "geodesics of immersions need p >= 1",
            });
        }
        Ok(())
    }

    /// Orders admitted by the diffeomorphism-group routines.
    pub fn require_diffeo_order(&self) -> Result<()> {
        if self.p < 0.5 {
            return Err(Error::InvalidOrder {
                p: self.p,
                reason: "diffeomorphism geodesics need p >= 1/2",
            });
        }
        Ok(())
    }

    /// Integer order, if `p` is one.
    pub fn integer_order(&self) -> Option<u32> {
        (self.p.fract() == 0.0 && self.p <= u32::MAX as f64).then_some(self.p as u32)
    }
}

/// Assembled operator with its weighted spectral factorization.
///
/// The factorization is computed in a canonical cyclic frame, the least
/// rotation of the input samples, so assembling on a grid-rotated input
/// reproduces the same numbers bit for bit. Fields are moved into that frame
/// on the way in and back on the way out.
#[derive(Debug, Clone)]
pub struct WeightedOperator {
    grid: PeriodicGrid,
    spec: OperatorSpec,
    /// Density in the caller's node order.
    density: DVector<f64>,
    /// Offset of the canonical frame: `canonical[j] = caller[j + shift]`.
    shift: usize,
    /// Density in the canonical frame.
    sigma: DVector<f64>,
    volume: f64,
    /// `E = G^{-1/2} D G^{-1/2}`
    e: DMatrix<f64>,
    /// `K = EᵀE`
    k: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors of the symmetrized generator.
    q: DMatrix<f64>,
}

impl WeightedOperator {
    pub fn assemble(f: &ImmersedLoop, spec: OperatorSpec) -> Result<Self> {
        let shift = least_rotation(f.points().matrix());
        let sigma = f.rotate(shift).volume_density().into_inner();
        Self::build(f.grid().clone(), sigma, shift, spec)
    }

    /// Assembles the operator for a given volume density `σ > 0`.
    pub fn from_density(grid: PeriodicGrid, density: ScalarField, spec: OperatorSpec) -> Result<Self> {
        grid.check_len(density.len())?;
        let shift = least_rotation(&DMatrix::from_column_slice(density.len(), 1, density.as_slice()));
        Self::build(grid, density.rotate(shift).into_inner(), shift, spec)
    }

    fn build(grid: PeriodicGrid, sigma: DVector<f64>, shift: usize, spec: OperatorSpec) -> Result<Self> {
        let n = grid.n();
        if let Some(j) = (0..n).find(|&j| !(sigma[j] > 0.0)) {
            return Err(Error::Eigen(format!(
                "degenerate weight {} at node {}",
                sigma[j],
                (j + shift) % n
            )));
        }
        let density = DVector::from_fn(n, |j, _| sigma[(j + n - shift) % n]);
        let volume = grid.spacing() * sigma.sum();
        let inv_sqrt = sigma.map(|s| s.sqrt().recip());
        let d = grid.diff_matrix();
        let e = DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| inv_sqrt[i] * d[(i, j)] * inv_sqrt[j]);
        let mut k = e.tr_mul(&e);
        symmetrize(&mut k);
        let (c0, c1) = generator_coefficients(spec.family, volume);
        let mut s = &k * c1;
        for i in 0..s.nrows() {
            s[(i, i)] += c0;
        }
        let eig = SymmetricEigen::try_new(s, f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
        let q = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        if let Some(bad) = eigenvalues.iter().find(|l| !(**l > 0.0)) {
            return Err(Error::Eigen(format!("nonpositive eigenvalue {bad:e}")));
        }
        Ok(Self {
            grid,
            spec,
            density,
            shift,
            sigma,
            volume,
            e,
            k,
            eigenvalues,
            q,
        })
    }

    pub fn spec(&self) -> OperatorSpec {
        self.spec
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn density(&self) -> &DVector<f64> {
        &self.density
    }

    /// Total volume (length) used by the scale-invariant family.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Quadrature weights `w_j = σ_j 2π/n`.
    pub fn weights(&self) -> DVector<f64> {
        &self.density * self.grid.spacing()
    }

    /// Eigenvalues of the generator `A`, ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Eigenvalues of `P = A^p`, ascending.
    pub fn operator_eigenvalues(&self) -> DVector<f64> {
        self.eigenvalues.map(|l| l.powf(self.spec.p))
    }

    /// Eigenvectors of `A`, orthonormal in the weighted inner product.
    pub fn eigenvectors(&self) -> DMatrix<f64> {
        let scale = self.grid.spacing().sqrt().recip();
        let mut v = self.q.clone();
        for (i, mut row) in v.row_iter_mut().enumerate() {
            row *= scale / self.sigma[i].sqrt();
        }
        self.rows_to_caller(&v)
    }

    /// Dense generator `A` (not symmetric; `W·A` is).
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.n();
        let (c0, c1) = generator_coefficients(self.spec.family, self.volume);
        let sq = self.sigma.map(f64::sqrt);
        self.matrix_from_canon(&DMatrix::from_fn(n, n, |i, j| {
            let s = c1 * self.k[(i, j)] + if i == j { c0 } else { 0.0 };
            s * sq[j] / sq[i]
        }))
    }

    /// Dense matrix of `A^q`.
    pub fn power_matrix(&self, q: f64) -> DMatrix<f64> {
        let n = self.n();
        let sq = self.sigma.map(f64::sqrt);
        let fq = self.spectral_matrix(|l| l.powf(q));
        self.matrix_from_canon(&DMatrix::from_fn(n, n, |i, j| fq[(i, j)] * sq[j] / sq[i]))
    }

    /// Rows of a caller-frame matrix in the canonical frame.
    fn to_canon(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        rotate_rows(m, self.shift)
    }

    fn rows_to_caller(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        rotate_rows(m, (self.n() - self.shift) % self.n())
    }

    fn vector_to_canon(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n, |j, _| v[(j + self.shift) % n])
    }

    fn vector_from_canon(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n, |j, _| v[(j + n - self.shift) % n])
    }

    fn matrix_from_canon(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n();
        let back = |i: usize| (i + n - self.shift) % n;
        DMatrix::from_fn(n, n, |i, j| m[(back(i), back(j))])
    }

    fn spectral_matrix(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.q.clone();
        for (c, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[c]);
        }
        scaled * self.q.transpose()
    }

    fn check_field(&self, h: &TangentField) -> Result<()> {
        self.grid.check_len(h.n())
    }

    /// `A^q h` on every ambient component.
    pub fn apply_power(&self, h: &TangentField, q: f64) -> Result<TangentField> {
        self.check_field(h)?;
        Ok(TangentField::new(self.power_caller(h.matrix(), q)))
    }

    fn power_caller(&self, h: &DMatrix<f64>, q: f64) -> DMatrix<f64> {
        self.rows_to_caller(&self.power_raw(&self.to_canon(h), q))
    }

    /// `A^q` on canonical-frame columns.
    fn power_raw(&self, h: &DMatrix<f64>, q: f64) -> DMatrix<f64> {
        let sq = self.sigma.map(f64::sqrt);
        let mut x = h.clone();
        scale_rows(&mut x, &sq);
        let mut coeffs = self.q.tr_mul(&x);
        for (i, mut row) in coeffs.row_iter_mut().enumerate() {
            row *= self.eigenvalues[i].powf(q);
        }
        let mut out = &self.q * coeffs;
        scale_rows(&mut out, &sq.map(f64::recip));
        out
    }

    /// `P h = A^p h`.
    pub fn apply(&self, h: &TangentField) -> Result<TangentField> {
        self.apply_power(h, self.spec.p)
    }

    /// `P⁻¹ h = A^{-p} h`.
    pub fn apply_inverse(&self, h: &TangentField) -> Result<TangentField> {
        self.apply_power(h, -self.spec.p)
    }

    pub fn apply_scalar(&self, u: &ScalarField) -> Result<ScalarField> {
        self.grid.check_len(u.len())?;
        let m = DMatrix::from_column_slice(u.len(), 1, u.as_slice());
        Ok(ScalarField::from_vec(
            self.power_caller(&m, self.spec.p).as_slice().to_vec(),
        ))
    }

    pub fn apply_inverse_scalar(&self, u: &ScalarField) -> Result<ScalarField> {
        self.grid.check_len(u.len())?;
        let m = DMatrix::from_column_slice(u.len(), 1, u.as_slice());
        Ok(ScalarField::from_vec(
            self.power_caller(&m, -self.spec.p).as_slice().to_vec(),
        ))
    }

    /// `G_f(h, k) = Σ_j w_j ⟨(P h)_j, k_j⟩`.
    pub fn inner(&self, h: &TangentField, k: &TangentField) -> Result<f64> {
        self.check_field(h)?;
        self.check_field(k)?;
        let ph = self.power_raw(&self.to_canon(h.matrix()), self.spec.p);
        let w = &self.sigma * self.grid.spacing();
        Ok(weighted_pairing(&w, &ph, &self.to_canon(k.matrix())))
    }

    /// Derivative of `h ↦ P h` when the density moves by `δσ = ρ∘σ`.
    ///
    /// `rho` is the relative density variation `δσ/σ`.
    pub fn density_derivative_apply(&self, rho: &DVector<f64>, h: &TangentField) -> Result<TangentField> {
        self.check_field(h)?;
        self.grid.check_len(rho.len())?;
        let rho = &self.vector_to_canon(rho);
        let h = self.to_canon(h.matrix());
        let p = self.spec.p;
        let sq = self.sigma.map(f64::sqrt);
        let delta_s = self.symmetric_variation(rho);
        let gamma = self.divided_differences(p);
        let mut m = self.q.tr_mul(&delta_s) * &self.q;
        m.component_mul_assign(&gamma);

        let ph = self.power_raw(&h, p);
        let mut rho_h = h.clone();
        scale_rows(&mut rho_h, rho);
        let p_rho_h = self.power_raw(&rho_h, p);

        let mut beta = h;
        scale_rows(&mut beta, &sq);
        let mut middle = &self.q * (m * self.q.tr_mul(&beta));
        scale_rows(&mut middle, &sq.map(f64::recip));

        let mut rho_ph = ph;
        scale_rows(&mut rho_ph, rho);
        Ok(TangentField::new(
            self.rows_to_caller(&(middle + (p_rho_h - rho_ph) * 0.5)),
        ))
    }

    /// Gradient with respect to `σ` of `Φ(σ) = Σ_c a_cᵀ P_σ b_c` at the
    /// current density, with `a` held fixed.
    pub fn density_gradient(&self, a: &TangentField, b: &TangentField) -> Result<DVector<f64>> {
        self.check_field(a)?;
        self.check_field(b)?;
        let (a, b) = (self.to_canon(a.matrix()), self.to_canon(b.matrix()));
        let d = a.ncols();
        let n = self.n();
        let p = self.spec.p;
        let sq = self.sigma.map(f64::sqrt);
        let inv_sq = sq.map(f64::recip);

        let pb = self.power_raw(&b, p);
        // Pᵀ a = G^{1/2} F G^{-1/2} a
        let mut alpha = a.clone();
        scale_rows(&mut alpha, &inv_sq);
        let mut beta = b.clone();
        scale_rows(&mut beta, &sq);
        let qa = self.q.tr_mul(&alpha);
        let qb = self.q.tr_mul(&beta);
        let mut f_alpha = qa.clone();
        for (i, mut row) in f_alpha.row_iter_mut().enumerate() {
            row *= self.eigenvalues[i].powf(p);
        }
        let mut pt_a = &self.q * f_alpha;
        scale_rows(&mut pt_a, &sq);

        let mut c = &qa * qb.transpose();
        c.component_mul_assign(&self.divided_differences(p));
        let y = &self.q * c * self.q.transpose();
        let mut y_sym = (&y + y.transpose()) * 0.5;
        symmetrize(&mut y_sym);

        let eye = &self.e * &y_sym * &self.e;
        let yk = y_sym.component_mul(&self.k);
        let (_, c1) = generator_coefficients(self.spec.family, self.volume);
        let mut grad_rho = DVector::from_fn(n, |j, _| {
            let outer = (0..d)
                .map(|col| -0.5 * a[(j, col)] * pb[(j, col)] + 0.5 * pt_a[(j, col)] * b[(j, col)])
                .sum::<f64>();
            let dk = -0.5 * (yk.row(j).sum() + yk.column(j).sum()) + eye[(j, j)];
            outer + c1 * dk
        });
        if self.spec.family == OperatorFamily::ScaleInvariant {
            let v = self.volume;
            let coupling = (-3.0 * v.powi(-4) * y_sym.trace() - v.powi(-2) * yk.sum()) * self.grid.spacing();
            for j in 0..n {
                grad_rho[j] += coupling * self.sigma[j];
            }
        }
        Ok(self.vector_from_canon(&grad_rho.component_div(&self.sigma)))
    }

    /// Variation of the symmetrized generator for a relative density change.
    fn symmetric_variation(&self, rho: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut e_rho = self.e.clone();
        for (c, mut col) in e_rho.column_iter_mut().enumerate() {
            col *= rho[c];
        }
        let ere = e_rho * &self.e;
        let mut dk = DMatrix::from_fn(n, n, |i, j| -0.5 * (rho[i] + rho[j]) * self.k[(i, j)] + ere[(i, j)]);
        symmetrize(&mut dk);
        let (_, c1) = generator_coefficients(self.spec.family, self.volume);
        let mut ds = dk * c1;
        if self.spec.family == OperatorFamily::ScaleInvariant {
            let v = self.volume;
            let dv = self.grid.spacing() * self.sigma.dot(rho);
            ds -= &self.k * (v.powi(-2) * dv);
            for i in 0..n {
                ds[(i, i)] -= 3.0 * v.powi(-4) * dv;
            }
        }
        ds
    }

    /// `Γ_ij = (λ_i^q - λ_j^q)/(λ_i - λ_j)`, with `q λ^{q-1}` on the diagonal.
    fn divided_differences(&self, q: f64) -> DMatrix<f64> {
        let l = &self.eigenvalues;
        let n = l.len();
        DMatrix::from_fn(n, n, |i, j| power_divided_difference(l[i], l[j], q))
    }
}

/// `(a^q - b^q)/(a - b)` evaluated without cancellation for `a, b > 0`.
pub(crate) fn power_divided_difference(a: f64, b: f64, q: f64) -> f64 {
    let delta = a - b;
    if delta == 0.0 {
        return q * a.powf(q - 1.0);
    }
    let ratio = (delta / b).ln_1p();
    b.powf(q) * (q * ratio).exp_m1() / delta
}

fn generator_coefficients(family: OperatorFamily, volume: f64) -> (f64, f64) {
    match family {
        OperatorFamily::Standard => (1.0, 1.0),
        OperatorFamily::ScaleInvariant => (volume.powi(-3), volume.recip()),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Start of the lexicographically least cyclic rotation of the rows of `m`.
/// Depends only on the values, so it moves with any cyclic reindexing.
fn least_rotation(m: &DMatrix<f64>) -> usize {
    let n = m.nrows();
    let cmp_rows = |a: usize, b: usize| {
        (0..m.ncols())
            .map(|c| m[(a % n, c)].total_cmp(&m[(b % n, c)]))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    let mut best = 0;
    for cand in 1..n {
        let order = (0..n)
            .map(|i| cmp_rows(cand + i, best + i))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal);
        if order.is_lt() {
            best = cand;
        }
    }
    best
}

/// `out[j] = m[j + k mod n]` row-wise.
fn rotate_rows(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, m.ncols(), |j, c| m[((j + k) % n, c)])
}

pub(crate) fn scale_rows(m: &mut DMatrix<f64>, s: &DVector<f64>) {
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= s[i];
    }
}

/// `Σ_j w_j ⟨x_j, y_j⟩` over the rows of two `n × d` matrices.
pub(crate) fn weighted_pairing(w: &DVector<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (0..x.nrows()).map(|j| w[j] * x.row(j).dot(&y.row(j))).sum()
}

/// Assembles `P_f` for the given loop.
pub fn assemble(f: &ImmersedLoop, spec: OperatorSpec) -> Result<WeightedOperator> {
    WeightedOperator::assemble(f, spec)
}

/// The weak Riemannian metric `G_f(h, k) = ∫ ⟨P_f h, k⟩ vol`.
pub fn metric_inner(f: &ImmersedLoop, spec: OperatorSpec, h: &TangentField, k: &TangentField) -> Result<f64> {
    f.check_field(h)?;
    f.check_field(k)?;
    WeightedOperator::assemble(f, spec)?.inner(h, k)
}

/// Memo of assembled operators keyed by the exact bit pattern of the loop
/// samples and the operator spec.
#[derive(Debug, Default)]
pub struct OperatorCache {
    capacity: usize,
    entries: Mutex<HashMap<CacheKey, Arc<WeightedOperator>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    points: Vec<u64>,
    d: usize,
    p: u64,
    family: OperatorFamily,
}

impl OperatorCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn get_or_assemble(&self, f: &ImmersedLoop, spec: OperatorSpec) -> Result<Arc<WeightedOperator>> {
        let key = CacheKey {
            points: f.points().matrix().iter().map(|x| x.to_bits()).collect(),
            d: f.d(),
            p: spec.p.to_bits(),
            family: spec.family,
        };
        if let Some(op) = self.lock().get(&key) {
            return Ok(Arc::clone(op));
        }
        let op = Arc::new(WeightedOperator::assemble(f, spec)?);
        let mut entries = self.lock();
        if entries.len() >= self.capacity {
            entries.clear();
        }
        entries.insert(key, Arc::clone(&op));
        Ok(op)
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<CacheKey, Arc<WeightedOperator>>> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(n: usize, r: f64) -> ImmersedLoop {
        ImmersedLoop::circle(PeriodicGrid::new(n).unwrap(), r).unwrap()
    }

    fn expected_circle_spectrum(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let m = (n as i64 - 1) / 2;
        let mut v: Vec<f64> = (-m..=m).map(|nu| f(nu as f64)).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn unit_circle_spectrum() {
        let op = assemble(&circle(33, 1.0), OperatorSpec::standard(1.0).unwrap()).unwrap();
        let want = expected_circle_spectrum(33, |nu| 1.0 + nu * nu);
        for (got, want) in op.eigenvalues().iter().zip(want) {
            assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
        }
    }

    #[test]
    fn scaled_circle_spectrum() {
        let r = 2.5;
        let op = assemble(&circle(33, r), OperatorSpec::standard(1.0).unwrap()).unwrap();
        let want = expected_circle_spectrum(33, |nu| 1.0 + nu * nu / (r * r));
        for (got, want) in op.eigenvalues().iter().zip(want) {
            assert!((got - want).abs() <= 1e-9 * want);
        }
    }

    #[test]
    fn scale_invariant_circle_spectrum() {
        let op = assemble(&circle(33, 1.0), OperatorSpec::scale_invariant(1.0).unwrap()).unwrap();
        let v = 2.0 * PI;
        let want = expected_circle_spectrum(33, |nu| v.powi(-3) + nu * nu / v);
        for (got, want) in op.eigenvalues().iter().zip(want) {
            assert!((got - want).abs() <= 1e-9 * want);
        }
    }

    #[test]
    fn apply_examples_on_circle() {
        let f = circle(33, 1.0);
        let g = f.grid().clone();
        let cos_e1 = TangentField::from_scalar(&g.sample(f64::cos), &[1.0, 0.0]);
        let op = assemble(&f, OperatorSpec::standard(2.0).unwrap()).unwrap();
        let got = op.apply(&cos_e1).unwrap();
        assert!((&got - &(&cos_e1 * 4.0)).max_abs() < 1e-10);
        let op1 = assemble(&f, OperatorSpec::standard(1.0).unwrap()).unwrap();
        let got = op1.apply_inverse(&cos_e1).unwrap();
        assert!((&got - &(&cos_e1 * 0.5)).max_abs() < 1e-12);
        let constant = TangentField::from_fn(33, 2, |_, c| 1.0 + c as f64);
        for p in [0.5, 1.7, 3.0] {
            let op = assemble(&f, OperatorSpec::standard(p).unwrap()).unwrap();
            // Rounding in the top modes is amplified by λ_max^p.
            let noise = 1e-14 * op.operator_eigenvalues().max();
            assert!((&op.apply(&constant).unwrap() - &constant).max_abs() < noise.max(1e-12));
            assert!((&op.apply_inverse(&constant).unwrap() - &constant).max_abs() < 1e-10);
        }
    }

    #[test]
    fn metric_inner_examples() {
        let f = circle(33, 1.0);
        let g = f.grid().clone();
        let e1 = TangentField::from_fn(33, 2, |_, c| if c == 0 { 1.0 } else { 0.0 });
        let cos_e1 = TangentField::from_scalar(&g.sample(f64::cos), &[1.0, 0.0]);
        for p in [0.0, 0.5, 1.0, 2.5] {
            let spec = OperatorSpec::standard(p).unwrap();
            assert!((metric_inner(&f, spec, &e1, &e1).unwrap() - 2.0 * PI).abs() < 1e-11);
            let want = 2f64.powf(p) * PI;
            assert!((metric_inner(&f, spec, &cos_e1, &cos_e1).unwrap() - want).abs() < 1e-10 * want);
        }
    }

    #[test]
    fn generator_is_weighted_self_adjoint() {
        let g = PeriodicGrid::new(31).unwrap();
        let f = ImmersedLoop::from_fn(g, 2, |t| {
            vec![
                (1.0 + 0.3 * (2.0 * t).cos()) * t.cos(),
                (1.0 + 0.3 * (2.0 * t).cos()) * t.sin(),
            ]
        })
        .unwrap();
        let op = assemble(&f, OperatorSpec::standard(1.0).unwrap()).unwrap();
        let w = DMatrix::from_diagonal(&op.weights());
        let wa = &w * op.generator();
        let asym = (&wa - wa.transpose()).amax() / wa.amax();
        assert!(asym <= 1e-11, "{asym}");
        let v = op.eigenvectors();
        let gram = v.transpose() * &w * &v;
        assert!((gram - DMatrix::identity(31, 31)).amax() <= 1e-10);
        assert!(op.eigenvalues().min() >= 1.0 - 1e-9);
    }

    #[test]
    fn divided_difference_limits() {
        for q in [-1.5, 0.5, 2.0, 3.0] {
            let a: f64 = 2.3;
            let exact = q * a.powf(q - 1.0);
            assert!((power_divided_difference(a, a, q) - exact).abs() < 1e-14);
            let near = power_divided_difference(a + 1e-12, a, q);
            assert!((near - exact).abs() < 1e-9 * exact.abs().max(1.0));
            let far = power_divided_difference(5.0, 2.0, q);
            let want = (5f64.powf(q) - 2f64.powf(q)) / 3.0;
            assert!((far - want).abs() < 1e-13 * want.abs().max(1.0));
        }
    }

    #[test]
    fn cache_returns_shared_operator() {
        let f = circle(17, 1.0);
        let cache = OperatorCache::new(4);
        let spec = OperatorSpec::standard(1.0).unwrap();
        let a = cache.get_or_assemble(&f, spec).unwrap();
        let b = cache.get_or_assemble(&f, spec).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let c = cache.get_or_assemble(&f, OperatorSpec::standard(2.0).unwrap()).unwrap();
        assert!(!Arc::ptr_eq(&a, &c));
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn grid_rotation_is_bitwise_exact() {
        let g = PeriodicGrid::new(17).unwrap();
        let f = ImmersedLoop::from_fn(g.clone(), 2, |t| {
            vec![(1.0 + 0.2 * (2.0 * t).cos()) * t.cos(), t.sin() + 0.1 * (3.0 * t).cos()]
        })
        .unwrap();
        let h = TangentField::from_fn(17, 2, |j, c| (g.theta(j) * (c + 1) as f64).sin());
        let spec = OperatorSpec::standard(3.0).unwrap();
        let base = WeightedOperator::assemble(&f, spec).unwrap();
        for k in [1, 5, 16] {
            let rot = WeightedOperator::assemble(&f.rotate(k), spec).unwrap();
            assert_eq!(rot.apply(&h.rotate(k)).unwrap(), base.apply(&h).unwrap().rotate(k));
            let rotated = ScalarField::new(base.density().clone()).rotate(k);
            assert_eq!(rot.density(), rotated.values());
            assert_eq!(
                rot.inner(&h.rotate(k), &h.rotate(k)).unwrap(),
                base.inner(&h, &h).unwrap()
            );
        }
    }

    #[test]
    fn rejects_negative_order() {
        assert!(matches!(OperatorSpec::standard(-0.5), Err(Error::InvalidOrder { .. })));
        assert!(OperatorSpec::standard(0.7).unwrap().require_geodesic_order().is_err());
        assert!(OperatorSpec::standard(0.4).unwrap().require_diffeo_order().is_err());
        assert!(OperatorSpec::standard(0.5).unwrap().require_diffeo_order().is_ok());
    }
}
