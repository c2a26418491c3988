//! Uniform periodic grid on the circle and its spectral toolkit.
//!
//! The grid has an odd number of nodes `n`, so every Fourier mode
//! `|ν| ≤ (n-1)/2` is resolved without a Nyquist mode. On such a grid the
//! spectral differentiation matrix is exactly antisymmetric, which is what
//! makes every operator assembled from it self-adjoint to rounding.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::{ScalarField, TangentField};

/// Smallest admissible grid size.
pub const MIN_NODES: usize = 9;

#[derive(Debug, Clone)]
pub struct PeriodicGrid {
    n: usize,
    diff: Arc<DMatrix<f64>>,
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_NODES || n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self {
            n,
            diff: Arc::new(differentiation_matrix(n)),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Node spacing `2π/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.spacing() * j as f64
    }

    pub fn nodes(&self) -> ScalarField {
        ScalarField::from_fn(self.n, |j| self.theta(j))
    }

    /// Highest resolved Fourier mode, `(n-1)/2`.
    pub fn max_mode(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Samples a function of θ at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::from_fn(self.n, |j| f(self.theta(j)))
    }

    /// Dense antisymmetric spectral differentiation matrix.
    pub fn diff_matrix(&self) -> &DMatrix<f64> {
        &self.diff
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// Spectral derivative `∂_θ u` via the dense operator.
    pub fn diff_theta<F: GridField>(&self, u: &F) -> Result<F> {
        self.check_len(u.len())?;
        Ok(u.left_mul(&self.diff))
    }

    /// Spectral derivative via an FFT round trip; agrees with
    /// [`diff_theta`](Self::diff_theta) to rounding.
    pub fn diff_theta_fft<F: GridField>(&self, u: &F) -> Result<F> {
        self.check_len(u.len())?;
        let n = self.n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let cols = u
            .columns()
            .into_iter()
            .map(|col| {
                let mut buf: Vec<Complex<f64>> = col.iter().map(|&x| Complex::new(x, 0.0)).collect();
                fwd.process(&mut buf);
                for (k, z) in buf.iter_mut().enumerate() {
                    *z *= Complex::new(0.0, signed_mode(k, n) as f64);
                }
                inv.process(&mut buf);
                buf.iter().map(|z| z.re / n as f64).collect()
            })
            .collect();
        Ok(F::from_columns(n, cols))
    }

    /// Rectangle rule `(2π/n) Σ u_j`.
    pub fn quadrature(&self, u: &ScalarField) -> f64 {
        self.spacing() * u.values().sum()
    }

    /// Normalized Fourier coefficients `û_ν = n⁻¹ Σ_j u_j e^{-iνθ_j}` in FFT
    /// order (index `k` holds mode [`signed_mode`]`(k, n)`).
    pub fn fourier_coefficients(&self, values: &[f64]) -> Vec<Complex<f64>> {
        let n = self.n;
        let mut buf: Vec<Complex<f64>> = values.iter().map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
        buf
    }

    /// Fourier energy `2π Σ_{|ν| ≥ cutoff} |û_ν|²`, summed over components.
    ///
    /// With this normalization `fourier_tail_energy(u, 0)` equals the
    /// squared `L²(dθ)` norm of `u` (Parseval).
    pub fn fourier_tail_energy<F: GridField>(&self, u: &F, cutoff: usize) -> Result<f64> {
        self.check_len(u.len())?;
        let n = self.n;
        let total = u
            .columns()
            .iter()
            .map(|col| {
                self.fourier_coefficients(col)
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| signed_mode(*k, n).unsigned_abs() as usize >= cutoff)
                    .map(|(_, z)| z.norm_sqr())
                    .sum::<f64>()
            })
            .sum::<f64>();
        Ok(2.0 * PI * total)
    }

    /// Band-limited interpolant of one column of samples.
    pub fn interpolant(&self, values: &[f64]) -> Result<TrigInterpolant> {
        self.check_len(values.len())?;
        Ok(TrigInterpolant::new(self.fourier_coefficients(values)))
    }

    /// Evaluates the trigonometric interpolant of `u` at the angles `phi`.
    ///
    /// `phi` holds the values `φ(θ_j)` of an increasing degree-one circle map.
    /// When `φ` is a rotation by a whole number of nodes the result is an
    /// exact cyclic shift.
    pub fn resample<F: GridField>(&self, u: &F, phi: &ScalarField) -> Result<F> {
        self.check_len(u.len())?;
        self.check_len(phi.len())?;
        let displacement = phi - &self.nodes();
        let slope = self.diff_theta(&displacement)?;
        if let Some(node) = (0..self.n).find(|&j| 1.0 + slope.values()[j] <= 0.0) {
            return Err(Error::NotMonotone {
                node,
                derivative: 1.0 + slope.values()[node],
            });
        }
        if let Some(k) = self.grid_rotation(&displacement) {
            return Ok(u.rotate(k));
        }
        let cols = u
            .columns()
            .iter()
            .map(|col| {
                let interp = TrigInterpolant::new(self.fourier_coefficients(col));
                phi.as_slice().iter().map(|&x| interp.eval(x)).collect()
            })
            .collect();
        Ok(F::from_columns(self.n, cols))
    }

    /// Returns `k` if the displacement is a constant multiple `2πk/n`.
    fn grid_rotation(&self, displacement: &ScalarField) -> Option<usize> {
        let h = self.spacing();
        let first = displacement.values()[0];
        let steps = (first / h).round();
        let tol = 1e-13 * (1.0 + first.abs());
        let uniform = displacement.as_slice().iter().all(|&x| (x - steps * h).abs() <= tol);
        uniform.then(|| (steps as i64).rem_euclid(self.n as i64) as usize)
    }
}

/// Mode number of FFT index `k` on an `n`-point grid (odd `n`).
pub fn signed_mode(k: usize, n: usize) -> i64 {
    if k <= (n - 1) / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Evaluates `Σ_ν û_ν e^{iνx}` for a real band-limited signal.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    coeffs: Vec<Complex<f64>>,
}

impl TrigInterpolant {
    fn new(coeffs: Vec<Complex<f64>>) -> Self {
        Self { coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.coeffs.len();
        let step = Complex::from_polar(1.0, x);
        let mut phase = step;
        let mut acc = self.coeffs[0].re;
        for nu in 1..=(n - 1) / 2 {
            acc += 2.0 * (self.coeffs[nu] * phase).re;
            phase *= step;
        }
        acc
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let n = self.coeffs.len();
        let mut acc = 0.0;
        for nu in 1..=(n - 1) / 2 {
            let z = self.coeffs[nu] * Complex::new(0.0, nu as f64) * Complex::from_polar(1.0, nu as f64 * x);
            acc += 2.0 * z.re;
        }
        acc
    }
}

/// `D_jk = ½ (-1)^{j-k} csc((j-k)h/2)` for odd `n`, built so that
/// `D_kj = -D_jk` holds bit for bit.
fn differentiation_matrix(n: usize) -> DMatrix<f64> {
    let h = 2.0 * PI / n as f64;
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..j {
            let m = j - k;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let entry = 0.5 * sign / (0.5 * m as f64 * h).sin();
            d[(j, k)] = entry;
            d[(k, j)] = -entry;
        }
    }
    d
}

/// Fields that live on a grid: one or several columns of nodal samples.
pub trait GridField: Sized {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn left_mul(&self, op: &DMatrix<f64>) -> Self;
    fn columns(&self) -> Vec<Vec<f64>>;
    fn from_columns(n: usize, cols: Vec<Vec<f64>>) -> Self;
    fn rotate(&self, k: usize) -> Self;
}

impl GridField for ScalarField {
    fn len(&self) -> usize {
        ScalarField::len(self)
    }

    fn left_mul(&self, op: &DMatrix<f64>) -> Self {
        ScalarField::new(op * self.values())
    }

    fn columns(&self) -> Vec<Vec<f64>> {
        vec![self.as_slice().to_vec()]
    }

    fn from_columns(n: usize, mut cols: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(cols.len(), 1);
        ScalarField::new(DVector::from_vec(cols.pop().unwrap_or_else(|| vec![0.0; n])))
    }

    fn rotate(&self, k: usize) -> Self {
        ScalarField::rotate(self, k)
    }
}

impl GridField for TangentField {
    fn len(&self) -> usize {
        self.n()
    }

    fn left_mul(&self, op: &DMatrix<f64>) -> Self {
        TangentField::new(op * self.matrix())
    }

    fn columns(&self) -> Vec<Vec<f64>> {
        self.matrix()
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    }

    fn from_columns(n: usize, cols: Vec<Vec<f64>>) -> Self {
        TangentField::from_fn(n, cols.len(), |j, c| cols[c][j])
    }

    fn rotate(&self, k: usize) -> Self {
        TangentField::rotate(self, k)
    }
}
