//! Sampled fields on the periodic grid.
//!
//! A [`ScalarField`] carries one real per node. A [`TangentField`] carries an
//! `ℝᵈ` value per node and is stored as an `n × d` matrix, one column per
//! ambient component, so that scalar operators act on every component with a
//! single matrix product.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField(DVector<f64>);

impl ScalarField {
    pub fn new(values: DVector<f64>) -> Self {
        Self(values)
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(DVector::from_element(n, value))
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Self {
        Self(DVector::from_fn(n, |j, _| f(j)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.map(f))
    }

    pub fn component_mul(&self, other: &ScalarField) -> Self {
        Self(self.0.component_mul(&other.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn min(&self) -> f64 {
        self.0.min()
    }

    /// Cyclic shift: `out[j] = self[j + k mod n]`.
    pub fn rotate(&self, k: usize) -> Self {
        let n = self.len();
        Self::from_fn(n, |j| self.0[(j + k) % n])
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        ScalarField(&self.0 + &rhs.0)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        ScalarField(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        ScalarField(&self.0 * rhs)
    }
}

/// A vector field along a loop, `n` nodes by `d` ambient components.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField(DMatrix<f64>);

impl TangentField {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self(DMatrix::zeros(n, d))
    }

    pub fn from_fn(n: usize, d: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        Self(DMatrix::from_fn(n, d, f))
    }

    /// Builds a field from per-node vectors. All rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(Self(DMatrix::from_fn(n, d, |j, c| rows[j][c])))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|j| (0..self.d()).map(|c| self.0[(j, c)]).collect())
            .collect()
    }

    /// Repeats one scalar profile along a fixed direction.
    pub fn from_scalar(profile: &ScalarField, direction: &[f64]) -> Self {
        Self::from_fn(profile.len(), direction.len(), |j, c| {
            profile.values()[j] * direction[c]
        })
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField(self.0.column(c).into_owned())
    }

    pub fn node(&self, j: usize) -> Vec<f64> {
        self.0.row(j).iter().copied().collect()
    }

    /// Pointwise Euclidean inner product.
    pub fn dot(&self, other: &TangentField) -> ScalarField {
        ScalarField::from_fn(self.n(), |j| self.0.row(j).dot(&other.0.row(j)))
    }

    pub fn norms(&self) -> ScalarField {
        ScalarField::from_fn(self.n(), |j| self.0.row(j).norm())
    }

    /// Multiplies node `j` by `s[j]`.
    pub fn scale_rows(&self, s: &ScalarField) -> TangentField {
        let mut out = self.0.clone();
        for (j, mut row) in out.row_iter_mut().enumerate() {
            row *= s.values()[j];
        }
        TangentField(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Cyclic node shift: `out[j] = self[j + k mod n]`.
    pub fn rotate(&self, k: usize) -> Self {
        let n = self.n();
        Self::from_fn(n, self.d(), |j, c| self.0[((j + k) % n, c)])
    }

    /// Applies a fixed linear map of `ℝᵈ` at every node.
    pub fn transform(&self, linear: &DMatrix<f64>) -> Self {
        TangentField(&self.0 * linear.transpose())
    }
}

impl Add for &TangentField {
    type Output = TangentField;
    fn add(self, rhs: &TangentField) -> TangentField {
        TangentField(&self.0 + &rhs.0)
    }
}

impl Sub for &TangentField {
    type Output = TangentField;
    fn sub(self, rhs: &TangentField) -> TangentField {
        TangentField(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &TangentField {
    type Output = TangentField;
    fn mul(self, rhs: f64) -> TangentField {
        TangentField(&self.0 * rhs)
    }
}

impl Neg for &TangentField {
    type Output = TangentField;
    fn neg(self) -> TangentField {
        TangentField(-&self.0)
    }
}
