//! Differential geometry of immersed loops `f: S¹ → ℝᵈ`.
//!
//! Everything is recomputed from the samples of `f` on demand. With
//! `σ = |∂_θ f|` the volume density, the arclength derivative is
//! `∂_s = σ⁻¹ ∂_θ`, the unit tangent is `v = ∂_s f` and the curvature vector is
//! the normal part of `∂_s ∂_s f`.

use nalgebra::DMatrix;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{ScalarField, TangentField};
use crate::grid::PeriodicGrid;

/// Default immersion floor, relative to the mean speed `|∂_θ f|`.
pub const DEFAULT_IMMERSION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ImmersedLoop {
    grid: PeriodicGrid,
    points: TangentField,
    floor: f64,
}

/// Geometric data of a loop bundled together.
#[derive(Debug, Clone)]
pub struct MetricData {
    /// Pull-back metric `g = |∂_θ f|²`.
    pub g: ScalarField,
    /// Volume density `|∂_θ f|`.
    pub sqrt_g: ScalarField,
    /// Unit tangent.
    pub v: TangentField,
    /// Curvature vector.
    pub h: TangentField,
}

impl ImmersedLoop {
    pub fn new(grid: PeriodicGrid, points: TangentField) -> Result<Self> {
        Self::with_floor(grid, points, DEFAULT_IMMERSION_FLOOR)
    }

    pub fn with_floor(grid: PeriodicGrid, points: TangentField, floor: f64) -> Result<Self> {
        grid.check_len(points.n())?;
        if points.d() < 2 {
            return Err(Error::InvalidParameter(format!("ambient dimension {} < 2", points.d())));
        }
        if !(floor >= 0.0) {
            return Err(Error::InvalidParameter(format!("immersion floor {floor}")));
        }
        let f = Self { grid, points, floor };
        f.check_immersion()?;
        Ok(f)
    }

    /// Samples `θ ↦ f(θ)` at the grid nodes.
    pub fn from_fn(grid: PeriodicGrid, d: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..grid.n()).map(|j| f(grid.theta(j))).collect();
        let points = TangentField::from_rows(&rows)?;
        if points.d() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: points.d(),
            });
        }
        Self::new(grid, points)
    }

    /// Planar circle of the given radius centred at the origin.
    pub fn circle(grid: PeriodicGrid, radius: f64) -> Result<Self> {
        Self::from_fn(grid, 2, |t| vec![radius * t.cos(), radius * t.sin()])
    }

    /// Planar ellipse `(a cos θ, b sin θ)`.
    pub fn ellipse(grid: PeriodicGrid, a: f64, b: f64) -> Result<Self> {
        Self::from_fn(grid, 2, |t| vec![a * t.cos(), b * t.sin()])
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn points(&self) -> &TangentField {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn d(&self) -> usize {
        self.points.d()
    }

    pub fn immersion_floor(&self) -> f64 {
        self.floor
    }

    /// A loop with the same grid and floor but new samples.
    pub fn with_points(&self, points: TangentField) -> Result<Self> {
        Self::with_floor(self.grid.clone(), points, self.floor)
    }

    /// `f + eps·m`, validated against the immersion floor.
    pub fn perturbed(&self, m: &TangentField, eps: f64) -> Result<Self> {
        self.check_field(m)?;
        self.with_points(&self.points + &(m * eps))
    }

    /// Cyclic reindexing `j ↦ j + k`, i.e. precomposition with a grid rotation.
    pub fn rotate(&self, k: usize) -> Self {
        Self {
            grid: self.grid.clone(),
            points: self.points.rotate(k),
            floor: self.floor,
        }
    }

    /// Applies a linear map of the ambient space to every sample.
    pub fn transform(&self, linear: &DMatrix<f64>) -> Result<Self> {
        self.with_points(self.points.transform(linear))
    }

    pub fn check_field(&self, h: &TangentField) -> Result<()> {
        self.grid.check_len(h.n())?;
        if h.d() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: h.d(),
            });
        }
        Ok(())
    }

    fn check_immersion(&self) -> Result<()> {
        let speed = self.volume_density();
        let mean = speed.values().mean();
        let threshold = self.floor * mean;
        if let Some(node) = (0..self.n()).find(|&j| !(speed.values()[j] > threshold)) {
            return Err(Error::ImmersionFloor {
                node,
                speed: speed.values()[node],
                floor: threshold,
            });
        }
        Ok(())
    }

    /// `∂_θ f`.
    pub fn velocity(&self) -> TangentField {
        TangentField::new(self.grid.diff_matrix() * self.points.matrix())
    }

    pub fn pullback_metric(&self) -> ScalarField {
        let ft = self.velocity();
        ft.dot(&ft)
    }

    pub fn volume_density(&self) -> ScalarField {
        self.velocity().norms()
    }

    /// Quadrature weights `σ_j · 2π/n` of the Riemannian measure.
    pub fn weights(&self) -> ScalarField {
        &self.volume_density() * self.grid.spacing()
    }

    pub fn length(&self) -> f64 {
        self.grid.quadrature(&self.volume_density())
    }

    pub fn unit_tangent(&self) -> TangentField {
        let ft = self.velocity();
        let inv = ft.norms().map(f64::recip);
        ft.scale_rows(&inv)
    }

    pub fn arclength_derivative(&self, h: &TangentField) -> Result<TangentField> {
        self.check_field(h)?;
        let inv = self.volume_density().map(f64::recip);
        Ok(TangentField::new(self.grid.diff_matrix() * h.matrix()).scale_rows(&inv))
    }

    /// Splits `h = coeff·∂_θ f + h^⊥` pointwise.
    pub fn project(&self, h: &TangentField) -> Result<(ScalarField, TangentField)> {
        self.check_field(h)?;
        let v = self.unit_tangent();
        let along = h.dot(&v);
        let normal = h - &v.scale_rows(&along);
        let coeff = along.component_mul(&self.volume_density().map(f64::recip));
        Ok((coeff, normal))
    }

    pub fn normal_part(&self, h: &TangentField) -> Result<TangentField> {
        Ok(self.project(h)?.1)
    }

    /// Curvature vector: normal part of `∂_s ∂_s f`.
    pub fn curvature(&self) -> TangentField {
        let v = self.unit_tangent();
        let dv = self
            .arclength_derivative(&v)
            .expect("unit tangent lives on the loop grid");
        let along = dv.dot(&v);
        &dv - &v.scale_rows(&along)
    }

    pub fn metric_data(&self) -> MetricData {
        let sqrt_g = self.volume_density();
        MetricData {
            g: sqrt_g.component_mul(&sqrt_g),
            sqrt_g,
            v: self.unit_tangent(),
            h: self.curvature(),
        }
    }

    /// First variation of the pull-back metric: `2⟨∂_θ m, ∂_θ f⟩`.
    pub fn metric_variation(&self, m: &TangentField) -> Result<ScalarField> {
        self.check_field(m)?;
        let dm = TangentField::new(self.grid.diff_matrix() * m.matrix());
        Ok(&dm.dot(&self.velocity()) * 2.0)
    }

    /// First variation of the volume density: `⟨∂_θ m, v⟩ = ⟨∂_s m, v⟩ σ`.
    pub fn volume_variation(&self, m: &TangentField) -> Result<ScalarField> {
        self.check_field(m)?;
        let dm = TangentField::new(self.grid.diff_matrix() * m.matrix());
        Ok(dm.dot(&self.unit_tangent()))
    }

    /// Centroid with respect to arclength.
    pub fn centroid(&self) -> Vec<f64> {
        let w = self.volume_density();
        let total = w.values().sum();
        (0..self.d())
            .map(|c| self.points.matrix().column(c).dot(w.values()) / total)
            .collect()
    }

    /// Squared `L²(vol)` norm of a field along this loop.
    pub fn l2_norm_sq(&self, h: &TangentField) -> Result<f64> {
        self.check_field(h)?;
        Ok(self.weights().values().dot(h.dot(h).values()))
    }
}

/// Perimeter of the ellipse `(a cos θ, b sin θ)` via the arithmetic-geometric
/// mean, used as an independent reference.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let (mut x, mut y) = (a, b);
    let mut sum = 0.5 * (a * a + b * b);
    let mut weight = 1.0;
    for _ in 0..60 {
        let c = 0.5 * (x - y);
        sum -= weight * c * c;
        weight *= 2.0;
        (x, y) = (0.5 * (x + y), (x * y).sqrt());
        if c.abs() <= 1e-17 * a.abs().max(b.abs()) {
            break;
        }
    }
    2.0 * PI * sum / x
}
