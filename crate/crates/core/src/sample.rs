//! Seeded random smooth fields for tests and the invariant suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::{ScalarField, TangentField};
use crate::geometry::ImmersedLoop;
use crate::grid::PeriodicGrid;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Trigonometric polynomial of degree `max_mode` whose mode-`ν` coefficients
/// are uniform in `±amplitude / (1 + ν)²`.
pub fn random_smooth_scalar<R: Rng>(grid: &PeriodicGrid, rng: &mut R, max_mode: usize, amplitude: f64) -> ScalarField {
    let coeffs: Vec<(f64, f64)> = (0..=max_mode)
        .map(|nu| {
            let scale = amplitude / ((1 + nu) * (1 + nu)) as f64;
            (rng.random_range(-scale..=scale), rng.random_range(-scale..=scale))
        })
        .collect();
    grid.sample(|t| {
        coeffs
            .iter()
            .enumerate()
            .map(|(nu, (a, b))| a * (nu as f64 * t).cos() + b * (nu as f64 * t).sin())
            .sum()
    })
}

pub fn random_smooth_field<R: Rng>(
    grid: &PeriodicGrid,
    d: usize,
    rng: &mut R,
    max_mode: usize,
    amplitude: f64,
) -> TangentField {
    let cols: Vec<ScalarField> = (0..d)
        .map(|_| random_smooth_scalar(grid, rng, max_mode, amplitude))
        .collect();
    TangentField::from_fn(grid.n(), d, |j, c| cols[c].values()[j])
}

/// Unit circle in the first two coordinates plus a random smooth
/// perturbation of size `amplitude`.
pub fn random_loop<R: Rng>(
    grid: &PeriodicGrid,
    d: usize,
    rng: &mut R,
    max_mode: usize,
    amplitude: f64,
) -> Result<ImmersedLoop> {
    let bump = random_smooth_field(grid, d, rng, max_mode, amplitude);
    let points = TangentField::from_fn(grid.n(), d, |j, c| {
        let t = grid.theta(j);
        let base = match c {
            0 => t.cos(),
            1 => t.sin(),
            _ => 0.0,
        };
        base + bump.matrix()[(j, c)]
    });
    ImmersedLoop::new(grid.clone(), points)
}
