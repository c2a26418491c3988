use sobgeo::epdiff::{
    diffeo_geodesic, h1_energy, lagrangian_vs_eulerian, CircleDiffeo, EulerianOptions, EulerianSolver,
};
use sobgeo::field::ScalarField;
use sobgeo::grid::PeriodicGrid;
use sobgeo::operator::OperatorSpec;

fn grid(n: usize) -> PeriodicGrid {
    PeriodicGrid::new(n).unwrap()
}

fn wave(g: &PeriodicGrid) -> ScalarField {
    g.sample(|t| 0.5 * t.sin() + 0.2 * (2.0 * t).cos() - 0.1 * (3.0 * t).sin())
}

fn solver(n: usize, p: f64) -> EulerianSolver {
    EulerianSolver::new(grid(n), OperatorSpec::standard(p).unwrap(), EulerianOptions::default()).unwrap()
}

fn drift(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|e| (e - values[0]).abs() / values[0])
        .fold(0.0, f64::max)
}

#[test]
fn eulerian_energy_is_conserved() {
    let n = 129;
    for p in [1.0, 1.5] {
        let s = solver(n, p);
        let states = s.integrate(&wave(s.grid()), 0.5, 1e-3).unwrap();
        let energies: Vec<f64> = states.iter().map(|st| s.energy(st)).collect();
        assert!(drift(&energies) <= 1e-7, "p={p}: {:e}", drift(&energies));
    }
}

#[test]
fn mean_momentum_is_conserved() {
    // ∫ m is invariant because ∂ is skew and commutes with the inertia operator
    let s = solver(65, 2.0);
    let states = s.integrate(&wave(s.grid()), 0.5, 1e-2).unwrap();
    let m0 = s.grid().quadrature(&states[0].m);
    for st in &states {
        assert!((s.grid().quadrature(&st.m) - m0).abs() <= 1e-12);
    }
}

#[test]
fn camassa_holm_energy_is_the_h1_norm() {
    let s = solver(65, 1.0);
    let states = s.integrate(&wave(s.grid()), 0.2, 1e-2).unwrap();
    for st in &states {
        let h1 = h1_energy(s.grid(), &st.u).unwrap();
        assert!((s.energy(st) - h1).abs() <= 1e-12 * h1);
    }
}

#[test]
fn refinement_against_fine_reference() {
    let coarse = solver(65, 1.0);
    let fine = solver(129, 1.0);
    let a = coarse.integrate(&wave(coarse.grid()), 0.5, 1e-2).unwrap();
    let b = fine.integrate(&wave(fine.grid()), 0.5, 1.25e-3).unwrap();
    let reference = fine.grid().interpolant(b.last().unwrap().u.as_slice()).unwrap();
    let got = &a.last().unwrap().u;
    let err = (0..65)
        .map(|j| (got.as_slice()[j] - reference.eval(coarse.grid().theta(j))).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err:e}");
}

#[test]
fn reversing_velocity_retraces_the_flow() {
    let s = solver(65, 1.5);
    let u0 = wave(s.grid());
    let forward = s.integrate(&u0, 0.4, 1e-2).unwrap();
    let back = s.integrate(&(&forward.last().unwrap().u * -1.0), 0.4, 1e-2).unwrap();
    let end = &back.last().unwrap().u * -1.0;
    assert!((&end - &u0).max_abs() <= 1e-8);
}

#[test]
fn lagrangian_geodesic_conserves_energy() {
    let g = grid(65);
    let traj = diffeo_geodesic(
        &CircleDiffeo::identity(g.clone()),
        &wave(&g),
        OperatorSpec::standard(1.5).unwrap(),
        0.5,
        1e-2,
    )
    .unwrap();
    assert!(traj.max_drift() <= 1e-6);
}

#[test]
fn solvers_agree_and_agreement_improves_with_step() {
    let g = grid(65);
    let spec = OperatorSpec::standard(1.0).unwrap();
    let u0 = wave(&g);
    let coarse = lagrangian_vs_eulerian(&u0, spec, 0.4, 2e-2).unwrap();
    let fine = lagrangian_vs_eulerian(&u0, spec, 0.4, 1e-2).unwrap();
    assert!(fine.discrepancy <= 1e-4);
    assert!(fine.discrepancy <= coarse.discrepancy.max(1e-10));
}
