//! End-to-end solver runs at moderate grid sizes: positivity emergence,
//! multiplicity via deflation, continuation boundedness, the diagonal
//! escape direction and the linking-trend probe.

use gpsep::analysis;
use gpsep::grid::{build_grid, Domain, Field, Grid};
use gpsep::model::{
    energy, hessian_apply, pair_h1_distance, pair_l2_inner, FunctionalVariant, SystemParams,
};
use gpsep::solver::{self, MinimaxSeed, SolveOptions};
use gpsep::StatePair;
use std::f64::consts::PI;

const VARIANT: FunctionalVariant = FunctionalVariant::Plain;

fn interval(n: usize) -> Grid {
    build_grid(Domain::interval(PI, n).unwrap())
}

fn solve_k(grid: &Grid, params: &SystemParams, k: usize) -> solver::SolveOutcome {
    let mut mix = vec![0.0; k];
    mix[k - 1] = 1.0;
    let amp = solver::ray_max_amplitude(grid, params, k, &mix, VARIANT).unwrap();
    let seed = MinimaxSeed::new(k, amp, &mix).unwrap();
    solver::solve_from_seed(grid, params, &seed, &SolveOptions::default(), VARIANT).unwrap()
}

#[test]
fn positivity_emergence_at_beta_50() {
    let grid = interval(129);
    let params = SystemParams::new(-1.0, -1.0, 50.0);
    let out = solve_k(&grid, &params, 2);
    assert!(out.residual <= 1e-9);
    assert!(out.energy > 0.0);
    assert!(out.state.u.iter().all(|&x| x > 0.0), "u must be positive everywhere");
    assert!(out.state.v.iter().all(|&x| x > 0.0), "v must be positive everywhere");
    let diff: Field = out.state.u.iter().zip(&out.state.v).map(|(a, b)| a - b).collect();
    assert!(grid.h1_norm(&diff).unwrap() > 1e-2);

    // Components are not ordered, and the cross identity vanishes.
    let above = out.state.u.iter().zip(&out.state.v).any(|(a, b)| a > b);
    let below = out.state.u.iter().zip(&out.state.v).any(|(a, b)| a < b);
    assert!(above && below, "components must not be ordered");
    let integrand: Field = out
        .state
        .u
        .iter()
        .zip(&out.state.v)
        .map(|(&u, &v)| u * v * (v * v - u * u))
        .collect();
    let cross = grid.integrate(&integrand).unwrap();
    let l2 = grid.l2_norm_sq(&out.state.u).unwrap() + grid.l2_norm_sq(&out.state.v).unwrap();
    assert!(cross.abs() <= 1e-8 * l2 * l2, "cross identity defect {cross:.3e}");

    // Newton tail is quadratic: r_{n+1} <= C r_n^2 over the last steps.
    let tail: Vec<f64> =
        out.newton_residuals.iter().cloned().filter(|r| *r < 1e-2).collect();
    assert!(tail.len() >= 2, "expected a resolved Newton tail, got {:?}", out.newton_residuals);
    for w in tail.windows(2) {
        assert!(w[1] <= 100.0 * w[0] * w[0], "not quadratic: {:?}", out.newton_residuals);
    }

    // The positivity guard accepts the state.
    assert!(analysis::positivity_certificate(&grid, &params, &out.state).unwrap());
}

#[test]
fn deflation_produces_distinct_positive_pairs() {
    let grid = interval(129);
    let params = SystemParams::new(-1.0, -1.0, 50.0);
    let opts = SolveOptions::default();
    let first = solve_k(&grid, &params, 2).state;

    // Deflate the k = 2 solution and search again from the k = 3 seed.
    let seed = MinimaxSeed::new(3, solver::ray_max_amplitude(&grid, &params, 3, &[0.0, 0.0, 1.0], VARIANT).unwrap(), &[0.0, 0.0, 1.0]).unwrap();
    let init = solver::minimax_init(&grid, &seed).unwrap();
    let mut stage = opts.clone();
    stage.grad_tol = opts.descent_tol;
    let desc = solver::descend(&grid, &params, &init, &stage, VARIANT).unwrap();
    let second =
        solver::deflated_solve(&grid, &params, std::slice::from_ref(&first), &desc.best, &opts, VARIANT)
            .unwrap();

    let dist = pair_h1_distance(&grid, &second, &first).unwrap()
        + pair_h1_distance(&grid, &second, &first.swapped()).unwrap();
    assert!(dist >= opts.deflation_shift, "deflated output too close: {dist:.3e}");
    assert!(second.u.iter().all(|&x| x > 0.0));
    assert!(second.v.iter().all(|&x| x > 0.0));
    let e1 = energy(&grid, &params, &first, VARIANT).unwrap();
    let e2 = energy(&grid, &params, &second, VARIANT).unwrap();
    assert!(e2 > e1, "second pair should sit at a higher level ({e1} vs {e2})");
}

#[test]
fn continuation_tracks_bounded_family() {
    let grid = interval(129);
    let params = SystemParams::new(-1.0, -1.0, 50.0);
    let opts = SolveOptions::default();
    let base = solve_k(&grid, &params, 2);
    let schedule = [50.0, 100.0, 316.22776601683796, 1000.0];
    let branch =
        solver::continue_in_beta(&grid, &params, &base.state, &schedule, &opts, VARIANT).unwrap();
    assert_eq!(branch.betas.len(), 4);
    assert!(branch.aborted.is_none());
    for d in &branch.diagnostics {
        assert!(d.residual <= opts.grad_tol);
    }
    // Uniform-boundedness probe: summed H1 norms vary by < 2.
    let sums: Vec<f64> = branch.diagnostics.iter().map(|d| d.h1_u + d.h1_v).collect();
    let lo = sums.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sums.iter().cloned().fold(0.0f64, f64::max);
    assert!(hi / lo < 2.0, "H1 sum ratio {}", hi / lo);
    // Segregation decreases along the branch.
    let segs: Vec<f64> = branch.diagnostics.iter().map(|d| d.segregation).collect();
    assert!(segs.windows(2).all(|w| w[1] < w[0]), "{segs:?}");
    assert!(analysis::index_change_warnings(&branch).is_empty());
    // Norm tracking mirrors the diagnostics.
    let rows = analysis::norm_tracking(&grid, &branch).unwrap();
    assert_eq!(rows.len(), 4);
    for (row, d) in rows.iter().zip(&branch.diagnostics) {
        assert!((row.h1_u - d.h1_u).abs() <= 1e-12);
    }
}

#[test]
fn diagonal_state_has_antisymmetric_escape_direction() {
    let grid = interval(129);
    let beta = 50.0;
    let (diag, e, _) = analysis::diagonal_solution_check(&grid, beta).unwrap();
    assert!(e < 0.0);
    let params = SystemParams::new(-1.0, -1.0, beta);
    let pairs = grid.dirichlet_eigenpairs(5).unwrap();
    let mut min_quad = f64::INFINITY;
    for p in &pairs {
        let dir = StatePair::new(p.vector.clone(), p.vector.iter().map(|x| -x).collect());
        let h = hessian_apply(&grid, &params, &diag, &dir, VARIANT).unwrap();
        let quad = pair_l2_inner(&grid, &h, &dir).unwrap();
        min_quad = min_quad.min(quad);
    }
    assert!(min_quad < 0.0, "no antisymmetric descent direction: {min_quad}");
}

#[test]
fn linking_probe_grows_along_tuned_radii() {
    let grid = build_grid(Domain::interval(PI, 128).unwrap());
    let params = SystemParams::with_truncation(30.0, 0.0, f64::INFINITY);
    // Radii tuned upward with k: the linking minimum must grow.
    let mut prev = f64::NEG_INFINITY;
    for (k, rho) in [(2usize, 5.0), (4, 10.0), (8, 20.0)] {
        let rep = solver::linking_probe(&grid, &params, k, rho, 200, 12345).unwrap();
        assert!(rep.min_energy > prev, "k={k}: {} !> {prev}", rep.min_energy);
        assert!(rep.min_energy > 0.0);
        prev = rep.min_energy;
    }
}
