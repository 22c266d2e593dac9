//! The coupled cubic model: system parameters, the truncated nonlinearity
//! and its antiderivative, and energy / gradient / Hessian evaluation.
//!
//! Two functional variants are supported. `Plain` is the full energy
//!
//!   E(u,v) = 1/2 int(|grad u|^2 + |grad v|^2 + lambda u^2 + mu v^2)
//!            - 1/4 int(u^4 + v^4) + beta/2 int u^2 v^2,
//!
//! whose critical points solve -Delta u + lambda u = u^3 - beta u v^2 and
//! the analogous equation in v. `Truncated` is the positive-part variant
//! normalized to lambda = mu = -1,
//!
//!   E(u,v) = J(u) + J(v) + beta/2 int u^2 v^2,
//!   J(u)   = 1/2 ||u||^2 - int F(u+) - 1/4 int (u+)^4,
//!
//! where F is the antiderivative of the truncated slope function f: odd,
//! s^(1+eps) on [0,1], (1+eps)s - eps on [1,R], and 2 sqrt(R) sqrt(s) - R
//! beyond R. All integrals use the grid quadrature, and the discrete
//! gradient is the strong-form residual field, so converged states satisfy
//! the discrete equations nodewise.

use crate::error::Result;
use crate::grid::{Field, Grid};

/// Coefficients of the system plus truncation knobs.
///
/// `eps = 0` reduces the truncated slope to the identity on [0,1];
/// `r_trunc = f64::INFINITY` disables the outer truncation branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub lambda: f64,
    pub mu: f64,
    pub beta: f64,
    pub eps: f64,
    pub r_trunc: f64,
}

impl SystemParams {
    /// Plain-variant parameters with truncation disabled.
    pub fn new(lambda: f64, mu: f64, beta: f64) -> Self {
        SystemParams { lambda, mu, beta, eps: 0.0, r_trunc: f64::INFINITY }
    }

    pub fn with_truncation(beta: f64, eps: f64, r_trunc: f64) -> Self {
        SystemParams { lambda: -1.0, mu: -1.0, beta, eps, r_trunc }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps < 0.0 {
            return Err(crate::error::Error::Config(format!(
                "truncation eps must be >= 0, got {}",
                self.eps
            )));
        }
        if !(self.r_trunc > 1.0) {
            return Err(crate::error::Error::Config(format!(
                "truncation R must exceed 1 (or be infinite), got {}",
                self.r_trunc
            )));
        }
        Ok(())
    }
}

/// Which energy functional is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalVariant {
    Plain,
    Truncated,
}

/// Metric in which the gradient field is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMetric {
    /// Strong-form residual (the L2 representation).
    L2,
    /// Sobolev representation: Poisson solve applied to the L2 gradient.
    H1,
}

/// The unknown of the system: a pair of fields on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub u: Field,
    pub v: Field,
}

impl StatePair {
    pub fn new(u: Field, v: Field) -> Self {
        StatePair { u, v }
    }

    pub fn zeros(grid: &Grid) -> Self {
        StatePair { u: grid.zero_field(), v: grid.zero_field() }
    }

    /// The involution sigma(u,v) = (v,u).
    pub fn swapped(&self) -> Self {
        StatePair { u: self.v.clone(), v: self.u.clone() }
    }
}

/// The truncated slope function f_{eps,R}: odd, s^(1+eps) on [0,1],
/// (1+eps)s - eps on [1,R], 2 sqrt(R s) - R beyond R. |f'| <= 2 a.e.
pub fn truncation(s: f64, eps: f64, r: f64) -> f64 {
    let t = s.abs();
    let value = if t <= 1.0 {
        t.powf(1.0 + eps)
    } else if t <= r {
        (1.0 + eps) * t - eps
    } else {
        2.0 * r.sqrt() * t.sqrt() - r
    };
    value.copysign(s)
}

/// Derivative of [`truncation`] where it exists; at the branch point s = R
/// the outer (unit) slope is used.
pub fn truncation_slope(s: f64, eps: f64, r: f64) -> f64 {
    let t = s.abs();
    if t <= 1.0 {
        if eps == 0.0 {
            1.0
        } else {
            (1.0 + eps) * t.powf(eps)
        }
    } else if t < r {
        1.0 + eps
    } else {
        (r / t).sqrt()
    }
}

/// Antiderivative F(s) = int_0^s f(xi) d xi of [`truncation`]; even,
/// piecewise closed form, F(0) = 0.
pub fn truncation_integral(s: f64, eps: f64, r: f64) -> f64 {
    let t = s.abs();
    let inner = |t: f64| t.powf(2.0 + eps) / (2.0 + eps);
    let middle = |t: f64| inner(1.0) + (1.0 + eps) * (t * t - 1.0) / 2.0 - eps * (t - 1.0);
    if t <= 1.0 {
        inner(t)
    } else if t <= r {
        middle(t)
    } else {
        middle(r) + 4.0 / 3.0 * r.sqrt() * (t.powf(1.5) - r.powf(1.5)) - r * (t - r)
    }
}

/// Positive and negative parts (u+, u-) with u = u+ - u-.
pub fn positive_negative_parts(f: &Field) -> (Field, Field) {
    let plus: Field = f.iter().map(|&v| v.max(0.0)).collect();
    let minus: Field = f.iter().map(|&v| (-v).max(0.0)).collect();
    (plus, minus)
}

fn positive_part(f: &Field) -> Field {
    f.iter().map(|&v| v.max(0.0)).collect()
}

/// Energy of a state under the chosen variant.
pub fn energy(
    grid: &Grid,
    params: &SystemParams,
    state: &StatePair,
    variant: FunctionalVariant,
) -> Result<f64> {
    let coupling: Field = state
        .u
        .iter()
        .zip(&state.v)
        .map(|(&a, &b)| (a * a) * (b * b))
        .collect();
    let overlap = grid.integrate(&coupling)?;
    match variant {
        FunctionalVariant::Plain => {
            let h1 = grid.h1_seminorm_sq(&state.u)? + grid.h1_seminorm_sq(&state.v)?;
            let u2 = grid.l2_norm_sq(&state.u)?;
            let v2 = grid.l2_norm_sq(&state.v)?;
            let quartic: Field = state
                .u
                .iter()
                .zip(&state.v)
                .map(|(&a, &b)| a.powi(4) + b.powi(4))
                .collect();
            let p4 = grid.integrate(&quartic)?;
            Ok(0.5 * h1 + 0.5 * (params.lambda * u2 + params.mu * v2) - 0.25 * p4
                + 0.5 * params.beta * overlap)
        }
        FunctionalVariant::Truncated => {
            let single = |f: &Field| -> Result<f64> {
                let plus = positive_part(f);
                let big_f: Field = plus
                    .iter()
                    .map(|&s| truncation_integral(s, params.eps, params.r_trunc))
                    .collect();
                let quartic: Field = plus.iter().map(|&s| s.powi(4)).collect();
                Ok(0.5 * grid.h1_seminorm_sq(f)?
                    - grid.integrate(&big_f)?
                    - 0.25 * grid.integrate(&quartic)?)
            };
            Ok(single(&state.u)? + single(&state.v)? + 0.5 * params.beta * overlap)
        }
    }
}

/// Gradient of the energy as a field pair.
///
/// In the L2 metric this is the strong-form residual,
/// (-Delta u + lambda u - u^3 + beta u v^2, ...) for the plain variant and
/// (-Delta u - f(u+) - (u+)^3 + beta u v^2, ...) for the truncated one.
/// In the H1 metric each component is pushed through the Poisson solve.
pub fn gradient(
    grid: &Grid,
    params: &SystemParams,
    state: &StatePair,
    variant: FunctionalVariant,
    metric: GradientMetric,
) -> Result<StatePair> {
    let lap_u = grid.apply_neg_laplacian(&state.u)?;
    let lap_v = grid.apply_neg_laplacian(&state.v)?;
    let n = grid.num_nodes();
    let mut gu = vec![0.0; n];
    let mut gv = vec![0.0; n];
    match variant {
        FunctionalVariant::Plain => {
            for i in 0..n {
                let (u, v) = (state.u[i], state.v[i]);
                gu[i] = lap_u[i] + params.lambda * u - u * u * u + params.beta * u * v * v;
                gv[i] = lap_v[i] + params.mu * v - v * v * v + params.beta * v * u * u;
            }
        }
        FunctionalVariant::Truncated => {
            for i in 0..n {
                let (u, v) = (state.u[i], state.v[i]);
                let (up, vp) = (u.max(0.0), v.max(0.0));
                gu[i] = lap_u[i] - truncation(up, params.eps, params.r_trunc) - up.powi(3)
                    + params.beta * u * v * v;
                gv[i] = lap_v[i] - truncation(vp, params.eps, params.r_trunc) - vp.powi(3)
                    + params.beta * v * u * u;
            }
        }
    }
    match metric {
        GradientMetric::L2 => Ok(StatePair::new(gu, gv)),
        GradientMetric::H1 => {
            Ok(StatePair::new(grid.solve_poisson(&gu)?, grid.solve_poisson(&gv)?))
        }
    }
}

/// Apply the second variation (Hessian) at `state` to a direction pair:
/// phi -> -Delta phi + lambda phi - 3u^2 phi + beta (v^2 phi + 2uv psi)
/// and the symmetric counterpart in psi. The truncated variant replaces
/// lambda phi by -f'(u+) 1_{u>0} phi and -3u^2 by -3(u+)^2.
pub fn hessian_apply(
    grid: &Grid,
    params: &SystemParams,
    state: &StatePair,
    dir: &StatePair,
    variant: FunctionalVariant,
) -> Result<StatePair> {
    let lap_p = grid.apply_neg_laplacian(&dir.u)?;
    let lap_q = grid.apply_neg_laplacian(&dir.v)?;
    let n = grid.num_nodes();
    let mut hu = vec![0.0; n];
    let mut hv = vec![0.0; n];
    for i in 0..n {
        let (u, v) = (state.u[i], state.v[i]);
        let (p, q) = (dir.u[i], dir.v[i]);
        let (lin_u, lin_v, cub_u, cub_v) = match variant {
            FunctionalVariant::Plain => (params.lambda, params.mu, u * u, v * v),
            FunctionalVariant::Truncated => {
                let du = if u > 0.0 {
                    -truncation_slope(u, params.eps, params.r_trunc)
                } else {
                    0.0
                };
                let dv = if v > 0.0 {
                    -truncation_slope(v, params.eps, params.r_trunc)
                } else {
                    0.0
                };
                (du, dv, u.max(0.0).powi(2), v.max(0.0).powi(2))
            }
        };
        hu[i] = lap_p[i] + lin_u * p - 3.0 * cub_u * p + params.beta * (v * v * p + 2.0 * u * v * q);
        hv[i] = lap_q[i] + lin_v * q - 3.0 * cub_v * q + params.beta * (u * u * q + 2.0 * u * v * p);
    }
    Ok(StatePair::new(hu, hv))
}

/// Dense 2N x 2N matrix of the Hessian operator (the Jacobian of the
/// strong-form residual). Block layout [u; v] with the stencil on both
/// diagonal blocks and the coupling 2 beta u v on the off-diagonal ones.
pub(crate) fn hessian_matrix(
    grid: &Grid,
    params: &SystemParams,
    state: &StatePair,
    variant: FunctionalVariant,
) -> Result<nalgebra::DMatrix<f64>> {
    let n = grid.num_nodes();
    if state.u.len() != n || state.v.len() != n {
        return Err(crate::error::Error::Dimension { expected: n, got: state.u.len() });
    }
    let k = grid.neg_laplacian_matrix();
    let mut h = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&k);
    h.view_mut((n, n), (n, n)).copy_from(&k);
    for i in 0..n {
        let (u, v) = (state.u[i], state.v[i]);
        let (lin_u, lin_v, cub_u, cub_v) = match variant {
            FunctionalVariant::Plain => (params.lambda, params.mu, u * u, v * v),
            FunctionalVariant::Truncated => {
                let du = if u > 0.0 {
                    -truncation_slope(u, params.eps, params.r_trunc)
                } else {
                    0.0
                };
                let dv = if v > 0.0 {
                    -truncation_slope(v, params.eps, params.r_trunc)
                } else {
                    0.0
                };
                (du, dv, u.max(0.0).powi(2), v.max(0.0).powi(2))
            }
        };
        h[(i, i)] += lin_u - 3.0 * cub_u + params.beta * v * v;
        h[(n + i, n + i)] += lin_v - 3.0 * cub_v + params.beta * u * u;
        let cross = 2.0 * params.beta * u * v;
        h[(i, n + i)] = cross;
        h[(n + i, i)] = cross;
    }
    Ok(h)
}

/// Weighted L2 norm of the L2 gradient pair; zero exactly at discrete
/// critical points. Used as the convergence criterion everywhere.
pub fn residual_norm(
    grid: &Grid,
    params: &SystemParams,
    state: &StatePair,
    variant: FunctionalVariant,
) -> Result<f64> {
    let g = gradient(grid, params, state, variant, GradientMetric::L2)?;
    Ok((grid.l2_norm_sq(&g.u)? + grid.l2_norm_sq(&g.v)?).sqrt())
}

/// Weighted L2 inner product of two state pairs.
pub fn pair_l2_inner(grid: &Grid, a: &StatePair, b: &StatePair) -> Result<f64> {
    Ok(grid.l2_inner(&a.u, &b.u)? + grid.l2_inner(&a.v, &b.v)?)
}

/// Squared H1 seminorm of a pair.
pub fn pair_h1_sq(grid: &Grid, a: &StatePair) -> Result<f64> {
    Ok(grid.h1_seminorm_sq(&a.u)? + grid.h1_seminorm_sq(&a.v)?)
}

/// H1 distance between two pairs.
pub fn pair_h1_distance(grid: &Grid, a: &StatePair, b: &StatePair) -> Result<f64> {
    let du: Field = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
    let dv: Field = a.v.iter().zip(&b.v).map(|(x, y)| x - y).collect();
    Ok((grid.h1_seminorm_sq(&du)? + grid.h1_seminorm_sq(&dv)?).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid_1d(n: usize) -> Grid {
        build_grid(Domain::interval(PI, n).unwrap())
    }

    fn random_state(grid: &Grid, seed: u64, amp: f64) -> StatePair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.num_nodes();
        StatePair::new(
            (0..n).map(|_| amp * (rng.gen::<f64>() * 2.0 - 1.0)).collect(),
            (0..n).map(|_| amp * (rng.gen::<f64>() * 2.0 - 1.0)).collect(),
        )
    }

    fn axpy(state: &StatePair, t: f64, dir: &StatePair) -> StatePair {
        StatePair::new(
            state.u.iter().zip(&dir.u).map(|(a, b)| a + t * b).collect(),
            state.v.iter().zip(&dir.v).map(|(a, b)| a + t * b).collect(),
        )
    }

    #[test]
    fn truncation_branch_values() {
        for eps in [0.0, 0.1, 0.5] {
            for r in [2.0, 10.0, f64::INFINITY] {
                assert_relative_eq!(truncation(1.0, eps, r), 1.0, max_relative = 1e-15);
            }
        }
        assert_relative_eq!(truncation(0.5, 0.2, f64::INFINITY), 0.5f64.powf(1.2), max_relative = 1e-15);
        let r = 3.0;
        assert_relative_eq!(truncation(4.0 * r, 0.0, r), 3.0 * r, max_relative = 1e-14);
        assert_relative_eq!(truncation(-1.0, 0.3, 5.0), -1.0, max_relative = 1e-15);
    }

    #[test]
    fn truncation_is_odd_and_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // eps and R combinations actually used by the solver paths: either
        // eps = 0 or R = infinity, where f is continuous everywhere.
        let cases = [(0.0, 4.0), (0.0, f64::INFINITY), (0.1, f64::INFINITY), (0.5, f64::INFINITY)];
        for (eps, r) in cases {
            for _ in 0..10_000 {
                let s = 20.0 * (rng.gen::<f64>() - 0.5);
                let t = 20.0 * (rng.gen::<f64>() - 0.5);
                assert_relative_eq!(truncation(-s, eps, r), -truncation(s, eps, r), epsilon = 1e-14);
                let df = (truncation(s, eps, r) - truncation(t, eps, r)).abs();
                assert!(df <= 2.0 * (s - t).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn truncation_integral_examples() {
        assert_relative_eq!(truncation_integral(1.0, 0.0, 10.0), 0.5, max_relative = 1e-15);
        for s in [0.3, 0.9] {
            let eps = 0.25;
            assert_relative_eq!(
                truncation_integral(s, eps, 10.0),
                s.powf(2.0 + eps) / (2.0 + eps),
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn truncation_integral_is_even_and_bounded_by_s_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (eps, r) in [(0.0, 2.5), (0.2, f64::INFINITY), (0.0, f64::INFINITY), (0.7, 40.0)] {
            for _ in 0..2000 {
                let s = 30.0 * (rng.gen::<f64>() - 0.5);
                let f = truncation_integral(s, eps, r);
                assert_relative_eq!(truncation_integral(-s, eps, r), f, epsilon = 1e-14);
                assert!(f >= 0.0);
                assert!(f <= s * s + 1e-12, "F({s}) = {f} exceeds s^2");
            }
        }
        assert_eq!(truncation_integral(0.0, 0.3, 5.0), 0.0);
    }

    #[test]
    fn truncation_integral_derivative_matches_slope_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (eps, r) in [(0.0, 3.0), (0.15, 6.0), (0.3, f64::INFINITY)] {
            for _ in 0..20 {
                let s = 8.0 * (rng.gen::<f64>() - 0.5);
                // Stay away from the branch points where F' has kinks.
                if (s.abs() - 1.0).abs() < 0.05 || (s.abs() - r).abs() < 0.05 || s.abs() < 0.05 {
                    continue;
                }
                let t = 1e-5;
                let fd = (truncation_integral(s + t, eps, r) - truncation_integral(s - t, eps, r))
                    / (2.0 * t);
                assert_relative_eq!(fd, truncation(s, eps, r), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn energy_of_zero_state_is_zero() {
        let g = grid_1d(16);
        let p = SystemParams::new(-1.0, -1.0, 50.0);
        let z = StatePair::zeros(&g);
        assert_eq!(energy(&g, &p, &z, FunctionalVariant::Plain).unwrap(), 0.0);
        assert_eq!(energy(&g, &p, &z, FunctionalVariant::Truncated).unwrap(), 0.0);
    }

    #[test]
    fn energy_is_swap_symmetric_when_lambda_equals_mu() {
        let g = grid_1d(24);
        let p = SystemParams::new(-1.0, -1.0, 7.5);
        for seed in 0..50 {
            let s = random_state(&g, seed, 1.5);
            let e1 = energy(&g, &p, &s, FunctionalVariant::Plain).unwrap();
            let e2 = energy(&g, &p, &s.swapped(), FunctionalVariant::Plain).unwrap();
            assert!((e1 - e2).abs() <= 1e-15 * e1.abs().max(1.0));
        }
    }

    #[test]
    fn truncated_energy_approaches_plain_as_eps_vanishes() {
        let g = grid_1d(32);
        // Nonnegative state with max <= 1.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = g.num_nodes();
        let state = StatePair::new(
            (0..n).map(|_| rng.gen::<f64>()).collect(),
            (0..n).map(|_| rng.gen::<f64>()).collect(),
        );
        let plain = SystemParams::new(-1.0, -1.0, 4.0);
        let e_plain = energy(&g, &plain, &state, FunctionalVariant::Plain).unwrap();
        let mut prev_gap = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let p = SystemParams::with_truncation(4.0, eps, f64::INFINITY);
            let e_trunc = energy(&g, &p, &state, FunctionalVariant::Truncated).unwrap();
            let gap = (e_trunc - e_plain).abs();
            assert!(gap <= 2.0 * eps, "gap {gap} at eps {eps}");
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        // eps = 0, R = infinity on a state below 1 reproduces plain exactly.
        let p0 = SystemParams::with_truncation(4.0, 0.0, f64::INFINITY);
        let e0 = energy(&g, &p0, &state, FunctionalVariant::Truncated).unwrap();
        assert_relative_eq!(e0, e_plain, max_relative = 1e-13);
    }

    #[test]
    fn gradient_of_zero_state_is_zero() {
        let g = grid_1d(12);
        let p = SystemParams::new(-1.0, -1.0, 50.0);
        let z = StatePair::zeros(&g);
        for variant in [FunctionalVariant::Plain, FunctionalVariant::Truncated] {
            let gr = gradient(&g, &p, &z, variant, GradientMetric::L2).unwrap();
            assert!(gr.u.iter().chain(&gr.v).all(|&x| x == 0.0));
        }
        assert_eq!(residual_norm(&g, &p, &z, FunctionalVariant::Plain).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = grid_1d(20);
        let cases = [
            (SystemParams::new(-1.0, -1.0, 50.0), FunctionalVariant::Plain),
            (SystemParams::new(2.0, -0.5, -3.0), FunctionalVariant::Plain),
            (SystemParams::with_truncation(30.0, 0.1, f64::INFINITY), FunctionalVariant::Truncated),
            (SystemParams::with_truncation(30.0, 0.0, 1.5), FunctionalVariant::Truncated),
        ];
        for (params, variant) in cases {
            for seed in 0..4 {
                let state = random_state(&g, 40 + seed, 1.9);
                let dir = random_state(&g, 140 + seed, 1.0);
                let grad = gradient(&g, &params, &state, variant, GradientMetric::L2).unwrap();
                let slope = pair_l2_inner(&g, &grad, &dir).unwrap();
                let t = 1e-4;
                let ep = energy(&g, &params, &axpy(&state, t, &dir), variant).unwrap();
                let em = energy(&g, &params, &axpy(&state, -t, &dir), variant).unwrap();
                let fd = (ep - em) / (2.0 * t);
                assert_relative_eq!(slope, fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn h1_gradient_is_poisson_of_l2_gradient() {
        let g = grid_1d(18);
        let p = SystemParams::new(-1.0, 0.5, 10.0);
        let s = random_state(&g, 9, 1.0);
        let gl2 = gradient(&g, &p, &s, FunctionalVariant::Plain, GradientMetric::L2).unwrap();
        let gh1 = gradient(&g, &p, &s, FunctionalVariant::Plain, GradientMetric::H1).unwrap();
        let back = g.apply_neg_laplacian(&gh1.u).unwrap();
        for (a, b) in back.iter().zip(&gl2.u) {
            assert_relative_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn gradient_commutes_with_swap() {
        let g = grid_1d(16);
        let p = SystemParams::new(-1.0, -1.0, 25.0);
        let s = random_state(&g, 77, 1.4);
        let gs = gradient(&g, &p, &s, FunctionalVariant::Plain, GradientMetric::L2).unwrap();
        let sg = gradient(&g, &p, &s.swapped(), FunctionalVariant::Plain, GradientMetric::L2)
            .unwrap();
        assert_eq!(gs.u, sg.v);
        assert_eq!(gs.v, sg.u);
    }

    #[test]
    fn hessian_commutes_with_swap() {
        let g = grid_1d(16);
        let p = SystemParams::new(-1.0, -1.0, 25.0);
        let s = random_state(&g, 78, 1.4);
        let d = random_state(&g, 79, 1.0);
        let hs = hessian_apply(&g, &p, &s, &d, FunctionalVariant::Plain).unwrap();
        let sh =
            hessian_apply(&g, &p, &s.swapped(), &d.swapped(), FunctionalVariant::Plain).unwrap();
        assert_eq!(hs.u, sh.v);
        assert_eq!(hs.v, sh.u);
    }

    #[test]
    fn h1_gradient_matches_central_differences_in_h1_pairing() {
        let g = grid_1d(24);
        let p = SystemParams::new(-1.0, -1.0, 50.0);
        let state = random_state(&g, 81, 1.5);
        let dir = random_state(&g, 82, 1.0);
        let gh1 = gradient(&g, &p, &state, FunctionalVariant::Plain, GradientMetric::H1).unwrap();
        let ku = g.apply_neg_laplacian(&gh1.u).unwrap();
        let kv = g.apply_neg_laplacian(&gh1.v).unwrap();
        let slope = g.l2_inner(&ku, &dir.u).unwrap() + g.l2_inner(&kv, &dir.v).unwrap();
        let t = 1e-4;
        let ep = energy(&g, &p, &axpy(&state, t, &dir), FunctionalVariant::Plain).unwrap();
        let em = energy(&g, &p, &axpy(&state, -t, &dir), FunctionalVariant::Plain).unwrap();
        let fd = (ep - em) / (2.0 * t);
        assert_relative_eq!(slope, fd, max_relative = 1e-6);
    }

    #[test]
    fn hessian_quadratic_form_at_zero_state() {
        let g = grid_1d(64);
        let p = SystemParams::new(-1.0, -1.0, 50.0);
        let zero = StatePair::zeros(&g);
        let pairs = g.dirichlet_eigenpairs(3).unwrap();
        for (j, pair) in pairs.iter().enumerate() {
            let dir = StatePair::new(pair.vector.clone(), g.zero_field());
            let h = hessian_apply(&g, &p, &zero, &dir, FunctionalVariant::Plain).unwrap();
            let quad = pair_l2_inner(&g, &h, &dir).unwrap();
            let expected = stencil_eig(j + 1, 64) - 1.0;
            assert_relative_eq!(quad, expected, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    fn stencil_eig(j: usize, n: usize) -> f64 {
        crate::grid::stencil_eigenvalue_1d(PI, n, j)
    }

    #[test]
    fn hessian_is_symmetric() {
        let g = grid_1d(14);
        let p = SystemParams::new(-2.0, 1.0, 12.0);
        let state = random_state(&g, 21, 1.2);
        for variant in [FunctionalVariant::Plain, FunctionalVariant::Truncated] {
            for seed in 0..5 {
                let a = random_state(&g, 300 + seed, 1.0);
                let b = random_state(&g, 400 + seed, 1.0);
                let ha = hessian_apply(&g, &p, &state, &a, variant).unwrap();
                let hb = hessian_apply(&g, &p, &state, &b, variant).unwrap();
                let lhs = pair_l2_inner(&g, &ha, &b).unwrap();
                let rhs = pair_l2_inner(&g, &a, &hb).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn hessian_matches_differenced_gradients() {
        let g = grid_1d(16);
        let cases = [
            (SystemParams::new(-1.0, -1.0, 50.0), FunctionalVariant::Plain),
            (SystemParams::with_truncation(20.0, 0.1, f64::INFINITY), FunctionalVariant::Truncated),
        ];
        for (params, variant) in cases {
            let state = random_state(&g, 33, 1.5);
            let dir = random_state(&g, 34, 1.0);
            let h = hessian_apply(&g, &params, &state, &dir, variant).unwrap();
            let t = 1e-5;
            let gp =
                gradient(&g, &params, &axpy(&state, t, &dir), variant, GradientMetric::L2).unwrap();
            let gm = gradient(&g, &params, &axpy(&state, -t, &dir), variant, GradientMetric::L2)
                .unwrap();
            for i in 0..g.num_nodes() {
                let fd_u = (gp.u[i] - gm.u[i]) / (2.0 * t);
                let fd_v = (gp.v[i] - gm.v[i]) / (2.0 * t);
                assert_relative_eq!(h.u[i], fd_u, max_relative = 1e-5, epsilon = 1e-7);
                assert_relative_eq!(h.v[i], fd_v, max_relative = 1e-5, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn hessian_matrix_agrees_with_hessian_apply() {
        let g = grid_1d(11);
        let n = g.num_nodes();
        for (params, variant) in [
            (SystemParams::new(-1.5, 0.3, 9.0), FunctionalVariant::Plain),
            (SystemParams::with_truncation(9.0, 0.2, f64::INFINITY), FunctionalVariant::Truncated),
        ] {
            let state = random_state(&g, 55, 1.3);
            let h = hessian_matrix(&g, &params, &state, variant).unwrap();
            let dir = random_state(&g, 56, 1.0);
            let applied = hessian_apply(&g, &params, &state, &dir, variant).unwrap();
            let x = nalgebra::DVector::from_iterator(
                2 * n,
                dir.u.iter().chain(&dir.v).cloned(),
            );
            let hx = &h * x;
            for i in 0..n {
                assert_relative_eq!(hx[i], applied.u[i], max_relative = 1e-12, epsilon = 1e-12);
                assert_relative_eq!(hx[n + i], applied.v[i], max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn swap_is_an_involution() {
        let g = grid_1d(10);
        let s = random_state(&g, 8, 2.0);
        assert_eq!(s.swapped().swapped(), s);
    }

    #[test]
    fn positive_negative_part_examples() {
        let f = vec![1.0, -2.0, 3.0];
        let (p, m) = positive_negative_parts(&f);
        assert_eq!(p, vec![1.0, 0.0, 3.0]);
        assert_eq!(m, vec![0.0, 2.0, 0.0]);
        let nonneg = vec![0.5, 0.0, 2.0];
        let (p2, m2) = positive_negative_parts(&nonneg);
        assert_eq!(p2, nonneg);
        assert!(m2.iter().all(|&x| x == 0.0));
        let g = grid_1d(12);
        let s = random_state(&g, 15, 3.0);
        let (sp, sm) = positive_negative_parts(&s.u);
        for i in 0..s.u.len() {
            assert_eq!(sp[i] - sm[i], s.u[i]);
            assert_eq!(sp[i] * sm[i], 0.0);
        }
    }

    #[test]
    fn residual_does_not_scale_linearly() {
        let g = grid_1d(16);
        let p = SystemParams::new(-1.0, -1.0, 5.0);
        let s = random_state(&g, 50, 1.0);
        let doubled = axpy(&s, 1.0, &s);
        let r1 = residual_norm(&g, &p, &s, FunctionalVariant::Plain).unwrap();
        let r2 = residual_norm(&g, &p, &doubled, FunctionalVariant::Plain).unwrap();
        assert!((r2 - 2.0 * r1).abs() > 1e-6 * r1);
    }

    #[test]
    fn diagonal_energy_identity() {
        let g = grid_1d(40);
        let beta = 17.0;
        let p = SystemParams::new(-1.0, -1.0, beta);
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let w: Field = (0..g.num_nodes()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let state = StatePair::new(w.clone(), w.clone());
        let e = energy(&g, &p, &state, FunctionalVariant::Plain).unwrap();
        let h1 = g.h1_seminorm_sq(&w).unwrap();
        let l2 = g.l2_norm_sq(&w).unwrap();
        let w4: Field = w.iter().map(|&x| x.powi(4)).collect();
        let q4 = g.integrate(&w4).unwrap();
        let expected = h1 - l2 + 0.5 * (beta - 1.0) * q4;
        assert_relative_eq!(e, expected, max_relative = 1e-13);
    }
}
