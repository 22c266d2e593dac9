//! Critical-point computation.
//!
//! The production path mirrors the minimax construction: seed a state as
//! the positive/negative split (w+, w-) of an eigenfunction combination w,
//! run Sobolev (H1) gradient descent with an Armijo line search until the
//! residual is small, then polish with a damped Newton iteration on the
//! strong-form residual. Deflation excludes already-found solutions (and
//! their swaps) so repeated solves produce distinct critical points, and
//! `continue_in_beta` tracks a solution family along an ascending beta
//! schedule with per-beta diagnostics. `linking_probe` is a Monte Carlo
//! lower-bound probe of the energy over the linking spheres used by the
//! multiplicity argument.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{
    energy, gradient, hessian_matrix, pair_h1_distance, pair_l2_inner, FunctionalVariant,
    GradientMetric, StatePair, SystemParams,
};

/// Largest dense Newton system (2N unknowns) the solver will factorize.
const MAX_NEWTON_UNKNOWNS: usize = 8192;

const ARMIJO_FLOOR: f64 = 1e-18;
const NEWTON_DAMP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Residual-norm stopping tolerance for converged solutions.
    pub grad_tol: f64,
    /// Coarser residual target at which the descent stage hands over to
    /// Newton (descent alone stalls near saddle points).
    pub descent_tol: f64,
    pub max_descent_iters: usize,
    pub max_newton_iters: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub deflation_power: f64,
    pub deflation_shift: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grad_tol: 1e-9,
            descent_tol: 1e-3,
            max_descent_iters: 2000,
            max_newton_iters: 100,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            deflation_power: 2.0,
            deflation_shift: 1e-2,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("descent_tol", self.descent_tol),
            ("deflation_shift", self.deflation_shift),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("armijo_c", self.armijo_c), ("armijo_shrink", self.armijo_shrink)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if !(self.deflation_power >= 1.0) {
            return Err(Error::Config(format!(
                "deflation_power must be >= 1, got {}",
                self.deflation_power
            )));
        }
        Ok(())
    }
}

/// Seed for the minimax-style initialization: a point on the sphere of
/// radius `amplitude` (in the H1 norm) inside the span of the first k
/// eigenfunctions.
#[derive(Debug, Clone)]
pub struct MinimaxSeed {
    pub k: usize,
    pub amplitude: f64,
    pub mix: Vec<f64>,
}

impl MinimaxSeed {
    /// Normalizes `mix` to unit Euclidean length.
    pub fn new(k: usize, amplitude: f64, mix: &[f64]) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("seed index k must be >= 1".into()));
        }
        if mix.len() != k {
            return Err(Error::Config(format!(
                "seed mix must have k = {k} coefficients, got {}",
                mix.len()
            )));
        }
        if !(amplitude > 0.0) {
            return Err(Error::Config(format!("seed amplitude must be positive, got {amplitude}")));
        }
        let norm = mix.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Config("seed mix must be nonzero".into()));
        }
        Ok(MinimaxSeed { k, amplitude, mix: mix.iter().map(|c| c / norm).collect() })
    }

    /// Pure top-mode seed: mix = (0, ..., 0, 1).
    pub fn top_mode(k: usize, amplitude: f64) -> Result<Self> {
        let mut mix = vec![0.0; k];
        mix[k - 1] = 1.0;
        Self::new(k, amplitude, &mix)
    }
}

/// One solution family along an ascending beta schedule.
#[derive(Debug, Clone)]
pub struct Branch {
    pub betas: Vec<f64>,
    pub states: Vec<StatePair>,
    pub diagnostics: Vec<BranchDiagnostics>,
    /// Set when Newton failed mid-branch: (failed beta, error description).
    pub aborted: Option<(f64, String)>,
}

/// Per-beta record stored along a [`Branch`]. Branch continuation always
/// fills the Morse fields; standalone diagnostics may skip the eigensolve
/// and leave them `None`.
#[derive(Debug, Clone)]
pub struct BranchDiagnostics {
    pub energy: f64,
    pub residual: f64,
    pub morse_index: Option<usize>,
    pub nullity: Option<usize>,
    pub segregation: f64,
    pub h1_u: f64,
    pub h1_v: f64,
    pub linf_u: f64,
    pub linf_v: f64,
    pub nodal_components: usize,
    pub nodal_delta: f64,
}

/// Result of the Monte Carlo probe of the linking lower bound.
#[derive(Debug, Clone)]
pub struct LinkingProbeReport {
    pub k: usize,
    pub rho: f64,
    pub samples: usize,
    pub min_energy: f64,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    /// Final iterate.
    pub state: StatePair,
    /// Iterate with the smallest residual seen (descent passes close to
    /// saddle points without stopping at them).
    pub best: StatePair,
    pub best_residual: f64,
    /// Residual norm at every visited iterate, including the initial one.
    pub residuals: Vec<f64>,
    /// Energy at every accepted iterate, including the initial one.
    pub energies: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub state: StatePair,
    pub iterations: usize,
    /// Residual norm per iteration, including the initial one.
    pub residuals: Vec<f64>,
    /// True if a singular Hessian forced a shifted (regularized) solve.
    pub regularized: bool,
}

/// Converged solve with bookkeeping from both stages.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub state: StatePair,
    pub energy: f64,
    pub residual: f64,
    pub descent_iterations: usize,
    pub newton_iterations: usize,
    pub newton_residuals: Vec<f64>,
}

fn pair_axpy(state: &StatePair, t: f64, dir: &StatePair) -> StatePair {
    StatePair::new(
        state.u.iter().zip(&dir.u).map(|(a, b)| a + t * b).collect(),
        state.v.iter().zip(&dir.v).map(|(a, b)| a + t * b).collect(),
    )
}

fn pair_to_vector(s: &StatePair) -> DVector<f64> {
    DVector::from_iterator(s.u.len() + s.v.len(), s.u.iter().chain(&s.v).cloned())
}

fn vector_to_pair(x: &DVector<f64>, n: usize) -> StatePair {
    StatePair::new(x.as_slice()[..n].to_vec(), x.as_slice()[n..].to_vec())
}

/// H1 inner product of two pairs, <a, -Delta b> summed over components.
fn pair_h1_inner(grid: &Grid, a: &StatePair, b: &StatePair) -> Result<f64> {
    let bu = grid.apply_neg_laplacian(&b.u)?;
    let bv = grid.apply_neg_laplacian(&b.v)?;
    Ok(grid.l2_inner(&a.u, &bu)? + grid.l2_inner(&a.v, &bv)?)
}

/// First-coordinate moment int f x_1, used for canonical orientation.
pub fn first_moment(grid: &Grid, f: &Field) -> Result<f64> {
    let weighted: Field =
        (0..grid.num_nodes()).map(|i| f[i] * grid.node_coords(i)[0]).collect();
    grid.integrate(&weighted)
}

/// Canonical representative of the sigma-orbit {state, swapped state}: the
/// component with the larger first-coordinate moment is stored as u.
pub fn canonicalize(grid: &Grid, state: StatePair) -> Result<StatePair> {
    let mu = first_moment(grid, &state.u)?;
    let mv = first_moment(grid, &state.v)?;
    Ok(if mu >= mv { state } else { state.swapped() })
}

/// Build the boundary-map state gamma(w) = (w+, w-) for
/// w = amplitude * sum mix_j phi_j rescaled to H1 norm `amplitude`.
pub fn minimax_init(grid: &Grid, seed: &MinimaxSeed) -> Result<StatePair> {
    let pairs = grid.dirichlet_eigenpairs(seed.k)?;
    let n = grid.num_nodes();
    let mut w = vec![0.0; n];
    for (c, pair) in seed.mix.iter().zip(&pairs) {
        for i in 0..n {
            w[i] += c * pair.vector[i];
        }
    }
    let h1 = grid.h1_seminorm_sq(&w)?.max(0.0).sqrt();
    if h1 == 0.0 {
        return Err(Error::Config("seed direction has zero H1 norm".into()));
    }
    let scale = seed.amplitude / h1;
    for x in &mut w {
        *x *= scale;
    }
    let (plus, minus) = crate::model::positive_negative_parts(&w);
    Ok(StatePair::new(plus, minus))
}

/// Default seed amplitude: maximize the energy along the ray
/// t -> t (w+, w-) with ||w||_{H1} = 1 (the mountain-pass crossing).
pub fn ray_max_amplitude(
    grid: &Grid,
    params: &SystemParams,
    k: usize,
    mix: &[f64],
    variant: FunctionalVariant,
) -> Result<f64> {
    let unit = minimax_init(grid, &MinimaxSeed::new(k, 1.0, mix)?)?;
    let eval = |t: f64| -> Result<f64> {
        energy(grid, params, &pair_axpy(&StatePair::zeros(grid), t, &unit), variant)
    };
    // Bracket the ray maximum by doubling, then ternary search.
    let mut t_prev = 0.0;
    let mut t = 1e-2;
    let mut e_prev = 0.0;
    let mut bracket = None;
    for _ in 0..80 {
        let e = eval(t)?;
        if e < e_prev {
            bracket = Some((t_prev * 0.25, t));
            break;
        }
        t_prev = t;
        e_prev = e;
        t *= 2.0;
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::Config("energy does not cross along the seed ray; no mountain-pass amplitude".into())
    })?;
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if eval(m1)? < eval(m2)? {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let amplitude = 0.5 * (lo + hi);
    if eval(amplitude)? <= 0.0 {
        return Err(Error::Config(
            "energy never rises along the seed ray; no mountain-pass amplitude".into(),
        ));
    }
    Ok(amplitude)
}

/// Sobolev gradient descent with Armijo backtracking. Monotone in energy;
/// stops at `opts.grad_tol` or after `max_descent_iters` accepted steps
/// (then `converged` is false).
pub fn descend(
    grid: &Grid,
    params: &SystemParams,
    init: &StatePair,
    opts: &SolveOptions,
    variant: FunctionalVariant,
) -> Result<DescentOutcome> {
    opts.validate()?;
    let mut state = init.clone();
    let mut e = energy(grid, params, &state, variant)?;
    let mut energies = vec![e];
    let mut residuals = Vec::new();
    let mut best = state.clone();
    let mut best_residual = f64::INFINITY;
    let mut alpha = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let g = gradient(grid, params, &state, variant, GradientMetric::L2)?;
        let r = (grid.l2_norm_sq(&g.u)? + grid.l2_norm_sq(&g.v)?).sqrt();
        residuals.push(r);
        if r < best_residual {
            best_residual = r;
            best = state.clone();
        }
        if r <= opts.grad_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_descent_iters {
            break;
        }
        let dir = StatePair::new(
            grid.solve_poisson(&g.u)?.iter().map(|x| -x).collect(),
            grid.solve_poisson(&g.v)?.iter().map(|x| -x).collect(),
        );
        let slope = pair_l2_inner(grid, &g, &dir)?;
        if slope >= 0.0 {
            break;
        }
        let mut a = alpha;
        let mut shrunk = false;
        let accepted = loop {
            let trial = pair_axpy(&state, a, &dir);
            let e_trial = energy(grid, params, &trial, variant)?;
            if e_trial <= e + opts.armijo_c * a * slope {
                break Some((trial, e_trial));
            }
            a *= opts.armijo_shrink;
            shrunk = true;
            if a < ARMIJO_FLOOR {
                break None;
            }
        };
        let Some((trial, e_trial)) = accepted else {
            break;
        };
        state = trial;
        e = e_trial;
        energies.push(e);
        iterations += 1;
        alpha = if shrunk { a } else { (a * 2.0).min(1e6) };
    }
    Ok(DescentOutcome { state, best, best_residual, residuals, energies, converged, iterations })
}

fn newton_direction(
    grid: &Grid,
    params: &SystemParams,
    state: &StatePair,
    g: &StatePair,
    opts: &SolveOptions,
    variant: FunctionalVariant,
    regularized: &mut bool,
) -> Result<StatePair> {
    let n = grid.num_nodes();
    if 2 * n > MAX_NEWTON_UNKNOWNS {
        return Err(Error::Config(format!(
            "grid with {n} nodes exceeds the dense Newton limit of {} unknowns",
            MAX_NEWTON_UNKNOWNS
        )));
    }
    let h = hessian_matrix(grid, params, state, variant)?;
    let rhs = -pair_to_vector(g);
    if let Some(delta) = h.clone().lu().solve(&rhs) {
        if delta.iter().all(|x| x.is_finite()) {
            return Ok(vector_to_pair(&delta, n));
        }
    }
    // Singular factorization: fall back to a shifted solve.
    *regularized = true;
    let mut shifted = h;
    for i in 0..2 * n {
        shifted[(i, i)] += opts.deflation_shift;
    }
    let delta = shifted
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Eigen("regularized Newton solve failed".into()))?;
    Ok(vector_to_pair(&delta, n))
}

/// Damped Newton iteration on the strong-form residual; converges to
/// `opts.grad_tol` or reports divergence with the residual trace.
pub fn newton_refine(
    grid: &Grid,
    params: &SystemParams,
    init: &StatePair,
    opts: &SolveOptions,
    variant: FunctionalVariant,
) -> Result<NewtonOutcome> {
    opts.validate()?;
    let mut state = init.clone();
    let mut regularized = false;
    let mut residuals = Vec::new();
    let mut g = gradient(grid, params, &state, variant, GradientMetric::L2)?;
    let mut r = (grid.l2_norm_sq(&g.u)? + grid.l2_norm_sq(&g.v)?).sqrt();
    residuals.push(r);
    let mut iterations = 0;
    while r > opts.grad_tol {
        if iterations >= opts.max_newton_iters {
            return Err(Error::NonConverged { iterations, residual: r });
        }
        let delta = newton_direction(grid, params, &state, &g, opts, variant, &mut regularized)?;
        let mut a = 1.0f64;
        let step = loop {
            let trial = pair_axpy(&state, a, &delta);
            let g_trial = gradient(grid, params, &trial, variant, GradientMetric::L2)?;
            let r_trial = (grid.l2_norm_sq(&g_trial.u)? + grid.l2_norm_sq(&g_trial.v)?).sqrt();
            if r_trial <= (1.0 - 1e-4 * a) * r {
                break Some((trial, g_trial, r_trial));
            }
            a *= 0.5;
            if a < NEWTON_DAMP_FLOOR {
                break None;
            }
        };
        let Some((trial, g_trial, r_trial)) = step else {
            return Err(Error::Diverged { iterations, trace: residuals });
        };
        state = trial;
        g = g_trial;
        r = r_trial;
        residuals.push(r);
        iterations += 1;
    }
    Ok(NewtonOutcome { state, iterations, residuals, regularized })
}

/// Deflation multiplier M(x) and the directional derivative term
/// grad M . delta / M, over the known solutions and their swaps.
fn deflation_terms(
    grid: &Grid,
    x: &StatePair,
    delta: Option<&StatePair>,
    known: &[StatePair],
    power: f64,
) -> Result<(f64, f64)> {
    let mut m = 1.0f64;
    let mut dlog = 0.0f64; // sum over factors of (dm_i/m_i) . delta
    for root in known.iter().flat_map(|s| [s.clone(), s.swapped()]) {
        let d = pair_h1_distance(grid, x, &root)?;
        if d < 1e-13 {
            return Ok((f64::INFINITY, 0.0));
        }
        let factor = d.powf(-power) + 1.0;
        m *= factor;
        if let Some(delta) = delta {
            let diff = pair_axpy(x, -1.0, &root);
            let dd = pair_h1_inner(grid, &diff, delta)? / d;
            dlog += (-power * d.powf(-power - 1.0) / factor) * dd;
        }
    }
    Ok((m, dlog))
}

/// Newton iteration on the deflated residual M(x) g(x); the returned
/// solution is at summed H1 distance >= `deflation_shift` from every known
/// solution and its swap. With `known` empty this reduces to
/// [`newton_refine`].
pub fn deflated_solve(
    grid: &Grid,
    params: &SystemParams,
    known: &[StatePair],
    init: &StatePair,
    opts: &SolveOptions,
    variant: FunctionalVariant,
) -> Result<StatePair> {
    opts.validate()?;
    let mut state = init.clone();
    let mut regularized = false;
    let separated = |s: &StatePair| -> Result<bool> {
        for root in known {
            let d = pair_h1_distance(grid, s, root)? + pair_h1_distance(grid, s, &root.swapped())?;
            if d < opts.deflation_shift {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut g = gradient(grid, params, &state, variant, GradientMetric::L2)?;
    let mut r = (grid.l2_norm_sq(&g.u)? + grid.l2_norm_sq(&g.v)?).sqrt();
    let mut iterations = 0;
    loop {
        if r <= opts.grad_tol {
            if separated(&state)? {
                return Ok(state);
            }
            return Err(Error::NoNewSolution { iterations });
        }
        if iterations >= opts.max_newton_iters {
            return Err(Error::NoNewSolution { iterations });
        }
        let delta = newton_direction(grid, params, &state, &g, opts, variant, &mut regularized)?;
        let (m, dlog) = deflation_terms(grid, &state, Some(&delta), known, opts.deflation_power)?;
        if !m.is_finite() {
            return Err(Error::NoNewSolution { iterations });
        }
        // The deflated Newton step is a scaling of the undeflated one.
        let denom = 1.0 - dlog;
        let scale = if denom.abs() < 1e-8 { 1.0 } else { (1.0 / denom).clamp(-1e3, 1e3) };
        let phi = m * r;
        let mut a = 1.0f64;
        let step = loop {
            let trial = pair_axpy(&state, a * scale, &delta);
            let g_trial = gradient(grid, params, &trial, variant, GradientMetric::L2)?;
            let r_trial = (grid.l2_norm_sq(&g_trial.u)? + grid.l2_norm_sq(&g_trial.v)?).sqrt();
            let (m_trial, _) = deflation_terms(grid, &trial, None, known, opts.deflation_power)?;
            if m_trial.is_finite() && m_trial * r_trial <= (1.0 - 1e-4 * a) * phi {
                break Some((trial, g_trial, r_trial));
            }
            a *= 0.5;
            if a < NEWTON_DAMP_FLOOR {
                break None;
            }
        };
        let Some((trial, g_trial, r_trial)) = step else {
            return Err(Error::Diverged { iterations, trace: vec![r] });
        };
        state = trial;
        g = g_trial;
        r = r_trial;
        iterations += 1;
    }
}

/// Full production pipeline for one seed: minimax initialization, Sobolev
/// descent to `opts.descent_tol`, Newton polish from the lowest-residual
/// iterate, canonical sigma-orientation of the result.
pub fn solve_from_seed(
    grid: &Grid,
    params: &SystemParams,
    seed: &MinimaxSeed,
    opts: &SolveOptions,
    variant: FunctionalVariant,
) -> Result<SolveOutcome> {
    params.validate()?;
    let init = minimax_init(grid, seed)?;
    let mut stage = opts.clone();
    stage.grad_tol = opts.descent_tol.max(opts.grad_tol);
    let desc = descend(grid, params, &init, &stage, variant)?;
    let mut last_err = None;
    for candidate in [&desc.best, &desc.state] {
        match newton_refine(grid, params, candidate, opts, variant) {
            Ok(newton) => {
                let state = canonicalize(grid, newton.state)?;
                let e = energy(grid, params, &state, variant)?;
                let residual = *newton.residuals.last().unwrap();
                return Ok(SolveOutcome {
                    state,
                    energy: e,
                    residual,
                    descent_iterations: desc.iterations,
                    newton_iterations: newton.iterations,
                    newton_residuals: newton.residuals,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(Error::NonConverged { iterations: 0, residual: f64::NAN }))
}

/// Warm-started continuation along an ascending beta schedule. The input
/// state must already solve the system at `schedule[0]`. Newton failure
/// mid-branch returns the partial branch with `aborted` set.
pub fn continue_in_beta(
    grid: &Grid,
    params: &SystemParams,
    state: &StatePair,
    schedule: &[f64],
    opts: &SolveOptions,
    variant: FunctionalVariant,
) -> Result<Branch> {
    opts.validate()?;
    if schedule.is_empty() {
        return Err(Error::Config("beta schedule must be nonempty".into()));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("beta schedule must be strictly ascending".into()));
    }
    let at = |beta: f64| SystemParams { beta, ..*params };
    let first = at(schedule[0]);
    let r0 = crate::model::residual_norm(grid, &first, state, variant)?;
    if r0 > opts.grad_tol {
        return Err(Error::Precondition(format!(
            "state does not solve the system at beta = {} (residual {r0:.3e} > {:.3e})",
            schedule[0], opts.grad_tol
        )));
    }
    let mut branch = Branch {
        betas: vec![schedule[0]],
        states: vec![state.clone()],
        diagnostics: vec![analysis::diagnose(grid, &first, state, variant, true)?],
        aborted: None,
    };
    let mut current = state.clone();
    for &beta in &schedule[1..] {
        let p = at(beta);
        match newton_refine(grid, &p, &current, opts, variant) {
            Ok(out) => {
                current = out.state;
                branch.betas.push(beta);
                branch.diagnostics.push(analysis::diagnose(grid, &p, &current, variant, true)?);
                branch.states.push(current.clone());
            }
            Err(e) => {
                branch.aborted = Some((beta, e.to_string()));
                break;
            }
        }
    }
    Ok(branch)
}

/// Monte Carlo probe of the linking lower bound: sample pairs (u,v) with
/// u - v in the span of eigenmodes j >= k scaled to H1 norm `rho` plus an
/// unconstrained u + v component, and record the minimum truncated energy.
/// Deterministic for a fixed `rng_seed`.
pub fn linking_probe(
    grid: &Grid,
    params: &SystemParams,
    k: usize,
    rho: f64,
    samples: usize,
    rng_seed: u64,
) -> Result<LinkingProbeReport> {
    if k < 1 {
        return Err(Error::Config("linking probe needs k >= 1".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::Config(format!("linking probe radius must be positive, got {rho}")));
    }
    if samples < 1 {
        return Err(Error::Config("linking probe needs at least one sample".into()));
    }
    let j_max = grid.num_nodes().min(64);
    if k > j_max {
        return Err(Error::Config(format!(
            "linking probe index k = {k} exceeds the sampled spectrum size {j_max}"
        )));
    }
    let pairs = grid.dirichlet_eigenpairs(j_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut normal = move || -> f64 {
        // Box-Muller on uniforms from the seeded generator.
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let n = grid.num_nodes();
    let mut min_energy = f64::INFINITY;
    for _ in 0..samples {
        // Difference component in the span of modes j >= k, rescaled to
        // H1 norm rho.
        let mut diff = vec![0.0; n];
        for pair in &pairs[k - 1..] {
            let c = normal() / pair.value;
            for i in 0..n {
                diff[i] += c * pair.vector[i];
            }
        }
        let h1 = grid.h1_seminorm_sq(&diff)?.max(0.0).sqrt();
        if h1 == 0.0 {
            continue;
        }
        let s = rho / h1;
        for x in &mut diff {
            *x *= s;
        }
        // Free sum component with spectrally decaying coefficients.
        let mut sum = vec![0.0; n];
        for pair in &pairs {
            let c = normal() / pair.value;
            for i in 0..n {
                sum[i] += c * pair.vector[i];
            }
        }
        let state = StatePair::new(
            (0..n).map(|i| 0.5 * (sum[i] + diff[i])).collect(),
            (0..n).map(|i| 0.5 * (sum[i] - diff[i])).collect(),
        );
        let e = energy(grid, params, &state, FunctionalVariant::Truncated)?;
        if e < min_energy {
            min_energy = e;
        }
    }
    Ok(LinkingProbeReport { k, rho, samples, min_energy, beta: params.beta })
}
