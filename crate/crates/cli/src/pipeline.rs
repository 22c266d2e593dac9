//! Subcommand drivers: each builds the grid and parameters from a
//! [`RunConfig`], runs the requested stage of the toolkit and writes its
//! artifacts into the output directory.
//!
//! Files written:
//! - `eig`:      `eigenvalues.csv`, `phi_<j>.csv`
//! - `solve`:    `u.csv`, `v.csv`, `report.txt`
//! - `continue`: per-beta `u_<i>.csv` / `v_<i>.csv`, `branch.csv`, and
//!   `report.txt` with one block per beta
//! - `analyze`:  `analysis.txt` (reads `u.csv` / `v.csv`)
//! - `probe`:    `probe_report.txt`
//!
//! Convergence failures still write their partial artifacts plus an
//! `error:` record and map to exit code 2; configuration problems abort
//! before any artifact is written.

use std::fs;
use std::path::PathBuf;

use gpsep::analysis;
use gpsep::grid::{build_grid, Grid};
use gpsep::model::{StatePair, SystemParams};
use gpsep::solver::{self, MinimaxSeed};
use gpsep::Error as CoreError;

use crate::config::RunConfig;
use crate::io::{diagnostics_records, export_field, fmt_float, import_field, Record, ReportWriter};
use crate::CliError;

/// Overall result of a subcommand run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    /// Flagged non-convergence; partial artifacts were written.
    Partial,
}

fn make_grid(cfg: &RunConfig) -> Grid {
    build_grid(cfg.domain.clone())
}

fn make_params(cfg: &RunConfig, beta: f64) -> SystemParams {
    SystemParams {
        lambda: cfg.lambda,
        mu: cfg.mu,
        beta,
        eps: cfg.eps,
        r_trunc: cfg.r_trunc,
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn seed_for(cfg: &RunConfig, grid: &Grid, params: &SystemParams) -> Result<MinimaxSeed, CliError> {
    let mix = cfg.mix.clone().unwrap_or_else(|| {
        let mut m = vec![0.0; cfg.k];
        m[cfg.k - 1] = 1.0;
        m
    });
    let amplitude = match cfg.amplitude {
        Some(a) => a,
        None => solver::ray_max_amplitude(grid, params, cfg.k, &mix, cfg.variant)
            .map_err(CliError::Core)?,
    };
    MinimaxSeed::new(cfg.k, amplitude, &mix).map_err(CliError::Core)
}

enum Stage {
    Converged(StatePair),
    Partial { state: StatePair, residual: f64, error: String },
}

/// Initialization, descent and Newton polish; convergence failures return
/// the lowest-residual iterate instead of erroring.
fn solve_stage(
    cfg: &RunConfig,
    grid: &Grid,
    params: &SystemParams,
) -> Result<Stage, CliError> {
    let seed = seed_for(cfg, grid, params)?;
    let init = solver::minimax_init(grid, &seed).map_err(CliError::Core)?;
    let mut stage_opts = cfg.solve.clone();
    stage_opts.grad_tol = cfg.solve.descent_tol.max(cfg.solve.grad_tol);
    let desc = solver::descend(grid, params, &init, &stage_opts, cfg.variant)
        .map_err(CliError::Core)?;
    for candidate in [&desc.best, &desc.state] {
        match solver::newton_refine(grid, params, candidate, &cfg.solve, cfg.variant) {
            Ok(out) => {
                let state =
                    solver::canonicalize(grid, out.state).map_err(CliError::Core)?;
                return Ok(Stage::Converged(state));
            }
            Err(
                CoreError::NonConverged { .. }
                | CoreError::Diverged { .. }
                | CoreError::NoNewSolution { .. },
            ) => continue,
            Err(e) => return Err(CliError::Core(e)),
        }
    }
    Ok(Stage::Partial {
        state: desc.best,
        residual: desc.best_residual,
        error: format!(
            "newton refinement did not converge (best descent residual {:.3e})",
            desc.best_residual
        ),
    })
}

fn pohozaev_records(
    cfg: &RunConfig,
    grid: &Grid,
    params: &SystemParams,
    state: &StatePair,
) -> Result<Vec<Record>, CliError> {
    let center = cfg.analysis.pohozaev_center.clone().unwrap_or_else(|| {
        cfg.domain.lengths().iter().map(|l| 0.5 * l).collect()
    });
    let radius = cfg.analysis.pohozaev_radius.unwrap_or_else(|| {
        0.25 * cfg.domain.lengths().iter().cloned().fold(f64::INFINITY, f64::min)
    });
    let bump = analysis::quintic_bump(grid, &center, radius);
    let id = format!(
        "quintic_bump(center={center:?}, radius={radius})",
    );
    let report = analysis::pohozaev_residual(grid, params, state, &bump, id)
        .map_err(CliError::Core)?;
    Ok(vec![
        ("pohozaev_residual", fmt_float(report.residual)),
        ("pohozaev_cutoff", report.cutoff_id),
    ])
}

fn state_records(
    cfg: &RunConfig,
    grid: &Grid,
    params: &SystemParams,
    state: &StatePair,
    beta: Option<f64>,
) -> Result<Vec<Record>, CliError> {
    let diag = analysis::diagnose(grid, params, state, cfg.variant, cfg.analysis.morse)
        .map_err(CliError::Core)?;
    let mut records = diagnostics_records(beta, &diag, cfg.analysis.morse, cfg.analysis.nodal);
    if cfg.analysis.pohozaev {
        records.extend(pohozaev_records(cfg, grid, params, state)?);
    }
    Ok(records)
}

pub fn run_eig(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = make_grid(cfg);
    let dir = ensure_out_dir(cfg)?;
    let pairs = grid.dirichlet_eigenpairs(cfg.k).map_err(CliError::Core)?;
    let mut table = String::from("j,value\n");
    for (j, pair) in pairs.iter().enumerate() {
        table.push_str(&format!("{},{}\n", j + 1, fmt_float(pair.value)));
        export_field(&grid, &pair.vector, &dir.join(format!("phi_{}.csv", j + 1)))?;
    }
    let path = dir.join("eigenvalues.csv");
    fs::write(&path, table).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok(Outcome::Converged)
}

pub fn run_solve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if cfg.betas.len() != 1 {
        return Err(CliError::Config(
            "solve expects a single beta; use the continue subcommand for schedules".into(),
        ));
    }
    let grid = make_grid(cfg);
    let params = make_params(cfg, cfg.betas[0]);
    let dir = ensure_out_dir(cfg)?;
    let mut report = ReportWriter::new();
    match solve_stage(cfg, &grid, &params)? {
        Stage::Converged(state) => {
            export_field(&grid, &state.u, &dir.join("u.csv"))?;
            export_field(&grid, &state.v, &dir.join("v.csv"))?;
            let records = state_records(cfg, &grid, &params, &state, None)?;
            report.block(&records);
            report.write(&dir.join("report.txt"))?;
            Ok(Outcome::Converged)
        }
        Stage::Partial { state, residual, error } => {
            export_field(&grid, &state.u, &dir.join("u.csv"))?;
            export_field(&grid, &state.v, &dir.join("v.csv"))?;
            report.block(&[
                ("error", error),
                ("residual", fmt_float(residual)),
            ]);
            report.write(&dir.join("report.txt"))?;
            Ok(Outcome::Partial)
        }
    }
}

pub fn run_continue(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = make_grid(cfg);
    let params = make_params(cfg, cfg.betas[0]);
    let dir = ensure_out_dir(cfg)?;
    let mut report = ReportWriter::new();
    let base = match solve_stage(cfg, &grid, &params)? {
        Stage::Converged(state) => state,
        Stage::Partial { state, residual, error } => {
            export_field(&grid, &state.u, &dir.join("u_1.csv"))?;
            export_field(&grid, &state.v, &dir.join("v_1.csv"))?;
            report.block(&[
                ("error", format!("first beta unsolved: {error}")),
                ("residual", fmt_float(residual)),
            ]);
            report.write(&dir.join("report.txt"))?;
            return Ok(Outcome::Partial);
        }
    };
    let branch = solver::continue_in_beta(&grid, &params, &base, &cfg.betas, &cfg.solve, cfg.variant)
        .map_err(CliError::Core)?;

    let mut table = String::from(
        "beta,energy,residual,morse_index,nullity,segregation,h1_u,h1_v,linf_u,linf_v,nodal_components\n",
    );
    for (i, ((beta, state), diag)) in branch
        .betas
        .iter()
        .zip(&branch.states)
        .zip(&branch.diagnostics)
        .enumerate()
    {
        export_field(&grid, &state.u, &dir.join(format!("u_{}.csv", i + 1)))?;
        export_field(&grid, &state.v, &dir.join(format!("v_{}.csv", i + 1)))?;
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_float(*beta),
            fmt_float(diag.energy),
            fmt_float(diag.residual),
            diag.morse_index.expect("branch diagnostics carry morse data"),
            diag.nullity.expect("branch diagnostics carry morse data"),
            fmt_float(diag.segregation),
            fmt_float(diag.h1_u),
            fmt_float(diag.h1_v),
            fmt_float(diag.linf_u),
            fmt_float(diag.linf_v),
            diag.nodal_components,
        ));
        let p = make_params(cfg, *beta);
        let mut records = diagnostics_records(
            Some(*beta),
            diag,
            cfg.analysis.morse,
            cfg.analysis.nodal,
        );
        if cfg.analysis.pohozaev {
            records.extend(pohozaev_records(cfg, &grid, &p, state)?);
        }
        report.block(&records);
    }
    let path = dir.join("branch.csv");
    fs::write(&path, table).map_err(|e| CliError::Io(path.display().to_string(), e))?;

    if cfg.analysis.decay_fit && branch.betas.len() >= 3 {
        let fit = analysis::decay_fit(&grid, &branch).map_err(CliError::Core)?;
        report.block(&[
            ("decay_slope", fmt_float(fit.slope)),
            ("decay_r2", fmt_float(fit.r_squared)),
        ]);
    }
    for warning in analysis::index_change_warnings(&branch) {
        report.block(&[("warning", warning)]);
    }
    if let Some((beta, error)) = &branch.aborted {
        report.block(&[(
            "error",
            format!("branch aborted at beta = {beta}: {error}"),
        )]);
        report.write(&dir.join("report.txt"))?;
        return Ok(Outcome::Partial);
    }
    report.write(&dir.join("report.txt"))?;
    Ok(Outcome::Converged)
}

pub fn run_analyze(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = make_grid(cfg);
    let params = make_params(cfg, cfg.betas[0]);
    let dir = cfg.out_dir.clone();
    let u = import_field(&grid, &dir.join("u.csv"))?;
    let v = import_field(&grid, &dir.join("v.csv"))?;
    let state = StatePair::new(u, v);
    let records = state_records(cfg, &grid, &params, &state, None)?;
    let mut report = ReportWriter::new();
    report.block(&records);
    report.write(&dir.join("analysis.txt"))?;
    Ok(Outcome::Converged)
}

pub fn run_probe(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = make_grid(cfg);
    let params = make_params(cfg, cfg.betas[0]);
    let dir = ensure_out_dir(cfg)?;
    let rep = solver::linking_probe(&grid, &params, cfg.k, cfg.rho, cfg.samples, cfg.rng_seed)
        .map_err(CliError::Core)?;
    let mut report = ReportWriter::new();
    report.block(&[
        ("k", rep.k.to_string()),
        ("rho", fmt_float(rep.rho)),
        ("samples", rep.samples.to_string()),
        ("beta", fmt_float(rep.beta)),
        ("min_energy", fmt_float(rep.min_energy)),
    ]);
    report.write(&dir.join("probe_report.txt"))?;
    Ok(Outcome::Converged)
}
