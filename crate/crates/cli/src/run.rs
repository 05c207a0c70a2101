//! Command implementations and the process exit-code contract.
//!
//! Exit codes: 0 on success, 2 for configuration problems (unreadable or
//! invalid config, bad oracle parameters, unreadable solution artifacts),
//! 3 when a solver fails to converge (or a policy cannot be evaluated), and
//! 4 when verification runs but a probe misses its tolerance.  Write
//! failures on output artifacts exit 1.  Progress and timing go to stderr;
//! result files never contain wall-clock times, so identical inputs produce
//! byte-identical outputs.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use divopt_core::{
    barrier_value, optimal_barrier, simulate_payoff, solve_policy_iteration,
    solve_value_iteration, McError, SimConfig, SolveError, Solution,
};

use crate::config::{parse_config, ResolvedConfig, SolveMethod};
use crate::report::{
    self, render_barrier_csv, render_json, render_sweep_csv, render_value_csv, summarize,
    ProbeRow, SweepRow, VerifyDoc, VerifyRow,
};

pub const EXIT_OK: i32 = 0;
/// Output files could not be written.
pub const EXIT_IO: i32 = 1;
/// The configuration (or another input artifact) is unusable.
pub const EXIT_CONFIG: i32 = 2;
/// The solver gave up before reaching its tolerance.
pub const EXIT_NO_CONVERGENCE: i32 = 3;
/// Verification ran and at least one probe missed its bound.
pub const EXIT_VERIFY: i32 = 4;

/// Read and resolve a configuration file, reporting problems on stderr.
fn load_config(path: &Path) -> Result<ResolvedConfig, i32> {
    let text = std::fs::read_to_string(path).map_err(|err| {
        eprintln!("error: cannot read config {}: {err}", path.display());
        EXIT_CONFIG
    })?;
    match parse_config(&text) {
        Ok(resolved) => {
            for warning in &resolved.warnings {
                eprintln!("warning: {warning}");
            }
            Ok(resolved)
        }
        Err(err) => {
            eprintln!("error: {err}");
            Err(EXIT_CONFIG)
        }
    }
}

/// Run the configured solver, reporting timing on stderr.
fn solve_configured(config: &ResolvedConfig) -> Result<Solution, i32> {
    let start = Instant::now();
    let result = match config.method {
        SolveMethod::ValueIteration => {
            solve_value_iteration(&config.model, &config.grid, config.options)
        }
        SolveMethod::PolicyIteration => {
            solve_policy_iteration(&config.model, &config.grid, config.options)
        }
    };
    match result {
        Ok(solution) => {
            eprintln!(
                "solved h = {}, B = {} in {} iterations, {:.3}s",
                config.grid.step(),
                config.grid.cap(),
                solution.iterations,
                start.elapsed().as_secs_f64()
            );
            Ok(solution)
        }
        Err(err) => {
            eprintln!("error: {err}");
            Err(match err {
                SolveError::SingularSystem { .. } | SolveError::BadValueArray { .. } => {
                    EXIT_NO_CONVERGENCE
                }
                _ => EXIT_CONFIG,
            })
        }
    }
}

/// Grid values at the configured probes, with 1-based regimes for reports.
fn probe_rows(config: &ResolvedConfig, solution: &Solution) -> Vec<ProbeRow> {
    config
        .probes
        .iter()
        .map(|probe| ProbeRow {
            x: probe.x,
            regime: probe.regime + 1,
            value: solution.value(config.grid.nearest_index(probe.x), probe.regime),
        })
        .collect()
}

/// Print to stdout, tolerating a closed pipe (e.g. `divopt oracle | head`).
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

/// Write one artifact file, reporting failures on stderr.
fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<(), i32> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|err| {
        eprintln!("error: cannot write {}: {err}", path.display());
        EXIT_IO
    })
}

/// Largest dividend weight over the grid; scales the verification bound.
fn max_weight(config: &ResolvedConfig) -> Result<f64, i32> {
    let mut c_max = 0.0f64;
    for state in 0..config.grid.num_states() {
        for regime in 0..config.model.num_regimes() {
            let w = config
                .model
                .dividend_weight(config.grid.x(state), regime)
                .map_err(|err| {
                    eprintln!("error: {err}");
                    EXIT_CONFIG
                })?;
            c_max = c_max.max(w);
        }
    }
    Ok(c_max)
}

/// `solve --config <path> --out <dir>`: solve the configured problem and
/// write `value.csv`, `barrier.csv`, and `summary.json`.
pub fn cmd_solve(config_path: &Path, out: &Path) -> i32 {
    let config = match load_config(config_path) {
        Ok(config) => config,
        Err(code) => return code,
    };
    let solution = match solve_configured(&config) {
        Ok(solution) => solution,
        Err(code) => return code,
    };
    if let Err(err) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {err}", out.display());
        return EXIT_IO;
    }
    let probes = probe_rows(&config, &solution);
    for row in &probes {
        emit(&format!("V({}, {}) = {:.9}\n", row.x, row.regime, row.value));
    }
    let summary = summarize(&config.echo, &solution, &probes);
    if let Err(code) = write_artifact(out, report::VALUE_CSV, &render_value_csv(&solution))
        .and_then(|()| write_artifact(out, report::BARRIER_CSV, &render_barrier_csv(&solution)))
        .and_then(|()| write_artifact(out, report::SUMMARY_JSON, &render_json(&summary)))
    {
        return code;
    }
    if !solution.converged {
        eprintln!(
            "error: solver stopped after {} iterations with delta {:.3e} above tol {:.3e}",
            solution.iterations, solution.final_delta, config.options.tol
        );
        return EXIT_NO_CONVERGENCE;
    }
    EXIT_OK
}

/// `verify --config <path> --solution <dir> --out <dir>`: simulate the
/// solved policy at every probe and check the grid value against the
/// simulated mean within `3*stderr + 5*h*c_max`.
pub fn cmd_verify(config_path: &Path, solution_dir: &Path, out: &Path) -> i32 {
    let config = match load_config(config_path) {
        Ok(config) => config,
        Err(code) => return code,
    };
    let Some(verify) = config.verify.clone() else {
        eprintln!("error: config has no verify block");
        return EXIT_CONFIG;
    };
    if config.probes.is_empty() {
        eprintln!("error: config has no probes to verify");
        return EXIT_CONFIG;
    }
    let solution = match report::load_solution(
        solution_dir,
        config.grid.clone(),
        config.model.num_regimes(),
    ) {
        Ok(solution) => solution,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_CONFIG;
        }
    };
    let c_max = match max_weight(&config) {
        Ok(c_max) => c_max,
        Err(code) => return code,
    };

    let mut rows = Vec::with_capacity(config.probes.len());
    let mut all_pass = true;
    for probe in &config.probes {
        let sim = SimConfig {
            step: verify.dt_sim,
            horizon: verify.t_max,
            paths: verify.n_paths,
            seed: verify.seed,
            initial_surplus: probe.x,
            initial_regime: probe.regime,
        };
        let start = Instant::now();
        let estimate = match simulate_payoff(&config.model, &solution, &sim) {
            Ok(estimate) => estimate,
            Err(McError::UnconvergedPolicy) => {
                eprintln!("error: the loaded solution did not converge; nothing to verify");
                return EXIT_NO_CONVERGENCE;
            }
            Err(err) => {
                eprintln!("error: {err}");
                return EXIT_CONFIG;
            }
        };
        let value = solution.value(config.grid.nearest_index(probe.x), probe.regime);
        let abs_diff = (value - estimate.mean).abs();
        let bound = 3.0 * estimate.stderr + 5.0 * config.grid.step() * c_max;
        let pass = abs_diff <= bound;
        all_pass &= pass;
        eprintln!(
            "verify x = {}, regime = {}: mean {:.6} vs V {:.6} ({} paths, {:.3}s) -> {}",
            probe.x,
            probe.regime + 1,
            estimate.mean,
            value,
            estimate.paths,
            start.elapsed().as_secs_f64(),
            if pass { "ok" } else { "FAIL" }
        );
        rows.push(VerifyRow {
            x: probe.x,
            regime: probe.regime + 1,
            value,
            mean: estimate.mean,
            stderr: estimate.stderr,
            abs_diff,
            bound,
            ruin_fraction: estimate.ruin_fraction,
            pass,
        });
    }

    if let Err(err) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {err}", out.display());
        return EXIT_IO;
    }
    let doc = VerifyDoc {
        dt_sim: verify.dt_sim,
        t_max: verify.t_max,
        n_paths: verify.n_paths,
        seed: verify.seed,
        probes: rows,
        pass: all_pass,
    };
    if let Err(code) = write_artifact(out, report::VERIFY_JSON, &render_json(&doc)) {
        return code;
    }
    if all_pass {
        EXIT_OK
    } else {
        eprintln!("error: at least one probe missed its verification bound");
        EXIT_VERIFY
    }
}

/// `sweep --config <path> --h <list> --out <dir>`: solve at each grid step
/// and report probe-value changes between consecutive steps along with the
/// empirical convergence order.
pub fn cmd_sweep(config_path: &Path, steps: &[f64], out: &Path) -> i32 {
    let config = match load_config(config_path) {
        Ok(config) => config,
        Err(code) => return code,
    };
    if steps.is_empty() {
        eprintln!("error: sweep needs at least one grid step");
        return EXIT_CONFIG;
    }
    if config.probes.is_empty() {
        eprintln!("error: config has no probes to sweep");
        return EXIT_CONFIG;
    }

    let mut all_converged = true;
    let mut per_step: Vec<Vec<ProbeRow>> = Vec::with_capacity(steps.len());
    for &h in steps {
        let grid = match divopt_core::Grid::new(h, config.grid.cap()) {
            Ok(grid) => grid,
            Err(err) => {
                eprintln!("error: sweep step {h}: {err}");
                return EXIT_CONFIG;
            }
        };
        let mut run = config.clone();
        run.grid = grid;
        let solution = match solve_configured(&run) {
            Ok(solution) => solution,
            Err(code) => return code,
        };
        if !solution.converged {
            eprintln!("error: sweep step {h} did not converge");
            all_converged = false;
        }
        per_step.push(probe_rows(&run, &solution));
    }

    let mut rows = Vec::new();
    for (i, step_rows) in per_step.iter().enumerate() {
        for (p, row) in step_rows.iter().enumerate() {
            let diff = (i >= 1).then(|| row.value - per_step[i - 1][p].value);
            let order = match diff {
                Some(diff) if i >= 2 => {
                    let prev = per_step[i - 1][p].value - per_step[i - 2][p].value;
                    let ratio = (prev / diff).abs();
                    (diff != 0.0 && ratio.is_finite() && ratio > 0.0).then(|| ratio.log2())
                }
                _ => None,
            };
            rows.push(SweepRow {
                h: steps[i],
                x: row.x,
                regime: row.regime,
                value: row.value,
                diff,
                order,
            });
        }
    }

    if let Err(err) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {err}", out.display());
        return EXIT_IO;
    }
    if let Err(code) = write_artifact(out, report::SWEEP_CSV, &render_sweep_csv(&rows)) {
        return code;
    }
    if all_converged {
        EXIT_OK
    } else {
        EXIT_NO_CONVERGENCE
    }
}

/// `oracle --mu <f> --sigma2 <f> --r <f>`: print the closed-form
/// single-regime barrier and a value table on `[0, 2b*]`.
pub fn cmd_oracle(mu: f64, sigma2: f64, r: f64) -> i32 {
    let barrier = match optimal_barrier(mu, sigma2, r) {
        Ok(barrier) => barrier,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_CONFIG;
        }
    };
    let mut table = format!("optimal barrier: {barrier:.9}\nx,V\n");
    let rows = 20usize;
    for j in 0..=rows {
        let x = 2.0 * barrier * j as f64 / rows as f64;
        match barrier_value(mu, sigma2, r, x, barrier) {
            Ok(value) => {
                use std::fmt::Write as _;
                let _ = writeln!(table, "{x:.9},{value:.9}");
            }
            Err(err) => {
                eprintln!("error: {err}");
                return EXIT_CONFIG;
            }
        }
    }
    emit(&table);
    EXIT_OK
}
