//! Report artifacts: rendering of the solve/verify/sweep outputs and the
//! loader that reconstructs a solved policy from a solve directory.
//!
//! All renderers are pure string builders with a fixed field order and fixed
//! number formatting, so running the same configuration twice produces
//! byte-identical files.  Values in CSV files carry nine decimal places; JSON
//! numbers use the shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use divopt_core::{extract_barrier, Action, Grid, Solution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfigFile;

/// File names inside a solve output directory.
pub const VALUE_CSV: &str = "value.csv";
pub const BARRIER_CSV: &str = "barrier.csv";
pub const SUMMARY_JSON: &str = "summary.json";
/// File name of the verification report.
pub const VERIFY_JSON: &str = "verify.json";
/// File name of the grid-refinement report.
pub const SWEEP_CSV: &str = "sweep.csv";

const VALUE_HEADER: &str = "x,regime,V,action,u_star";

/// Why a solve directory could not be read back.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path} is not a valid summary: {message}")]
    Json { path: String, message: String },
    #[error("{path} line {line}: {message}")]
    Csv {
        path: String,
        line: usize,
        message: String,
    },
    #[error("solution does not match the configuration: {message}")]
    Shape { message: String },
}

/// Barrier entry in `summary.json`; regimes are 1-based in all reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierRow {
    pub regime: usize,
    pub barrier: Option<f64>,
    /// Whether every state above the barrier pays out.
    pub interval: bool,
}

/// Probe entry in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub x: f64,
    pub regime: usize,
    #[serde(rename = "V")]
    pub value: f64,
}

/// Contents of `summary.json`: the resolved configuration echo plus the
/// solve outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub config: RunConfigFile,
    pub converged: bool,
    pub iterations: usize,
    pub final_delta: f64,
    pub residual: f64,
    pub barriers: Vec<BarrierRow>,
    pub probes: Vec<ProbeRow>,
}

/// Per-probe entry in `verify.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub x: f64,
    pub regime: usize,
    /// Grid value at the probe.
    #[serde(rename = "V")]
    pub value: f64,
    /// Simulated mean discounted payoff.
    pub mean: f64,
    pub stderr: f64,
    /// `|V - mean|`.
    pub abs_diff: f64,
    /// Acceptance bound `3*stderr + 5*h*c_max`.
    pub bound: f64,
    pub ruin_fraction: f64,
    pub pass: bool,
}

/// Contents of `verify.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyDoc {
    pub dt_sim: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub probes: Vec<VerifyRow>,
    pub pass: bool,
}

/// One row of `sweep.csv`: the probe value at one grid step, the change
/// from the previous step, and the empirical convergence order once two
/// consecutive changes exist.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub h: f64,
    pub x: f64,
    /// 1-based regime.
    pub regime: usize,
    pub value: f64,
    /// `V(h) - V(previous h)`; absent on the first grid step.
    pub diff: Option<f64>,
    /// `log2(|previous diff| / |diff|)`; absent until two diffs exist or
    /// when a diff vanishes.
    pub order: Option<f64>,
}

/// Render `value.csv`: one row per grid state and regime, in state-major
/// order.  Boundary rows are labeled by their role; interior rows carry the
/// optimal action and, when the action is regular, the retention level.
pub fn render_value_csv(solution: &Solution) -> String {
    let grid = &solution.grid;
    let m = solution.regimes;
    let mut out = String::with_capacity(32 * grid.num_states() * m);
    out.push_str(VALUE_HEADER);
    out.push('\n');
    for state in 0..grid.num_states() {
        for regime in 0..m {
            let x = grid.x(state);
            let value = solution.value(state, regime);
            let (action, control) = if state == 0 {
                ("absorbing", None)
            } else if state == grid.reflect_index() {
                ("reflecting", None)
            } else {
                match solution.action(state, regime) {
                    Some(Action::Singular) => ("singular", None),
                    Some(Action::Regular) => ("regular", solution.control(state, regime)),
                    None => ("regular", None),
                }
            };
            let _ = write!(out, "{x:.9},{},{value:.9},{action},", regime + 1);
            if let Some(u) = control {
                let _ = write!(out, "{u:.9}");
            }
            out.push('\n');
        }
    }
    out
}

/// Render `barrier.csv`: the payout barrier per regime, empty when no
/// interior state pays out.
pub fn render_barrier_csv(solution: &Solution) -> String {
    let mut out = String::from("regime,barrier\n");
    for (regime, barrier) in solution.barriers.iter().enumerate() {
        match barrier {
            Some(b) => {
                let _ = writeln!(out, "{},{b:.9}", regime + 1);
            }
            None => {
                let _ = writeln!(out, "{},", regime + 1);
            }
        }
    }
    out
}

/// Assemble the summary document for a solved configuration.
pub fn summarize(echo: &RunConfigFile, solution: &Solution, probes: &[ProbeRow]) -> SummaryDoc {
    let barriers = solution
        .barriers
        .iter()
        .zip(&solution.barrier_is_interval)
        .enumerate()
        .map(|(regime, (barrier, interval))| BarrierRow {
            regime: regime + 1,
            barrier: *barrier,
            interval: *interval,
        })
        .collect();
    SummaryDoc {
        config: echo.clone(),
        converged: solution.converged,
        iterations: solution.iterations,
        final_delta: solution.final_delta,
        residual: solution.residual,
        barriers,
        probes: probes.to_vec(),
    }
}

/// Serialize a report document as pretty JSON with a trailing newline.
pub fn render_json<T: Serialize>(doc: &T) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("report documents always serialize");
    text.push('\n');
    text
}

/// Render `sweep.csv`.
pub fn render_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("h,x,regime,V,diff,order\n");
    for row in rows {
        let _ = write!(
            out,
            "{:.9},{:.9},{},{:.9},",
            row.h, row.x, row.regime, row.value
        );
        if let Some(diff) = row.diff {
            let _ = write!(out, "{diff:.9}");
        }
        out.push(',');
        if let Some(order) = row.order {
            let _ = write!(out, "{order:.4}");
        }
        out.push('\n');
    }
    out
}

/// Read a solve directory back into a `Solution` whose shape matches the
/// given grid and regime count.  Values, actions, and retention levels come
/// from `value.csv`; convergence metadata comes from `summary.json`; barriers
/// are re-derived from the actions.
pub fn load_solution(dir: &Path, grid: Grid, regimes: usize) -> Result<Solution, LoadError> {
    let summary_path = dir.join(SUMMARY_JSON);
    let summary_text = std::fs::read_to_string(&summary_path).map_err(|err| LoadError::Io {
        path: summary_path.display().to_string(),
        message: err.to_string(),
    })?;
    let summary: SummaryDoc =
        serde_json::from_str(&summary_text).map_err(|err| LoadError::Json {
            path: summary_path.display().to_string(),
            message: err.to_string(),
        })?;

    let value_path = dir.join(VALUE_CSV);
    let text = std::fs::read_to_string(&value_path).map_err(|err| LoadError::Io {
        path: value_path.display().to_string(),
        message: err.to_string(),
    })?;
    let path = value_path.display().to_string();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == VALUE_HEADER => {}
        Some((_, header)) => {
            return Err(LoadError::Csv {
                path,
                line: 1,
                message: format!("unexpected header {header:?}"),
            })
        }
        None => {
            return Err(LoadError::Csv {
                path,
                line: 1,
                message: "file is empty".to_string(),
            })
        }
    }

    let num_states = grid.num_states();
    let mut values = vec![0.0f64; num_states * regimes];
    let mut actions = vec![Action::Regular; (num_states - 2) * regimes];
    let mut controls = vec![None; (num_states - 2) * regimes];
    let mut row = 0usize;
    for (index, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = index + 1;
        let csv_error = |message: String| LoadError::Csv {
            path: path.clone(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(csv_error(format!("expected 5 fields, got {}", fields.len())));
        }
        if row >= num_states * regimes {
            return Err(csv_error("more rows than grid states".to_string()));
        }
        let state = row / regimes;
        let regime = row % regimes;
        let x: f64 = fields[0]
            .parse()
            .map_err(|_| csv_error(format!("bad x value {:?}", fields[0])))?;
        if (x - grid.x(state)).abs() > 1e-6 {
            return Err(csv_error(format!(
                "x = {x} does not match grid point {} for state {state}",
                grid.x(state)
            )));
        }
        let file_regime: usize = fields[1]
            .parse()
            .map_err(|_| csv_error(format!("bad regime {:?}", fields[1])))?;
        if file_regime != regime + 1 {
            return Err(csv_error(format!(
                "regime {} out of order, expected {}",
                file_regime,
                regime + 1
            )));
        }
        values[state * regimes + regime] = fields[2]
            .parse()
            .map_err(|_| csv_error(format!("bad value {:?}", fields[2])))?;
        if state >= 1 && state < grid.reflect_index() {
            let slot = (state - 1) * regimes + regime;
            match fields[3] {
                "regular" => {
                    actions[slot] = Action::Regular;
                    controls[slot] = if fields[4].is_empty() {
                        None
                    } else {
                        Some(
                            fields[4]
                                .parse()
                                .map_err(|_| csv_error(format!("bad u_star {:?}", fields[4])))?,
                        )
                    };
                }
                "singular" => {
                    actions[slot] = Action::Singular;
                    controls[slot] = None;
                }
                other => return Err(csv_error(format!("unknown interior action {other:?}"))),
            }
        }
        row += 1;
    }
    if row != num_states * regimes {
        return Err(LoadError::Shape {
            message: format!(
                "value table has {row} rows but the grid needs {}",
                num_states * regimes
            ),
        });
    }

    let (barriers, barrier_is_interval) = extract_barrier(&grid, regimes, &actions);
    Ok(Solution {
        grid,
        regimes,
        values,
        actions,
        controls,
        barriers,
        barrier_is_interval,
        iterations: summary.iterations,
        final_delta: summary.final_delta,
        converged: summary.converged,
        residual: summary.residual,
        delta_history: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use divopt_core::{solve_policy_iteration, SolverOptions};

    fn tiny_solution() -> (crate::config::ResolvedConfig, Solution) {
        let config = parse_config(
            r#"{
                "model": {
                    "type": "proportional",
                    "claim": { "dist": "exponential", "rate": 1.0 },
                    "beta": [1.0, 10.0],
                    "Q": [[-0.5, 0.5], [0.5, -0.5]],
                    "r": 0.05
                },
                "payoff": {
                    "c": { "type": "constant", "value": 1.0 },
                    "f": { "type": "zero" }
                },
                "control": { "u_min": 0.0, "u_max": 1.0, "n_u": 11 },
                "grid": { "h": 0.5, "B": 20.0 },
                "probes": [[10.0, 1]]
            }"#,
        )
        .expect("tiny config parses");
        let solution = solve_policy_iteration(&config.model, &config.grid, SolverOptions::default())
            .expect("tiny solve succeeds");
        (config, solution)
    }

    #[test]
    fn value_csv_has_one_row_per_state_and_regime() {
        let (config, solution) = tiny_solution();
        let csv = render_value_csv(&solution);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], VALUE_HEADER, "header is pinned");
        assert_eq!(
            rows.len(),
            1 + config.grid.num_states() * 2,
            "one row per state and regime"
        );
        assert!(
            rows[1].starts_with("0.000000000,1,0.000000000,absorbing,"),
            "the ruin state is labeled, got {:?}",
            rows[1]
        );
        let last = rows.last().expect("rows exist");
        assert!(
            last.contains("reflecting"),
            "the reflecting state is labeled, got {last:?}"
        );
    }

    #[test]
    fn loaded_solution_matches_the_written_one() {
        let (config, solution) = tiny_solution();
        let dir = tempfile::tempdir().expect("tempdir");
        let probes = vec![ProbeRow {
            x: 10.0,
            regime: 1,
            value: solution.value(config.grid.nearest_index(10.0), 0),
        }];
        std::fs::write(dir.path().join(VALUE_CSV), render_value_csv(&solution)).unwrap();
        std::fs::write(dir.path().join(BARRIER_CSV), render_barrier_csv(&solution)).unwrap();
        std::fs::write(
            dir.path().join(SUMMARY_JSON),
            render_json(&summarize(&config.echo, &solution, &probes)),
        )
        .unwrap();

        let loaded = load_solution(dir.path(), config.grid, 2).expect("solution loads back");
        assert_eq!(loaded.converged, solution.converged);
        assert_eq!(loaded.iterations, solution.iterations);
        assert_eq!(loaded.actions, solution.actions, "actions survive the trip");
        assert_eq!(
            loaded.barriers, solution.barriers,
            "barriers are re-derived identically"
        );
        let worst = loaded
            .values
            .iter()
            .zip(&solution.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(
            worst <= 5e-10,
            "values round-trip through 9 decimal places, worst {worst}"
        );
        for (a, b) in loaded.controls.iter().zip(&solution.controls) {
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!(
                    (a - b).abs() <= 5e-10,
                    "controls round-trip through 9 decimals"
                ),
                other => panic!("control presence changed: {other:?}"),
            }
        }
    }

    #[test]
    fn tampered_header_is_rejected() {
        let (config, solution) = tiny_solution();
        let dir = tempfile::tempdir().expect("tempdir");
        let csv = render_value_csv(&solution).replace(VALUE_HEADER, "x,regime,V");
        std::fs::write(dir.path().join(VALUE_CSV), csv).unwrap();
        std::fs::write(
            dir.path().join(SUMMARY_JSON),
            render_json(&summarize(&config.echo, &solution, &[])),
        )
        .unwrap();
        let err = load_solution(dir.path(), config.grid, 2).unwrap_err();
        assert!(
            matches!(err, LoadError::Csv { line: 1, .. }),
            "a bad header fails on line 1, got {err:?}"
        );
    }

    #[test]
    fn sweep_rows_render_with_optional_fields() {
        let rows = vec![
            SweepRow {
                h: 0.2,
                x: 10.0,
                regime: 1,
                value: 3.5,
                diff: None,
                order: None,
            },
            SweepRow {
                h: 0.1,
                x: 10.0,
                regime: 1,
                value: 3.4,
                diff: Some(-0.1),
                order: None,
            },
            SweepRow {
                h: 0.05,
                x: 10.0,
                regime: 1,
                value: 3.35,
                diff: Some(-0.05),
                order: Some(1.0),
            },
        ];
        let csv = render_sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "h,x,regime,V,diff,order");
        assert!(
            lines[1].ends_with(",,"),
            "missing diff and order render empty, got {:?}",
            lines[1]
        );
        assert!(
            lines[2].contains(",-0.100000000,"),
            "diff renders with nine decimals, got {:?}",
            lines[2]
        );
        assert!(
            lines[3].ends_with(",1.0000"),
            "order renders with four decimals, got {:?}",
            lines[3]
        );
    }
}
