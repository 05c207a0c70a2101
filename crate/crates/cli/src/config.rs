//! Run-configuration schema: JSON parsing, validation, and conversion into
//! the core model types.
//!
//! A configuration carries five blocks — `model`, `payoff`, `control`,
//! `grid`, `solver` — plus an optional `verify` block and a list of probe
//! points.  `grid`, `solver`, and the optional parts of `verify` have
//! defaults, so a minimal file needs only the model, payoff, and control.
//!
//! Errors fall into three classes, all reported before any solving starts:
//! syntax (malformed JSON, with line and column), schema (a recognized file
//! that does not fit the data model, with a `$.path.to.field` location), and
//! semantic (well-formed data that violates a model invariant, such as a
//! generator row that does not sum to zero).

use divopt_core::{
    ClaimDistribution, ControlMesh, DividendWeight, Grid, ModelSpec, PayoffSpec, RegimeSet,
    Reinsurance, RewardTable, RunningReward, SolverOptions,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How a configuration failed to resolve.  Every variant maps to the
/// configuration-error exit code.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The text is not valid JSON.
    #[error("config syntax error: {message}")]
    Syntax { message: String },
    /// Valid JSON that does not match the expected shape.
    #[error("config schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    /// Structurally valid data that breaks a model invariant.
    #[error("config is inconsistent:\n{}", violations.join("\n"))]
    Semantic { violations: Vec<String> },
}

/// Reinsurance form selector for the `model.type` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReinsuranceKind {
    Proportional,
    ExcessOfLoss,
}

/// Claim-size law, tagged by `dist`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum ClaimBlock {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Table { points: Vec<(f64, f64)> },
}

/// Dividend weight, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeightBlock {
    Constant { value: f64 },
    ExpMarginal { decay: f64 },
}

/// Running reward, tagged by `type`.  The tabulated form lists one
/// surplus-by-control sheet of sampled rates per regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RewardBlock {
    Zero,
    Tabulated {
        surplus: Vec<f64>,
        control: Vec<f64>,
        values: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(rename = "type")]
    pub kind: ReinsuranceKind,
    pub claim: ClaimBlock,
    /// Claim arrival intensity per regime.
    pub beta: Vec<f64>,
    /// Regime-switching generator, row per regime.
    #[serde(rename = "Q")]
    pub generator: Vec<Vec<f64>>,
    /// Discount rate.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffBlock {
    /// Weight on each unit of dividend paid.
    pub c: WeightBlock,
    /// Running reward rate.
    pub f: RewardBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBlock {
    pub u_min: f64,
    pub u_max: f64,
    #[serde(default = "default_n_u")]
    pub n_u: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(rename = "B", default = "default_cap")]
    pub cap: f64,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            h: default_h(),
            cap: default_cap(),
        }
    }
}

/// Solver selector for the `solver.method` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ValueIteration,
    PolicyIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_method")]
    pub method: SolveMethod,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            method: default_method(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Simulation settings for the `verify` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    #[serde(default = "default_dt_sim")]
    pub dt_sim: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock {
            dt_sim: default_dt_sim(),
            t_max: default_t_max(),
            n_paths: default_n_paths(),
            seed: default_seed(),
        }
    }
}

fn default_n_u() -> usize {
    101
}
fn default_h() -> f64 {
    0.1
}
fn default_cap() -> f64 {
    100.0
}
fn default_method() -> SolveMethod {
    SolveMethod::PolicyIteration
}
fn default_tol() -> f64 {
    1e-9
}
fn default_max_iter() -> usize {
    200_000
}
fn default_dt_sim() -> f64 {
    1e-3
}
fn default_t_max() -> f64 {
    400.0
}
fn default_n_paths() -> usize {
    100_000
}
fn default_seed() -> u64 {
    1
}

/// On-disk configuration, blocks as written.  Serializing a parsed file
/// yields the same configuration with all defaults materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: ModelBlock,
    pub payoff: PayoffBlock,
    pub control: ControlBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyBlock>,
    /// Probe points `[x, regime]` with 1-based regimes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<(f64, usize)>,
}

/// A probe point after resolution: surplus snapped to the grid and the
/// regime converted to its 0-based index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub x: f64,
    pub regime: usize,
}

/// A configuration ready to run: core model and grid, solver choice, the
/// resolved probes, and an echo of the file with defaults and snapping
/// applied (this echo is what reports embed).
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub model: ModelSpec,
    pub grid: Grid,
    pub method: SolveMethod,
    pub options: SolverOptions,
    pub verify: Option<VerifyBlock>,
    pub probes: Vec<Probe>,
    pub echo: RunConfigFile,
    /// Non-fatal notes (probe snapping), for stderr.
    pub warnings: Vec<String>,
}

/// Parse and fully resolve a configuration from JSON text.
pub fn parse_config(text: &str) -> Result<ResolvedConfig, ConfigError> {
    let deserializer = &mut serde_json::Deserializer::from_str(text);
    let file: RunConfigFile = match serde_path_to_error::deserialize(deserializer) {
        Ok(file) => file,
        Err(err) => {
            let path = err.path().to_string();
            let inner = err.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
                    ConfigError::Syntax {
                        message: inner.to_string(),
                    }
                }
                _ => ConfigError::Schema {
                    path: if path == "." {
                        "$".to_string()
                    } else {
                        format!("$.{path}")
                    },
                    message: inner.to_string(),
                },
            });
        }
    };
    resolve(file)
}

/// Resolve an already-deserialized configuration.
pub fn resolve(file: RunConfigFile) -> Result<ResolvedConfig, ConfigError> {
    let model = build_model(&file)?;

    let mut violations = model.validate();
    let grid = match Grid::new(file.grid.h, file.grid.cap) {
        Ok(grid) => Some(grid),
        Err(err) => {
            violations.push(err.to_string());
            None
        }
    };
    if !(file.solver.tol > 0.0 && file.solver.tol.is_finite()) {
        violations.push(format!(
            "solver tol must be positive and finite, got {}",
            file.solver.tol
        ));
    }
    if file.solver.max_iter == 0 {
        violations.push("solver max_iter must be positive".to_string());
    }

    let mut probes = Vec::with_capacity(file.probes.len());
    let mut warnings = Vec::new();
    let mut echo = file.clone();
    if let Some(grid) = &grid {
        for (slot, &(x, regime)) in echo.probes.iter_mut().zip(&file.probes) {
            if regime < 1 || regime > model.num_regimes() {
                violations.push(format!(
                    "probe regime {regime} out of range 1..={}",
                    model.num_regimes()
                ));
                continue;
            }
            if !(x.is_finite() && (0.0..=grid.cap()).contains(&x)) {
                violations.push(format!(
                    "probe x {x} outside the surplus range [0, {}]",
                    grid.cap()
                ));
                continue;
            }
            let snapped = grid.x(grid.nearest_index(x));
            if (snapped - x).abs() > 1e-9 * x.abs().max(1.0) {
                warnings.push(format!(
                    "probe x {x} is not a multiple of h = {}; snapped to {snapped}",
                    grid.step()
                ));
            }
            slot.0 = snapped;
            probes.push(Probe {
                x: snapped,
                regime: regime - 1,
            });
        }
    }

    if !violations.is_empty() {
        return Err(ConfigError::Semantic { violations });
    }
    let grid = grid.expect("grid errors were reported as violations");

    Ok(ResolvedConfig {
        model,
        grid,
        method: file.solver.method,
        options: SolverOptions {
            tol: file.solver.tol,
            max_iter: file.solver.max_iter,
        },
        verify: file.verify.clone(),
        probes,
        echo,
        warnings,
    })
}

/// Convert the model and payoff blocks into a core `ModelSpec`.  Shape
/// problems in the tabulated reward are reported here because the nested
/// sheets must be flattened; value-level invariants are left to the model's
/// own validation.
fn build_model(file: &RunConfigFile) -> Result<ModelSpec, ConfigError> {
    let reinsurance = match file.model.kind {
        ReinsuranceKind::Proportional => Reinsurance::Proportional,
        ReinsuranceKind::ExcessOfLoss => Reinsurance::ExcessOfLoss,
    };
    let claim = match &file.model.claim {
        ClaimBlock::Exponential { rate } => ClaimDistribution::Exponential { rate: *rate },
        ClaimBlock::Uniform { lo, hi } => ClaimDistribution::Uniform { lo: *lo, hi: *hi },
        ClaimBlock::Table { points } => ClaimDistribution::Table {
            points: points.clone(),
        },
    };
    let weight = match &file.payoff.c {
        WeightBlock::Constant { value } => DividendWeight::Constant { value: *value },
        WeightBlock::ExpMarginal { decay } => DividendWeight::ExpMarginal { decay: *decay },
    };
    let reward = match &file.payoff.f {
        RewardBlock::Zero => RunningReward::Zero,
        RewardBlock::Tabulated {
            surplus,
            control,
            values,
        } => {
            let regimes = file.model.beta.len();
            let mut violations = Vec::new();
            if values.len() != regimes {
                violations.push(format!(
                    "reward table has {} sheets but the model has {regimes} regimes",
                    values.len()
                ));
            }
            for (l, sheet) in values.iter().enumerate() {
                if sheet.len() != surplus.len() {
                    violations.push(format!(
                        "reward sheet {l} has {} rows but {} surplus samples",
                        sheet.len(),
                        surplus.len()
                    ));
                }
                for (i, row) in sheet.iter().enumerate() {
                    if row.len() != control.len() {
                        violations.push(format!(
                            "reward sheet {l} row {i} has {} entries but {} control samples",
                            row.len(),
                            control.len()
                        ));
                    }
                }
            }
            if !violations.is_empty() {
                return Err(ConfigError::Semantic { violations });
            }
            RunningReward::Tabulated(RewardTable {
                surplus: surplus.clone(),
                control: control.clone(),
                values: values
                    .iter()
                    .map(|sheet| sheet.iter().flatten().copied().collect())
                    .collect(),
            })
        }
    };
    Ok(ModelSpec {
        reinsurance,
        claim,
        regimes: RegimeSet {
            generator: file.model.generator.clone(),
            intensity: file.model.beta.clone(),
        },
        payoff: PayoffSpec {
            weight,
            reward,
            discount: file.model.r,
        },
        control: ControlMesh {
            min: file.control.u_min,
            max: file.control.u_max,
            points: file.control.n_u,
        },
    })
}
