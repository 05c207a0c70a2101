//! Independent Monte Carlo check of a solved policy.
//!
//! Paths follow the controlled surplus directly: regimes switch at
//! exponential clocks, the surplus diffuses by Euler steps under the
//! retention level the policy prescribes at the nearest grid state, and
//! whenever the policy marks that state singular the excess above the
//! payout level is paid out at once.  The discounted payout stream is
//! averaged across paths seeded deterministically from `(seed, path index)`,
//! so estimates are reproducible bit for bit regardless of thread count.

use crate::model::{ModelError, ModelSpec};
use crate::solver::{Action, Solution};
use rand::{Rng, SeedableRng};
use rand_distr::{Exp1, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use thiserror::Error;

/// Discount mass `r * horizon` required before the truncation tail (at most
/// `e^{-20}`) is considered negligible.
const DISCOUNT_TAIL: f64 = 20.0;

/// Leaf size below which path sums are accumulated sequentially; pairs of
/// leaves combine in a fixed binary tree so the total is independent of
/// chunking.
const PAIRWISE_LEAF: usize = 32;

#[derive(Debug, Error)]
pub enum McError {
    #[error("refusing to simulate a policy that has not converged")]
    UnconvergedPolicy,
    #[error("simulation step must be positive and at most h^2 = {limit}, got {step}")]
    BadStep { step: f64, limit: f64 },
    #[error("horizon {horizon} leaves a discount tail above e^-20; need at least {required}")]
    ShortHorizon { horizon: f64, required: f64 },
    #[error("path count must be positive")]
    NoPaths,
    #[error("initial regime {regime} out of range for {count} regimes")]
    BadRegime { regime: usize, count: usize },
    #[error("initial surplus must be finite and within [0, {cap}], got {surplus}")]
    BadSurplus { surplus: f64, cap: f64 },
    #[error("solution shape does not match the model")]
    ShapeMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Simulation request.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// Euler step; must not exceed the square of the grid step.
    pub step: f64,
    /// Simulation end time; `horizon * discount >= 20` is required.
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub initial_surplus: f64,
    pub initial_regime: usize,
}

/// Simulated discounted payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub seed: u64,
    /// Fraction of paths absorbed at zero surplus before the horizon.
    pub ruin_fraction: f64,
}

/// Estimate the discounted payoff of the solved policy by simulation.
pub fn simulate_payoff(
    model: &ModelSpec,
    solution: &Solution,
    config: &SimConfig,
) -> Result<McEstimate, McError> {
    let tables = SimTables::build(model, solution, config)?;
    let outcomes: Vec<(f64, bool)> = (0..config.paths)
        .into_par_iter()
        .map(|idx| simulate_path(&tables, config, idx as u64))
        .collect();
    let payoffs: Vec<f64> = outcomes.iter().map(|&(p, _)| p).collect();
    let n = config.paths as f64;
    let mean = pairwise_sum(&payoffs) / n;
    let squared: Vec<f64> = payoffs.iter().map(|&p| (p - mean) * (p - mean)).collect();
    let stderr = if config.paths > 1 {
        let variance = pairwise_sum(&squared) / (n - 1.0);
        (variance / n).sqrt()
    } else {
        0.0
    };
    let ruined = outcomes.iter().filter(|&&(_, r)| r).count();
    Ok(McEstimate {
        mean,
        stderr,
        paths: config.paths,
        seed: config.seed,
        ruin_fraction: ruined as f64 / n,
    })
}

/// Flattened per-state lookups for the hot loop.
struct SimTables {
    regimes: usize,
    /// Highest state used for policy lookups (the cap).
    last_index: usize,
    inv_step: f64,
    /// Whether the policy pays at this `(state, regime)`.
    singular: Vec<u8>,
    /// `(drift * dt, vol * sqrt(dt))` per `(state, regime)`: one cache line
    /// serves the whole Euler update.
    full_step: Vec<[f64; 2]>,
    /// Raw `(drift, vol)` for partial steps at switches.
    coeffs: Vec<[f64; 2]>,
    /// Retention level per `(state, regime)` (zero where singular).
    retention: Vec<f64>,
    /// Payout target per regime: one cell below the barrier.
    pay_level: Vec<f64>,
    /// Table index of the state reached by a payout, per regime.
    pay_index: Vec<usize>,
    /// Set when the dividend weight is constant: lets the payout skip the
    /// general closed-form integral.
    constant_weight: Option<f64>,
    /// Regime switch rates and cumulative jump tables.
    switch_rate: Vec<f64>,
    jump_cumulative: Vec<Vec<(f64, usize)>>,
    discount: f64,
    /// Discount factor for one full Euler step.
    step_factor: f64,
    weight: crate::model::DividendWeight,
    reward_active: bool,
    model: ModelSpec,
}

impl SimTables {
    fn build(model: &ModelSpec, solution: &Solution, config: &SimConfig) -> Result<Self, McError> {
        if !solution.converged {
            return Err(McError::UnconvergedPolicy);
        }
        let grid = &solution.grid;
        let m = model.num_regimes();
        if solution.regimes != m || solution.values.len() != grid.num_states() * m {
            return Err(McError::ShapeMismatch);
        }
        let h = grid.step();
        let limit = h * h;
        if !(config.step > 0.0) || config.step > limit + 1e-15 * limit {
            return Err(McError::BadStep {
                step: config.step,
                limit,
            });
        }
        let required = DISCOUNT_TAIL / model.payoff.discount;
        if config.horizon < required - 1e-9 * required {
            return Err(McError::ShortHorizon {
                horizon: config.horizon,
                required,
            });
        }
        if config.paths == 0 {
            return Err(McError::NoPaths);
        }
        if config.initial_regime >= m {
            return Err(McError::BadRegime {
                regime: config.initial_regime,
                count: m,
            });
        }
        if !config.initial_surplus.is_finite()
            || config.initial_surplus < 0.0
            || config.initial_surplus > grid.cap()
        {
            return Err(McError::BadSurplus {
                surplus: config.initial_surplus,
                cap: grid.cap(),
            });
        }

        let cap = grid.cap_index();
        let size = (cap + 1) * m;
        let mut singular = vec![0u8; size];
        let mut coeffs = vec![[0.0f64; 2]; size];
        let mut retention = vec![0.0; size];
        for state in 1..=cap {
            for regime in 0..m {
                let idx = state * m + regime;
                match solution.action(state, regime) {
                    Some(Action::Singular) => singular[idx] = 1,
                    Some(Action::Regular) => {
                        let u = solution
                            .control(state, regime)
                            .ok_or(McError::ShapeMismatch)?;
                        let (b, s) = model.drift_vol(regime, u)?;
                        coeffs[idx] = [b, s];
                        retention[idx] = u;
                    }
                    None => return Err(McError::ShapeMismatch),
                }
            }
        }
        let sq = config.step.sqrt();
        let full_step: Vec<[f64; 2]> = coeffs
            .iter()
            .map(|&[b, s]| [b * config.step, s * sq])
            .collect();
        // Payout target: one cell below the first singular state, i.e. the
        // top of the continuation region.  Regimes that never pay keep an
        // unreachable target.
        let mut pay_level = vec![f64::INFINITY; m];
        let mut pay_index = vec![0usize; m];
        for regime in 0..m {
            if let Some(b) = solution.barriers[regime] {
                pay_level[regime] = (b - h).max(0.0);
                pay_index[regime] = (grid.nearest_index(pay_level[regime])).max(1) * m + regime;
            }
        }
        let constant_weight = match model.payoff.weight {
            crate::model::DividendWeight::Constant { value } => Some(value),
            _ => None,
        };
        let mut switch_rate = Vec::with_capacity(m);
        let mut jump_cumulative = Vec::with_capacity(m);
        for regime in 0..m {
            let rate = model.regimes.switch_rate(regime);
            switch_rate.push(rate);
            let mut cum = Vec::new();
            if rate > 0.0 {
                let mut acc = 0.0;
                for other in 0..m {
                    if other == regime {
                        continue;
                    }
                    acc += model.regimes.generator[regime][other] / rate;
                    cum.push((acc, other));
                }
                if let Some(last) = cum.last_mut() {
                    last.0 = f64::INFINITY; // guard against rounding shortfall
                }
            }
            jump_cumulative.push(cum);
        }
        Ok(SimTables {
            regimes: m,
            last_index: cap,
            inv_step: 1.0 / h,
            singular,
            full_step,
            coeffs,
            retention,
            pay_level,
            pay_index,
            constant_weight,
            switch_rate,
            jump_cumulative,
            discount: model.payoff.discount,
            step_factor: (-model.payoff.discount * config.step).exp(),
            weight: model.payoff.weight.clone(),
            reward_active: !model.payoff.reward.is_zero(),
            model: model.clone(),
        })
    }

    /// Resolve the policy at the nearest state; pay out if it is singular.
    /// Returns the table index to diffuse from, or `None` when the payment
    /// absorbs the path at zero.
    #[inline(always)]
    fn resolve(&self, x: &mut f64, regime: usize, disc: f64, payoff: &mut f64) -> Option<usize> {
        let k = ((*x * self.inv_step + 0.5) as usize).clamp(1, self.last_index);
        let idx = k * self.regimes + regime;
        if self.singular[idx] == 0 {
            return Some(idx);
        }
        let target = self.pay_level[regime];
        let amount = *x - target;
        if amount <= 0.0 {
            return Some(idx);
        }
        *payoff += disc
            * match self.constant_weight {
                Some(v) => v * amount,
                None => self.weight.lump(target, *x),
            };
        *x = target;
        if target <= 0.0 {
            None
        } else {
            Some(self.pay_index[regime])
        }
    }
}

/// Decorrelates path seeds; the multiplier is the 64-bit golden-ratio
/// constant, so consecutive indices land far apart.
fn path_seed(seed: u64, idx: u64) -> u64 {
    seed ^ idx
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(0x6A09_E667_F3BC_C909)
}

fn simulate_path(tables: &SimTables, config: &SimConfig, idx: u64) -> (f64, bool) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(path_seed(config.seed, idx));
    let dt = config.step;
    let mut x = config.initial_surplus;
    let mut regime = config.initial_regime;
    let mut disc = 1.0f64;
    let mut payoff = 0.0f64;
    // The horizon resolves to whole Euler steps; regime switches insert
    // fractional steps on top, so the simulated span is never shorter than
    // requested.
    let mut steps_left = (config.horizon / dt).round() as u64;
    loop {
        // Occupation time in the current regime, split into full steps.
        let tau = exp_time(&mut rng, tables.switch_rate[regime]);
        let seg = if tau.is_finite() {
            ((tau / dt) as u64).min(steps_left)
        } else {
            steps_left
        };
        for _ in 0..seg {
            let idx_state = match tables.resolve(&mut x, regime, disc, &mut payoff) {
                Some(i) => i,
                None => return (payoff, true),
            };
            let z: f64 = rng.sample(StandardNormal);
            let fs = tables.full_step[idx_state];
            x += fs[0] + fs[1] * z;
            disc *= tables.step_factor;
            if tables.reward_active {
                payoff += disc
                    * tables.model.payoff.reward.rate(
                        x.max(0.0),
                        regime,
                        tables.retention[idx_state],
                    )
                    * dt;
            }
            if x <= 0.0 {
                return (payoff, true);
            }
        }
        steps_left -= seg;
        if steps_left == 0 {
            return (payoff, false);
        }
        // Fractional remainder of the occupation time, then the jump.
        let rem = tau - (seg as f64) * dt;
        if rem > 0.0 {
            let idx_state = match tables.resolve(&mut x, regime, disc, &mut payoff) {
                Some(i) => i,
                None => return (payoff, true),
            };
            let z: f64 = rng.sample(StandardNormal);
            let c = tables.coeffs[idx_state];
            x += c[0] * rem + c[1] * rem.sqrt() * z;
            disc *= (-tables.discount * rem).exp();
            if tables.reward_active {
                payoff += disc
                    * tables.model.payoff.reward.rate(
                        x.max(0.0),
                        regime,
                        tables.retention[idx_state],
                    )
                    * rem;
            }
            if x <= 0.0 {
                return (payoff, true);
            }
        }
        let draw: f64 = rng.random();
        for &(cum, target) in &tables.jump_cumulative[regime] {
            if draw <= cum {
                regime = target;
                break;
            }
        }
    }
}

fn exp_time<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    if rate > 0.0 {
        let e: f64 = rng.sample(Exp1);
        e / rate
    } else {
        f64::INFINITY
    }
}

/// Fixed-shape pairwise summation: deterministic and accurate to
/// `O(log n)` rounding errors regardless of input length.
fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_LEAF {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}
