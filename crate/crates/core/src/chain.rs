//! Surplus grid and the locally consistent transition law of the controlled
//! chain.
//!
//! Interior moves mimic the diffusion: one step up or down by `h`, or a
//! regime switch in place, with probabilities built from the drift,
//! volatility, and generator row so that the one-step mean and variance match
//! `b * dt` and `sigma^2 * dt` to first order.  Dividend payouts and the
//! reflecting overflow state move down by `h` instantaneously.

use crate::model::{ModelError, ModelSpec, RunningReward};
use thiserror::Error;

/// Grid construction errors.
#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("surplus cap must be positive and finite, got {0}")]
    BadCap(f64),
    #[error("cap {cap} is not an integer multiple of step {step}")]
    CapNotMultiple { cap: f64, step: f64 },
}

/// Chain-level errors.
#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("transition kernel degenerates at regime {regime}: no diffusion, drift, or switching")]
    DegenerateKernel { regime: usize },
    #[error("state {0} is not interior")]
    NotInterior(usize),
    #[error("cannot pay dividends from the ruin state")]
    CannotPayAtRuin,
    #[error("state {0} is not the reflecting boundary")]
    NotReflecting(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Uniform surplus grid `0, h, 2h, ..., B, B+h`.
///
/// State 0 absorbs (ruin), states `h..=B` are interior, and `B+h` is the
/// reflecting overflow state that caps the domain: reaching it forces an
/// immediate dividend of `h` back down to `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    step: f64,
    cap_steps: usize,
}

impl Grid {
    /// Build a grid with step `h` and cap `B`; `B` must be a positive
    /// integer multiple of `h` (to relative tolerance 1e-9).
    pub fn new(step: f64, cap: f64) -> Result<Self, GridError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(GridError::BadStep(step));
        }
        if !(cap.is_finite() && cap > 0.0) {
            return Err(GridError::BadCap(cap));
        }
        let ratio = cap / step;
        let cap_steps = ratio.round();
        if cap_steps < 1.0 || (ratio - cap_steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(GridError::CapNotMultiple { cap, step });
        }
        Ok(Grid {
            step,
            cap_steps: cap_steps as usize,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// The cap `B` as represented on the grid.
    pub fn cap(&self) -> f64 {
        self.cap_steps as f64 * self.step
    }

    /// Index of the cap state `B`.
    pub fn cap_index(&self) -> usize {
        self.cap_steps
    }

    /// Index of the reflecting overflow state `B + h`.
    pub fn reflect_index(&self) -> usize {
        self.cap_steps + 1
    }

    /// Total number of states including ruin and the overflow state.
    pub fn num_states(&self) -> usize {
        self.cap_steps + 2
    }

    /// Surplus level of state `k`.
    pub fn x(&self, state: usize) -> f64 {
        state as f64 * self.step
    }

    pub fn is_interior(&self, state: usize) -> bool {
        state >= 1 && state <= self.cap_steps
    }

    /// Nearest grid state to an arbitrary surplus level, clamped to the grid.
    pub fn nearest_index(&self, surplus: f64) -> usize {
        let k = (surplus / self.step).round();
        if k <= 0.0 {
            0
        } else if k >= self.reflect_index() as f64 {
            self.reflect_index()
        } else {
            k as usize
        }
    }
}

/// One-step law at an interior state for a fixed regime and retention level.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    /// Probability of moving up by `h`.
    pub p_up: f64,
    /// Probability of moving down by `h`.
    pub p_down: f64,
    /// Probability of switching to each regime (entry at the current regime
    /// is zero).  Together with `p_up` and `p_down` these sum to one.
    pub p_switch: Vec<f64>,
    /// Time advanced by one chain step.
    pub dt: f64,
}

impl TransitionKernel {
    pub fn total(&self) -> f64 {
        self.p_up + self.p_down + self.p_switch.iter().sum::<f64>()
    }
}

/// Transition law at an interior state.
///
/// With `D = sigma^2 + h|b| + h^2 (r - q_ll)` the probabilities are
/// `p_up = (sigma^2/2 + h b^+) / (D - r h^2)`,
/// `p_down = (sigma^2/2 + h b^-) / (D - r h^2)`,
/// `p_switch[j] = h^2 q_lj / (D - r h^2)`, and the step advances time by
/// `dt = h^2 / D`.  The numerators sum exactly to the denominator, so the
/// law is a genuine probability distribution; it degenerates only when
/// drift, volatility, and switching all vanish.
pub fn regular_kernel(
    model: &ModelSpec,
    grid: &Grid,
    state: usize,
    regime: usize,
    retention: f64,
) -> Result<TransitionKernel, ChainError> {
    if !grid.is_interior(state) {
        return Err(ChainError::NotInterior(state));
    }
    let (b, sigma) = model.drift_vol(regime, retention)?;
    let h = grid.step();
    let r = model.payoff.discount;
    let q_row = &model.regimes.generator[regime];
    let q_self = q_row[regime];
    let s2 = sigma * sigma;
    let normalizer = s2 + h * b.abs() + h * h * (r - q_self);
    let denom = normalizer - r * h * h; // = sigma^2 + h|b| - h^2 q_ll >= 0
    if !(denom > 0.0) {
        return Err(ChainError::DegenerateKernel { regime });
    }
    let p_up = (0.5 * s2 + h * b.max(0.0)) / denom;
    let p_down = (0.5 * s2 + h * (-b).max(0.0)) / denom;
    let p_switch: Vec<f64> = q_row
        .iter()
        .enumerate()
        .map(|(j, &q)| if j == regime { 0.0 } else { h * h * q / denom })
        .collect();
    let kernel = TransitionKernel {
        p_up,
        p_down,
        p_switch,
        dt: h * h / normalizer,
    };
    let total = kernel.total();
    assert!(
        (total - 1.0).abs() <= 1e-12,
        "kernel must be a probability distribution, total {total}"
    );
    Ok(kernel)
}

/// Singular (dividend) move: pay `h` and step down one state.  No time
/// passes and no discounting applies.
pub fn singular_step(grid: &Grid, state: usize) -> Result<(usize, f64), ChainError> {
    if state == 0 {
        return Err(ChainError::CannotPayAtRuin);
    }
    if !grid.is_interior(state) {
        return Err(ChainError::NotInterior(state));
    }
    Ok((state - 1, grid.step()))
}

/// Forced move at the reflecting overflow state `B + h`: pay `h` and return
/// to `B` instantaneously.
pub fn reflect(grid: &Grid, state: usize) -> Result<(usize, f64), ChainError> {
    if state != grid.reflect_index() {
        return Err(ChainError::NotReflecting(state));
    }
    Ok((grid.cap_index(), grid.step()))
}

/// First- and second-moment errors of one chain step against the diffusion
/// increments `b * dt` and `sigma^2 * dt`.  Both are `O(h * dt)`.
pub fn check_local_consistency(
    model: &ModelSpec,
    grid: &Grid,
    state: usize,
    regime: usize,
    retention: f64,
) -> Result<(f64, f64), ChainError> {
    let kernel = regular_kernel(model, grid, state, regime, retention)?;
    let (b, sigma) = model.drift_vol(regime, retention)?;
    let h = grid.step();
    let mean = h * (kernel.p_up - kernel.p_down);
    let second = h * h * (kernel.p_up + kernel.p_down);
    let var = second - mean * mean;
    Ok((
        (mean - b * kernel.dt).abs(),
        (var - sigma * sigma * kernel.dt).abs(),
    ))
}

/// Transition data tabulated over the control mesh, one entry per
/// `(regime, control)`.
///
/// Drift and volatility do not depend on the surplus level, so one kernel
/// serves every interior state; the solver's inner loop reads contiguous
/// per-control arrays with the dynamic-programming discount factor already
/// folded in.
pub struct KernelCache {
    mesh: Vec<f64>,
    regimes: Vec<RegimeKernels>,
    reward_active: bool,
}

/// Per-regime arrays indexed by control-mesh position.
pub(crate) struct RegimeKernels {
    /// `(1 - r dt) * p_up` per control.
    pub disc_up: Vec<f64>,
    /// `(1 - r dt) * p_down` per control.
    pub disc_down: Vec<f64>,
    /// `(1 - r dt) * p_switch[j]` per control, one vector per target regime
    /// (the entry for the own regime stays empty).
    pub disc_switch: Vec<Vec<f64>>,
    /// Interpolation interval per control.
    pub dt: Vec<f64>,
    /// Dynamic-programming discount `1 - r dt` per control, in (0, 1).
    /// Already folded into the arrays above; kept for verification.
    #[cfg_attr(not(test), allow(dead_code))]
    pub discount: Vec<f64>,
}

impl KernelCache {
    /// Tabulate kernels for every regime and mesh control.
    ///
    /// The per-step discount is `1 - r dt`, the factor under which the
    /// dynamic-programming recursion is an exact rearrangement of the upwind
    /// finite-difference system; it differs from `exp(-r dt)` by `O(dt^2)`
    /// and keeps the converged solution an exact root of the discrete
    /// variational inequality (see the residual check in the solver).
    pub fn build(model: &ModelSpec, grid: &Grid) -> Result<Self, ChainError> {
        let mesh = model.control.values();
        let m = model.num_regimes();
        let r = model.payoff.discount;
        let mut regimes = Vec::with_capacity(m);
        for regime in 0..m {
            let n = mesh.len();
            let mut disc_up = Vec::with_capacity(n);
            let mut disc_down = Vec::with_capacity(n);
            let mut disc_switch: Vec<Vec<f64>> = (0..m).map(|_| Vec::new()).collect();
            let mut dt = Vec::with_capacity(n);
            let mut discount = Vec::with_capacity(n);
            for &u in &mesh {
                // Coefficients are state-free; state 1 is always interior.
                let kernel = regular_kernel(model, grid, 1, regime, u)?;
                let disc = 1.0 - r * kernel.dt;
                debug_assert!(disc > 0.0 && disc < 1.0, "per-step discount must contract");
                disc_up.push(disc * kernel.p_up);
                disc_down.push(disc * kernel.p_down);
                for (j, col) in disc_switch.iter_mut().enumerate() {
                    if j != regime {
                        col.push(disc * kernel.p_switch[j]);
                    }
                }
                dt.push(kernel.dt);
                discount.push(disc);
            }
            regimes.push(RegimeKernels {
                disc_up,
                disc_down,
                disc_switch,
                dt,
                discount,
            });
        }
        Ok(KernelCache {
            mesh,
            regimes,
            reward_active: !matches!(model.payoff.reward, RunningReward::Zero),
        })
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn num_regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn reward_active(&self) -> bool {
        self.reward_active
    }

    pub(crate) fn regime(&self, regime: usize) -> &RegimeKernels {
        &self.regimes[regime]
    }
}
