//! Closed-form benchmark for the uncontrolled single-regime problem.
//!
//! With constant drift `mu`, variance `sigma2`, discount `r`, unit dividend
//! weight, and no running reward, the optimal payout policy is a reflecting
//! barrier `b`.  Below the barrier the value is a combination of the two
//! exponentials solving the homogeneous equation
//! `(sigma2 / 2) V'' + mu V' - r V = 0`; above it the value grows linearly
//! with unit slope.  These formulas pin the solver's output on a problem
//! where no discretization is involved.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("variance must be positive, got {0}")]
    BadVariance(f64),
    #[error("discount rate must be positive, got {0}")]
    BadDiscount(f64),
    #[error("surplus must be nonnegative and finite, got {0}")]
    BadSurplus(f64),
    #[error("barrier must be positive and finite, got {0}")]
    BadBarrier(f64),
}

/// Roots `(theta_plus, theta_minus)` of `(sigma2/2) t^2 + mu t - r = 0`.
/// `theta_plus > 0 > theta_minus` whenever `sigma2 > 0` and `r > 0`.
pub fn characteristic_roots(mu: f64, sigma2: f64, r: f64) -> Result<(f64, f64), OracleError> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(OracleError::BadVariance(sigma2));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(OracleError::BadDiscount(r));
    }
    let root = (mu * mu + 2.0 * sigma2 * r).sqrt();
    Ok(((-mu + root) / sigma2, (-mu - root) / sigma2))
}

/// Value of the barrier strategy reflecting at `barrier`, evaluated at
/// surplus `x`.  Normalized so the slope at the barrier is one; above the
/// barrier the excess is paid immediately.
pub fn barrier_value(mu: f64, sigma2: f64, r: f64, x: f64, barrier: f64) -> Result<f64, OracleError> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(OracleError::BadSurplus(x));
    }
    if !(barrier > 0.0) || !barrier.is_finite() {
        return Err(OracleError::BadBarrier(barrier));
    }
    let (tp, tm) = characteristic_roots(mu, sigma2, r)?;
    let g = |y: f64| (tp * y).exp() - (tm * y).exp();
    let g_prime = tp * (tp * barrier).exp() - tm * (tm * barrier).exp();
    if x <= barrier {
        Ok(g(x) / g_prime)
    } else {
        Ok(g(barrier) / g_prime + (x - barrier))
    }
}

/// Barrier level maximizing the strategy value: the point where the
/// curvature of the homogeneous solution vanishes (smooth pasting), at
/// `ln(theta_minus^2 / theta_plus^2) / (theta_plus - theta_minus)`.
pub fn optimal_barrier(mu: f64, sigma2: f64, r: f64) -> Result<f64, OracleError> {
    let (tp, tm) = characteristic_roots(mu, sigma2, r)?;
    Ok(((tm * tm) / (tp * tp)).ln() / (tp - tm))
}
