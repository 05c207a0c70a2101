//! Model data for the controlled surplus process: claim-size laws, the regime
//! environment, the reinsurance response, and the payoff specification.
//!
//! Everything here is plain data plus closed-form evaluation.  The chain and
//! solver layers consume these types but never look inside the claim law:
//! they see only drift/volatility pairs and payoff weights.

use thiserror::Error;

/// Evaluation errors for model quantities.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("retention must be nonnegative and finite, got {0}")]
    InvalidRetention(f64),
    #[error("retention {retention} lies beyond the tabulated claim support (last abscissa {support})")]
    OutOfSupport { retention: f64, support: f64 },
    #[error("regime index {index} out of range for {count} regimes")]
    BadRegime { index: usize, count: usize },
    #[error("surplus must be nonnegative and finite, got {0}")]
    BadState(f64),
}

/// Number of uniform quadrature panels used for tabulated survival functions.
///
/// The trapezoid error on the second truncated moment scales like
/// `u * w^2 * |f''| / 12` with panel width `w`; 20 000 panels keep the
/// relative error near 1e-7 for smooth tables sampled at 1e4 points, an
/// order below the 1e-6 agreement the verification suite demands.
const TABLE_QUAD_PANELS: usize = 20_000;

/// Claim-size distribution on the nonnegative axis, described by its
/// survival function `S(y) = P(Y > y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimDistribution {
    /// Survival `exp(-rate * y)`; mean `1/rate`.
    Exponential { rate: f64 },
    /// Uniform on `[lo, hi]` with `0 <= lo < hi`.
    Uniform { lo: f64, hi: f64 },
    /// Piecewise-linear survival through the given `(y, survival)` points.
    ///
    /// Abscissae are strictly increasing and nonnegative, the first survival
    /// value is 1 (so survival is 1 on `[0, first abscissa]`), and values are
    /// nonincreasing.  The distribution is treated as supported on
    /// `[0, last abscissa]`.
    Table { points: Vec<(f64, f64)> },
}

impl ClaimDistribution {
    /// Survival function `P(Y > y)` at `y >= 0`.
    pub fn survival(&self, y: f64) -> f64 {
        match self {
            ClaimDistribution::Exponential { rate } => (-rate * y).exp(),
            ClaimDistribution::Uniform { lo, hi } => {
                if y <= *lo {
                    1.0
                } else if y >= *hi {
                    0.0
                } else {
                    (hi - y) / (hi - lo)
                }
            }
            ClaimDistribution::Table { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                if y <= points[0].0 {
                    return 1.0;
                }
                let last = points.len() - 1;
                if y >= points[last].0 {
                    return points[last].1;
                }
                // First point strictly right of y; invariants give i >= 1.
                let i = points.partition_point(|&(x, _)| x <= y);
                let (x0, s0) = points[i - 1];
                let (x1, s1) = points[i];
                s0 + (s1 - s0) * (y - x0) / (x1 - x0)
            }
        }
    }

    /// Truncated moments of the capped claim `Y ∧ u`:
    /// `m1(u) = ∫_0^u S(y) dy` and `m2(u) = ∫_0^u 2 y S(y) dy`.
    ///
    /// Closed forms for the exponential and uniform laws; composite trapezoid
    /// quadrature for tables.  Errors: negative or non-finite `u`, or `u`
    /// beyond a table's support.
    pub fn truncated_moments(&self, retention: f64) -> Result<(f64, f64), ModelError> {
        if !retention.is_finite() || retention < 0.0 {
            return Err(ModelError::InvalidRetention(retention));
        }
        let u = retention;
        match self {
            ClaimDistribution::Exponential { rate } => {
                let e = (-rate * u).exp();
                let m1 = (1.0 - e) / rate;
                let m2 = 2.0 * (1.0 - e * (1.0 + rate * u)) / (rate * rate);
                Ok((m1, m2))
            }
            ClaimDistribution::Uniform { lo, hi } => {
                if u <= *lo {
                    return Ok((u, u * u));
                }
                if u >= *hi {
                    // Truncation past the support is exactly inactive.
                    return Ok(self.full_moments());
                }
                let t = u;
                let d = hi - lo;
                let m1 = lo + (hi * (t - lo) - 0.5 * (t * t - lo * lo)) / d;
                let m2 =
                    lo * lo + (hi * (t * t - lo * lo) - (2.0 / 3.0) * (t * t * t - lo * lo * lo)) / d;
                Ok((m1, m2))
            }
            ClaimDistribution::Table { points } => {
                let support = points.last().map(|p| p.0).unwrap_or(0.0);
                if u > support * (1.0 + 1e-12) + 1e-12 {
                    return Err(ModelError::OutOfSupport {
                        retention: u,
                        support,
                    });
                }
                Ok(self.table_moments(u.min(support)))
            }
        }
    }

    /// Untruncated moments `(E[Y], E[Y^2])`.  Tables integrate over their
    /// full support, so any survival mass left at the last abscissa is read
    /// as an atom there.
    pub fn full_moments(&self) -> (f64, f64) {
        match self {
            ClaimDistribution::Exponential { rate } => (1.0 / rate, 2.0 / (rate * rate)),
            ClaimDistribution::Uniform { lo, hi } => {
                (0.5 * (lo + hi), (lo * lo + lo * hi + hi * hi) / 3.0)
            }
            ClaimDistribution::Table { points } => {
                let support = points.last().map(|p| p.0).unwrap_or(0.0);
                self.table_moments(support)
            }
        }
    }

    /// Upper end of the support, when finite.
    pub fn support_upper(&self) -> Option<f64> {
        match self {
            ClaimDistribution::Exponential { .. } => None,
            ClaimDistribution::Uniform { hi, .. } => Some(*hi),
            ClaimDistribution::Table { points } => points.last().map(|p| p.0),
        }
    }

    /// Composite trapezoid on `[0, u]` for both truncated moments at once.
    fn table_moments(&self, u: f64) -> (f64, f64) {
        if u <= 0.0 {
            return (0.0, 0.0);
        }
        let n = TABLE_QUAD_PANELS;
        let w = u / n as f64;
        let s_end = self.survival(u);
        let mut acc1 = 0.5 * (self.survival(0.0) + s_end);
        let mut acc2 = 0.5 * (2.0 * u * s_end); // integrand 2*y*S(y) vanishes at 0
        for i in 1..n {
            let y = w * i as f64;
            let s = self.survival(y);
            acc1 += s;
            acc2 += 2.0 * y * s;
        }
        (acc1 * w, acc2 * w)
    }
}

/// Finite regime environment: a generator matrix for the regime chain and a
/// claim-intensity multiplier per regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSet {
    /// Square generator; rows sum to zero and off-diagonal entries are
    /// nonnegative.  `generator[l][j]` is the switching rate from regime `l`
    /// to regime `j`.
    pub generator: Vec<Vec<f64>>,
    /// Claim arrival intensity per regime, strictly positive.  Scales both
    /// the drift and the squared volatility of the surplus.
    pub intensity: Vec<f64>,
}

impl RegimeSet {
    pub fn count(&self) -> usize {
        self.intensity.len()
    }

    /// Total switching rate out of `regime` (nonnegative).
    pub fn switch_rate(&self, regime: usize) -> f64 {
        -self.generator[regime][regime]
    }
}

/// State-dependent weight applied to each unit of dividend paid out.
///
/// Built-in weights do not depend on the regime; the regime argument is kept
/// so the payoff interface stays uniform.
#[derive(Debug, Clone, PartialEq)]
pub enum DividendWeight {
    /// Flat weight per unit paid.
    Constant { value: f64 },
    /// Weight `decay * exp(-decay * x)`: early surplus is worth more, and a
    /// lump payment integrates in closed form.
    ExpMarginal { decay: f64 },
}

impl DividendWeight {
    /// Weight at surplus `x` in the given regime.  Fails on negative or
    /// non-finite surplus.
    pub fn at(&self, surplus: f64, _regime: usize) -> Result<f64, ModelError> {
        if !surplus.is_finite() || surplus < 0.0 {
            return Err(ModelError::BadState(surplus));
        }
        Ok(match self {
            DividendWeight::Constant { value } => *value,
            DividendWeight::ExpMarginal { decay } => decay * (-decay * surplus).exp(),
        })
    }

    /// Integral of the weight over a lump payment taking the surplus from
    /// `upper` down to `lower` (`lower <= upper`).
    pub fn lump(&self, lower: f64, upper: f64) -> f64 {
        match self {
            DividendWeight::Constant { value } => value * (upper - lower),
            DividendWeight::ExpMarginal { decay } => {
                (-decay * lower).exp() - (-decay * upper).exp()
            }
        }
    }
}

/// Running reward accrued at rate `f(x, regime, u)` while the process runs.
#[derive(Debug, Clone, PartialEq)]
pub enum RunningReward {
    /// No running term; the payoff is dividends only.
    Zero,
    /// Bilinear interpolation of a sampled reward surface per regime.
    Tabulated(RewardTable),
}

impl RunningReward {
    pub fn is_zero(&self) -> bool {
        matches!(self, RunningReward::Zero)
    }

    /// Reward rate at `(surplus, regime, control)`; zero kind returns 0.
    pub fn rate(&self, surplus: f64, regime: usize, control: f64) -> f64 {
        match self {
            RunningReward::Zero => 0.0,
            RunningReward::Tabulated(table) => table.rate(surplus, regime, control),
        }
    }
}

/// Sampled reward surface: values on a surplus x control lattice per regime,
/// evaluated by bilinear interpolation and clamped outside the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    /// Strictly increasing surplus sample points.
    pub surplus: Vec<f64>,
    /// Strictly increasing control sample points.
    pub control: Vec<f64>,
    /// `values[regime][i * control.len() + j]` sampled at
    /// `(surplus[i], control[j])`.
    pub values: Vec<Vec<f64>>,
}

impl RewardTable {
    fn rate(&self, x: f64, regime: usize, u: f64) -> f64 {
        let sheet = &self.values[regime];
        let nc = self.control.len();
        let (i0, i1, tx) = bracket(&self.surplus, x);
        let (j0, j1, tu) = bracket(&self.control, u);
        let v00 = sheet[i0 * nc + j0];
        let v01 = sheet[i0 * nc + j1];
        let v10 = sheet[i1 * nc + j0];
        let v11 = sheet[i1 * nc + j1];
        let low = v00 + (v01 - v00) * tu;
        let high = v10 + (v11 - v10) * tu;
        low + (high - low) * tx
    }
}

/// Index bracket and interpolation weight for a sorted axis, clamped at the
/// ends.
fn bracket(axis: &[f64], v: f64) -> (usize, usize, f64) {
    if v <= axis[0] || axis.len() == 1 {
        return (0, 0, 0.0);
    }
    let last = axis.len() - 1;
    if v >= axis[last] {
        return (last, last, 0.0);
    }
    let i = axis.partition_point(|&a| a <= v);
    let t = (v - axis[i - 1]) / (axis[i] - axis[i - 1]);
    (i - 1, i, t)
}

/// Payoff specification: dividend weight, running reward, and discount rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    pub weight: DividendWeight,
    pub reward: RunningReward,
    /// Discount rate, strictly positive.
    pub discount: f64,
}

/// How the retention level `u` shapes the retained claim flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reinsurance {
    /// Retain the fraction `u` of every claim.
    Proportional,
    /// Retain `Y ∧ u`: claims are capped at the retention level.
    ExcessOfLoss,
}

/// Admissible retention levels: a uniform mesh on `[min, max]`.
///
/// A frozen control (`min == max`, one point) pins the process to a single
/// retention level; that degenerate mesh is used by benchmark presets.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMesh {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl ControlMesh {
    /// The mesh values `min + k * (max - min) / (points - 1)`.
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.min];
        }
        let span = self.max - self.min;
        let steps = (self.points - 1) as f64;
        (0..self.points)
            .map(|k| self.min + span * k as f64 / steps)
            .collect()
    }

    pub fn is_frozen(&self) -> bool {
        self.points == 1
    }
}

/// Complete model: reinsurance form, claim law, regimes, payoff, and the
/// admissible control mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub reinsurance: Reinsurance,
    pub claim: ClaimDistribution,
    pub regimes: RegimeSet,
    pub payoff: PayoffSpec,
    pub control: ControlMesh,
}

impl ModelSpec {
    pub fn num_regimes(&self) -> usize {
        self.regimes.count()
    }

    /// Drift and volatility of the retained surplus at `(regime, u)`.
    ///
    /// Proportional reinsurance scales the whole claim flow:
    /// `b = intensity * u * E[Y]`, `sigma = u * sqrt(intensity * E[Y^2])`.
    /// Excess-of-loss caps each claim at `u`, so the truncated moments drive
    /// both terms: `b = intensity * m1(u)`, `sigma = sqrt(intensity * m2(u))`.
    /// Neither depends on the surplus level, which lets the chain layer cache
    /// one kernel per `(regime, u)`.
    pub fn drift_vol(&self, regime: usize, retention: f64) -> Result<(f64, f64), ModelError> {
        let count = self.num_regimes();
        if regime >= count {
            return Err(ModelError::BadRegime {
                index: regime,
                count,
            });
        }
        if !retention.is_finite() || retention < 0.0 {
            return Err(ModelError::InvalidRetention(retention));
        }
        let scale = self.regimes.intensity[regime];
        match self.reinsurance {
            Reinsurance::Proportional => {
                let (m1, m2) = self.claim.full_moments();
                Ok((scale * retention * m1, retention * (scale * m2).sqrt()))
            }
            Reinsurance::ExcessOfLoss => {
                let (m1, m2) = self.claim.truncated_moments(retention)?;
                Ok((scale * m1, (scale * m2).sqrt()))
            }
        }
    }

    /// Dividend weight `c(x, regime)`.
    pub fn dividend_weight(&self, surplus: f64, regime: usize) -> Result<f64, ModelError> {
        self.payoff.weight.at(surplus, regime)
    }

    /// Structural validation; returns every violation found (empty = valid).
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.validate_claim(&mut out);
        self.validate_regimes(&mut out);
        self.validate_payoff(&mut out);
        self.validate_control(&mut out);
        if out.is_empty() {
            self.validate_coefficients(&mut out);
        }
        out
    }

    fn validate_claim(&self, out: &mut Vec<String>) {
        match &self.claim {
            ClaimDistribution::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    out.push(format!("claim rate must be positive, got {rate}"));
                }
            }
            ClaimDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo < hi) {
                    out.push(format!(
                        "uniform claim bounds need 0 <= lo < hi, got [{lo}, {hi}]"
                    ));
                }
            }
            ClaimDistribution::Table { points } => {
                if points.len() < 2 {
                    out.push("claim table needs at least two points".to_string());
                    return;
                }
                if points[0].0 < 0.0 {
                    out.push(format!(
                        "claim table abscissae must be nonnegative, got {}",
                        points[0].0
                    ));
                }
                if (points[0].1 - 1.0).abs() > 1e-12 {
                    out.push(format!(
                        "claim table must start at survival 1, got {}",
                        points[0].1
                    ));
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        out.push(format!(
                            "claim table abscissae must be strictly increasing ({} then {})",
                            w[0].0, w[1].0
                        ));
                        break;
                    }
                }
                for w in points.windows(2) {
                    if w[1].1 > w[0].1 + 1e-12 {
                        out.push(format!(
                            "claim table survival must be nonincreasing ({} then {})",
                            w[0].1, w[1].1
                        ));
                        break;
                    }
                }
                if points.iter().any(|&(x, s)| !x.is_finite() || !s.is_finite()) {
                    out.push("claim table contains non-finite entries".to_string());
                } else if points.last().unwrap().1 < 0.0 {
                    out.push(format!(
                        "claim table survival must stay nonnegative, got {}",
                        points.last().unwrap().1
                    ));
                }
            }
        }
    }

    fn validate_regimes(&self, out: &mut Vec<String>) {
        let m = self.regimes.intensity.len();
        if m == 0 {
            out.push("model needs at least one regime".to_string());
            return;
        }
        for (i, &beta) in self.regimes.intensity.iter().enumerate() {
            if !(beta.is_finite() && beta > 0.0) {
                out.push(format!("regime {i} intensity must be positive, got {beta}"));
            }
        }
        if self.regimes.generator.len() != m {
            out.push(format!(
                "generator must be {m}x{m}, got {} rows",
                self.regimes.generator.len()
            ));
            return;
        }
        for (i, row) in self.regimes.generator.iter().enumerate() {
            if row.len() != m {
                out.push(format!("generator row {i} must have {m} entries, got {}", row.len()));
                continue;
            }
            for (j, &q) in row.iter().enumerate() {
                if !q.is_finite() {
                    out.push(format!("generator entry ({i},{j}) must be finite"));
                } else if i != j && q < 0.0 {
                    out.push(format!(
                        "generator entry ({i},{j}) must be nonnegative, got {q}"
                    ));
                }
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > 1e-12 {
                out.push(format!("generator row {i} sums to {sum}"));
            }
        }
    }

    fn validate_payoff(&self, out: &mut Vec<String>) {
        let r = self.payoff.discount;
        if !(r.is_finite() && r > 0.0) {
            out.push(format!("discount rate must be positive, got {r}"));
        }
        match &self.payoff.weight {
            DividendWeight::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    out.push(format!("dividend weight must be nonnegative, got {value}"));
                }
            }
            DividendWeight::ExpMarginal { decay } => {
                if !(decay.is_finite() && *decay > 0.0) {
                    out.push(format!("dividend weight decay must be positive, got {decay}"));
                }
            }
        }
        if let RunningReward::Tabulated(table) = &self.payoff.reward {
            let m = self.regimes.intensity.len();
            if table.surplus.is_empty() || table.control.is_empty() {
                out.push("reward table axes must be nonempty".to_string());
                return;
            }
            if table.values.len() != m {
                out.push(format!(
                    "reward table needs one sheet per regime ({m}), got {}",
                    table.values.len()
                ));
                return;
            }
            let cells = table.surplus.len() * table.control.len();
            for (l, sheet) in table.values.iter().enumerate() {
                if sheet.len() != cells {
                    out.push(format!(
                        "reward sheet {l} needs {cells} entries, got {}",
                        sheet.len()
                    ));
                } else if sheet.iter().any(|v| !v.is_finite()) {
                    out.push(format!("reward sheet {l} contains non-finite entries"));
                }
            }
            for axis in [&table.surplus, &table.control] {
                if axis.windows(2).any(|w| !(w[1] > w[0])) {
                    out.push("reward table axes must be strictly increasing".to_string());
                    break;
                }
            }
        }
    }

    fn validate_control(&self, out: &mut Vec<String>) {
        let c = &self.control;
        if !(c.min.is_finite() && c.max.is_finite()) {
            out.push("control bounds must be finite".to_string());
            return;
        }
        if c.min < 0.0 {
            out.push(format!(
                "control lower bound must be nonnegative, got {}",
                c.min
            ));
        }
        if c.min > c.max {
            out.push(format!(
                "control bounds out of order: [{}, {}]",
                c.min, c.max
            ));
        } else if c.min == c.max {
            if c.points != 1 {
                out.push(format!(
                    "a frozen control ({} == {}) needs exactly one mesh point, got {}",
                    c.min, c.max, c.points
                ));
            }
        } else if c.points < 2 {
            out.push(format!(
                "control mesh over [{}, {}] needs at least 2 points, got {}",
                c.min, c.max, c.points
            ));
        }
    }

    /// Drift and volatility must evaluate finite over the whole mesh.
    fn validate_coefficients(&self, out: &mut Vec<String>) {
        for regime in 0..self.num_regimes() {
            for u in self.control.values() {
                match self.drift_vol(regime, u) {
                    Ok((b, s)) => {
                        if !b.is_finite() || !s.is_finite() || s < 0.0 {
                            out.push(format!(
                                "drift or volatility not finite at regime {regime}, control {u}"
                            ));
                        }
                    }
                    Err(e) => out.push(format!("control {u} unusable at regime {regime}: {e}")),
                }
            }
        }
    }
}
