//! Sample-weight machinery: the temporal prior schedule and the exact solver
//! for the simplex-constrained weight subproblem
//!
//! ```text
//! minimize   Σ_k L_k α_k + (1/μ) Σ_k α_k² / ρ_k
//! subject to α_k ≥ 0,  Σ_k α_k = 1
//! ```
//!
//! Stationarity gives the water-filling form `α_k = max(0, μ ρ_k (ν − L_k) / 2)`.
//! The map `ν ↦ Σ_k α_k(ν)` is piecewise linear and increasing, so the level
//! `ν` is located exactly by scanning frames in order of increasing loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// KKT residual above which the exact scan result is replaced by bisection.
const KKT_TOLERANCE: f64 = 1e-9;

/// Temporal prior: exponential decay over the `window` most recent frames,
/// constant before that.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSchedule {
    window: usize,
    decay: f64,
}

impl Default for PriorSchedule {
    fn default() -> Self {
        Self {
            window: 50,
            decay: 0.035,
        }
    }
}

impl PriorSchedule {
    pub fn new(window: usize, decay: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter("prior window must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::InvalidParameter(format!(
                "prior decay must lie in [0, 1), got {decay}"
            )));
        }
        Ok(Self { window, decay })
    }

    /// Window length `K` in frames.
    pub fn window(&self) -> usize {
        self.window
    }

    /// Decay rate `η`.
    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Normalizing constant `a = (t − K + ((1−η)^{−K} − 1)/η)^{−1}` of the
    /// closed form, i.e. the prior of every frame at or before `t − K`.
    ///
    /// Only defined when a constant segment exists (`t > K`) and `η > 0`.
    pub fn normalizer(&self, t: usize) -> Option<f64> {
        if t <= self.window || self.decay == 0.0 {
            return None;
        }
        let k = self.window as f64;
        let growth = (1.0 - self.decay).powf(-k);
        Some(1.0 / (t as f64 - k + (growth - 1.0) / self.decay))
    }
}

/// Prior weights `ρ_1..ρ_t` in chronological order (newest last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorWeights(Vec<f64>);

impl PriorWeights {
    /// Wraps an arbitrary positive vector, rescaling it to unit sum.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("prior weights"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prior weights"));
        }
        if values.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidParameter("prior weights must be positive".into()));
        }
        Ok(Self(normalized(values)))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    /// Accepts a nonnegative vector summing to one within `1e-10`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("simplex weights"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("simplex weights"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("simplex weights must be nonnegative".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "simplex weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self(values))
    }

    /// Rescales a nonnegative vector with positive mass onto the simplex.
    pub fn from_masses(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "weight masses must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Degenerate("weight masses have zero total".into()));
        }
        Ok(Self(values.into_iter().map(|v| v / sum).collect()))
    }

    pub fn uniform(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::Empty("simplex weights"));
        }
        Ok(Self(vec![1.0 / t as f64; t]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl From<PriorWeights> for SimplexWeights {
    fn from(p: PriorWeights) -> Self {
        SimplexWeights(p.0)
    }
}

/// Prior weights for `t` frames under `schedule`.
///
/// Builds the recursion `ρ_k = (1−η) ρ_{k+1}` inside the window and
/// `ρ_k = ρ_{k+1}` before it, then normalizes. When `t ≤ K` every frame is
/// inside the window.
pub fn compute_priors(t: usize, schedule: &PriorSchedule) -> Result<PriorWeights> {
    if t == 0 {
        return Err(Error::Empty("prior schedule needs at least one frame"));
    }
    let retain = 1.0 - schedule.decay;
    let mut raw = vec![0.0; t];
    raw[t - 1] = 1.0;
    for k in (0..t - 1).rev() {
        let age = t - 1 - k;
        raw[k] = if age <= schedule.window {
            retain * raw[k + 1]
        } else {
            raw[k + 1]
        };
    }
    Ok(PriorWeights(normalized(raw)))
}

/// One instance of the weight subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSubproblem {
    losses: Vec<f64>,
    priors: Vec<f64>,
    mu: f64,
}

impl AlphaSubproblem {
    pub fn new(losses: Vec<f64>, priors: &PriorWeights, mu: f64) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::Empty("weight subproblem has no frames"));
        }
        if losses.len() != priors.len() {
            return Err(Error::mismatch(
                format!("{} losses", priors.len()),
                losses.len(),
            ));
        }
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("frame losses"));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        Ok(Self {
            losses,
            priors: priors.as_slice().to_vec(),
            mu,
        })
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// Value of the subproblem objective at `alpha`.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        self.losses
            .iter()
            .zip(&self.priors)
            .zip(alpha)
            .map(|((l, r), a)| l * a + a * a / (self.mu * r))
            .sum()
    }

    /// Per-frame slopes `μ ρ_k / 2` of the water-filling map.
    fn slopes(&self) -> Vec<f64> {
        self.priors.iter().map(|r| 0.5 * self.mu * r).collect()
    }

    /// Losses shifted so the smallest is zero. The solution is invariant to
    /// the shift and the level is measured from the minimum.
    fn excess_losses(&self) -> Vec<f64> {
        let min = self.losses.iter().copied().fold(f64::INFINITY, f64::min);
        self.losses.iter().map(|l| l - min).collect()
    }
}

/// Solver output with its optimality certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSolution {
    pub alpha: SimplexWeights,
    /// Water level `ν − min_k L_k`.
    pub level: f64,
    /// Largest deviation from the water-filling fixed point, in weight units,
    /// together with the simplex-sum violation.
    pub kkt_residual: f64,
}

/// Exact minimizer of the weight subproblem.
pub fn solve_alpha(problem: &AlphaSubproblem) -> SimplexWeights {
    solve_alpha_certified(problem).alpha
}

/// Exact sort-and-scan solve, falling back to bisection if the scan result
/// fails its KKT check.
pub fn solve_alpha_certified(problem: &AlphaSubproblem) -> AlphaSolution {
    let exact = solve_by_scan(problem);
    if exact.kkt_residual <= KKT_TOLERANCE {
        return exact;
    }
    let fallback = solve_alpha_bisection(problem);
    if fallback.kkt_residual < exact.kkt_residual {
        fallback
    } else {
        exact
    }
}

fn solve_by_scan(problem: &AlphaSubproblem) -> AlphaSolution {
    let slopes = problem.slopes();
    let excess = problem.excess_losses();
    let t = excess.len();

    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| excess[a].total_cmp(&excess[b]).then(a.cmp(&b)));

    // Σ c_k and Σ c_k D_k over the current support.
    let mut slope_sum = 0.0;
    let mut weighted_sum = 0.0;
    let mut level = 0.0;
    for (m, &k) in order.iter().enumerate() {
        slope_sum += slopes[k];
        weighted_sum += slopes[k] * excess[k];
        let candidate = (1.0 + weighted_sum) / slope_sum;
        match order.get(m + 1) {
            // Mass at the next breakpoint already covers the simplex: the
            // level lies inside this segment.
            Some(&next) if slope_sum * excess[next] - weighted_sum >= 1.0 => {
                level = candidate;
                break;
            }
            Some(_) => {}
            None => level = candidate,
        }
    }
    finish(problem, &slopes, &excess, level)
}

/// Bisection on the water level. Used as a cross-check of the exact scan.
pub fn solve_alpha_bisection(problem: &AlphaSubproblem) -> AlphaSolution {
    let slopes = problem.slopes();
    let excess = problem.excess_losses();
    let total_slope: f64 = slopes.iter().sum();
    let max_excess = excess.iter().copied().fold(0.0, f64::max);

    let mass = |level: f64| -> f64 {
        slopes
            .iter()
            .zip(&excess)
            .map(|(c, d)| c * (level - d).max(0.0))
            .sum()
    };

    let mut lo = 0.0;
    let mut hi = max_excess + 1.0 / total_slope;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    finish(problem, &slopes, &excess, 0.5 * (lo + hi))
}

fn finish(problem: &AlphaSubproblem, slopes: &[f64], excess: &[f64], level: f64) -> AlphaSolution {
    let raw: Vec<f64> = slopes
        .iter()
        .zip(excess)
        .map(|(c, d)| (c * (level - d)).max(0.0))
        .collect();
    let alpha = normalized(raw);
    let kkt_residual = kkt_residual(problem, &alpha, level);
    AlphaSolution {
        alpha: SimplexWeights(alpha),
        level,
        kkt_residual,
    }
}

/// Distance of `alpha` from the water-filling fixed point at `level`
/// (measured from the minimum loss), combined with the sum constraint.
pub fn kkt_residual(problem: &AlphaSubproblem, alpha: &[f64], level: f64) -> f64 {
    let slopes = problem.slopes();
    let excess = problem.excess_losses();
    let sum: f64 = alpha.iter().sum();
    let stationarity = slopes
        .iter()
        .zip(&excess)
        .zip(alpha)
        .map(|((c, d), a)| (a - (c * (level - d)).max(0.0)).abs())
        .fold(0.0, f64::max);
    let feasibility = alpha.iter().map(|a| (-a).max(0.0)).fold(0.0, f64::max);
    stationarity.max(feasibility).max((sum - 1.0).abs())
}

/// Reference solver: projected gradient descent with Euclidean projection
/// onto the simplex. Slow but independent of the water-filling derivation.
///
/// `step` defaults to the inverse Lipschitz constant `μ min ρ / 2`.
pub fn oracle_solve_alpha(
    problem: &AlphaSubproblem,
    iterations: usize,
    step: Option<f64>,
) -> SimplexWeights {
    let min_prior = problem.priors.iter().copied().fold(f64::INFINITY, f64::min);
    let step = step.unwrap_or(0.5 * problem.mu * min_prior);
    let mut alpha = problem.priors.clone();
    for _ in 0..iterations {
        let moved: Vec<f64> = alpha
            .iter()
            .zip(&problem.losses)
            .zip(&problem.priors)
            .map(|((a, l), r)| a - step * (l + 2.0 * a / (problem.mu * r)))
            .collect();
        let next = project_onto_simplex(&moved);
        let change = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        alpha = next;
        if change < 1e-16 {
            break;
        }
    }
    SimplexWeights(alpha)
}

/// Euclidean projection onto `{x : x ≥ 0, Σx = 1}` by sorting.
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}
