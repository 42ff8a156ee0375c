//! Regret reports and the bits of Monte Carlo bookkeeping shared by the runners.

use serde::{Deserialize, Serialize};

/// Number of points on the plotting subgrid of a regret curve.
pub const CURVE_POINTS: usize = 100;

/// Measured regret against a theoretical bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub measured_regret: f64,
    pub theoretical_bound: f64,
    /// Lowest-index comparator attaining the best cumulative reward.
    pub best_comparator_index: usize,
    pub bound_violated: bool,
    /// 95% confidence half-width; 0 for deterministic runs.
    pub ci_halfwidth: f64,
    /// Standard error of the regret estimate; 0 for deterministic runs.
    pub stderr: f64,
    /// Monte Carlo paths or episodes behind the estimate (1 if deterministic).
    pub n_paths: usize,
    /// Absolute allowance added to the bound before flagging a violation.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub regret: f64,
}

/// A report together with the cumulative regret curve on the plotting subgrid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: RegretReport,
    pub curve: Vec<CurvePoint>,
}

/// Step counts `n_j` at which the curve is sampled: `⌈steps·j/100⌉`, deduplicated.
pub fn curve_checkpoints(steps: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=CURVE_POINTS)
        .map(|j| (steps * j).div_ceil(CURVE_POINTS))
        .collect();
    out.dedup();
    out
}

/// Allowance for evaluating the regret on a grid of step `h`.
///
/// On the grid the learner is exponential weights with per-step gains in
/// `[0, h]`, whose regret exceeds `β⁻¹ ln d` by at most `βTh/8` (Hoeffding's
/// lemma). The extra `1e-6` absorbs rounding.
pub fn quadrature_slack(h: f64, beta: f64, horizon: f64) -> f64 {
    1e-6 + beta * horizon * h / 8.0
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean and standard error of per-path samples, summed in index order.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Builds a Monte Carlo report: `comparator` is the deterministic best-arm
/// reward, `learner` holds one learner reward per path.
pub(crate) fn monte_carlo_report(
    comparator: &[f64],
    learner: &[f64],
    bound: f64,
    tolerance: f64,
) -> RegretReport {
    let best = argmax(comparator);
    let (mean, stderr) = mean_stderr(learner);
    let regret = comparator[best] - mean;
    RegretReport {
        measured_regret: regret,
        theoretical_bound: bound,
        best_comparator_index: best,
        bound_violated: regret - 3.0 * stderr > bound + tolerance,
        ci_halfwidth: 1.96 * stderr,
        stderr,
        n_paths: learner.len(),
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoints() {
        let c = curve_checkpoints(10_000);
        assert_eq!(c.len(), 100);
        assert_eq!(c[0], 100);
        assert_eq!(*c.last().unwrap(), 10_000);
        assert_eq!(curve_checkpoints(7), vec![1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(curve_checkpoints(250).len(), 100);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn stderr_of_samples() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }
}
