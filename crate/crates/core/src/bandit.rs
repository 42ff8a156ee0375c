//! Adversarial multi-armed bandit in continuous time.
//!
//! The importance-weighted estimate `r̂ = (r_a/p_a) e_a` (arm `a` drawn from
//! `p`) is unbiased with covariance `Σ = diag(r²/p) − r rᵀ`. In continuous
//! time the cumulative estimate follows
//!
//! ```text
//! ds = r dt + σ dB,   σσᵀ = Σ(r(t), p(t)),   p(t) = ∇G(s(t))
//! ```
//!
//! which is simulated here with Euler–Maruyama. Regret is measured with the
//! learner's expected reward `p(t)ᵀr(t)` instead of a sampled arm, which has
//! the same expectation and less variance.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::legendre::{hess_at, softmax_into, SimplexPoint, Temperature};
use crate::numerics::{em_step_in_place, psd_sqrt, PathNoise, PsdMatrix, TimeGrid};
use crate::olo::MAX_BETA;
use crate::report::{
    curve_checkpoints, monte_carlo_report, quadrature_slack, CurvePoint, RunOutcome,
};
use crate::rewards::{RewardPath, RewardTable};

pub const DEFAULT_P_FLOOR: f64 = 1e-6;

/// `√(2 ln d / (dT))`, the temperature minimizing `β⁻¹ ln d + βdT/2`.
pub fn bandit_beta(d: usize, horizon: f64) -> f64 {
    let d = d as f64;
    (2.0 * d.ln() / (d * horizon)).sqrt()
}

/// `√(2 T d ln d)`.
pub fn bandit_bound(d: usize, horizon: f64) -> f64 {
    let d = d as f64;
    (2.0 * horizon * d * d.ln()).sqrt()
}

/// Raises every entry to at least `floor` and rescales the rest so the total
/// stays 1. Requires `floor < 1/n`.
pub fn floor_and_renormalize(p: &mut [f64], floor: f64) {
    let n = p.len();
    debug_assert!(floor * (n as f64) < 1.0 || n == 1);
    if n == 1 {
        p[0] = 1.0;
        return;
    }
    // Entries pinned at the floor only grow in number, so this ends within n passes.
    for _ in 0..n {
        let mut pinned = 0usize;
        let mut free_mass = 0.0;
        for &v in p.iter() {
            if v <= floor {
                pinned += 1;
            } else {
                free_mass += v;
            }
        }
        if pinned == 0 {
            break;
        }
        let scale = (1.0 - pinned as f64 * floor) / free_mass;
        let mut stable = true;
        for v in p.iter_mut() {
            if *v <= floor {
                *v = floor;
            } else {
                *v *= scale;
                if *v < floor {
                    stable = false;
                }
            }
        }
        if stable {
            break;
        }
    }
}

/// `Σ_ab = r_a²/p_a δ_ab − r_a r_b`, the covariance of the importance-weighted estimate.
pub fn estimator_covariance(r: &[f64], p: &SimplexPoint, p_floor: f64) -> Result<PsdMatrix> {
    check_pair(r, p.as_slice(), p_floor)?;
    let mut out = DMatrix::zeros(r.len(), r.len());
    covariance_into(r, p.as_slice(), &mut out);
    Ok(PsdMatrix::from_symmetric(out))
}

fn check_pair(r: &[f64], p: &[f64], p_floor: f64) -> Result<()> {
    if r.len() != p.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            got: r.len(),
        });
    }
    if let Some(v) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("reward {v} outside [0, 1]")));
    }
    if let Some(v) = p.iter().find(|&&v| !(v >= p_floor && v > 0.0)) {
        return Err(Error::Domain(format!(
            "probability {v:e} below the floor {p_floor:e}; floor p first"
        )));
    }
    Ok(())
}

pub(crate) fn covariance_into(r: &[f64], p: &[f64], out: &mut DMatrix<f64>) {
    let d = r.len();
    for a in 0..d {
        for b in 0..d {
            out[(a, b)] = -r[a] * r[b];
        }
        out[(a, a)] += r[a] * r[a] / p[a];
    }
}

/// `Σ_a p_a (r_a/p_a) e_a − r`, identically zero.
pub fn unbiasedness_check(r: &[f64], p: &SimplexPoint) -> Result<Vec<f64>> {
    check_pair(r, p.as_slice(), 0.0)?;
    Ok(r.iter()
        .zip(p.as_slice())
        .map(|(&ra, &pa)| pa * (ra / pa) - ra)
        .collect())
}

/// `½ tr(Σ(r, p) ∇²G)` with `∇²G = β(diag p − p pᵀ)`: the Itô correction per
/// unit time. Never exceeds `βd/2` for `r ∈ [0,1]ᵈ`.
pub fn quadratic_variation(r: &[f64], p: &SimplexPoint, beta: Temperature) -> Result<f64> {
    let sigma = estimator_covariance(r, p, 0.0)?;
    Ok(quadratic_variation_of(
        sigma.matrix(),
        p.as_slice(),
        beta.get(),
    ))
}

/// `½ tr(Σ H)` for a given covariance, with `H` the Hessian of `G` at `p`.
pub fn quadratic_variation_of(sigma: &DMatrix<f64>, p: &[f64], beta: f64) -> f64 {
    0.5 * (sigma * hess_at(p, beta)).trace()
}

#[derive(Debug, Clone)]
pub struct BanditRunConfig {
    pub beta: Temperature,
    pub grid: TimeGrid,
    pub path: RewardPath,
    pub n_paths: usize,
    pub master_seed: u64,
    pub p_floor: f64,
}

impl BanditRunConfig {
    pub fn new(
        beta: f64,
        grid: TimeGrid,
        path: RewardPath,
        n_paths: usize,
        master_seed: u64,
        p_floor: f64,
    ) -> Result<Self> {
        let d = path.dim();
        if n_paths == 0 {
            return Err(Error::Domain("n_paths must be at least 1".into()));
        }
        if !(p_floor > 0.0 && (d == 1 || p_floor < 1.0 / d as f64)) {
            return Err(Error::Domain(format!(
                "p_floor must lie in (0, 1/d), got {p_floor}"
            )));
        }
        if beta > MAX_BETA {
            return Err(Error::Domain(format!(
                "beta {beta} exceeds the cap {MAX_BETA}"
            )));
        }
        if grid.horizon() != path.horizon() {
            return Err(Error::Domain(format!(
                "grid horizon {} differs from path horizon {}",
                grid.horizon(),
                path.horizon()
            )));
        }
        Ok(BanditRunConfig {
            beta: Temperature::new(beta)?,
            grid,
            path,
            n_paths,
            master_seed,
            p_floor,
        })
    }

    pub fn d(&self) -> usize {
        self.path.dim()
    }

    pub fn bound(&self) -> f64 {
        bandit_bound(self.d(), self.grid.horizon())
    }
}

/// One grid step of a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub p: Vec<f64>,
    pub expected_reward: f64,
}

/// Runs the SDE for one path, calling `visit(step, p, p·r)` before each update.
fn simulate(
    cfg: &BanditRunConfig,
    rewards: &RewardTable,
    path_index: u64,
    mut visit: impl FnMut(usize, &[f64], f64),
) -> Result<()> {
    let d = cfg.d();
    let h = cfg.grid.h();
    let beta = cfg.beta.get();
    let mut noise = PathNoise::new(cfg.master_seed, path_index);
    let mut s = vec![0.0; d];
    let mut p = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let mut sigma = DMatrix::zeros(d, d);

    for (i, r) in rewards.rows().enumerate() {
        softmax_into(&s, beta, &mut p);
        floor_and_renormalize(&mut p, cfg.p_floor);
        let expected: f64 = p.iter().zip(r).map(|(a, b)| a * b).sum();
        visit(i, &p, expected);

        covariance_into(r, &p, &mut sigma);
        let factor = psd_sqrt(&PsdMatrix::from_symmetric(sigma.clone()))?;
        noise.fill(i as u64, h, &mut dw);
        em_step_in_place(&mut s, r, factor.matrix(), &dw, h);
    }
    Ok(())
}

/// Simulates one path and records `(t, p(t), p(t)ᵀr(t))` at every step.
pub fn simulate_bandit_path(cfg: &BanditRunConfig, path_index: u64) -> Result<Vec<StepRecord>> {
    let rewards = cfg.path.tabulate(&cfg.grid)?;
    let mut records = Vec::with_capacity(cfg.grid.steps());
    simulate(cfg, &rewards, path_index, |i, p, expected| {
        records.push(StepRecord {
            t: cfg.grid.t(i),
            p: p.to_vec(),
            expected_reward: expected,
        })
    })?;
    Ok(records)
}

/// CSV dump of a path: `step,t,p_1..p_d,expected_reward`.
pub fn trace_csv(records: &[StepRecord]) -> String {
    let d = records.first().map(|r| r.p.len()).unwrap_or(0);
    let mut out = String::from("step,t");
    for a in 1..=d {
        let _ = write!(out, ",p_{a}");
    }
    out.push_str(",expected_reward\n");
    for (i, rec) in records.iter().enumerate() {
        let _ = write!(out, "{i},{:?}", rec.t);
        for v in &rec.p {
            let _ = write!(out, ",{v:?}");
        }
        let _ = writeln!(out, ",{:?}", rec.expected_reward);
    }
    out
}

/// Learner reward of one path at each curve checkpoint; the last entry is the total.
pub(crate) struct PathIntegrals {
    pub at_checkpoints: Vec<f64>,
}

/// Integrates each path's expected reward and reduces in path order.
pub(crate) fn reduce_paths(
    n_paths: usize,
    steps: usize,
    h: f64,
    run_path: impl Fn(u64, &mut dyn FnMut(usize, f64)) -> Result<()> + Sync,
) -> Result<Vec<PathIntegrals>> {
    let checkpoints = curve_checkpoints(steps);
    (0..n_paths as u64)
        .into_par_iter()
        .map(|path_index| {
            let mut at_checkpoints = Vec::with_capacity(checkpoints.len());
            let mut sum = 0.0;
            let mut next = 0;
            run_path(path_index, &mut |i, expected| {
                sum += expected;
                if checkpoints.get(next) == Some(&(i + 1)) {
                    at_checkpoints.push(sum * h);
                    next += 1;
                }
            })?;
            Ok(PathIntegrals { at_checkpoints })
        })
        .collect()
}

/// Assembles report and curve from per-arm comparator rewards at the checkpoints.
pub(crate) fn assemble_outcome(
    comparator_at: impl Fn(usize) -> Vec<f64>,
    paths: &[PathIntegrals],
    grid: &TimeGrid,
    beta: f64,
    bound: f64,
) -> RunOutcome {
    let checkpoints = curve_checkpoints(grid.steps());
    let mut curve = Vec::with_capacity(checkpoints.len());
    for (j, &n) in checkpoints.iter().enumerate() {
        let best = comparator_at(n)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let mean = paths.iter().map(|p| p.at_checkpoints[j]).sum::<f64>() / paths.len() as f64;
        curve.push(CurvePoint {
            t: grid.t(n),
            regret: best - mean,
        });
    }
    let learner: Vec<f64> = paths
        .iter()
        .map(|p| *p.at_checkpoints.last().expect("at least one checkpoint"))
        .collect();
    let comparator = comparator_at(grid.steps());
    let report = monte_carlo_report(
        &comparator,
        &learner,
        bound,
        quadrature_slack(grid.h(), beta, grid.horizon()),
    );
    RunOutcome { report, curve }
}

/// Monte Carlo estimate of the continuous-time regret, checked against `√(2Td ln d)`.
///
/// Paths run on the current rayon pool; results are reduced in path order so
/// the report does not depend on the number of workers.
pub fn run_continuous_bandit(cfg: &BanditRunConfig) -> Result<RunOutcome> {
    let rewards = cfg.path.tabulate(&cfg.grid)?;
    let h = cfg.grid.h();
    let paths = reduce_paths(cfg.n_paths, cfg.grid.steps(), h, |path_index, visit| {
        simulate(cfg, &rewards, path_index, |i, _, expected| {
            visit(i, expected)
        })
    })?;
    Ok(assemble_outcome(
        |n| rewards.column_sums(n).into_iter().map(|v| v * h).collect(),
        &paths,
        &cfg.grid,
        cfg.beta.get(),
        cfg.bound(),
    ))
}

/// Discrete Exp3-style learner with importance-weighted estimates, averaged
/// over `episodes` independent arm-draw sequences.
pub fn run_discrete_exp3(
    beta: f64,
    rewards: &RewardTable,
    episodes: usize,
    master_seed: u64,
) -> Result<RunOutcome> {
    let beta = Temperature::new(beta)?.get();
    let d = rewards.dim();
    let rounds = rewards.len();
    if rounds == 0 || episodes == 0 {
        return Err(Error::Domain(
            "need at least one round and one episode".into(),
        ));
    }
    let paths = reduce_paths(episodes, rounds, 1.0, |episode, visit| {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(episode);
        let mut estimate = vec![0.0; d];
        let mut p = vec![0.0; d];
        for (t, r) in rewards.rows().enumerate() {
            softmax_into(&estimate, beta, &mut p);
            visit(t, p.iter().zip(r).map(|(a, b)| a * b).sum());
            let arm = WeightedIndex::new(&p)
                .map_err(|e| Error::Domain(format!("cannot sample arm: {e}")))?
                .sample(&mut rng);
            estimate[arm] += r[arm] / p[arm];
        }
        Ok(())
    })?;
    let grid = TimeGrid::new(rounds as f64, rounds)?;
    let mut outcome = assemble_outcome(
        |n| rewards.column_sums(n),
        &paths,
        &grid,
        beta,
        bandit_bound(d, rounds as f64),
    );
    outcome.report.tolerance = 1e-9;
    outcome.report.bound_violated = outcome.report.measured_regret - 3.0 * outcome.report.stderr
        > outcome.report.theoretical_bound + 1e-9;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn simplex(v: &[f64]) -> SimplexPoint {
        SimplexPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn covariance_two_outcomes() {
        // r̂ ∈ {(2,0), (0,2)} w.p. ½ each
        let sigma = estimator_covariance(&[1.0, 1.0], &simplex(&[0.5, 0.5]), 1e-6).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_relative_eq!(sigma.matrix().clone(), expected, epsilon = 1e-15);

        let zero = estimator_covariance(&[0.0; 3], &SimplexPoint::uniform(3), 1e-6).unwrap();
        assert_eq!(zero.matrix().amax(), 0.0);
    }

    #[test]
    fn covariance_requires_floored_p() {
        let p = simplex(&[1.0 - 1e-9, 1e-9]);
        assert!(matches!(
            estimator_covariance(&[1.0, 1.0], &p, 1e-6),
            Err(Error::Domain(_))
        ));
        assert!(estimator_covariance(&[1.0], &p, 1e-12).is_err());
    }

    #[test]
    fn unbiased_examples() {
        let v = unbiasedness_check(&[1.0, 0.0], &simplex(&[0.9, 0.1])).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn floor_keeps_mass_and_bounds() {
        let mut p = vec![1.0 - 2e-12, 1e-12, 1e-12];
        floor_and_renormalize(&mut p, 1e-6);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&v| v >= 1e-6));

        let mut q = vec![0.25; 4];
        floor_and_renormalize(&mut q, 1e-6);
        assert_eq!(q, vec![0.25; 4]);

        // scaling the free entries pushes one of them under the floor
        let mut z = vec![0.0, 0.0, 0.1001, 0.8999];
        floor_and_renormalize(&mut z, 0.1);
        assert!(z.iter().all(|&v| v >= 0.1 - 1e-15), "{z:?}");
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_variation_all_ones_uniform() {
        // Σ = d·I − 11ᵀ, H = β(I/d − 11ᵀ/d²): ½tr(ΣH) = β(d−1)/2
        let d = 4;
        let beta = Temperature::new(0.7).unwrap();
        let qv = quadratic_variation(&[1.0; 4], &SimplexPoint::uniform(d), beta).unwrap();
        assert_relative_eq!(qv, 0.7 * 3.0 / 2.0, epsilon = 1e-14);
        assert!(qv <= 0.7 * d as f64 / 2.0);
        assert_eq!(
            quadratic_variation(&[0.0; 4], &SimplexPoint::uniform(d), beta).unwrap(),
            0.0
        );
    }

    #[test]
    fn schedules() {
        assert_relative_eq!(
            bandit_bound(3, 10.0),
            8.118_912_323_709_783,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            bandit_beta(3, 10.0),
            0.270_630_410_790_326_1,
            epsilon = 1e-15
        );
    }

    fn small_cfg(path: RewardPath, beta: f64, n_paths: usize) -> BanditRunConfig {
        let grid = TimeGrid::new(path.horizon(), 200).unwrap();
        BanditRunConfig::new(beta, grid, path, n_paths, 11, DEFAULT_P_FLOOR).unwrap()
    }

    #[test]
    fn tiny_beta_freezes_uniform_play() {
        let path = RewardPath::constant(vec![1.0, 0.5, 0.0], 2.0).unwrap();
        let records = simulate_bandit_path(&small_cfg(path, 1e-12, 1), 0).unwrap();
        for rec in &records {
            assert!(rec.p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-9));
            assert!((rec.expected_reward - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn single_arm_is_deterministic_and_regret_free() {
        let path = RewardPath::constant(vec![0.6], 2.0).unwrap();
        let out = run_continuous_bandit(&small_cfg(path, 1.0, 5)).unwrap();
        assert!(out.report.measured_regret.abs() < 1e-12);
        assert_eq!(out.report.stderr, 0.0);
    }

    #[test]
    fn paths_replay_exactly() {
        let path = RewardPath::staggered_sinusoid(3, 2.0).unwrap();
        let cfg = small_cfg(path, 0.5, 1);
        assert_eq!(
            simulate_bandit_path(&cfg, 4).unwrap(),
            simulate_bandit_path(&cfg, 4).unwrap()
        );
        assert_ne!(
            simulate_bandit_path(&cfg, 4).unwrap(),
            simulate_bandit_path(&cfg, 5).unwrap()
        );
    }

    #[test]
    fn config_validation() {
        let path = RewardPath::constant(vec![1.0, 0.0], 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert!(BanditRunConfig::new(1.0, grid, path.clone(), 0, 0, 1e-6).is_err());
        assert!(BanditRunConfig::new(1.0, grid, path.clone(), 1, 0, 0.5).is_err());
        assert!(BanditRunConfig::new(1.0, grid, path.clone(), 1, 0, 0.0).is_err());
        assert!(BanditRunConfig::new(0.0, grid, path, 1, 0, 1e-6).is_err());
    }

    #[test]
    fn trace_format() {
        let path = RewardPath::constant(vec![1.0, 0.0], 1.0).unwrap();
        let cfg =
            BanditRunConfig::new(1.0, TimeGrid::new(1.0, 4).unwrap(), path, 1, 0, 1e-6).unwrap();
        let csv = trace_csv(&simulate_bandit_path(&cfg, 0).unwrap());
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("step,t,p_1,p_2,expected_reward"));
        assert_eq!(lines.next(), Some("0,0.0,0.5,0.5,0.5"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn exp3_edge_cases() {
        let one = RewardTable::from_rows(&vec![vec![0.4]; 30]).unwrap();
        let out = run_discrete_exp3(0.3, &one, 10, 1).unwrap();
        assert!(out.report.measured_regret.abs() < 1e-12);

        let first = RewardTable::from_rows(&[vec![1.0, 0.0, 0.2]]).unwrap();
        let out = run_discrete_exp3(50.0, &first, 10, 1).unwrap();
        assert_relative_eq!(out.report.measured_regret, 1.0 - 0.4, epsilon = 1e-12);
        assert_eq!(out.report.stderr, 0.0);
    }
}
