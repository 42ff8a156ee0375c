//! Self-checks of the analytic identities and regret bounds on random instances.
//!
//! Every check is an inequality `lhs ≤ rhs`; its violation is `lhs − rhs` and a
//! suite passes when its largest violation is not positive.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bandit::{
    estimator_covariance, floor_and_renormalize, quadratic_variation_of, run_continuous_bandit,
    unbiasedness_check, BanditRunConfig,
};
use crate::error::Result;
use crate::legendre::{
    conjugate, fenchel_gap, grad_conjugate, hess_conjugate, regularizer, DualVector, SimplexPoint,
    Temperature,
};
use crate::linbandit::{
    design_matrix, linear_estimator_covariance, linear_quadratic_variation_of,
    linear_unbiasedness_check, run_continuous_linbandit, ArmSet, LinBanditRunConfig,
};
use crate::numerics::TimeGrid;
use crate::olo::{run_continuous_ftrl, OloRunConfig};
use crate::report::RegretReport;
use crate::rewards::RewardPath;

pub const QV_CASES: usize = 10_000;
const LEGENDRE_CASES: usize = 10_000;
const COVARIANCE_CASES: usize = 1_000;

/// Covariance of a reward estimator at `(r, p)`. Swappable so a broken
/// estimator can be fed through the same checks.
pub type CovarianceFn<'a> = &'a (dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Sync);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub cases: usize,
    pub max_violation: f64,
    pub passed: bool,
    /// The inequality with the largest violation, when the suite failed.
    pub failed_inequality: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    /// Plain-text table, one row per suite.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<28} {:>7} {:>14}  verdict\n",
            "suite", "cases", "max_violation"
        );
        for s in &self.suites {
            let verdict = match &s.failed_inequality {
                None => "PASS".to_string(),
                Some(name) => format!("FAIL ({name})"),
            };
            let _ = writeln!(
                out,
                "{:<28} {:>7} {:>14.3e}  {}",
                s.suite, s.cases, s.max_violation, verdict
            );
        }
        out
    }
}

struct Tracker {
    suite: &'static str,
    cases: usize,
    max_violation: f64,
    worst: Option<&'static str>,
}

impl Tracker {
    fn new(suite: &'static str) -> Self {
        Tracker {
            suite,
            cases: 0,
            max_violation: f64::NEG_INFINITY,
            worst: None,
        }
    }

    /// Records `lhs ≤ rhs`. NaN counts as an infinite violation.
    fn check(&mut self, inequality: &'static str, lhs: f64, rhs: f64) {
        let v = lhs - rhs;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v > self.max_violation {
            self.max_violation = v;
            if v > 0.0 {
                self.worst = Some(inequality);
            }
        }
    }

    fn case(&mut self) {
        self.cases += 1;
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            suite: self.suite.to_string(),
            cases: self.cases,
            max_violation: self.max_violation,
            passed: self.max_violation <= 0.0,
            failed_inequality: self
                .worst
                .filter(|_| self.max_violation > 0.0)
                .map(str::to_string),
        }
    }
}

fn rng_for(seed: u64, suite: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(suite);
    rng
}

/// Random point of the simplex; with `boundary` some entries are exactly zero.
fn random_simplex(rng: &mut ChaCha8Rng, d: usize, boundary: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    if boundary {
        for v in w.iter_mut() {
            if rng.random::<f64>() < 0.3 {
                *v = 0.0;
            }
        }
        if w.iter().all(|&v| v == 0.0) {
            w[rng.random_range(0..d)] = 1.0;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Random floored distribution, sometimes with entries pushed down to the floor.
fn random_floored(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> Vec<f64> {
    let mut p = random_simplex(rng, d, false);
    if rng.random::<f64>() < 0.3 {
        for v in p.iter_mut() {
            if rng.random::<f64>() < 0.5 {
                *v *= 1e-9;
            }
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
    }
    floor_and_renormalize(&mut p, floor);
    p
}

fn random_rewards(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d)
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        })
        .collect()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// `Σ = diag(r²/p) − r rᵀ` as used by the bandit runner.
pub fn bandit_covariance(r: &[f64], p: &[f64]) -> DMatrix<f64> {
    let p = SimplexPoint::new(p.to_vec()).expect("distribution");
    estimator_covariance(r, &p, 0.0)
        .expect("valid pair")
        .into_matrix()
}

/// Conjugacy, Fenchel–Young and Hessian identities of the entropic pair.
pub fn legendre_suite(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 1);
    let mut t = Tracker::new("legendre");
    for _ in 0..LEGENDRE_CASES {
        t.case();
        let d = rng.random_range(2..=8);
        let beta = Temperature::new(10f64.powf(rng.random_range(-1.0..1.0))).unwrap();
        let b = beta.get();
        let x = SimplexPoint::new(random_simplex(&mut rng, d, true)).unwrap();
        let y = DualVector::new((0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let scale = 1.0 + conjugate(&y, beta).abs() + regularizer(&x, beta).abs();

        t.check(
            "F(x) + G(y) - x.y >= 0",
            -fenchel_gap(&x, &y, beta).unwrap(),
            1e-12 * scale,
        );
        let x_star = grad_conjugate(&y, beta);
        t.check(
            "gap(grad G(y), y) = 0",
            fenchel_gap(&x_star, &y, beta).unwrap().abs(),
            1e-12 * scale,
        );
        let h = hess_conjugate(&y, beta);
        t.check("tr hess G <= beta", h.trace(), b * (1.0 + 1e-12));
        t.check("hess G is PSD", -min_eigenvalue(&h), 1e-12 * b);
        let row_sum = h.row_iter().map(|row| row.sum().abs()).fold(0.0, f64::max);
        t.check("hess G 1 = 0", row_sum, 1e-12 * b);
    }
    t.finish()
}

/// Bandit estimator: closed-form covariance against enumeration over the arm draw.
pub fn bandit_covariance_suite(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 2);
    let mut t = Tracker::new("bandit covariance");
    for _ in 0..COVARIANCE_CASES {
        t.case();
        let d = rng.random_range(1..=10);
        let p = random_floored(&mut rng, d, 1e-6);
        let r = random_rewards(&mut rng, d);
        let rv = DVector::from_column_slice(&r);
        let mut oracle = -&rv * rv.transpose();
        for a in 0..d {
            let mut est = DVector::zeros(d);
            est[a] = r[a] / p[a];
            oracle += &est * est.transpose() * p[a];
        }
        let sp = SimplexPoint::new(p.clone()).unwrap();
        let sigma = estimator_covariance(&r, &sp, 1e-6).unwrap().into_matrix();
        let scale = max_abs(&oracle).max(1.0);
        t.check(
            "covariance matches enumeration",
            max_abs(&(sigma - &oracle)) / scale,
            1e-12,
        );
        let bias = unbiasedness_check(&r, &sp).unwrap();
        t.check(
            "estimator is unbiased",
            bias.iter().fold(0.0, |a, v| a.max(v.abs())),
            1e-13,
        );
    }
    t.finish()
}

/// Identity checks on `Q⁻¹` lose about `cond(Q)·ε`; instances beyond this are
/// left to the conditioning guard in `invert_design`.
const VERIFY_MAX_CONDITION: f64 = 1e6;
const MAX_DRAWS_PER_CASE: usize = 20;

fn condition(q: &DMatrix<f64>) -> f64 {
    let ev = q.clone().symmetric_eigenvalues();
    if ev.min() > 0.0 {
        ev.max() / ev.min()
    } else {
        f64::INFINITY
    }
}

fn random_arms(rng: &mut ChaCha8Rng) -> ArmSet {
    let d = rng.random_range(1..=8);
    let k = rng.random_range(d..=64);
    ArmSet::random(k, d, rng.random()).expect("random arm set")
}

/// Linear estimator: closed-form covariance against enumeration, plus the design identity.
pub fn linbandit_covariance_suite(seed: u64) -> SuiteResult {
    let mut rng = rng_for(seed, 3);
    let mut t = Tracker::new("linbandit covariance");
    for _ in 0..COVARIANCE_CASES * MAX_DRAWS_PER_CASE {
        if t.cases == COVARIANCE_CASES {
            break;
        }
        let arms = random_arms(&mut rng);
        let (k, d) = (arms.k(), arms.d());
        let p = random_simplex(&mut rng, k, false);
        let mut p = p
            .iter()
            .map(|v| 0.5 * v + 0.5 / k as f64)
            .collect::<Vec<_>>();
        floor_and_renormalize(&mut p, 1e-6);
        let r = random_rewards(&mut rng, d);
        let a = arms.matrix();
        let q_direct = a.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(&p)) * a;
        if condition(&q_direct) > VERIFY_MAX_CONDITION {
            continue;
        }
        let sp = SimplexPoint::new(p.clone()).unwrap();
        let sigma = match linear_estimator_covariance(&arms, &sp, &r) {
            Ok(s) => s.into_matrix(),
            Err(_) => continue,
        };
        t.case();
        let q = design_matrix(&arms, &sp).unwrap().into_matrix();
        t.check(
            "A' diag(p) A = Q",
            max_abs(&(q - &q_direct)) / max_abs(&q_direct).max(1e-300),
            1e-12,
        );
        let lu = q_direct.lu();

        let rv = DVector::from_column_slice(&r);
        let mut oracle = -&rv * rv.transpose();
        for (c, &pc) in p.iter().enumerate() {
            let arm = a.row(c).transpose();
            let est = lu
                .solve(&(&arm * arm.dot(&rv)))
                .expect("nonsingular design");
            oracle += &est * est.transpose() * pc;
        }
        let scale = max_abs(&oracle).max(1.0);
        t.check(
            "covariance matches enumeration",
            max_abs(&(sigma - &oracle)) / scale,
            1e-10,
        );
        let bias = linear_unbiasedness_check(&arms, &sp, &r).unwrap();
        t.check(
            "estimator is unbiased",
            bias.iter().fold(0.0, |a, v| a.max(v.abs())),
            1e-9,
        );
    }
    t.finish()
}

/// `½ tr(Σ ∇²G) ≤ βd/2` and `Σ ⪰ 0` over random `(r, p, β)` for the given covariance.
pub fn bandit_qv_suite(seed: u64, cases: usize, covariance: CovarianceFn) -> SuiteResult {
    let mut rng = rng_for(seed, 4);
    let mut t = Tracker::new("bandit quadratic variation");
    for _ in 0..cases {
        t.case();
        let d = rng.random_range(1..=32);
        let beta = 10f64.powf(rng.random_range(-2.0..2.0));
        let p = random_floored(&mut rng, d, 1e-6);
        let r = random_rewards(&mut rng, d);
        let sigma = covariance(&r, &p);
        let qv = quadratic_variation_of(&sigma, &p, beta);
        let bound = beta * d as f64 / 2.0;
        t.check(
            "1/2 tr(Sigma hess G) <= beta d / 2",
            qv,
            bound * (1.0 + 1e-12) + 1e-12,
        );
        t.check(
            "lambda_min(Sigma) >= 0",
            -min_eigenvalue(&sigma),
            1e-10 * max_abs(&sigma).max(1.0),
        );
    }
    t.finish()
}

/// The linear analogue: `½ tr(AΣAᵀ ∇²G) ≤ βd/2` and `Σ ⪰ 0`.
pub fn linbandit_qv_suite(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = rng_for(seed, 5);
    let mut t = Tracker::new("linbandit quadratic variation");
    for _ in 0..cases * MAX_DRAWS_PER_CASE {
        if t.cases == cases {
            break;
        }
        let arms = random_arms(&mut rng);
        let (k, d) = (arms.k(), arms.d());
        let beta = 10f64.powf(rng.random_range(-2.0..2.0));
        let mut p = random_simplex(&mut rng, k, false);
        floor_and_renormalize(&mut p, 1e-3 / k as f64);
        let r = random_rewards(&mut rng, d);
        let sp = SimplexPoint::new(p.clone()).unwrap();
        if condition(design_matrix(&arms, &sp).unwrap().matrix()) > VERIFY_MAX_CONDITION {
            continue;
        }
        let Ok(sigma) = linear_estimator_covariance(&arms, &sp, &r) else {
            continue;
        };
        t.case();
        let sigma = sigma.into_matrix();
        let qv = linear_quadratic_variation_of(&arms, &sigma, &p, beta);
        let bound = beta * d as f64 / 2.0;
        t.check(
            "1/2 tr(A Sigma A' hess G) <= beta d / 2",
            qv,
            bound * (1.0 + 1e-9) + 1e-12,
        );
        t.check(
            "lambda_min(Sigma) >= 0",
            -min_eigenvalue(&sigma),
            1e-9 * max_abs(&sigma).max(1.0),
        );
    }
    t.finish()
}

fn check_report(t: &mut Tracker, name: &'static str, report: &RegretReport, sigmas: f64) {
    t.case();
    t.check(
        name,
        report.measured_regret - sigmas * report.stderr,
        report.theoretical_bound + report.tolerance,
    );
}

/// Continuous FTRL on every built-in adversary for `d ∈ {2, 10, 32}`, `β ∈ {1, 10, 100}`.
pub fn olo_bound_suite(steps: usize) -> Result<SuiteResult> {
    let mut t = Tracker::new("olo regret bound");
    let horizon = 10.0;
    for d in [2, 10, 32] {
        for beta in [1.0, 10.0, 100.0] {
            for (_, path) in RewardPath::builtin_suite(d, horizon)? {
                let cfg = OloRunConfig::new(beta, TimeGrid::new(horizon, steps)?, path)?;
                let out = run_continuous_ftrl(&cfg)?;
                check_report(&mut t, "regret <= ln d / beta", &out.report, 0.0);
            }
        }
    }
    Ok(t.finish())
}

/// Monte Carlo bandit runs on the built-in adversaries, `d = 3`, `T = 10`.
pub fn bandit_bound_suite(seed: u64, n_paths: usize, steps: usize) -> Result<SuiteResult> {
    let mut t = Tracker::new("bandit regret bound");
    let (d, horizon) = (3, 10.0);
    for (_, path) in RewardPath::builtin_suite(d, horizon)? {
        let beta = crate::bandit::bandit_beta(d, horizon);
        let cfg = BanditRunConfig::new(
            beta,
            TimeGrid::new(horizon, steps)?,
            path,
            n_paths,
            seed,
            1e-6,
        )?;
        let out = run_continuous_bandit(&cfg)?;
        check_report(
            &mut t,
            "regret - 3 se <= sqrt(2 T d ln d)",
            &out.report,
            3.0,
        );
    }
    Ok(t.finish())
}

/// Monte Carlo linear-bandit runs with 16 random arms in `d = 3`.
pub fn linbandit_bound_suite(seed: u64, n_paths: usize, steps: usize) -> Result<SuiteResult> {
    let mut t = Tracker::new("linbandit regret bound");
    let (k, d, horizon) = (16, 3, 10.0);
    let arms = ArmSet::random(k, d, seed)?;
    for (_, path) in RewardPath::builtin_suite(d, horizon)? {
        let beta = crate::linbandit::linbandit_beta(k, d, horizon);
        let cfg = LinBanditRunConfig::new(
            arms.clone(),
            beta,
            TimeGrid::new(horizon, steps)?,
            path,
            n_paths,
            seed,
            1e-6,
        )?;
        let out = run_continuous_linbandit(&cfg)?;
        check_report(
            &mut t,
            "regret - 3 se <= sqrt(2 T d ln k)",
            &out.report,
            3.0,
        );
    }
    Ok(t.finish())
}

/// Runs every suite with its default size.
pub fn run_verify_suite(seed: u64) -> Result<VerifyReport> {
    Ok(VerifyReport {
        seed,
        suites: vec![
            legendre_suite(seed),
            bandit_covariance_suite(seed),
            linbandit_covariance_suite(seed),
            bandit_qv_suite(seed, QV_CASES, &bandit_covariance),
            linbandit_qv_suite(seed, QV_CASES),
            olo_bound_suite(10_000)?,
            bandit_bound_suite(seed, 200, 2_000)?,
            linbandit_bound_suite(seed, 100, 1_000)?,
        ],
    })
}
