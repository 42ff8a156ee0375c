//! Adversarial linear bandit over a finite arm set `A ⊂ ℝᵈ` (rows of a `k × d` matrix).
//!
//! The learner keeps a cumulative estimate `s ∈ ℝᵈ` and plays arm `a` with
//! probability `p = ∇G(A s)` over `k` arms. The estimate `r̂ = Q⁻¹a(aᵀr)` with
//! `Q = Σ_a p_a a aᵀ` is unbiased, so the continuous model is the d-dimensional SDE
//! `ds = r dt + σ dB` with `σσᵀ = Σ_a p_a Q⁻¹a(aᵀr)²aᵀQ⁻¹ − r rᵀ`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bandit::{assemble_outcome, reduce_paths};
use crate::error::{Error, Result};
use crate::legendre::{hess_at, softmax_into, SimplexPoint, Temperature};
use crate::numerics::{em_step_in_place, psd_sqrt, PathNoise, PsdMatrix, TimeGrid};
use crate::olo::MAX_BETA;
use crate::report::RunOutcome;
use crate::rewards::{RewardPath, RewardTable};

/// Largest condition number of `Q` accepted for inversion.
pub const MAX_CONDITION: f64 = 1e12;
const L1_TOL: f64 = 1e-12;

/// `k` arms in ℝᵈ with `‖a‖₁ ≤ 1`, spanning ℝᵈ.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    arms: DMatrix<f64>,
}

impl ArmSet {
    pub fn new(arms: DMatrix<f64>) -> Result<Self> {
        let (k, d) = arms.shape();
        if d == 0 || k < d {
            return Err(Error::ArmSet(format!(
                "need k >= d >= 1 arms, got k = {k}, d = {d}"
            )));
        }
        if arms.iter().any(|v| !v.is_finite()) {
            return Err(Error::ArmSet("arm features must be finite".into()));
        }
        for (i, row) in arms.row_iter().enumerate() {
            let norm = row.lp_norm(1);
            if norm > 1.0 + L1_TOL {
                return Err(Error::ArmSet(format!(
                    "arm {} has l1 norm {norm} > 1",
                    i + 1
                )));
            }
        }
        let rank = arms.rank(1e-10 * arms.amax().max(f64::MIN_POSITIVE));
        if rank < d {
            return Err(Error::ArmSet(format!(
                "arms span a subspace of rank {rank} < d = {d}"
            )));
        }
        Ok(ArmSet { arms })
    }

    /// The standard basis `e_1, …, e_d`.
    pub fn basis(d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d))
    }

    /// `k` random arms with Gaussian directions and l1 norms uniform in `[½, 1]`.
    pub fn random(k: usize, d: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let mut arms = DMatrix::zeros(k, d);
            for mut row in arms.row_iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let radius = rng.random_range(0.5..=1.0);
                let norm = row.lp_norm(1);
                row.scale_mut(radius / norm);
            }
            if let Ok(set) = Self::new(arms) {
                return Ok(set);
            }
        }
        Err(Error::ArmSet(format!(
            "could not draw {k} spanning arms in dimension {d}"
        )))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.arms
    }

    pub fn k(&self) -> usize {
        self.arms.nrows()
    }

    pub fn d(&self) -> usize {
        self.arms.ncols()
    }

    /// CSV with header `a_1,...,a_d`, one arm per row.
    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (1..=self.d()).map(|j| format!("a_{j}")).collect();
        let mut out = header.join(",");
        out.push('\n');
        for row in self.arms.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parses an arm set. Row numbers in errors count the header as row 1.
pub fn load_arms(text: &str) -> Result<ArmSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let d = header.len();
    for (j, name) in header.iter().enumerate() {
        if name != format!("a_{}", j + 1) {
            return Err(Error::Parse {
                row: 1,
                message: format!("expected column `a_{}`, found `{name}`", j + 1),
            });
        }
    }
    let mut data = Vec::new();
    let mut k = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: i + 2,
            message: e.to_string(),
        })?;
        let row = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(i + 2);
        if record.len() != d {
            return Err(Error::Parse {
                row,
                message: format!("expected {d} cells, found {}", record.len()),
            });
        }
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric cell `{cell}`"),
            })?;
            data.push(v);
        }
        let l1: f64 = data[data.len() - d..].iter().map(|v| v.abs()).sum();
        if l1 > 1.0 + L1_TOL {
            return Err(Error::Parse {
                row,
                message: format!("arm has l1 norm {l1} > 1"),
            });
        }
        k += 1;
    }
    ArmSet::new(DMatrix::from_row_slice(k, d, &data))
}

/// `√(2 ln k / (dT))`.
pub fn linbandit_beta(k: usize, d: usize, horizon: f64) -> f64 {
    (2.0 * (k as f64).ln() / (d as f64 * horizon)).sqrt()
}

/// `√(2 T d ln k)`.
pub fn linbandit_bound(k: usize, d: usize, horizon: f64) -> f64 {
    (2.0 * horizon * d as f64 * (k as f64).ln()).sqrt()
}

/// Default exploration rate of the discrete learner, `min(1, 0.1·√(d ln k / T))`.
pub fn default_gamma(k: usize, d: usize, rounds: usize) -> f64 {
    (0.1 * (d as f64 * (k as f64).ln() / rounds as f64).sqrt()).min(1.0)
}

fn check_weights(arms: &ArmSet, p: &[f64]) -> Result<()> {
    if p.len() != arms.k() {
        return Err(Error::Dimension {
            expected: arms.k(),
            got: p.len(),
        });
    }
    Ok(())
}

/// `Q = Σ_a p_a a aᵀ`.
pub fn design_matrix(arms: &ArmSet, p: &SimplexPoint) -> Result<PsdMatrix> {
    check_weights(arms, p.as_slice())?;
    let mut q = DMatrix::zeros(arms.d(), arms.d());
    design_into(arms, p.as_slice(), &mut q);
    Ok(PsdMatrix::from_symmetric(q))
}

fn design_into(arms: &ArmSet, p: &[f64], q: &mut DMatrix<f64>) {
    let a = &arms.arms;
    let d = arms.d();
    q.fill(0.0);
    for (c, &pc) in p.iter().enumerate() {
        for i in 0..d {
            let w = pc * a[(c, i)];
            for j in 0..=i {
                q[(i, j)] += w * a[(c, j)];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            q[(j, i)] = q[(i, j)];
        }
    }
}

/// `Q⁻¹` via Cholesky, refusing matrices with condition number above [`MAX_CONDITION`].
pub fn invert_design(q: &PsdMatrix) -> Result<DMatrix<f64>> {
    let eigenvalues = q.matrix().symmetric_eigenvalues();
    let max = eigenvalues.max();
    let min = eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::Condition {
            condition,
            limit: MAX_CONDITION,
        });
    }
    let chol = Cholesky::new(q.matrix().clone()).ok_or(Error::Condition {
        condition,
        limit: MAX_CONDITION,
    })?;
    Ok(chol.inverse())
}

fn check_reward(arms: &ArmSet, r: &[f64]) -> Result<()> {
    if r.len() != arms.d() {
        return Err(Error::Dimension {
            expected: arms.d(),
            got: r.len(),
        });
    }
    if let Some(v) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("reward {v} outside [0, 1]")));
    }
    Ok(())
}

/// `Σ = Σ_a p_a Q⁻¹a(aᵀr)²aᵀQ⁻¹ − r rᵀ`, the covariance of `r̂ = Q⁻¹a(aᵀr)`.
pub fn linear_estimator_covariance(
    arms: &ArmSet,
    p: &SimplexPoint,
    r: &[f64],
) -> Result<PsdMatrix> {
    check_weights(arms, p.as_slice())?;
    check_reward(arms, r)?;
    let q_inv = invert_design(&design_matrix(arms, p)?)?;
    let mut sigma = DMatrix::zeros(arms.d(), arms.d());
    let mut u = DVector::zeros(arms.d());
    linear_covariance_into(arms, p.as_slice(), r, &q_inv, &mut u, &mut sigma);
    Ok(PsdMatrix::from_symmetric(sigma))
}

fn linear_covariance_into(
    arms: &ArmSet,
    p: &[f64],
    r: &[f64],
    q_inv: &DMatrix<f64>,
    u: &mut DVector<f64>,
    sigma: &mut DMatrix<f64>,
) {
    let d = arms.d();
    let a = &arms.arms;
    sigma.fill(0.0);
    for (c, &pc) in p.iter().enumerate() {
        let mut payoff = 0.0;
        for j in 0..d {
            payoff += a[(c, j)] * r[j];
        }
        // u = Q⁻¹a
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += q_inv[(i, j)] * a[(c, j)];
            }
            u[i] = acc;
        }
        let w = pc * payoff * payoff;
        for i in 0..d {
            for j in 0..=i {
                sigma[(i, j)] += w * u[i] * u[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            let v = sigma[(i, j)] - r[i] * r[j];
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
}

/// `Σ_a p_a Q⁻¹a(aᵀr) − r`, zero up to the accuracy of the solve.
pub fn linear_unbiasedness_check(arms: &ArmSet, p: &SimplexPoint, r: &[f64]) -> Result<Vec<f64>> {
    check_weights(arms, p.as_slice())?;
    check_reward(arms, r)?;
    let q_inv = invert_design(&design_matrix(arms, p)?)?;
    let a = arms.matrix();
    let rv = DVector::from_column_slice(r);
    let mut mean = DVector::zeros(arms.d());
    for (c, &pc) in p.as_slice().iter().enumerate() {
        let arm = a.row(c).transpose();
        let payoff = arm.dot(&rv);
        mean += (&q_inv * &arm) * (pc * payoff);
    }
    Ok((mean - rv).iter().copied().collect())
}

/// `½ tr(A Σ Aᵀ ∇²G(As))` with the k-dimensional Hessian taken at `p`.
/// Bounded by `βd/2` whenever `‖a‖₁ ≤ 1` and `r ∈ [0,1]ᵈ`.
pub fn linear_quadratic_variation(
    arms: &ArmSet,
    p: &SimplexPoint,
    r: &[f64],
    beta: Temperature,
) -> Result<f64> {
    let sigma = linear_estimator_covariance(arms, p, r)?;
    Ok(linear_quadratic_variation_of(
        arms,
        sigma.matrix(),
        p.as_slice(),
        beta.get(),
    ))
}

pub fn linear_quadratic_variation_of(
    arms: &ArmSet,
    sigma: &DMatrix<f64>,
    p: &[f64],
    beta: f64,
) -> f64 {
    let a = arms.matrix();
    0.5 * (a * sigma * a.transpose() * hess_at(p, beta)).trace()
}

#[derive(Debug, Clone)]
pub struct LinBanditRunConfig {
    pub arms: ArmSet,
    pub beta: Temperature,
    pub grid: TimeGrid,
    pub path: RewardPath,
    pub n_paths: usize,
    pub master_seed: u64,
    pub p_floor: f64,
}

impl LinBanditRunConfig {
    pub fn new(
        arms: ArmSet,
        beta: f64,
        grid: TimeGrid,
        path: RewardPath,
        n_paths: usize,
        master_seed: u64,
        p_floor: f64,
    ) -> Result<Self> {
        let k = arms.k();
        if path.dim() != arms.d() {
            return Err(Error::Dimension {
                expected: arms.d(),
                got: path.dim(),
            });
        }
        if n_paths == 0 {
            return Err(Error::Domain("n_paths must be at least 1".into()));
        }
        if !(p_floor > 0.0 && (k == 1 || p_floor < 1.0 / k as f64)) {
            return Err(Error::Domain(format!(
                "p_floor must lie in (0, 1/k), got {p_floor}"
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
        Ok(LinBanditRunConfig {
            arms,
            beta: Temperature::new(beta)?,
            grid,
            path,
            n_paths,
            master_seed,
            p_floor,
        })
    }

    pub fn bound(&self) -> f64 {
        linbandit_bound(self.arms.k(), self.arms.d(), self.grid.horizon())
    }
}

/// Per-step arm payoffs `A r(t_i)`, row-major `steps × k`.
fn arm_payoffs(arms: &ArmSet, rewards: &RewardTable) -> Vec<f64> {
    let (k, d) = (arms.k(), arms.d());
    let a = arms.matrix();
    let mut out = Vec::with_capacity(rewards.len() * k);
    for r in rewards.rows() {
        for c in 0..k {
            out.push((0..d).map(|j| a[(c, j)] * r[j]).sum());
        }
    }
    out
}

/// The sequence of floored arm distributions along one path, for inspection and tests.
pub fn simulate_linbandit_path(cfg: &LinBanditRunConfig, path_index: u64) -> Result<Vec<Vec<f64>>> {
    let rewards = cfg.path.tabulate(&cfg.grid)?;
    let payoffs = arm_payoffs(&cfg.arms, &rewards);
    let mut out = Vec::with_capacity(cfg.grid.steps());
    simulate(cfg, &rewards, &payoffs, path_index, |_, p, _| {
        out.push(p.to_vec())
    })?;
    Ok(out)
}

fn simulate(
    cfg: &LinBanditRunConfig,
    rewards: &RewardTable,
    payoffs: &[f64],
    path_index: u64,
    mut visit: impl FnMut(usize, &[f64], f64),
) -> Result<()> {
    let (k, d) = (cfg.arms.k(), cfg.arms.d());
    let a = cfg.arms.matrix();
    let h = cfg.grid.h();
    let beta = cfg.beta.get();
    let mut noise = PathNoise::new(cfg.master_seed, path_index);
    let mut s = vec![0.0; d];
    let mut scores = vec![0.0; k];
    let mut p = vec![0.0; k];
    let mut dw = vec![0.0; d];
    let mut q = DMatrix::zeros(d, d);
    let mut sigma = DMatrix::zeros(d, d);
    let mut u = DVector::zeros(d);

    for (i, r) in rewards.rows().enumerate() {
        for (c, score) in scores.iter_mut().enumerate() {
            *score = (0..d).map(|j| a[(c, j)] * s[j]).sum();
        }
        softmax_into(&scores, beta, &mut p);
        crate::bandit::floor_and_renormalize(&mut p, cfg.p_floor);
        let arm_payoff = &payoffs[i * k..(i + 1) * k];
        let expected: f64 = p.iter().zip(arm_payoff).map(|(x, y)| x * y).sum();
        visit(i, &p, expected);

        design_into(&cfg.arms, &p, &mut q);
        let q_inv = invert_design(&PsdMatrix::from_symmetric(q.clone()))?;
        linear_covariance_into(&cfg.arms, &p, r, &q_inv, &mut u, &mut sigma);
        let factor = psd_sqrt(&PsdMatrix::from_symmetric(sigma.clone()))?;
        noise.fill(i as u64, h, &mut dw);
        em_step_in_place(&mut s, r, factor.matrix(), &dw, h);
    }
    Ok(())
}

/// Monte Carlo estimate of the continuous-time regret, checked against `√(2Td ln k)`.
pub fn run_continuous_linbandit(cfg: &LinBanditRunConfig) -> Result<RunOutcome> {
    let rewards = cfg.path.tabulate(&cfg.grid)?;
    let payoffs = arm_payoffs(&cfg.arms, &rewards);
    let h = cfg.grid.h();
    let paths = reduce_paths(cfg.n_paths, cfg.grid.steps(), h, |path_index, visit| {
        simulate(cfg, &rewards, &payoffs, path_index, |i, _, e| visit(i, e))
    })?;
    let comparator_at = |n: usize| -> Vec<f64> {
        let sums = DVector::from_vec(rewards.column_sums(n));
        (cfg.arms.matrix() * sums * h).iter().copied().collect()
    };
    Ok(assemble_outcome(
        comparator_at,
        &paths,
        &cfg.grid,
        cfg.beta.get(),
        cfg.bound(),
    ))
}

/// Discrete exponential weights over arms with uniform exploration mixing
/// `p ← (1−γ)p + γ/k` and the estimate `r̂ = Q⁻¹a(aᵀr)`.
pub fn run_discrete_linbandit(
    arms: &ArmSet,
    beta: f64,
    gamma: f64,
    rewards: &RewardTable,
    episodes: usize,
    master_seed: u64,
) -> Result<RunOutcome> {
    let beta = Temperature::new(beta)?.get();
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    if rewards.dim() != arms.d() {
        return Err(Error::Dimension {
            expected: arms.d(),
            got: rewards.dim(),
        });
    }
    let rounds = rewards.len();
    if rounds == 0 || episodes == 0 {
        return Err(Error::Domain(
            "need at least one round and one episode".into(),
        ));
    }
    let (k, d) = (arms.k(), arms.d());
    let a = arms.matrix();
    let payoffs = arm_payoffs(arms, rewards);
    let paths = reduce_paths(episodes, rounds, 1.0, |episode, visit| {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(episode);
        let mut estimate = vec![0.0; d];
        let mut scores = vec![0.0; k];
        let mut p = vec![0.0; k];
        let mut q = DMatrix::zeros(d, d);
        for t in 0..rounds {
            for (c, score) in scores.iter_mut().enumerate() {
                *score = (0..d).map(|j| a[(c, j)] * estimate[j]).sum();
            }
            softmax_into(&scores, beta, &mut p);
            for v in p.iter_mut() {
                *v = (1.0 - gamma) * *v + gamma / k as f64;
            }
            let arm_payoff = &payoffs[t * k..(t + 1) * k];
            visit(t, p.iter().zip(arm_payoff).map(|(x, y)| x * y).sum());

            let arm = WeightedIndex::new(&p)
                .map_err(|e| Error::Domain(format!("cannot sample arm: {e}")))?
                .sample(&mut rng);
            design_into(arms, &p, &mut q);
            let q_inv = invert_design(&PsdMatrix::from_symmetric(q.clone()))?;
            let chosen = a.row(arm).transpose();
            let update = q_inv * chosen * arm_payoff[arm];
            for (e, u) in estimate.iter_mut().zip(update.iter()) {
                *e += u;
            }
        }
        Ok(())
    })?;
    let grid = TimeGrid::new(rounds as f64, rounds)?;
    let comparator_at = |n: usize| -> Vec<f64> {
        let sums = DVector::from_vec(rewards.column_sums(n));
        (a * sums).iter().copied().collect()
    };
    let mut outcome = assemble_outcome(
        comparator_at,
        &paths,
        &grid,
        beta,
        linbandit_bound(k, d, rounds as f64),
    );
    outcome.report.tolerance = 1e-9;
    outcome.report.bound_violated = outcome.report.measured_regret - 3.0 * outcome.report.stderr
        > outcome.report.theoretical_bound + 1e-9;
    Ok(outcome)
}
