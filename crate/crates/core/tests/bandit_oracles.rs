use ctlearn::bandit::{
    bandit_beta, bandit_bound, estimator_covariance, floor_and_renormalize, quadratic_variation,
    run_continuous_bandit, run_discrete_exp3, simulate_bandit_path, unbiasedness_check,
    BanditRunConfig,
};
use ctlearn::{RewardPath, RewardTable, SimplexPoint, Temperature, TimeGrid};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_p(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    floor_and_renormalize(&mut p, 1e-6);
    p
}

/// `E[r̂ r̂ᵀ] − r rᵀ` by enumerating the arm draw.
fn enumerated_covariance(r: &[f64], p: &[f64]) -> DMatrix<f64> {
    let d = r.len();
    let mut second = DMatrix::zeros(d, d);
    for a in 0..d {
        let mut est = DVector::zeros(d);
        est[a] = r[a] / p[a];
        second += &est * est.transpose() * p[a];
    }
    let rv = DVector::from_column_slice(r);
    second - &rv * rv.transpose()
}

/// `½ tr(Σ ∇²G)` with the Hessian built entry by entry.
fn qv_oracle(sigma: &DMatrix<f64>, p: &[f64], beta: f64) -> f64 {
    let d = p.len();
    let mut total = 0.0;
    for a in 0..d {
        for b in 0..d {
            let h = beta * (if a == b { p[a] } else { 0.0 } - p[a] * p[b]);
            total += sigma[(a, b)] * h;
        }
    }
    0.5 * total
}

#[test]
fn documented_covariances() {
    let half = SimplexPoint::uniform(2);
    let sigma = estimator_covariance(&[1.0, 1.0], &half, 1e-6).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    assert_eq!(sigma.matrix(), &expected);
    let zero = estimator_covariance(&[0.0; 3], &SimplexPoint::uniform(3), 1e-6).unwrap();
    assert_eq!(zero.matrix().amax(), 0.0);
    let p = SimplexPoint::new(vec![0.9, 0.1]).unwrap();
    assert_eq!(unbiasedness_check(&[1.0, 0.0], &p).unwrap(), vec![0.0, 0.0]);
    assert!(estimator_covariance(&[1.0, 0.5], &SimplexPoint::vertex(2, 0), 1e-6).is_err());
}

#[test]
fn covariance_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let d = rng.random_range(1..=8);
        let p = random_p(&mut rng, d);
        let r: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let sigma = estimator_covariance(&r, &SimplexPoint::new(p.clone()).unwrap(), 1e-6).unwrap();
        let oracle = enumerated_covariance(&r, &p);
        let err = (sigma.matrix() - &oracle).amax() / oracle.amax().max(1.0);
        assert!(err <= 1e-12, "error {err}");
        let ev = sigma.matrix().clone().symmetric_eigenvalues();
        assert!(ev.min() >= -1e-10 * oracle.amax().max(1.0));
    }
}

#[test]
fn estimator_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let d = rng.random_range(1..=16);
        let p = random_p(&mut rng, d);
        let r: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let bias = unbiasedness_check(&r, &SimplexPoint::new(p).unwrap()).unwrap();
        assert!(bias.iter().all(|b| b.abs() <= 1e-13), "{bias:?}");
    }
}

#[test]
fn quadratic_variation_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let d = rng.random_range(1..=32);
        let beta = 10f64.powf(rng.random_range(-2.0..2.0));
        let p = random_p(&mut rng, d);
        let r: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let sp = SimplexPoint::new(p.clone()).unwrap();
        let qv = quadratic_variation(&r, &sp, Temperature::new(beta).unwrap()).unwrap();
        let oracle = qv_oracle(&enumerated_covariance(&r, &p), &p, beta);
        assert!((qv - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
        assert!(
            qv <= beta * d as f64 / 2.0 + 1e-9,
            "qv {qv} > {}",
            beta * d as f64 / 2.0
        );
    }
    let b = Temperature::new(2.0).unwrap();
    let u = SimplexPoint::uniform(4);
    // r = 1, p uniform: ½β(Σ r²(1 − p) − 0) = ½β(d − 1)
    let ones = quadratic_variation(&[1.0; 4], &u, b).unwrap();
    assert!((ones - 3.0).abs() < 1e-12);
    assert!(ones <= 4.0);
    assert_eq!(quadratic_variation(&[0.0; 4], &u, b).unwrap(), 0.0);
}

fn constant_cfg(
    r: Vec<f64>,
    beta: f64,
    steps: usize,
    n_paths: usize,
    seed: u64,
) -> BanditRunConfig {
    let horizon = 10.0;
    let path = RewardPath::constant(r, horizon).unwrap();
    BanditRunConfig::new(
        beta,
        TimeGrid::new(horizon, steps).unwrap(),
        path,
        n_paths,
        seed,
        1e-6,
    )
    .unwrap()
}

#[test]
fn frozen_and_single_arm_paths() {
    let cfg = constant_cfg(vec![0.9, 0.3, 0.0], 1e-12, 500, 1, 4);
    for rec in simulate_bandit_path(&cfg, 0).unwrap() {
        assert!(rec.p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-9));
        assert!((rec.expected_reward - 0.4).abs() < 1e-9);
    }

    let cfg = constant_cfg(vec![0.7], 1.0, 500, 20, 4);
    let a = simulate_bandit_path(&cfg, 0).unwrap();
    assert!(a.iter().all(|rec| rec.p == vec![1.0]));
    let out = run_continuous_bandit(&cfg).unwrap();
    assert!(out.report.measured_regret.abs() < 1e-12);
    assert!(out.report.stderr < 1e-12);
}

#[test]
fn paths_are_reproducible() {
    let cfg = constant_cfg(vec![1.0, 0.5, 0.0], bandit_beta(3, 10.0), 1000, 1, 77);
    assert_eq!(
        simulate_bandit_path(&cfg, 5).unwrap(),
        simulate_bandit_path(&cfg, 5).unwrap()
    );
    assert_ne!(
        simulate_bandit_path(&cfg, 5).unwrap(),
        simulate_bandit_path(&cfg, 6).unwrap()
    );
}

#[test]
fn bound_values() {
    assert!((bandit_bound(3, 10.0) - (60.0 * 3f64.ln()).sqrt()).abs() < 1e-12);
    assert!((bandit_bound(3, 10.0) - 8.119).abs() < 1e-3);
    assert!((bandit_beta(3, 10.0) - 0.27063).abs() < 1e-5);
}

#[test]
fn identical_arms_have_no_regret() {
    let cfg = constant_cfg(vec![0.6; 4], bandit_beta(4, 10.0), 1000, 200, 3);
    let r = run_continuous_bandit(&cfg).unwrap().report;
    assert!(r.measured_regret.abs() <= 3.0 * r.stderr + 1e-12, "{r:?}");
}

#[test]
fn two_arm_regret_below_bound() {
    let cfg = constant_cfg(vec![1.0, 0.0], bandit_beta(2, 10.0), 2000, 2000, 10);
    let r = run_continuous_bandit(&cfg).unwrap().report;
    assert!(r.measured_regret <= r.theoretical_bound, "{r:?}");
    assert!(!r.bound_violated);
}

#[test]
fn stable_under_step_halving() {
    let coarse = run_continuous_bandit(&constant_cfg(
        vec![1.0, 0.5, 0.0],
        bandit_beta(3, 10.0),
        1000,
        400,
        21,
    ))
    .unwrap()
    .report;
    let fine = run_continuous_bandit(&constant_cfg(
        vec![1.0, 0.5, 0.0],
        bandit_beta(3, 10.0),
        2000,
        400,
        21,
    ))
    .unwrap()
    .report;
    let allowed = (2.0 * coarse.stderr.max(fine.stderr)).max(0.05 * coarse.theoretical_bound);
    assert!((coarse.measured_regret - fine.measured_regret).abs() <= allowed);
}

#[test]
fn floor_does_not_distort() {
    let path = RewardPath::constant(vec![1.0, 0.5, 0.0], 10.0).unwrap();
    let grid = TimeGrid::new(10.0, 1000).unwrap();
    let run = |floor: f64| {
        let cfg =
            BanditRunConfig::new(bandit_beta(3, 10.0), grid, path.clone(), 400, 8, floor).unwrap();
        run_continuous_bandit(&cfg).unwrap().report
    };
    let (a, b) = (run(1e-4), run(1e-6));
    let ci = 1.96 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!(
        (a.measured_regret - b.measured_regret).abs() <= ci,
        "{a:?} {b:?}"
    );
}

#[test]
fn exp3_two_arms() {
    let table = RewardTable::from_rows(&vec![vec![1.0, 0.0]; 200]).unwrap();
    let beta = bandit_beta(2, 200.0);
    let r = run_discrete_exp3(beta, &table, 500, 5).unwrap().report;
    assert!((r.theoretical_bound - 23.548).abs() < 1e-3);
    assert!(
        r.measured_regret - 3.0 * r.stderr <= r.theoretical_bound,
        "{r:?}"
    );

    // A single round is played from the uniform distribution.
    let one = RewardTable::from_rows(&[vec![0.8, 0.2, 0.5]]).unwrap();
    for beta in [0.01, 1.0, 100.0] {
        let r = run_discrete_exp3(beta, &one, 10, 0).unwrap().report;
        assert!((r.measured_regret - (0.8 - 0.5)).abs() < 1e-15);
    }

    let single = RewardTable::from_rows(&vec![vec![0.4]; 30]).unwrap();
    assert!(
        run_discrete_exp3(1.0, &single, 10, 0)
            .unwrap()
            .report
            .measured_regret
            .abs()
            < 1e-12
    );
}
