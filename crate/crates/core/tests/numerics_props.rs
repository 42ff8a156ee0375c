use ctlearn::numerics::{
    em_step, gaussian_increment, integrate_path, psd_sqrt, NoiseFactor, PathNoise, PsdMatrix,
    RandomStream,
};
use ctlearn::{DualVector, TimeGrid};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn stream(path: u64, step: u64) -> RandomStream {
    RandomStream {
        master_seed: 42,
        path_index: path,
        step_index: step,
    }
}

#[test]
fn sqrt_of_simple_matrices() {
    let id = PsdMatrix::new(DMatrix::identity(4, 4)).unwrap();
    assert!((psd_sqrt(&id).unwrap().matrix() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-15);
    let diag = PsdMatrix::new(DMatrix::from_diagonal(&nalgebra::dvector![4.0, 9.0])).unwrap();
    let root = psd_sqrt(&diag).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
    assert!((root.matrix() - expected).amax() < 1e-15);
}

#[test]
fn sqrt_reconstructs_random_psd_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..1000 {
        let n = if case < 50 {
            5
        } else {
            rng.random_range(1..=64)
        };
        // Random rank, so rank-deficient inputs are covered too.
        let m = rng.random_range(1..=n);
        let b = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = &b * b.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let sigma = psd_sqrt(&PsdMatrix::new(s.clone()).unwrap()).unwrap();
        let f = sigma.matrix();
        assert_eq!(f, &f.transpose(), "factor must be symmetric");
        let err = (f * f.transpose() - &s).norm() / s.norm();
        assert!(err <= 1e-9, "n = {n}, rank {m}: relative error {err}");
        let ev = f.clone().symmetric_eigenvalues();
        assert!(ev.min() >= -1e-9 * ev.amax().max(1.0));
    }
}

#[test]
fn non_psd_input_is_rejected() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
    assert!(PsdMatrix::new(m).is_err());
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(PsdMatrix::new(asym).is_err());
}

#[test]
fn increments_are_pure_functions_of_their_address() {
    let a = gaussian_increment(stream(3, 17), 8, 0.5);
    let b = gaussian_increment(stream(3, 17), 8, 0.5);
    assert_eq!(a, b);
    assert_ne!(a, gaussian_increment(stream(3, 18), 8, 0.5));
    assert_ne!(a, gaussian_increment(stream(4, 17), 8, 0.5));

    // Visiting steps out of order gives the same samples as addressing them directly.
    let mut noise = PathNoise::new(42, 3);
    let mut out = vec![0.0; 8];
    noise.fill(40, 0.5, &mut out);
    noise.fill(17, 0.5, &mut out);
    assert_eq!(out, a);
}

#[test]
fn increment_moments() {
    let h = 0.01;
    let mut samples = Vec::with_capacity(1_000_000);
    for step in 0..1000 {
        samples.extend(gaussian_increment(stream(0, step), 1000, h));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() <= 4.0 * (h / n).sqrt(), "mean {mean}");
    assert!((var - h).abs() <= 0.01 * h, "variance {var}");
}

#[test]
fn paths_are_uncorrelated() {
    let a: Vec<f64> = (0..100)
        .flat_map(|s| gaussian_increment(stream(0, s), 1000, 1.0))
        .collect();
    let b: Vec<f64> = (0..100)
        .flat_map(|s| gaussian_increment(stream(1, s), 1000, 1.0))
        .collect();
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let rho = cov / (va * vb).sqrt();
    assert!(rho.abs() < 0.01, "rho = {rho}");
}

#[test]
fn euler_maruyama_limits() {
    let s = DualVector::zeros(2);
    let next = em_step(&s, &[1.0, 0.5], &NoiseFactor::zeros(2), &[0.3, -0.2], 0.1).unwrap();
    assert_eq!(next.as_slice(), &[0.1, 0.05]);

    let s = DualVector::new(vec![1.0, -2.0]).unwrap();
    let dw = [0.3, -0.7];
    let next = em_step(&s, &[0.0, 0.0], &NoiseFactor::identity(2), &dw, 0.1).unwrap();
    assert_eq!(next.as_slice(), &[1.3, -2.7]);

    let grid = TimeGrid::new(5.0, 4096).unwrap();
    let r = [0.75, 0.25, 1.0];
    let mut s = DualVector::zeros(3);
    for _ in 0..grid.steps() {
        s = em_step(&s, &r, &NoiseFactor::zeros(3), &[0.0; 3], grid.h()).unwrap();
    }
    for (v, ri) in s.as_slice().iter().zip(r) {
        assert!((v - ri * 5.0).abs() <= 1e-12);
    }
    assert!(em_step(&s, &r, &NoiseFactor::zeros(2), &[0.0; 3], 0.1).is_err());
}

#[test]
fn left_sums() {
    let grid = TimeGrid::new(3.0, 300).unwrap();
    assert!((integrate_path(&vec![1.0; 300], &grid).unwrap() - 3.0).abs() < 1e-12);

    let grid = TimeGrid::new(1.0, 100_000).unwrap();
    let f: Vec<f64> = (0..grid.steps()).map(|i| grid.t(i)).collect();
    assert!((integrate_path(&f, &grid).unwrap() - 0.5).abs() < 1e-4);

    let grid = TimeGrid::new(std::f64::consts::PI, 100_000).unwrap();
    let f: Vec<f64> = (0..grid.steps()).map(|i| grid.t(i).sin()).collect();
    assert!((integrate_path(&f, &grid).unwrap() - 2.0).abs() < 1e-4);

    assert!(integrate_path(&[1.0; 3], &grid).is_err());
}

#[test]
fn grid_ends_exactly_at_the_horizon() {
    for (t, n) in [(10.0, 3), (0.7, 7), (std::f64::consts::PI, 100_000)] {
        let g = TimeGrid::new(t, n).unwrap();
        assert_eq!(g.t(n), t);
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.index_of(t).unwrap(), n);
    }
    assert!(TimeGrid::new(0.0, 10).is_err());
    assert!(TimeGrid::new(1.0, 0).is_err());
}
