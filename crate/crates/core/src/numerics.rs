//! Numerical kernels shared by the SDE simulators.
//!
//! Noise is counter based: the Gaussian increment used at step `i` of path `j`
//! is a pure function of `(master_seed, j, i)`. Each path owns a ChaCha8
//! stream and each step starts at its own fixed word offset inside it, so the
//! draw does not depend on how many samples earlier steps consumed or on which
//! worker simulated the path.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::legendre::DualVector;

/// Symmetry tolerance, relative to the largest entry (floor 1).
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Most negative eigenvalue accepted as round-off, relative to the spectral radius (floor 1).
pub const NEG_EIGEN_TOL: f64 = 1e-9;

/// 32-bit words reserved for each step inside a path's stream.
const WORDS_PER_STEP: u128 = 1 << 20;

/// A symmetric positive semidefinite matrix (a covariance).
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(DMatrix<f64>);

impl PsdMatrix {
    /// Checks symmetry and the spectrum.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        let eig = m.clone().symmetric_eigen();
        check_spectrum(eig.eigenvalues.as_slice())?;
        Ok(PsdMatrix(m))
    }

    /// Skips the spectral check; [`psd_sqrt`] performs it anyway.
    pub(crate) fn from_symmetric(m: DMatrix<f64>) -> Self {
        debug_assert!(check_symmetric(&m).is_ok());
        PsdMatrix(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Domain(format!(
                    "matrix not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

fn check_spectrum(eigenvalues: &[f64]) -> Result<()> {
    let radius = eigenvalues.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    match eigenvalues.iter().copied().reduce(f64::min) {
        Some(min) if min < -NEG_EIGEN_TOL * radius => Err(Error::Domain(format!(
            "matrix is not positive semidefinite: eigenvalue {min:e}"
        ))),
        _ => Ok(()),
    }
}

/// A square root `σ` of a covariance, `σσᵀ = Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFactor(DMatrix<f64>);

impl NoiseFactor {
    pub fn zeros(n: usize) -> Self {
        NoiseFactor(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        NoiseFactor(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Symmetric square root `V √Λ Vᵀ`, with round-off negative eigenvalues clamped to 0.
pub fn psd_sqrt(s: &PsdMatrix) -> Result<NoiseFactor> {
    let eig = s.matrix().clone().symmetric_eigen();
    check_spectrum(eig.eigenvalues.as_slice())?;
    let v = eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(root);
    }
    let mut root = scaled * v.transpose();
    let n = root.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (root[(i, j)] + root[(j, i)]);
            root[(i, j)] = avg;
            root[(j, i)] = avg;
        }
    }
    Ok(NoiseFactor(root))
}

/// Coordinates of one Gaussian increment: which path, which step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub master_seed: u64,
    pub path_index: u64,
    pub step_index: u64,
}

/// `n` independent `N(0, h)` samples addressed by `stream`.
pub fn gaussian_increment(stream: RandomStream, n: usize, h: f64) -> Vec<f64> {
    let mut noise = PathNoise::new(stream.master_seed, stream.path_index);
    let mut out = vec![0.0; n];
    noise.fill(stream.step_index, h, &mut out);
    out
}

/// Keyed generator for one Monte Carlo path; reused across its steps.
#[derive(Debug, Clone)]
pub struct PathNoise {
    rng: ChaCha8Rng,
}

impl PathNoise {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(path_index);
        PathNoise { rng }
    }

    /// Fills `out` with `N(0, h)` samples for `step_index`.
    pub fn fill(&mut self, step_index: u64, h: f64, out: &mut [f64]) {
        self.rng.set_word_pos(step_index as u128 * WORDS_PER_STEP);
        let scale = h.sqrt();
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *o = scale * z;
        }
    }
}

/// Uniform grid `t_i = T·i/steps` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::Domain("steps must be positive".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_i`; exact at both ends.
    pub fn t(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    /// Index of a grid time, rejecting points off the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let x = t / self.h();
        let i = x.round();
        if (x - i).abs() > 1e-9 * x.max(1.0) {
            return Err(Error::OffGrid { t, h: self.h() });
        }
        Ok(i as usize)
    }
}

/// One Euler–Maruyama step `s + drift·h + σ·dW`. `dW` already carries variance `h`.
pub fn em_step(
    s: &DualVector,
    drift: &[f64],
    sigma: &NoiseFactor,
    dw: &[f64],
    h: f64,
) -> Result<DualVector> {
    let n = s.len();
    for len in [drift.len(), sigma.dim(), dw.len()] {
        if len != n {
            return Err(Error::Dimension {
                expected: n,
                got: len,
            });
        }
    }
    let mut next = s.as_slice().to_vec();
    em_step_in_place(&mut next, drift, sigma.matrix(), dw, h);
    DualVector::new(next)
}

/// Allocation-free kernel behind [`em_step`]; lengths are the caller's responsibility.
pub(crate) fn em_step_in_place(
    s: &mut [f64],
    drift: &[f64],
    sigma: &DMatrix<f64>,
    dw: &[f64],
    h: f64,
) {
    let n = s.len();
    for i in 0..n {
        let mut noise = 0.0;
        for j in 0..n {
            noise += sigma[(i, j)] * dw[j];
        }
        s[i] += drift[i] * h + noise;
    }
}

/// Left Riemann sum `Σ f_i h` over the grid's `steps` intervals.
pub fn integrate_path(f: &[f64], grid: &TimeGrid) -> Result<f64> {
    if f.len() != grid.steps() {
        return Err(Error::Dimension {
            expected: grid.steps(),
            got: f.len(),
        });
    }
    Ok(f.iter().sum::<f64>() * grid.h())
}

/// `σ·v` as a vector, for callers holding nalgebra types.
pub fn apply_factor(sigma: &NoiseFactor, v: &[f64]) -> Vec<f64> {
    let out = sigma.matrix() * DVector::from_column_slice(v);
    out.iter().copied().collect()
}
