//! Gaussian coarse-grained simulation.
//!
//! Three samplers produce mean-zero stationary Gaussian paths with a given
//! autocorrelation `C`:
//!
//! * `Gle`: extract the memory kernel from `C`, draw the initial value and the
//!   fluctuating forces jointly, then integrate the GLE.
//! * `Direct`: draw the whole path from the Toeplitz covariance `C(t_m - t_n)`.
//! * `Spectral`: circulant embedding, with independent Gaussian Fourier
//!   coefficients.
//!
//! Every realization draws from its own ChaCha stream selected by the row
//! index, so ensembles do not depend on the number of worker threads.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::series::{pairwise_sum, ScalarSeries, TimeGrid};
use crate::volterra::{cumulative_trapezoid, kernel_from_acf, solve_volterra2_convolution, AcfInput};

/// Largest tolerated share of clipped negative eigenvalue mass.
pub const MAX_CLIPPED_FRACTION: f64 = 0.01;

/// Minimum ensemble size for [`empirical_acf`].
pub const MIN_ACF_SAMPLES: usize = 30;

/// Record of the eigenvalue clipping applied to a covariance matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RepairLog {
    pub clipped_count: usize,
    pub clipped_mass: f64,
    pub trace: f64,
}

impl RepairLog {
    pub fn clipped_fraction(&self) -> f64 {
        if self.trace == 0.0 {
            0.0
        } else {
            self.clipped_mass / self.trace
        }
    }
}

/// Symmetric positive-semidefinite covariance with slot labels.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    labels: Vec<String>,
    matrix: DMatrix<f64>,
    repair: RepairLog,
}

impl CovarianceMatrix {
    /// Symmetrizes `matrix`, clips negative eigenvalues and logs the clipped mass.
    pub fn repaired(matrix: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n || labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: labels.len() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "covariance" });
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let trace = sym.trace();
        let eig = SymmetricEigen::new(sym.clone());
        let negatives: Vec<f64> = eig.eigenvalues.iter().filter(|&&v| v < 0.0).cloned().collect();
        let clipped_mass: f64 = negatives.iter().map(|v| -v).sum();
        let repair = RepairLog { clipped_count: negatives.len(), clipped_mass, trace };
        if repair.clipped_fraction() > MAX_CLIPPED_FRACTION {
            return Err(Error::NonRealizable(format!(
                "covariance has {:.3e} negative eigenvalue mass ({:.2}% of the trace)",
                clipped_mass,
                100.0 * repair.clipped_fraction()
            )));
        }
        let matrix = if negatives.is_empty() {
            sym
        } else {
            let clipped = eig.eigenvalues.map(|v| v.max(0.0));
            let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
            (&rebuilt + rebuilt.transpose()) * 0.5
        };
        Ok(Self { labels, matrix, repair })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn repair_log(&self) -> &RepairLog {
        &self.repair
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Lower-triangular `F` with `F F^T` equal to the covariance.
    ///
    /// Pivots below a relative threshold are treated as exact zeros, so
    /// rank-deficient matrices factor; a diagonal jitter of
    /// `1e-12 trace / dim` is added once if a pivot goes clearly negative.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        match semidefinite_cholesky(&self.matrix) {
            Ok(f) => Ok(f),
            Err(_) => {
                let jitter = 1e-12 * self.repair.trace.abs() / n as f64;
                let mut jittered = self.matrix.clone();
                for i in 0..n {
                    jittered[(i, i)] += jitter;
                }
                semidefinite_cholesky(&jittered)
            }
        }
    }
}

fn semidefinite_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-10 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d > tol {
            let pivot = d.sqrt();
            l[(j, j)] = pivot;
            for i in j + 1..n {
                let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                l[(i, j)] = s / pivot;
            }
        } else if d < -tol {
            return Err(Error::Factorization { index: j, value: d });
        }
    }
    Ok(l)
}

/// Joint covariance of the initial value and the fluctuating forces.
///
/// Slot 0 is `z`, slot `k + 1` is `eta(t_k)` for `k = 0..=n_steps`:
/// `Sigma[0][0] = z_var`, `Sigma[0][k] = 0` and
/// `Sigma[j][k] = -K(|t_j - t_k|) z_var`.
pub fn build_noise_covariance(kernel: &ScalarSeries, z_var: f64) -> Result<CovarianceMatrix> {
    noise_covariance_from_values(kernel.values(), z_var)
}

/// [`build_noise_covariance`] on raw kernel values; an empty slice yields `[z_var]`.
pub fn noise_covariance_from_values(kernel: &[f64], z_var: f64) -> Result<CovarianceMatrix> {
    if !(z_var.is_finite() && z_var > 0.0) {
        return Err(Error::InvalidArgument(format!("variance of z must be positive, got {z_var}")));
    }
    if let Some(&k0) = kernel.first() {
        if k0 > 0.0 {
            return Err(Error::NonRealizable(format!("K(0) = {k0:e} > 0 gives negative noise variance")));
        }
    }
    let n = kernel.len() + 1;
    let mut m = DMatrix::zeros(n, n);
    m[(0, 0)] = z_var;
    for j in 1..n {
        for k in 1..n {
            m[(j, k)] = -kernel[j.abs_diff(k)] * z_var;
        }
    }
    let mut labels = vec!["z".to_string()];
    labels.extend((0..kernel.len()).map(|k| format!("eta[{k}]")));
    CovarianceMatrix::repaired(m, labels)
}

/// Toeplitz covariance `C(|t_m - t_n|)` of a whole path.
pub fn path_covariance(acf: &ScalarSeries) -> Result<CovarianceMatrix> {
    let c = acf.values();
    let n = c.len();
    let m = DMatrix::from_fn(n, n, |i, j| c[i.abs_diff(j)]);
    CovarianceMatrix::repaired(m, (0..n).map(|k| format!("z[{k}]")).collect())
}

/// Mixes a master seed with a tag into an independent seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut x = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// RNG of realization `row` under `seed`.
pub fn realization_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Row-major block of Gaussian draws, one row per realization.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDraws {
    pub dim: usize,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl GaussianDraws {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// `rows` mean-zero draws from `cov`.
pub fn sample_gaussian(cov: &CovarianceMatrix, rows: usize, seed: u64) -> Result<GaussianDraws> {
    sample_gaussian_with(cov, rows, seed, Exec::default())
}

pub fn sample_gaussian_with(cov: &CovarianceMatrix, rows: usize, seed: u64, exec: Exec) -> Result<GaussianDraws> {
    if rows == 0 {
        return Err(Error::InvalidArgument("need at least one realization".into()));
    }
    let factor = cov.factor()?;
    let dim = cov.dim();
    let mut data = vec![0.0; rows * dim];
    exec.for_each_row(&mut data, dim, |i, row| {
        let mut rng = realization_rng(seed, i);
        let xi: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (r, out) in row.iter_mut().enumerate() {
            *out = (0..=r).map(|c| factor[(r, c)] * xi[c]).sum();
        }
    });
    Ok(GaussianDraws { dim, rows, data })
}

/// Trapezoidal integrator for `z' = int_0^t K(s) z(t - s) ds + eta(t)` in its
/// integrated form `z(t) = z0 + int_0^t eta + int_0^t A(t - s) z(s) ds`,
/// `A(tau) = int_0^tau K`.
#[derive(Debug, Clone)]
pub struct GleIntegrator {
    integrated_kernel: ScalarSeries,
}

impl GleIntegrator {
    pub fn new(kernel: &ScalarSeries) -> Self {
        Self { integrated_kernel: cumulative_trapezoid(kernel) }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.integrated_kernel.grid()
    }

    pub fn integrate(&self, z0: f64, eta: &ScalarSeries) -> Result<ScalarSeries> {
        self.grid().ensure_same(eta.grid())?;
        let mut forcing = cumulative_trapezoid(eta).into_values();
        for v in &mut forcing {
            *v += z0;
        }
        solve_volterra2_convolution(&self.integrated_kernel, &ScalarSeries::new(*self.grid(), forcing)?)
    }
}

/// One path of the scalar GLE with drift zero.
pub fn integrate_gle(kernel: &ScalarSeries, z0: f64, eta: &ScalarSeries) -> Result<ScalarSeries> {
    GleIntegrator::new(kernel).integrate(z0, eta)
}

/// Sampler selection for [`coarse_grained_ensemble`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gle,
    Direct,
    Spectral,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gle => "gle",
            Method::Direct => "direct",
            Method::Spectral => "spectral",
        }
    }

    /// Tag mixed into the master seed so methods draw independent streams.
    pub fn seed_tag(self) -> u64 {
        match self {
            Method::Gle => 1,
            Method::Direct => 2,
            Method::Spectral => 3,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gle" => Ok(Method::Gle),
            "direct" => Ok(Method::Direct),
            "spectral" => Ok(Method::Spectral),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Realizations on a common grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    grid: TimeGrid,
    rows: usize,
    data: Vec<f64>,
    pub seed: u64,
    pub method: String,
}

impl TrajectoryEnsemble {
    pub fn new(grid: TimeGrid, rows: usize, data: Vec<f64>, seed: u64, method: impl Into<String>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::InvalidArgument("an ensemble needs at least one row".into()));
        }
        if data.len() != rows * grid.len() {
            return Err(Error::DimensionMismatch { expected: rows * grid.len(), found: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "ensemble" });
        }
        Ok(Self { grid, rows, data, seed, method: method.into() })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.grid.len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Stationary ensemble with autocorrelation `acf`.
pub fn coarse_grained_ensemble(acf: &ScalarSeries, rows: usize, seed: u64, method: Method) -> Result<TrajectoryEnsemble> {
    coarse_grained_ensemble_with(acf, rows, seed, method, Exec::default())
}

pub fn coarse_grained_ensemble_with(
    acf: &ScalarSeries,
    rows: usize,
    seed: u64,
    method: Method,
    exec: Exec,
) -> Result<TrajectoryEnsemble> {
    if !(acf[0] > 0.0) {
        return Err(Error::NonRealizable(format!("C(0) = {} must be positive", acf[0])));
    }
    let grid = *acf.grid();
    match method {
        Method::Direct => {
            let cov = path_covariance(acf)?;
            let draws = sample_gaussian_with(&cov, rows, seed, exec)?;
            TrajectoryEnsemble::new(grid, rows, draws.data, seed, method.name())
        }
        Method::Gle => {
            let extraction = kernel_from_acf(&AcfInput::Sampled(acf.clone()))?;
            for w in &extraction.warnings {
                log::warn!("{w}");
            }
            let kernel = extraction.kernel;
            let cov = build_noise_covariance(&kernel, acf[0])?;
            let draws = sample_gaussian_with(&cov, rows, seed, exec)?;
            let integrator = GleIntegrator::new(&kernel);
            let width = grid.len();
            let paths: Vec<Result<Vec<f64>>> = exec.map(rows, |i| {
                let row = draws.row(i);
                let eta = ScalarSeries::new(grid, row[1..].to_vec())?;
                Ok(integrator.integrate(row[0], &eta)?.into_values())
            });
            let mut data = Vec::with_capacity(rows * width);
            for p in paths {
                data.extend(p?);
            }
            TrajectoryEnsemble::new(grid, rows, data, seed, method.name())
        }
        Method::Spectral => sample_stationary_spectral_with(acf, rows, seed, exec),
    }
}

/// Circulant-embedding sampler.
pub fn sample_stationary_spectral(acf: &ScalarSeries, rows: usize, seed: u64) -> Result<TrajectoryEnsemble> {
    sample_stationary_spectral_with(acf, rows, seed, Exec::default())
}

/// Eigenvalues of the even circulant extension `[C_0, ..., C_N, C_{N-1}, ..., C_1]`.
pub fn circulant_spectrum(acf: &ScalarSeries) -> Vec<f64> {
    let c = acf.values();
    let n = c.len() - 1;
    let m = 2 * n;
    let mut buf: Vec<Complex<f64>> =
        (0..m).map(|j| Complex::new(if j <= n { c[j] } else { c[m - j] }, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
    buf.iter().map(|v| v.re).collect()
}

pub fn sample_stationary_spectral_with(
    acf: &ScalarSeries,
    rows: usize,
    seed: u64,
    exec: Exec,
) -> Result<TrajectoryEnsemble> {
    if rows == 0 {
        return Err(Error::InvalidArgument("need at least one realization".into()));
    }
    let grid = *acf.grid();
    let spectrum = circulant_spectrum(acf);
    let m = spectrum.len();
    let total: f64 = spectrum.iter().map(|v| v.abs()).sum();
    let clipped: f64 = spectrum.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    let clipped_fraction = if total > 0.0 { clipped / total } else { 0.0 };
    if clipped_fraction > MAX_CLIPPED_FRACTION {
        return Err(Error::InvalidEmbedding { clipped_fraction });
    }
    if clipped > 0.0 {
        log::debug!("circulant embedding clipped {clipped:.3e} ({clipped_fraction:.3e} of the spectral mass)");
    }
    let amplitude: Vec<f64> = spectrum.iter().map(|&v| (v.max(0.0) / m as f64).sqrt()).collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let width = grid.len();
    let mut data = vec![0.0; rows * width];
    exec.for_each_row(&mut data, width, |i, row| {
        let mut rng = realization_rng(seed, i);
        let mut buf: Vec<Complex<f64>> = amplitude
            .iter()
            .map(|&a| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex::new(a * re, a * im)
            })
            .collect();
        fft.process(&mut buf);
        for (out, v) in row.iter_mut().zip(&buf) {
            *out = v.re;
        }
    });
    TrajectoryEnsemble::new(grid, rows, data, seed, Method::Spectral.name())
}

/// Ensemble estimate `C(t_k) = mean_m z_m(t_k) z_m(0)` with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalAcf {
    pub acf: ScalarSeries,
    pub standard_error: Vec<f64>,
    pub samples: usize,
}

pub fn empirical_acf(ens: &TrajectoryEnsemble) -> Result<EmpiricalAcf> {
    empirical_acf_with(ens, Exec::default())
}

pub fn empirical_acf_with(ens: &TrajectoryEnsemble, exec: Exec) -> Result<EmpiricalAcf> {
    let m = ens.rows();
    if m < MIN_ACF_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_ACF_SAMPLES, found: m });
    }
    let stats = exec.map(ens.grid().len(), |k| {
        let products: Vec<f64> = (0..m).map(|i| ens.row(i)[k] * ens.row(i)[0]).collect();
        let mean = pairwise_sum(&products) / m as f64;
        let dev: Vec<f64> = products.iter().map(|p| (p - mean).powi(2)).collect();
        let var = pairwise_sum(&dev) / (m - 1) as f64;
        (mean, (var / m as f64).sqrt())
    });
    Ok(EmpiricalAcf {
        acf: ScalarSeries::new(*ens.grid(), stats.iter().map(|s| s.0).collect())?,
        standard_error: stats.iter().map(|s| s.1).collect(),
        samples: m,
    })
}

/// Outcome of comparing an empirical ACF against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    /// Largest `|estimate - reference| - slack` in units of the standard error.
    pub max_score: f64,
    pub worst_lag: usize,
    pub passed: bool,
}

/// `|C_hat(t_k) - C(t_k)| <= n_se * SE_k + slack` at every lag.
pub fn acf_band_check(est: &EmpiricalAcf, reference: &ScalarSeries, n_se: f64, slack: f64) -> Result<BandCheck> {
    est.acf.grid().ensure_same(reference.grid())?;
    let mut worst = (0.0_f64, 0usize, true);
    for k in 0..reference.len() {
        let dev = (est.acf[k] - reference[k]).abs();
        let ok = dev <= n_se * est.standard_error[k] + slack;
        let score = if est.standard_error[k] > 0.0 {
            (dev - slack).max(0.0) / est.standard_error[k]
        } else if dev > slack {
            f64::INFINITY
        } else {
            0.0
        };
        if score > worst.0 || (!ok && worst.2) {
            worst = (score.max(worst.0), k, worst.2 && ok);
        }
        worst.2 &= ok;
    }
    Ok(BandCheck { max_score: worst.0, worst_lag: worst.1, passed: worst.2 })
}

/// Per-lag z-test between two independent ensembles, Bonferroni-corrected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleTest {
    pub max_z: f64,
    pub critical: f64,
    pub significance: f64,
    pub passed: bool,
}

pub fn acf_two_sample_test(a: &EmpiricalAcf, b: &EmpiricalAcf, significance: f64) -> Result<TwoSampleTest> {
    a.acf.grid().ensure_same(b.acf.grid())?;
    let lags = a.acf.len();
    let normal = Normal::standard();
    let critical = normal.inverse_cdf(1.0 - significance / (2.0 * lags as f64));
    let max_z = (0..lags)
        .map(|k| {
            let se = (a.standard_error[k].powi(2) + b.standard_error[k].powi(2)).sqrt();
            let d = (a.acf[k] - b.acf[k]).abs();
            if se > 0.0 {
                d / se
            } else if d > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(TwoSampleTest { max_z, critical, significance, passed: max_z <= critical })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(dt: f64, steps: usize) -> TimeGrid {
        TimeGrid::new(dt, steps).unwrap()
    }

    #[test]
    fn constant_kernel_gives_rank_one_noise() {
        let g = grid(0.1, 5);
        let k = ScalarSeries::constant(g, -1.0).unwrap();
        let cov = build_noise_covariance(&k, 1.0).unwrap();
        let m = cov.matrix();
        assert_eq!(m.nrows(), 7);
        assert_eq!(m[(0, 0)], 1.0);
        for j in 1..7 {
            assert_eq!(m[(0, j)], 0.0);
            for k in 1..7 {
                assert!((m[(j, k)] - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(cov.labels()[0], "z");
        assert_eq!(cov.labels()[1], "eta[0]");
        // Rank one noise factors without jitter.
        let f = cov.factor().unwrap();
        assert!((&f * f.transpose() - m).norm() < 1e-10);
    }

    #[test]
    fn zero_kernel_gives_deterministic_gle() {
        let g = grid(0.1, 3);
        let k = ScalarSeries::constant(g, 0.0).unwrap();
        let cov = build_noise_covariance(&k, 2.0).unwrap();
        assert_eq!(cov.matrix().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn empty_noise_block() {
        let cov = noise_covariance_from_values(&[], 3.0).unwrap();
        assert_eq!(cov.matrix().nrows(), 1);
        assert_eq!(cov.matrix()[(0, 0)], 3.0);
    }

    #[test]
    fn positive_k0_is_rejected() {
        let g = grid(0.1, 3);
        let k = ScalarSeries::constant(g, 0.5).unwrap();
        assert!(matches!(build_noise_covariance(&k, 1.0), Err(Error::NonRealizable(_))));
        assert!(build_noise_covariance(&ScalarSeries::constant(g, -1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn grossly_indefinite_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert!(CovarianceMatrix::repaired(m, vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn small_violation_is_clipped_and_logged() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 + 1e-4, 1.0 + 1e-4, 1.0]);
        let cov = CovarianceMatrix::repaired(m, vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(cov.repair_log().clipped_count, 1);
        assert!((cov.repair_log().clipped_mass - 1e-4).abs() < 1e-12);
        let min = SymmetricEigen::new(cov.matrix().clone()).eigenvalues.min();
        assert!(min >= -1e-12 * cov.repair_log().trace);
    }

    #[test]
    fn scalar_variance() {
        let cov = CovarianceMatrix::repaired(DMatrix::from_element(1, 1, 4.0), vec!["z".into()]).unwrap();
        let draws = sample_gaussian(&cov, 20_000, 5).unwrap();
        let var = draws.data.iter().map(|v| v * v).sum::<f64>() / 20_000.0;
        // SE of the variance estimate is 4 * sqrt(2 / M).
        assert!((var - 4.0).abs() < 3.0 * 4.0 * (2.0f64 / 20_000.0).sqrt(), "{var}");
    }

    #[test]
    fn draws_do_not_depend_on_execution_policy() {
        let g = grid(0.1, 20);
        let c = ScalarSeries::from_fn(g, |t| (-t).exp()).unwrap();
        let cov = path_covariance(&c).unwrap();
        let a = sample_gaussian_with(&cov, 64, 99, Exec::Sequential).unwrap();
        let b = sample_gaussian_with(&cov, 64, 99, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let c2 = sample_gaussian_with(&cov, 64, 100, Exec::Sequential).unwrap();
        assert_ne!(a, c2);
    }

    #[test]
    fn integrate_trivial_gle() {
        let g = grid(0.1, 10);
        let zero = ScalarSeries::constant(g, 0.0).unwrap();
        let z = integrate_gle(&zero, 1.5, &zero).unwrap();
        assert!(z.values().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn integrate_oscillator_gle() {
        let mut errs = vec![];
        for dt in [0.02, 0.01, 0.005] {
            let g = grid(dt, (4.0 / dt) as usize);
            let k = ScalarSeries::constant(g, -1.0).unwrap();
            let eta = ScalarSeries::constant(g, 0.7).unwrap();
            let z = integrate_gle(&k, 0.3, &eta).unwrap();
            let exact = ScalarSeries::from_fn(g, |t| 0.3 * t.cos() + 0.7 * t.sin()).unwrap();
            errs.push(z.max_abs_diff(&exact).unwrap());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..2.2).contains(&order), "{order}");
        }
    }

    #[test]
    fn flat_spectrum_gives_white_noise() {
        let g = grid(0.1, 16);
        let c = ScalarSeries::from_fn(g, |t| if t == 0.0 { 1.0 } else { 0.0 }).unwrap();
        let spec = circulant_spectrum(&c);
        assert!(spec.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let ens = sample_stationary_spectral(&c, 4000, 3).unwrap();
        let var: f64 = ens.data().iter().map(|v| v * v).sum::<f64>() / ens.data().len() as f64;
        assert!((var - 1.0).abs() < 0.03, "{var}");
        let est = empirical_acf(&ens).unwrap();
        let band = acf_band_check(&est, &c, 4.0, 0.0).unwrap();
        assert!(band.passed, "{band:?}");
    }

    #[test]
    fn invalid_embedding_is_rejected() {
        // Circulant eigenvalues of [1, 1, -1, 1] are [2, 2, -2, 2].
        let c = ScalarSeries::new(grid(0.1, 2), vec![1.0, 1.0, -1.0]).unwrap();
        let spec = circulant_spectrum(&c);
        for (got, want) in spec.iter().zip([2.0, 2.0, -2.0, 2.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        let err = sample_stationary_spectral(&c, 2, 1);
        assert!(matches!(err, Err(Error::InvalidEmbedding { .. })), "{err:?}");
    }

    #[test]
    fn acf_estimator_preconditions_and_constant_rows() {
        let g = grid(0.1, 4);
        let one = TrajectoryEnsemble::new(g, 1, vec![1.0; 5], 0, "gle").unwrap();
        assert!(matches!(empirical_acf(&one), Err(Error::TooFewSamples { .. })));

        let ens = TrajectoryEnsemble::new(g, 40, vec![3.0; 200], 0, "direct").unwrap();
        let est = empirical_acf(&ens).unwrap();
        assert!(est.acf.values().iter().all(|&v| v == 9.0));
        assert!(est.standard_error.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn acf_at_zero_is_second_moment_of_slot_zero() {
        let g = grid(2.0 * PI / 32.0, 32);
        let c = ScalarSeries::from_fn(g, f64::cos).unwrap();
        let ens = coarse_grained_ensemble(&c, 200, 8, Method::Direct).unwrap();
        let est = empirical_acf(&ens).unwrap();
        let m2 = pairwise_sum(&(0..200).map(|i| ens.row(i)[0].powi(2)).collect::<Vec<_>>()) / 200.0;
        assert_eq!(est.acf[0], m2);
    }

    #[test]
    fn single_realization_is_finite() {
        let g = grid(2.0 * PI / 64.0, 64);
        let c = ScalarSeries::from_fn(g, f64::cos).unwrap();
        for method in [Method::Gle, Method::Direct, Method::Spectral] {
            let ens = coarse_grained_ensemble(&c, 1, 4, method).unwrap();
            assert_eq!(ens.rows(), 1);
            assert!(ens.row(0).iter().all(|v| v.is_finite()));
            assert!(empirical_acf(&ens).is_err());
        }
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
