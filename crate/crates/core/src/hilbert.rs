//! Finite-dimensional real Hilbert spaces and skew-symmetric generators.
//!
//! A [`Generator`] is validated once at construction and carries its
//! rotation-plane decomposition, so every propagation afterwards is an exact
//! rotation of plane coordinates.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Skew-symmetry tolerance on normalized entries of `W L + (W L)^T`.
pub const SKEW_TOL: f64 = 1e-12;

/// Real inner-product space with a diagonal positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertSpace {
    weights: Vec<f64>,
}

impl HilbertSpace {
    /// Euclidean space of dimension `dim`.
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self { weights: vec![1.0; dim] })
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ZeroDimension);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveWeight { index, value });
            }
        }
        Ok(Self { weights })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_euclidean(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    pub fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.inner_unchecked(x, y))
    }

    pub fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.inner(x, x)?.sqrt())
    }

    pub(crate) fn inner_unchecked(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.weights.iter().zip(x.iter().zip(y.iter())).map(|(w, (a, b))| w * a * b).sum()
    }

    pub(crate) fn norm_unchecked(&self, x: &DVector<f64>) -> f64 {
        self.inner_unchecked(x, x).sqrt()
    }

    /// `W x`.
    pub(crate) fn lower(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), self.weights.iter().zip(x.iter()).map(|(w, v)| w * v))
    }

    /// `W^{1/2} M W^{-1/2}`: the matrix of `M` in an orthonormal coordinate frame.
    pub(crate) fn to_orthonormal_frame(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| m[(i, j)] * (self.weights[i] / self.weights[j]).sqrt())
    }

    pub(crate) fn frame_to_native(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| m[(i, j)] * (self.weights[j] / self.weights[i]).sqrt())
    }

    /// Adjoint of `M` with respect to the weighted inner product, `W^{-1} M^T W`.
    pub fn adjoint(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| m[(j, i)] * self.weights[j] / self.weights[i])
    }

    /// Operator norm of `M` induced by the weighted norm.
    pub fn operator_norm(&self, m: &DMatrix<f64>) -> f64 {
        let frame = self.to_orthonormal_frame(m);
        frame.singular_values().iter().cloned().fold(0.0, f64::max)
    }

    /// Weighted-orthogonal projection onto the span of W-orthonormal `basis`.
    pub fn projector(&self, basis: &[DVector<f64>]) -> DMatrix<f64> {
        let n = self.dim();
        let mut p = DMatrix::zeros(n, n);
        for b in basis {
            let wb = self.lower(b);
            p += b * wb.transpose();
        }
        p
    }
}

/// Skew-symmetric generator `L` on a [`HilbertSpace`].
#[derive(Debug, Clone)]
pub struct Generator {
    matrix: DMatrix<f64>,
    space: HilbertSpace,
    spectrum: SpectralDecomposition,
    seed: Option<u64>,
    frequencies: Option<Vec<f64>>,
}

impl Generator {
    /// Validates skew-symmetry and decomposes the generator.
    pub fn new(matrix: DMatrix<f64>, space: HilbertSpace) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: matrix.nrows() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "generator matrix" });
        }
        let deviation = skew_deviation(&matrix, &space);
        if deviation > SKEW_TOL {
            return Err(Error::NotSkew { deviation });
        }
        let spectrum = SpectralDecomposition::compute(&matrix, &space)?;
        Ok(Self { matrix, space, spectrum, seed: None, frequencies: None })
    }

    /// Builds a generator from a matrix that is skew up to rounding, removing
    /// the symmetric part of `W M` first.
    pub(crate) fn new_projected(matrix: &DMatrix<f64>, space: &HilbertSpace) -> Result<Self> {
        let weighted = DMatrix::from_fn(matrix.nrows(), matrix.ncols(), |i, j| {
            space.weights[i] * matrix[(i, j)]
        });
        let skew = (&weighted - weighted.transpose()) * 0.5;
        let m = DMatrix::from_fn(skew.nrows(), skew.ncols(), |i, j| skew[(i, j)] / space.weights[i]);
        Self::new(m, space.clone())
    }

    /// Generator with `L = W^{-1/2} S W^{1/2}` for a Euclidean skew matrix `S`.
    pub fn from_orthonormal_frame(frame: &DMatrix<f64>, space: HilbertSpace) -> Result<Self> {
        let m = space.frame_to_native(frame);
        Self::new_projected(&m, &space)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.space.check_dim(x)?;
        Ok(&self.matrix * x)
    }

    /// Operator norm of `L`, equal to the largest rotation frequency.
    pub fn norm(&self) -> f64 {
        self.spectrum.frequencies.last().copied().unwrap_or(0.0)
    }

    /// `exp(t L) x`.
    pub fn propagate(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.space.check_dim(x)?;
        if !t.is_finite() {
            return Err(Error::NonFinite { what: "time" });
        }
        Ok(self.spectrum.propagate(&self.space, t, x))
    }

    /// Dense matrix of `exp(t L)`.
    pub fn propagator(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            out.set_column(j, &self.spectrum.propagate(&self.space, t, &e));
        }
        out
    }

    pub fn to_file(&self) -> GeneratorFile {
        let n = self.dim();
        GeneratorFile {
            dim: n,
            weights: self.space.weights.clone(),
            matrix: (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.matrix[(i, j)]).collect(),
            seed: self.seed,
            frequencies: self.frequencies.clone(),
        }
    }

    pub fn from_file(file: &GeneratorFile) -> Result<Self> {
        if file.matrix.len() != file.dim * file.dim {
            return Err(Error::DimensionMismatch { expected: file.dim * file.dim, found: file.matrix.len() });
        }
        let space = if file.weights.is_empty() {
            HilbertSpace::euclidean(file.dim)?
        } else {
            if file.weights.len() != file.dim {
                return Err(Error::DimensionMismatch { expected: file.dim, found: file.weights.len() });
            }
            HilbertSpace::weighted(file.weights.clone())?
        };
        let matrix = DMatrix::from_row_slice(file.dim, file.dim, &file.matrix);
        let mut g = Self::new(matrix, space)?;
        g.seed = file.seed;
        g.frequencies = file.frequencies.clone();
        Ok(g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GeneratorFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }
}

/// On-disk generator: row-major matrix plus provenance of random draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorFile {
    pub dim: usize,
    #[serde(default)]
    pub weights: Vec<f64>,
    pub matrix: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
}

/// Recipe for a random skew generator.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    /// Rotation planes with the given frequencies, padded with a kernel up to
    /// `dim` (default `2 * frequencies.len()`), conjugated by a seeded random
    /// orthogonal matrix.
    Frequencies { frequencies: Vec<f64>, dim: Option<usize>, seed: u64 },
    /// `(A - A^T) / sqrt(2 dim)` for a seeded standard Gaussian `A`; the
    /// largest frequency stays O(1) as `dim` grows.
    Dense { dim: usize, seed: u64 },
}

pub fn make_skew_generator(spec: &GeneratorSpec) -> Result<Generator> {
    match spec {
        GeneratorSpec::Frequencies { frequencies, dim, seed } => {
            if let Some(bad) = frequencies.iter().find(|f| !f.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite frequency {bad}")));
            }
            let n = dim.unwrap_or(2 * frequencies.len());
            if n == 0 {
                return Err(Error::ZeroDimension);
            }
            if n < 2 * frequencies.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} frequencies need dimension at least {}, got {n}",
                    frequencies.len(),
                    2 * frequencies.len()
                )));
            }
            let blocks = block_rotation(frequencies, n);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let q = random_orthogonal(n, &mut rng);
            let m = &q * blocks * q.transpose();
            let m = (&m - m.transpose()) * 0.5;
            let mut g = Generator::new(m, HilbertSpace::euclidean(n)?)?;
            g.seed = Some(*seed);
            g.frequencies = Some(frequencies.clone());
            Ok(g)
        }
        GeneratorSpec::Dense { dim, seed } => {
            if *dim == 0 {
                return Err(Error::ZeroDimension);
            }
            let n = *dim;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
            let m: DMatrix<f64> = (&a - a.transpose()) / (2.0 * n as f64).sqrt();
            let mut g = Generator::new(m, HilbertSpace::euclidean(n)?)?;
            g.seed = Some(*seed);
            Ok(g)
        }
    }
}

/// Block-diagonal matrix with blocks `[[0, -f], [f, 0]]` followed by zeros.
pub fn block_rotation(frequencies: &[f64], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for (k, &f) in frequencies.iter().enumerate() {
        m[(2 * k + 1, 2 * k)] = f;
        m[(2 * k, 2 * k + 1)] = -f;
    }
    m
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut *rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Normalized max entry of `W M + (W M)^T`.
fn skew_deviation(m: &DMatrix<f64>, space: &HilbertSpace) -> f64 {
    let n = m.nrows();
    let wm = DMatrix::from_fn(n, n, |i, j| space.weights[i] * m[(i, j)]);
    let scale = wm.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in 0..=i {
            dev = dev.max((wm[(i, j)] + wm[(j, i)]).abs());
        }
    }
    dev / scale
}

/// Rotation-plane form of a skew generator: `L u = f v`, `L v = -f u` on each
/// plane `(u, v)` and `L k = 0` on the kernel block.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    frequencies: Vec<f64>,
    planes: Vec<(DVector<f64>, DVector<f64>)>,
    kernel: Vec<DVector<f64>>,
}

impl SpectralDecomposition {
    fn compute(matrix: &DMatrix<f64>, space: &HilbertSpace) -> Result<Self> {
        let n = matrix.nrows();
        let s = space.to_orthonormal_frame(matrix);
        let scale = s.norm();
        if scale == 0.0 {
            let kernel = (0..n)
                .map(|j| {
                    DVector::from_fn(n, |i, _| if i == j { 1.0 / space.weights[j].sqrt() } else { 0.0 })
                })
                .collect();
            return Ok(Self { frequencies: vec![], planes: vec![], kernel });
        }

        let schur = nalgebra::linalg::Schur::try_new(s.clone(), f64::EPSILON, 10_000).ok_or_else(|| {
            Error::EigenFailure { reason: "Schur iteration did not converge".into(), residual: f64::NAN }
        })?;
        let (q, _) = schur.unpack();
        let t = q.transpose() * &s * &q;

        // Blocks are read from the recomputed form, which is skew up to rounding.
        let split_tol = 64.0 * f64::EPSILON * scale;
        let mut frame_planes: Vec<(f64, usize, usize, bool)> = Vec::new();
        let mut frame_kernel = Vec::new();
        let mut block_mask = DMatrix::<bool>::from_element(n, n, false);
        let mut i = 0;
        while i < n {
            if i + 1 < n && t[(i + 1, i)].abs().max(t[(i, i + 1)].abs()) > split_tol {
                let freq = 0.5 * (t[(i + 1, i)] - t[(i, i + 1)]);
                frame_planes.push((freq.abs(), i, i + 1, freq < 0.0));
                for a in i..i + 2 {
                    for b in i..i + 2 {
                        block_mask[(a, b)] = true;
                    }
                }
                i += 2;
            } else {
                frame_kernel.push(i);
                block_mask[(i, i)] = true;
                i += 1;
            }
        }

        let mut off_block = 0.0;
        for a in 0..n {
            for b in 0..n {
                if !block_mask[(a, b)] {
                    off_block += t[(a, b)] * t[(a, b)];
                }
            }
        }
        for &(_, a, b, _) in &frame_planes {
            off_block += t[(a, a)].powi(2) + t[(b, b)].powi(2) + (t[(a, b)] + t[(b, a)]).powi(2) / 2.0;
        }
        for &k in &frame_kernel {
            off_block += t[(k, k)].powi(2);
        }
        let residual = off_block.sqrt();
        if residual > 1e-10 * scale {
            return Err(Error::EigenFailure { reason: "Schur form is not block diagonal".into(), residual });
        }

        frame_planes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let back = |col: usize, sign: f64| {
            DVector::from_fn(n, |r, _| sign * q[(r, col)] / space.weights[r].sqrt())
        };
        let frequencies = frame_planes.iter().map(|p| p.0).collect();
        let planes = frame_planes
            .iter()
            .map(|&(_, a, b, flip)| (back(a, 1.0), back(b, if flip { -1.0 } else { 1.0 })))
            .collect();
        let kernel = frame_kernel.iter().map(|&k| back(k, 1.0)).collect();
        Ok(Self { frequencies, planes, kernel })
    }

    /// Plane frequencies, ascending.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn planes(&self) -> &[(DVector<f64>, DVector<f64>)] {
        &self.planes
    }

    pub fn kernel(&self) -> &[DVector<f64>] {
        &self.kernel
    }

    pub fn zero_mode_multiplicity(&self) -> usize {
        self.kernel.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.planes.len() + self.kernel.len()
    }

    /// Basis vectors: each plane as `(u, v)` in frequency order, then the kernel.
    pub fn basis(&self) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        for (u, v) in &self.planes {
            out.push(u.clone());
            out.push(v.clone());
        }
        out.extend(self.kernel.iter().cloned());
        out
    }

    /// Block-rotation matrix in the [`basis`](Self::basis) ordering.
    pub fn block_form(&self) -> DMatrix<f64> {
        block_rotation(&self.frequencies, self.dim())
    }

    /// `B J B^T W`, which equals `L` when the decomposition is exact.
    pub fn reconstruct(&self, space: &HilbertSpace) -> DMatrix<f64> {
        let b = DMatrix::from_columns(&self.basis());
        let bw = DMatrix::from_fn(b.ncols(), b.nrows(), |i, j| b[(j, i)] * space.weights[j]);
        b * self.block_form() * bw
    }

    /// Max deviation of the weighted Gram matrix of the basis from identity.
    pub fn gram_deviation(&self, space: &HilbertSpace) -> f64 {
        let basis = self.basis();
        let mut dev = 0.0_f64;
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((space.inner_unchecked(a, b) - target).abs());
            }
        }
        dev
    }

    pub(crate) fn propagate(&self, space: &HilbertSpace, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let wx = space.lower(x);
        let mut out = DVector::zeros(x.len());
        for ((u, v), &f) in self.planes.iter().zip(&self.frequencies) {
            let cu = u.dot(&wx);
            let cv = v.dot(&wx);
            let (sin, cos) = (f * t).sin_cos();
            out.axpy(cos * cu - sin * cv, u, 1.0);
            out.axpy(sin * cu + cos * cv, v, 1.0);
        }
        for k in &self.kernel {
            out.axpy(k.dot(&wx), k, 1.0);
        }
        out
    }
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;

    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm1 > THETA_13 { (norm1 / THETA_13).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(squarings);

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];

    let mut r = (&v - &u).lu().solve(&(&v + &u)).unwrap_or_else(|| {
        // (V - U) is nonsingular for norms below THETA_13; unreachable in practice.
        DMatrix::from_element(n, n, f64::NAN)
    });
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rotation() -> Generator {
        Generator::new(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]), HilbertSpace::euclidean(2).unwrap())
            .unwrap()
    }

    #[test]
    fn inner_product_basics() {
        let h = HilbertSpace::euclidean(3).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(h.inner(&e1, &e2).unwrap(), 0.0);
        assert_eq!(h.norm(&e1).unwrap(), 1.0);
        assert!(h.inner(&e1, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn weights_must_be_positive() {
        assert!(HilbertSpace::weighted(vec![1.0, 0.0]).is_err());
        assert!(HilbertSpace::weighted(vec![1.0, -2.0]).is_err());
        assert!(HilbertSpace::euclidean(0).is_err());
    }

    #[test]
    fn rejects_symmetric_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(Generator::new(m, HilbertSpace::euclidean(2).unwrap()), Err(Error::NotSkew { .. })));
    }

    #[test]
    fn weighted_skewness_is_relative_to_weights() {
        let space = HilbertSpace::weighted(vec![1.0, 4.0]).unwrap();
        // Euclidean-skew but not W-skew.
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(Generator::new(m.clone(), space.clone()).is_err());
        let g = Generator::from_orthonormal_frame(&m, space).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.1]);
        let lx = g.apply(&x).unwrap();
        assert_abs_diff_eq!(g.space().inner(&lx, &x).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.spectrum().frequencies()[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn empty_spectrum_gives_zero_matrix() {
        let g = make_skew_generator(&GeneratorSpec::Frequencies { frequencies: vec![], dim: Some(1), seed: 1 })
            .unwrap();
        assert_eq!(g.matrix()[(0, 0)], 0.0);
        assert_eq!(g.spectrum().zero_mode_multiplicity(), 1);
    }

    #[test]
    fn single_plane_is_a_rotation() {
        let g = make_skew_generator(&GeneratorSpec::Frequencies { frequencies: vec![1.0], dim: None, seed: 9 })
            .unwrap();
        let m = g.matrix();
        assert_abs_diff_eq!(m[(0, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 1)].abs(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m[(0, 1)], -m[(1, 0)], epsilon = 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        for spec in [
            GeneratorSpec::Dense { dim: 7, seed: 3 },
            GeneratorSpec::Frequencies { frequencies: vec![0.5, 2.0], dim: Some(5), seed: 3 },
        ] {
            let a = make_skew_generator(&spec).unwrap();
            let b = make_skew_generator(&spec).unwrap();
            let bits = |g: &Generator| g.matrix().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn generation_errors() {
        assert!(make_skew_generator(&GeneratorSpec::Dense { dim: 0, seed: 0 }).is_err());
        assert!(make_skew_generator(&GeneratorSpec::Frequencies { frequencies: vec![f64::NAN], dim: None, seed: 0 })
            .is_err());
        assert!(make_skew_generator(&GeneratorSpec::Frequencies { frequencies: vec![], dim: None, seed: 0 }).is_err());
        assert!(make_skew_generator(&GeneratorSpec::Frequencies { frequencies: vec![1.0, 2.0], dim: Some(3), seed: 0 })
            .is_err());
    }

    #[test]
    fn propagate_identity_at_zero_and_rotation() {
        let g = rotation();
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(g.propagate(0.0, &e1).unwrap(), e1);
        for &t in &[0.3, 1.0, 4.0] {
            let x = g.propagate(t, &e1).unwrap();
            assert_abs_diff_eq!(x[0], f64::cos(t), epsilon = 1e-15);
            assert_abs_diff_eq!(x[1], f64::sin(t), epsilon = 1e-15);
        }
        assert!(g.propagate(1.0, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn spectra_of_simple_generators() {
        let zero = Generator::new(DMatrix::zeros(3, 3), HilbertSpace::euclidean(3).unwrap()).unwrap();
        assert!(zero.spectrum().frequencies().is_empty());
        assert_eq!(zero.spectrum().zero_mode_multiplicity(), 3);

        assert_abs_diff_eq!(rotation().spectrum().frequencies()[0], 1.0, epsilon = 1e-15);

        let blocks = block_rotation(&[10.0, 1.0], 4);
        let g = Generator::new(blocks, HilbertSpace::euclidean(4).unwrap()).unwrap();
        let f = g.spectrum().frequencies();
        assert_abs_diff_eq!(f[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(f[1], 10.0, epsilon = 1e-13);
    }

    #[test]
    fn repeated_frequencies_are_handled() {
        let g = make_skew_generator(&GeneratorSpec::Frequencies {
            frequencies: vec![1.0, 1.0, 1.0, 3.0],
            dim: Some(10),
            seed: 21,
        })
        .unwrap();
        let sp = g.spectrum();
        assert_eq!(sp.frequencies().len(), 4);
        assert_eq!(sp.zero_mode_multiplicity(), 2);
        assert!(sp.gram_deviation(g.space()) < 1e-12);
        let rel = (sp.reconstruct(g.space()) - g.matrix()).norm() / g.matrix().norm();
        assert!(rel < 1e-12, "{rel}");
    }

    #[test]
    fn expm_of_rotation_generator() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        let e = expm(&m);
        assert_abs_diff_eq!(e[(0, 0)], 2f64.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 0)], 2f64.sin(), epsilon = 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let g = make_skew_generator(&GeneratorSpec::Dense { dim: 4, seed: 11 }).unwrap();
        let back = Generator::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back.matrix(), g.matrix());
        assert_eq!(back.seed(), Some(11));
    }
}
