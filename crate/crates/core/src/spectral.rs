//! Fast/slow splitting of a skew generator by frequency cutoff.
//!
//! The slow subspace `F_w` is the span of the invariant rotation planes with
//! frequency at most `w` together with the kernel of `L`. It is invariant
//! under `L`, so the memory coupling `P L (1 - P)` vanishes for its projector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{expm, Generator, HilbertSpace};

/// Relative slack of the power test `|L^n x| <= w^n |x|`.
pub const SLOW_TOL: f64 = 1e-10;

/// Relative slack used when deciding whether a computed frequency ties with the cutoff.
const CUTOFF_SLACK: f64 = 1e-12;

/// Highest power checked when certifying basis vectors; see [`certifiable_power`].
pub const CERTIFY_POWER: usize = 8;

/// Orthogonality tolerance for [`orthogonal_equals_full_on_fast`].
pub const FAST_MEMBERSHIP_TOL: f64 = 1e-10;

/// Slow subspace of a generator and its orthogonal complement.
#[derive(Debug, Clone)]
pub struct SlowSubspace {
    pub omega: f64,
    pub basis: Vec<DVector<f64>>,
    pub complement_basis: Vec<DVector<f64>>,
    space: HilbertSpace,
}

impl SlowSubspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    /// Orthogonal projector `P_w` onto the slow subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        self.space.projector(&self.basis)
    }

    /// `1 - P_w`.
    pub fn complement_projector(&self) -> DMatrix<f64> {
        self.space.projector(&self.complement_basis)
    }
}

/// Outcome of the power test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowCertificate {
    pub slow: bool,
    /// First power `n` with `|L^n x| > w^n |x| (1 + 1e-10)`.
    pub first_failure: Option<usize>,
    /// Largest `|L^n x| / (w^n |x|)` over the checked powers.
    pub worst_ratio: f64,
}

/// Power test `|L^n x| <= w^n |x| (1 + 1e-10)` for `n = 1..=n_max`.
pub fn is_slow(x: &DVector<f64>, l: &Generator, omega: f64, n_max: usize) -> Result<SlowCertificate> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff must be positive, got {omega}")));
    }
    let space = l.space();
    space.check_dim(x)?;
    let x_norm = space.norm_unchecked(x);
    if x_norm == 0.0 {
        return Ok(SlowCertificate { slow: true, first_failure: None, worst_ratio: 0.0 });
    }
    let mut y = x.clone();
    let mut bound = x_norm;
    let mut worst = 0.0_f64;
    let mut first_failure = None;
    for n in 1..=n_max {
        y = l.matrix() * y;
        bound *= omega;
        let ratio = space.norm_unchecked(&y) / bound;
        worst = worst.max(ratio);
        if ratio > 1.0 + SLOW_TOL && first_failure.is_none() {
            first_failure = Some(n);
        }
    }
    Ok(SlowCertificate { slow: first_failure.is_none(), first_failure, worst_ratio: worst })
}

/// Largest power `n <= CERTIFY_POWER` at which rounding in a computed slow
/// vector, amplified by `(|L| / w)^n`, stays below [`SLOW_TOL`].
pub fn certifiable_power(l: &Generator, omega: f64) -> usize {
    let growth = l.norm() / omega;
    if growth <= 1.0 {
        return CERTIFY_POWER;
    }
    let noise = 16.0 * f64::EPSILON * l.dim() as f64;
    let n = ((SLOW_TOL / noise).ln() / growth.ln()).floor();
    (n.max(1.0) as usize).min(CERTIFY_POWER)
}

/// Slow subspace for cutoff `omega`; cutoff ties count as slow.
pub fn slow_subspace(l: &Generator, omega: f64) -> Result<SlowSubspace> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("cutoff must be positive, got {omega}")));
    }
    let spectrum = l.spectrum();
    let mut basis: Vec<DVector<f64>> = spectrum.kernel().to_vec();
    let mut complement_basis = Vec::new();
    for (&f, (u, v)) in spectrum.frequencies().iter().zip(spectrum.planes()) {
        let target = if f <= omega * (1.0 + CUTOFF_SLACK) { &mut basis } else { &mut complement_basis };
        target.push(u.clone());
        target.push(v.clone());
    }
    let sub = SlowSubspace { omega, basis, complement_basis, space: l.space().clone() };
    let power = certifiable_power(l, omega);
    for (i, b) in sub.basis.iter().enumerate() {
        let cert = is_slow(b, l, omega, power)?;
        if !cert.slow {
            return Err(Error::EigenFailure {
                reason: format!("slow basis vector {i} fails the power test at n = {:?}", cert.first_failure),
                residual: cert.worst_ratio - 1.0,
            });
        }
    }
    Ok(sub)
}

/// Operator norm of `P_w L`.
pub fn projected_generator_bound(l: &Generator, omega: f64) -> Result<f64> {
    let p = slow_subspace(l, omega)?.projector();
    Ok(l.space().operator_norm(&(p * l.matrix())))
}

/// Largest entry of `P^2 - P` and of the asymmetry of `P` in the orthonormal frame.
pub fn projection_defect(p: &DMatrix<f64>, space: &HilbertSpace) -> f64 {
    let frame = space.to_orthonormal_frame(p);
    let idem = (&frame * &frame - &frame).amax();
    let sym = (&frame - frame.transpose()).amax();
    idem.max(sym)
}

/// Operator norm of `P L (1 - P)` for an orthogonal projector `P`.
pub fn memory_coupling_norm(p: &DMatrix<f64>, l: &Generator) -> Result<f64> {
    let n = l.dim();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.nrows() });
    }
    let defect = projection_defect(p, l.space());
    if defect > 1e-12 * p.amax().max(1.0) {
        return Err(Error::NotProjection { deviation: defect });
    }
    let q = DMatrix::identity(n, n) - p;
    Ok(l.space().operator_norm(&(p * l.matrix() * q)))
}

/// `|exp(t (1 - P_w) L) x - U(t) x|` for `x` orthogonal to the slow subspace.
pub fn orthogonal_equals_full_on_fast(l: &Generator, omega: f64, x: &DVector<f64>, t: f64) -> Result<f64> {
    let space = l.space();
    space.check_dim(x)?;
    let sub = slow_subspace(l, omega)?;
    let x_norm = space.norm_unchecked(x);
    for y in &sub.basis {
        let overlap = space.inner_unchecked(x, y).abs();
        if overlap > FAST_MEMBERSHIP_TOL * x_norm.max(f64::MIN_POSITIVE) {
            return Err(Error::NotInFastSubspace { component: overlap });
        }
    }
    let ql = sub.complement_projector() * l.matrix();
    let orthogonal = expm(&(ql * t)) * x;
    let full = l.propagate(t, x)?;
    Ok(space.norm_unchecked(&(orthogonal - full)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::block_rotation;

    fn blocks(freqs: &[f64], dim: usize) -> Generator {
        Generator::new(block_rotation(freqs, dim), HilbertSpace::euclidean(dim).unwrap()).unwrap()
    }

    fn e(dim: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        v
    }

    #[test]
    fn whole_space_above_max_frequency() {
        let l = blocks(&[1.0, 10.0], 5);
        let sub = slow_subspace(&l, 10.0).unwrap();
        assert_eq!(sub.dim(), 5);
        assert!((sub.projector() - DMatrix::identity(5, 5)).amax() < 1e-12);
        assert!((projected_generator_bound(&l, 12.0).unwrap() - 10.0).abs() < 1e-10);
    }

    #[test]
    fn rotation_below_cutoff_is_empty() {
        let l = blocks(&[1.0], 2);
        let sub = slow_subspace(&l, 0.5).unwrap();
        assert_eq!(sub.dim(), 0);
        assert_eq!(projected_generator_bound(&l, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn two_scale_split() {
        let l = blocks(&[1.0, 10.0], 4);
        let sub = slow_subspace(&l, 5.0).unwrap();
        assert_eq!(sub.dim(), 2);
        let p = sub.projector();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]));
        assert!((p - expected).amax() < 1e-12);
        assert!((projected_generator_bound(&l, 5.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_test() {
        let l = blocks(&[1.0, 10.0], 4);
        assert!(is_slow(&DVector::zeros(4), &l, 5.0, 8).unwrap().slow);
        assert!(is_slow(&e(4, 0), &l, 5.0, 8).unwrap().slow);
        let fast = is_slow(&e(4, 2), &l, 5.0, 8).unwrap();
        assert!(!fast.slow);
        assert_eq!(fast.first_failure, Some(1));
        assert!(is_slow(&e(4, 0), &l, 5.0, 0).is_err());
        assert!(is_slow(&e(3, 0), &l, 5.0, 1).is_err());
    }

    #[test]
    fn certification_power_shrinks_with_scale_separation() {
        assert_eq!(certifiable_power(&blocks(&[1.0, 2.0], 4), 5.0), CERTIFY_POWER);
        assert_eq!(certifiable_power(&blocks(&[1.0, 2.0], 4), 1.5), CERTIFY_POWER);
        assert_eq!(certifiable_power(&blocks(&[0.01, 100.0], 4), 0.01), 1);
        assert!(slow_subspace(&blocks(&[0.01, 100.0], 4), 0.01).is_ok());
    }

    #[test]
    fn tie_is_slow() {
        let l = blocks(&[1.0, 2.0], 4);
        assert_eq!(slow_subspace(&l, 1.0).unwrap().dim(), 2);
    }

    #[test]
    fn coupling_of_identity_and_slow_projector_vanishes() {
        let l = blocks(&[1.0, 10.0], 5);
        assert_eq!(memory_coupling_norm(&DMatrix::identity(5, 5), &l).unwrap(), 0.0);
        let p = slow_subspace(&l, 5.0).unwrap().projector();
        assert!(memory_coupling_norm(&p, &l).unwrap() <= 1e-10 * l.norm());
    }

    #[test]
    fn non_projection_is_rejected() {
        let l = blocks(&[1.0], 2);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(memory_coupling_norm(&p, &l), Err(Error::NotProjection { .. })));
        let half = DMatrix::identity(2, 2) * 0.5;
        assert!(matches!(memory_coupling_norm(&half, &l), Err(Error::NotProjection { .. })));
    }

    #[test]
    fn fast_reduction() {
        let l = blocks(&[1.0, 10.0], 4);
        assert_eq!(orthogonal_equals_full_on_fast(&l, 5.0, &DVector::zeros(4), 1.0).unwrap(), 0.0);
        let x = DVector::from_vec(vec![0.0, 0.0, 0.6, -0.8]);
        for t in [0.1, 1.0, 10.0] {
            assert!(orthogonal_equals_full_on_fast(&l, 5.0, &x, t).unwrap() <= 1e-10);
        }
        assert!(matches!(
            orthogonal_equals_full_on_fast(&l, 5.0, &e(4, 0), 1.0),
            Err(Error::NotInFastSubspace { .. })
        ));
    }
}
