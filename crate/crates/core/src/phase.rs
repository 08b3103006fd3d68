//! Harmonic oscillator on phase space `(q, p)` with the standard bivariate
//! normal density.
//!
//! Expectations are computed by tensor-product Gauss-Hermite quadrature. An
//! optional mean shift in `q` handles integrands such as
//! `x_n(q) = exp(n q - n^2)`, whose square concentrates near `q = 2n`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::series::{pairwise_sum, ScalarSeries, TimeGrid};
use crate::sim::{realization_rng, TrajectoryEnsemble};
use crate::volterra::{kernel_from_acf, AcfInput};

/// Default number of Gauss-Hermite nodes per axis.
pub const DEFAULT_NODES: usize = 64;

/// Step of the central-difference fallback for missing partials.
pub const FD_STEP: f64 = 1e-6;

type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Real function on phase space, optionally with analytic partials.
#[derive(Clone)]
pub struct PhaseObservable {
    value: Field,
    dq: Option<Field>,
    dp: Option<Field>,
}

impl fmt::Debug for PhaseObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseObservable").field("has_partials", &self.has_partials()).finish()
    }
}

impl PhaseObservable {
    pub fn new(value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), dq: None, dp: None }
    }

    pub fn with_partials(
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dq: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dp: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), dq: Some(Arc::new(dq)), dp: Some(Arc::new(dp)) }
    }

    /// `f(q)`, with `df` as its derivative when given.
    pub fn of_q(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::with_partials(move |q, _| f(q), move |q, _| df(q), |_, _| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::with_partials(move |_, _| c, |_, _| 0.0, |_, _| 0.0)
    }

    pub fn q() -> Self {
        Self::monomial(1, 0)
    }

    pub fn p() -> Self {
        Self::monomial(0, 1)
    }

    /// Energy `(q^2 + p^2) / 2`.
    pub fn energy() -> Self {
        Self::with_partials(|q, p| 0.5 * (q * q + p * p), |q, _| q, |_, p| p)
    }

    /// `x_n(q) = exp(n q - n^2)`, of unit norm.
    pub fn x_n(n: u32) -> Self {
        let n = n as f64;
        Self::of_q(move |q| (n * q - n * n).exp(), move |q| n * (n * q - n * n).exp())
    }

    /// `q^a p^b`.
    pub fn monomial(a: u32, b: u32) -> Self {
        Self::polynomial(vec![((a, b), 1.0)])
    }

    /// `sum c q^a p^b` over `((a, b), c)` terms.
    pub fn polynomial(terms: Vec<((u32, u32), f64)>) -> Self {
        let terms = Arc::new(terms);
        let (t0, t1, t2) = (terms.clone(), terms.clone(), terms);
        Self::with_partials(
            move |q, p| t0.iter().map(|&((a, b), c)| c * q.powi(a as i32) * p.powi(b as i32)).sum(),
            move |q, p| {
                t1.iter()
                    .filter(|t| t.0 .0 > 0)
                    .map(|&((a, b), c)| c * a as f64 * q.powi(a as i32 - 1) * p.powi(b as i32))
                    .sum()
            },
            move |q, p| {
                t2.iter()
                    .filter(|t| t.0 .1 > 0)
                    .map(|&((a, b), c)| c * b as f64 * q.powi(a as i32) * p.powi(b as i32 - 1))
                    .sum()
            },
        )
    }

    pub fn eval(&self, q: f64, p: f64) -> f64 {
        (self.value)(q, p)
    }

    pub fn has_partials(&self) -> bool {
        self.dq.is_some() && self.dp.is_some()
    }

    pub fn dq(&self, q: f64, p: f64) -> Option<f64> {
        self.dq.as_ref().map(|f| f(q, p))
    }

    pub fn dp(&self, q: f64, p: f64) -> Option<f64> {
        self.dp.as_ref().map(|f| f(q, p))
    }

    /// Pointwise product; partials follow the product rule when both factors have them.
    pub fn product(&self, other: &PhaseObservable) -> PhaseObservable {
        let (a, b) = (self.clone(), other.clone());
        let value = move |q, p| a.eval(q, p) * b.eval(q, p);
        if self.has_partials() && other.has_partials() {
            let (a1, b1, a2, b2) = (self.clone(), other.clone(), self.clone(), other.clone());
            Self::with_partials(
                value,
                move |q, p| a1.dq(q, p).unwrap() * b1.eval(q, p) + a1.eval(q, p) * b1.dq(q, p).unwrap(),
                move |q, p| a2.dp(q, p).unwrap() * b2.eval(q, p) + a2.eval(q, p) * b2.dp(q, p).unwrap(),
            )
        } else {
            Self::new(value)
        }
    }

    /// Replaces the partials by central differences with step [`FD_STEP`].
    pub fn with_finite_difference_partials(&self) -> PhaseObservable {
        let (f, g, h) = (self.clone(), self.clone(), self.clone());
        Self::with_partials(
            move |q, p| f.eval(q, p),
            move |q, p| (g.eval(q + FD_STEP, p) - g.eval(q - FD_STEP, p)) / (2.0 * FD_STEP),
            move |q, p| (h.eval(q, p + FD_STEP) - h.eval(q, p - FD_STEP)) / (2.0 * FD_STEP),
        )
    }

    /// Largest relative mismatch between the analytic partials and central
    /// differences at `points`.
    pub fn partials_defect(&self, points: &[(f64, f64)]) -> Result<f64> {
        if !self.has_partials() {
            return Err(Error::MissingPartials);
        }
        let fd = self.with_finite_difference_partials();
        let mut worst = 0.0_f64;
        for &(q, p) in points {
            for (exact, approx) in [(self.dq(q, p), fd.dq(q, p)), (self.dp(q, p), fd.dp(q, p))] {
                let (exact, approx) = (exact.unwrap(), approx.unwrap());
                worst = worst.max((exact - approx).abs() / exact.abs().max(1.0));
            }
        }
        Ok(worst)
    }
}

/// Probabilists' Gauss-Hermite rule: nodes and weights with `sum w = 1`.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64).sqrt() } else { 0.0 });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().cloned().collect();
    nodes.sort_by(f64::total_cmp);
    let mut weights = Vec::with_capacity(n);
    for x in &mut nodes {
        // Newton refinement on the orthonormal polynomial p_n; p_n' = sqrt(n) p_{n-1}.
        for _ in 0..3 {
            let (pn, pn1, _) = orthonormal_hermite(n, *x);
            let step = pn / ((n as f64).sqrt() * pn1);
            if step.is_finite() {
                *x -= step;
            }
        }
        let (_, _, christoffel) = orthonormal_hermite(n, *x);
        weights.push(1.0 / christoffel);
    }
    // Enforce exact symmetry of the rule.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total = pairwise_sum(&weights);
    for w in &mut weights {
        *w /= total;
    }
    Ok((nodes, weights))
}

/// `(p_n(x), p_{n-1}(x), sum_{k<n} p_k(x)^2)` for the orthonormal Hermite polynomials.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut sum = 0.0;
    for k in 0..n {
        sum += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sum)
}

/// Tensor-product quadrature for the standard bivariate normal density.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes_q: Vec<f64>,
    pub nodes_p: Vec<f64>,
    pub weights_q: Vec<f64>,
    pub weights_p: Vec<f64>,
    /// Mean shift applied to the `q` nodes, compensated by a likelihood ratio.
    pub shift_q: f64,
}

impl QuadratureGrid {
    pub fn new(nodes: usize) -> Result<Self> {
        let (x, w) = gauss_hermite(nodes)?;
        Ok(Self { nodes_q: x.clone(), nodes_p: x, weights_q: w.clone(), weights_p: w, shift_q: 0.0 })
    }

    pub fn with_shift_q(mut self, shift: f64) -> Self {
        self.shift_q = shift;
        self
    }

    /// `(q_i, effective weight)` for the shifted `q` axis.
    fn q_axis(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let s = self.shift_q;
        self.nodes_q
            .iter()
            .zip(&self.weights_q)
            .map(move |(&u, &w)| (u + s, w * (-s * u - 0.5 * s * s).exp()))
    }
}

/// Gaussian expectation `E[x]`.
pub fn expectation(x: &PhaseObservable, grid: &QuadratureGrid) -> Result<f64> {
    expectation_with(x, grid, Exec::default())
}

pub fn expectation_with(x: &PhaseObservable, grid: &QuadratureGrid, exec: Exec) -> Result<f64> {
    let q_axis: Vec<(f64, f64)> = grid.q_axis().collect();
    let rows = exec.map(q_axis.len(), |i| {
        let (q, wq) = q_axis[i];
        let mut terms = Vec::with_capacity(grid.nodes_p.len());
        for (&p, &wp) in grid.nodes_p.iter().zip(&grid.weights_p) {
            let v = x.eval(q, p);
            let term = wq * wp * v;
            if !term.is_finite() {
                return Err(Error::QuadratureOverflow { q, p });
            }
            terms.push(term);
        }
        Ok(pairwise_sum(&terms))
    });
    let rows: Vec<f64> = rows.into_iter().collect::<Result<_>>()?;
    Ok(pairwise_sum(&rows))
}

/// `sqrt(E[x^2])`.
pub fn l2_norm(x: &PhaseObservable, grid: &QuadratureGrid) -> Result<f64> {
    Ok(expectation(&x.product(x), grid)?.sqrt())
}

/// Liouvillian `p d_q x - q d_p x` of the oscillator flow.
pub fn liouville_apply(x: &PhaseObservable) -> Result<PhaseObservable> {
    if !x.has_partials() {
        return Err(Error::MissingPartials);
    }
    let x = x.clone();
    Ok(PhaseObservable::new(move |q, p| p * x.dq(q, p).unwrap() - q * x.dp(q, p).unwrap()))
}

/// Conditional expectation `E[x | q]`, integrated over `p` on the grid's `p` nodes.
pub fn zwanzig_project(x: &PhaseObservable, grid: &QuadratureGrid) -> PhaseObservable {
    let nodes = Arc::new((grid.nodes_p.clone(), grid.weights_p.clone()));
    let average = move |f: &dyn Fn(f64) -> f64| {
        let terms: Vec<f64> = nodes.0.iter().zip(&nodes.1).map(|(&p, &w)| w * f(p)).collect();
        pairwise_sum(&terms)
    };
    let average = Arc::new(average);
    let (xv, av) = (x.clone(), average.clone());
    let value = move |q: f64, _p: f64| av(&|p| xv.eval(q, p));
    if x.dq.is_some() {
        let (xd, ad) = (x.clone(), average);
        PhaseObservable::with_partials(value, move |q, _| ad(&|p| xd.dq(q, p).unwrap()), |_, _| 0.0)
    } else {
        PhaseObservable::new(value)
    }
}

/// `|L P_Z x_n| / |x_n|`, both norms by quadrature shifted to `q = 2n`.
pub fn unboundedness_ratio(n: u32, grid: &QuadratureGrid) -> Result<f64> {
    let shifted = grid.clone().with_shift_q(2.0 * n as f64);
    let x = PhaseObservable::x_n(n);
    let lx = liouville_apply(&zwanzig_project(&x, grid))?;
    let num = l2_norm(&lx, &shifted)?;
    let den = l2_norm(&x, &shifted)?;
    Ok(num / den)
}

/// Exact oscillator flow `(q, p) -> (q cos t + p sin t, -q sin t + p cos t)`.
pub fn oscillator_flow(q: f64, p: f64, t: f64) -> (f64, f64) {
    let (s, c) = t.sin_cos();
    (q * c + p * s, -q * s + p * c)
}

/// `q(t)` along exact trajectories with initial conditions drawn from the
/// standard bivariate normal.
pub fn oscillator_trajectories(rows: usize, grid: TimeGrid, seed: u64) -> Result<TrajectoryEnsemble> {
    oscillator_trajectories_with(rows, grid, seed, Exec::default())
}

pub fn oscillator_trajectories_with(rows: usize, grid: TimeGrid, seed: u64, exec: Exec) -> Result<TrajectoryEnsemble> {
    if rows == 0 {
        return Err(Error::InvalidArgument("need at least one trajectory".into()));
    }
    let width = grid.len();
    let mut data = vec![0.0; rows * width];
    exec.for_each_row(&mut data, width, |i, row| {
        let mut rng = realization_rng(seed, i);
        let q0: f64 = StandardNormal.sample(&mut rng);
        let p0: f64 = StandardNormal.sample(&mut rng);
        for (k, out) in row.iter_mut().enumerate() {
            *out = oscillator_flow(q0, p0, grid.t(k)).0;
        }
    });
    TrajectoryEnsemble::new(grid, rows, data, seed, "oscillator")
}

/// Memory kernel of `z = q`, extracted from the sampled autocorrelation `cos t`.
pub fn oscillator_mori_kernel(grid: TimeGrid) -> Result<ScalarSeries> {
    let c = ScalarSeries::from_fn(grid, f64::cos)?;
    Ok(kernel_from_acf(&AcfInput::Sampled(c))?.kernel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> QuadratureGrid {
        QuadratureGrid::new(DEFAULT_NODES).unwrap()
    }

    #[test]
    fn rule_is_normalized_and_exact_on_moments() {
        let g = grid();
        assert!((pairwise_sum(&g.weights_q) - 1.0).abs() < 1e-12);
        assert!((expectation(&PhaseObservable::constant(1.0), &g).unwrap() - 1.0).abs() < 1e-12);
        let mut double_factorial = 1.0;
        for k in 1..=5u32 {
            double_factorial *= (2 * k - 1) as f64;
            let m = expectation(&PhaseObservable::monomial(2 * k, 0), &g).unwrap();
            assert!((m - double_factorial).abs() < 1e-10 * double_factorial, "k={k} {m}");
            let odd = expectation(&PhaseObservable::monomial(2 * k - 1, 0), &g).unwrap();
            assert!(odd.abs() < 1e-12);
        }
    }

    #[test]
    fn small_rules() {
        let (x, w) = gauss_hermite(1).unwrap();
        assert_eq!((x, w), (vec![0.0], vec![1.0]));
        let (x, w) = gauss_hermite(2).unwrap();
        assert!((x[1] - 1.0).abs() < 1e-15 && (x[0] + 1.0).abs() < 1e-15);
        assert!((w[0] - 0.5).abs() < 1e-15);
        assert!(gauss_hermite(0).is_err());
    }

    #[test]
    fn shifted_square_of_x_n_has_unit_mean() {
        for n in 0..=5 {
            let x = PhaseObservable::x_n(n);
            let g = grid().with_shift_q(2.0 * n as f64);
            assert!((expectation(&x.product(&x), &g).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn liouvillian_examples() {
        let g = grid();
        let lq = liouville_apply(&PhaseObservable::q()).unwrap();
        let lh = liouville_apply(&PhaseObservable::energy()).unwrap();
        let lx = liouville_apply(&PhaseObservable::x_n(2)).unwrap();
        for &(q, p) in &[(0.3, -1.2), (1.7, 0.4), (-2.0, 2.5)] {
            assert_eq!(lq.eval(q, p), p);
            assert_eq!(lh.eval(q, p), 0.0);
            let expected = 2.0 * p * PhaseObservable::x_n(2).eval(q, p);
            assert!((lx.eval(q, p) - expected).abs() < 1e-14 * expected.abs().max(1.0));
        }
        assert!(expectation(&lq, &g).unwrap().abs() < 1e-14);
        assert!(matches!(liouville_apply(&PhaseObservable::new(|q, _| q)), Err(Error::MissingPartials)));
    }

    #[test]
    fn finite_difference_fallback() {
        let x = PhaseObservable::new(|q, p| q * q * p);
        let lx = liouville_apply(&x.with_finite_difference_partials()).unwrap();
        // L(q^2 p) = 2 q p^2 - q^3.
        let (q, p) = (0.7, -0.4);
        assert!((lx.eval(q, p) - (2.0 * q * p * p - q * q * q)).abs() < 1e-8);
    }

    #[test]
    fn analytic_partials_match_differences() {
        let pts = [(0.1, 0.2), (-1.3, 0.8), (2.1, -0.5)];
        for x in [PhaseObservable::energy(), PhaseObservable::x_n(3), PhaseObservable::polynomial(vec![((2, 1), 0.5), ((0, 3), -1.0)])] {
            assert!(x.partials_defect(&pts).unwrap() < 1e-6);
        }
        let wrong = PhaseObservable::with_partials(|q, _| q * q, |_, _| 1.0, |_, _| 0.0);
        assert!(wrong.partials_defect(&pts).unwrap() > 1e-2);
    }

    #[test]
    fn zwanzig_examples() {
        let g = grid();
        let f = PhaseObservable::of_q(|q| q.sin() + q * q, |q| q.cos() + 2.0 * q);
        let pf = zwanzig_project(&f, &g);
        let pp = zwanzig_project(&PhaseObservable::p(), &g);
        let pqp = zwanzig_project(&PhaseObservable::monomial(1, 1), &g);
        let pp2 = zwanzig_project(&PhaseObservable::monomial(0, 2), &g);
        let ppf = zwanzig_project(&pf, &g);
        for &(q, p) in &[(0.0, 1.0), (1.5, -2.0), (-3.0, 0.3)] {
            assert!((pf.eval(q, p) - f.eval(q, 0.0)).abs() < 1e-12);
            assert!(pp.eval(q, p).abs() < 1e-12);
            assert!(pqp.eval(q, p).abs() < 1e-12);
            assert!((pp2.eval(q, p) - 1.0).abs() < 1e-12);
            assert_eq!(pf.eval(q, p), pf.eval(q, 0.0));
            assert!((ppf.eval(q, p) - pf.eval(q, p)).abs() < 1e-12);
            assert!((pf.dq(q, p).unwrap() - f.dq(q, 0.0).unwrap()).abs() < 1e-12);
            assert_eq!(pf.dp(q, p), Some(0.0));
        }
    }

    #[test]
    fn unboundedness_matches_n() {
        let g = grid();
        for n in [0, 1, 3, 8] {
            assert!((unboundedness_ratio(n, &g).unwrap() - n as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let x = PhaseObservable::new(|q, _| (1000.0 * q).exp());
        assert!(matches!(expectation(&x, &grid()), Err(Error::QuadratureOverflow { .. })));
    }

    #[test]
    fn exact_flow() {
        for t in [0.0, 0.5, 3.0, 10.0] {
            let (q, p) = oscillator_flow(1.0, 0.0, t);
            assert_eq!(q, t.cos());
            let (q, p) = oscillator_flow(q, p, 1.0);
            assert!((0.5 * (q * q + p * p) - 0.5).abs() < 1e-12);
        }
        let g = TimeGrid::new(0.1, 50).unwrap();
        let ens = oscillator_trajectories(8, g, 1).unwrap();
        assert_eq!(ens.rows(), 8);
        assert_eq!(ens, oscillator_trajectories_with(8, g, 1, Exec::Sequential).unwrap());
        assert!(oscillator_trajectories(0, g, 1).is_err());
    }

    #[test]
    fn oscillator_kernel_is_minus_one() {
        let dt = 0.01;
        let g = TimeGrid::new(dt, 500).unwrap();
        let k = oscillator_mori_kernel(g).unwrap();
        assert!((k[0] + 1.0).abs() < 5.0 * dt * dt);
        assert!(k.values().iter().all(|v| (v + 1.0).abs() <= 5.0 * dt * dt));
        let c = crate::volterra::acf_from_kernel(&k, 1.0).unwrap();
        let cos = ScalarSeries::from_fn(g, f64::cos).unwrap();
        assert!(c.max_abs_diff(&cos).unwrap() < 1e-3);
    }
}
