use mzw_core::hilbert::{block_rotation, make_skew_generator, Generator, GeneratorSpec, HilbertSpace};
use mzw_core::spectral::{
    certifiable_power, is_slow, memory_coupling_norm, orthogonal_equals_full_on_fast, projected_generator_bound, slow_subspace,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_split(seed: u64) -> (Generator, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = rng.random_range(1..=4);
    let frequencies: Vec<f64> = (0..planes).map(|_| rng.random_range(0.1..5.0)).collect();
    let dim = 2 * planes + rng.random_range(0..=2);
    let l = make_skew_generator(&GeneratorSpec::Frequencies { frequencies: frequencies.clone(), dim: Some(dim), seed })
        .unwrap();
    // keep the cutoff away from every frequency
    let omega = loop {
        let w: f64 = rng.random_range(0.05..6.0);
        if frequencies.iter().all(|f| (f - w).abs() > 0.05 * w) {
            break w;
        }
    };
    (l, omega)
}

fn combination(basis: &[DVector<f64>], coeffs: &[f64], dim: usize) -> DVector<f64> {
    basis.iter().zip(coeffs).fold(DVector::zeros(dim), |acc, (b, &c)| acc + b * c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn projected_generator_respects_cutoff(seed in any::<u64>()) {
        let (l, omega) = random_split(seed);
        prop_assert!(projected_generator_bound(&l, omega).unwrap() <= omega * (1.0 + 1e-10));
    }

    #[test]
    fn slow_projector_decouples(seed in any::<u64>()) {
        let (l, omega) = random_split(seed);
        let p = slow_subspace(&l, omega).unwrap().projector();
        prop_assert!(memory_coupling_norm(&p, &l).unwrap() <= 1e-10 * l.norm().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn orthogonal_dynamics_is_full_dynamics_on_fast_part(
        seed in any::<u64>(), coeffs in prop::collection::vec(-1.0f64..1.0, 10), t in 0.0f64..10.0,
    ) {
        let (l, omega) = random_split(seed);
        let sub = slow_subspace(&l, omega).unwrap();
        let x = combination(&sub.complement_basis, &coeffs, l.dim());
        prop_assert!(orthogonal_equals_full_on_fast(&l, omega, &x, t).unwrap() <= 1e-9);
    }

    #[test]
    fn power_test_separates_slow_and_fast(seed in any::<u64>(), coeffs in prop::collection::vec(-1.0f64..1.0, 10)) {
        let (l, omega) = random_split(seed);
        let sub = slow_subspace(&l, omega).unwrap();
        let slow = combination(&sub.basis, &coeffs, l.dim());
        prop_assert!(is_slow(&slow, &l, omega, certifiable_power(&l, omega)).unwrap().slow);
        let fast = combination(&sub.complement_basis, &coeffs, l.dim());
        if fast.norm() > 1e-2 {
            prop_assert!(!is_slow(&(&slow + &fast), &l, omega, 200).unwrap().slow);
        }
    }

    #[test]
    fn projector_grows_to_identity(seed in any::<u64>(), coeffs in prop::collection::vec(-1.0f64..1.0, 10)) {
        let (l, _) = random_split(seed);
        let n = l.dim();
        let x = DVector::from_iterator(n, coeffs.iter().cycle().take(n).copied());
        let top = l.spectrum().frequencies().iter().fold(0.0f64, |a, &b| a.max(b));
        let mut previous = 0.0;
        for k in 1..=60 {
            let omega = 1.2 * top.max(0.1) * k as f64 / 60.0;
            let px = slow_subspace(&l, omega).unwrap().projector() * &x;
            prop_assert!(px.norm() >= previous - 1e-12);
            previous = px.norm();
        }
        let p = slow_subspace(&l, 1.2 * top.max(0.1)).unwrap().projector();
        prop_assert!((p - DMatrix::identity(n, n)).amax() < 1e-10);
    }
}

fn brute_force_coupling(p: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    let n = l.nrows();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let q = if b == j { 1.0 } else { 0.0 } - p[(b, j)];
                    m[i][j] += p[(i, a)] * l[(a, b)] * q;
                }
            }
        }
    }
    // largest singular value via power iteration on M^T M
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut sigma = 0.0;
    for _ in 0..500 {
        let mv: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i][j] * v[j]).sum()).collect();
        let mtmv: Vec<f64> = (0..n).map(|j| (0..n).map(|i| m[i][j] * mv[i]).sum()).collect();
        let norm = mtmv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        sigma = norm.sqrt();
        v = mtmv.iter().map(|x| x / norm).collect();
    }
    sigma
}

#[test]
fn generic_rank_one_projection_couples() {
    let l = Generator::new(block_rotation(&[1.0, 2.0], 4), HilbertSpace::euclidean(4).unwrap()).unwrap();
    let z = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]) / 2f64.sqrt();
    let p = &z * z.transpose();
    let oracle = brute_force_coupling(&p, l.matrix());
    assert!((oracle - 2.5f64.sqrt()).abs() < 1e-12, "{oracle}");
    let value = memory_coupling_norm(&p, &l).unwrap();
    assert!((value - oracle).abs() < 1e-12);
    assert!(value > 0.1);
}

#[test]
fn widely_separated_scales_still_certify() {
    let (l, omega) = random_split(7752847549850214332);
    let sub = slow_subspace(&l, omega).unwrap();
    assert!(projected_generator_bound(&l, omega).unwrap() <= omega * (1.0 + 1e-10));
    assert!(memory_coupling_norm(&sub.projector(), &l).unwrap() <= 1e-10 * l.norm());
}
