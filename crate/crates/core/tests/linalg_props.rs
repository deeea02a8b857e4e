use coda_core::linalg::{dot, norm2, svt_column};
use coda_core::{full_svd, inc_svd, soft_threshold, svt, DenseMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    proptest::collection::vec(-5.0f64..5.0, rows * cols)
        .prop_map(move |data| DenseMatrix::from_row_major(rows, cols, data).unwrap())
}

fn sized_case() -> impl Strategy<Value = (DenseMatrix, Vec<f64>)> {
    (2usize..12, 1usize..6).prop_flat_map(|(n, d)| {
        let d = d.min(n);
        (matrix(n, d), proptest::collection::vec(-5.0f64..5.0, n))
    })
}

fn max_orthonormality_error(u: &DenseMatrix) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..u.cols() {
        for b in 0..u.cols() {
            let g = dot(&u.column(a), &u.column(b));
            let want = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g - want).abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn inc_svd_reconstructs_and_stays_orthonormal((b, c) in sized_case()) {
        let f = inc_svd(&full_svd(&b).unwrap(), &c).unwrap();
        let target = b.with_column(&c).unwrap();
        let err = f.reconstruct().sub(&target).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-8 * target.frobenius_norm().max(1.0), "err {}", err);
        prop_assert!(max_orthonormality_error(&f.u) <= 1e-8);
        prop_assert!(f.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(f.singular_values.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn svt_never_increases_nuclear_norm(a in matrix(5, 4), tau in 0.0f64..10.0) {
        let f = full_svd(&a).unwrap();
        let out = svt(&f, tau).unwrap();
        let after = full_svd(&out).unwrap().nuclear_norm();
        prop_assert!(after <= f.nuclear_norm() + 1e-9);
    }

    #[test]
    fn last_column_of_svt_matches_full_result(a in matrix(6, 3), tau in 0.0f64..4.0) {
        let f = full_svd(&a).unwrap();
        let full = svt(&f, tau).unwrap();
        let col = svt_column(&f, tau, 2);
        for (x, y) in col.iter().zip(full.column(2)) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn svd_reconstruction(a in (1usize..9, 1usize..9).prop_flat_map(|(r, c)| matrix(r, c))) {
        let f = full_svd(&a).unwrap();
        let err = f.reconstruct().sub(&a).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-10 * a.frobenius_norm().max(1.0));
        prop_assert!(max_orthonormality_error(&f.u) <= 1e-10);
    }
}

#[test]
fn soft_threshold_minimises_scalar_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let u: f64 = rng.random_range(-3.0..3.0);
        let tau: f64 = rng.random_range(0.0..2.0);
        let got = soft_threshold(&[u], &[tau]).unwrap()[0];
        let f = |v: f64| tau * v.abs() + 0.5 * (v - u) * (v - u);
        let (mut best, mut best_v) = (f64::INFINITY, 0.0);
        let mut v = -6.0;
        while v <= 6.0 {
            if f(v) < best {
                best = f(v);
                best_v = v;
            }
            v += 1e-4;
        }
        assert!((got - best_v).abs() <= 1e-3, "u {u} tau {tau}: {got} vs {best_v}");
    }
}

#[test]
fn inc_svd_examples() {
    let id = full_svd(&DenseMatrix::identity(2)).unwrap();
    let f = inc_svd(&id, &[1.0, 0.0]).unwrap();
    let mut s = f.singular_values.clone();
    s.resize(3, 0.0);
    assert!((s[0] - 2f64.sqrt()).abs() < 1e-12);
    assert!((s[1] - 1.0).abs() < 1e-12);
    assert!(s[2].abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = DenseMatrix::from_fn(20, 5, |_, _| rng.random_range(-1.0..1.0));
    let c: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
    let got = inc_svd(&full_svd(&b).unwrap(), &c).unwrap().singular_values;
    let want = full_svd(&b.with_column(&c).unwrap()).unwrap().singular_values;
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-8 * w.max(1e-300));
    }
    assert!(inc_svd(&full_svd(&b).unwrap(), &c[..19]).is_err());
}

#[test]
fn svt_examples() {
    let f = full_svd(&DenseMatrix::diag(&[3.0, 1.0, 0.2])).unwrap();
    let out = svt(&f, 0.5).unwrap();
    let s = full_svd(&out).unwrap().singular_values;
    assert!((s[0] - 2.5).abs() < 1e-12 && (s[1] - 0.5).abs() < 1e-12 && s[2].abs() < 1e-12);
    assert!(svt(&f, -1.0).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = DenseMatrix::from_fn(8, 4, |_, _| rng.random_range(-1.0..1.0));
    let f = full_svd(&a).unwrap();
    assert!(svt(&f, 0.0).unwrap().sub(&a).unwrap().frobenius_norm() < 1e-12);
    assert!(svt(&f, f.singular_values[0]).unwrap().frobenius_norm() == 0.0);
    assert!(norm2(&a.column(0)) > 0.0);
}
