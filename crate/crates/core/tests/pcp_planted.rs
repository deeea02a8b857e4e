use coda_core::{full_svd, pcp_decompose, DenseMatrix, PcpConfig};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn planted(seed: u64) -> (DenseMatrix, DenseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, r) = (100, 60, 3);
    let u = DenseMatrix::from_fn(n, r, |_, _| rng.sample(StandardNormal));
    let v = DenseMatrix::from_fn(r, d, |_, _| rng.sample(StandardNormal));
    let l = u.matmul(&v).unwrap();
    let mut x = DenseMatrix::zeros(n, d);
    for k in index::sample(&mut rng, n * d, n * d / 50) {
        x.set(k / d, k % d, if rng.random::<bool>() { 5.0 } else { -5.0 });
    }
    (l, x)
}

#[test]
fn planted_low_rank_is_recovered() {
    let mut hits = 0;
    for seed in 0..10 {
        let (l, x) = planted(seed);
        let res = pcp_decompose(&l.add(&x).unwrap(), &PcpConfig::default()).unwrap();
        let err = res.low_rank.sub(&l).unwrap().frobenius_norm() / l.frobenius_norm();
        if err <= 1e-3 {
            hits += 1;
        }
        // residual is monotone after the burn-in
        for w in res.residual_trace[5..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "residual rose: {:?}", w);
        }
        let rank = full_svd(&res.low_rank)
            .unwrap()
            .singular_values
            .iter()
            .filter(|s| **s > 1e-6 * l.frobenius_norm())
            .count();
        assert!(rank <= 60);
    }
    assert!(hits >= 9, "{hits}/10 planted trials recovered");
}
