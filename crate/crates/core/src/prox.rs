//! Weighted multi-prior ℓ1 penalty and its closed-form proximal operator.
//!
//! The penalty on a candidate `x` is
//!
//! ```text
//! g(x) = λ Σ_{j=0..J} β_j Σ_i γ_ji w_ji |x_i − z_ji|
//! ```
//!
//! where `z_0 = 0` always and `z_1..z_J` are previously recovered sparse
//! vectors. Per element the prox is a 1-D problem with `J+1` breakpoints:
//! between breakpoints the objective is a shifted quadratic, and at a
//! breakpoint the subdifferential may contain zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::weights::ClusterPartition;

/// The `J` nonzero prior vectors `z_1..z_J`; `z_0 = 0` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet {
    dim: usize,
    priors: Vec<Vec<f64>>,
}

impl PriorSet {
    pub fn new(dim: usize, priors: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = priors.iter().position(|z| z.len() != dim) {
            return Err(invalid!(
                "prior {} has length {}, expected {}",
                bad + 1,
                priors[bad].len(),
                dim
            ));
        }
        Ok(PriorSet { dim, priors })
    }

    /// `count` zero priors, used before enough frames have been recovered.
    pub fn zeros(dim: usize, count: usize) -> Self {
        PriorSet {
            dim,
            priors: vec![vec![0.0; dim]; count],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored priors `J`.
    pub fn count(&self) -> usize {
        self.priors.len()
    }

    /// `z_ji`, with `j = 0` the implicit zero prior.
    #[inline]
    pub fn value(&self, j: usize, i: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.priors[j - 1][i]
        }
    }

    /// Stored prior `z_j` for `j ≥ 1`.
    pub fn prior(&self, j: usize) -> &[f64] {
        &self.priors[j - 1]
    }

    pub fn priors(&self) -> &[Vec<f64>] {
        &self.priors
    }

    /// Sliding window: drops `z_1`, shifts the rest down and appends `x` as
    /// the new `z_J`.
    pub fn push_recent(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(invalid!(
                "new prior has length {}, expected {}",
                x.len(),
                self.dim
            ));
        }
        if self.priors.is_empty() {
            return Ok(());
        }
        self.priors.remove(0);
        self.priors.push(x.to_vec());
        Ok(())
    }
}

/// Per-prior element weights `W_j`, per-cluster weights `γ̄_jc`, per-prior
/// weights `β_j` and the partitions they refer to, for `j = 0..=J`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub w: Vec<Vec<f64>>,
    pub gamma_bar: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub partitions: Vec<ClusterPartition>,
}

impl WeightState {
    /// `w = 1`, `γ̄ = 1/C`, `β = 1/(J+1)` over contiguous, near-equal
    /// clusters.
    pub fn uniform(dim: usize, priors: usize, clusters: usize) -> Result<Self> {
        let partition = ClusterPartition::contiguous(dim, clusters)?;
        let count = priors + 1;
        Ok(WeightState {
            w: vec![vec![1.0; dim]; count],
            gamma_bar: vec![vec![1.0 / clusters as f64; clusters]; count],
            beta: vec![1.0 / count as f64; count],
            partitions: vec![partition; count],
        })
    }

    /// `J + 1`.
    pub fn prior_count(&self) -> usize {
        self.beta.len()
    }

    pub fn dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    /// `γ_ji`: the weight of the cluster that holds element `i` for prior `j`.
    #[inline]
    pub fn gamma(&self, j: usize, i: usize) -> f64 {
        self.gamma_bar[j][self.partitions[j].assignment[i]]
    }

    /// `β_j γ_ji w_ji`.
    #[inline]
    pub fn effective(&self, j: usize, i: usize) -> f64 {
        self.beta[j] * self.gamma(j, i) * self.w[j][i]
    }

    fn check_shape(&self, dim: usize, priors: usize) -> Result<()> {
        let count = priors + 1;
        if self.w.len() != count
            || self.gamma_bar.len() != count
            || self.beta.len() != count
            || self.partitions.len() != count
        {
            return Err(invalid!(
                "weight state holds {} prior slots, expected {}",
                self.beta.len(),
                count
            ));
        }
        for j in 0..count {
            if self.w[j].len() != dim || self.partitions[j].assignment.len() != dim {
                return Err(invalid!("weights for prior {} do not have length {}", j, dim));
            }
            if self.gamma_bar[j].len() != self.partitions[j].clusters() {
                return Err(invalid!("cluster weights for prior {} do not match its partition", j));
            }
        }
        Ok(())
    }

    /// Verifies the normalisations `Σ_{i∈Ω_jc} w_ji = n_jc` (within
    /// `w_tol`), `Σ_c γ̄_jc = 1` and `Σ_j β_j = 1` (within `sum_tol`), exact
    /// cover of every partition, and strict positivity.
    pub fn check_normalization(&self, w_tol: f64, sum_tol: f64) -> Result<()> {
        let beta_sum: f64 = self.beta.iter().sum();
        if (beta_sum - 1.0).abs() > sum_tol {
            return Err(Error::Internal(alloc::format!("Σβ = {beta_sum}")));
        }
        for j in 0..self.beta.len() {
            let part = &self.partitions[j];
            part.check_cover()?;
            let g_sum: f64 = self.gamma_bar[j].iter().sum();
            if (g_sum - 1.0).abs() > sum_tol {
                return Err(Error::Internal(alloc::format!("Σγ̄ for prior {j} = {g_sum}")));
            }
            let mut sums = vec![0.0; part.clusters()];
            for (i, c) in part.assignment.iter().enumerate() {
                sums[*c] += self.w[j][i];
            }
            for (c, s) in sums.iter().enumerate() {
                let expected = part.sizes[c] as f64;
                if (s - expected).abs() > w_tol {
                    return Err(Error::Internal(alloc::format!(
                        "Σw over cluster {c} of prior {j} is {s}, expected {expected}"
                    )));
                }
            }
            let positive = self.beta[j] > 0.0
                && self.gamma_bar[j].iter().all(|g| *g > 0.0)
                && self.w[j].iter().all(|w| *w > 0.0);
            if !positive {
                return Err(Error::Internal(alloc::format!(
                    "non-positive weight for prior {j}"
                )));
            }
        }
        Ok(())
    }
}

/// Minimiser of `½(v − u)² + Σ_j a_j |v − z_j|` for a single element.
///
/// `points` holds `(z_j, a_j)` pairs with `a_j ≥ 0`. Breakpoints are sorted
/// and ties merged; then each open interval between consecutive breakpoints
/// and each breakpoint itself is tested. The tests partition the real line,
/// so exactly one fires.
pub fn prox_scalar(u: f64, points: &mut Vec<(f64, f64)>) -> Result<f64> {
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    points.dedup_by(|next, kept| {
        if next.0 == kept.0 {
            kept.1 += next.1;
            true
        } else {
            false
        }
    });
    let total: f64 = points.iter().map(|p| p.1).sum();

    // shift[l] = Σ_{j≤l} a_j − Σ_{j>l} a_j for l = −1..=J (stored at l+1)
    let mut result = None;
    let mut fired = 0usize;
    let mut shift = -total;
    // interval l = −1: v < z_0
    if let Some(first) = points.first() {
        if u < first.0 + shift {
            result = Some(u - shift);
            fired += 1;
        }
    } else {
        return Ok(u);
    }
    for (l, (z, a)) in points.iter().enumerate() {
        let lower = z + shift;
        let next_shift = shift + 2.0 * a;
        let upper = z + next_shift;
        // breakpoint l
        if lower <= u && u <= upper {
            result = Some(*z);
            fired += 1;
        }
        // open interval (z_l, z_{l+1})
        let open_hi = points.get(l + 1).map_or(f64::INFINITY, |p| p.0 + next_shift);
        if upper < u && u < open_hi {
            result = Some(u - next_shift);
            fired += 1;
        }
        shift = next_shift;
    }
    match (fired, result) {
        (1, Some(v)) => Ok(v),
        _ => Err(Error::Internal(alloc::format!(
            "{fired} prox conditions fired for u = {u}"
        ))),
    }
}

/// Elementwise proximal operator of `tau · Σ_j β_j ‖γ_j W_j (· − z_j)‖₁`.
///
/// `tau` is the folded multiplier (λ times the step scaling). With
/// `tau = 0` the input is returned unchanged.
pub fn prox_weighted_multi_l1(
    u: &[f64],
    priors: &PriorSet,
    weights: &WeightState,
    tau: f64,
) -> Result<Vec<f64>> {
    let n = u.len();
    if priors.dim() != n {
        return Err(invalid!(
            "input has length {} but priors have length {}",
            n,
            priors.dim()
        ));
    }
    weights.check_shape(n, priors.count())?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid!("prox multiplier must be finite and nonnegative, got {}", tau));
    }
    if tau == 0.0 {
        return Ok(u.to_vec());
    }
    let count = priors.count() + 1;
    let mut points = Vec::with_capacity(count);
    let mut out = Vec::with_capacity(n);
    for (i, ui) in u.iter().enumerate() {
        points.clear();
        for j in 0..count {
            points.push((priors.value(j, i), tau * weights.effective(j, i)));
        }
        out.push(prox_scalar(*ui, &mut points)?);
    }
    Ok(out)
}

/// `λ Σ_j β_j Σ_i γ_ji w_ji |x_i − z_ji|`.
pub fn eval_g(x: &[f64], priors: &PriorSet, weights: &WeightState, lambda: f64) -> Result<f64> {
    if priors.dim() != x.len() {
        return Err(invalid!(
            "input has length {} but priors have length {}",
            x.len(),
            priors.dim()
        ));
    }
    weights.check_shape(x.len(), priors.count())?;
    let mut total = 0.0;
    for j in 0..weights.prior_count() {
        let mut inner = 0.0;
        for (i, xi) in x.iter().enumerate() {
            inner += weights.gamma(j, i) * weights.w[j][i] * (xi - priors.value(j, i)).abs();
        }
        total += weights.beta[j] * inner;
    }
    Ok(lambda * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_objective(v: f64, u: f64, points: &[(f64, f64)]) -> f64 {
        0.5 * (v - u) * (v - u) + points.iter().map(|(z, a)| a * (v - z).abs()).sum::<f64>()
    }

    /// Grid search over a window that must contain the minimiser.
    fn grid_argmin(u: f64, points: &[(f64, f64)], step: f64) -> f64 {
        let total: f64 = points.iter().map(|p| p.1).sum();
        let lo = points.iter().map(|p| p.0).fold(u, f64::min) - total - 1.0;
        let hi = points.iter().map(|p| p.0).fold(u, f64::max) + total + 1.0;
        let steps = ((hi - lo) / step).ceil() as usize;
        let mut best = (f64::INFINITY, lo);
        for s in 0..=steps {
            let v = lo + s as f64 * step;
            let f = scalar_objective(v, u, points);
            if f < best.0 {
                best = (f, v);
            }
        }
        // the breakpoints themselves are candidate minimisers
        for (z, _) in points {
            let f = scalar_objective(*z, u, points);
            if f < best.0 {
                best = (f, *z);
            }
        }
        best.1
    }

    fn single(u: f64, points: &[(f64, f64)]) -> f64 {
        prox_scalar(u, &mut points.to_vec()).unwrap()
    }

    #[test]
    fn zero_prior_reduces_to_soft_threshold() {
        assert_eq!(single(2.0, &[(0.0, 0.5)]), 1.5);
        assert_eq!(single(-2.0, &[(0.0, 0.5)]), -1.5);
        assert_eq!(single(0.2, &[(0.0, 0.5)]), 0.0);
    }

    #[test]
    fn two_prior_examples_match_grid_search() {
        let pts = [(0.0, 0.4 * 0.5), (1.0, 0.4 * 0.5)];
        for (u, expected) in [(2.0, 1.6), (0.5, 0.5), (1.1, 1.0)] {
            let got = single(u, &pts);
            let oracle = grid_argmin(u, &pts, 1e-5);
            assert!((got - expected).abs() < 1e-12, "u={u}: {got}");
            assert!((oracle - expected).abs() < 1e-4, "u={u}: oracle {oracle}");
        }
    }

    #[test]
    fn full_operator_examples() {
        let priors = PriorSet::new(1, vec![vec![1.0]]).unwrap();
        let weights = WeightState::uniform(1, 1, 1).unwrap();
        let out = prox_weighted_multi_l1(&[2.0], &priors, &weights, 0.4).unwrap();
        assert!((out[0] - 1.6).abs() < 1e-12);

        let none = PriorSet::zeros(1, 0);
        let w0 = WeightState::uniform(1, 0, 1).unwrap();
        assert_eq!(prox_weighted_multi_l1(&[2.0], &none, &w0, 0.5).unwrap(), vec![1.5]);
        assert_eq!(prox_weighted_multi_l1(&[2.0], &none, &w0, 0.0).unwrap(), vec![2.0]);
    }

    #[test]
    fn ties_merge_and_length_errors() {
        // z_1 = z_2 = 0 behaves like a single breakpoint with summed weight
        assert_eq!(single(2.0, &[(0.0, 0.25), (0.0, 0.25)]), 1.5);
        let priors = PriorSet::zeros(3, 2);
        let weights = WeightState::uniform(3, 2, 1).unwrap();
        assert!(matches!(
            prox_weighted_multi_l1(&[1.0, 2.0], &priors, &weights, 0.1),
            Err(Error::InvalidInput(_))
        ));
        assert!(PriorSet::new(3, vec![vec![0.0; 2]]).is_err());
    }

    #[test]
    fn l1_l1_special_case() {
        // ℓ1-ℓ1 with side information z: λ(|v| + |v − z|), here λ/L = 0.3
        let z = -0.7;
        let priors = PriorSet::new(1, vec![vec![z]]).unwrap();
        let mut weights = WeightState::uniform(1, 1, 1).unwrap();
        weights.beta = vec![0.5, 0.5];
        for u in [-2.0, -0.9, -0.5, -0.1, 0.2, 1.3] {
            let got = prox_weighted_multi_l1(&[u], &priors, &weights, 0.6).unwrap()[0];
            let oracle = grid_argmin(u, &[(0.0, 0.3), (z, 0.3)], 1e-5);
            assert!((got - oracle).abs() < 1e-4, "u={u}: {got} vs {oracle}");
        }
    }

    #[test]
    fn eval_g_examples() {
        let none = PriorSet::zeros(2, 0);
        let w0 = WeightState::uniform(2, 0, 1).unwrap();
        assert_eq!(eval_g(&[1.0, -2.0], &none, &w0, 1.0).unwrap(), 3.0);

        let priors = PriorSet::zeros(2, 2);
        let w = WeightState::uniform(2, 2, 2).unwrap();
        assert_eq!(eval_g(&[0.0, 0.0], &priors, &w, 3.0).unwrap(), 0.0);
        assert!(eval_g(&[0.0], &priors, &w, 1.0).is_err());
    }

    #[test]
    fn sliding_window() {
        let mut p = PriorSet::new(1, vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        p.push_recent(&[5.0]).unwrap();
        assert_eq!(p.priors(), &[vec![2.0], vec![3.0], vec![5.0]]);
        assert!(p.push_recent(&[1.0, 2.0]).is_err());
    }

    fn scalar_case() -> impl Strategy<Value = (f64, Vec<(f64, f64)>)> {
        (0usize..=4).prop_flat_map(|j| {
            (
                -3.0f64..3.0,
                proptest::collection::vec((-2.0f64..2.0, 0.0f64..1.0), j),
            )
                .prop_map(|(u, mut rest)| {
                    rest.insert(0, (0.0, 0.3));
                    (u, rest)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn closed_form_matches_grid((u, pts) in scalar_case()) {
            let got = single(u, &pts);
            let oracle = grid_argmin(u, &pts, 1e-4);
            prop_assert!((got - oracle).abs() <= 1e-3, "{} vs {}", got, oracle);
        }

        #[test]
        fn monotone_and_nonexpansive((u, pts) in scalar_case(), du in 0.0f64..2.0) {
            let a = single(u, &pts);
            let b = single(u + du, &pts);
            prop_assert!(b >= a - 1e-12);
            prop_assert!((b - a).abs() <= du + 1e-12);
        }
    }
}
