//! Cluster partitions of residual magnitudes and the weight updates that
//! depend on them.
//!
//! For each prior `j` the residual magnitudes `|x_i − z_ji|` are split into
//! `C` clusters with 1-D k-means. Inside a cluster the element weights are
//! inversely proportional to `|x_i − z_ji| + ε` and sum to the cluster size;
//! the cluster weights `γ̄_jc` and prior weights `β_j` follow the same
//! inverse-residual rule one level up and sum to one.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::prox::{PriorSet, WeightState};

const MAX_LLOYD_ITERATIONS: usize = 100;

/// Assignment of `n` elements to `C` clusters. Cluster ids are `0..C`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl ClusterPartition {
    pub fn from_assignment(assignment: Vec<usize>, clusters: usize) -> Result<Self> {
        let mut sizes = vec![0; clusters];
        for (i, c) in assignment.iter().enumerate() {
            if *c >= clusters {
                return Err(invalid!("element {} assigned to cluster {} of {}", i, c, clusters));
            }
            sizes[*c] += 1;
        }
        Ok(ClusterPartition { assignment, sizes })
    }

    /// `n` elements split into `C` contiguous blocks whose sizes differ by at
    /// most one.
    pub fn contiguous(n: usize, clusters: usize) -> Result<Self> {
        if clusters == 0 || clusters > n {
            return Err(invalid!("cannot split {} elements into {} clusters", n, clusters));
        }
        let assignment = (0..n).map(|i| i * clusters / n).collect();
        Self::from_assignment(assignment, clusters)
    }

    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Indices in cluster `c`, ascending.
    pub fn members(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, a)| **a == c)
            .map(|(i, _)| i)
    }

    /// Every element in exactly one in-range cluster, sizes consistent, no
    /// empty cluster.
    pub fn check_cover(&self) -> Result<()> {
        let mut counted = vec![0usize; self.clusters()];
        for c in &self.assignment {
            if *c >= self.clusters() {
                return Err(Error::Internal(alloc::format!("cluster id {c} out of range")));
            }
            counted[*c] += 1;
        }
        if counted != self.sizes {
            return Err(Error::Internal(alloc::string::String::from(
                "cluster sizes disagree with the assignment",
            )));
        }
        if self.sizes.iter().any(|s| *s == 0) {
            return Err(Error::Internal(alloc::string::String::from("empty cluster")));
        }
        Ok(())
    }
}

/// A fitted 1-D k-means model.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub partition: ClusterPartition,
    pub centroids: Vec<f64>,
    pub iterations: usize,
    /// Within-cluster sum of squared deviations after each centroid update.
    pub objective_trace: Vec<f64>,
}

/// Lloyd's algorithm on scalar values.
///
/// Centroids start at the `(c + ½)/C` quantiles of the sorted values, so
/// the result depends only on the input. Ties between equidistant centroids
/// keep the current cluster, else go to the lowest id. A cluster left empty
/// takes the value farthest from its centroid among clusters with at least
/// two members. Stops when assignments no longer change or after 100
/// iterations.
pub fn kmeans_1d(values: &[f64], clusters: usize) -> Result<ClusterPartition> {
    Ok(kmeans_1d_fit(values, clusters)?.partition)
}

pub fn kmeans_1d_fit(values: &[f64], clusters: usize) -> Result<KMeansFit> {
    let n = values.len();
    if clusters == 0 {
        return Err(invalid!("cluster count must be at least 1"));
    }
    if clusters > n {
        return Err(invalid!("{} clusters requested for {} values", clusters, n));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("k-means input contains non-finite values"));
    }
    if clusters == 1 {
        let mean = values.iter().sum::<f64>() / n as f64;
        let sse = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        return Ok(KMeansFit {
            partition: ClusterPartition {
                assignment: vec![0; n],
                sizes: vec![n],
            },
            centroids: vec![mean],
            iterations: 0,
            objective_trace: vec![sse],
        });
    }

    let mut keyed: Vec<(f64, usize)> = values.iter().copied().zip(0..n).collect();
    keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let order: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
    let mut centroids: Vec<f64> = (0..clusters)
        .map(|c| values[order[((2 * c + 1) * n / (2 * clusters)).min(n - 1)]])
        .collect();

    let mut assignment = vec![usize::MAX; n];
    let mut by_value: Vec<usize> = (0..clusters).collect();
    let mut sizes = vec![0usize; clusters];
    let mut sums = vec![0.0; clusters];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for iter in 0..MAX_LLOYD_ITERATIONS {
        iterations = iter + 1;
        let changed_assign = assign_sorted(values, &order, &centroids, &mut by_value, &mut assignment);
        let repaired = repair_empty(values, &mut assignment, &centroids, &mut sizes);
        update_centroids(values, &assignment, &mut centroids, &mut sums, &mut sizes);
        trace.push(within_sse(values, &assignment, &centroids));
        if !changed_assign && !repaired {
            break;
        }
    }
    let partition = ClusterPartition::from_assignment(assignment, clusters)?;
    Ok(KMeansFit {
        partition,
        centroids,
        iterations,
        objective_trace: trace,
    })
}

/// Nearest-centroid assignment in one sweep over the values in ascending
/// order. Among equidistant centroids the current cluster wins, else the
/// lowest id.
fn assign_sorted(
    values: &[f64],
    order: &[usize],
    centroids: &[f64],
    by_value: &mut [usize],
    assignment: &mut [usize],
) -> bool {
    let k = centroids.len();
    by_value.sort_by(|&a, &b| centroids[a].total_cmp(&centroids[b]).then(a.cmp(&b)));
    let mut changed = false;
    // first centroid (in value order) not below the current value
    let mut p = 0;
    for &i in order {
        let v = values[i];
        while p < k && centroids[by_value[p]] < v {
            p += 1;
        }
        let dist = |q: usize| (v - centroids[by_value[q]]).abs();
        let best_d = match (p > 0, p < k) {
            (true, true) => dist(p - 1).min(dist(p)),
            (true, false) => dist(p - 1),
            _ => dist(p),
        };
        // the tied centroids form a contiguous run around p in value order
        let mut lo = p;
        while lo > 0 && dist(lo - 1) == best_d {
            lo -= 1;
        }
        let mut hi = p;
        while hi < k && dist(hi) == best_d {
            hi += 1;
        }
        let current = assignment[i];
        let tied = &by_value[lo..hi];
        let best = if tied.contains(&current) {
            current
        } else {
            *tied.iter().min().expect("at least one centroid is nearest")
        };
        if best != current {
            assignment[i] = best;
            changed = true;
        }
    }
    changed
}

fn repair_empty(values: &[f64], assignment: &mut [usize], centroids: &[f64], sizes: &mut [usize]) -> bool {
    sizes.iter_mut().for_each(|s| *s = 0);
    for a in assignment.iter() {
        sizes[*a] += 1;
    }
    let mut repaired = false;
    for empty in 0..sizes.len() {
        if sizes[empty] != 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, v) in values.iter().enumerate() {
            let c = assignment[i];
            if sizes[c] < 2 {
                continue;
            }
            let dist = (v - centroids[c]).abs();
            if donor.map_or(true, |(_, d)| dist > d) {
                donor = Some((i, dist));
            }
        }
        // clusters ≤ n guarantees a donor exists
        if let Some((i, _)) = donor {
            sizes[assignment[i]] -= 1;
            assignment[i] = empty;
            sizes[empty] = 1;
            repaired = true;
        }
    }
    repaired
}

fn update_centroids(values: &[f64], assignment: &[usize], centroids: &mut [f64], sums: &mut [f64], counts: &mut [usize]) {
    sums.iter_mut().for_each(|s| *s = 0.0);
    counts.iter_mut().for_each(|c| *c = 0);
    for (v, a) in values.iter().zip(assignment) {
        sums[*a] += v;
        counts[*a] += 1;
    }
    for (c, cent) in centroids.iter_mut().enumerate() {
        if counts[c] > 0 {
            *cent = sums[c] / counts[c] as f64;
        }
    }
}

fn within_sse(values: &[f64], assignment: &[usize], centroids: &[f64]) -> f64 {
    values
        .iter()
        .zip(assignment)
        .map(|(v, a)| (v - centroids[*a]) * (v - centroids[*a]))
        .sum()
}

fn check_lengths(x: &[f64], z: &[f64], partition: &ClusterPartition) -> Result<()> {
    if x.len() != z.len() || x.len() != partition.len() {
        return Err(invalid!(
            "length mismatch: x {}, z {}, partition {}",
            x.len(),
            z.len(),
            partition.len()
        ));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid!("smoothing epsilon must be positive, got {}", epsilon));
    }
    Ok(())
}

/// Element weights for one prior:
/// `w_ji = n_jc (|x_i − z_ji| + ε)⁻¹ / Σ_{l∈Ω_jc} (|x_l − z_jl| + ε)⁻¹`.
pub fn update_w(x: &[f64], z: &[f64], partition: &ClusterPartition, epsilon: f64) -> Result<Vec<f64>> {
    check_lengths(x, z, partition)?;
    check_epsilon(epsilon)?;
    let inv: Vec<f64> = x
        .iter()
        .zip(z)
        .map(|(a, b)| 1.0 / ((a - b).abs() + epsilon))
        .collect();
    let mut sums = vec![0.0; partition.clusters()];
    for (i, c) in partition.assignment.iter().enumerate() {
        sums[*c] += inv[i];
    }
    Ok(partition
        .assignment
        .iter()
        .enumerate()
        .map(|(i, c)| partition.sizes[*c] as f64 * inv[i] / sums[*c])
        .collect())
}

/// Cluster weights for one prior:
/// `γ̄_jc ∝ (‖W_j (x − z_j)‖₁ restricted to Ω_jc + ε)⁻¹`, normalised to
/// sum to one.
pub fn update_gamma(
    x: &[f64],
    z: &[f64],
    w: &[f64],
    partition: &ClusterPartition,
    epsilon: f64,
) -> Result<Vec<f64>> {
    check_lengths(x, z, partition)?;
    check_epsilon(epsilon)?;
    if w.len() != x.len() {
        return Err(invalid!("weights have length {}, expected {}", w.len(), x.len()));
    }
    let mut norms = vec![0.0; partition.clusters()];
    for (i, c) in partition.assignment.iter().enumerate() {
        norms[*c] += w[i] * (x[i] - z[i]).abs();
    }
    Ok(normalized_inverse(&norms, epsilon))
}

/// Prior weights: `β_j ∝ (‖γ_j W_j (x − z_j)‖₁ + ε)⁻¹` over `j = 0..=J`,
/// normalised to sum to one. Uses the `w`, `γ̄` and partitions held in
/// `weights`.
pub fn update_beta(x: &[f64], priors: &PriorSet, weights: &WeightState, epsilon: f64) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if priors.dim() != x.len() || weights.dim() != x.len() {
        return Err(invalid!(
            "length mismatch: x {}, priors {}, weights {}",
            x.len(),
            priors.dim(),
            weights.dim()
        ));
    }
    if weights.prior_count() != priors.count() + 1 {
        return Err(invalid!(
            "weight state has {} prior slots, expected {}",
            weights.prior_count(),
            priors.count() + 1
        ));
    }
    let norms: Vec<f64> = (0..weights.prior_count())
        .map(|j| {
            x.iter()
                .enumerate()
                .map(|(i, xi)| weights.gamma(j, i) * weights.w[j][i] * (xi - priors.value(j, i)).abs())
                .sum()
        })
        .collect();
    Ok(normalized_inverse(&norms, epsilon))
}

fn normalized_inverse(norms: &[f64], epsilon: f64) -> Vec<f64> {
    let inv: Vec<f64> = norms.iter().map(|v| 1.0 / (v + epsilon)).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_separated_groups() {
        let p = kmeans_1d(&[0.0, 0.0, 0.0, 10.0, 10.0, 10.0], 2).unwrap();
        assert_eq!(p.assignment, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(p.sizes, vec![3, 3]);
    }

    #[test]
    fn single_cluster() {
        let p = kmeans_1d(&[3.0, -1.0, 2.0], 1).unwrap();
        assert_eq!(p.sizes, vec![3]);
        assert!(kmeans_1d(&[1.0, 2.0], 3).is_err());
        assert!(kmeans_1d(&[1.0], 0).is_err());
    }

    #[test]
    fn gaussian_mixture_splits_at_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let values: Vec<f64> = (0..50)
            .map(|i| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                if i % 2 == 0 { noise } else { 100.0 + noise }
            })
            .collect();
        let p = kmeans_1d(&values, 2).unwrap();
        let high = p.assignment[values.iter().position(|v| *v > 50.0).unwrap()];
        for (v, a) in values.iter().zip(&p.assignment) {
            assert_eq!(*v > 50.0, *a == high);
        }
    }

    #[test]
    fn identical_values_still_fill_every_cluster() {
        let p = kmeans_1d(&[0.0; 10], 7).unwrap();
        p.check_cover().unwrap();
        let mut mostly_zero = vec![0.0; 120];
        mostly_zero.extend([1.0, 2.0, 3.0]);
        let p = kmeans_1d(&mostly_zero, 7).unwrap();
        p.check_cover().unwrap();
    }

    #[test]
    fn w_examples() {
        let part = ClusterPartition::from_assignment(vec![0, 0], 1).unwrap();
        let w = update_w(&[0.0, 1.0], &[0.0, 0.0], &part, 1.0).unwrap();
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);

        let part = ClusterPartition::from_assignment(vec![0, 1, 0, 1], 2).unwrap();
        let w = update_w(&[2.0, 5.0, -2.0, 5.0], &[0.0; 4], &part, 0.8).unwrap();
        assert_eq!(w, vec![1.0; 4]);
        assert!(update_w(&[1.0], &[1.0, 2.0], &part, 1.0).is_err());
    }

    #[test]
    fn gamma_examples() {
        let part = ClusterPartition::from_assignment(vec![0, 1], 2).unwrap();
        let g = update_gamma(&[0.0, 1.0], &[0.0, 0.0], &[1.0, 1.0], &part, 1.0).unwrap();
        assert!((g[0] - 2.0 / 3.0).abs() < 1e-15 && (g[1] - 1.0 / 3.0).abs() < 1e-15);
        let g = update_gamma(&[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0], &part, 1.0).unwrap();
        assert_eq!(g, vec![0.5, 0.5]);
        let one = ClusterPartition::from_assignment(vec![0, 0], 1).unwrap();
        assert_eq!(update_gamma(&[3.0, 1.0], &[0.0, 0.0], &[1.0, 1.0], &one, 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn beta_examples() {
        // J = 1, prior 1 equals x, prior 0 is at weighted distance 1
        let priors = PriorSet::new(1, vec![vec![1.0]]).unwrap();
        let weights = WeightState::uniform(1, 1, 1).unwrap();
        let b = update_beta(&[1.0], &priors, &weights, 1.0).unwrap();
        assert!((b[0] - 1.0 / 3.0).abs() < 1e-15 && (b[1] - 2.0 / 3.0).abs() < 1e-15);

        let priors = PriorSet::new(2, vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let weights = WeightState::uniform(2, 2, 1).unwrap();
        let b = update_beta(&[1.0, 1.0], &priors, &weights, 0.8).unwrap();
        for v in &b {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let priors = PriorSet::new(2, vec![vec![5.0, 5.0], vec![0.3, -0.2], vec![9.0, 9.0]]).unwrap();
        let weights = WeightState::uniform(2, 3, 1).unwrap();
        let b = update_beta(&[0.3, -0.2], &priors, &weights, 0.8).unwrap();
        let best = (0..4).max_by(|a, c| b[*a].total_cmp(&b[*c])).unwrap();
        assert_eq!(best, 2);
    }

    proptest! {
        #[test]
        fn partition_and_weight_invariants(
            values in proptest::collection::vec(-5.0f64..5.0, 8..60),
            z_seed in proptest::collection::vec(-5.0f64..5.0, 60),
            clusters in 1usize..8,
        ) {
            let n = values.len();
            let clusters = clusters.min(n);
            let z = &z_seed[..n];
            let resid: Vec<f64> = values.iter().zip(z).map(|(a, b)| (a - b).abs()).collect();
            let fit = kmeans_1d_fit(&resid, clusters).unwrap();
            fit.partition.check_cover().unwrap();
            for pair in fit.objective_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-9 * pair[0].max(1.0));
            }
            let w = update_w(&values, z, &fit.partition, 0.8).unwrap();
            for c in 0..clusters {
                let s: f64 = fit.partition.members(c).map(|i| w[i]).sum();
                prop_assert!((s - fit.partition.sizes[c] as f64).abs() <= 1e-9);
                // smaller residual, larger weight
                for i in fit.partition.members(c) {
                    for l in fit.partition.members(c) {
                        if resid[i] < resid[l] {
                            prop_assert!(w[i] > w[l]);
                        }
                    }
                }
            }
            prop_assert!(w.iter().all(|v| *v > 0.0));
            let g = update_gamma(&values, z, &w, &fit.partition, 0.8).unwrap();
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(g.iter().all(|v| *v > 0.0));
        }
    }
}
