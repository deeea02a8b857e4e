//! Per-frame decomposition engine.
//!
//! Given measurements `y = Φ(x + v)`, the previous sparse priors `Z` and the
//! low-rank prior `B` (n×d), each frame runs an accelerated proximal
//! gradient loop on
//!
//! ```text
//! H(x, v) = ½‖Φ(x + v) − y‖² + λμ Σ_j β_j ‖γ_j W_j (x − z_j)‖₁ + μ‖[B v]‖_*
//! ```
//!
//! The `v` step appends the gradient-stepped candidate to `B` with an
//! incremental SVD, thresholds the singular values by `μ/2` and keeps the
//! last column. The `x` step applies the multi-prior prox with multiplier
//! `λμ/2`. After each step the residuals `|x − z_j|` are re-clustered and
//! the weights `W_j`, `γ̄_j`, `β` refreshed. `μ` decays geometrically to
//! `μ̄`.
//!
//! Both step sizes are ½, which assumes `σ_max(Φ) ≤ 1` (orthonormal rows).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg::{full_svd, inc_svd, norm2, svt_column, DenseMatrix, SvdFactors};
use crate::prox::{eval_g, prox_weighted_multi_l1, PriorSet, WeightState};
use crate::weights::{kmeans_1d, update_beta, update_gamma, update_w};

/// Relative cutoff below which singular values of `B` are treated as zero
/// before the per-iteration incremental SVD.
const PRIOR_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// ℓ1 balance `λ`; `None` means `C/√n`. The cluster weights `γ̄_j` sum to
    /// one, so the mean element weight is `1/C`; the factor `C` makes the
    /// uniform starting weights match the single-cluster problem.
    pub lambda: Option<f64>,
    /// Floor `μ̄` of the continuation schedule.
    pub mu_bar: f64,
    /// Starting `μ`; `None` means `max(σ₁(B), ‖Φᵀy‖_∞/λ, μ̄)`, the scale at
    /// which both thresholds zero out their component.
    pub mu0: Option<f64>,
    /// Decay factor of `μ`, in (0, 1).
    pub epsilon_mu: f64,
    /// Smoothing `ε` of the weight updates.
    pub epsilon_weights: f64,
    /// Cluster count `C`.
    pub clusters: usize,
    /// Number of sparse priors `J`.
    pub priors: usize,
    /// Column count `d` of the low-rank prior.
    pub subspace_dim: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Re-cluster every `cluster_stride` iterations.
    pub cluster_stride: usize,
    /// Record `H(x, v)` after every iteration.
    pub track_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: None,
            mu_bar: 1e-3,
            mu0: None,
            epsilon_mu: 0.8,
            epsilon_weights: 0.8,
            clusters: 7,
            priors: 3,
            subspace_dim: 100,
            max_iter: 2000,
            tol: 1e-6,
            cluster_stride: 1,
            track_objective: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid!("{} must be positive, got {}", name, v))
            }
        };
        if let Some(l) = self.lambda {
            positive("lambda", l)?;
        }
        if let Some(m) = self.mu0 {
            positive("mu0", m)?;
        }
        positive("mu_bar", self.mu_bar)?;
        positive("epsilon_weights", self.epsilon_weights)?;
        positive("tol", self.tol)?;
        if !(self.epsilon_mu > 0.0 && self.epsilon_mu < 1.0) {
            return Err(invalid!("epsilon_mu must lie in (0, 1), got {}", self.epsilon_mu));
        }
        if self.clusters == 0 {
            return Err(invalid!("cluster count must be at least 1"));
        }
        if self.subspace_dim == 0 || self.max_iter == 0 || self.cluster_stride == 0 {
            return Err(invalid!("subspace_dim, max_iter and cluster_stride must be positive"));
        }
        Ok(())
    }

    pub fn lambda_for(&self, n: usize) -> f64 {
        self.lambda
            .unwrap_or_else(|| self.clusters as f64 / libm::sqrt(n as f64))
    }
}

/// Rolling state carried between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    pub priors: PriorSet,
    pub low_rank: DenseMatrix,
    pub frame_index: usize,
}

impl StreamState {
    /// Starts a stream from a low-rank prior with `priors` zero sparse priors.
    pub fn new(low_rank: DenseMatrix, priors: usize) -> Self {
        StreamState {
            priors: PriorSet::zeros(low_rank.rows(), priors),
            low_rank,
            frame_index: 0,
        }
    }

    /// Replaces the sparse priors; the window length must stay the same.
    pub fn with_priors(self, priors: PriorSet) -> Self {
        assert_eq!(priors.count(), self.priors.count(), "prior window length changed");
        StreamState { priors, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub x_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// `μ` used in the final iteration.
    pub final_mu: f64,
    /// Weights in effect after the final iteration.
    pub weights: WeightState,
}

/// Per-iteration view handed to observers.
#[derive(Debug)]
pub struct IterationView<'a> {
    pub iteration: usize,
    pub mu: f64,
    pub x: &'a [f64],
    pub v: &'a [f64],
    pub weights: &'a WeightState,
    /// Point the sparse prox was applied to, with weights held at their
    /// pre-refresh values in `prox_weights`.
    pub prox_input: &'a [f64],
    pub prox_weights: &'a WeightState,
    pub prox_tau: f64,
}

/// `ξ_{k+1} = (1 + √(1 + 4ξ_k²)) / 2`.
pub fn next_momentum(xi: f64) -> f64 {
    0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * xi * xi))
}

/// `μ_{k+1} = max(ε μ_k, μ̄)`.
pub fn next_mu(mu: f64, epsilon_mu: f64, mu_bar: f64) -> f64 {
    (epsilon_mu * mu).max(mu_bar)
}

fn check_frame(y: &[f64], phi: &DenseMatrix, state: &StreamState, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    let n = phi.cols();
    if y.len() != phi.rows() {
        return Err(invalid!(
            "measurement vector has length {}, sensing matrix has {} rows",
            y.len(),
            phi.rows()
        ));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("measurements contain non-finite values"));
    }
    if state.low_rank.rows() != n || state.priors.dim() != n {
        return Err(invalid!(
            "state dimension {} does not match sensing matrix width {}",
            state.low_rank.rows(),
            n
        ));
    }
    if state.low_rank.cols() != cfg.subspace_dim {
        return Err(invalid!(
            "low-rank prior has {} columns, configuration expects {}",
            state.low_rank.cols(),
            cfg.subspace_dim
        ));
    }
    if state.priors.count() != cfg.priors {
        return Err(invalid!(
            "state holds {} sparse priors, configuration expects {}",
            state.priors.count(),
            cfg.priors
        ));
    }
    if cfg.clusters > n {
        return Err(invalid!("{} clusters requested for dimension {}", cfg.clusters, n));
    }
    Ok(())
}

/// Decomposes one frame and returns the result with the updated state.
pub fn decompose_frame(
    y: &[f64],
    phi: &DenseMatrix,
    state: &StreamState,
    cfg: &SolverConfig,
) -> Result<(DecompositionResult, StreamState)> {
    decompose_frame_observed(y, phi, state, cfg, |_| {})
}

/// The single-cluster baseline: the same pipeline with `C = 1`.
pub fn decompose_baseline_corpca(
    y: &[f64],
    phi: &DenseMatrix,
    state: &StreamState,
    cfg: &SolverConfig,
) -> Result<(DecompositionResult, StreamState)> {
    let single = SolverConfig {
        clusters: 1,
        ..cfg.clone()
    };
    decompose_frame(y, phi, state, &single)
}

/// [`decompose_frame`] with a callback after every iteration.
pub fn decompose_frame_observed(
    y: &[f64],
    phi: &DenseMatrix,
    state: &StreamState,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&IterationView<'_>),
) -> Result<(DecompositionResult, StreamState)> {
    check_frame(y, phi, state, cfg)?;
    let n = phi.cols();
    let lambda = cfg.lambda_for(n);
    let priors = &state.priors;
    let prior_slots = priors.count() + 1;

    let b_factors = full_svd(&state.low_rank)?.truncate_negligible(PRIOR_RANK_TOL);
    let zeros = vec![0.0; n];
    let prior_vec = |j: usize| -> &[f64] {
        if j == 0 {
            &zeros
        } else {
            priors.prior(j)
        }
    };

    let mut x = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut x_prev = x.clone();
    let mut v_prev = v.clone();
    let (mut xi_prev, mut xi) = (1.0f64, 1.0f64);
    let mut mu = match cfg.mu0 {
        Some(m) => m,
        None => {
            let aty = phi.tr_mul_vec(y)?;
            let top = aty.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let sigma1 = b_factors.singular_values.first().copied().unwrap_or(0.0);
            sigma1.max(top / lambda).max(cfg.mu_bar)
        }
    };
    let mut weights = WeightState::uniform(n, cfg.priors, cfg.clusters)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_mu = mu;
    let mut exit_factors: Option<SvdFactors> = None;
    let mut sum = vec![0.0; n];

    for k in 0..cfg.max_iter {
        iterations = k + 1;
        let coef = (xi_prev - 1.0) / xi;
        let x_t: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a + coef * (a - b)).collect();
        let v_t: Vec<f64> = v.iter().zip(&v_prev).map(|(a, b)| a + coef * (a - b)).collect();
        for i in 0..n {
            sum[i] = x_t[i] + v_t[i];
        }
        let mut resid = phi.mul_vec(&sum)?;
        for (r, yi) in resid.iter_mut().zip(y) {
            *r -= yi;
        }
        let grad = phi.tr_mul_vec(&resid)?;

        // low-rank step
        let c: Vec<f64> = v_t.iter().zip(&grad).map(|(a, g)| a - 0.5 * g).collect();
        let factors = inc_svd(&b_factors, &c)?;
        let v_next = svt_column(&factors, 0.5 * mu, factors.v.rows() - 1);

        // sparse step
        let u: Vec<f64> = x_t.iter().zip(&grad).map(|(a, g)| a - 0.5 * g).collect();
        let tau = 0.5 * lambda * mu;
        let x_next = prox_weighted_multi_l1(&u, priors, &weights, tau)?;
        let prox_weights = weights.clone();

        // clusters from the current iterate, weights from the new one
        if k % cfg.cluster_stride == 0 {
            for j in 0..prior_slots {
                let z = prior_vec(j);
                let magnitudes: Vec<f64> = x.iter().zip(z).map(|(a, b)| (a - b).abs()).collect();
                weights.partitions[j] = kmeans_1d(&magnitudes, cfg.clusters)?;
            }
        }
        for j in 0..prior_slots {
            let z = prior_vec(j);
            let w = update_w(&x_next, z, &weights.partitions[j], cfg.epsilon_weights)?;
            weights.gamma_bar[j] =
                update_gamma(&x_next, z, &w, &weights.partitions[j], cfg.epsilon_weights)?;
            weights.w[j] = w;
        }
        weights.beta = update_beta(&x_next, priors, &weights, cfg.epsilon_weights)?;

        let dx = x_next.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let dv = v_next.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let scale = 1.0f64.max(norm2(&x)).max(norm2(&v));
        let change = libm::sqrt(dx.max(dv)) / scale;

        if cfg.track_objective {
            let nuclear = inc_svd(&b_factors, &v_next)?.nuclear_norm();
            let mut r = 0.0;
            let fit = phi.mul_vec(&x_next.iter().zip(&v_next).map(|(a, b)| a + b).collect::<Vec<_>>())?;
            for (f, yi) in fit.iter().zip(y) {
                r += (f - yi) * (f - yi);
            }
            let g = eval_g(&x_next, priors, &weights, lambda)?;
            trace.push(0.5 * r + mu * g + mu * nuclear);
        }

        x_prev = core::mem::replace(&mut x, x_next);
        v_prev = core::mem::replace(&mut v, v_next);
        observer(&IterationView {
            iteration: k,
            mu,
            x: &x,
            v: &v,
            weights: &weights,
            prox_input: &u,
            prox_weights: &prox_weights,
            prox_tau: tau,
        });
        exit_factors = Some(factors);
        last_mu = mu;

        xi_prev = xi;
        xi = next_momentum(xi);
        let at_floor = mu <= cfg.mu_bar;
        mu = next_mu(mu, cfg.epsilon_mu, cfg.mu_bar);
        if at_floor && change <= cfg.tol {
            converged = true;
            break;
        }
    }

    let result = DecompositionResult {
        x_hat: x,
        v_hat: v,
        iterations,
        objective_trace: trace,
        converged,
        final_mu: last_mu,
        weights,
    };
    let factors = exit_factors.expect("max_iter is validated to be positive");
    let next = update_priors(&result, state, &factors, 0.5 * last_mu)?;
    Ok((result, next))
}

/// Slides the sparse prior window and rebuilds `B` from the exit
/// factorization of `[B c]`:
/// `B_t = U(:, 1:d) · diag(max(σ − τ, 0))(1:d) · V(1:d, 1:d)ᵀ`.
pub fn update_priors(
    result: &DecompositionResult,
    state: &StreamState,
    exit_factors: &SvdFactors,
    threshold: f64,
) -> Result<StreamState> {
    let n = state.low_rank.rows();
    let d = state.low_rank.cols();
    if exit_factors.u.rows() != n || exit_factors.v.rows() < d {
        return Err(invalid!("exit factorization does not match the stream state"));
    }
    if !(threshold >= 0.0) {
        return Err(invalid!("threshold must be nonnegative, got {}", threshold));
    }
    let mut priors = state.priors.clone();
    priors.push_recent(&result.x_hat)?;

    let kk = d.min(exit_factors.len());
    let mut b = DenseMatrix::zeros(n, d);
    for l in 0..kk {
        let s = (exit_factors.singular_values[l] - threshold).max(0.0);
        if s == 0.0 {
            continue;
        }
        for i in 0..n {
            let coeff = exit_factors.u.get(i, l) * s;
            if coeff == 0.0 {
                continue;
            }
            let row = b.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += coeff * exit_factors.v.get(j, l);
            }
        }
    }
    Ok(StreamState {
        priors,
        low_rank: b,
        frame_index: state.frame_index + 1,
    })
}

/// `½‖Φ(x + v) − y‖² + μ·g(x) + μ‖[B v]‖_*`, with `g` the weighted
/// multi-prior ℓ1 term scaled by `λ` and the nuclear norm from a full SVD.
#[allow(clippy::too_many_arguments)]
pub fn eval_objective(
    x: &[f64],
    v: &[f64],
    y: &[f64],
    phi: &DenseMatrix,
    priors: &PriorSet,
    weights: &WeightState,
    b: &DenseMatrix,
    lambda: f64,
    mu: f64,
) -> Result<f64> {
    let n = phi.cols();
    if x.len() != n || v.len() != n || y.len() != phi.rows() || b.rows() != n {
        return Err(invalid!("objective arguments have inconsistent dimensions"));
    }
    let sum: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + b).collect();
    let fit = phi.mul_vec(&sum)?;
    let data: f64 = fit.iter().zip(y).map(|(f, yi)| (f - yi) * (f - yi)).sum();
    let g = eval_g(x, priors, weights, lambda)?;
    let nuclear = full_svd(&b.with_column(v)?)?.nuclear_norm();
    Ok(0.5 * data + mu * g + mu * nuclear)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_and_schedule() {
        let xi1 = next_momentum(1.0);
        assert!((xi1 - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        let mut mu = 3.0;
        let mut prev = mu;
        for _ in 0..100 {
            mu = next_mu(mu, 0.8, 1e-3);
            assert!(mu <= prev && mu >= 1e-3);
            prev = mu;
        }
        assert_eq!(mu, 1e-3);
    }

    #[test]
    fn sliding_window_and_full_threshold() {
        let state = StreamState {
            priors: PriorSet::new(2, vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]).unwrap(),
            low_rank: DenseMatrix::identity(2),
            frame_index: 4,
        };
        let factors = full_svd(&DenseMatrix::from_row_major(2, 3, vec![1.0, 0.0, 0.5, 0.0, 1.0, 0.0]).unwrap()).unwrap();
        let result = DecompositionResult {
            x_hat: vec![5.0, 0.0],
            v_hat: vec![0.0, 0.0],
            iterations: 1,
            objective_trace: vec![],
            converged: true,
            final_mu: 1.0,
            weights: WeightState::uniform(2, 3, 1).unwrap(),
        };
        let next = update_priors(&result, &state, &factors, 10.0).unwrap();
        assert_eq!(next.priors.priors(), &[vec![2.0, 0.0], vec![3.0, 0.0], vec![5.0, 0.0]]);
        assert_eq!(next.low_rank, DenseMatrix::zeros(2, 2));
        assert_eq!(next.frame_index, 5);
    }

    #[test]
    fn objective_closed_forms() {
        let phi = DenseMatrix::identity(3);
        let priors = PriorSet::zeros(3, 2);
        let weights = WeightState::uniform(3, 2, 1).unwrap();
        let zero = [0.0; 3];
        let b0 = DenseMatrix::zeros(3, 2);
        assert_eq!(eval_objective(&zero, &zero, &zero, &phi, &priors, &weights, &b0, 0.5, 0.1).unwrap(), 0.0);
        let y = [1.0, -2.0, 2.0];
        let b = DenseMatrix::from_row_major(3, 2, vec![2.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let h = eval_objective(&zero, &zero, &y, &phi, &priors, &weights, &b, 0.5, 0.1).unwrap();
        assert!((h - (0.5 * 9.0 + 0.1 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            epsilon_mu: 1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            clusters: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
