//! Synthetic streams, sensing matrices and success metrics.
//!
//! A stream holds `d` training columns followed by `q` test columns of a
//! low-rank matrix `L = U Vᵀ` and a slowly changing sparse sequence `X`.
//! A trial trains the low-rank prior with batch PCP on the training block
//! of `L + X`, then streams the compressed test columns through the
//! per-frame solver.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{distance, norm2, orthonormalize_rows, DenseMatrix};
use crate::pcp::{pcp_decompose, PcpConfig};
use crate::solver::{decompose_frame, SolverConfig, StreamState};

/// Support sizes above `s0 + SUPPORT_SLACK` trigger a reset to `s0`.
pub const SUPPORT_SLACK: usize = 15;

/// Default success threshold on the relative ℓ2 error.
pub const SUCCESS_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamParams {
    pub n: usize,
    pub r: usize,
    /// Training columns.
    pub d: usize,
    /// Test columns.
    pub q: usize,
    pub s0: usize,
    pub seed: u64,
}

impl StreamParams {
    pub fn frames(&self) -> usize {
        self.d + self.q
    }
}

/// Ground truth of a synthetic stream; both matrices are `n × (d + q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub params: StreamParams,
    pub low_rank: DenseMatrix,
    pub sparse: DenseMatrix,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gen_stream(params: StreamParams) -> Result<SyntheticStream> {
    let StreamParams { n, r, d, q, s0, seed } = params;
    let frames = d + q;
    if n == 0 || frames == 0 {
        return Err(invalid!("stream needs n ≥ 1 and at least one frame"));
    }
    if s0 % 2 != 0 {
        return Err(invalid!("sparsity s0 must be even, got {}", s0));
    }
    if s0 == 0 || s0 > n {
        return Err(invalid!("sparsity s0 = {} must lie in 2..={}", s0, n));
    }
    if r > n.min(frames) {
        return Err(invalid!("rank {} exceeds min(n, d + q) = {}", r, n.min(frames)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = DenseMatrix::from_fn(n, r, |_, _| normal(&mut rng));
    let vt = DenseMatrix::from_fn(r, frames, |_, _| normal(&mut rng));
    let low_rank = u.matmul(&vt)?;

    // s0/2 changes per frame, split evenly between additions and removals;
    // when s0/2 is odd the extra change alternates between the two so the
    // support size stays at s0 or s0 + 1
    let half = s0 / 2;
    let mut sparse = DenseMatrix::zeros(n, frames);
    let mut x = vec![0.0; n];
    for i in index::sample(&mut rng, n, s0) {
        x[i] = normal(&mut rng);
    }
    for t in 0..frames {
        if t > 0 {
            let removals = if t % 2 == 1 { half / 2 } else { half - half / 2 };
            let additions = half - removals;
            let prev = x.clone();
            let support: Vec<usize> = (0..n).filter(|&i| x[i] != 0.0).collect();
            let off: Vec<usize> = (0..n).filter(|&i| x[i] == 0.0).collect();
            let adds = additions.min(off.len());
            for k in index::sample(&mut rng, off.len(), adds) {
                x[off[k]] = nonzero_normal(&mut rng);
            }
            for k in index::sample(&mut rng, support.len(), removals.min(support.len())) {
                x[support[k]] = 0.0;
            }
            let changed = x.iter().zip(&prev).filter(|(a, b)| a != b).count();
            let mut size = support_size(&x);
            if size > s0 + SUPPORT_SLACK {
                let current: Vec<usize> = (0..n).filter(|&i| x[i] != 0.0).collect();
                for k in index::sample(&mut rng, current.len(), size - s0) {
                    x[current[k]] = 0.0;
                }
                size = s0;
            } else if changed != s0 / 2 && adds == additions {
                return Err(Error::Internal(alloc::format!(
                    "frame {} changed {} entries, expected {}",
                    t,
                    changed,
                    s0 / 2
                )));
            }
            debug_assert_eq!(size, support_size(&x));
        }
        let size = support_size(&x);
        if size < s0 || size > s0 + SUPPORT_SLACK {
            return Err(Error::Internal(alloc::format!(
                "frame {} has support {} outside [{}, {}]",
                t,
                size,
                s0,
                s0 + SUPPORT_SLACK
            )));
        }
        for (i, v) in x.iter().enumerate() {
            sparse.set(i, t, *v);
        }
    }
    Ok(SyntheticStream {
        params,
        low_rank,
        sparse,
    })
}

fn nonzero_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = normal(rng);
        if v != 0.0 {
            return v;
        }
    }
}

fn support_size(x: &[f64]) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}

/// Gaussian `m × n` matrix with orthonormalised rows.
pub fn gen_sensing(m: usize, n: usize, seed: u64) -> Result<DenseMatrix> {
    if m == 0 || m > n {
        return Err(invalid!("sensing matrix needs 1 ≤ m ≤ n, got m = {}, n = {}", m, n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = DenseMatrix::from_fn(m, n, |_, _| normal(&mut rng));
    orthonormalize_rows(&mut phi)?;
    Ok(phi)
}

/// `true` when `‖est − truth‖₂ ≤ threshold·‖truth‖₂`, or `‖est‖₂ ≤ threshold`
/// for a zero truth.
pub fn recovered(estimate: &[f64], truth: &[f64], threshold: f64) -> bool {
    let scale = norm2(truth);
    let err = distance(estimate, truth);
    if scale == 0.0 {
        err <= threshold
    } else {
        err <= threshold * scale
    }
}

/// Fraction of estimate/truth pairs that are [`recovered`].
pub fn success_probability(estimates: &[Vec<f64>], truths: &[Vec<f64>], threshold: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(invalid!("success probability of an empty list"));
    }
    if estimates.len() != truths.len() {
        return Err(invalid!(
            "{} estimates for {} truths",
            estimates.len(),
            truths.len()
        ));
    }
    if !(threshold >= 0.0) {
        return Err(invalid!("threshold must be nonnegative, got {}", threshold));
    }
    let mut hits = 0usize;
    for (e, t) in estimates.iter().zip(truths) {
        if e.len() != t.len() {
            return Err(invalid!("estimate length {} differs from truth length {}", e.len(), t.len()));
        }
        if recovered(e, t, threshold) {
            hits += 1;
        }
    }
    Ok(hits as f64 / estimates.len() as f64)
}

/// SplitMix64 finaliser, used to derive independent seeds from coordinates.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` in cell `(s0, m)`. Depends only on coordinates.
pub fn trial_seed(master: u64, s0: usize, m: usize, trial: usize) -> u64 {
    let mut h = mix(master);
    for part in [s0 as u64, m as u64, trial as u64] {
        h = mix(h ^ part);
    }
    h
}

/// Everything needed to run one Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub q: usize,
    pub s0: usize,
    pub m: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub pcp: PcpConfig,
    pub threshold: f64,
}

/// Per-trial success counts over the `q` test frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub frames: usize,
    pub sparse_hits: usize,
    pub lowrank_hits: usize,
    pub sparse_errors: Vec<f64>,
    pub lowrank_errors: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

impl TrialOutcome {
    pub fn sparse_rate(&self) -> f64 {
        self.sparse_hits as f64 / self.frames as f64
    }

    pub fn lowrank_rate(&self) -> f64 {
        self.lowrank_hits as f64 / self.frames as f64
    }
}

fn relative_error(est: &[f64], truth: &[f64]) -> f64 {
    let scale = norm2(truth);
    let err = distance(est, truth);
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

/// Initial stream state: `B₀` is the PCP low-rank estimate of the training
/// block and the sparse priors start at zero.
pub fn train_state(training: &DenseMatrix, priors: usize, pcp: &PcpConfig) -> Result<StreamState> {
    let split = pcp_decompose(training, pcp)?;
    Ok(StreamState::new(split.low_rank, priors))
}

/// Generates a stream and sensing matrix from `spec.seed`, trains on the
/// first `d` columns and streams the remaining `q`.
pub fn run_trial(spec: &TrialSpec) -> Result<TrialOutcome> {
    run_trial_with(spec, |_, _| {})
}

/// [`run_trial`] with a callback per test frame (frame index, truth pair
/// relative errors).
pub fn run_trial_with(spec: &TrialSpec, mut on_frame: impl FnMut(usize, (f64, f64))) -> Result<TrialOutcome> {
    let stream = gen_stream(StreamParams {
        n: spec.n,
        r: spec.r,
        d: spec.d,
        q: spec.q,
        s0: spec.s0,
        seed: mix(spec.seed ^ 1),
    })?;
    let phi = gen_sensing(spec.m, spec.n, mix(spec.seed ^ 2))?;
    let observed = stream.low_rank.add(&stream.sparse)?;
    let training = observed.columns_range(0, spec.d);
    let mut state = train_state(&training, spec.solver.priors, &spec.pcp)?;

    let mut outcome = TrialOutcome {
        frames: spec.q,
        sparse_hits: 0,
        lowrank_hits: 0,
        sparse_errors: Vec::with_capacity(spec.q),
        lowrank_errors: Vec::with_capacity(spec.q),
        iterations: Vec::with_capacity(spec.q),
        converged: Vec::with_capacity(spec.q),
    };
    for t in spec.d..spec.d + spec.q {
        let x_true = stream.sparse.column(t);
        let v_true = stream.low_rank.column(t);
        let y = phi.mul_vec(&observed.column(t))?;
        let (result, next) = decompose_frame(&y, &phi, &state, &spec.solver)?;
        let es = relative_error(&result.x_hat, &x_true);
        let el = relative_error(&result.v_hat, &v_true);
        if recovered(&result.x_hat, &x_true, spec.threshold) {
            outcome.sparse_hits += 1;
        }
        if recovered(&result.v_hat, &v_true, spec.threshold) {
            outcome.lowrank_hits += 1;
        }
        outcome.sparse_errors.push(es);
        outcome.lowrank_errors.push(el);
        outcome.iterations.push(result.iterations);
        outcome.converged.push(result.converged);
        on_frame(t - spec.d, (es, el));
        state = next;
    }
    Ok(outcome)
}

/// Aggregated success rates of one `(s0, m)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell {
    pub s0: usize,
    pub m: usize,
    pub prob_sparse: f64,
    pub prob_lowrank: f64,
    pub trials: usize,
    /// Trials that ended in an error; they count as zero successes.
    pub failed_trials: usize,
}

impl PhaseCell {
    /// Averages per-trial rates. Errors count as trials with no successes.
    pub fn from_trials(s0: usize, m: usize, outcomes: &[Result<TrialOutcome>]) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(invalid!("cell ({}, {}) has no trials", s0, m));
        }
        let (mut ps, mut pl, mut failed) = (0.0, 0.0, 0);
        for o in outcomes {
            match o {
                Ok(o) => {
                    ps += o.sparse_rate();
                    pl += o.lowrank_rate();
                }
                Err(_) => failed += 1,
            }
        }
        let k = outcomes.len() as f64;
        Ok(PhaseCell {
            s0,
            m,
            prob_sparse: ps / k,
            prob_lowrank: pl / k,
            trials: outcomes.len(),
            failed_trials: failed,
        })
    }
}

/// Success probabilities over an `s0 × m` grid, row-major in `s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    pub s0_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub cells: Vec<PhaseCell>,
}

impl PhaseDiagram {
    /// Orders `cells` by the grid axes. Every grid point must appear once.
    pub fn assemble(s0_values: Vec<usize>, m_values: Vec<usize>, cells: Vec<PhaseCell>) -> Result<Self> {
        if s0_values.is_empty() || m_values.is_empty() {
            return Err(invalid!("phase diagram grid is empty"));
        }
        if cells.len() != s0_values.len() * m_values.len() {
            return Err(invalid!(
                "{} cells for a {}x{} grid",
                cells.len(),
                s0_values.len(),
                m_values.len()
            ));
        }
        let mut ordered = Vec::with_capacity(cells.len());
        for &s0 in &s0_values {
            for &m in &m_values {
                let cell = cells
                    .iter()
                    .find(|c| c.s0 == s0 && c.m == m)
                    .ok_or_else(|| invalid!("missing cell s0 = {}, m = {}", s0, m))?;
                if cell.trials == 0 || !(0.0..=1.0).contains(&cell.prob_sparse) || !(0.0..=1.0).contains(&cell.prob_lowrank) {
                    return Err(invalid!("cell s0 = {}, m = {} is malformed", s0, m));
                }
                ordered.push(cell.clone());
            }
        }
        Ok(PhaseDiagram {
            s0_values,
            m_values,
            cells: ordered,
        })
    }

    pub fn cell(&self, s0_index: usize, m_index: usize) -> &PhaseCell {
        &self.cells[s0_index * self.m_values.len() + m_index]
    }

    /// Runs every trial sequentially.
    pub fn sweep(
        s0_values: Vec<usize>,
        m_values: Vec<usize>,
        trials: usize,
        master_seed: u64,
        template: &TrialSpec,
    ) -> Result<Self> {
        if trials == 0 {
            return Err(invalid!("at least one trial per cell is required"));
        }
        let mut cells = Vec::new();
        for &s0 in &s0_values {
            for &m in &m_values {
                let outcomes: Vec<_> = (0..trials)
                    .map(|k| run_trial(&template.for_cell(s0, m, trial_seed(master_seed, s0, m, k))))
                    .collect();
                cells.push(PhaseCell::from_trials(s0, m, &outcomes)?);
            }
        }
        PhaseDiagram::assemble(s0_values, m_values, cells)
    }
}

impl TrialSpec {
    pub fn for_cell(&self, s0: usize, m: usize, seed: u64) -> TrialSpec {
        TrialSpec {
            s0,
            m,
            seed,
            ..self.clone()
        }
    }
}
