//! Online decomposition of compressively sensed streaming vectors into a
//! sparse part and a low-rank part.
//!
//! Each incoming measurement vector `y = Φ(x + v)` is split into a sparse
//! vector `x`, guided by the most recently recovered sparse vectors, and a
//! vector `v` that stays close to the column space of a low-rank prior
//! matrix. The sparse step uses a cluster-weighted multi-prior ℓ1 proximal
//! operator whose weights are re-estimated at every iteration.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line front end and parallel sweeps live in the companion `coda` crate.
//!
//! Module map:
//!
//! - [`linalg`]: dense containers, one-sided Jacobi SVD, incremental SVD,
//!   singular value thresholding and soft thresholding.
//! - [`prox`]: prior sets, weight state and the weighted multi-prior ℓ1 prox.
//! - [`weights`]: 1-D k-means partitions and the three-level weight updates.
//! - [`solver`]: the per-frame decomposition engine and prior updates.
//! - [`pcp`]: batch principal component pursuit used to build the first
//!   low-rank prior.
//! - [`synth`]: synthetic streams, sensing matrices, success metrics and
//!   single-trial evaluation for phase diagrams.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod linalg;
pub mod pcp;
pub mod prox;
pub mod solver;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};
pub use linalg::{full_svd, inc_svd, soft_threshold, svt, DenseMatrix, DenseVector, SvdFactors};
pub use pcp::{pcp_decompose, PcpConfig, PcpResult};
pub use prox::{eval_g, prox_weighted_multi_l1, PriorSet, WeightState};
pub use solver::{
    decompose_baseline_corpca, decompose_frame, eval_objective, update_priors,
    DecompositionResult, SolverConfig, StreamState,
};
pub use synth::{
    gen_sensing, gen_stream, success_probability, PhaseCell, PhaseDiagram, StreamParams,
    SyntheticStream,
};
pub use weights::{kmeans_1d, update_beta, update_gamma, update_w, ClusterPartition};
