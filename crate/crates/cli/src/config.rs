//! Experiment configuration.
//!
//! A TOML file with a `schema_version` key and optional `[data]`,
//! `[solver]`, `[pcp]` and `[output]` tables. Missing keys take the
//! defaults of the selected profile; unknown keys are rejected.
//!
//! ```toml
//! schema_version = 1
//! profile = "desk"
//!
//! [data]
//! s0 = [8, 16]
//! m_ratio = [0.4, 0.6]
//! trials = 5
//!
//! [solver]
//! clusters = 7
//! ```

use std::path::{Path, PathBuf};

use coda_core::{PcpConfig, SolverConfig};
use serde::Deserialize;

use crate::error::{usage, CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// n = 500, r = 5, d = q = 100, 50 trials per cell.
    Paper,
    /// n = 128, r = 3, d = 40, q = 20, 20 trials per cell.
    Desk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub q: usize,
    pub s0: Vec<usize>,
    /// Measurement counts, ascending.
    pub m: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub data: DataConfig,
    pub solver: SolverConfig,
    pub pcp: PcpConfig,
    pub threshold: f64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    profile: Option<Profile>,
    #[serde(default)]
    data: RawData,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    pcp: RawPcp,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    n: Option<usize>,
    r: Option<usize>,
    d: Option<usize>,
    q: Option<usize>,
    s0: Option<Vec<usize>>,
    m: Option<Vec<usize>>,
    m_ratio: Option<Vec<f64>>,
    trials: Option<usize>,
    master_seed: Option<u64>,
    threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    lambda: Option<f64>,
    mu_bar: Option<f64>,
    mu0: Option<f64>,
    epsilon_mu: Option<f64>,
    epsilon_weights: Option<f64>,
    clusters: Option<usize>,
    priors: Option<usize>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    cluster_stride: Option<usize>,
    track_objective: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPcp {
    lambda: Option<f64>,
    decay: Option<f64>,
    floor_ratio: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(profile: Profile) -> Self {
        let (n, r, d, q, s0, ratios, trials): (usize, usize, usize, usize, Vec<usize>, Vec<f64>, usize) =
            match profile {
                Profile::Paper => (
                    500,
                    5,
                    100,
                    100,
                    (1..=11).map(|k| 10 * k).collect(),
                    (1..=10).map(|k| k as f64 / 10.0).collect(),
                    50,
                ),
                Profile::Desk => (128, 3, 40, 20, vec![8, 16, 24, 32], vec![0.25, 0.4, 0.6], 20),
            };
        ExperimentConfig {
            profile,
            data: DataConfig {
                n,
                r,
                d,
                q,
                s0,
                m: ratios.iter().map(|f| ratio_to_count(*f, n)).collect(),
                trials,
                master_seed: 0,
            },
            solver: SolverConfig {
                subspace_dim: d,
                track_objective: false,
                ..SolverConfig::default()
            },
            pcp: PcpConfig::default(),
            threshold: coda_core::synth::SUCCESS_THRESHOLD,
            output_dir: PathBuf::from("out"),
        }
    }

    /// Reads `path` (if any) on top of the profile defaults and applies
    /// the command-line overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let raw = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                parse_raw(&text).map_err(|e| usage!("{}: {}", p.display(), e))?
            }
            None => RawConfig {
                schema_version: SCHEMA_VERSION,
                ..RawConfig::default()
            },
        };
        let cfg = resolve(raw, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str, overrides: &Overrides) -> Result<Self> {
        let raw = parse_raw(text).map_err(CliError::Usage)?;
        let cfg = resolve(raw, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.n == 0 || d.d == 0 {
            return Err(usage!("n and d must be positive"));
        }
        if d.r == 0 || d.r > d.n.min(d.d + d.q) {
            return Err(usage!("rank r = {} must lie in 1..={}", d.r, d.n.min(d.d + d.q)));
        }
        if d.s0.is_empty() || d.m.is_empty() {
            return Err(usage!("s0 and m grids must be nonempty"));
        }
        if let Some(s) = d.s0.iter().find(|s| **s == 0 || **s % 2 == 1 || **s > d.n) {
            return Err(usage!("s0 = {} must be even and in 2..={}", s, d.n));
        }
        if let Some(m) = d.m.iter().find(|m| **m == 0 || **m > d.n) {
            return Err(usage!("m = {} must lie in 1..={}", m, d.n));
        }
        if d.trials == 0 {
            return Err(usage!("trials must be at least 1"));
        }
        if !(self.threshold > 0.0) {
            return Err(usage!("threshold must be positive"));
        }
        if self.solver.clusters > d.n {
            return Err(usage!("{} clusters exceed dimension {}", self.solver.clusters, d.n));
        }
        self.solver.validate()?;
        if !(self.pcp.decay > 0.0 && self.pcp.decay < 1.0)
            || !(self.pcp.tol > 0.0)
            || !(self.pcp.floor_ratio > 0.0)
            || self.pcp.max_iter == 0
            || self.pcp.lambda.is_some_and(|l| !(l > 0.0))
        {
            return Err(usage!("pcp settings out of range: {:?}", self.pcp));
        }
        Ok(())
    }
}

pub fn ratio_to_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round() as usize
}

fn parse_raw(text: &str) -> std::result::Result<RawConfig, String> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "unsupported schema_version {} (expected {})",
            raw.schema_version, SCHEMA_VERSION
        ));
    }
    Ok(raw)
}

fn resolve(raw: RawConfig, overrides: &Overrides) -> Result<ExperimentConfig> {
    let profile = overrides.profile.or(raw.profile).unwrap_or(Profile::Desk);
    let mut cfg = ExperimentConfig::defaults(profile);
    let RawConfig {
        data,
        solver,
        pcp,
        output,
        ..
    } = raw;

    let dc = &mut cfg.data;
    let n_changed = data.n.is_some_and(|n| n != dc.n);
    macro_rules! take {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    take!(dc.n, data.n);
    take!(dc.r, data.r);
    take!(dc.d, data.d);
    take!(dc.q, data.q);
    take!(dc.s0, data.s0);
    take!(dc.trials, data.trials);
    take!(dc.master_seed, data.master_seed);
    take!(cfg.threshold, data.threshold);
    match (data.m, data.m_ratio) {
        (Some(_), Some(_)) => return Err(usage!("give either data.m or data.m_ratio, not both")),
        (Some(m), None) => dc.m = m,
        (None, Some(ratios)) => {
            if let Some(f) = ratios.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
                return Err(usage!("m_ratio {} must lie in (0, 1]", f));
            }
            dc.m = ratios.iter().map(|f| ratio_to_count(*f, dc.n)).collect();
        }
        (None, None) if n_changed => {
            let default_n = ExperimentConfig::defaults(profile).data.n;
            dc.m = dc
                .m
                .iter()
                .map(|m| ratio_to_count(*m as f64 / default_n as f64, dc.n))
                .collect();
        }
        (None, None) => {}
    }
    dc.m.sort_unstable();
    dc.m.dedup();
    let mut sorted = dc.s0.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != dc.s0.len() {
        return Err(usage!("s0 values must be distinct"));
    }
    dc.s0 = sorted;

    let sc = &mut cfg.solver;
    sc.subspace_dim = dc.d;
    if solver.lambda.is_some() {
        sc.lambda = solver.lambda;
    }
    if solver.mu0.is_some() {
        sc.mu0 = solver.mu0;
    }
    take!(sc.mu_bar, solver.mu_bar);
    take!(sc.epsilon_mu, solver.epsilon_mu);
    take!(sc.epsilon_weights, solver.epsilon_weights);
    take!(sc.clusters, solver.clusters);
    take!(sc.priors, solver.priors);
    take!(sc.max_iter, solver.max_iter);
    take!(sc.tol, solver.tol);
    take!(sc.cluster_stride, solver.cluster_stride);
    take!(sc.track_objective, solver.track_objective);

    let pc = &mut cfg.pcp;
    if pcp.lambda.is_some() {
        pc.lambda = pcp.lambda;
    }
    take!(pc.decay, pcp.decay);
    take!(pc.floor_ratio, pcp.floor_ratio);
    take!(pc.tol, pcp.tol);
    take!(pc.max_iter, pcp.max_iter);

    take!(cfg.output_dir, output.dir);
    if let Some(seed) = overrides.seed {
        cfg.data.master_seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}
