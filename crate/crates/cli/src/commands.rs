//! `gen` and `run`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use coda_core::linalg::{distance, norm2};
use coda_core::synth::{gen_sensing, train_state, trial_seed, StreamParams, SyntheticStream};
use coda_core::{decompose_frame, gen_stream};

use crate::config::ExperimentConfig;
use crate::dataset;
use crate::error::{usage, CliError, Result};

pub const RUN_HEADER: [&str; 6] = [
    "frame_index",
    "iterations",
    "converged",
    "rel_err_sparse",
    "rel_err_lowrank",
    "wall_time_ms",
];

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn dataset_path(dir: &Path, s0: usize) -> PathBuf {
    dir.join(format!("stream_s0_{}.coda", s0))
}

/// Stream seed for sparsity `s0` under `master`.
pub fn stream_seed(master: u64, s0: usize) -> u64 {
    trial_seed(master, s0, 0, 0)
}

/// Writes one dataset per `s0` in the grid and returns the paths.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    ensure_dir(&cfg.output_dir)?;
    let d = &cfg.data;
    let mut written = Vec::new();
    for &s0 in &d.s0 {
        let stream = gen_stream(StreamParams {
            n: d.n,
            r: d.r,
            d: d.d,
            q: d.q,
            s0,
            seed: stream_seed(d.master_seed, s0),
        })?;
        let path = dataset_path(&cfg.output_dir, s0);
        dataset::save(&path, &stream)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub iterations: usize,
    pub converged: bool,
    pub rel_err_sparse: f64,
    pub rel_err_lowrank: f64,
    pub wall_time_ms: f64,
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

/// Trains on the first `d` columns of `stream` and decomposes the rest
/// from `m` compressive measurements each.
pub fn run_stream(cfg: &ExperimentConfig, stream: &SyntheticStream, m: usize) -> Result<Vec<FrameRecord>> {
    let p = &stream.params;
    if p.n != cfg.data.n || p.d != cfg.data.d {
        return Err(usage!(
            "dataset has n = {}, d = {} but the configuration expects n = {}, d = {}",
            p.n,
            p.d,
            cfg.data.n,
            cfg.data.d
        ));
    }
    if m == 0 || m > p.n {
        return Err(usage!("m = {} must lie in 1..={}", m, p.n));
    }
    let phi = gen_sensing(m, p.n, trial_seed(p.seed, p.s0, m, 1))?;
    let observed = stream.low_rank.add(&stream.sparse)?;
    let mut state = train_state(&observed.columns_range(0, p.d), cfg.solver.priors, &cfg.pcp)?;
    let mut records = Vec::with_capacity(p.q);
    for t in p.d..p.d + p.q {
        let start = Instant::now();
        let y = phi.mul_vec(&observed.column(t))?;
        let (res, next) = decompose_frame(&y, &phi, &state, &cfg.solver)?;
        let wall = start.elapsed().as_secs_f64() * 1e3;
        records.push(FrameRecord {
            frame_index: t - p.d,
            iterations: res.iterations,
            converged: res.converged,
            rel_err_sparse: relative_error(&res.x_hat, &stream.sparse.column(t)),
            rel_err_lowrank: relative_error(&res.v_hat, &stream.low_rank.column(t)),
            wall_time_ms: wall,
        });
        state = next;
    }
    Ok(records)
}

pub fn write_run_csv(out: impl Write, records: &[FrameRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let err = |e: csv::Error| usage!("writing run CSV: {}", e);
    w.write_record(RUN_HEADER).map_err(err)?;
    for r in records {
        w.write_record([
            r.frame_index.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.rel_err_sparse.to_string(),
            r.rel_err_lowrank.to_string(),
            format!("{:.3}", r.wall_time_ms),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| usage!("writing run CSV: {}", e))
}

/// Runs `dataset` with `m` measurements (default: the largest grid value)
/// and writes `<stem>_m<m>.csv` to the output directory.
pub fn cmd_run(cfg: &ExperimentConfig, dataset_file: &Path, m: Option<usize>) -> Result<PathBuf> {
    let stream = dataset::load(dataset_file)?;
    let m = m.unwrap_or_else(|| *cfg.data.m.last().expect("validated nonempty"));
    let records = run_stream(cfg, &stream, m)?;
    ensure_dir(&cfg.output_dir)?;
    let stem = dataset_file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let path = cfg.output_dir.join(format!("{}_m{}.csv", stem, m));
    let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_run_csv(std::io::BufWriter::new(file), &records)?;
    Ok(path)
}
