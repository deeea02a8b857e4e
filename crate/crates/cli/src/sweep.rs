//! Parallel phase-diagram sweeps.
//!
//! Every (cell, trial) pair is an independent task seeded from its
//! coordinates, and results are regrouped by coordinates afterwards, so the
//! output does not depend on the thread count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use coda_core::synth::{run_trial, trial_seed, TrialOutcome, TrialSpec};
use coda_core::{PhaseCell, PhaseDiagram};
use rayon::prelude::*;

use crate::commands::ensure_dir;
use crate::config::ExperimentConfig;
use crate::error::{usage, CliError, Result};

pub const SWEEP_HEADER: [&str; 5] = ["s0", "m", "prob_sparse", "prob_lowrank", "trials"];

pub fn template(cfg: &ExperimentConfig) -> TrialSpec {
    TrialSpec {
        n: cfg.data.n,
        r: cfg.data.r,
        d: cfg.data.d,
        q: cfg.data.q,
        s0: 0,
        m: 0,
        seed: 0,
        solver: cfg.solver.clone(),
        pcp: cfg.pcp.clone(),
        threshold: cfg.threshold,
    }
}

/// Runs `trials` trials in every `(s0, m)` cell on `jobs` threads and
/// returns the per-trial outcomes grouped by cell in grid order.
pub fn sweep_outcomes(
    cfg: &ExperimentConfig,
    s0_values: &[usize],
    m_values: &[usize],
    jobs: usize,
) -> Result<Vec<((usize, usize), Vec<coda_core::Result<TrialOutcome>>)>> {
    let base = template(cfg);
    let trials = cfg.data.trials;
    let tasks: Vec<(usize, usize, usize)> = s0_values
        .iter()
        .flat_map(|&s0| m_values.iter().flat_map(move |&m| (0..trials).map(move |k| (s0, m, k))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| usage!("cannot start {} worker threads: {}", jobs, e))?;
    let master = cfg.data.master_seed;
    let results: Vec<coda_core::Result<TrialOutcome>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s0, m, k)| run_trial(&base.for_cell(s0, m, trial_seed(master, s0, m, k))))
            .collect()
    });
    let mut grouped = Vec::new();
    let mut it = results.into_iter();
    for &s0 in s0_values {
        for &m in m_values {
            grouped.push(((s0, m), it.by_ref().take(trials).collect()));
        }
    }
    Ok(grouped)
}

pub fn sweep_diagram(cfg: &ExperimentConfig, jobs: usize) -> Result<PhaseDiagram> {
    let grouped = sweep_outcomes(cfg, &cfg.data.s0, &cfg.data.m, jobs)?;
    let mut cells = Vec::with_capacity(grouped.len());
    for ((s0, m), outcomes) in &grouped {
        for e in outcomes.iter().filter_map(|o| o.as_ref().err()) {
            eprintln!("warning: trial in cell s0={} m={} failed: {}", s0, m, e);
        }
        cells.push(PhaseCell::from_trials(*s0, *m, outcomes)?);
    }
    Ok(PhaseDiagram::assemble(cfg.data.s0.clone(), cfg.data.m.clone(), cells)?)
}

pub fn write_sweep_csv(out: impl Write, diagram: &PhaseDiagram) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let err = |e: csv::Error| usage!("writing sweep CSV: {}", e);
    w.write_record(SWEEP_HEADER).map_err(err)?;
    for c in &diagram.cells {
        w.write_record([
            c.s0.to_string(),
            c.m.to_string(),
            c.prob_sparse.to_string(),
            c.prob_lowrank.to_string(),
            c.trials.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| usage!("writing sweep CSV: {}", e))
}

pub fn sweep_path(dir: &Path) -> PathBuf {
    dir.join("sweep.csv")
}

pub fn cmd_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<PathBuf> {
    let diagram = sweep_diagram(cfg, jobs)?;
    ensure_dir(&cfg.output_dir)?;
    let path = sweep_path(&cfg.output_dir);
    let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_sweep_csv(std::io::BufWriter::new(file), &diagram)?;
    Ok(path)
}
