//! Text grids and gnuplot matrices from a sweep CSV.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{usage, CliError, Result};
use crate::sweep::SWEEP_HEADER;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub s0: usize,
    pub m: usize,
    pub prob_sparse: f64,
    pub prob_lowrank: f64,
    pub trials: usize,
}

/// Parses a sweep CSV. Errors carry the 1-based line number.
pub fn parse_sweep(text: &str) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| usage!("line 1: {}", e))?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(SWEEP_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| usage!("line 1: missing column '{}'", name))?;
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            usage!("line {}: {}", line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(idx[k]).unwrap_or("").trim();
        let int = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|_| usage!("line {}: column '{}' is not an integer: '{}'", line, SWEEP_HEADER[k], field(k)))
        };
        let prob = |k: usize| {
            field(k)
                .parse::<f64>()
                .ok()
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| usage!("line {}: column '{}' is not a probability: '{}'", line, SWEEP_HEADER[k], field(k)))
        };
        rows.push(SweepRow {
            s0: int(0)?,
            m: int(1)?,
            prob_sparse: prob(2)?,
            prob_lowrank: prob(3)?,
            trials: int(4)?,
        });
    }
    if rows.is_empty() {
        return Err(usage!("sweep CSV has no data rows"));
    }
    Ok(rows)
}

/// Dense grid: rows are `s0` ascending, columns `m` ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub s0: Vec<usize>,
    pub m: Vec<usize>,
    pub sparse: Vec<Vec<Option<f64>>>,
    pub lowrank: Vec<Vec<Option<f64>>>,
}

pub fn to_grid(rows: &[SweepRow]) -> Grid {
    let s0: Vec<usize> = rows.iter().map(|r| r.s0).collect::<BTreeSet<_>>().into_iter().collect();
    let m: Vec<usize> = rows.iter().map(|r| r.m).collect::<BTreeSet<_>>().into_iter().collect();
    let mut sparse = vec![vec![None; m.len()]; s0.len()];
    let mut lowrank = sparse.clone();
    for r in rows {
        let i = s0.binary_search(&r.s0).unwrap();
        let j = m.binary_search(&r.m).unwrap();
        sparse[i][j] = Some(r.prob_sparse);
        lowrank[i][j] = Some(r.prob_lowrank);
    }
    Grid { s0, m, sparse, lowrank }
}

fn render_one(out: &mut String, title: &str, grid: &Grid, values: &[Vec<Option<f64>>]) {
    let _ = writeln!(out, "{}", title);
    let _ = write!(out, "{:>6}", "s0\\m");
    for m in &grid.m {
        let _ = write!(out, " {:>6}", m);
    }
    out.push('\n');
    for (s0, row) in grid.s0.iter().zip(values) {
        let _ = write!(out, "{:>6}", s0);
        for v in row {
            match v {
                Some(p) => {
                    let _ = write!(out, " {:>6.2}", p);
                }
                None => {
                    let _ = write!(out, " {:>6}", "-");
                }
            }
        }
        out.push('\n');
    }
}

pub fn render(grid: &Grid) -> String {
    let mut out = String::new();
    render_one(&mut out, "P(success) sparse", grid, &grid.sparse);
    out.push('\n');
    render_one(&mut out, "P(success) low-rank", grid, &grid.lowrank);
    out
}

/// gnuplot `nonuniform matrix` text: first line `N m_1 … m_N`, then one
/// line per `s0` with its values. Missing cells are written as `NaN`.
pub fn gnuplot_matrix(grid: &Grid, values: &[Vec<Option<f64>>]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{}", grid.m.len());
    for m in &grid.m {
        let _ = write!(out, " {}", m);
    }
    out.push('\n');
    for (s0, row) in grid.s0.iter().zip(values) {
        let _ = write!(out, "{}", s0);
        for v in row {
            match v {
                Some(p) => {
                    let _ = write!(out, " {:.2}", p);
                }
                None => out.push_str(" NaN"),
            }
        }
        out.push('\n');
    }
    out
}

/// Reads `csv_path`, returns the text grids and, with `out_dir`, writes
/// `sparse.dat` and `lowrank.dat` there.
pub fn cmd_report(csv_path: &Path, out_dir: Option<&Path>) -> Result<(String, Vec<PathBuf>)> {
    let text = std::fs::read_to_string(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    let rows = parse_sweep(&text).map_err(|e| usage!("{}: {}", csv_path.display(), e))?;
    let grid = to_grid(&rows);
    let mut written = Vec::new();
    if let Some(dir) = out_dir {
        crate::commands::ensure_dir(dir)?;
        for (name, values) in [("sparse.dat", &grid.sparse), ("lowrank.dat", &grid.lowrank)] {
            let path = dir.join(name);
            std::fs::write(&path, gnuplot_matrix(&grid, values)).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
        }
    }
    Ok((render(&grid), written))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_grid() {
        let rows = parse_sweep("s0,m,prob_sparse,prob_lowrank,trials\n8,32,0.956,1,20\n").unwrap();
        let grid = to_grid(&rows);
        assert_eq!((grid.s0.len(), grid.m.len()), (1, 1));
        let text = render(&grid);
        assert!(text.contains("0.96") && text.contains("1.00"), "{text}");
        assert_eq!(gnuplot_matrix(&grid, &grid.sparse), "1 32\n8 0.96\n");
    }

    #[test]
    fn errors_name_column_and_line() {
        let e = parse_sweep("s0,m,prob_sparse,trials\n8,32,0.5,20\n").unwrap_err();
        assert!(e.to_string().contains("prob_lowrank"), "{e}");
        let e = parse_sweep("s0,m,prob_sparse,prob_lowrank,trials\n8,32,0.5,1,20\n8,x,0.5,1,20\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = parse_sweep("s0,m,prob_sparse,prob_lowrank,trials\n8,32,1.5,1,20\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }
}
