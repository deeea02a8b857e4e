//! Batch principal component pursuit by accelerated proximal gradient.
//!
//! Minimises `½‖M − L − X‖²_F + μ‖L‖_* + μλ‖X‖₁` with a geometric
//! continuation on `μ`. Each step thresholds the singular values of the
//! extrapolated `L` and soft-thresholds the extrapolated `X`, both after a
//! half gradient step on the shared smooth term.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg::{full_svd, shrink, svt, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PcpConfig {
    /// Sparsity weight; `None` means `1/√max(rows, cols)`.
    pub lambda: Option<f64>,
    /// Continuation factor applied to `μ` after every iteration.
    pub decay: f64,
    /// Floor of `μ` as a fraction of `‖M‖_F`.
    pub floor_ratio: f64,
    /// Relative residual `‖M − L − X‖_F / ‖M‖_F` to stop at.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PcpConfig {
    fn default() -> Self {
        PcpConfig {
            lambda: None,
            decay: 0.9,
            floor_ratio: 1e-9,
            tol: 1e-7,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcpResult {
    pub low_rank: DenseMatrix,
    pub sparse: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// `‖M − L − X‖_F` after each iteration.
    pub residual_trace: Vec<f64>,
}

pub fn pcp_decompose(m: &DenseMatrix, cfg: &PcpConfig) -> Result<PcpResult> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows == 0 || cols == 0 {
        return Err(invalid!("PCP input is empty ({}x{})", rows, cols));
    }
    if !m.is_finite() {
        return Err(invalid!("PCP input contains non-finite entries"));
    }
    if !(cfg.decay > 0.0 && cfg.decay < 1.0) {
        return Err(invalid!("continuation factor must lie in (0, 1), got {}", cfg.decay));
    }
    let lambda = cfg
        .lambda
        .unwrap_or_else(|| 1.0 / libm::sqrt(rows.max(cols) as f64));
    if !(lambda > 0.0) {
        return Err(invalid!("PCP lambda must be positive, got {}", lambda));
    }
    let m_norm = m.frobenius_norm();
    if m_norm == 0.0 {
        return Ok(PcpResult {
            low_rank: DenseMatrix::zeros(rows, cols),
            sparse: DenseMatrix::zeros(rows, cols),
            iterations: 0,
            converged: true,
            residual_trace: Vec::new(),
        });
    }

    let floor = cfg.floor_ratio * m_norm;
    let mut mu = (0.99 * m.spectral_norm()?).max(floor);
    let mut l = DenseMatrix::zeros(rows, cols);
    let mut x = DenseMatrix::zeros(rows, cols);
    let mut l_prev = l.clone();
    let mut x_prev = x.clone();
    let (mut t_prev, mut t) = (1.0f64, 1.0f64);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..cfg.max_iter {
        iterations = k + 1;
        let beta = (t_prev - 1.0) / t;
        let yl = extrapolate(&l, &l_prev, beta);
        let yx = extrapolate(&x, &x_prev, beta);
        // half gradient step on ½‖M − L − X‖²; the joint Lipschitz constant is 2
        let mut gl = yl.clone();
        let mut gx = yx.clone();
        for i in 0..rows {
            let (mr, ylr, yxr) = (m.row(i), yl.row(i), yx.row(i));
            let glr = gl.row_mut(i);
            for j in 0..cols {
                glr[j] -= 0.5 * (ylr[j] + yxr[j] - mr[j]);
            }
            let gxr = gx.row_mut(i);
            for j in 0..cols {
                gxr[j] -= 0.5 * (ylr[j] + yxr[j] - mr[j]);
            }
        }
        let l_next = svt(&full_svd(&gl)?, 0.5 * mu)?;
        let thresh = 0.5 * mu * lambda;
        let x_next = DenseMatrix::from_fn(rows, cols, |i, j| shrink(gx.get(i, j), thresh));

        l_prev = core::mem::replace(&mut l, l_next);
        x_prev = core::mem::replace(&mut x, x_next);
        t_prev = t;
        t = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
        mu = (cfg.decay * mu).max(floor);

        let mut resid = 0.0;
        for i in 0..rows {
            for ((a, b), c) in m.row(i).iter().zip(l.row(i)).zip(x.row(i)) {
                resid += (a - b - c) * (a - b - c);
            }
        }
        let resid = libm::sqrt(resid);
        trace.push(resid);
        if resid <= cfg.tol * m_norm {
            converged = true;
            break;
        }
    }

    Ok(PcpResult {
        low_rank: l,
        sparse: x,
        iterations,
        converged,
        residual_trace: trace,
    })
}

fn extrapolate(cur: &DenseMatrix, prev: &DenseMatrix, beta: f64) -> DenseMatrix {
    if beta == 0.0 {
        return cur.clone();
    }
    DenseMatrix::from_fn(cur.rows(), cur.cols(), |i, j| {
        let c = cur.get(i, j);
        c + beta * (c - prev.get(i, j))
    })
}
