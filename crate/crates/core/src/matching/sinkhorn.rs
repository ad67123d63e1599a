//! Log-domain Sinkhorn normalization and its reverse-mode derivative.
//!
//! The kernel is `exp(Â / τ)`. One iteration normalizes rows, then columns,
//! each as a log-sum-exp subtraction. The unrolled variant records every
//! normalized iterate so the backward pass can retrace it exactly.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    pub temperature: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Doubly-stochastic `N1 × N1` matrix; the leading `n_real_cols` columns
/// belong to real S-graph nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftAssignment {
    pub values: Matrix,
    pub n_real_cols: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl SoftAssignment {
    /// The `N1 × n_real_cols` block scored by the Hungarian decoder.
    pub fn real_block(&self) -> Matrix {
        self.values.leading_cols(self.n_real_cols)
    }

    /// Largest deviation of any row or column sum from 1.
    pub fn marginal_error(&self) -> f64 {
        marginal_error(&self.values)
    }
}

pub fn marginal_error(m: &Matrix) -> f64 {
    m.row_sums()
        .into_iter()
        .chain(m.col_sums())
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Iterates recorded by an unrolled run, needed by [`sinkhorn_backward`].
#[derive(Clone, Debug)]
pub struct SinkhornTrace {
    temperature: f64,
    /// Log-matrix after each normalization (row, col, row, col, ...).
    steps: Vec<Matrix>,
    early_exit: bool,
}

impl SinkhornTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len() / 2
    }
}

fn check_input(a_hat: &Matrix, temperature: f64) -> Result<()> {
    if a_hat.rows() != a_hat.cols() {
        return Err(Error::Shape(format!("Sinkhorn needs a square matrix, got {:?}", a_hat.shape())));
    }
    if !a_hat.is_finite() {
        return Err(Error::NonFinite("Sinkhorn input".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidInput("Sinkhorn temperature must be positive".into()));
    }
    Ok(())
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn normalize_rows(log: &mut Matrix) {
    for i in 0..log.rows() {
        let row = log.row_mut(i);
        let lse = log_sum_exp(row.iter().copied());
        row.iter_mut().for_each(|v| *v -= lse);
    }
}

fn normalize_cols(log: &mut Matrix) {
    let n = log.rows();
    for j in 0..log.cols() {
        let lse = log_sum_exp((0..n).map(|i| log[(i, j)]));
        for i in 0..n {
            log[(i, j)] -= lse;
        }
    }
}

fn exp_matrix(log: &Matrix) -> Matrix {
    let mut s = log.clone();
    s.as_mut_slice().iter_mut().for_each(|v| *v = v.exp().min(1.0));
    s
}

fn run(a_hat: &Matrix, temperature: f64, max_iters: usize, tol: Option<f64>, record: bool) -> (Matrix, usize, bool, Vec<Matrix>) {
    let mut log = a_hat.clone();
    log.scale(1.0 / temperature);
    let mut steps = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    while iters < max_iters {
        normalize_rows(&mut log);
        if record {
            steps.push(log.clone());
        }
        normalize_cols(&mut log);
        if record {
            steps.push(log.clone());
        }
        iters += 1;
        if let Some(tol) = tol {
            if marginal_error(&exp_matrix(&log)) < tol {
                converged = true;
                break;
            }
        }
    }
    (exp_matrix(&log), iters, converged, steps)
}

/// Iterates until every row and column sum is within `tol` of 1 or
/// `max_iters` is reached.
pub fn sinkhorn(a_hat: &Matrix, n_real_cols: usize, config: &SinkhornConfig) -> Result<SoftAssignment> {
    Ok(sinkhorn_traced(a_hat, n_real_cols, config)?.0)
}

/// Convergence-checked run that also records its iterates. The trace is not
/// differentiable when the run stopped early.
pub fn sinkhorn_traced(a_hat: &Matrix, n_real_cols: usize, config: &SinkhornConfig) -> Result<(SoftAssignment, SinkhornTrace)> {
    check_input(a_hat, config.temperature)?;
    let (values, iterations, converged, steps) = run(a_hat, config.temperature, config.max_iters, Some(config.tol), true);
    let trace = SinkhornTrace {
        temperature: config.temperature,
        steps,
        early_exit: iterations < config.max_iters,
    };
    let soft = SoftAssignment {
        values,
        n_real_cols,
        iterations,
        converged,
    };
    Ok((soft, trace))
}

/// Exactly `iters` iterations with no convergence test: a static
/// computation graph suitable for [`sinkhorn_backward`].
pub fn sinkhorn_unrolled(a_hat: &Matrix, temperature: f64, iters: usize) -> Result<(Matrix, SinkhornTrace)> {
    check_input(a_hat, temperature)?;
    let (values, _, _, steps) = run(a_hat, temperature, iters, None, true);
    Ok((
        values,
        SinkhornTrace {
            temperature,
            steps,
            early_exit: false,
        },
    ))
}

/// Gradient with respect to `Â` of `⟨d_out, S⟩`.
pub fn sinkhorn_backward(trace: &SinkhornTrace, d_out: &Matrix) -> Result<Matrix> {
    if trace.early_exit {
        return Err(Error::Unsupported(
            "Sinkhorn stopped on convergence; only fixed unrolls are differentiable".into(),
        ));
    }
    let Some(last) = trace.steps.last() else {
        // zero iterations: S = exp(Â/τ)
        return Err(Error::Unsupported("Sinkhorn trace has no iterations".into()));
    };
    if d_out.shape() != last.shape() {
        return Err(Error::Shape("Sinkhorn upstream gradient shape".into()));
    }
    let n = last.rows();

    // S = exp(L_final); the clamp at 1 is inactive for normalized logs
    let mut grad = d_out.clone();
    for (g, l) in grad.as_mut_slice().iter_mut().zip(last.as_slice()) {
        *g *= l.exp();
    }

    for (k, y) in trace.steps.iter().enumerate().rev() {
        let row_step = k % 2 == 0;
        if row_step {
            for i in 0..n {
                let s: f64 = grad.row(i).iter().sum();
                let yr = y.row(i);
                for (g, &yv) in grad.row_mut(i).iter_mut().zip(yr) {
                    *g -= yv.exp() * s;
                }
            }
        } else {
            let sums = grad.col_sums();
            for i in 0..n {
                let yr = y.row(i);
                for ((g, &yv), s) in grad.row_mut(i).iter_mut().zip(yr).zip(&sums) {
                    *g -= yv.exp() * s;
                }
            }
        }
    }
    grad.scale(1.0 / trace.temperature);
    Ok(grad)
}
