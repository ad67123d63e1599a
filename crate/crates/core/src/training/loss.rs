use crate::datagen::GroundTruth;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

/// `N1 × N2` binary matrix with a 1 at `(a, s)` for every ground-truth pair.
pub fn build_gt_matrix(gt: &GroundTruth, n1: usize, n2: usize) -> Result<Matrix> {
    if gt.len() != n2 {
        return Err(Error::InvalidInput(format!(
            "ground truth has {} entries for {n2} S-graph nodes",
            gt.len()
        )));
    }
    let mut p = Matrix::zeros(n1, n2);
    for (s, a) in gt.pairs() {
        if a >= n1 {
            return Err(Error::InvalidInput(format!("ground truth maps {s} to missing A-node {a}")));
        }
        if p.row(a).iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidInput(format!("A-node {a} matched twice")));
        }
        p[(a, s)] = 1.0;
    }
    Ok(p)
}

fn check_shapes(s: &Matrix, p: &Matrix) -> Result<()> {
    if s.shape() != p.shape() {
        return Err(Error::Shape(format!(
            "scores {:?} vs ground truth {:?}",
            s.shape(),
            p.shape()
        )));
    }
    if s.is_empty() {
        return Err(Error::Shape("empty score matrix".into()));
    }
    Ok(())
}

/// Element-wise binary cross-entropy averaged over every entry.
pub fn permutation_loss(s: &Matrix, p: &Matrix) -> Result<f64> {
    check_shapes(s, p)?;
    let total: f64 = s
        .as_slice()
        .iter()
        .zip(p.as_slice())
        .map(|(&s, &p)| {
            let s = s.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(p * s.ln() + (1.0 - p) * (1.0 - s).ln())
        })
        .sum();
    Ok(total / s.len() as f64)
}

/// Gradient of [`permutation_loss`] with respect to `s`; zero wherever the
/// clamp is active.
pub fn loss_backward(s: &Matrix, p: &Matrix) -> Result<Matrix> {
    check_shapes(s, p)?;
    let n = s.len() as f64;
    let mut g = s.clone();
    for (g, &p) in g.as_mut_slice().iter_mut().zip(p.as_slice()) {
        let s = *g;
        *g = if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&s) {
            (s - p) / (s * (1.0 - s)) / n
        } else {
            0.0
        };
    }
    Ok(g)
}
