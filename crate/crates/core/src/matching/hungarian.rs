//! Rectangular maximum-weight assignment (Kuhn–Munkres with potentials).
//!
//! Scores are `N1 × N2` with A-graph nodes as rows and S-graph nodes as
//! columns, `N2 ≤ N1`. Every column is assigned a distinct row. Among all
//! optimal assignments the one whose row sequence `(a(s₀), a(s₁), …)` is
//! lexicographically smallest is returned.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `s_to_a[s]` is the A-graph row chosen for S-graph column `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub s_to_a: Vec<usize>,
    pub total: f64,
}

/// Sum of the chosen scores, accumulated in column order.
pub fn assignment_total(scores: &Matrix, s_to_a: &[usize]) -> f64 {
    s_to_a.iter().enumerate().map(|(s, &a)| scores[(a, s)]).sum()
}

struct Solution {
    /// column-to-row, as indices into the sub-problem's row list
    assign: Vec<usize>,
    total: f64,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Shortest augmenting path solver on the sub-problem `cols × rows` with
/// cost `−score`. Workers are S columns, jobs are A rows.
fn solve(scores: &Matrix, cols: &[usize], rows: &[usize]) -> Solution {
    let n = cols.len();
    let m = rows.len();
    let cost = |i: usize, j: usize| -scores[(rows[j - 1], cols[i - 1])];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = assign
        .iter()
        .enumerate()
        .map(|(i, &j)| scores[(rows[j], cols[i])])
        .sum();
    Solution { assign, total, u, v }
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Maximum-total injective assignment of columns to rows with
/// lexicographically smallest tie-breaking.
pub fn hungarian(scores: &Matrix) -> Result<Assignment> {
    let (n1, n2) = scores.shape();
    if n2 > n1 {
        return Err(Error::SizeMismatch {
            a_nodes: n1,
            s_nodes: n2,
        });
    }
    if !scores.is_finite() {
        return Err(Error::NonFinite("assignment scores".into()));
    }
    let mut s_to_a = vec![usize::MAX; n2];
    let mut cols: Vec<usize> = (0..n2).collect();
    let mut rows: Vec<usize> = (0..n1).collect();
    let mut current = solve(scores, &cols, &rows);

    // Fix columns one at a time, moving to a smaller row whenever doing so
    // keeps the optimum. Only rows on tight edges under the current duals
    // can appear in an optimal assignment, so only those are re-solved.
    while !cols.is_empty() {
        let s = cols[0];
        let chosen = current.assign[0];
        let scale = current.total.abs().max(1.0);
        let mut picked: Option<(usize, Solution)> = None;
        for j in 0..chosen {
            let reduced = -scores[(rows[j], s)] - current.u[1] - current.v[j + 1];
            if reduced > 1e-9 * scale {
                continue;
            }
            let rest_cols = &cols[1..];
            let rest_rows: Vec<usize> = rows.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &r)| r).collect();
            let sub = solve(scores, rest_cols, &rest_rows);
            if same_value(scores[(rows[j], s)] + sub.total, current.total) {
                picked = Some((j, sub));
                break;
            }
        }
        match picked {
            Some((j, sub)) => {
                s_to_a[s] = rows[j];
                rows.remove(j);
                cols.remove(0);
                current = sub;
            }
            None => {
                // Removing a matched pair keeps the rest primal/dual optimal.
                s_to_a[s] = rows[chosen];
                current.total -= scores[(rows[chosen], s)];
                current.assign.remove(0);
                for a in &mut current.assign {
                    if *a > chosen {
                        *a -= 1;
                    }
                }
                current.u.remove(1);
                current.v.remove(chosen + 1);
                rows.remove(chosen);
                cols.remove(0);
            }
        }
    }
    let total = assignment_total(scores, &s_to_a);
    Ok(Assignment { s_to_a, total })
}

/// Exhaustive enumeration of every injective column → row map; returns the
/// lexicographically first optimum. Exponential; intended for `N1 ≤ 8`.
pub fn brute_force_assignment(scores: &Matrix) -> Assignment {
    let (n1, n2) = scores.shape();
    assert!(n2 <= n1, "more columns than rows");
    let mut best = Assignment {
        s_to_a: Vec::new(),
        total: f64::NEG_INFINITY,
    };
    let mut current = Vec::with_capacity(n2);
    let mut used = vec![false; n1];
    fn recurse(scores: &Matrix, current: &mut Vec<usize>, used: &mut [bool], best: &mut Assignment) {
        let (n1, n2) = scores.shape();
        if current.len() == n2 {
            let total = assignment_total(scores, current);
            if total > best.total {
                best.total = total;
                best.s_to_a = current.clone();
            }
            return;
        }
        for a in 0..n1 {
            if !used[a] {
                used[a] = true;
                current.push(a);
                recurse(scores, current, used, best);
                current.pop();
                used[a] = false;
            }
        }
    }
    recurse(scores, &mut current, &mut used, &mut best);
    if n2 == 0 {
        best.total = 0.0;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_swap() {
        let a = hungarian(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(a.s_to_a, vec![0, 1]);
        assert_eq!(a.total, 2.0);
        let b = hungarian(&Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])).unwrap();
        assert_eq!(b.s_to_a, vec![1, 0]);
        assert_eq!(b.total, 2.0);
    }

    #[test]
    fn rectangular_and_empty() {
        let s = Matrix::from_rows(&[[0.1, 0.9], [0.8, 0.2], [0.5, 0.5]]);
        let a = hungarian(&s).unwrap();
        assert_eq!(a.s_to_a, vec![1, 0]);
        let e = hungarian(&Matrix::zeros(3, 0)).unwrap();
        assert!(e.s_to_a.is_empty());
        assert!(hungarian(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let a = hungarian(&Matrix::filled(4, 3, 1.0)).unwrap();
        assert_eq!(a.s_to_a, vec![0, 1, 2]);
        // two optima: (0→1, 1→0) and (0→0, 1→1)
        let s = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(hungarian(&s).unwrap().s_to_a, vec![0, 1]);
        let s = Matrix::from_rows(&[[0.0, 2.0], [2.0, 0.0], [1.0, 1.0]]);
        assert_eq!(hungarian(&s).unwrap().s_to_a, vec![1, 0]);
    }

    #[test]
    fn matches_brute_force_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let n1 = rng.random_range(1..=7);
            let n2 = rng.random_range(0..=n1);
            let s = Matrix::from_fn(n1, n2, |_, _| rng.random_range(-1.0..1.0));
            let h = hungarian(&s).unwrap();
            let b = brute_force_assignment(&s);
            assert_eq!(h.total, b.total);
            assert_eq!(h.s_to_a, b.s_to_a);
        }
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let n1 = rng.random_range(1..=6);
            let n2 = rng.random_range(1..=n1);
            let s = Matrix::from_fn(n1, n2, |_, _| rng.random_range(0..3) as f64);
            let h = hungarian(&s).unwrap();
            let b = brute_force_assignment(&s);
            assert_eq!(h.total, b.total, "{s:?}");
            assert_eq!(h.s_to_a, b.s_to_a, "{s:?}");
        }
    }

    #[test]
    fn row_permutation_moves_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = Matrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        let perm = [3usize, 0, 5, 1, 4, 2];
        // new row i is old row perm[i]
        let p = s.select_rows(&perm);
        let a = hungarian(&s).unwrap();
        let b = hungarian(&p).unwrap();
        for (x, y) in a.s_to_a.iter().zip(&b.s_to_a) {
            assert_eq!(*x, perm[*y]);
        }
    }
}
