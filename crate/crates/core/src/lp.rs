//! Dense primal simplex for small linear programs
//! `max cᵀx  s.t.  Ax ≤ b, x ≥ 0` with `b ≥ 0` (so the origin is feasible).
//!
//! Pivoting follows Bland's rule, which rules out cycling on degenerate
//! vertices. Intended for the few-hundred-constraint programs that arise from
//! commutative state distances.

use crate::error::{bail, Result};

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        bail!(Structure, "LP data has inconsistent shapes");
    }
    if let Some(i) = b.iter().position(|&v| v < 0.0) {
        bail!(Domain, "right-hand side {i} is negative; origin is not feasible");
    }
    // Tableau columns: n structural, m slack, then the right-hand side.
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let max_pivots = 100 * (n + m + 10);
    for _ in 0..max_pivots {
        let Some(enter) = (0..n + m).find(|&j| t[m][j] < -EPS) else {
            let mut x = vec![0.0; n];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    x[bv] = t[i][width - 1];
                }
            }
            return Ok(LpSolution {
                value: t[m][width - 1],
                x,
            });
        };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > EPS {
                let ratio = t[i][width - 1] / t[i][enter];
                let better = ratio < best_ratio - EPS
                    || ((ratio - best_ratio).abs() <= EPS && leave.is_some_and(|l| basis[i] < basis[l]));
                if leave.is_none() || better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(r) = leave else {
            bail!(Numeric, "linear program is unbounded");
        };
        let pivot = t[r][enter];
        for v in t[r].iter_mut() {
            *v /= pivot;
        }
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[enter] != 0.0 {
                let f = row[enter];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        basis[r] = enter;
    }
    bail!(Numeric, "simplex did not terminate within {max_pivots} pivots")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Enumerates all vertices of a 2-variable polytope by intersecting pairs
    /// of constraint lines (including the axes).
    fn vertex_enumeration(c: &[f64; 2], a: &[[f64; 2]], b: &[f64]) -> f64 {
        let mut lines: Vec<([f64; 2], f64)> = a.iter().copied().zip(b.iter().copied()).collect();
        lines.push(([-1.0, 0.0], 0.0));
        lines.push(([0.0, -1.0], 0.0));
        let mut best = f64::NEG_INFINITY;
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (p, q) = (lines[i], lines[j]);
                let det = p.0[0] * q.0[1] - p.0[1] * q.0[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (p.1 * q.0[1] - p.0[1] * q.1) / det;
                let y = (p.0[0] * q.1 - p.1 * q.0[0]) / det;
                if lines.iter().all(|(r, s)| r[0] * x + r[1] * y <= s + 1e-9) {
                    best = best.max(c[0] * x + c[1] * y);
                }
            }
        }
        best
    }

    #[test]
    fn textbook_program() {
        let sol = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        )
        .unwrap();
        assert!((sol.value - 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_vertex_enumeration() {
        type Case = ([f64; 2], Vec<[f64; 2]>, Vec<f64>);
        let cases: Vec<Case> = vec![
            (
                [1.0, -1.0],
                vec![[1.0, -1.0], [-1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
                vec![2.0, 2.0, 4.0, 4.0],
            ),
            (
                [2.0, 1.0],
                vec![[1.0, 1.0], [1.0, 3.0], [2.0, -1.0]],
                vec![5.0, 9.0, 4.0],
            ),
            ([0.5, 0.25], vec![[1.0, 1.0], [1.0, 1.0]], vec![1.0, 1.0]),
        ];
        for (c, a, b) in cases {
            let rows: Vec<Vec<f64>> = a.iter().map(|r| r.to_vec()).collect();
            let sol = maximize(&c, &rows, &b).unwrap();
            assert!((sol.value - vertex_enumeration(&c, &a, &b)).abs() < 1e-10);
        }
    }

    #[test]
    fn unbounded_is_numeric_error() {
        let err = maximize(&[1.0], &[vec![-1.0]], &[1.0]).unwrap_err();
        assert!(matches!(err, crate::QmsError::Numeric(_)));
    }
}
