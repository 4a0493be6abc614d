//! Exact rational linear algebra for small dense systems.

use num_traits::{One, Zero};

use crate::stochpoly::Q;

/// Failure of [`solve`]: the columns that received no pivot, or an
/// inconsistent row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveError {
    Singular { free_columns: Vec<usize> },
    Inconsistent { row: usize },
}

/// Solves `a x = b` by Gauss-Jordan elimination. `a` may have more rows than
/// columns as long as the extra equations are consistent.
pub fn solve(a: &[Vec<Q>], b: &[Q]) -> Result<Vec<Q>, SolveError> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut m: Vec<Vec<Q>> = a
        .iter()
        .zip(b)
        .map(|(r, v)| {
            let mut r = r.clone();
            r.push(v.clone());
            r
        })
        .collect();
    let mut pivots = Vec::new();
    let mut free = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            free.push(c);
            continue;
        };
        m.swap(r, p);
        let inv = Q::one() / &m[r][c];
        for v in m[r].iter_mut() {
            *v *= &inv;
        }
        let pivot = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let f = row[c].clone();
                for (x, pv) in row[c..].iter_mut().zip(&pivot[c..]) {
                    *x -= &f * pv;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    if !free.is_empty() {
        return Err(SolveError::Singular { free_columns: free });
    }
    if let Some(row) = (r..rows).find(|&i| !m[i][cols].is_zero()) {
        return Err(SolveError::Inconsistent { row });
    }
    let mut x = vec![Q::zero(); cols];
    for (i, &c) in pivots.iter().enumerate() {
        x[c] = m[i][cols].clone();
    }
    Ok(x)
}

/// Inverse of a square matrix, or None if singular.
pub fn inverse(a: &[Vec<Q>]) -> Option<Vec<Vec<Q>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let e: Vec<Q> = (0..n).map(|i| if i == j { Q::one() } else { Q::zero() }).collect();
        cols.push(solve(a, &e).ok()?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i].clone()).collect()).collect())
}
