//! Minimum-cost rectangular assignment.
//!
//! Shortest-augmenting-path Hungarian method with row/column potentials,
//! O(n^3) on the padded square matrix. Among all optimal assignments the
//! lexicographically smallest one (by row, then column) is returned: once the
//! potentials are optimal, every optimal assignment lives on the tight edges,
//! so the solver walks rows in order and moves each to the smallest tight
//! column that still admits a perfect matching of the remaining rows.

use crate::error::{Error, Result};

/// Solves min-cost assignment on a `rows x cols` matrix (row-major slices).
/// Returns `min(rows, cols)` pairs `(row, col)`, sorted by row.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let rows = cost.len();
    if rows == 0 {
        return Ok(Vec::new());
    }
    let cols = cost[0].len();
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("cost matrix rows have different lengths"));
    }
    if cols == 0 {
        return Ok(Vec::new());
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix has non-finite entries"));
    }

    let n = rows.max(cols);
    let at = |i: usize, j: usize| if i < rows && j < cols { cost[i][j] } else { 0.0 };
    let scale = cost.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
    let eps = 1e-9 * (1.0 + scale);

    // 1-based potentials and matching; index 0 is the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    // 0-based: row -> col and col -> row
    let mut col_of = vec![0usize; n];
    let mut row_of = vec![0usize; n];
    for j in 1..=n {
        col_of[owner[j] - 1] = j - 1;
        row_of[j - 1] = owner[j] - 1;
    }
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| at(i, j) - u[i + 1] - v[j + 1] <= eps).collect())
        .collect();

    for i in 0..n {
        for j in 0..col_of[i] {
            if !tight[i][j] || row_of[j] < i {
                continue;
            }
            // Tentatively give column j to row i; the displaced row must reach
            // the column row i released via an alternating tight path.
            let released = col_of[i];
            let displaced = row_of[j];
            let mut trial_col = col_of.clone();
            let mut trial_row = row_of.clone();
            trial_col[i] = j;
            trial_row[j] = i;
            trial_row[released] = usize::MAX;
            let mut seen = vec![false; n];
            seen[j] = true;
            if augment(displaced, i, &tight, &mut trial_col, &mut trial_row, &mut seen) {
                col_of = trial_col;
                row_of = trial_row;
                break;
            }
        }
    }

    Ok((0..rows).filter(|&i| col_of[i] < cols).map(|i| (i, col_of[i])).collect())
}

/// Kuhn-style augmenting search restricted to rows after `fixed`.
fn augment(
    row: usize,
    fixed: usize,
    tight: &[Vec<bool>],
    col_of: &mut [usize],
    row_of: &mut [usize],
    seen: &mut [bool],
) -> bool {
    for j in 0..tight.len() {
        if !tight[row][j] || seen[j] {
            continue;
        }
        seen[j] = true;
        let holder = row_of[j];
        if holder != usize::MAX && holder <= fixed {
            continue;
        }
        if holder == usize::MAX || augment(holder, fixed, tight, col_of, row_of, seen) {
            col_of[row] = j;
            row_of[j] = row;
            return true;
        }
    }
    false
}

/// Sum of the costs selected by `assignment`.
pub fn assignment_cost(cost: &[Vec<f64>], assignment: &[(usize, usize)]) -> f64 {
    assignment.iter().map(|&(i, j)| cost[i][j]).sum()
}
