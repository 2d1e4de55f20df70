//! Linear assignment by the Hungarian method (shortest augmenting paths
//! with row/column potentials), O(n^2 m).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Minimum-cost assignment of every row to a distinct column.
///
/// Requires `rows <= cols` and finite costs.  Returns the column chosen for
/// each row.
pub fn solve_assignment(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, m) = cost.shape();
    if n > m {
        return Err(Error::Parameter(format!("assignment needs rows <= cols, got {n}x{m}")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Parameter("assignment costs must be finite".into()));
    }
    if n == 0 {
        return Ok(vec![]);
    }
    // 1-based potentials; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
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
    let mut out = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    Ok(out)
}

/// Minimum-cost partial matching: each row is matched to at most one
/// column and vice versa, and leaving either side unmatched costs 0.
///
/// Solved exactly by padding to a `(rows + cols)` square with zero-cost
/// dummy rows and columns.  Returns the matched column (if any) per row.
pub fn partial_matching(cost: &DMatrix<f64>) -> Result<Vec<Option<usize>>> {
    let (a, k) = cost.shape();
    let size = a + k;
    let mut padded = DMatrix::zeros(size, size);
    for l in 0..a {
        for j in 0..k {
            padded[(l, j)] = cost[(l, j)];
        }
    }
    let assignment = solve_assignment(&padded)?;
    Ok(assignment.into_iter().take(a).map(|j| (j < k).then_some(j)).collect())
}
