//! Minimum-cost matching of centroids between consecutive rounds.
//!
//! Convention: `g[last] = current`. Given last round's centroids and this
//! round's centroids, `g` says which current centroid continues each old
//! slot, and pseudo-labels are re-expressed in the old slot space with
//! `aligned = g_inv[current]`. That keeps classifier output unit `i` attached
//! to the same cluster from one round to the next.

use crate::data::{squared_distance, Matrix};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AlignError {
    #[error("cost matrix row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("non-finite cost at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("centroid shapes differ: {last:?} vs {current:?}")]
    ShapeMismatch {
        last: (usize, usize),
        current: (usize, usize),
    },
    #[error("label {label} out of range for {k} clusters")]
    LabelOutOfRange { label: usize, k: usize },
}

/// A solved assignment: `assignment[row] = col`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub assignment: Vec<usize>,
    pub total_cost: f64,
}

/// Sums `cost[i][perm[i]]` in row order.
pub fn permutation_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Solves the square linear assignment problem exactly.
///
/// Shortest-augmenting-path Hungarian method in O(K³). Among optimal
/// permutations the lexicographically smallest one is returned: once the
/// optimal dual potentials are known, every optimal permutation is a perfect
/// matching on the zero-reduced-cost edges, and the smallest such matching is
/// found greedily row by row with alternating-path swaps.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment, AlignError> {
    let n = cost.len();
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(AlignError::NotSquare {
                row: i,
                len: row.len(),
                expected: n,
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(AlignError::NonFinite { row: i, col: j });
        }
    }
    if n == 0 {
        return Ok(Assignment {
            assignment: vec![],
            total_cost: 0.0,
        });
    }

    // 1-based potentials; p[j] is the row matched to column j, 0 = none
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
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
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }

    let scale = cost.iter().flatten().fold(1.0f64, |m, &c| m.max(c.abs()));
    let eps = 1e-9 * scale;
    let tight = |i: usize, j: usize| cost[i][j] - u[i + 1] - v[j + 1] <= eps;
    let solved_cost = permutation_cost(cost, &row_to_col);
    let refined = lexicographic_refine(n, &row_to_col, tight);
    let refined_cost = permutation_cost(cost, &refined);
    // the tolerance on tightness must never cost optimality
    let (assignment, total_cost) = if refined_cost <= solved_cost {
        (refined, refined_cost)
    } else {
        (row_to_col, solved_cost)
    };
    Ok(Assignment {
        assignment,
        total_cost,
    })
}

/// Smallest (row-major lexicographic) perfect matching on the `tight` edges,
/// starting from the perfect matching `start`.
fn lexicographic_refine(
    n: usize,
    start: &[usize],
    tight: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let mut row_to_col = start.to_vec();
    let mut col_to_row = vec![0; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    for i in 0..n {
        let current = row_to_col[i];
        for j in 0..current {
            let owner = col_to_row[j];
            // columns owned by rows < i are fixed
            if owner < i || !tight(i, j) {
                continue;
            }
            // row i takes j; `owner` must reach the column i frees through an
            // alternating path over rows > i that avoids column j
            let mut visited = vec![false; n];
            visited[j] = true;
            let mut path = Vec::new();
            if reroute(
                owner,
                current,
                i,
                &tight,
                &row_to_col,
                &col_to_row,
                &mut visited,
                &mut path,
            ) {
                // path holds (row, new_col) pairs
                for (r, c) in path {
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
    }
    row_to_col
}

#[allow(clippy::too_many_arguments)]
fn reroute(
    row: usize,
    target: usize,
    fixed_upto: usize,
    tight: &impl Fn(usize, usize) -> bool,
    row_to_col: &[usize],
    col_to_row: &[usize],
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    let n = row_to_col.len();
    for c in 0..n {
        if visited[c] || c == row_to_col[row] || !tight(row, c) {
            continue;
        }
        if c == target {
            path.push((row, c));
            return true;
        }
        let next = col_to_row[c];
        if next <= fixed_upto {
            continue;
        }
        visited[c] = true;
        if reroute(
            next, target, fixed_upto, tight, row_to_col, col_to_row, visited, path,
        ) {
            path.push((row, c));
            return true;
        }
    }
    false
}

/// Permutation between last-round and current-round centroid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMapping {
    /// `g[last] = current`
    pub g: Vec<usize>,
    /// `g_inv[current] = last`
    pub g_inv: Vec<usize>,
    /// Sum of squared distances between matched centroids.
    pub total_cost: f64,
}

impl AlignmentMapping {
    pub fn identity(k: usize) -> Self {
        Self {
            g: (0..k).collect(),
            g_inv: (0..k).collect(),
            total_cost: 0.0,
        }
    }

    /// Builds a mapping from `g`, computing its inverse.
    pub fn from_forward(g: Vec<usize>, total_cost: f64) -> Self {
        let mut g_inv = vec![0; g.len()];
        for (last, &current) in g.iter().enumerate() {
            g_inv[current] = last;
        }
        Self {
            g,
            g_inv,
            total_cost,
        }
    }

    /// The mapping in the opposite direction.
    pub fn inverse(&self) -> Self {
        Self {
            g: self.g_inv.clone(),
            g_inv: self.g.clone(),
            total_cost: self.total_cost,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.g.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn k(&self) -> usize {
        self.g.len()
    }
}

/// Matches every last-round centroid to a distinct current centroid,
/// minimizing the total squared Euclidean distance.
pub fn align_centroids(last: &Matrix, current: &Matrix) -> Result<AlignmentMapping, AlignError> {
    if last.rows() != current.rows() || last.cols() != current.cols() {
        return Err(AlignError::ShapeMismatch {
            last: (last.rows(), last.cols()),
            current: (current.rows(), current.cols()),
        });
    }
    let cost: Vec<Vec<f64>> = last
        .iter_rows()
        .map(|l| {
            current
                .iter_rows()
                .map(|c| squared_distance(l, c))
                .collect()
        })
        .collect();
    let solved = hungarian(&cost)?;
    Ok(AlignmentMapping::from_forward(
        solved.assignment,
        solved.total_cost,
    ))
}

/// Re-expresses current-round labels in last-round index space.
pub fn remap_labels(
    current: &[usize],
    mapping: &AlignmentMapping,
) -> Result<Vec<usize>, AlignError> {
    current
        .iter()
        .map(|&l| {
            mapping
                .g_inv
                .get(l)
                .copied()
                .ok_or(AlignError::LabelOutOfRange {
                    label: l,
                    k: mapping.k(),
                })
        })
        .collect()
}

/// Current centroids reordered into last-round slots: row `i` is `current[g[i]]`.
pub fn reorder_centroids(current: &Matrix, mapping: &AlignmentMapping) -> Matrix {
    current.select_rows(&mapping.g)
}
