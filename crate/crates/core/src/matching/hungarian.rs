//! Rectangular min-cost assignment with forbidden entries.

use std::fmt;

/// Request-by-vehicle cost table. `None` marks a forbidden pairing; it is
/// never selected and never enters arithmetic.
#[derive(Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Option<f64>>,
}

impl fmt::Debug for CostMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for r in 0..self.rows {
            list.entry(&self.row(r));
        }
        list.finish()
    }
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        CostMatrix {
            rows,
            cols,
            entries: vec![None; rows * cols],
        }
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        CostMatrix {
            rows: rows.len(),
            cols,
            entries: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, cost: Option<f64>) {
        self.entries[r * self.cols + c] = cost.filter(|v| v.is_finite());
    }

    pub fn row(&self, r: usize) -> &[Option<f64>] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_has_feasible(&self, r: usize) -> bool {
        self.row(r).iter().any(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<Option<usize>>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn matched(&self) -> usize {
        self.row_to_col.iter().flatten().count()
    }
}

/// Assigns rows to distinct columns, never through a forbidden entry.
///
/// The number of assigned rows is maximized first and the total cost
/// minimized second: the matrix is padded with one dummy column per row
/// whose cost exceeds any achievable difference in real cost, and the
/// resulting square-or-wide problem is solved with the shortest augmenting
/// path form of the Hungarian method (O(rows² · cols)).
pub fn hungarian(matrix: &CostMatrix) -> Assignment {
    let n = matrix.rows;
    if n == 0 {
        return Assignment {
            row_to_col: Vec::new(),
            total_cost: 0.0,
        };
    }
    let real = matrix.cols;
    let m = real + n;
    let dummy = 1.0
        + 2.0
            * (0..n)
                .map(|r| {
                    matrix
                        .row(r)
                        .iter()
                        .flatten()
                        .fold(0.0f64, |acc, c| acc.max(c.abs()))
                })
                .sum::<f64>();
    let cost = |i: usize, j: usize| -> Option<f64> {
        if j < real {
            matrix.get(i, j)
        } else {
            Some(dummy)
        }
    };

    // 1-based potentials; column 0 is the virtual source
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                if let Some(c) = cost(i0 - 1, j - 1) {
                    let cur = c - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != 0, "dummy columns keep every row assignable");
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

    let mut row_to_col = vec![None; n];
    let mut total_cost = 0.0;
    for j in 1..=real {
        if p[j] != 0 {
            let r = p[j] - 1;
            row_to_col[r] = Some(j - 1);
            total_cost += matrix.get(r, j - 1).expect("assigned entry is feasible");
        }
    }
    Assignment {
        row_to_col,
        total_cost,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|&c| if c.is_finite() { Some(c) } else { None })
                        .collect()
                })
                .collect(),
        )
    }

    #[test]
    fn one_by_one() {
        let a = hungarian(&m(&[&[5.0]]));
        assert_eq!(a.row_to_col, vec![Some(0)]);
        assert_eq!(a.total_cost, 5.0);
    }

    #[test]
    fn three_by_three() {
        let a = hungarian(&m(&[&[4.0, 1.0, 3.0], &[2.0, 0.0, 5.0], &[3.0, 2.0, 2.0]]));
        assert_eq!(a.row_to_col, vec![Some(1), Some(0), Some(2)]);
        assert_eq!(a.total_cost, 5.0);
    }

    #[test]
    fn forbidden_entries_leave_rows_unassigned() {
        let inf = f64::INFINITY;
        let a = hungarian(&m(&[&[inf, 3.0], &[inf, inf]]));
        assert_eq!(a.row_to_col, vec![Some(1), None]);
        assert_eq!(a.total_cost, 3.0);
    }

    #[test]
    fn more_rows_than_columns_keeps_cheapest() {
        let a = hungarian(&m(&[&[7.0], &[2.0]]));
        assert_eq!(a.row_to_col, vec![None, Some(0)]);
    }

    #[test]
    fn cardinality_beats_cost() {
        // taking the cheap 1.0 would strand row 1
        let inf = f64::INFINITY;
        let a = hungarian(&m(&[&[1.0, 100.0], &[inf, 100.0]]));
        assert_eq!(a.matched(), 2);
        assert_eq!(a.row_to_col, vec![Some(0), Some(1)]);
    }

    #[test]
    fn empty_matrix() {
        let a = hungarian(&CostMatrix::new(0, 3));
        assert!(a.row_to_col.is_empty());
        let a = hungarian(&CostMatrix::new(2, 0));
        assert_eq!(a.row_to_col, vec![None, None]);
    }
}
