//! Rectangular linear assignment with gating.
//!
//! The matrix is padded to square, solved with the shortest augmenting path
//! Hungarian method (O(n^3)), and the optimum is then moved to the
//! lexicographically smallest `(row, col)` assignment among equal-cost
//! optima by rotating along alternating cycles of zero reduced cost.

use std::collections::VecDeque;

use crate::{Error, Result};

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged cost matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(row, col)` pairs in ascending row order.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Minimum-cost one-to-one assignment; pairs costing more than `gate` are
/// reported as unmatched. Padding cells cost `10 * gate`.
pub fn hungarian_assign(cost: &CostMatrix, gate: f64) -> Result<Assignment> {
    if cost.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("cost matrix contains non-finite entries".into()));
    }
    if !gate.is_finite() {
        return Err(Error::Validation(format!("gate must be finite, got {gate}")));
    }
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            matches: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
        });
    }
    let n = rows.max(cols);
    let pad = 10.0 * gate;
    let square = CostMatrix::from_fn(n, n, |r, c| if r < rows && c < cols { cost.get(r, c) } else { pad });
    let row_to_col = solve_square(&square);

    let mut out = Assignment::default();
    let mut col_taken = vec![false; cols];
    for (r, &c) in row_to_col.iter().enumerate().take(rows) {
        if c < cols && cost.get(r, c) <= gate {
            out.matches.push((r, c));
            col_taken[c] = true;
        } else {
            out.unmatched_rows.push(r);
        }
    }
    out.unmatched_cols = (0..cols).filter(|&c| !col_taken[c]).collect();
    Ok(out)
}

/// Optimal `row -> col` permutation for a square matrix, lexicographically
/// smallest among optima.
pub fn solve_square(cost: &CostMatrix) -> Vec<usize> {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "solve_square needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    let (mut row_to_col, u, v) = shortest_augmenting_path(cost);

    // Among optimal assignments, exactly those using only zero-reduced-cost
    // edges remain optimal under the final potentials.
    let scale = cost.data.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * scale;
    let tight = |r: usize, c: usize| cost.get(r, c) - u[r] - v[c] <= tol;
    let mut col_to_row = vec![0; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut col_locked = vec![false; n];
    for r in 0..n {
        let current = row_to_col[r];
        for c in 0..current {
            if col_locked[c] || !tight(r, c) {
                continue;
            }
            // Row `r2` owns `c`; it must move along tight edges so that the
            // chain ends at `current`, which `r` gives up.
            let r2 = col_to_row[c];
            if let Some(path) = alternating_path(n, r2, c, current, &col_locked, &row_to_col, &col_to_row, &tight) {
                // path: sequence of (row, new_col)
                for &(pr, pc) in &path {
                    row_to_col[pr] = pc;
                    col_to_row[pc] = pr;
                }
                row_to_col[r] = c;
                col_to_row[c] = r;
                break;
            }
        }
        col_locked[row_to_col[r]] = true;
    }
    row_to_col
}

/// BFS over tight edges from `start_row` to column `target`, never using the
/// column `taken` or locked columns. Returns the re-matching steps.
#[allow(clippy::too_many_arguments)]
fn alternating_path(
    n: usize,
    start_row: usize,
    taken: usize,
    target: usize,
    col_locked: &[bool],
    row_to_col: &[usize],
    col_to_row: &[usize],
    tight: &impl Fn(usize, usize) -> bool,
) -> Option<Vec<(usize, usize)>> {
    // parent[col] = row that reached it
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut seen_row = vec![false; n];
    let mut queue = VecDeque::from([start_row]);
    seen_row[start_row] = true;
    while let Some(row) = queue.pop_front() {
        for col in 0..n {
            if col == taken || col_locked[col] || parent[col].is_some() || col == row_to_col[row] {
                continue;
            }
            if !tight(row, col) {
                continue;
            }
            parent[col] = Some(row);
            if col == target {
                let mut steps = Vec::new();
                let mut c = col;
                loop {
                    let r = parent[c].expect("visited column has a parent");
                    steps.push((r, c));
                    if r == start_row {
                        return Some(steps);
                    }
                    c = row_to_col[r];
                }
            }
            let next = col_to_row[col];
            if !seen_row[next] {
                seen_row[next] = true;
                queue.push_back(next);
            }
        }
    }
    None
}

/// Jonker-Volgenant style Hungarian method. Returns the assignment and the
/// dual potentials `(u, v)` with `cost[r][c] - u[r] - v[c] >= 0`, zero on
/// the assigned edges.
fn shortest_augmenting_path(cost: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.rows();
    // 1-based arrays with a virtual column 0
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
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
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
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(cost: &CostMatrix, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(r, &c)| cost.get(r, c)).sum()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn diagonal_example() {
        let m = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let a = hungarian_assign(&m, 0.5).unwrap();
        assert_eq!(a.matches, vec![(0, 0), (1, 1)]);
        assert!(a.unmatched_rows.is_empty() && a.unmatched_cols.is_empty());
    }

    #[test]
    fn gate_excludes_expensive_pair() {
        let m = CostMatrix::from_rows(&[vec![0.9]]).unwrap();
        let a = hungarian_assign(&m, 0.5).unwrap();
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_rows, vec![0]);
        assert_eq!(a.unmatched_cols, vec![0]);
    }

    #[test]
    fn empty_and_rectangular() {
        let a = hungarian_assign(&CostMatrix::new(0, 3, vec![]).unwrap(), 1.0).unwrap();
        assert_eq!(a.unmatched_cols, vec![0, 1, 2]);
        let a = hungarian_assign(&CostMatrix::new(2, 0, vec![]).unwrap(), 1.0).unwrap();
        assert_eq!(a.unmatched_rows, vec![0, 1]);
        let m = CostMatrix::from_rows(&[vec![0.5, 0.1, 0.3]]).unwrap();
        let a = hungarian_assign(&m, 1.0).unwrap();
        assert_eq!(a.matches, vec![(0, 1)]);
        assert_eq!(a.unmatched_cols, vec![0, 2]);
    }

    #[test]
    fn rejects_non_finite() {
        let m = CostMatrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(hungarian_assign(&m, 1.0).is_err());
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let ones = CostMatrix::from_fn(4, 4, |_, _| 1.0);
        assert_eq!(solve_square(&ones), vec![0, 1, 2, 3]);
        // optima (0,1,2) and (1,0,2) both cost 2
        let m = CostMatrix::from_rows(&[vec![1.0, 1.0, 5.0], vec![1.0, 1.0, 5.0], vec![5.0, 5.0, 0.0]]).unwrap();
        assert_eq!(solve_square(&m), vec![0, 1, 2]);
        let m = CostMatrix::from_rows(&[vec![3.0, 1.0, 1.0], vec![1.0, 3.0, 1.0], vec![1.0, 1.0, 3.0]]).unwrap();
        // optima: (1,2,0) and (2,0,1), both cost 3
        assert_eq!(solve_square(&m), vec![1, 2, 0]);
    }

    #[test]
    fn lexicographic_choice_matches_enumeration() {
        let mut rng = crate::rng::rng_for(77, &[]);
        use rand::Rng;
        for n in 1..=5 {
            for _ in 0..100 {
                let m = CostMatrix::from_fn(n, n, |_, _| rng.random_range(0..4) as f64);
                let perms = permutations(n);
                let best = perms.iter().map(|p| total(&m, p)).fold(f64::INFINITY, f64::min);
                let mut optimal: Vec<&Vec<usize>> = perms.iter().filter(|p| total(&m, p) == best).collect();
                optimal.sort();
                assert_eq!(&solve_square(&m), optimal[0]);
            }
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 1usize..=6, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::rng::rng_for(seed, &[]);
            let m = CostMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
            let best = permutations(n).iter().map(|p| total(&m, p)).fold(f64::INFINITY, f64::min);
            let got = total(&m, &solve_square(&m));
            prop_assert!((got - best).abs() < 1e-12);
        }

        #[test]
        fn raising_gate_never_loses_matches(seed in any::<u64>(), g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
            use rand::Rng;
            let mut rng = crate::rng::rng_for(seed, &[]);
            let m = CostMatrix::from_fn(4, 5, |_, _| rng.random_range(0.0..1.0));
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let a = hungarian_assign(&m, lo).unwrap();
            let b = hungarian_assign(&m, hi).unwrap();
            prop_assert!(b.matches.len() >= a.matches.len());
        }
    }
}
