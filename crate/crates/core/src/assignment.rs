//! Optimal 2D linear assignment and k-best assignment enumeration.
//!
//! Rows are measurements, columns are existing objects plus one background
//! column per measurement; `+inf` encodes a forbidden (gated-out) pairing.
//! The k-best enumeration truncates the association sum in the filter update.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("infeasible cost matrix: some row has no finite assignment")]
    Infeasible,
    #[error("cost matrix entries must be finite or +inf")]
    InvalidCost,
    #[error("k must be at least 1")]
    InvalidK,
}

/// Rectangular cost matrix with `+inf` for forbidden pairings.
/// Feasibility requires `n_rows <= n_cols` and a finite entry per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T: Real> {
    entries: DMatrix<T>,
}

impl<T: Real> CostMatrix<T> {
    pub fn new(entries: DMatrix<T>) -> Result<Self, AssignmentError> {
        if entries.iter().any(|&v| !v.is_finite() && v != T::infinity()) {
            return Err(AssignmentError::InvalidCost);
        }
        Ok(Self { entries })
    }

    pub fn n_rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.entries[(row, col)]
    }
}

/// One assignment of every row to a distinct column.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T: Real> {
    /// `row_to_col[i]` is the column assigned to row `i`.
    pub row_to_col: Vec<usize>,
    /// Sum of the selected entries.
    pub total_cost: T,
}

/// Internal solver state for the shortest-augmenting-path method with
/// row/column potentials (Jonker-Volgenant style).
struct LapSolver<'a, T: Real, F: Fn(usize, usize) -> T> {
    cost: &'a F,
    n_rows: usize,
    n_cols: usize,
    row_potential: Vec<T>,
    col_potential: Vec<T>,
    col_of_row: Vec<usize>,
    row_of_col: Vec<usize>,
}

const UNASSIGNED: usize = usize::MAX;

impl<'a, T: Real, F: Fn(usize, usize) -> T> LapSolver<'a, T, F> {
    fn new(cost: &'a F, n_rows: usize, n_cols: usize) -> Self {
        Self {
            cost,
            n_rows,
            n_cols,
            row_potential: vec![T::zero(); n_rows],
            col_potential: vec![T::zero(); n_cols],
            col_of_row: vec![UNASSIGNED; n_rows],
            row_of_col: vec![UNASSIGNED; n_cols],
        }
    }

    fn solve(mut self) -> Result<Vec<usize>, AssignmentError> {
        if self.n_rows > self.n_cols {
            return Err(AssignmentError::Infeasible);
        }
        for row in 0..self.n_rows {
            self.augment_row(row)?;
        }
        Ok(self.col_of_row)
    }

    /// One Dijkstra sweep over columns starting from `start_row`, followed by
    /// potential updates and augmentation along the shortest path.
    fn augment_row(&mut self, start_row: usize) -> Result<(), AssignmentError> {
        let n_cols = self.n_cols;
        let mut shortest = vec![T::infinity(); n_cols];
        let mut path_row = vec![UNASSIGNED; n_cols];
        let mut scanned_cols = vec![false; n_cols];
        let mut scanned_rows = Vec::new();
        let mut min_val = T::zero();
        let mut i = start_row;
        let sink;
        loop {
            scanned_rows.push(i);
            for j in 0..n_cols {
                if scanned_cols[j] {
                    continue;
                }
                let c = (self.cost)(i, j);
                if c == T::infinity() {
                    continue;
                }
                let reduced = min_val + c - self.row_potential[i] - self.col_potential[j];
                if reduced < shortest[j] {
                    shortest[j] = reduced;
                    path_row[j] = i;
                }
            }
            let mut best = UNASSIGNED;
            let mut best_val = T::infinity();
            for j in 0..n_cols {
                if !scanned_cols[j] && shortest[j] < best_val {
                    best_val = shortest[j];
                    best = j;
                }
            }
            if best == UNASSIGNED {
                return Err(AssignmentError::Infeasible);
            }
            min_val = best_val;
            scanned_cols[best] = true;
            if self.row_of_col[best] == UNASSIGNED {
                sink = best;
                break;
            }
            i = self.row_of_col[best];
        }

        self.row_potential[start_row] += min_val;
        for &r in &scanned_rows {
            if r != start_row {
                self.row_potential[r] += min_val - shortest[self.col_of_row[r]];
            }
        }
        for j in 0..n_cols {
            if scanned_cols[j] {
                self.col_potential[j] -= min_val - shortest[j];
            }
        }

        let mut j = sink;
        loop {
            let r = path_row[j];
            self.row_of_col[j] = r;
            let prev = std::mem::replace(&mut self.col_of_row[r], j);
            if r == start_row {
                break;
            }
            j = prev;
        }
        Ok(())
    }
}

fn solve_with<T: Real, F: Fn(usize, usize) -> T>(
    cost: &F,
    n_rows: usize,
    n_cols: usize,
) -> Result<Assignment<T>, AssignmentError> {
    let cols = LapSolver::new(cost, n_rows, n_cols).solve()?;
    let mut total = T::zero();
    for (row, &col) in cols.iter().enumerate() {
        total += cost(row, col);
    }
    Ok(Assignment { row_to_col: cols, total_cost: total })
}

/// Minimum-total-cost assignment of every row to a distinct column.
pub fn solve_lap<T: Real>(c: &CostMatrix<T>) -> Result<Assignment<T>, AssignmentError> {
    let cost = |i: usize, j: usize| c.entries[(i, j)];
    solve_with(&cost, c.n_rows(), c.n_cols())
}

/// A node of Murty's partition tree: the base problem restricted by a set of
/// forced and forbidden pairings.
#[derive(Debug, Clone)]
struct Subproblem {
    forced: Vec<(usize, usize)>,
    forbidden: Vec<(usize, usize)>,
}

impl Subproblem {
    /// Materializes the restricted matrix so the solver's inner loops are
    /// plain indexed reads.
    fn solve<T: Real>(&self, c: &CostMatrix<T>) -> Result<Assignment<T>, AssignmentError> {
        if self.forced.is_empty() && self.forbidden.is_empty() {
            return solve_lap(c);
        }
        let mut m = c.entries.clone();
        for &(r, col) in &self.forbidden {
            m[(r, col)] = T::infinity();
        }
        for &(r, col) in &self.forced {
            for j in 0..m.ncols() {
                if j != col {
                    m[(r, j)] = T::infinity();
                }
            }
            for i in 0..m.nrows() {
                if i != r {
                    m[(i, col)] = T::infinity();
                }
            }
        }
        let cost = |i: usize, j: usize| -> T { m[(i, j)] };
        solve_with(&cost, c.n_rows(), c.n_cols())
    }
}

/// A queue node: a subproblem either already solved, or carrying a lower
/// bound on its optimum (its parent's optimal cost). Unsolved nodes are only
/// solved when they reach the front, which keeps the solver-call count near
/// the number of emitted assignments instead of k times the row count.
struct QueueEntry<T: Real> {
    cost: T,
    tie_break: Vec<usize>,
    solution: Option<Assignment<T>>,
    subproblem: Subproblem,
}

impl<T: Real> PartialEq for QueueEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for QueueEntry<T> {}

impl<T: Real> PartialOrd for QueueEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for QueueEntry<T> {
    // BinaryHeap is a max-heap: reverse so the cheapest entry pops first,
    // ties broken by lexicographic row_to_col order.
    fn cmp(&self, other: &Self) -> Ordering {
        let by_cost = self.cost.partial_cmp(&other.cost).unwrap_or(Ordering::Equal);
        by_cost.then_with(|| self.tie_break.cmp(&other.tie_break)).reverse()
    }
}

/// The `min(k, #feasible)` cheapest assignments in nondecreasing cost order,
/// pairwise distinct; equal costs are ordered by `row_to_col` lexicographically
/// within the partition queue for reproducible output.
pub fn murty_kbest<T: Real>(
    c: &CostMatrix<T>,
    k: usize,
) -> Result<Vec<Assignment<T>>, AssignmentError> {
    if k == 0 {
        return Err(AssignmentError::InvalidK);
    }
    let root = Subproblem { forced: Vec::new(), forbidden: Vec::new() };
    let best = root.solve(c)?;
    let mut queue = BinaryHeap::new();
    queue.push(QueueEntry {
        cost: best.total_cost,
        tie_break: best.row_to_col.clone(),
        solution: Some(best),
        subproblem: root,
    });

    let mut results: Vec<Assignment<T>> = Vec::with_capacity(k.min(64));
    while results.len() < k {
        let Some(entry) = queue.pop() else { break };
        let Some(assignment) = entry.solution else {
            // Bounded node reached the front: solve it and re-queue at its
            // true cost (its optimum is at least the bound, so nothing
            // cheaper was skipped).
            if let Ok(sol) = entry.subproblem.solve(c) {
                queue.push(QueueEntry {
                    cost: sol.total_cost,
                    tie_break: sol.row_to_col.clone(),
                    solution: Some(sol),
                    subproblem: entry.subproblem,
                });
            }
            continue;
        };
        let subproblem = entry.subproblem;

        // Partition the popped node over its free rows; skipped once this
        // emission completes the budget.
        if results.len() + 1 < k {
            let forced_rows: Vec<usize> = subproblem.forced.iter().map(|&(r, _)| r).collect();
            let mut forced_so_far = subproblem.forced.clone();
            for (row, &col) in assignment.row_to_col.iter().enumerate() {
                if forced_rows.contains(&row) {
                    continue;
                }
                let mut forbidden = subproblem.forbidden.clone();
                forbidden.push((row, col));
                queue.push(QueueEntry {
                    cost: assignment.total_cost,
                    tie_break: assignment.row_to_col.clone(),
                    solution: None,
                    subproblem: Subproblem { forced: forced_so_far.clone(), forbidden },
                });
                forced_so_far.push((row, col));
            }
        }

        results.push(assignment);
    }
    Ok(results)
}
