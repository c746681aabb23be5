//! Minimum-cost assignment and k-best enumeration.
//!
//! Rows are assigned to distinct columns (`rows ≤ cols`). Infinite entries are
//! forbidden pairs. The rectangular problem is solved directly with shortest
//! augmenting paths, one row at a time, so a solve costs O(rows² · cols).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    /// Row-major costs. `+∞` marks a forbidden pair; NaN and `−∞` are
    /// rejected.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} cost matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if rows > cols {
            return Err(Error::DimensionMismatch(format!(
                "cost matrix has more rows ({rows}) than columns ({cols})"
            )));
        }
        if let Some(x) = data.iter().find(|x| x.is_nan() || **x == f64::NEG_INFINITY) {
            return Err(Error::InvalidInput(format!("invalid cost {x}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged cost matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Total cost of `assignment` (column per row), summed in row order.
    pub fn cost_of(&self, assignment: &[usize]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .fold(0.0, |acc, (i, &j)| acc + self.get(i, j))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row.
    pub columns: Vec<usize>,
    pub cost: f64,
}

/// Shortest augmenting path state on the padded square problem, 1-based
/// with index 0 as the virtual source.
/// Constraints of one Murty subproblem on top of the base matrix.
#[derive(Clone, Default)]
struct Constraints {
    /// Rows `0..forced.len()` are pinned to these columns.
    forced: Vec<usize>,
    /// Additional forbidden (row, column) pairs on free rows.
    forbidden: Vec<(usize, usize)>,
}

/// Shortest augmenting path solver over the free rows, 1-based with index 0
/// as the virtual source. Returns the column of every row, or the first row
/// that cannot be assigned.
fn solve_constrained(c: &CostMatrix, cons: &Constraints) -> std::result::Result<Vec<usize>, usize> {
    let first = cons.forced.len();
    let n = c.rows - first;
    let m = c.cols;
    let mut blocked = vec![false; m + 1];
    for &col in &cons.forced {
        blocked[col + 1] = true;
    }
    let mut row_costs = vec![0.0; m + 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = first + i0 - 1;
            row_costs[1..].copy_from_slice(&c.data[row * m..(row + 1) * m]);
            for &(r, col) in &cons.forbidden {
                if r == row {
                    row_costs[col + 1] = f64::INFINITY;
                }
            }
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] || blocked[j] {
                    continue;
                }
                let a = row_costs[j];
                if a.is_finite() {
                    let cur = a - u[i0] - v[j];
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
            if !delta.is_finite() {
                return Err(first + i - 1);
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else if !blocked[j] {
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
    let mut out = cons.forced.clone();
    out.resize(c.rows, 0);
    for j in 1..=m {
        if p[j] >= 1 {
            out[first + p[j] - 1] = j - 1;
        }
    }
    Ok(out)
}

/// Minimum-cost assignment of every row to a distinct column.
pub fn hungarian(c: &CostMatrix) -> Result<Assignment> {
    for i in 0..c.rows {
        if (0..c.cols).all(|j| c.get(i, j).is_infinite()) {
            return Err(Error::Infeasible { row: i });
        }
    }
    let columns = solve_constrained(c, &Constraints::default()).map_err(|row| Error::Infeasible { row })?;
    Ok(Assignment {
        cost: c.cost_of(&columns),
        columns,
    })
}

struct Node {
    cost: f64,
    columns: Vec<usize>,
    constraints: Constraints,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.columns.cmp(&self.columns))
    }
}

/// The `k` cheapest assignments in nondecreasing cost (fewer if fewer are
/// feasible). Equal costs are ordered lexicographically by column vector
/// among the candidates pending at the time.
pub fn murty_kbest(c: &CostMatrix, k: usize) -> Result<Vec<Assignment>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let root = hungarian(c)?;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        cost: root.cost,
        columns: root.columns,
        constraints: Constraints::default(),
    });
    let mut out = Vec::with_capacity(k);
    while let Some(node) = heap.pop() {
        if out.len() + 1 < k {
            let fixed = node.constraints.forced.len();
            for t in fixed..c.rows {
                let mut forbidden: Vec<(usize, usize)> = node
                    .constraints
                    .forbidden
                    .iter()
                    .copied()
                    .filter(|&(r, _)| r >= t)
                    .collect();
                forbidden.push((t, node.columns[t]));
                let constraints = Constraints {
                    forced: node.columns[..t].to_vec(),
                    forbidden,
                };
                if let Ok(columns) = solve_constrained(c, &constraints) {
                    heap.push(Node {
                        cost: c.cost_of(&columns),
                        columns,
                        constraints,
                    });
                }
            }
        }
        out.push(Assignment {
            columns: node.columns,
            cost: node.cost,
        });
        if out.len() == k {
            break;
        }
    }
    Ok(out)
}
