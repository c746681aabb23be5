//! Linear-programming metric between sets of trajectories.
//!
//! Per time step, estimated and true tracks are (fractionally) assigned to
//! each other. Matched pairs that are both alive cost `min(d, c)^p`, an alive
//! track left unmatched costs `c^p/2`, and every unit change of an assignment
//! weight between consecutive steps costs `γ^p/2`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::tree::TreeTrajectory;

/// Positions of the `(px, vx, py, vy)` state layout.
pub const POSITION_INDICES: [usize; 2] = [0, 2];

/// A trajectory in the plane, alive at steps `start..start + positions.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub label: String,
    pub start: u32,
    pub positions: Vec<[f64; 2]>,
}

impl Track {
    pub fn new(label: impl Into<String>, start: u32, positions: Vec<[f64; 2]>) -> Self {
        Self {
            label: label.into(),
            start,
            positions,
        }
    }

    /// Last step the track is alive (`start − 1` if empty).
    pub fn end(&self) -> u32 {
        self.start + self.positions.len() as u32 - 1
    }

    pub fn at(&self, k: u32) -> Option<[f64; 2]> {
        if k < self.start {
            return None;
        }
        self.positions.get((k - self.start) as usize).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajMetricParams {
    pub p: f64,
    pub c: f64,
    pub gamma: f64,
}

impl Default for TrajMetricParams {
    fn default() -> Self {
        Self {
            p: 2.0,
            c: 10.0,
            gamma: 1.0,
        }
    }
}

impl TrajMetricParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, v) in [("p", self.p), ("c", self.c), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("metric parameter {name} must be positive, got {v}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Metric value and its split. Each field is the p-th root of its share of
/// the normalized objective, so `total^p` is the sum of the other fields
/// raised to `p`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricBreakdown {
    pub total: f64,
    pub localisation: f64,
    pub missed: f64,
    pub false_target: f64,
    pub switch: f64,
}

impl MetricBreakdown {
    pub fn components(&self) -> [f64; 4] {
        [self.localisation, self.missed, self.false_target, self.switch]
    }
}

/// Unnormalized p-th power costs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Costs {
    localisation: f64,
    missed: f64,
    false_target: f64,
    switch: f64,
}

fn check_tracks(tracks: &[Track]) -> Result<()> {
    for t in tracks {
        if t.start == 0 {
            return Err(Error::InvalidInput(format!("track '{}' starts at step 0", t.label)));
        }
        if t.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("track '{}' has a non-finite position", t.label)));
        }
    }
    Ok(())
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Solves the assignment LP of one connected group of tracks over steps
/// `first..=last` and adds its matched-pair savings to `costs`.
#[allow(clippy::too_many_arguments)]
fn solve_component(
    est: &[Track],
    truth: &[Track],
    pairs: &[(usize, usize)],
    first: u32,
    last: u32,
    params: &TrajMetricParams,
    costs: &mut Costs,
) -> Result<()> {
    let cp = params.c.powf(params.p);
    let half_switch = params.gamma.powf(params.p) / 2.0;
    let steps = (last - first + 1) as usize;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut w = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let vars: Vec<_> = (first..=last)
            .map(|t| {
                let gain = match (est[i].at(t), truth[j].at(t)) {
                    (Some(x), Some(y)) => distance(x, y).min(params.c).powf(params.p) - cp,
                    _ => 0.0,
                };
                lp.add_var(gain, (0.0, 1.0))
            })
            .collect();
        for s in 0..steps.saturating_sub(1) {
            let e = lp.add_var(half_switch, (0.0, f64::INFINITY));
            lp.add_constraint([(e, 1.0), (vars[s], -1.0), (vars[s + 1], 1.0)], ComparisonOp::Ge, 0.0);
            lp.add_constraint([(e, 1.0), (vars[s], 1.0), (vars[s + 1], -1.0)], ComparisonOp::Ge, 0.0);
        }
        w.push(vars);
    }
    let mut rows: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    rows.sort_unstable();
    rows.dedup();
    let mut cols: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    cols.sort_unstable();
    cols.dedup();
    for s in 0..steps {
        for &i in &rows {
            let expr: Vec<_> = pairs
                .iter()
                .zip(&w)
                .filter(|((pi, _), _)| *pi == i)
                .map(|(_, v)| (v[s], 1.0))
                .collect();
            if expr.len() > 1 {
                lp.add_constraint(expr.as_slice(), ComparisonOp::Le, 1.0);
            }
        }
        for &j in &cols {
            let expr: Vec<_> = pairs
                .iter()
                .zip(&w)
                .filter(|((_, pj), _)| *pj == j)
                .map(|(_, v)| (v[s], 1.0))
                .collect();
            if expr.len() > 1 {
                lp.add_constraint(expr.as_slice(), ComparisonOp::Le, 1.0);
            }
        }
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::Numerical(format!("metric LP failed: {e}")))?
        .into_solution()
        .map_err(|_| Error::Numerical("metric LP interrupted".into()))?;

    for (&(i, j), vars) in pairs.iter().zip(&w) {
        let vals: Vec<f64> = vars.iter().map(|&v| solution[v].clamp(0.0, 1.0)).collect();
        for (s, t) in (first..=last).enumerate() {
            if let (Some(x), Some(y)) = (est[i].at(t), truth[j].at(t)) {
                let d = distance(x, y);
                if d < params.c {
                    costs.localisation += d.powf(params.p) * vals[s];
                    costs.missed -= cp / 2.0 * vals[s];
                    costs.false_target -= cp / 2.0 * vals[s];
                }
            }
        }
        costs.switch += half_switch * vals.windows(2).map(|v| (v[0] - v[1]).abs()).sum::<f64>();
    }
    Ok(())
}

/// Metric between estimated and true tracks over steps `1..=k`, normalized
/// by `k`. Track samples after `k` are ignored.
pub fn trajectory_metric(
    est: &[Track],
    truth: &[Track],
    params: &TrajMetricParams,
    k: u32,
) -> Result<MetricBreakdown> {
    params.validate()?;
    if k < 1 {
        return Err(Error::InvalidInput("metric needs k ≥ 1".into()));
    }
    check_tracks(est)?;
    check_tracks(truth)?;
    let cp = params.c.powf(params.p);
    let alive_steps = |t: &Track| -> u32 {
        if t.positions.is_empty() || t.start > k {
            0
        } else {
            t.end().min(k) - t.start + 1
        }
    };
    let mut costs = Costs {
        missed: truth.iter().map(|t| alive_steps(t) as f64 * cp / 2.0).sum(),
        false_target: est.iter().map(|t| alive_steps(t) as f64 * cp / 2.0).sum(),
        ..Costs::default()
    };

    // pairs that are ever within the cutoff; other pairs are never matched
    // in an optimal solution
    let n = est.len();
    let mut parent: Vec<usize> = (0..n + truth.len()).collect();
    let mut pairs = Vec::new();
    for (i, x) in est.iter().enumerate() {
        for (j, y) in truth.iter().enumerate() {
            let lo = x.start.max(y.start);
            let hi = x.end().min(y.end()).min(k);
            let close = (lo..=hi).any(|t| match (x.at(t), y.at(t)) {
                (Some(a), Some(b)) => distance(a, b) < params.c,
                _ => false,
            });
            if close {
                pairs.push((i, j));
                let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
                parent[a] = b;
            }
        }
    }
    let mut groups: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    for &(i, j) in &pairs {
        let root = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.0 == root) {
            Some(g) => g.1.push((i, j)),
            None => groups.push((root, vec![(i, j)])),
        }
    }
    for (_, group) in &groups {
        let first = group
            .iter()
            .map(|&(i, j)| est[i].start.min(truth[j].start))
            .min()
            .unwrap_or(1);
        let last = group
            .iter()
            .map(|&(i, j)| est[i].end().max(truth[j].end()).min(k))
            .max()
            .unwrap_or(1);
        solve_component(est, truth, group, first, last, params, &mut costs)?;
    }

    let norm = |x: f64| (x.max(0.0) / k as f64).powf(1.0 / params.p);
    let total = costs.localisation.max(0.0)
        + costs.missed.max(0.0)
        + costs.false_target.max(0.0)
        + costs.switch.max(0.0);
    Ok(MetricBreakdown {
        total: norm(total),
        localisation: norm(costs.localisation),
        missed: norm(costs.missed),
        false_target: norm(costs.false_target),
        switch: norm(costs.switch),
    })
}

/// One track per branch, using the given state indices as the position.
pub fn branches_as_tracks_with(trees: &[TreeTrajectory], idx: [usize; 2]) -> Vec<Track> {
    let mut out = Vec::new();
    for (ti, tree) in trees.iter().enumerate() {
        for b in &tree.branches {
            let (first, _) = b.time_span(tree.start_time);
            out.push(Track {
                label: format!("{ti}:{}", b.id()),
                start: first,
                positions: b.states.iter().map(|s| [s[idx[0]], s[idx[1]]]).collect(),
            });
        }
    }
    out
}

/// One track per branch of every tree; genealogy is dropped.
pub fn branches_as_tracks(trees: &[TreeTrajectory]) -> Vec<Track> {
    branches_as_tracks_with(trees, POSITION_INDICES)
}

pub const METRIC_CSV_HEADER: &str = "k,total,loc,miss,false,switch";

pub fn metric_csv(rows: &[MetricBreakdown]) -> String {
    let mut out = String::from(METRIC_CSV_HEADER);
    out.push('\n');
    for (k, m) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k + 1,
            m.total,
            m.localisation,
            m.missed,
            m.false_target,
            m.switch
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_estimate_single_step() {
        let truth = vec![Track::new("t", 1, vec![[0.0, 0.0]])];
        let m = trajectory_metric(&[], &truth, &TrajMetricParams::default(), 1).unwrap();
        assert!((m.total - 50f64.sqrt()).abs() < 1e-12);
        assert!((m.missed - 50f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.localisation, 0.0);
    }

    #[test]
    fn identical_sets_are_zero() {
        let a = vec![
            Track::new("a", 1, vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]),
            Track::new("b", 2, vec![[5.0, 0.0], [6.0, 0.0]]),
        ];
        let m = trajectory_metric(&a, &a, &TrajMetricParams::default(), 3).unwrap();
        assert!(m.total < 1e-9, "{m:?}");
    }

    #[test]
    fn offset_track_is_localisation() {
        let a = vec![Track::new("a", 1, vec![[0.0, 0.0], [0.0, 0.0]])];
        let b = vec![Track::new("b", 1, vec![[3.0, 0.0], [3.0, 0.0]])];
        let m = trajectory_metric(&a, &b, &TrajMetricParams::default(), 2).unwrap();
        assert!((m.localisation - 3.0).abs() < 1e-9);
        assert!(m.missed < 1e-6 && m.false_target < 1e-6 && m.switch < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        let p = TrajMetricParams::default();
        assert!(trajectory_metric(&[], &[], &p, 0).is_err());
        let bad = vec![Track::new("x", 0, vec![[0.0, 0.0]])];
        assert!(trajectory_metric(&bad, &[], &p, 1).is_err());
        let q = TrajMetricParams { c: 0.0, ..p };
        assert!(trajectory_metric(&[], &[], &q, 1).is_err());
    }
}
