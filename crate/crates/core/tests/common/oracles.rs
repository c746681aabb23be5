//! Independent brute-force reference implementations.

use rand::Rng;
use trpmbm_core::assignment::CostMatrix;

/// Every injective row-to-column assignment with finite cost, with costs
/// summed in row order, sorted by cost.
pub fn all_assignments(c: &CostMatrix) -> Vec<(Vec<usize>, f64)> {
    fn rec(c: &CostMatrix, row: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
        if row == c.rows() {
            let cost = cur.iter().enumerate().fold(0.0, |acc, (i, &j)| acc + c.get(i, j));
            out.push((cur.clone(), cost));
            return;
        }
        for j in 0..c.cols() {
            if used[j] || c.get(row, j).is_infinite() {
                continue;
            }
            used[j] = true;
            cur.push(j);
            rec(c, row + 1, used, cur, out);
            cur.pop();
            used[j] = false;
        }
    }
    let mut out = Vec::new();
    rec(c, 0, &mut vec![false; c.cols()], &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    out
}

/// Random matrix with roughly `inf_rate` forbidden entries.
pub fn random_cost_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, inf_rate: f64) -> CostMatrix {
    let data = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < inf_rate {
                f64::INFINITY
            } else {
                rng.random_range(-10.0..10.0)
            }
        })
        .collect();
    CostMatrix::new(rows, cols, data).unwrap()
}

/// Every partial matching between `n` rows and `m` columns, as a column
/// (or `None`) per row.
pub fn partial_matchings(n: usize, m: usize) -> Vec<Vec<Option<usize>>> {
    fn rec(row: usize, n: usize, m: usize, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if row == n {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        rec(row + 1, n, m, used, cur, out);
        cur.pop();
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push(Some(j));
                rec(row + 1, n, m, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, &mut vec![false; m], &mut Vec::new(), &mut out);
    out
}

/// Minimum over all sequences of per-step partial matchings of the
/// trajectory metric objective (p-th power, not normalized).
pub fn metric_by_enumeration(
    est: &[trpmbm_core::metric::Track],
    truth: &[trpmbm_core::metric::Track],
    p: f64,
    c: f64,
    gamma: f64,
    k: u32,
) -> f64 {
    let matchings = partial_matchings(est.len(), truth.len());
    let cp = c.powf(p);
    let step_cost = |t: u32, mt: &[Option<usize>]| -> f64 {
        let mut cost = 0.0;
        let mut truth_used = vec![false; truth.len()];
        for (i, a) in mt.iter().enumerate() {
            let x = est[i].at(t);
            match a {
                Some(j) => {
                    truth_used[*j] = true;
                    match (x, truth[*j].at(t)) {
                        (Some(x), Some(y)) => {
                            cost += ((x[0] - y[0]).hypot(x[1] - y[1])).min(c).powf(p)
                        }
                        (None, None) => {}
                        _ => cost += cp / 2.0,
                    }
                }
                None => {
                    if x.is_some() {
                        cost += cp / 2.0;
                    }
                }
            }
        }
        for (j, used) in truth_used.iter().enumerate() {
            if !used && truth[j].at(t).is_some() {
                cost += cp / 2.0;
            }
        }
        cost
    };
    let switch = |a: &[Option<usize>], b: &[Option<usize>]| -> f64 {
        let changed = a.iter().zip(b).filter(|(x, y)| x != y).map(|(x, y)| {
            x.is_some() as usize + y.is_some() as usize
        });
        gamma.powf(p) / 2.0 * changed.sum::<usize>() as f64
    };
    let mut best: Vec<f64> = matchings.iter().map(|m| step_cost(1, m)).collect();
    for t in 2..=k {
        best = matchings
            .iter()
            .map(|m| {
                let prev = matchings
                    .iter()
                    .zip(&best)
                    .map(|(pm, b)| b + switch(pm, m))
                    .fold(f64::INFINITY, f64::min);
                prev + step_cost(t, m)
            })
            .collect();
    }
    best.into_iter().fold(f64::INFINITY, f64::min)
}

/// Random track alive somewhere in `1..=k` with positions in a small box.
pub fn random_track<R: Rng>(rng: &mut R, k: u32, label: &str) -> trpmbm_core::metric::Track {
    let start = rng.random_range(1..=k);
    let len = rng.random_range(1..=k - start + 1);
    let positions = (0..len)
        .map(|_| [rng.random_range(0.0..16.0), rng.random_range(0.0..16.0)])
        .collect();
    trpmbm_core::metric::Track::new(label, start, positions)
}

/// Branch marginals of the exact predicted tree density on a finite state
/// space. Every joint configuration of the prior branches and every joint
/// survival/spawning outcome is enumerated; the result maps each predicted
/// slot (`j + (m−1)·n` indexing) to its mass per `(end time, sequence)`.
pub fn exact_predicted_marginals(
    prior: &[trpmbm_core::filter::discrete::DiscreteBranch],
    model: &trpmbm_core::filter::discrete::DiscreteModel,
    k: u32,
) -> Vec<std::collections::HashMap<(u32, Vec<usize>), f64>> {
    use std::collections::HashMap;
    type Outcome = Vec<Option<(u32, Vec<usize>)>>;
    let n = prior.len();
    let rho = model.mode_probs.len();
    let ns = model.num_states;

    // every prior configuration: per branch None or (κ, sequence)
    let mut configs: Vec<(f64, Vec<Option<(u32, Vec<usize>)>>)> = vec![(1.0, Vec::new())];
    for b in prior {
        let mut next = Vec::new();
        for (p, cfg) in &configs {
            let mut absent = cfg.clone();
            absent.push(None);
            next.push((p * (1.0 - b.existence), absent));
            for c in &b.components {
                for (seq, q) in &c.sequences {
                    let mut present = cfg.clone();
                    present.push(Some((c.end_time, seq.clone())));
                    next.push((p * b.existence * c.beta * q, present));
                }
            }
        }
        configs = next;
    }

    let mut marginals: Vec<HashMap<(u32, Vec<usize>), f64>> = vec![HashMap::new(); n * rho];
    for (p_cfg, cfg) in configs {
        // joint outcomes over all slots
        let mut outcomes: Vec<(f64, Outcome)> = vec![(p_cfg, vec![None; n * rho])];
        for (j, state) in cfg.iter().enumerate() {
            let Some((kappa, seq)) = state else { continue };
            let mut next = Vec::new();
            for (p, out) in &outcomes {
                if *kappa != k - 1 {
                    let mut o = out.clone();
                    o[j] = Some((*kappa, seq.clone()));
                    next.push((*p, o));
                    continue;
                }
                let x = *seq.last().unwrap();
                // survival of the branch itself
                let mut partial: Vec<(f64, Outcome)> = Vec::new();
                let mut dead = out.clone();
                dead[j] = Some((k - 1, seq.clone()));
                partial.push((p * (1.0 - model.mode_probs[0][x]), dead));
                for y in 0..ns {
                    let mut o = out.clone();
                    let mut s = seq.clone();
                    s.push(y);
                    o[j] = Some((k, s));
                    partial.push((p * model.mode_probs[0][x] * model.transitions[0][x][y], o));
                }
                // independent spawning per mode
                for m in 1..rho {
                    let slot = j + m * n;
                    let mut expanded = Vec::new();
                    for (q, o) in &partial {
                        expanded.push((q * (1.0 - model.mode_probs[m][x]), o.clone()));
                        for y in 0..ns {
                            let mut o2 = o.clone();
                            o2[slot] = Some((k, vec![y]));
                            expanded.push((q * model.mode_probs[m][x] * model.transitions[m][x][y], o2));
                        }
                    }
                    partial = expanded;
                }
                next.extend(partial);
            }
            outcomes = next;
        }
        for (p, out) in outcomes {
            for (slot, s) in out.into_iter().enumerate() {
                if let Some(key) = s {
                    *marginals[slot].entry(key).or_insert(0.0) += p;
                }
            }
        }
    }
    marginals
}
