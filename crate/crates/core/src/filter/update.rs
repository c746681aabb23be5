use nalgebra::DVector;
use rustc_hash::FxHashMap;

use crate::assignment::{murty_kbest, CostMatrix};
use crate::error::{Error, Result};
use crate::gauss::{BranchDensity, KalmanUpdater};
use crate::tree::GenealogyVar;

use super::{
    log_sum_exp, BernoulliTree, BranchSlot, FilterModel, GlobalHypothesis, LocalHypothesis,
    PMBMPosterior, Selection,
};

/// Weights below `exp(LOG_FLOOR)` are treated as this value so that every
/// hypothesis keeps a finite cost.
const LOG_FLOOR: f64 = -708.0;

/// How the local hypotheses of one predicted hypothesis were updated.
#[derive(Clone, Debug, Default)]
struct HypothesisUpdate {
    log_miss: f64,
    /// `(measurement, log weight factor, index of the new hypothesis)`,
    /// sorted by measurement.
    detections: Vec<(u32, f64, u32)>,
}

/// Posterior after the local hypothesis update, before new global
/// hypotheses are formed. `posterior.globals` still holds the predicted
/// global hypotheses, whose selections index the missed-detection
/// hypotheses.
#[derive(Clone, Debug)]
pub struct UpdatedPosterior {
    pub posterior: PMBMPosterior,
    updates: Vec<Vec<Vec<HypothesisUpdate>>>,
    new_tree_log_weights: Vec<f64>,
    predicted_trees: usize,
}

impl UpdatedPosterior {
    pub fn num_measurements(&self) -> usize {
        self.new_tree_log_weights.len()
    }

    /// Log weight of the existence hypothesis of the tree started by
    /// measurement `m`.
    pub fn new_tree_log_weight(&self, m: usize) -> f64 {
        self.new_tree_log_weights[m]
    }

    /// Log missed-detection factor and detection factors of predicted
    /// hypothesis `(i, j, h)`.
    pub fn hypothesis_factors(&self, i: usize, j: usize, h: usize) -> (f64, Vec<(u32, f64)>) {
        let u = &self.updates[i][j][h];
        (u.log_miss, u.detections.iter().map(|&(m, w, _)| (m, w)).collect())
    }
}

fn floor_log(x: f64) -> f64 {
    if x.is_nan() {
        x
    } else {
        x.max(LOG_FLOOR)
    }
}

fn update_slot(
    slot: &BranchSlot,
    measurements: &[DVector<f64>],
    model: &FilterModel,
    k: u32,
) -> Result<(BranchSlot, Vec<HypothesisUpdate>)> {
    let mm = &model.measurement;
    let pd = mm.detection_probability;
    let n = slot.hypotheses.len();
    let mut hyps = Vec::with_capacity(n);
    let mut detected = Vec::new();
    let mut updates = Vec::with_capacity(n);
    for h in &slot.hypotheses {
        let mass = h.alive_mass();
        let Some(d) = h.density.as_ref().filter(|_| mass > 0.0 && pd > 0.0) else {
            hyps.push(h.clone());
            updates.push(HypothesisUpdate::default());
            continue;
        };
        let q = mass * pd;
        let log_miss = floor_log((-q).ln_1p());
        let beta_k = d.beta(k);
        let mut components = d.components.clone();
        for c in &mut components {
            if c.end_time == k {
                c.beta *= 1.0 - pd;
            }
        }
        let mut density = BranchDensity {
            start_time: d.start_time,
            time: k,
            components,
        };
        let remaining = density.beta_sum();
        let miss = if remaining > 0.0 {
            density.normalize();
            LocalHypothesis {
                log_weight: h.log_weight + log_miss,
                existence: (h.existence * (1.0 - beta_k * pd) / (1.0 - q)).clamp(0.0, 1.0),
                density: Some(density),
                associations: h.associations.clone(),
            }
        } else {
            LocalHypothesis {
                log_weight: h.log_weight + log_miss,
                existence: 0.0,
                density: None,
                associations: h.associations.clone(),
            }
        };
        hyps.push(miss);

        let current = d.current().expect("alive mass implies a current component");
        let updater = KalmanUpdater::new(&current.component, &mm.h, &mm.r)?;
        let log_prior = h.existence.ln() + beta_k.ln() + pd.ln();
        let mut detections = Vec::new();
        for (m, z) in measurements.iter().enumerate() {
            if updater.mahalanobis2(z) > model.params.gate {
                continue;
            }
            let log_det = floor_log(log_prior + updater.log_likelihood(z));
            let mut associations = h.associations.clone();
            associations.push((k, m as u32));
            let index = (n + detected.len()) as u32;
            detected.push(LocalHypothesis {
                log_weight: h.log_weight + log_det,
                existence: 1.0,
                density: Some(BranchDensity::alive(
                    d.start_time,
                    k,
                    updater.apply(&current.component, z),
                )),
                associations,
            });
            detections.push((m as u32, log_det, index));
        }
        updates.push(HypothesisUpdate {
            log_miss,
            detections,
        });
    }
    hyps.extend(detected);
    Ok((
        BranchSlot {
            prefix: slot.prefix.clone(),
            start_time: slot.start_time,
            hypotheses: hyps,
        },
        updates,
    ))
}

/// Tree started by one measurement: a nonexistence hypothesis and an
/// existence hypothesis built from the gated undetected components.
fn new_tree(
    post: &PMBMPosterior,
    updaters: &[KalmanUpdater],
    z: &DVector<f64>,
    m: u32,
    model: &FilterModel,
) -> (BernoulliTree, f64) {
    let k = post.time;
    let mm = &model.measurement;
    let log_pd = mm.detection_probability.ln();
    // (log weight, start time, component index), gated only
    let terms: Vec<(f64, u32, usize)> = post
        .ppp
        .iter()
        .zip(updaters)
        .enumerate()
        .filter(|(_, (_, u))| u.mahalanobis2(z) <= model.params.gate)
        .map(|(q, (p, u))| (p.log_weight + log_pd + u.log_likelihood(z), p.start_time, q))
        .filter(|(w, _, _)| *w > f64::NEG_INFINITY)
        .collect();
    let log_detect = log_sum_exp(terms.iter().map(|t| t.0));
    let log_weight = floor_log(log_sum_exp([mm.clutter_intensity().ln(), log_detect]));

    // start time with the largest total weight, later start times on ties
    let mut by_start: Vec<(u32, f64)> = Vec::new();
    for &(w, t, _) in &terms {
        match by_start.iter_mut().find(|(s, _)| *s == t) {
            Some(e) => e.1 = log_sum_exp([e.1, w]),
            None => by_start.push((t, w)),
        }
    }
    let best_start = by_start
        .iter()
        .fold(None, |best: Option<(u32, f64)>, &(t, w)| match best {
            Some((bt, bw)) if bw > w || (bw == w && bt > t) => Some((bt, bw)),
            _ => Some((t, w)),
        })
        .map(|(t, _)| t);

    let exist = match best_start {
        Some(start) => {
            let &(_, _, q) = terms
                .iter()
                .filter(|t| t.1 == start)
                .fold(None, |best: Option<&(f64, u32, usize)>, t| match best {
                    Some(b) if b.0 >= t.0 => Some(b),
                    _ => Some(t),
                })
                .expect("start time has at least one term");
            let comp = updaters[q].apply(&post.ppp[q].component, z);
            LocalHypothesis {
                log_weight,
                existence: (log_detect - log_weight).exp().clamp(0.0, 1.0),
                density: Some(BranchDensity::alive(start, k, comp)),
                associations: vec![(k, m)],
            }
        }
        None => LocalHypothesis {
            log_weight,
            existence: 0.0,
            density: None,
            associations: vec![(k, m)],
        },
    };
    let start = best_start.unwrap_or(k);
    let tree = BernoulliTree {
        start_time: start,
        slots: vec![BranchSlot {
            prefix: GenealogyVar::root(),
            start_time: start,
            hypotheses: vec![
                LocalHypothesis {
                    log_weight: 0.0,
                    existence: 0.0,
                    density: None,
                    associations: Vec::new(),
                },
                exist,
            ],
        }],
    };
    (tree, log_weight)
}

/// Local hypothesis update with the measurements of the current step.
pub fn update(
    predicted: &PMBMPosterior,
    measurements: &[DVector<f64>],
    model: &FilterModel,
) -> Result<UpdatedPosterior> {
    let k = predicted.time;
    let mm = &model.measurement;
    if let Some(z) = measurements.iter().find(|z| z.len() != mm.h.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "measurement has length {}, expected {}",
            z.len(),
            mm.h.nrows()
        )));
    }
    let mut trees = Vec::with_capacity(predicted.trees.len() + measurements.len());
    let mut updates = Vec::with_capacity(predicted.trees.len());
    for tree in &predicted.trees {
        let mut slots = Vec::with_capacity(tree.slots.len());
        let mut tree_updates = Vec::with_capacity(tree.slots.len());
        for slot in &tree.slots {
            let (s, u) = update_slot(slot, measurements, model, k)?;
            slots.push(s);
            tree_updates.push(u);
        }
        trees.push(BernoulliTree {
            start_time: tree.start_time,
            slots,
        });
        updates.push(tree_updates);
    }

    let updaters = predicted
        .ppp
        .iter()
        .map(|p| KalmanUpdater::new(&p.component, &mm.h, &mm.r))
        .collect::<Result<Vec<_>>>()?;
    let mut new_tree_log_weights = Vec::with_capacity(measurements.len());
    for (m, z) in measurements.iter().enumerate() {
        let (tree, w) = new_tree(predicted, &updaters, z, m as u32, model);
        trees.push(tree);
        new_tree_log_weights.push(w);
    }

    let log_miss = (1.0 - mm.detection_probability).ln();
    let ppp = predicted
        .ppp
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.log_weight += log_miss;
            p
        })
        .collect();
    let mut measurement_counts = predicted.measurement_counts.clone();
    measurement_counts.push(measurements.len() as u32);
    Ok(UpdatedPosterior {
        posterior: PMBMPosterior {
            time: k,
            ppp,
            trees,
            globals: predicted.globals.clone(),
            measurement_counts,
        },
        updates,
        new_tree_log_weights,
        predicted_trees: predicted.trees.len(),
    })
}

/// Builds the new global hypotheses: for every predicted global hypothesis
/// the `⌈N_h·w⌉` best measurement assignments, then normalizes and merges
/// duplicates.
pub fn form_globals(updated: UpdatedPosterior, model: &FilterModel) -> Result<PMBMPosterior> {
    let UpdatedPosterior {
        mut posterior,
        updates,
        new_tree_log_weights,
        predicted_trees,
    } = updated;
    let m_k = new_tree_log_weights.len();
    let mut children: Vec<GlobalHypothesis> = Vec::new();
    for g in &posterior.globals {
        let mut columns: Vec<(usize, usize, usize)> = Vec::new();
        let mut miss_sum = 0.0;
        for (i, sel) in g.selection.iter().enumerate() {
            for (j, h) in sel.iter().enumerate() {
                let Some(h) = *h else { continue };
                let u = &updates[i][j][h as usize];
                miss_sum += u.log_miss;
                if !u.detections.is_empty() {
                    columns.push((i, j, h as usize));
                }
            }
        }
        // rows gating only to their own new-tree column are forced
        let mut active = vec![false; m_k];
        for &(i, j, h) in &columns {
            for &(m, _, _) in &updates[i][j][h].detections {
                active[m as usize] = true;
            }
        }
        let rows: Vec<usize> = (0..m_k).filter(|&m| active[m]).collect();
        let mut row_of = vec![usize::MAX; m_k];
        for (r, &m) in rows.iter().enumerate() {
            row_of[m] = r;
        }
        let forced_cost: f64 = (0..m_k).filter(|&m| !active[m]).map(|m| -new_tree_log_weights[m]).sum();
        let ncols = columns.len() + rows.len();
        let mut data = vec![f64::INFINITY; rows.len() * ncols];
        for (c, &(i, j, h)) in columns.iter().enumerate() {
            let u = &updates[i][j][h];
            for &(m, log_det, _) in &u.detections {
                data[row_of[m as usize] * ncols + c] = -(log_det - u.log_miss);
            }
        }
        for (r, &m) in rows.iter().enumerate() {
            data[r * ncols + columns.len() + r] = -new_tree_log_weights[m];
        }
        let cost = CostMatrix::new(rows.len(), ncols, data)?;
        let k_best = ((model.params.max_global_hypotheses as f64) * g.weight())
            .ceil()
            .max(1.0) as usize;
        let mut base = g.selection.clone();
        for &a in &active {
            base.push_tree(&[Some(if a { 0 } else { 1 })]);
        }
        for a in murty_kbest(&cost, k_best)? {
            let mut selection = base.clone();
            for (r, &col) in a.columns.iter().enumerate() {
                let m = rows[r];
                if col < columns.len() {
                    let (i, j, h) = columns[col];
                    let dets = &updates[i][j][h].detections;
                    let pos = dets
                        .binary_search_by_key(&(m as u32), |d| d.0)
                        .expect("finite cost implies a detection hypothesis");
                    selection.tree_mut(i)[j] = Some(dets[pos].2);
                } else {
                    selection.tree_mut(predicted_trees + m)[0] = Some(1);
                }
            }
            let log_weight = g.log_weight + miss_sum - a.cost - forced_cost;
            if log_weight.is_nan() {
                return Err(Error::Divergence {
                    step: posterior.time,
                    message: "NaN global hypothesis weight".into(),
                });
            }
            children.push(GlobalHypothesis {
                log_weight,
                selection,
                retired: g.retired.clone(),
            });
        }
    }
    posterior.globals = merge_and_normalize(children);
    Ok(posterior)
}

/// Sums the weights of identical selections (first occurrence keeps its
/// position) and normalizes.
pub(crate) fn merge_and_normalize(globals: Vec<GlobalHypothesis>) -> Vec<GlobalHypothesis> {
    let mut first: FxHashMap<&Selection, usize> = FxHashMap::default();
    first.reserve(globals.len());
    let target: Vec<usize> = globals
        .iter()
        .enumerate()
        .map(|(i, g)| *first.entry(&g.selection).or_insert(i))
        .collect();
    drop(first);
    let mut log_weights: Vec<f64> = globals.iter().map(|g| g.log_weight).collect();
    for (i, &t) in target.iter().enumerate() {
        if t != i {
            log_weights[t] = log_sum_exp([log_weights[t], log_weights[i]]);
        }
    }
    let mut merged: Vec<GlobalHypothesis> = globals
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| target[i] == i)
        .map(|(i, mut g)| {
            g.log_weight = log_weights[i];
            g
        })
        .collect();
    let total = log_sum_exp(merged.iter().map(|g| g.log_weight));
    for g in &mut merged {
        g.log_weight -= total;
    }
    merged
}
