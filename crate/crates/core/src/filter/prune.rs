use crate::model::FilterParams;

use super::update::merge_and_normalize;
use super::{BernoulliTree, BranchSlot, GlobalHypothesis, PMBMPosterior, Selection};

fn prune_globals(globals: Vec<GlobalHypothesis>, params: &FilterParams) -> Vec<GlobalHypothesis> {
    let mut globals = globals;
    // stable sort keeps the earlier hypothesis first on ties
    globals.sort_by(|a, b| b.log_weight.total_cmp(&a.log_weight));
    let log_gamma = params.gamma_mbm.ln();
    let keep = globals
        .iter()
        .enumerate()
        .take_while(|(i, g)| *i == 0 || g.log_weight >= log_gamma)
        .count()
        .min(params.max_global_hypotheses.max(1));
    globals.truncate(keep);
    globals
}

/// Pruning of global hypotheses, local hypotheses, end-time components and
/// Poisson components, followed by removal of unreferenced structure.
pub fn prune(post: PMBMPosterior, params: &FilterParams) -> PMBMPosterior {
    let PMBMPosterior {
        time,
        mut ppp,
        mut trees,
        globals,
        measurement_counts,
    } = post;
    let mut globals = prune_globals(globals, params);

    let log_gamma_p = params.gamma_p.ln();
    ppp.retain(|p| p.log_weight >= log_gamma_p);

    // removed[i][j][h]: hypothesis dropped entirely
    let mut removed: Vec<Vec<Vec<bool>>> = Vec::with_capacity(trees.len());
    for tree in &mut trees {
        let mut tree_removed = Vec::with_capacity(tree.slots.len());
        for slot in &mut tree.slots {
            let mut slot_removed = vec![false; slot.hypotheses.len()];
            for (h, hyp) in slot.hypotheses.iter_mut().enumerate() {
                if hyp.existence < params.gamma_b || hyp.density.is_none() {
                    if hyp.associations.is_empty() {
                        slot_removed[h] = true;
                    } else {
                        hyp.existence = 0.0;
                        hyp.density = None;
                    }
                    continue;
                }
                if let Some(d) = hyp.density.as_mut() {
                    let beta_k = d.beta(d.time);
                    if beta_k > 0.0 && beta_k < params.gamma_a {
                        let t = d.time;
                        d.components.retain(|c| c.end_time != t);
                        d.normalize();
                    }
                }
            }
            tree_removed.push(slot_removed);
        }
        removed.push(tree_removed);
    }

    for g in &mut globals {
        let mut retired_more = false;
        for i in 0..g.selection.num_trees() {
            let sel = g.selection.tree_mut(i);
            for (j, s) in sel.iter_mut().enumerate() {
                if let Some(h) = *s {
                    if removed[i][j][h as usize] {
                        *s = None;
                    }
                }
            }
            let dormant = sel.iter().enumerate().all(|(j, s)| match s {
                None => true,
                Some(h) => trees[i].slots[j].hypotheses[*h as usize].is_inert(),
            });
            if dormant {
                for (j, s) in sel.iter_mut().enumerate() {
                    if let Some(h) = s.take() {
                        let a = &trees[i].slots[j].hypotheses[h as usize].associations;
                        retired_more |= !a.is_empty();
                        g.retired.extend_from_slice(a);
                    }
                }
            }
        }
        if retired_more {
            g.retired.sort_unstable();
        }
    }

    // compact: keep referenced hypotheses, non-empty slots and trees
    let mut new_trees = Vec::with_capacity(trees.len());
    let mut tree_map: Vec<Option<usize>> = Vec::with_capacity(trees.len());
    let mut maps: Vec<Vec<(Option<usize>, Vec<Option<u32>>)>> = Vec::with_capacity(trees.len());
    for (i, tree) in trees.into_iter().enumerate() {
        let mut slots = Vec::with_capacity(tree.slots.len());
        let mut slot_maps = Vec::with_capacity(tree.slots.len());
        for (j, slot) in tree.slots.into_iter().enumerate() {
            let mut used = vec![false; slot.hypotheses.len()];
            for g in &globals {
                if let Some(h) = g.selection.get(i, j) {
                    used[h as usize] = true;
                }
            }
            let mut hyp_map = vec![None; used.len()];
            let mut hyps = Vec::new();
            for (h, hyp) in slot.hypotheses.into_iter().enumerate() {
                if used[h] {
                    hyp_map[h] = Some(hyps.len() as u32);
                    hyps.push(hyp);
                }
            }
            if hyps.is_empty() {
                slot_maps.push((None, hyp_map));
            } else {
                slot_maps.push((Some(slots.len()), hyp_map));
                slots.push(BranchSlot {
                    prefix: slot.prefix,
                    start_time: slot.start_time,
                    hypotheses: hyps,
                });
            }
        }
        if slots.is_empty() {
            tree_map.push(None);
        } else {
            tree_map.push(Some(new_trees.len()));
            new_trees.push(BernoulliTree {
                start_time: tree.start_time,
                slots,
            });
        }
        maps.push(slot_maps);
    }
    for g in &mut globals {
        let mut sel = Selection::new();
        let mut out = Vec::new();
        for (i, old) in g.selection.iter().enumerate() {
            if tree_map[i].is_none() {
                continue;
            }
            out.clear();
            for (j, s) in old.iter().enumerate() {
                let (new_j, hyp_map) = &maps[i][j];
                if new_j.is_some() {
                    out.push(s.and_then(|h| hyp_map[h as usize]));
                }
            }
            sel.push_tree(&out);
        }
        g.selection = sel;
    }

    PMBMPosterior {
        time,
        ppp,
        trees: new_trees,
        globals: merge_and_normalize(globals),
        measurement_counts,
    }
}
