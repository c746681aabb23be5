use std::sync::Arc;

use crate::error::Result;
use crate::gauss::{
    l_scan_truncate_component, predict_augment_survive, spawn_component, BranchDensity,
    EndTimeComponent, GaussianBranchComponent, PPPComponent,
};
use crate::model::BirthKind;
use crate::tree::GenealogyVar;

use super::{BernoulliTree, BranchSlot, FilterModel, LocalHypothesis, PMBMPosterior, Selection};

fn survive(c: &GaussianBranchComponent, model: &FilterModel) -> Result<GaussianBranchComponent> {
    let mode = &model.modes[0];
    let d = mode.offset.offset(&c.last_mean())?;
    let p = predict_augment_survive(c, &mode.f, &d, &mode.q)?;
    Ok(l_scan_truncate_component(&p, model.params.lscan))
}

fn birth_component(model: &FilterModel, i: usize) -> Result<GaussianBranchComponent> {
    let b = &model.birth[i];
    GaussianBranchComponent::new(GenealogyVar::root(), model.state_dim, b.mean.clone(), b.cov.clone())
}

/// Survival of every undetected branch plus Poisson births at step `k`.
pub fn ppp_predict(ppp: &[PPPComponent], model: &FilterModel, k: u32) -> Result<Vec<PPPComponent>> {
    let log_ps = model.modes[0].probability.ln();
    let mut out = ppp
        .iter()
        .map(|p| {
            Ok(PPPComponent {
                log_weight: p.log_weight + log_ps,
                start_time: p.start_time,
                component: survive(&p.component, model)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if model.birth_kind == BirthKind::Poisson {
        for (i, b) in model.birth.iter().enumerate() {
            if b.weight > 0.0 {
                out.push(PPPComponent {
                    log_weight: b.weight.ln(),
                    start_time: k,
                    component: birth_component(model, i)?,
                });
            }
        }
    }
    Ok(out)
}

/// Surviving hypothesis and one spawned hypothesis per spawning mode.
fn predict_hypothesis(
    h: &LocalHypothesis,
    model: &FilterModel,
    k: u32,
) -> Result<(LocalHypothesis, Vec<LocalHypothesis>)> {
    let empty = LocalHypothesis {
        log_weight: 0.0,
        existence: 0.0,
        density: None,
        associations: Vec::new(),
    };
    let spawn_count = model.modes.len() - 1;
    let Some(d) = &h.density else {
        return Ok((h.clone(), vec![empty; spawn_count]));
    };
    let ps = model.modes[0].probability;
    let mut components = Vec::with_capacity(d.components.len() + 1);
    let mut alive = None;
    for c in &d.components {
        if c.end_time == d.time && c.beta > 0.0 {
            alive = Some(c);
            components.push(EndTimeComponent {
                end_time: c.end_time,
                beta: (1.0 - ps) * c.beta,
                component: Arc::clone(&c.component),
            });
            components.push(EndTimeComponent {
                end_time: k,
                beta: ps * c.beta,
                component: Arc::new(survive(&c.component, model)?),
            });
        } else {
            components.push(c.clone());
        }
    }
    components.retain(|c| c.beta > 0.0);
    let surviving = LocalHypothesis {
        log_weight: h.log_weight,
        existence: h.existence,
        density: Some(BranchDensity {
            start_time: d.start_time,
            time: k,
            components,
        }),
        associations: h.associations.clone(),
    };
    let mut spawned = Vec::with_capacity(spawn_count);
    for (mi, mode) in model.modes.iter().enumerate().skip(1) {
        match alive {
            Some(c) => {
                let offset = mode.offset.offset(&c.component.last_mean())?;
                let comp = spawn_component(&c.component, &mode.f, &offset, &mode.q, mi as u8 + 1)?;
                spawned.push(LocalHypothesis {
                    log_weight: 0.0,
                    existence: h.existence * mode.probability * c.beta,
                    density: Some(BranchDensity::alive(k, k, comp)),
                    associations: Vec::new(),
                });
            }
            None => spawned.push(empty.clone()),
        }
    }
    Ok((surviving, spawned))
}

/// Genealogy prefix of a branch spawned at `k` with mode `m` from `slot`.
fn spawned_prefix(tree: &BernoulliTree, slot: &BranchSlot, k: u32, m: u8) -> Result<GenealogyVar> {
    let parent_generations = (k - tree.start_time) as usize;
    let mut marks = slot.prefix.marks().to_vec();
    marks.resize(parent_generations, 1);
    marks.push(m);
    GenealogyVar::new(marks)
}

/// Prediction of one Bernoulli tree to step `k`. Slot `j` keeps its index
/// and the branch spawned from it with mode `m` gets index `j + (m−1)·n`.
pub fn tree_predict(tree: &BernoulliTree, model: &FilterModel, k: u32) -> Result<BernoulliTree> {
    let n = tree.slots.len();
    let rho = model.modes.len();
    let mut slots: Vec<BranchSlot> = Vec::with_capacity(n * rho);
    let mut spawned: Vec<Vec<BranchSlot>> = (1..rho).map(|_| Vec::with_capacity(n)).collect();
    for slot in &tree.slots {
        let mut surviving = Vec::with_capacity(slot.hypotheses.len());
        let mut children: Vec<Vec<LocalHypothesis>> =
            (1..rho).map(|_| Vec::with_capacity(slot.hypotheses.len())).collect();
        for h in &slot.hypotheses {
            let (s, sp) = predict_hypothesis(h, model, k)?;
            surviving.push(s);
            for (dst, c) in children.iter_mut().zip(sp) {
                dst.push(c);
            }
        }
        slots.push(BranchSlot {
            prefix: slot.prefix.clone(),
            start_time: slot.start_time,
            hypotheses: surviving,
        });
        for (mi, hyps) in children.into_iter().enumerate() {
            spawned[mi].push(BranchSlot {
                prefix: spawned_prefix(tree, slot, k, mi as u8 + 2)?,
                start_time: k,
                hypotheses: hyps,
            });
        }
    }
    slots.extend(spawned.into_iter().flatten());
    Ok(BernoulliTree {
        start_time: tree.start_time,
        slots,
    })
}

/// Prediction of the whole posterior to the next time step.
pub fn predict(post: &PMBMPosterior, model: &FilterModel) -> Result<PMBMPosterior> {
    let k = post.time + 1;
    let ppp = ppp_predict(&post.ppp, model, k)?;
    let mut trees = post
        .trees
        .iter()
        .map(|t| tree_predict(t, model, k))
        .collect::<Result<Vec<_>>>()?;
    let rho = model.modes.len();
    let mut globals = post.globals.clone();
    if rho > 1 {
        for g in &mut globals {
            let mut sel = Selection::new();
            for t in g.selection.iter() {
                sel.push_tree(&t.repeat(rho));
            }
            g.selection = sel;
        }
    }
    if model.birth_kind == BirthKind::MultiBernoulli {
        for (i, b) in model.birth.iter().enumerate() {
            trees.push(BernoulliTree {
                start_time: k,
                slots: vec![BranchSlot {
                    prefix: GenealogyVar::root(),
                    start_time: k,
                    hypotheses: vec![LocalHypothesis {
                        log_weight: 0.0,
                        existence: b.weight,
                        density: Some(BranchDensity::alive(k, k, birth_component(model, i)?)),
                        associations: Vec::new(),
                    }],
                }],
            });
            for g in &mut globals {
                g.selection.push_tree(&[Some(0)]);
            }
        }
    }
    Ok(PMBMPosterior {
        time: k,
        ppp,
        trees,
        globals,
        measurement_counts: post.measurement_counts.clone(),
    })
}
