//! Tree PMBM recursion over sets of tree trajectories.
//!
//! Global hypotheses select one local hypothesis per branch slot. Local
//! hypotheses are shared between global hypotheses and referenced by index.

mod check;
pub mod discrete;
mod estimate;
mod predict;
mod prune;
mod update;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gauss::{BranchDensity, PPPComponent};
use crate::model::{
    BirthComponent, BirthKind, FilterParams, MeasurementModel, MotionMode, ScenarioConfig,
};
use crate::tree::{GenealogyVar, TreeTrajectory};

pub use check::{check_invariants, snapshot_json, InvariantReport};
pub use estimate::estimate;
pub use predict::{ppp_predict, predict, tree_predict};
pub use prune::prune;
pub use update::{form_globals, update, UpdatedPosterior};

/// Measurement index `(k, m)`: measurement `m` (0-based) at step `k`.
pub type MeasIndex = (u32, u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterKind {
    /// Poisson birth with spawning.
    TrPmbm,
    /// Multi-Bernoulli birth with spawning.
    TrMbm,
    /// Poisson birth without spawning.
    Tpmbm,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::TrPmbm => "TrPMBM",
            FilterKind::TrMbm => "TrMBM",
            FilterKind::Tpmbm => "TPMBM",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trpmbm" => Ok(FilterKind::TrPmbm),
            "trmbm" => Ok(FilterKind::TrMbm),
            "tpmbm" => Ok(FilterKind::Tpmbm),
            other => Err(Error::InvalidInput(format!(
                "unknown filter '{other}' (expected trpmbm, trmbm or tpmbm)"
            ))),
        }
    }
}

/// Models and tuning used by one filter instance.
#[derive(Clone, Debug)]
pub struct FilterModel {
    pub kind: FilterKind,
    pub state_dim: usize,
    pub modes: Vec<MotionMode>,
    pub measurement: MeasurementModel,
    pub birth: Vec<BirthComponent>,
    pub birth_kind: BirthKind,
    pub params: FilterParams,
}

impl FilterModel {
    pub fn new(cfg: &ScenarioConfig, kind: FilterKind) -> Result<Self> {
        cfg.validate()?;
        let mut modes = cfg.modes.clone();
        let birth_kind = match kind {
            FilterKind::TrPmbm => BirthKind::Poisson,
            FilterKind::TrMbm => BirthKind::MultiBernoulli,
            FilterKind::Tpmbm => {
                modes.truncate(1);
                BirthKind::Poisson
            }
        };
        if birth_kind == BirthKind::MultiBernoulli && cfg.birth.iter().any(|b| b.weight > 1.0) {
            return Err(Error::Config(vec![
                "multi-Bernoulli birth needs component weights in [0, 1]".into(),
            ]));
        }
        Ok(Self {
            kind,
            state_dim: cfg.state_dim,
            modes,
            measurement: cfg.measurement.clone(),
            birth: cfg.birth.clone(),
            birth_kind,
            params: cfg.filter.clone(),
        })
    }

    /// Filter implied by the scenario's own birth type and ϱ.
    pub fn from_scenario(cfg: &ScenarioConfig) -> Result<Self> {
        let kind = match cfg.birth_kind {
            BirthKind::Poisson => FilterKind::TrPmbm,
            BirthKind::MultiBernoulli => FilterKind::TrMbm,
        };
        Self::new(cfg, kind)
    }

    pub fn with_lscan(mut self, l: usize) -> Self {
        self.params.lscan = l.max(1);
        self
    }

    pub fn rho(&self) -> usize {
        self.modes.len()
    }
}

/// One association history of a branch.
#[derive(Clone, Debug)]
pub struct LocalHypothesis {
    /// Log of the local hypothesis weight.
    pub log_weight: f64,
    pub existence: f64,
    /// `None` for inert hypotheses, kept only for their associations.
    pub density: Option<BranchDensity>,
    pub associations: Vec<MeasIndex>,
}

impl LocalHypothesis {
    pub fn is_inert(&self) -> bool {
        self.density.is_none() || self.existence == 0.0
    }

    /// Probability the branch exists and is alive at the current time.
    pub fn alive_mass(&self) -> f64 {
        self.density
            .as_ref()
            .map_or(0.0, |d| self.existence * d.beta(d.time))
    }
}

/// A potential branch of a Bernoulli tree.
#[derive(Clone, Debug)]
pub struct BranchSlot {
    /// Genealogy up to and including the generation the branch started.
    pub prefix: GenealogyVar,
    pub start_time: u32,
    pub hypotheses: Vec<LocalHypothesis>,
}

#[derive(Clone, Debug)]
pub struct BernoulliTree {
    pub start_time: u32,
    pub slots: Vec<BranchSlot>,
}

/// Selected local hypothesis per tree and slot; `None` if the slot does not
/// exist under the global hypothesis. Stored flat, one run of slots per tree.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Selection {
    ends: Vec<u32>,
    slots: Vec<Option<u32>>,
}

impl Selection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a [Option<u32>]>) -> Self {
        let mut s = Self::new();
        for t in trees {
            s.push_tree(t);
        }
        s
    }

    pub fn num_trees(&self) -> usize {
        self.ends.len()
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        let start = if i == 0 { 0 } else { self.ends[i - 1] as usize };
        start..self.ends[i] as usize
    }

    pub fn tree(&self, i: usize) -> &[Option<u32>] {
        &self.slots[self.range(i)]
    }

    pub fn tree_mut(&mut self, i: usize) -> &mut [Option<u32>] {
        let r = self.range(i);
        &mut self.slots[r]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        self.tree(i)[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Option<u32>]> + '_ {
        (0..self.num_trees()).map(|i| self.tree(i))
    }

    pub fn push_tree(&mut self, slots: &[Option<u32>]) {
        self.slots.extend_from_slice(slots);
        self.ends.push(self.slots.len() as u32);
    }

    pub fn to_nested(&self) -> Vec<Vec<Option<u32>>> {
        self.iter().map(<[_]>::to_vec).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalHypothesis {
    pub log_weight: f64,
    pub selection: Selection,
    /// Measurements whose trees were pruned, kept so every measurement stays
    /// accounted for.
    pub retired: Vec<MeasIndex>,
}

impl GlobalHypothesis {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

#[derive(Clone, Debug)]
pub struct PMBMPosterior {
    pub time: u32,
    pub ppp: Vec<PPPComponent>,
    pub trees: Vec<BernoulliTree>,
    pub globals: Vec<GlobalHypothesis>,
    /// Number of measurements received at steps `1..=time`.
    pub measurement_counts: Vec<u32>,
}

impl Default for PMBMPosterior {
    fn default() -> Self {
        Self::new()
    }
}

impl PMBMPosterior {
    /// Empty prior before the first step.
    pub fn new() -> Self {
        Self {
            time: 0,
            ppp: Vec::new(),
            trees: Vec::new(),
            globals: vec![GlobalHypothesis {
                log_weight: 0.0,
                selection: Selection::new(),
                retired: Vec::new(),
            }],
            measurement_counts: Vec::new(),
        }
    }

    pub fn best_global(&self) -> Option<&GlobalHypothesis> {
        self.globals
            .iter()
            .fold(None, |best: Option<&GlobalHypothesis>, g| match best {
                Some(b) if b.log_weight >= g.log_weight => Some(b),
                _ => Some(g),
            })
    }

    pub fn num_local_hypotheses(&self) -> usize {
        self.trees
            .iter()
            .flat_map(|t| &t.slots)
            .map(|s| s.hypotheses.len())
            .sum()
    }

    pub fn num_slots(&self) -> usize {
        self.trees.iter().map(|t| t.slots.len()).sum()
    }
}

pub(crate) fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// One full recursion: predict, update, hypothesis formation, pruning.
pub fn step(
    post: &PMBMPosterior,
    measurements: &[DVector<f64>],
    model: &FilterModel,
) -> Result<PMBMPosterior> {
    let predicted = predict(post, model)?;
    let updated = update(&predicted, measurements, model)?;
    let formed = form_globals(updated, model)?;
    let pruned = prune(formed, &model.params);
    if pruned.globals.iter().any(|g| !g.log_weight.is_finite()) {
        return Err(Error::Divergence {
            step: pruned.time,
            message: "non-finite global hypothesis weight".into(),
        });
    }
    Ok(pruned)
}

/// Runs the filter over a measurement sequence, returning the estimate after
/// every step.
pub fn run_filter(
    measurements: &[Vec<DVector<f64>>],
    model: &FilterModel,
) -> Result<Vec<Vec<TreeTrajectory>>> {
    let mut post = PMBMPosterior::new();
    let mut out = Vec::with_capacity(measurements.len());
    for zs in measurements {
        post = step(&post, zs, model)?;
        out.push(estimate(&post, model.params.gamma_d)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_layout() {
        let mut s = Selection::from_trees([&[Some(0), None][..], &[][..]]);
        s.push_tree(&[Some(2)]);
        assert_eq!(s.num_trees(), 3);
        assert_eq!(s.tree(1), &[]);
        assert_eq!(s.get(2, 0), Some(2));
        s.tree_mut(0)[1] = Some(1);
        assert_eq!(s.to_nested(), vec![vec![Some(0), Some(1)], vec![], vec![Some(2)]]);
    }
}
