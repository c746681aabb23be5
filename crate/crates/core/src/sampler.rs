//! Ground-truth and measurement sampling.
//!
//! Each (run, time step, tree) gets its own ChaCha stream, so runs can be
//! sampled in any order or in parallel and still be reproducible.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{BirthComponent, ScenarioConfig};
use crate::tree::{targets_at_time, Branch, GenealogyVar, TreeTrajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Birth = 1,
    Tree = 2,
    Measurement = 3,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Random stream for one (purpose, run, step, index) cell.
pub fn stream(seed: u64, purpose: Purpose, run: u64, step: u32, index: u32) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ purpose as u64) ^ run);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(((step as u64) << 32) | index as u64);
    rng
}

/// Draws from `𝒩(mean, cov)`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let l = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("sampling covariance not positive definite".into()))?
        .unpack();
    let n = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + l * n)
}

fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |p| p.sample(rng) as usize)
}

fn pick_component<'a, R: Rng + ?Sized>(
    rng: &mut R,
    birth: &'a [BirthComponent],
    total: f64,
) -> &'a BirthComponent {
    let mut u = rng.random::<f64>() * total;
    for b in birth {
        if u < b.weight {
            return b;
        }
        u -= b.weight;
    }
    birth.last().expect("nonempty birth model")
}

struct LiveBranch {
    marks: Vec<u8>,
    states: Vec<DVector<f64>>,
}

struct LiveTree {
    start: u32,
    branches: Vec<LiveBranch>,
}

/// Samples trees from the dynamic model over `cfg.horizon` steps. Births are
/// Poisson with mean equal to the total birth weight; spawning modes are
/// independent Bernoulli events evaluated at the true parent state.
pub fn sample_ground_truth(cfg: &ScenarioConfig, seed: u64, run: u64) -> Result<Vec<TreeTrajectory>> {
    cfg.validate()?;
    let birth_rate: f64 = cfg.birth.iter().map(|b| b.weight).sum();
    let mut trees: Vec<LiveTree> = Vec::new();
    for k in 1..=cfg.horizon {
        for (ti, tree) in trees.iter_mut().enumerate() {
            let mut rng = stream(seed, Purpose::Tree, run, k, ti as u32);
            let gen = (k - tree.start) as usize;
            let mut spawned = Vec::new();
            for b in tree.branches.iter_mut() {
                if b.marks.len() != gen || *b.marks.last().unwrap() == 0 {
                    b.marks.resize(gen + 1, 0);
                    continue;
                }
                let x = b.states.last().unwrap().clone();
                let survival = &cfg.modes[0];
                if rng.random::<f64>() < survival.probability {
                    let mean = &survival.f * &x + survival.offset.offset(&x)?;
                    b.states.push(sample_gaussian(&mut rng, &mean, &survival.q)?);
                    b.marks.push(1);
                } else {
                    b.marks.push(0);
                }
                for (mi, mode) in cfg.modes.iter().enumerate().skip(1) {
                    if rng.random::<f64>() < mode.probability {
                        let mean = &mode.f * &x + mode.offset.offset(&x)?;
                        let mut marks = b.marks[..gen].to_vec();
                        marks.push(mi as u8 + 1);
                        spawned.push(LiveBranch {
                            marks,
                            states: vec![sample_gaussian(&mut rng, &mean, &mode.q)?],
                        });
                    }
                }
            }
            tree.branches.extend(spawned);
        }
        let mut rng = stream(seed, Purpose::Birth, run, k, 0);
        let n = sample_poisson(&mut rng, birth_rate);
        for _ in 0..n {
            let c = pick_component(&mut rng, &cfg.birth, birth_rate);
            trees.push(LiveTree {
                start: k,
                branches: vec![LiveBranch {
                    marks: vec![1],
                    states: vec![sample_gaussian(&mut rng, &c.mean, &c.cov)?],
                }],
            });
        }
    }
    trees
        .into_iter()
        .map(|t| {
            let nu = (cfg.horizon - t.start + 1) as usize;
            let branches = t
                .branches
                .into_iter()
                .map(|mut b| {
                    b.marks.resize(nu, 0);
                    Branch::new(GenealogyVar::new(b.marks)?, b.states)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TreeTrajectory {
                start_time: t.start,
                branches,
            })
        })
        .collect()
}

/// Measurements at step `k`: detections of alive targets (in tree and branch
/// order) followed by uniform clutter.
pub fn sample_measurements(
    truth: &[TreeTrajectory],
    cfg: &ScenarioConfig,
    k: u32,
    seed: u64,
    run: u64,
) -> Result<Vec<DVector<f64>>> {
    if k == 0 || k > cfg.horizon {
        return Err(Error::OutOfRange {
            k,
            first: 1,
            last: cfg.horizon,
        });
    }
    let mm = &cfg.measurement;
    let mut rng = stream(seed, Purpose::Measurement, run, k, 0);
    let mut out = Vec::new();
    let zero = DVector::zeros(mm.h.nrows());
    for tree in truth {
        if k < tree.start_time || k > tree.end_time() {
            continue;
        }
        for x in targets_at_time(tree, k)? {
            if rng.random::<f64>() < mm.detection_probability {
                let noise = sample_gaussian(&mut rng, &zero, &mm.r)?;
                out.push(&mm.h * x + noise);
            }
        }
    }
    let n = sample_poisson(&mut rng, mm.clutter_rate);
    for _ in 0..n {
        out.push(DVector::from_iterator(
            mm.region.len(),
            mm.region.iter().map(|&(lo, hi)| rng.random_range(lo..hi)),
        ));
    }
    Ok(out)
}

/// Measurement sets for steps `1..=horizon`.
pub fn sample_measurement_sequence(
    truth: &[TreeTrajectory],
    cfg: &ScenarioConfig,
    seed: u64,
    run: u64,
) -> Result<Vec<Vec<DVector<f64>>>> {
    (1..=cfg.horizon)
        .map(|k| sample_measurements(truth, cfg, k, seed, run))
        .collect()
}

/// Hash of the exact bit patterns of a measurement sequence.
pub fn measurement_hash(measurements: &[Vec<DVector<f64>>]) -> u64 {
    let mut h = DefaultHasher::new();
    for (k, zs) in measurements.iter().enumerate() {
        k.hash(&mut h);
        zs.len().hash(&mut h);
        for z in zs {
            for v in z.iter() {
                v.to_bits().hash(&mut h);
            }
        }
    }
    h.finish()
}

/// CSV `k,z1,z2,…` with one row per measurement.
pub fn measurements_to_csv(measurements: &[Vec<DVector<f64>>]) -> String {
    let dim = measurements
        .iter()
        .flatten()
        .map(|z| z.len())
        .next()
        .unwrap_or(2);
    let mut out = String::from("k");
    for i in 1..=dim {
        out.push_str(&format!(",z{i}"));
    }
    out.push('\n');
    for (k, zs) in measurements.iter().enumerate() {
        for z in zs {
            out.push_str(&(k + 1).to_string());
            for v in z.iter() {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::validate_tree;

    fn deterministic_birth() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::paper_default();
        cfg.horizon = 20;
        cfg.modes[0].probability = 1.0;
        cfg.modes[1].probability = 0.0;
        cfg.modes[2].probability = 0.0;
        cfg
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = stream(1, Purpose::Tree, 0, 3, 2).random();
        let b: u64 = stream(1, Purpose::Tree, 0, 3, 2).random();
        let c: u64 = stream(1, Purpose::Tree, 0, 3, 3).random();
        let d: u64 = stream(1, Purpose::Tree, 1, 3, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn no_spawning_gives_single_branches() {
        let mut cfg = ScenarioConfig::paper_default();
        cfg.modes[1].probability = 0.0;
        cfg.modes[2].probability = 0.0;
        for run in 0..20 {
            let truth = sample_ground_truth(&cfg, 5, run).unwrap();
            assert!(truth.iter().all(|t| t.branches.len() == 1));
        }
    }

    #[test]
    fn immortal_target_has_full_branch() {
        let cfg = deterministic_birth();
        let truth = sample_ground_truth(&cfg, 3, 0).unwrap();
        for t in &truth {
            assert_eq!(t.branches.len(), 1);
            let b = &t.branches[0];
            assert!(b.genealogy.marks().iter().all(|&m| m == 1));
            assert_eq!(b.states.len() as u32, cfg.horizon - t.start_time + 1);
        }
    }

    #[test]
    fn sampled_trees_are_valid() {
        let mut cfg = ScenarioConfig::paper_default();
        cfg.horizon = 40;
        cfg.modes[1].probability = 0.05;
        cfg.modes[2].probability = 0.05;
        for run in 0..30 {
            for t in sample_ground_truth(&cfg, 9, run).unwrap() {
                let report = validate_tree(&t, cfg.rho());
                assert!(report.is_valid(), "{:?}", report.violations);
            }
        }
    }

    #[test]
    fn empty_measurements() {
        let mut cfg = deterministic_birth();
        cfg.measurement.detection_probability = 0.0;
        cfg.measurement.clutter_rate = 0.0;
        let truth = sample_ground_truth(&cfg, 3, 0).unwrap();
        for k in 1..=cfg.horizon {
            assert!(sample_measurements(&truth, &cfg, k, 3, 0).unwrap().is_empty());
        }
    }

    #[test]
    fn perfect_measurements() {
        let mut cfg = deterministic_birth();
        cfg.measurement.detection_probability = 1.0;
        cfg.measurement.clutter_rate = 0.0;
        cfg.measurement.r = DMatrix::identity(2, 2) * 1e-20;
        let truth = sample_ground_truth(&cfg, 4, 1).unwrap();
        for k in 1..=cfg.horizon {
            let zs = sample_measurements(&truth, &cfg, k, 4, 1).unwrap();
            let xs: Vec<_> = truth
                .iter()
                .filter(|t| t.start_time <= k)
                .flat_map(|t| targets_at_time(t, k).unwrap())
                .collect();
            assert_eq!(zs.len(), xs.len());
            for (z, x) in zs.iter().zip(xs) {
                assert!((z - &cfg.measurement.h * x).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn out_of_range_step() {
        let cfg = deterministic_birth();
        assert!(sample_measurements(&[], &cfg, 0, 1, 0).is_err());
        assert!(sample_measurements(&[], &cfg, 21, 1, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        use nalgebra::dvector;
        let csv = measurements_to_csv(&[vec![dvector![1.0, 2.5]], vec![], vec![dvector![3.0, 4.0]]]);
        assert_eq!(csv, "k,z1,z2\n1,1.0,2.5\n3,3.0,4.0\n");
    }
}
