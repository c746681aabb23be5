//! Bernoulli-tree prediction on a finite state space.
//!
//! Same projection onto independent branches as the Gaussian filter, with
//! state-dependent survival and spawning probabilities. Used to check the
//! prediction against exhaustive evaluation of the exact tree transition.

use crate::error::{Error, Result};

/// Transition model on states `0..num_states`. Index 0 of `mode_probs` and
/// `transitions` is the surviving mode, index `m − 1` is spawning mode `m`.
#[derive(Clone, Debug)]
pub struct DiscreteModel {
    pub num_states: usize,
    /// `mode_probs[m][x]`: probability that mode `m + 1` occurs from `x`.
    pub mode_probs: Vec<Vec<f64>>,
    /// `transitions[m][x][y]`: probability of moving to `y` under mode `m + 1`.
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl DiscreteModel {
    pub fn rho(&self) -> usize {
        self.mode_probs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_states;
        if self.mode_probs.is_empty() || self.transitions.len() != self.mode_probs.len() {
            return Err(Error::InvalidInput("one probability vector and kernel per mode".into()));
        }
        for (p, g) in self.mode_probs.iter().zip(&self.transitions) {
            if p.len() != n || g.len() != n || g.iter().any(|row| row.len() != n) {
                return Err(Error::DimensionMismatch(format!("mode tables must cover {n} states")));
            }
            if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidInput("mode probability outside [0, 1]".into()));
            }
            for row in g {
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput("transition rows must sum to 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Branch that ends at `end_time` with probability `beta`; `sequences`
/// is the normalized distribution over its state sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteComponent {
    pub end_time: u32,
    pub beta: f64,
    pub sequences: Vec<(Vec<usize>, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteBranch {
    pub existence: f64,
    pub start_time: u32,
    pub components: Vec<DiscreteComponent>,
}

impl DiscreteBranch {
    pub fn beta(&self, end_time: u32) -> f64 {
        self.components
            .iter()
            .filter(|c| c.end_time == end_time)
            .map(|c| c.beta)
            .sum()
    }
}

fn accumulate(out: &mut Vec<(Vec<usize>, f64)>, seq: Vec<usize>, p: f64) {
    match out.iter_mut().find(|(s, _)| *s == seq) {
        Some(e) => e.1 += p,
        None => out.push((seq, p)),
    }
}

/// Predicts the branches of one tree from `k − 1` to `k`. Branch `j` keeps
/// its index; the branch spawned from it with mode `m` gets `j + (m−1)·n`.
pub fn predict_branches(
    branches: &[DiscreteBranch],
    model: &DiscreteModel,
    k: u32,
) -> Result<Vec<DiscreteBranch>> {
    model.validate()?;
    let n = branches.len();
    let rho = model.rho();
    let mut out: Vec<DiscreteBranch> = Vec::with_capacity(n * rho);
    let mut spawned: Vec<DiscreteBranch> = Vec::with_capacity(n * (rho - 1));
    let ps = &model.mode_probs[0];
    let g1 = &model.transitions[0];
    for b in branches {
        let mut components = Vec::with_capacity(b.components.len() + 1);
        let alive = b.components.iter().find(|c| c.end_time == k - 1 && c.beta > 0.0);
        for c in &b.components {
            if c.end_time != k - 1 {
                components.push(c.clone());
                continue;
            }
            let p_s: f64 = c.sequences.iter().map(|(s, p)| p * ps[*s.last().unwrap()]).sum();
            let mut dead = Vec::new();
            let mut live = Vec::new();
            for (seq, p) in &c.sequences {
                let x = *seq.last().unwrap();
                if p_s < 1.0 {
                    accumulate(&mut dead, seq.clone(), p * (1.0 - ps[x]) / (1.0 - p_s));
                }
                if p_s > 0.0 {
                    for y in 0..model.num_states {
                        let mut next = seq.clone();
                        next.push(y);
                        accumulate(&mut live, next, p * ps[x] * g1[x][y] / p_s);
                    }
                }
            }
            if p_s < 1.0 {
                components.push(DiscreteComponent {
                    end_time: k - 1,
                    beta: (1.0 - p_s) * c.beta,
                    sequences: dead,
                });
            }
            if p_s > 0.0 {
                components.push(DiscreteComponent {
                    end_time: k,
                    beta: p_s * c.beta,
                    sequences: live,
                });
            }
        }
        out.push(DiscreteBranch {
            existence: b.existence,
            start_time: b.start_time,
            components,
        });

        for m in 1..rho {
            let pm = &model.mode_probs[m];
            let gm = &model.transitions[m];
            let Some(c) = alive else {
                spawned.push(DiscreteBranch {
                    existence: 0.0,
                    start_time: k,
                    components: Vec::new(),
                });
                continue;
            };
            let mass: f64 = c.sequences.iter().map(|(s, p)| p * pm[*s.last().unwrap()]).sum();
            let mut seqs = Vec::new();
            if mass > 0.0 {
                for (seq, p) in &c.sequences {
                    let x = *seq.last().unwrap();
                    for y in 0..model.num_states {
                        accumulate(&mut seqs, vec![y], p * pm[x] * gm[x][y] / mass);
                    }
                }
            }
            spawned.push(DiscreteBranch {
                existence: b.existence * mass * c.beta,
                start_time: k,
                components: if mass > 0.0 {
                    vec![DiscreteComponent {
                        end_time: k,
                        beta: 1.0,
                        sequences: seqs,
                    }]
                } else {
                    Vec::new()
                },
            });
        }
    }
    // spawned is ordered by parent then mode; reorder to mode then parent
    for m in 0..rho - 1 {
        for j in 0..n {
            out.push(spawned[j * (rho - 1) + m].clone());
        }
    }
    Ok(out)
}
