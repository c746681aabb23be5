//! Random test cases shared by several test targets.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use trpmbm_core::filter::discrete::{DiscreteBranch, DiscreteComponent, DiscreteModel};

/// Random two-mode model on `ns` states.
pub fn random_discrete_model(rng: &mut ChaCha8Rng, ns: usize) -> DiscreteModel {
    let probs = |rng: &mut ChaCha8Rng| (0..ns).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>();
    let kernel = |rng: &mut ChaCha8Rng| {
        (0..ns)
            .map(|_| {
                let row: Vec<f64> = (0..ns).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = row.iter().sum();
                let mut row: Vec<f64> = row.iter().map(|x| x / s).collect();
                let rest: f64 = row[1..].iter().sum();
                row[0] = 1.0 - rest;
                row
            })
            .collect::<Vec<_>>()
    };
    let p1 = probs(rng);
    let p2: Vec<f64> = probs(rng).iter().map(|p| p * 0.5).collect();
    DiscreteModel {
        num_states: ns,
        mode_probs: vec![p1, p2],
        transitions: vec![kernel(rng), kernel(rng)],
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, ns: usize, len: usize) -> Vec<(Vec<usize>, f64)> {
    let count = rng.random_range(1..=3);
    let mut seqs: Vec<(Vec<usize>, f64)> = Vec::new();
    for _ in 0..count {
        let seq: Vec<usize> = (0..len).map(|_| rng.random_range(0..ns)).collect();
        if seqs.iter().all(|(s, _)| *s != seq) {
            seqs.push((seq, rng.random_range(0.1..1.0)));
        }
    }
    let total: f64 = seqs.iter().map(|s| s.1).sum();
    seqs.iter().map(|(s, w)| (s.clone(), w / total)).collect()
}

/// `n` branches started at step 2, each ending at step 2 or alive at 3.
pub fn random_discrete_prior(rng: &mut ChaCha8Rng, ns: usize, n: usize) -> Vec<DiscreteBranch> {
    (0..n)
        .map(|_| {
            let beta = rng.random_range(0.2..1.0);
            DiscreteBranch {
                existence: rng.random_range(0.1..1.0),
                start_time: 2,
                components: vec![
                    DiscreteComponent {
                        end_time: 2,
                        beta: 1.0 - beta,
                        sequences: random_distribution(rng, ns, 1),
                    },
                    DiscreteComponent {
                        end_time: 3,
                        beta,
                        sequences: random_distribution(rng, ns, 2),
                    },
                ],
            }
        })
        .collect()
}

/// Largest absolute difference between predicted branch masses and the
/// exact marginals.
pub fn discrete_deviation(
    predicted: &[DiscreteBranch],
    exact: &[std::collections::HashMap<(u32, Vec<usize>), f64>],
) -> f64 {
    assert_eq!(predicted.len(), exact.len());
    let mut worst: f64 = 0.0;
    for (b, marg) in predicted.iter().zip(exact) {
        let mass: f64 = marg.values().sum();
        worst = worst.max((b.existence - mass).abs());
        for c in &b.components {
            for (seq, p) in &c.sequences {
                let want = marg.get(&(c.end_time, seq.clone())).copied().unwrap_or(0.0);
                worst = worst.max((b.existence * c.beta * p - want).abs());
            }
        }
        for ((kappa, seq), want) in marg {
            let got: f64 = b
                .components
                .iter()
                .filter(|c| c.end_time == *kappa)
                .flat_map(|c| c.sequences.iter().filter(|s| s.0 == *seq).map(move |s| c.beta * s.1))
                .sum::<f64>()
                * b.existence;
            worst = worst.max((got - want).abs());
        }
    }
    worst
}
