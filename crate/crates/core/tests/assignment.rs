mod common;

use std::collections::HashSet;

use common::oracles::{all_assignments, random_cost_matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trpmbm_core::assignment::{hungarian, murty_kbest, CostMatrix};
use trpmbm_core::Error;

#[test]
fn hungarian_matches_enumeration_on_6x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let c = random_cost_matrix(&mut rng, 6, 8, 0.0);
        let best = all_assignments(&c)[0].1;
        let a = hungarian(&c).unwrap();
        assert!((a.cost - best).abs() < 1e-12, "{} vs {best}", a.cost);
        assert_eq!(c.cost_of(&a.columns), a.cost);
    }
}

#[test]
fn murty_matches_enumeration_on_5x7() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let c = random_cost_matrix(&mut rng, 5, 7, 0.2);
        let all = all_assignments(&c);
        match murty_kbest(&c, 10) {
            Ok(got) => {
                assert_eq!(got.len(), all.len().min(10));
                for (g, e) in got.iter().zip(&all) {
                    assert!((g.cost - e.1).abs() < 1e-12);
                }
            }
            Err(Error::Infeasible { .. }) => assert!(all.is_empty()),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn murty_first_is_hungarian() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let rows = rng.random_range(1..6);
        let cols = rng.random_range(rows..8);
        let c = random_cost_matrix(&mut rng, rows, cols, 0.0);
        assert_eq!(murty_kbest(&c, 1).unwrap()[0], hungarian(&c).unwrap());
    }
}

fn small_matrix() -> impl Strategy<Value = CostMatrix> {
    (1usize..5, 0usize..3).prop_flat_map(|(rows, extra)| {
        let cols = rows + extra;
        prop::collection::vec(prop_oneof![9 => (-20i32..20).prop_map(f64::from), 1 => Just(f64::INFINITY)], rows * cols)
            .prop_map(move |data| CostMatrix::new(rows, cols, data).unwrap())
    })
}

proptest! {
    #[test]
    fn kbest_is_sorted_distinct_and_consistent(c in small_matrix(), k in 1usize..12) {
        if let Ok(got) = murty_kbest(&c, k) {
            let mut seen = HashSet::new();
            for w in got.windows(2) {
                prop_assert!(w[0].cost <= w[1].cost);
            }
            for a in &got {
                prop_assert!(seen.insert(a.columns.clone()));
                prop_assert_eq!(c.cost_of(&a.columns), a.cost);
                let mut cols = a.columns.clone();
                cols.sort();
                cols.dedup();
                prop_assert_eq!(cols.len(), c.rows());
            }
            let all = all_assignments(&c);
            prop_assert_eq!(got.len(), all.len().min(k));
        }
    }

    #[test]
    fn row_shift_shifts_costs(c in small_matrix(), row_seed in 0usize..8, shift in -5i32..5) {
        let row = row_seed % c.rows();
        let shift = f64::from(shift);
        let data: Vec<f64> = (0..c.rows())
            .flat_map(|i| (0..c.cols()).map(move |j| (i, j)))
            .map(|(i, j)| if i == row { c.get(i, j) + shift } else { c.get(i, j) })
            .collect();
        let shifted = CostMatrix::new(c.rows(), c.cols(), data).unwrap();
        if let (Ok(a), Ok(b)) = (murty_kbest(&c, 6), murty_kbest(&shifted, 6)) {
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.cost + shift, y.cost);
                prop_assert_eq!(&x.columns, &y.columns);
            }
        }
    }
}
