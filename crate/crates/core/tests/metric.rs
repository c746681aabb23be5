mod common;

use common::oracles::{metric_by_enumeration, random_track};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trpmbm_core::metric::{branches_as_tracks, trajectory_metric, TrajMetricParams, Track};
use trpmbm_core::tree::{Branch, GenealogyVar, TreeTrajectory};

fn instance(rng: &mut ChaCha8Rng) -> (Vec<Track>, Vec<Track>, u32) {
    let k = rng.random_range(1..=4);
    let nx = rng.random_range(0..=3);
    let ny = rng.random_range(0..=3);
    let est = (0..nx).map(|i| random_track(rng, k, &format!("x{i}"))).collect();
    let truth = (0..ny).map(|i| random_track(rng, k, &format!("y{i}"))).collect();
    (est, truth, k)
}

#[test]
fn lp_matches_enumeration() {
    let params = TrajMetricParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (est, truth, k) = instance(&mut rng);
        let m = trajectory_metric(&est, &truth, &params, k).unwrap();
        let brute = metric_by_enumeration(&est, &truth, params.p, params.c, params.gamma, k);
        let expected = (brute / k as f64).sqrt();
        worst = worst.max((m.total - expected).abs());
        let parts: f64 = m.components().iter().map(|x| x * x).sum();
        assert!((m.total * m.total - parts).abs() <= 1e-9 * parts.max(1.0));
    }
    assert!(worst <= 1e-6, "max deviation {worst}");
}

#[test]
fn simple_switch_costs() {
    // one estimate following two truths in turn: switching once beats
    // leaving one of them unmatched
    let est = vec![Track::new("x", 1, vec![[0.0, 0.0], [0.0, 0.0], [50.0, 0.0], [50.0, 0.0]])];
    let truth = vec![
        Track::new("a", 1, vec![[0.0, 0.0], [0.0, 0.0]]),
        Track::new("b", 3, vec![[50.0, 0.0], [50.0, 0.0]]),
    ];
    let m = trajectory_metric(&est, &truth, &TrajMetricParams::default(), 4).unwrap();
    let brute = metric_by_enumeration(&est, &truth, 2.0, 10.0, 1.0, 4);
    assert!((m.total - (brute / 4.0).sqrt()).abs() < 1e-9);
    assert!(m.switch > 0.0);
}

#[test]
fn branch_with_death_is_alive_two_steps() {
    let g = GenealogyVar::new(vec![1, 1, 0]).unwrap();
    let x = nalgebra::DVector::from_vec(vec![1.0, 0.0, 2.0, 0.0]);
    let tree = TreeTrajectory {
        start_time: 4,
        branches: vec![Branch::new(g, vec![x.clone(), x]).unwrap()],
    };
    let tracks = branches_as_tracks(&[tree]);
    assert_eq!(tracks.len(), 1);
    assert_eq!(tracks[0].start, 4);
    assert_eq!(tracks[0].positions, vec![[1.0, 2.0], [1.0, 2.0]]);
    assert!(branches_as_tracks(&[]).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metric_axioms(seed in any::<u64>()) {
        let params = TrajMetricParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 4;
        let set = |rng: &mut ChaCha8Rng| -> Vec<Track> {
            let n = rng.random_range(0..=2);
            (0..n).map(|i| random_track(rng, k, &format!("{i}"))).collect()
        };
        let a = set(&mut rng);
        let b = set(&mut rng);
        let c = set(&mut rng);
        let d = |x: &[Track], y: &[Track]| trajectory_metric(x, y, &params, k).unwrap().total;
        prop_assert!(d(&a, &a) < 1e-6);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-6);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-6);
        let wider = TrajMetricParams { c: 20.0, ..params };
        prop_assert!(trajectory_metric(&a, &b, &wider, k).unwrap().total + 1e-9 >= d(&a, &b));
    }
}
