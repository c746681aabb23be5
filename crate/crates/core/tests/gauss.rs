use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trpmbm_core::gauss::{
    l_scan_truncate_component, log_gaussian, predict_augment_survive, update_last_state,
    GaussianBranchComponent,
};
use trpmbm_core::model::{cv_noise, cv_transition};
use trpmbm_core::tree::GenealogyVar;

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

fn random_component(rng: &mut ChaCha8Rng, states: usize, nx: usize) -> GaussianBranchComponent {
    let n = states * nx;
    let mean = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    GaussianBranchComponent::new(GenealogyVar::alive(states).unwrap(), nx, mean, random_spd(rng, n)).unwrap()
}

/// Conditions the joint of (x, z = H_full x + v) on z, with no structure.
fn condition(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    h_full: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>, f64) {
    let s = h_full * cov * h_full.transpose() + r;
    let s_inv = s.clone().try_inverse().unwrap();
    let gain = cov * h_full.transpose() * &s_inv;
    let nu = z - h_full * mean;
    let m = mean + &gain * &nu;
    let p = cov - &gain * h_full * cov;
    let d = z.len() as f64;
    let quad = (nu.transpose() * &s_inv * &nu)[(0, 0)];
    let ll = -0.5 * (quad + s.determinant().ln() + d * (2.0 * std::f64::consts::PI).ln());
    (m, p, ll)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

#[test]
fn update_matches_conditioning_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let nx = rng.random_range(1..=4);
        let states = rng.random_range(1..=4);
        let nz = rng.random_range(1..=nx);
        let c = random_component(&mut rng, states, nx);
        let h = DMatrix::from_fn(nz, nx, |_, _| rng.random_range(-1.0..1.0));
        let r = random_spd(&mut rng, nz);
        let z = DVector::from_fn(nz, |_, _| rng.random_range(-5.0..5.0));
        let (u, ll) = update_last_state(&c, &z, &h, &r).unwrap();
        let n = states * nx;
        let mut h_full = DMatrix::zeros(nz, n);
        h_full.view_mut((0, n - nx), (nz, nx)).copy_from(&h);
        let (m, p, ll_ref) = condition(c.window_mean(), c.window_cov(), &h_full, &r, &z);
        assert!((u.window_mean() - m).amax() < 1e-10);
        assert!(max_abs(&(u.window_cov() - p)) < 1e-10);
        assert!((ll - ll_ref).abs() < 1e-10);
    }
}

#[test]
fn two_dimensional_likelihood_closed_form() {
    // S = diag(2, 8), nu = (1, 2): log N = -0.5 (0.5 + 0.5) - ln(2π) - 0.5 ln 16
    let nu = DVector::from_vec(vec![1.0, 2.0]);
    let s = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0]));
    let expected = -0.5 - (2.0 * std::f64::consts::PI).ln() - 0.5 * 16f64.ln();
    assert!((log_gaussian(&nu, &s).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn cv_model_sequence_stays_symmetric() {
    let f = cv_transition(1.0);
    let q = cv_noise(1.0, 0.01);
    let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let r = DMatrix::identity(2, 2) * 4.0;
    let d = DVector::zeros(4);
    let mean = DVector::from_vec(vec![300.0, 3.0, 170.0, 1.0]);
    let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![160.0 * 160.0, 1.0, 1e4, 1.0]));
    let mut c = GaussianBranchComponent::new(GenealogyVar::alive(1).unwrap(), 4, mean, cov).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..60 {
        c = predict_augment_survive(&c, &f, &d, &q).unwrap();
        let z = DVector::from_vec(vec![300.0 + 3.0 * k as f64 + rng.random_range(-2.0..2.0), 170.0 + k as f64]);
        c = update_last_state(&c, &z, &h, &r).unwrap().0;
        c = l_scan_truncate_component(&c, 5);
        let p = c.window_cov();
        assert!(max_abs(&(p - p.transpose())) < 1e-9);
        for b in c.frozen() {
            assert!(max_abs(&(&b.cov - b.cov.transpose())) < 1e-9);
        }
    }
    assert_eq!(c.num_states(), 61);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augment_preserves_existing_marginal(seed in any::<u64>(), states in 1usize..4, nx in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_component(&mut rng, states, nx);
        let f = DMatrix::from_fn(nx, nx, |_, _| rng.random_range(-1.0..1.0));
        let d = DVector::from_fn(nx, |_, _| rng.random_range(-1.0..1.0));
        let q = random_spd(&mut rng, nx);
        let p = predict_augment_survive(&c, &f, &d, &q).unwrap();
        let n = states * nx;
        prop_assert_eq!(p.window_mean().rows(0, n), c.window_mean().rows(0, n));
        prop_assert_eq!(p.window_cov().view((0, 0), (n, n)), c.window_cov().view((0, 0), (n, n)));
        prop_assert_eq!(p.genealogy().branch_length(), states + 1);
    }

    #[test]
    fn truncation_is_idempotent(seed in any::<u64>(), states in 1usize..7, l in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_component(&mut rng, states, 2);
        let once = l_scan_truncate_component(&c, l);
        let twice = l_scan_truncate_component(&once, l);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.window_states(), states.min(l));
        prop_assert_eq!(once.full_mean(), c.full_mean());
    }

    #[test]
    fn likelihood_is_a_density(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_component(&mut rng, 2, 2);
        let h = DMatrix::identity(2, 2);
        let r = random_spd(&mut rng, 2);
        let z = DVector::from_fn(2, |_, _| rng.random_range(-20.0..20.0));
        let (u, ll) = update_last_state(&c, &z, &h, &r).unwrap();
        prop_assert!(ll.exp() >= 0.0 && ll.is_finite());
        prop_assert!(max_abs(&(u.window_cov() - u.window_cov().transpose())) < 1e-9);
    }
}
