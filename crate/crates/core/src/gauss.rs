//! Gaussian single-branch densities over state sequences.
//!
//! A component holds the joint Gaussian of a branch's state sequence. The
//! most recent states live in a dense window; states pushed out by the
//! L-scan truncation are stored as frozen blocks, independent of the window
//! and of each other.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::tree::GenealogyVar;

pub const SYMMETRY_TOL: f64 = 1e-9;
const JITTER: f64 = 1e-9;

/// States older than the live window, frozen by the L-scan truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenBlock {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBranchComponent {
    genealogy: GenealogyVar,
    state_dim: usize,
    frozen: Vec<FrozenBlock>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianBranchComponent {
    pub fn new(
        genealogy: GenealogyVar,
        state_dim: usize,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = genealogy.branch_length() * state_dim;
        if state_dim == 0 || mean.len() != n || cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "branch ({genealogy}) with n_x={state_dim} needs mean {n} and cov {n}x{n}, got {} and {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let mut c = Self {
            genealogy,
            state_dim,
            frozen: Vec::new(),
            mean,
            cov,
        };
        c.symmetrize();
        Ok(c)
    }

    pub fn genealogy(&self) -> &GenealogyVar {
        &self.genealogy
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn frozen(&self) -> &[FrozenBlock] {
        &self.frozen
    }

    /// Mean of the live window.
    pub fn window_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Covariance of the live window.
    pub fn window_cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn window_states(&self) -> usize {
        self.mean.len() / self.state_dim
    }

    pub fn num_states(&self) -> usize {
        self.window_states()
            + self
                .frozen
                .iter()
                .map(|b| b.mean.len() / self.state_dim)
                .sum::<usize>()
    }

    pub fn last_mean(&self) -> DVector<f64> {
        let n = self.mean.len();
        self.mean.rows(n - self.state_dim, self.state_dim).into_owned()
    }

    pub fn last_cov(&self) -> DMatrix<f64> {
        let n = self.mean.len();
        let s = n - self.state_dim;
        self.cov
            .view((s, s), (self.state_dim, self.state_dim))
            .into_owned()
    }

    /// Mean of the whole state sequence, oldest first.
    pub fn full_mean(&self) -> DVector<f64> {
        let parts: Vec<f64> = self
            .frozen
            .iter()
            .flat_map(|b| b.mean.iter().copied())
            .chain(self.mean.iter().copied())
            .collect();
        DVector::from_vec(parts)
    }

    /// Dense covariance of the whole sequence; frozen blocks on the diagonal.
    pub fn full_cov(&self) -> DMatrix<f64> {
        let n = self.num_states() * self.state_dim;
        let mut out = DMatrix::zeros(n, n);
        let mut at = 0;
        for block in self.frozen.iter().map(|b| &b.cov).chain(std::iter::once(&self.cov)) {
            let m = block.nrows();
            out.view_mut((at, at), (m, m)).copy_from(block);
            at += m;
        }
        out
    }

    /// States as separate vectors, oldest first.
    pub fn states(&self) -> Vec<DVector<f64>> {
        let full = self.full_mean();
        full.as_slice()
            .chunks(self.state_dim)
            .map(DVector::from_column_slice)
            .collect()
    }

    fn symmetrize(&mut self) {
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
    }

    /// Largest asymmetry and smallest eigenvalue over the window and frozen
    /// blocks.
    pub fn covariance_health(&self) -> (f64, f64) {
        let mut asym: f64 = 0.0;
        let mut min_eig = f64::INFINITY;
        for c in self.frozen.iter().map(|b| &b.cov).chain(std::iter::once(&self.cov)) {
            asym = asym.max((c - c.transpose()).amax());
            let sym = (c + c.transpose()) * 0.5;
            let eig = sym.symmetric_eigenvalues();
            min_eig = min_eig.min(eig.min());
        }
        (asym, min_eig)
    }
}

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_offset(d: &DVector<f64>, n: usize) -> Result<()> {
    if d.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "offset has length {}, expected {n}",
            d.len()
        )));
    }
    Ok(())
}

/// Appends one predicted state under the surviving mode.
pub fn predict_augment_survive(
    c: &GaussianBranchComponent,
    f: &DMatrix<f64>,
    d: &DVector<f64>,
    q: &DMatrix<f64>,
) -> Result<GaussianBranchComponent> {
    let nx = c.state_dim;
    check_square("F", f, nx)?;
    check_square("Q", q, nx)?;
    check_offset(d, nx)?;
    let genealogy = c.genealogy.with(1)?;
    let n = c.mean.len();
    let last = n - nx;

    let mut mean = DVector::zeros(n + nx);
    mean.rows_mut(0, n).copy_from(&c.mean);
    let pred = f * c.mean.rows(last, nx) + d;
    mean.rows_mut(n, nx).copy_from(&pred);

    // cross block P F̄ᵀ only involves the last block column of P
    let cross = c.cov.columns(last, nx) * f.transpose();
    let tail = f * c.cov.view((last, last), (nx, nx)) * f.transpose() + q;
    let mut cov = DMatrix::zeros(n + nx, n + nx);
    cov.view_mut((0, 0), (n, n)).copy_from(&c.cov);
    cov.view_mut((0, n), (n, nx)).copy_from(&cross);
    cov.view_mut((n, 0), (nx, n)).copy_from(&cross.transpose());
    cov.view_mut((n, n), (nx, nx)).copy_from(&tail);

    let mut out = GaussianBranchComponent {
        genealogy,
        state_dim: nx,
        frozen: c.frozen.clone(),
        mean,
        cov,
    };
    out.symmetrize();
    Ok(out)
}

/// Single-state component of a branch spawned with mode `m` from the last
/// state of `c`.
pub fn spawn_component(
    c: &GaussianBranchComponent,
    f: &DMatrix<f64>,
    d: &DVector<f64>,
    q: &DMatrix<f64>,
    m: u8,
) -> Result<GaussianBranchComponent> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("spawning mode {m} < 2")));
    }
    let nx = c.state_dim;
    check_square("F", f, nx)?;
    check_square("Q", q, nx)?;
    check_offset(d, nx)?;
    let mean = f * c.last_mean() + d;
    let cov = f * c.last_cov() * f.transpose() + q;
    let mut out = GaussianBranchComponent {
        genealogy: c.genealogy.with(m)?,
        state_dim: nx,
        frozen: Vec::new(),
        mean,
        cov,
    };
    out.symmetrize();
    Ok(out)
}

/// Innovation of `z` against the last state: `(ν, S)`.
fn innovation(
    c: &GaussianBranchComponent,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let nx = c.state_dim;
    if h.ncols() != nx || h.nrows() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "H is {}x{}, expected {}x{nx}",
            h.nrows(),
            h.ncols(),
            z.len()
        )));
    }
    check_square("R", r, z.len())?;
    let nu = z - h * c.last_mean();
    let s = h * c.last_cov() * h.transpose() + r;
    Ok((nu, (&s + s.transpose()) * 0.5))
}

/// Cholesky factor, retrying once with `1e-9·I` jitter.
fn chol(s: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(s.clone()) {
        return Ok(c);
    }
    let jittered = s + DMatrix::identity(s.nrows(), s.ncols()) * JITTER;
    Cholesky::new(jittered)
        .ok_or_else(|| Error::Numerical("innovation covariance not positive definite".into()))
}

fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Log of `𝒩(ν; 0, S)`.
pub fn log_gaussian(nu: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let ch = chol(s)?;
    let sol = ch.solve(nu);
    let d = nu.len() as f64;
    Ok(-0.5 * (nu.dot(&sol) + log_det(&ch) + d * (2.0 * PI).ln()))
}

/// Squared Mahalanobis distance of the innovation of `z`.
pub fn mahalanobis2(
    z: &DVector<f64>,
    c: &GaussianBranchComponent,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<f64> {
    let (nu, s) = innovation(c, z, h, r)?;
    let ch = chol(&s)?;
    Ok(nu.dot(&ch.solve(&nu)))
}

/// Ellipsoidal gate: true iff the squared Mahalanobis distance is within
/// `threshold`.
pub fn gate(
    z: &DVector<f64>,
    c: &GaussianBranchComponent,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    threshold: f64,
) -> Result<bool> {
    Ok(mahalanobis2(z, c, h, r)? <= threshold)
}

/// Innovation statistics and posterior covariance of one component, shared
/// by every measurement it is updated with.
#[derive(Clone, Debug)]
pub struct KalmanUpdater {
    z_pred: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
    gain: DMatrix<f64>,
    cov: DMatrix<f64>,
}

impl KalmanUpdater {
    pub fn new(c: &GaussianBranchComponent, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        if !c.genealogy.is_alive() {
            return Err(Error::InvalidInput(format!(
                "branch ({}) is not alive at its end time",
                c.genealogy
            )));
        }
        let nx = c.state_dim;
        if h.ncols() != nx {
            return Err(Error::DimensionMismatch(format!(
                "H has {} columns, expected {nx}",
                h.ncols()
            )));
        }
        check_square("R", r, h.nrows())?;
        let z_pred = h * c.last_mean();
        let s = h * c.last_cov() * h.transpose() + r;
        let chol = chol(&((&s + s.transpose()) * 0.5))?;
        let nz = h.nrows() as f64;
        let log_norm = -0.5 * (log_det(&chol) + nz * (2.0 * PI).ln());
        let n = c.mean.len();
        let last = n - nx;
        // P H̄ᵀ with H̄ = [0 … 0 H]
        let pht = c.cov.columns(last, nx) * h.transpose();
        let gain = chol.solve(&pht.transpose()).transpose();
        // Joseph form: (I − K H̄) P (I − K H̄)ᵀ + K R Kᵀ
        let mut a = DMatrix::<f64>::identity(n, n);
        let kh = &gain * h;
        let mut block = a.columns_mut(last, nx);
        block -= &kh;
        let mut cov = &a * &c.cov * a.transpose() + &gain * r * gain.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self {
            z_pred,
            chol,
            log_norm,
            gain,
            cov,
        })
    }

    pub fn predicted_measurement(&self) -> &DVector<f64> {
        &self.z_pred
    }

    pub fn mahalanobis2(&self, z: &DVector<f64>) -> f64 {
        let nu = z - &self.z_pred;
        nu.dot(&self.chol.solve(&nu))
    }

    /// `log 𝒩(z; H x̄_last, H P_last Hᵀ + R)`.
    pub fn log_likelihood(&self, z: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis2(z)
    }

    /// Posterior component after conditioning `c` on `z`.
    pub fn apply(&self, c: &GaussianBranchComponent, z: &DVector<f64>) -> GaussianBranchComponent {
        let nu = z - &self.z_pred;
        GaussianBranchComponent {
            genealogy: c.genealogy.clone(),
            state_dim: c.state_dim,
            frozen: c.frozen.clone(),
            mean: &c.mean + &self.gain * nu,
            cov: self.cov.clone(),
        }
    }
}

/// Kalman update of the whole live window through the last state.
/// Returns the posterior component and `log 𝒩(z; H x̄_last, H P_last Hᵀ + R)`.
pub fn update_last_state(
    c: &GaussianBranchComponent,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(GaussianBranchComponent, f64)> {
    if z.len() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "measurement has length {}, expected {}",
            z.len(),
            h.nrows()
        )));
    }
    let k = KalmanUpdater::new(c, h, r)?;
    Ok((k.apply(c, z), k.log_likelihood(z)))
}

/// Freezes every state older than the last `l` states.
pub fn l_scan_truncate_component(c: &GaussianBranchComponent, l: usize) -> GaussianBranchComponent {
    let l = l.max(1);
    let states = c.window_states();
    if states <= l {
        return c.clone();
    }
    let nx = c.state_dim;
    let old = (states - l) * nx;
    let keep = l * nx;
    let mut frozen = c.frozen.clone();
    frozen.push(FrozenBlock {
        mean: c.mean.rows(0, old).into_owned(),
        cov: c.cov.view((0, 0), (old, old)).into_owned(),
    });
    GaussianBranchComponent {
        genealogy: c.genealogy.clone(),
        state_dim: nx,
        frozen,
        mean: c.mean.rows(old, keep).into_owned(),
        cov: c.cov.view((old, old), (keep, keep)).into_owned(),
    }
}

/// One end-time hypothesis of a branch: the branch ends at `end_time` with
/// probability `beta`.
#[derive(Clone, Debug)]
pub struct EndTimeComponent {
    pub end_time: u32,
    pub beta: f64,
    pub component: Arc<GaussianBranchComponent>,
}

/// Mixture over branch end times κ ∈ {t̄,…,k}.
///
/// Component genealogies cover generations up to their own end time; the
/// genealogy at the density's current time is obtained by zero padding.
#[derive(Clone, Debug)]
pub struct BranchDensity {
    pub start_time: u32,
    pub time: u32,
    pub components: Vec<EndTimeComponent>,
}

impl BranchDensity {
    /// Density concentrated on one alive component at time `time`.
    pub fn alive(start_time: u32, time: u32, component: GaussianBranchComponent) -> Self {
        Self {
            start_time,
            time,
            components: vec![EndTimeComponent {
                end_time: time,
                beta: 1.0,
                component: Arc::new(component),
            }],
        }
    }

    pub fn beta(&self, end_time: u32) -> f64 {
        self.components
            .iter()
            .find(|c| c.end_time == end_time)
            .map_or(0.0, |c| c.beta)
    }

    /// Component for a branch alive at the current time, if any.
    pub fn current(&self) -> Option<&EndTimeComponent> {
        self.components
            .iter()
            .find(|c| c.end_time == self.time && c.beta > 0.0)
    }

    pub fn beta_sum(&self) -> f64 {
        self.components.iter().map(|c| c.beta).sum()
    }

    /// Full genealogy ω̄(κ) at the current time.
    pub fn genealogy_at(&self, c: &EndTimeComponent) -> GenealogyVar {
        let nu = c.component.genealogy().generations() + (self.time - c.end_time) as usize;
        c.component.genealogy().padded(nu)
    }

    /// Most likely end time, ties resolved toward the later end time.
    pub fn most_likely(&self) -> Option<&EndTimeComponent> {
        self.components
            .iter()
            .filter(|c| c.beta > 0.0)
            .fold(None, |best: Option<&EndTimeComponent>, c| match best {
                Some(b) if b.beta > c.beta => Some(b),
                _ => Some(c),
            })
    }

    pub fn normalize(&mut self) {
        let total = self.beta_sum();
        if total > 0.0 {
            for c in &mut self.components {
                c.beta /= total;
            }
        }
        self.components.retain(|c| c.beta > 0.0);
    }
}

/// L-scan truncation of every end-time component.
pub fn l_scan_truncate(d: &BranchDensity, l: usize) -> BranchDensity {
    BranchDensity {
        start_time: d.start_time,
        time: d.time,
        components: d
            .components
            .iter()
            .map(|c| EndTimeComponent {
                end_time: c.end_time,
                beta: c.beta,
                component: if c.component.window_states() > l.max(1) {
                    Arc::new(l_scan_truncate_component(&c.component, l))
                } else {
                    Arc::clone(&c.component)
                },
            })
            .collect(),
    }
}

/// Undetected single-branch tree in the Poisson intensity.
#[derive(Clone, Debug)]
pub struct PPPComponent {
    pub log_weight: f64,
    pub start_time: u32,
    pub component: GaussianBranchComponent,
}

impl PPPComponent {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    fn scalar(mean: &[f64], cov: DMatrix<f64>) -> GaussianBranchComponent {
        let g = GenealogyVar::alive(mean.len()).unwrap();
        GaussianBranchComponent::new(g, 1, DVector::from_column_slice(mean), cov).unwrap()
    }

    #[test]
    fn augment_scalar() {
        let c = scalar(&[2.0], dmatrix![1.0]);
        let p = predict_augment_survive(&c, &dmatrix![1.0], &dvector![0.0], &dmatrix![0.5]).unwrap();
        assert_eq!(p.window_mean(), &dvector![2.0, 2.0]);
        assert_eq!(p.window_cov(), &dmatrix![1.0, 1.0; 1.0, 1.5]);
        assert_eq!(p.genealogy().marks(), &[1, 1]);
    }

    #[test]
    fn augment_rejects_bad_dims() {
        let c = scalar(&[2.0], dmatrix![1.0]);
        assert!(predict_augment_survive(&c, &dmatrix![1.0, 0.0], &dvector![0.0], &dmatrix![0.5]).is_err());
        assert!(GaussianBranchComponent::new(GenealogyVar::alive(2).unwrap(), 1, dvector![1.0], dmatrix![1.0]).is_err());
    }

    #[test]
    fn spawn_scalar() {
        let c = scalar(&[1.0, 3.0], dmatrix![1.0, 0.2; 0.2, 2.0]);
        let s = spawn_component(&c, &dmatrix![1.0], &dvector![5.0], &dmatrix![0.5], 2).unwrap();
        assert_eq!(s.window_mean(), &dvector![8.0]);
        assert_eq!(s.window_cov(), &dmatrix![2.5]);
        assert_eq!(s.genealogy().marks(), &[1, 1, 2]);
        assert!(spawn_component(&c, &dmatrix![1.0], &dvector![5.0], &dmatrix![0.5], 1).is_err());
    }

    #[test]
    fn update_scalar() {
        let c = scalar(&[0.0], dmatrix![1.0]);
        let (u, ll) = update_last_state(&c, &dvector![0.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!((u.window_mean()[0]).abs() < 1e-15);
        assert!((u.window_cov()[(0, 0)] - 0.5).abs() < 1e-15);
        let expected = (-0.5 * (2.0 * PI * 2.0).ln()).exp();
        assert!((ll.exp() - expected).abs() < 1e-12);
        assert!((ll.exp() - 0.282_094_8).abs() < 1e-7);
    }

    #[test]
    fn update_smooths_past_state() {
        let c = scalar(&[0.0, 0.0], dmatrix![1.0, 0.8; 0.8, 1.0]);
        let (u, _) = update_last_state(&c, &dvector![1.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!(u.window_mean()[0] > 0.0);
    }

    #[test]
    fn update_degenerate_prior() {
        let g = GenealogyVar::alive(1).unwrap();
        let c = GaussianBranchComponent::new(g, 2, dvector![1.0, 2.0], DMatrix::zeros(2, 2)).unwrap();
        let h = DMatrix::identity(2, 2);
        let (u, _) = update_last_state(&c, &dvector![1.0, 2.0], &h, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(u.window_mean(), &dvector![1.0, 2.0]);
    }

    #[test]
    fn update_dead_branch_fails() {
        let g = GenealogyVar::new(vec![1, 0]).unwrap();
        let c = GaussianBranchComponent::new(g, 1, dvector![1.0], dmatrix![1.0]).unwrap();
        assert!(update_last_state(&c, &dvector![0.0], &dmatrix![1.0], &dmatrix![1.0]).is_err());
    }

    #[test]
    fn singular_innovation_fails() {
        let c = scalar(&[0.0], dmatrix![0.0]);
        let err = update_last_state(&c, &dvector![0.0], &dmatrix![1.0], &dmatrix![-1.0]).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn gating() {
        let c = scalar(&[0.0], dmatrix![0.5]);
        let h = dmatrix![1.0];
        let r = dmatrix![0.5];
        assert!(gate(&dvector![0.0], &c, &h, &r, 15.0).unwrap());
        assert_eq!(mahalanobis2(&dvector![4.0], &c, &h, &r).unwrap(), 16.0);
        assert!(!gate(&dvector![4.0], &c, &h, &r, 15.0).unwrap());
    }

    #[test]
    fn truncation() {
        let c = scalar(&[1.0, 2.0], dmatrix![1.0, 0.5; 0.5, 1.0]);
        assert_eq!(l_scan_truncate_component(&c, 2), c);
        let t = l_scan_truncate_component(&c, 1);
        assert_eq!(t.full_cov(), dmatrix![1.0, 0.0; 0.0, 1.0]);
        assert_eq!(t.full_mean(), dvector![1.0, 2.0]);
        assert_eq!(t.window_states(), 1);
        assert_eq!(l_scan_truncate_component(&t, 1), t);
    }
}
