//! Motion, measurement and birth models, plus filter tuning constants.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Speeds below this fall back to a fixed perpendicular direction.
pub const MIN_SPEED: f64 = 1e-6;

/// Unit vector perpendicular to the velocity of a `(px, vx, py, vy)` state.
///
/// Errors on a (near) zero velocity; see [`perp_unit_or_default`].
pub fn perp_unit(x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != 4 {
        return Err(Error::DimensionMismatch(format!(
            "perpendicular direction needs a 4-d state, got {}",
            x.len()
        )));
    }
    let (vx, vy) = (x[1], x[3]);
    let speed = vx.hypot(vy);
    if speed < MIN_SPEED {
        return Err(Error::DegenerateVelocity { speed });
    }
    Ok(DVector::from_vec(vec![-vy / speed, 0.0, vx / speed, 0.0]))
}

/// [`perp_unit`] with the `+y` direction used for degenerate velocities.
pub fn perp_unit_or_default(x: &DVector<f64>) -> Result<DVector<f64>> {
    match perp_unit(x) {
        Err(Error::DegenerateVelocity { .. }) => {
            Ok(DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]))
        }
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OffsetRule {
    Zero,
    Fixed(DVector<f64>),
    /// `scale · u⊥(x)`.
    Perpendicular { scale: f64 },
}

impl OffsetRule {
    pub fn offset(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            OffsetRule::Zero => Ok(DVector::zeros(x.len())),
            OffsetRule::Fixed(d) => Ok(d.clone()),
            OffsetRule::Perpendicular { scale } => Ok(perp_unit_or_default(x)? * *scale),
        }
    }
}

/// One transition mode. Mode 1 is survival, modes 2.. spawn new branches.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionMode {
    pub f: DMatrix<f64>,
    pub offset: OffsetRule,
    pub q: DMatrix<f64>,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub detection_probability: f64,
    pub clutter_rate: f64,
    /// Clutter region as `(low, high)` per measurement dimension.
    pub region: Vec<(f64, f64)>,
}

impl MeasurementModel {
    pub fn region_volume(&self) -> f64 {
        self.region.iter().map(|(lo, hi)| hi - lo).product()
    }

    /// Clutter intensity λ^C(z), constant over the region.
    pub fn clutter_intensity(&self) -> f64 {
        self.clutter_rate / self.region_volume()
    }

    pub fn in_region(&self, z: &DVector<f64>) -> bool {
        z.iter()
            .zip(&self.region)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BirthComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BirthKind {
    /// Poisson birth; component weights are intensities.
    Poisson,
    /// One Bernoulli per component; weights are existence probabilities.
    MultiBernoulli,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterParams {
    pub max_global_hypotheses: usize,
    pub gamma_mbm: f64,
    pub gamma_p: f64,
    pub gamma_b: f64,
    pub gamma_a: f64,
    pub gamma_d: f64,
    pub gate: f64,
    pub lscan: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            max_global_hypotheses: 100,
            gamma_mbm: 1e-4,
            gamma_p: 1e-4,
            gamma_b: 1e-4,
            gamma_a: 1e-4,
            gamma_d: 0.4,
            gate: 15.0,
            lscan: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub state_dim: usize,
    /// Modes 1..=ϱ; `modes[0]` is survival.
    pub modes: Vec<MotionMode>,
    pub measurement: MeasurementModel,
    pub birth: Vec<BirthComponent>,
    pub birth_kind: BirthKind,
    pub horizon: u32,
    pub filter: FilterParams,
    pub seed: u64,
}

/// Nearly constant velocity transition for sampling period `tau`.
pub fn cv_transition(tau: f64) -> DMatrix<f64> {
    let block = DMatrix::from_row_slice(2, 2, &[1.0, tau, 0.0, 1.0]);
    DMatrix::<f64>::identity(2, 2).kronecker(&block)
}

pub fn cv_noise(tau: f64, q: f64) -> DMatrix<f64> {
    let block = DMatrix::from_row_slice(
        2,
        2,
        &[tau.powi(3) / 3.0, tau.powi(2) / 2.0, tau.powi(2) / 2.0, tau],
    );
    DMatrix::<f64>::identity(2, 2).kronecker(&block) * q
}

/// Spawn transition turning the velocity by +90° (`sign = 1`) or −90°.
pub fn turn_transition(tau: f64, sign: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, 0.0, -sign * tau, //
            0.0, 0.0, 0.0, -sign, //
            0.0, sign * tau, 1.0, 0.0, //
            0.0, sign, 0.0, 0.0,
        ],
    )
}

impl ScenarioConfig {
    /// ϱ, the number of transition modes.
    pub fn rho(&self) -> usize {
        self.modes.len()
    }

    pub fn survival(&self) -> &MotionMode {
        &self.modes[0]
    }

    /// Default scenario: 2-d constant velocity targets spawning to either
    /// side, position measurements in a 600×400 region.
    pub fn paper_default() -> Self {
        let tau = 1.0;
        let q = cv_noise(tau, 0.01);
        let modes = vec![
            MotionMode {
                f: cv_transition(tau),
                offset: OffsetRule::Zero,
                q: q.clone(),
                probability: 0.99,
            },
            MotionMode {
                f: turn_transition(tau, 1.0),
                offset: OffsetRule::Perpendicular { scale: 5.0 },
                q: q.clone(),
                probability: 0.01,
            },
            MotionMode {
                f: turn_transition(tau, -1.0),
                offset: OffsetRule::Perpendicular { scale: -5.0 },
                q,
                probability: 0.01,
            },
        ];
        let measurement = MeasurementModel {
            h: DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            r: DMatrix::identity(2, 2) * 4.0,
            detection_probability: 0.9,
            clutter_rate: 10.0,
            region: vec![(0.0, 600.0), (0.0, 400.0)],
        };
        let birth = vec![BirthComponent {
            weight: 0.08,
            mean: DVector::from_vec(vec![300.0, 3.0, 170.0, 1.0]),
            cov: DMatrix::from_diagonal(&DVector::from_vec(vec![160.0 * 160.0, 1.0, 1e4, 1.0])),
        }];
        Self {
            state_dim: 4,
            modes,
            measurement,
            birth,
            birth_kind: BirthKind::Poisson,
            horizon: 100,
            filter: FilterParams::default(),
            seed: 0,
        }
    }

    /// Keeps only the first `rho` modes.
    pub fn with_rho(mut self, rho: usize) -> Self {
        self.modes.truncate(rho.max(1));
        self
    }

    /// Lists every violated invariant; empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let nx = self.state_dim;
        let prob = |name: String, p: f64, v: &mut Vec<String>| {
            if !(0.0..=1.0).contains(&p) {
                v.push(format!("{name} = {p} is not a probability"));
            }
        };
        if nx == 0 {
            v.push("state_dim must be positive".into());
        }
        if self.modes.is_empty() {
            v.push("at least the survival mode is required".into());
        }
        if self.modes.len() > u8::MAX as usize {
            v.push(format!("too many modes ({})", self.modes.len()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            let name = format!("modes[{i}]");
            prob(format!("{name}.probability"), m.probability, &mut v);
            if m.f.shape() != (nx, nx) {
                v.push(format!("{name}.F must be {nx}x{nx}"));
            }
            if m.q.shape() != (nx, nx) {
                v.push(format!("{name}.Q must be {nx}x{nx}"));
            } else if !is_spd(&m.q) {
                v.push(format!("{name}.Q must be symmetric positive definite"));
            }
            match &m.offset {
                OffsetRule::Fixed(d) if d.len() != nx => {
                    v.push(format!("{name}.offset must have length {nx}"))
                }
                OffsetRule::Perpendicular { .. } if nx != 4 => {
                    v.push(format!("{name}: perpendicular offset needs a 4-d state"))
                }
                _ => {}
            }
        }
        let mm = &self.measurement;
        let nz = mm.h.nrows();
        if mm.h.ncols() != nx || nz == 0 {
            v.push(format!("measurement.H must be n_z x {nx}"));
        }
        if mm.r.shape() != (nz, nz) {
            v.push(format!("measurement.R must be {nz}x{nz}"));
        } else if !is_spd(&mm.r) {
            v.push("measurement.R must be symmetric positive definite".into());
        }
        prob(
            "measurement.detection_probability".into(),
            mm.detection_probability,
            &mut v,
        );
        if !(mm.clutter_rate >= 0.0) || !mm.clutter_rate.is_finite() {
            v.push("measurement.clutter_rate must be nonnegative".into());
        }
        if mm.region.len() != nz {
            v.push(format!("measurement.region needs {nz} intervals"));
        }
        if mm.region.iter().any(|(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
            v.push("measurement.region intervals must satisfy low < high".into());
        }
        for (i, b) in self.birth.iter().enumerate() {
            let name = format!("birth.components[{i}]");
            if !(b.weight >= 0.0) || !b.weight.is_finite() {
                v.push(format!("{name}.weight must be nonnegative"));
            }
            if self.birth_kind == BirthKind::MultiBernoulli {
                prob(format!("{name}.weight"), b.weight, &mut v);
            }
            if b.mean.len() != nx {
                v.push(format!("{name}.mean must have length {nx}"));
            }
            if b.cov.shape() != (nx, nx) {
                v.push(format!("{name}.cov must be {nx}x{nx}"));
            } else if !is_spd(&b.cov) {
                v.push(format!("{name}.cov must be symmetric positive definite"));
            }
        }
        if self.horizon == 0 {
            v.push("horizon must be at least 1".into());
        }
        let f = &self.filter;
        if f.max_global_hypotheses == 0 {
            v.push("filter.max_global_hypotheses must be at least 1".into());
        }
        for (name, x) in [
            ("gamma_mbm", f.gamma_mbm),
            ("gamma_p", f.gamma_p),
            ("gamma_b", f.gamma_b),
            ("gamma_a", f.gamma_a),
            ("gamma_d", f.gamma_d),
            ("gate", f.gate),
        ] {
            if !(x > 0.0) {
                v.push(format!("filter.{name} must be positive"));
            }
        }
        if f.lscan == 0 {
            v.push("filter.lscan must be at least 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

fn is_spd(m: &DMatrix<f64>) -> bool {
    let sym = (m - m.transpose()).amax() <= 1e-9 * (1.0 + m.amax());
    sym && m.iter().all(|x| x.is_finite()) && m.clone().cholesky().is_some()
}
