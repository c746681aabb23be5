//! JSON scenario files. Every field is optional; missing fields take the
//! values of [`ScenarioConfig::paper_default`]. Matrices are row-major arrays
//! of rows.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BirthComponent, BirthKind, FilterParams, MotionMode, OffsetRule,
    ScenarioConfig,
};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    /// Number of modes kept from the default set when `modes` is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<ModeFile>>,
    #[serde(default)]
    pub measurement: MeasurementFile,
    #[serde(default)]
    pub birth: BirthFile,
    #[serde(default)]
    pub filter: FilterFile,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModeFile {
    #[serde(rename = "F")]
    pub f: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(default)]
    pub offset: OffsetFile,
    pub probability: f64,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffsetFile {
    #[default]
    Zero,
    Fixed { value: Vec<f64> },
    Perpendicular { scale: f64 },
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementFile {
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    pub h: Option<Rows>,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clutter_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BirthFile {
    #[serde(rename = "type", skip_serializing_if = "Option::is_none")]
    pub kind: Option<BirthKindFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<BirthComponentFile>>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BirthKindFile {
    Poisson,
    MultiBernoulli,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BirthComponentFile {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Rows,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FilterFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_global_hypotheses: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_mbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lscan: Option<usize>,
}

fn matrix(name: &str, rows: &Rows, errors: &mut Vec<String>) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        errors.push(format!("{name}: rows have different lengths"));
        return DMatrix::zeros(0, 0);
    }
    DMatrix::from_row_iterator(n, m, rows.iter().flatten().copied())
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ScenarioFile {
    /// Resolves defaults and validates.
    pub fn into_config(self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::paper_default();
        let mut errors = Vec::new();
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(n) = self.state_dim {
            cfg.state_dim = n;
        }
        match (self.modes, self.rho) {
            (Some(modes), rho) => {
                if let Some(rho) = rho {
                    if rho != modes.len() {
                        errors.push(format!("rho = {rho} but {} modes given", modes.len()));
                    }
                }
                cfg.modes = modes
                    .iter()
                    .enumerate()
                    .map(|(i, m)| MotionMode {
                        f: matrix(&format!("modes[{i}].F"), &m.f, &mut errors),
                        q: matrix(&format!("modes[{i}].Q"), &m.q, &mut errors),
                        offset: match &m.offset {
                            OffsetFile::Zero => OffsetRule::Zero,
                            OffsetFile::Fixed { value } => {
                                OffsetRule::Fixed(DVector::from_vec(value.clone()))
                            }
                            OffsetFile::Perpendicular { scale } => {
                                OffsetRule::Perpendicular { scale: *scale }
                            }
                        },
                        probability: m.probability,
                    })
                    .collect();
            }
            (None, Some(rho)) => {
                if rho == 0 || rho > cfg.modes.len() {
                    errors.push(format!(
                        "rho = {rho} needs explicit modes (defaults define 1..={})",
                        cfg.modes.len()
                    ));
                } else {
                    cfg.modes.truncate(rho);
                }
            }
            (None, None) => {}
        }
        let mm = &mut cfg.measurement;
        let m = self.measurement;
        if let Some(h) = m.h {
            mm.h = matrix("measurement.H", &h, &mut errors);
        }
        if let Some(r) = m.r {
            mm.r = matrix("measurement.R", &r, &mut errors);
        }
        if let Some(p) = m.detection_probability {
            mm.detection_probability = p;
        }
        if let Some(c) = m.clutter_rate {
            mm.clutter_rate = c;
        }
        if let Some(region) = m.region {
            mm.region = region.iter().map(|[lo, hi]| (*lo, *hi)).collect();
        }
        if let Some(kind) = self.birth.kind {
            cfg.birth_kind = match kind {
                BirthKindFile::Poisson => BirthKind::Poisson,
                BirthKindFile::MultiBernoulli => BirthKind::MultiBernoulli,
            };
        }
        if let Some(components) = self.birth.components {
            cfg.birth = components
                .iter()
                .enumerate()
                .map(|(i, b)| BirthComponent {
                    weight: b.weight,
                    mean: DVector::from_vec(b.mean.clone()),
                    cov: matrix(&format!("birth.components[{i}].cov"), &b.cov, &mut errors),
                })
                .collect();
        }
        let f = self.filter;
        let d = &mut cfg.filter;
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = f.$field { d.$field = v; })*};
        }
        set!(max_global_hypotheses, gamma_mbm, gamma_p, gamma_b, gamma_a, gamma_d, gate, lscan);
        if errors.is_empty() {
            errors = cfg.violations();
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Fully explicit file describing `cfg`.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let FilterParams {
            max_global_hypotheses,
            gamma_mbm,
            gamma_p,
            gamma_b,
            gamma_a,
            gamma_d,
            gate,
            lscan,
        } = cfg.filter.clone();
        Self {
            seed: Some(cfg.seed),
            horizon: Some(cfg.horizon),
            rho: Some(cfg.rho()),
            state_dim: Some(cfg.state_dim),
            modes: Some(
                cfg.modes
                    .iter()
                    .map(|m| ModeFile {
                        f: rows_of(&m.f),
                        q: rows_of(&m.q),
                        offset: match &m.offset {
                            OffsetRule::Zero => OffsetFile::Zero,
                            OffsetRule::Fixed(d) => OffsetFile::Fixed {
                                value: d.iter().copied().collect(),
                            },
                            OffsetRule::Perpendicular { scale } => {
                                OffsetFile::Perpendicular { scale: *scale }
                            }
                        },
                        probability: m.probability,
                    })
                    .collect(),
            ),
            measurement: MeasurementFile {
                h: Some(rows_of(&cfg.measurement.h)),
                r: Some(rows_of(&cfg.measurement.r)),
                detection_probability: Some(cfg.measurement.detection_probability),
                clutter_rate: Some(cfg.measurement.clutter_rate),
                region: Some(cfg.measurement.region.iter().map(|&(a, b)| [a, b]).collect()),
            },
            birth: BirthFile {
                kind: Some(match cfg.birth_kind {
                    BirthKind::Poisson => BirthKindFile::Poisson,
                    BirthKind::MultiBernoulli => BirthKindFile::MultiBernoulli,
                }),
                components: Some(
                    cfg.birth
                        .iter()
                        .map(|b| BirthComponentFile {
                            weight: b.weight,
                            mean: b.mean.iter().copied().collect(),
                            cov: rows_of(&b.cov),
                        })
                        .collect(),
                ),
            },
            filter: FilterFile {
                max_global_hypotheses: Some(max_global_hypotheses),
                gamma_mbm: Some(gamma_mbm),
                gamma_p: Some(gamma_p),
                gamma_b: Some(gamma_b),
                gamma_a: Some(gamma_a),
                gamma_d: Some(gamma_d),
                gate: Some(gate),
                lscan: Some(lscan),
            },
        }
    }
}

/// Parses scenario JSON. Blank input gives the default scenario.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    if text.trim().is_empty() {
        return ScenarioFile::default().into_config();
    }
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    file.into_config()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

pub fn scenario_to_json(cfg: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_config(cfg))
        .expect("scenario serialization cannot fail")
}
