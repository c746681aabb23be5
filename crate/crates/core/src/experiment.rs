//! Monte-Carlo evaluation of several filters on shared simulated data.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{estimate, step, FilterKind, FilterModel, PMBMPosterior};
use crate::metric::{branches_as_tracks, trajectory_metric, MetricBreakdown, TrajMetricParams};
use crate::model::ScenarioConfig;
use crate::sampler::{measurement_hash, sample_ground_truth, sample_measurement_sequence};
use crate::tree::TreeTrajectory;

/// A filter type with its L-scan depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub lscan: usize,
}

impl FilterSpec {
    pub fn new(kind: FilterKind, lscan: usize) -> Self {
        Self { kind, lscan }
    }

    pub fn label(&self) -> String {
        format!("{}(L={})", self.kind, self.lscan)
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `trpmbm:5`, or `trpmbm` with the default depth of 5.
impl FromStr for FilterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, l) = match s.split_once(':') {
            Some((k, l)) => (
                k,
                l.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidInput(format!("L-scan depth '{l}': {e}")))?,
            ),
            None => (s, 5),
        };
        if l == 0 {
            return Err(Error::InvalidInput("L-scan depth must be at least 1".into()));
        }
        Ok(Self::new(kind.trim().parse()?, l))
    }
}

/// Every combination of filter kinds and L-scan depths.
pub fn filter_grid(kinds: &[FilterKind], lscans: &[usize]) -> Vec<FilterSpec> {
    kinds
        .iter()
        .flat_map(|&k| lscans.iter().map(move |&l| FilterSpec::new(k, l)))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub filter: FilterSpec,
    pub run: u64,
    pub seed: u64,
    /// Metric after each processed step.
    pub metrics: Vec<MetricBreakdown>,
    /// Wall-clock seconds spent in the filter recursion.
    pub seconds: f64,
    pub measurement_hash: u64,
    pub mean_global_hypotheses: f64,
    pub max_global_hypotheses: usize,
    pub mean_local_hypotheses: f64,
    /// Set if the run stopped early.
    pub error: Option<String>,
}

fn run_filter_once(
    cfg: &ScenarioConfig,
    spec: FilterSpec,
    measurements: &[Vec<nalgebra::DVector<f64>>],
    truth_tracks: &[crate::metric::Track],
    metric: &TrajMetricParams,
) -> Result<(RunReport, Option<Error>)> {
    let model = FilterModel::new(cfg, spec.kind)?.with_lscan(spec.lscan);
    let mut report = RunReport {
        filter: spec,
        run: 0,
        seed: 0,
        metrics: Vec::with_capacity(measurements.len()),
        seconds: 0.0,
        measurement_hash: measurement_hash(measurements),
        mean_global_hypotheses: 0.0,
        max_global_hypotheses: 0,
        mean_local_hypotheses: 0.0,
        error: None,
    };
    let mut post = PMBMPosterior::new();
    let mut globals = 0usize;
    let mut locals = 0usize;
    for zs in measurements {
        let t = Instant::now();
        let next = step(&post, zs, &model).and_then(|p| {
            let est = estimate(&p, model.params.gamma_d)?;
            Ok((p, est))
        });
        report.seconds += t.elapsed().as_secs_f64();
        let (p, est) = match next {
            Ok(v) => v,
            Err(e) => {
                report.error = Some(e.to_string());
                return Ok((report, Some(e)));
            }
        };
        post = p;
        globals += post.globals.len();
        locals += post.num_local_hypotheses();
        report.max_global_hypotheses = report.max_global_hypotheses.max(post.globals.len());
        let est_tracks = branches_as_tracks(&est);
        report
            .metrics
            .push(trajectory_metric(&est_tracks, truth_tracks, metric, post.time)?);
    }
    let steps = report.metrics.len().max(1) as f64;
    report.mean_global_hypotheses = globals as f64 / steps;
    report.mean_local_hypotheses = locals as f64 / steps;
    Ok((report, None))
}

/// Runs every filter on `runs` Monte-Carlo runs. All filters of one run see
/// the same ground truth and measurements. With `truth` given, that ground
/// truth is used in every run and only the measurements are resampled.
pub fn run_experiment(
    cfg: &ScenarioConfig,
    filters: &[FilterSpec],
    runs: usize,
    seed: u64,
    truth: Option<&[TreeTrajectory]>,
) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    if filters.is_empty() {
        return Err(Error::InvalidInput("no filters requested".into()));
    }
    let metric = TrajMetricParams::default();
    let per_run: Vec<Result<Vec<RunReport>>> = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let sampled;
            let truth = match truth {
                Some(t) => t,
                None => {
                    sampled = sample_ground_truth(cfg, seed, run)?;
                    &sampled
                }
            };
            let measurements = sample_measurement_sequence(truth, cfg, seed, run)?;
            let truth_tracks = branches_as_tracks(truth);
            let mut out = Vec::with_capacity(filters.len());
            for &spec in filters {
                let (mut report, _) = run_filter_once(cfg, spec, &measurements, &truth_tracks, &metric)?;
                report.run = run;
                report.seed = seed;
                out.push(report);
            }
            Ok(out)
        })
        .collect();
    let mut reports = Vec::with_capacity(runs * filters.len());
    for r in per_run {
        reports.extend(r?);
    }
    Ok(reports)
}

/// Root mean square over runs of each metric component, per step.
pub fn rms_curve(reports: &[RunReport], filter: FilterSpec) -> Vec<MetricBreakdown> {
    let selected: Vec<&RunReport> = reports.iter().filter(|r| r.filter == filter).collect();
    let steps = selected.iter().map(|r| r.metrics.len()).max().unwrap_or(0);
    (0..steps)
        .map(|k| {
            let rows: Vec<&MetricBreakdown> = selected.iter().filter_map(|r| r.metrics.get(k)).collect();
            let n = rows.len().max(1) as f64;
            let rms = |f: fn(&MetricBreakdown) -> f64| (rows.iter().map(|m| f(m).powi(2)).sum::<f64>() / n).sqrt();
            MetricBreakdown {
                total: rms(|m| m.total),
                localisation: rms(|m| m.localisation),
                missed: rms(|m| m.missed),
                false_target: rms(|m| m.false_target),
                switch: rms(|m| m.switch),
            }
        })
        .collect()
}

/// Mean of `f` over the 1-based steps `first..=last` of a curve.
pub fn time_average(curve: &[MetricBreakdown], first: usize, last: usize, f: fn(&MetricBreakdown) -> f64) -> f64 {
    let last = last.min(curve.len());
    if first < 1 || first > last {
        return f64::NAN;
    }
    curve[first - 1..last].iter().map(f).sum::<f64>() / (last - first + 1) as f64
}

fn filters_in_order(reports: &[RunReport]) -> Vec<FilterSpec> {
    let mut out: Vec<FilterSpec> = Vec::new();
    for r in reports {
        if !out.contains(&r.filter) {
            out.push(r.filter);
        }
    }
    out
}

fn table(header: &[String], rows: &[Vec<String>], sep: &str, comment: bool) -> String {
    let mut out = String::new();
    if comment {
        out.push_str("# ");
    }
    out.push_str(&header.join(sep));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(sep));
        out.push('\n');
    }
    out
}

/// Writes `rms_vs_time.csv`, `decomposition.csv`, `timing.csv` and the
/// matching gnuplot `.dat` files into `out_dir`.
pub fn emit_outputs(reports: &[RunReport], out_dir: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to write".into()));
    }
    fs::create_dir_all(out_dir)?;
    let filters = filters_in_order(reports);
    let curves: Vec<Vec<MetricBreakdown>> = filters.iter().map(|&f| rms_curve(reports, f)).collect();
    let steps = curves.iter().map(Vec::len).max().unwrap_or(0);

    let mut header = vec!["k".to_string()];
    header.extend(filters.iter().map(FilterSpec::label));
    let rows: Vec<Vec<String>> = (0..steps)
        .map(|k| {
            let mut row = vec![(k + 1).to_string()];
            row.extend(curves.iter().map(|c| c.get(k).map_or(String::new(), |m| m.total.to_string())));
            row
        })
        .collect();
    fs::write(out_dir.join("rms_vs_time.csv"), table(&header, &rows, ",", false))?;
    fs::write(out_dir.join("rms_vs_time.dat"), table(&header, &rows, " ", true))?;

    let mut header = vec!["k".to_string()];
    for f in &filters {
        for part in ["loc", "miss", "false", "switch"] {
            header.push(format!("{}_{part}", f.label()));
        }
    }
    let rows: Vec<Vec<String>> = (0..steps)
        .map(|k| {
            let mut row = vec![(k + 1).to_string()];
            for c in &curves {
                match c.get(k) {
                    Some(m) => row.extend(m.components().iter().map(f64::to_string)),
                    None => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            row
        })
        .collect();
    fs::write(out_dir.join("decomposition.csv"), table(&header, &rows, ",", false))?;
    fs::write(out_dir.join("decomposition.dat"), table(&header, &rows, " ", true))?;

    let header: Vec<String> = ["filter", "L", "runs", "mean_seconds", "std_seconds", "failed_runs"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = filters
        .iter()
        .map(|f| {
            let times: Vec<f64> = reports.iter().filter(|r| r.filter == *f).map(|r| r.seconds).collect();
            let n = times.len() as f64;
            let mean = times.iter().sum::<f64>() / n;
            let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
            let failed = reports.iter().filter(|r| r.filter == *f && r.error.is_some()).count();
            vec![
                f.kind.to_string(),
                f.lscan.to_string(),
                times.len().to_string(),
                format!("{mean:.4}"),
                format!("{:.4}", var.sqrt()),
                failed.to_string(),
            ]
        })
        .collect();
    fs::write(out_dir.join("timing.csv"), table(&header, &rows, ",", false))?;
    fs::write(out_dir.join("timing.dat"), table(&header, &rows, " ", true))?;
    Ok(())
}

/// Ground truth recorded from one draw of the default scenario (9 trees,
/// 23 branches), in the tree text format.
pub const RECORDED_TRUTH: &str = include_str!("../data/recorded_truth.txt");

pub fn recorded_truth() -> Result<Vec<TreeTrajectory>> {
    crate::tree::decode_trees(RECORDED_TRUTH)
}
