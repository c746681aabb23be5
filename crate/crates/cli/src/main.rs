use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use trpmbm_core::experiment::{emit_outputs, filter_grid, rms_curve, run_experiment, time_average, FilterSpec};
use trpmbm_core::filter::{estimate, snapshot_json, step, FilterKind, FilterModel, PMBMPosterior};
use trpmbm_core::metric::{branches_as_tracks, metric_csv, trajectory_metric, TrajMetricParams};
use trpmbm_core::model::ScenarioConfig;
use trpmbm_core::sampler::{measurements_to_csv, sample_ground_truth, sample_measurement_sequence};
use trpmbm_core::scenario::{load_scenario, scenario_to_json};
use trpmbm_core::tree::{decode_trees, encode_trees, TreeTrajectory};

#[derive(Parser)]
#[command(name = "trpmbm", version, about = "Tracking of spawning targets with tree PMBM filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file; the default scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Base seed; overrides the seed in the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Ground truth in tree text format, used instead of sampling.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo comparison of filters, writing RMS, decomposition and timing tables.
    Run {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Comma-separated filter types.
        #[arg(long, value_delimiter = ',', default_value = "trpmbm,trmbm,tpmbm")]
        filters: Vec<FilterKind>,
        /// Comma-separated L-scan depths.
        #[arg(long, value_delimiter = ',', default_value = "5")]
        lscan: Vec<usize>,
        /// Number of Monte-Carlo runs.
        #[arg(long, default_value_t = 20)]
        runs: usize,
    },
    /// Samples one run and writes its ground truth and measurements.
    Sample {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        run: u64,
    },
    /// Runs one filter on one run and writes estimates, metric and the final posterior.
    Track {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Filter as `kind` or `kind:L`.
        #[arg(long, default_value = "trpmbm:5")]
        filter: FilterSpec,
        #[arg(long, default_value_t = 0)]
        run: u64,
    },
    /// Prints the scenario (default or loaded) as JSON.
    Scenario {
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => load_scenario(p).with_context(|| format!("loading scenario {}", p.display())),
        None => Ok(ScenarioConfig::paper_default()),
    }
}

fn truth_file(path: Option<&Path>) -> Result<Option<Vec<TreeTrajectory>>> {
    let Some(p) = path else { return Ok(None) };
    let text = fs::read_to_string(p).with_context(|| format!("reading truth {}", p.display()))?;
    Ok(Some(decode_trees(&text)?))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(common: ScenarioArgs, kinds: Vec<FilterKind>, lscan: Vec<usize>, runs: usize) -> Result<()> {
    let cfg = config(common.scenario.as_deref())?;
    if lscan.contains(&0) {
        bail!(trpmbm_core::Error::InvalidInput("L-scan depth must be at least 1".into()));
    }
    let filters = filter_grid(&kinds, &lscan);
    let truth = truth_file(common.truth.as_deref())?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let reports = run_experiment(&cfg, &filters, runs, seed, truth.as_deref())?;
    emit_outputs(&reports, &common.out)?;
    println!("filter,L,mean_rms_total,mean_seconds,failed_runs");
    for f in &filters {
        let curve = rms_curve(&reports, *f);
        let mine: Vec<_> = reports.iter().filter(|r| r.filter == *f).collect();
        let secs = mine.iter().map(|r| r.seconds).sum::<f64>() / mine.len().max(1) as f64;
        let failed = mine.iter().filter(|r| r.error.is_some()).count();
        println!(
            "{},{},{:.4},{:.3},{failed}",
            f.kind,
            f.lscan,
            time_average(&curve, 1, curve.len(), |m| m.total),
            secs
        );
    }
    for r in reports.iter().filter(|r| r.error.is_some()) {
        eprintln!("run {} {}: {}", r.run, r.filter, r.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn sample(common: ScenarioArgs, run: u64) -> Result<()> {
    let cfg = config(common.scenario.as_deref())?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let truth = match truth_file(common.truth.as_deref())? {
        Some(t) => t,
        None => sample_ground_truth(&cfg, seed, run)?,
    };
    let zs = sample_measurement_sequence(&truth, &cfg, seed, run)?;
    fs::create_dir_all(&common.out)?;
    write(&common.out, "truth.txt", &encode_trees(&truth))?;
    write(&common.out, "measurements.csv", &measurements_to_csv(&zs))?;
    println!(
        "{} trees, {} branches, {} measurements",
        truth.len(),
        truth.iter().map(|t| t.branches.len()).sum::<usize>(),
        zs.iter().map(Vec::len).sum::<usize>()
    );
    Ok(())
}

fn track(common: ScenarioArgs, spec: FilterSpec, run: u64) -> Result<()> {
    let cfg = config(common.scenario.as_deref())?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let truth = match truth_file(common.truth.as_deref())? {
        Some(t) => t,
        None => sample_ground_truth(&cfg, seed, run)?,
    };
    let zs = sample_measurement_sequence(&truth, &cfg, seed, run)?;
    let model = FilterModel::new(&cfg, spec.kind)?.with_lscan(spec.lscan);
    let truth_tracks = branches_as_tracks(&truth);
    let params = TrajMetricParams::default();
    let mut post = PMBMPosterior::new();
    let mut metrics = Vec::with_capacity(zs.len());
    let mut est = Vec::new();
    for z in &zs {
        post = step(&post, z, &model)?;
        est = estimate(&post, model.params.gamma_d)?;
        metrics.push(trajectory_metric(&branches_as_tracks(&est), &truth_tracks, &params, post.time)?);
    }
    fs::create_dir_all(&common.out)?;
    write(&common.out, "estimate.txt", &encode_trees(&est))?;
    write(&common.out, "metric.csv", &metric_csv(&metrics))?;
    write(&common.out, "posterior.json", &snapshot_json(&post))?;
    if let Some(m) = metrics.last() {
        println!(
            "{spec}: {} estimated trees, final metric {:.4} (loc {:.4}, miss {:.4}, false {:.4}, switch {:.4})",
            est.len(),
            m.total,
            m.localisation,
            m.missed,
            m.false_target,
            m.switch
        );
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            common,
            filters,
            lscan,
            runs,
        } => run(common, filters, lscan, runs),
        Command::Sample { common, run } => sample(common, run),
        Command::Track { common, filter, run } => track(common, filter, run),
        Command::Scenario { scenario } => {
            println!("{}", scenario_to_json(&config(scenario.as_deref())?));
            Ok(())
        }
    }
}

fn error_json(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<trpmbm_core::Error>())
        .map_or("cli", |e| e.kind());
    serde_json::json!({ "error": { "kind": kind, "message": format!("{err:#}") } }).to_string()
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
