//! Config-driven experiment runs behind the command-line interface.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{load_snapshot, save_snapshot, NetworkParams};
use crate::env::{builtin_scenario, scenario_violations, Environment, Scenario, BUILTIN_SCENARIOS};
use crate::error::{Error, Result};
use crate::learning::{run_phase, Phase, PhaseConfig, StepRecord};
use crate::metrics::{
    aggregate_seeds, compute_window, emit_table, AggregateReport, MetricWindow, ReportRow, SeedAggregate,
    TableFormat, WindowSpec,
};
use crate::policy::{build_policy, Policy, PolicySpec};
use crate::trace::{stream_hash, write_trace, TraceHeader};

pub const CONFIG_VERSION: u32 = 1;
pub const SEED_OFFSET_ENV: &str = "BANDIT_ROUTER_SEED_OFFSET";

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// One experiment: a policy run on a scenario over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Row name in reports; defaults to the policy kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Built-in scenario name or path to a scenario file. Relative paths
    /// resolve against the config file's directory.
    pub scenario: String,
    pub policy: PolicySpec,
    pub phases: Vec<PhaseConfig>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Save a model checkpoint every this many steps of each phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_interval: Option<u64>,
    /// Report over the last this many steps of the final phase instead of all of it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_window: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid experiment config: {e}")))
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.policy.policy.name().to_string())
    }

    /// Checks everything that does not need the scenario.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "version: unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds: at least one seed is required"));
        }
        let mut seen = HashSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                return Err(Error::config(format!("seeds: duplicate seed {s}")));
            }
        }
        if self.phases.is_empty() {
            return Err(Error::config("phases: at least one phase is required"));
        }
        for (i, p) in self.phases.iter().enumerate() {
            p.validate().map_err(|e| Error::config(format!("phases[{i}]: {e}")))?;
        }
        self.policy.validate().map_err(|e| Error::config(format!("policy: {e}")))?;
        if self.checkpoint_interval == Some(0) {
            return Err(Error::config("checkpoint_interval: must be >= 1"));
        }
        if self.report_window == Some(0) {
            return Err(Error::config("report_window: must be >= 1"));
        }
        Ok(())
    }
}

/// A validated config with its scenario resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        let scenario = resolve_scenario(&config.scenario, base_dir)?;
        for (i, p) in config.phases.iter().enumerate() {
            if p.steps > scenario.horizon {
                return Err(Error::config(format!(
                    "phases[{i}]: {} steps exceed the scenario horizon of {}",
                    p.steps, scenario.horizon
                )));
            }
        }
        Ok(Self { config, scenario })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let config = ExperimentConfig::from_json(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::new(config, base).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn seeds(&self, offset: u64) -> Vec<u64> {
        self.config.seeds.iter().map(|s| s.wrapping_add(offset)).collect()
    }
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read scenario {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("scenario {}: {e}", path.display())))
}

/// Built-in name, or a scenario file path (relative to `base_dir`). The
/// result is validated.
pub fn resolve_scenario(name_or_path: &str, base_dir: &Path) -> Result<Scenario> {
    let scenario = if BUILTIN_SCENARIOS.contains(&name_or_path) {
        builtin_scenario(name_or_path)?
    } else {
        let path = base_dir.join(name_or_path);
        if !path.is_file() {
            return Err(Error::config(format!(
                "unknown scenario '{name_or_path}': not one of {} and no file at {}",
                BUILTIN_SCENARIOS.join(", "),
                path.display()
            )));
        }
        load_scenario_file(&path)?
    };
    let violations = scenario_violations(&scenario);
    if !violations.is_empty() {
        return Err(Error::config(format!(
            "scenario '{name_or_path}' is invalid: {}",
            violations.join("; ")
        )));
    }
    Ok(scenario)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses one per core.
    pub jobs: Option<usize>,
    /// Overrides the config's output directory.
    pub output: Option<PathBuf>,
    pub save_model: Option<PathBuf>,
    /// Initial network for every seed.
    pub load_model: Option<PathBuf>,
    /// Added to every configured seed.
    pub seed_offset: u64,
}

impl RunOptions {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        if self.jobs == Some(0) {
            return Err(Error::config("--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.unwrap_or(0))
            .build()
            .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))
    }
}

/// Parses a seed offset as read from the environment.
pub fn parse_seed_offset(raw: Option<&str>) -> Result<u64> {
    match raw.map(str::trim) {
        None | Some("") => Ok(0),
        Some(v) => v
            .parse()
            .map_err(|e| Error::config(format!("{SEED_OFFSET_ENV}='{v}' is not an unsigned integer: {e}"))),
    }
}

/// Everything one seed of an experiment produced.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub stream_hash: u64,
    /// Metrics over the report window of the final phase.
    pub window: MetricWindow,
    pub trace_path: PathBuf,
    pub network: Option<NetworkParams<f64>>,
}

fn with_seed_suffix(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_seed{seed}.{ext}"),
        None => format!("{stem}_seed{seed}"),
    };
    path.with_file_name(name)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run_seed(exp: &Experiment, seed: u64, opts: &RunOptions, dir: &Path) -> Result<SeedRun> {
    let cfg = &exp.config;
    let mut env = Environment::new(exp.scenario.clone(), seed)?;
    let mut policy: Box<dyn Policy> = build_policy(&cfg.policy, env.num_arms(), seed)?;
    if let Some(path) = &opts.load_model {
        policy.set_network(load_snapshot(path)?)?;
    }
    let hasher = cfg.policy.hasher();
    let label = cfg.label();

    let mut records = Vec::new();
    let mut last_phase = Vec::new();
    for (i, phase) in cfg.phases.iter().enumerate() {
        let checkpoint = |rec: &StepRecord, pol: &dyn Policy| -> Result<()> {
            let (Some(every), Some(net)) = (cfg.checkpoint_interval, pol.network()) else {
                return Ok(());
            };
            let done = rec.step + 1;
            if done.is_multiple_of(every) {
                let ckpt_dir = dir.join("checkpoints");
                create_dir(&ckpt_dir)?;
                let name = format!("seed{seed}_phase{i}_{}_step{done}.json", phase.phase.name());
                save_snapshot(net, &ckpt_dir.join(name))?;
            }
            Ok(())
        };
        let phase_records = run_phase(&mut env, policy.as_mut(), &hasher, phase, seed, checkpoint)?;
        records.extend_from_slice(&phase_records);
        last_phase = phase_records;
    }

    let spec = cfg.report_window.map_or(WindowSpec::Full, WindowSpec::Last);
    let window = compute_window(&last_phase, spec)?;
    let hash = stream_hash(&exp.scenario, seed, &records)?;
    let header = TraceHeader::new(&exp.scenario.name, &label, seed, hash);
    let trace_path = dir.join(format!("trace_seed{seed}.jsonl"));
    write_trace(&trace_path, &header, &records)?;

    let network = policy.network().cloned();
    if let Some(net) = &network {
        save_snapshot(net, &dir.join(format!("model_seed{seed}.json")))?;
    }
    Ok(SeedRun {
        seed,
        records,
        stream_hash: hash,
        window,
        trace_path,
        network,
    })
}

fn run_all(exp: &Experiment, opts: &RunOptions, dir: &Path) -> Result<Vec<SeedRun>> {
    if (opts.save_model.is_some() || opts.load_model.is_some()) && !exp.config.policy.policy.is_deep() {
        return Err(Error::config(format!(
            "--save-model/--load-model need a network policy, got {}",
            exp.config.policy.policy.name()
        )));
    }
    create_dir(dir)?;
    let seeds = exp.seeds(opts.seed_offset);
    let pool = opts.pool()?;
    let results: Vec<Result<SeedRun>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                run_seed(exp, seed, opts, dir).map_err(|e| Error::Run {
                    run: format!("{} seed {seed}", exp.config.label()),
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    if let Some(path) = &opts.save_model {
        for run in &runs {
            let target = if runs.len() == 1 {
                path.clone()
            } else {
                with_seed_suffix(path, run.seed)
            };
            if let Some(net) = &run.network {
                save_snapshot(net, &target)?;
            }
        }
    }
    Ok(runs)
}

fn report_row(label: String, scenario: &str, runs: &[SeedRun]) -> Result<ReportRow> {
    let windows: Vec<MetricWindow> = runs.iter().map(|r| r.window).collect();
    let stats = match windows.as_slice() {
        [only] => SeedAggregate::single(only),
        _ => aggregate_seeds(&windows)?,
    };
    Ok(ReportRow {
        policy: label,
        scenario: scenario.to_string(),
        stats,
    })
}

fn write_report(report: &AggregateReport, dir: &Path) -> Result<()> {
    emit_table(report, TableFormat::Csv, &dir.join("report.csv"))?;
    emit_table(report, TableFormat::Markdown, &dir.join("report.md"))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub report: AggregateReport,
    pub runs: Vec<SeedRun>,
}

/// Runs every seed of one experiment and writes traces, model snapshots
/// and `report.csv` / `report.md` into the output directory.
pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let exp = Experiment::load(config_path)?;
    run_experiment(&exp, opts)
}

pub fn run_experiment(exp: &Experiment, opts: &RunOptions) -> Result<RunSummary> {
    let dir = opts.output.clone().unwrap_or_else(|| exp.config.output_dir.clone());
    let runs = run_all(exp, opts, &dir)?;
    let report = AggregateReport {
        rows: vec![report_row(exp.config.label(), &exp.scenario.name, &runs)?],
    };
    write_report(&report, &dir)?;
    Ok(RunSummary {
        output_dir: dir,
        report,
        runs,
    })
}

#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub output_dir: PathBuf,
    pub report: AggregateReport,
    /// Per experiment, in argument order.
    pub runs: Vec<(String, Vec<SeedRun>)>,
}

fn phase_shape(phases: &[PhaseConfig]) -> Vec<(Phase, u64)> {
    phases.iter().map(|p| (p.phase, p.steps)).collect()
}

/// Runs several experiments on the same scenario, seeds and phase lengths
/// so every policy sees identical query streams, then writes one merged
/// report. Each experiment's files go to a subdirectory named by its label.
pub fn cmd_compare(config_paths: &[PathBuf], opts: &RunOptions) -> Result<CompareSummary> {
    let exps = config_paths
        .iter()
        .map(|p| Experiment::load(p))
        .collect::<Result<Vec<_>>>()?;
    compare_experiments(&exps, opts)
}

pub fn compare_experiments(exps: &[Experiment], opts: &RunOptions) -> Result<CompareSummary> {
    let Some(first) = exps.first() else {
        return Err(Error::config("compare needs at least one config"));
    };
    let mut labels = HashSet::new();
    for exp in exps {
        let label = exp.config.label();
        if exp.scenario != first.scenario {
            return Err(Error::config(format!(
                "scenario mismatch: '{}' runs '{}' but '{}' runs '{}'",
                label,
                exp.config.scenario,
                first.config.label(),
                first.config.scenario
            )));
        }
        let (mut a, mut b) = (exp.config.seeds.clone(), first.config.seeds.clone());
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err(Error::config(format!("seed list mismatch between '{label}' and '{}'", first.config.label())));
        }
        if phase_shape(&exp.config.phases) != phase_shape(&first.config.phases) {
            return Err(Error::config(format!(
                "phase kinds and lengths differ between '{label}' and '{}'",
                first.config.label()
            )));
        }
        if !labels.insert(label.clone()) {
            return Err(Error::config(format!("duplicate label '{label}'; set distinct \"label\" fields")));
        }
    }

    let root = opts.output.clone().unwrap_or_else(|| first.config.output_dir.clone());
    let mut all = Vec::with_capacity(exps.len());
    for exp in exps {
        let label = exp.config.label();
        let sub = RunOptions {
            save_model: None,
            ..opts.clone()
        };
        let runs = run_all(exp, &sub, &root.join(&label))?;
        all.push((label, runs));
    }

    let (ref_label, ref_runs) = &all[0];
    for (label, runs) in &all[1..] {
        for (a, b) in ref_runs.iter().zip(runs) {
            if a.seed != b.seed || a.stream_hash != b.stream_hash {
                return Err(Error::domain(format!(
                    "stream hash mismatch for seed {}: '{ref_label}' vs '{label}'",
                    a.seed
                )));
            }
        }
    }

    let mut report = AggregateReport::default();
    for (exp, (label, runs)) in exps.iter().zip(&all) {
        report.rows.push(report_row(label.clone(), &exp.scenario.name, runs)?);
    }
    create_dir(&root)?;
    write_report(&report, &root)?;
    Ok(CompareSummary {
        output_dir: root,
        report,
        runs: all,
    })
}

/// JSON of a built-in scenario.
pub fn cmd_scenario_export(name: &str) -> Result<String> {
    let scenario = builtin_scenario(name)?;
    Ok(serde_json::to_string_pretty(&scenario)?)
}

/// All invariant violations of a built-in scenario or scenario file; empty
/// when valid.
pub fn cmd_scenario_validate(name_or_path: &str) -> Result<Vec<String>> {
    let scenario = if BUILTIN_SCENARIOS.contains(&name_or_path) {
        builtin_scenario(name_or_path)?
    } else {
        let path = Path::new(name_or_path);
        if !path.is_file() {
            return Err(Error::config(format!(
                "unknown scenario '{name_or_path}': not one of {} and not a file",
                BUILTIN_SCENARIOS.join(", ")
            )));
        }
        load_scenario_file(path)?
    };
    Ok(scenario_violations(&scenario))
}
