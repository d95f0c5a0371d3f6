//! Runs expanded scenarios in parallel and writes their outputs.
//!
//! Layout of an output directory:
//!
//! ```text
//! out/
//!   manifest.json        run metadata, config digest, wall-clock
//!   scenario.toml        the scenario file as given
//!   s000/ocs.json        aggregated operating characteristics
//!   s000/ocs.csv         the same, flattened to one row
//!   s000/replicates.csv  per-replicate platform metrics
//!   s000/comparisons.csv one row per arm comparison
//!   s000/events.log      per-replicate event log (with verbose events)
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{check_config, run_replicate, run_replicate_traced, ReplicateResult};
use crate::error::{Error, Result};
use crate::model::ScenarioConfig;
use crate::ocs::{aggregate, OperatingCharacteristics};
use crate::outcome::OutcomeCalibration;
use crate::scenario::{Scenario, ScenarioGrid};
use crate::stats::derive_stream;

/// Version of the `ocs.json` layout; bumped on incompatible changes.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Largest fraction of failed replicates tolerated in one scenario.
pub const DEFAULT_FAILURE_BUDGET: f64 = 0.001;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// `None` uses one worker per core.
    pub threads: Option<usize>,
    pub force: bool,
    pub verbose_events: bool,
    pub failure_budget: f64,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            threads: None,
            force: false,
            verbose_events: false,
            failure_budget: DEFAULT_FAILURE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: u64,
    pub error: String,
}

/// Contents of `ocs.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub schema_version: u32,
    pub tool_version: String,
    pub scenario_id: String,
    pub label: String,
    pub params: Vec<Param>,
    pub config: ScenarioConfig,
    pub calibration: OutcomeCalibration,
    pub failed_replicates: Vec<ReplicateFailure>,
    pub ocs: OperatingCharacteristics,
}

/// Results of one scenario held in memory.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub record: ScenarioRecord,
    pub results: Vec<ReplicateResult>,
    pub events: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestScenario {
    pub scenario_id: String,
    pub label: String,
    pub path: PathBuf,
    pub replicates: u32,
    pub failed_replicates: usize,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub schema_version: u32,
    pub config_digest: String,
    pub master_seed: u64,
    pub threads: usize,
    pub sigma: f64,
    pub sd_delta: f64,
    pub sd_baseline: f64,
    pub sd_week6: f64,
    pub scenarios: Vec<ManifestScenario>,
    pub wall_clock_seconds: f64,
}

/// Hex SHA-256 of the scenario file bytes.
pub fn config_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

enum Outcome {
    Done(ReplicateResult, Option<Vec<String>>),
    Failed(ReplicateFailure),
}

fn one_replicate(cfg: &ScenarioConfig, idx: u64, verbose: bool) -> Result<Outcome> {
    let mut rng = derive_stream(cfg.master_seed, idx);
    let run = if verbose {
        run_replicate_traced(cfg, &mut rng).map(|(res, trace)| {
            let mut lines = vec![format!("# replicate {idx}")];
            lines.extend(trace.events.iter().map(|e| e.to_string()));
            (res, Some(lines))
        })
    } else {
        run_replicate(cfg, &mut rng).map(|res| (res, None))
    };
    match run {
        Ok((res, lines)) => Ok(Outcome::Done(res, lines)),
        Err(Error::Analysis(e)) => Ok(Outcome::Failed(ReplicateFailure {
            replicate: idx,
            error: e.to_string(),
        })),
        Err(e) => Err(e),
    }
}

/// Runs every replicate of one scenario on the current rayon pool.
pub fn run_scenario(scenario: &Scenario, verbose: bool, failure_budget: f64) -> Result<ScenarioRun> {
    let cfg = &scenario.config;
    check_config(cfg)?;
    let outcomes: Vec<Outcome> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| one_replicate(cfg, i, verbose))
        .collect::<Result<_>>()?;

    let mut results = Vec::with_capacity(outcomes.len());
    let mut failed = Vec::new();
    let mut events = verbose.then(Vec::new);
    for o in outcomes {
        match o {
            Outcome::Done(res, lines) => {
                if let (Some(all), Some(lines)) = (events.as_mut(), lines) {
                    all.extend(lines);
                }
                results.push(res);
            }
            Outcome::Failed(f) => failed.push(f),
        }
    }
    let total = cfg.replicates as usize;
    if failed.len() as f64 > failure_budget * total as f64 {
        return Err(Error::FailureBudget {
            scenario: scenario.id.clone(),
            failed: failed.len(),
            total,
        });
    }
    for f in &failed {
        log::warn!("{}: replicate {} excluded: {}", scenario.id, f.replicate, f.error);
    }
    let ocs = aggregate(&results)?;
    let record = ScenarioRecord {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        scenario_id: scenario.id.clone(),
        label: scenario.label(),
        params: scenario
            .params
            .iter()
            .map(|(k, v)| Param {
                key: k.clone(),
                value: v.clone(),
            })
            .collect(),
        config: cfg.clone(),
        calibration: OutcomeCalibration::new(cfg.sd_calibration),
        failed_replicates: failed,
        ocs,
    };
    Ok(ScenarioRun {
        record,
        results,
        events,
    })
}

fn build_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))
}

/// Runs scenarios in memory on a pool of `threads` workers.
pub fn run_scenarios(
    scenarios: &[Scenario],
    threads: Option<usize>,
    verbose: bool,
) -> Result<Vec<ScenarioRun>> {
    let pool = build_pool(threads)?;
    pool.install(|| {
        scenarios
            .iter()
            .map(|s| run_scenario(s, verbose, DEFAULT_FAILURE_BUDGET))
            .collect()
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(Error::OutputNotEmpty(dir.to_path_buf()));
        }
    } else {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `ocs.csv`: the record flattened to a header row and one value row.
pub fn ocs_csv(record: &ScenarioRecord) -> Result<Vec<u8>> {
    let mut cols: Vec<(String, String)> = vec![
        ("scenario_id".into(), record.scenario_id.clone()),
        ("label".into(), record.label.clone()),
        ("replicates".into(), record.ocs.replicates.to_string()),
        ("failed_replicates".into(), record.failed_replicates.len().to_string()),
    ];
    for e in &record.ocs.per_effect {
        let p = format!("d{}", e.d);
        cols.push((format!("{p}_comparisons"), e.n_comparisons.to_string()));
        cols.push((format!("{p}_rejections"), e.rejections.to_string()));
        cols.push((format!("{p}_success_rate"), e.success_rate.to_string()));
        cols.push((format!("{p}_success_mc_error"), e.success_mc_error.to_string()));
        cols.push((format!("{p}_failure_rate"), e.failure_rate.to_string()));
        cols.push((format!("{p}_failure_mc_error"), e.failure_mc_error.to_string()));
        cols.push((format!("{p}_futility_rate"), e.futility_rate.to_string()));
        cols.push((format!("{p}_futility_mc_error"), e.futility_mc_error.to_string()));
    }
    let o = &record.ocs;
    let summaries = [
        ("platform_n", Some(o.platform_n)),
        ("control_n", Some(o.control_n)),
        ("arm_n", Some(o.arm_n)),
        ("controls_interim", o.controls_interim),
        ("controls_final", o.controls_final),
        ("n_arms", Some(o.n_arms)),
        ("arms_per_1000", Some(o.arms_per_1000)),
        ("platform_duration_weeks", Some(o.platform_duration_weeks)),
        ("arm_duration_weeks", Some(o.arm_duration_weeks)),
    ];
    for (name, s) in summaries {
        cols.push((format!("{name}_median"), opt(s.map(|s| s.median))));
        cols.push((format!("{name}_q25"), opt(s.map(|s| s.q25))));
        cols.push((format!("{name}_q75"), opt(s.map(|s| s.q75))));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(cols.iter().map(|c| &c.0))?;
    w.write_record(cols.iter().map(|c| &c.1))?;
    w.into_inner().map_err(|e| Error::Report(e.to_string()))
}

pub fn replicates_csv(scenario_id: &str, results: &[ReplicateResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario_id",
        "replicate",
        "total_n",
        "control_n",
        "n_arms",
        "duration_weeks",
        "arms_per_1000",
        "periods",
    ])?;
    for r in results {
        w.write_record([
            scenario_id.to_string(),
            r.replicate.to_string(),
            r.total_platform_n.to_string(),
            r.total_control_n.to_string(),
            r.n_arms_tested.to_string(),
            r.platform_duration_weeks.to_string(),
            r.arms_per_1000().to_string(),
            r.periods.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Report(e.to_string()))
}

pub fn comparisons_csv(scenario_id: &str, results: &[ReplicateResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario_id",
        "replicate",
        "arm_id",
        "d",
        "decision",
        "p_interim",
        "p_final",
        "n_t",
        "n_c_interim",
        "n_c_final",
        "duration_weeks",
        "entry_week",
        "exit_week",
    ])?;
    for r in results {
        for c in &r.comparisons {
            w.write_record([
                scenario_id.to_string(),
                r.replicate.to_string(),
                c.arm_id.to_string(),
                c.true_effect.value().to_string(),
                c.decision.as_str().to_string(),
                opt(c.p_interim),
                opt(c.p_final),
                c.n_treatment.to_string(),
                opt(c.n_concurrent_controls_interim),
                opt(c.n_concurrent_controls_final),
                c.duration_weeks.to_string(),
                c.entry_week.to_string(),
                c.exit_week.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Report(e.to_string()))
}

/// Writes the files of one finished scenario below `dir`.
pub fn write_scenario(dir: &Path, run: &ScenarioRun) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = &run.record.scenario_id;
    let mut json = serde_json::to_vec_pretty(&run.record)?;
    json.push(b'\n');
    write_atomic(&dir.join("ocs.json"), &json)?;
    write_atomic(&dir.join("ocs.csv"), &ocs_csv(&run.record)?)?;
    write_atomic(&dir.join("replicates.csv"), &replicates_csv(id, &run.results)?)?;
    write_atomic(&dir.join("comparisons.csv"), &comparisons_csv(id, &run.results)?)?;
    if let Some(events) = &run.events {
        let mut text = events.join("\n");
        text.push('\n');
        write_atomic(&dir.join("events.log"), text.as_bytes())?;
    }
    Ok(())
}

/// Runs a whole grid and writes every scenario plus the run manifest.
/// `config_bytes` are the scenario file as read, for the digest.
pub fn run_command(grid: &ScenarioGrid, config_bytes: &[u8], opts: &RunOptions) -> Result<RunManifest> {
    let started = Instant::now();
    let scenarios = grid.expand()?;
    for s in &scenarios {
        check_config(&s.config)?;
    }
    prepare_out_dir(&opts.out_dir, opts.force)?;
    let pool = build_pool(opts.threads)?;
    let threads = pool.current_num_threads();
    write_atomic(&opts.out_dir.join("scenario.toml"), config_bytes)?;

    let mut entries = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let t0 = Instant::now();
        log::info!("{} [{}]: {} replicates", s.id, s.label(), s.config.replicates);
        let run = pool.install(|| run_scenario(s, opts.verbose_events, opts.failure_budget))?;
        write_scenario(&opts.out_dir.join(&s.id), &run)?;
        entries.push(ManifestScenario {
            scenario_id: s.id.clone(),
            label: s.label(),
            path: PathBuf::from(&s.id),
            replicates: s.config.replicates,
            failed_replicates: run.record.failed_replicates.len(),
            wall_clock_seconds: t0.elapsed().as_secs_f64(),
        });
    }

    let cal = OutcomeCalibration::new(grid.base.sd_calibration);
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        schema_version: SCHEMA_VERSION,
        config_digest: config_digest(config_bytes),
        master_seed: grid.base.master_seed,
        threads,
        sigma: crate::outcome::derive_sigma(&cal.delta_map, cal.rho),
        sd_delta: cal.sd_delta,
        sd_baseline: cal.sd_baseline,
        sd_week6: cal.sd_week6,
        scenarios: entries,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&opts.out_dir.join("manifest.json"), &json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid(replicates: u32) -> ScenarioGrid {
        ScenarioGrid::single(ScenarioConfig {
            replicates,
            target_n_per_arm: 40,
            entry_horizon_months: 20,
            ..ScenarioConfig::default()
        })
    }

    #[test]
    fn digest_tracks_every_byte() {
        let a = config_digest(b"[base]\nalpha = 0.05\n");
        let b = config_digest(b"[base]\nalpha = 0.06\n");
        assert_ne!(a, b);
        assert_eq!(a, config_digest(b"[base]\nalpha = 0.05\n"));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn missing_out_dir_is_created_and_nonempty_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("nested/out");
        let grid = tiny_grid(5);
        let opts = RunOptions::new(&out);
        let manifest = run_command(&grid, b"x", &opts).unwrap();
        assert_eq!(manifest.scenarios.len(), 1);
        for f in ["manifest.json", "scenario.toml", "s000/ocs.json", "s000/ocs.csv", "s000/replicates.csv", "s000/comparisons.csv"] {
            assert!(out.join(f).exists(), "{f} missing");
        }
        assert!(matches!(run_command(&grid, b"x", &opts), Err(Error::OutputNotEmpty(_))));
        let forced = RunOptions {
            force: true,
            ..opts
        };
        run_command(&grid, b"x", &forced).unwrap();
    }

    #[test]
    fn verbose_run_writes_event_log() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            verbose_events: true,
            ..RunOptions::new(tmp.path())
        };
        run_command(&tiny_grid(2), b"x", &opts).unwrap();
        let log = fs::read_to_string(tmp.path().join("s000/events.log")).unwrap();
        assert!(log.starts_with("# replicate 0"));
        assert!(log.contains("entered"));
        assert!(log.contains("Final analysis"));
    }

    #[test]
    fn replicates_csv_has_one_row_per_replicate() {
        let scenarios = tiny_grid(7).expand().unwrap();
        let runs = run_scenarios(&scenarios, Some(1), false).unwrap();
        let text = String::from_utf8(replicates_csv("s000", &runs[0].results).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert!(text.starts_with("scenario_id,replicate,total_n,control_n,n_arms"));
    }
}
