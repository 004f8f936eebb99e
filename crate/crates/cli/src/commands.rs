//! `run` and `compare`: build the entity world, generate or load the
//! workload, simulate, and write reports.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;

use baas_sim::metrics::{write_comparison_csv, write_task_csv};
use baas_sim::{
    compute_report, generate, load_csv, Cloudlet, EngineError, EntityError, MetricsError,
    MetricsReport, Policy, PolicyId, RunOutcome, SimulationRun, TaskRecord, WorkloadError, World,
};
use tempfile::NamedTempFile;
use thiserror::Error;

use crate::config::{ConfigError, SimConfig, WorkloadSource};
use crate::svg::render_comparison_chart;

pub const TASKS_FILE: &str = "tasks.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const CHART_FILE: &str = "comparison.svg";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("workload: {0}")]
    Workload(#[from] WorkloadError),
    #[error("setup: {0}")]
    Entity(#[from] EntityError),
    #[error("simulation: {0}")]
    Engine(#[from] EngineError),
    #[error("report: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    /// 1 for usage, config and input errors; 2 for failures once the
    /// simulation has started.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Workload(_) => 1,
            CliError::Entity(_)
            | CliError::Engine(_)
            | CliError::Metrics(_)
            | CliError::Io { .. } => 2,
        }
    }
}

/// Parses a comma-separated policy list. Duplicates collapse; order does not
/// matter since reports always use the fixed policy order.
pub fn parse_policy_list(list: &str) -> Result<Vec<PolicyId>, CliError> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let id: PolicyId = name
            .parse()
            .map_err(|e: baas_sim::PolicyError| CliError::Usage(e.to_string()))?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("policy list is empty".into()));
    }
    out.sort();
    Ok(out)
}

/// Materializes the configured workload and checks priorities against the
/// configured number of levels.
pub fn load_workload(config: &SimConfig) -> Result<Vec<Cloudlet>, CliError> {
    let cloudlets = match &config.workload {
        WorkloadSource::Generated(w) => generate(w)?,
        WorkloadSource::Csv(path) => load_csv(path)?,
    };
    let levels = config.hybrid.priority_levels;
    if let Some(c) = cloudlets.iter().find(|c| c.priority >= levels) {
        return Err(ConfigError::Invalid(format!(
            "cloudlet {} has priority {} but hybrid.priority_levels is {levels}",
            c.cloudlet_id, c.priority
        ))
        .into());
    }
    Ok(cloudlets)
}

pub fn workload_digest(cloudlets: &[Cloudlet]) -> u64 {
    let mut h = DefaultHasher::new();
    cloudlets.hash(&mut h);
    h.finish()
}

/// One policy's simulation and report.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub report: MetricsReport,
    pub records: Vec<TaskRecord>,
    pub dispatch_order: Vec<u64>,
    /// Digest of the workload this run consumed.
    pub workload_digest: u64,
}

pub fn simulate_outcome(
    config: &SimConfig,
    cloudlets: &[Cloudlet],
    policy: PolicyId,
) -> Result<RunOutcome, CliError> {
    let world = World::bootstrap(config.datacenters(), config.chains)?;
    let run = SimulationRun::new(world, Policy::new(policy, config.hybrid), cloudlets)?;
    Ok(run.run()?)
}

pub fn simulate(
    config: &SimConfig,
    cloudlets: &[Cloudlet],
    policy: PolicyId,
) -> Result<PolicyRun, CliError> {
    let workload_digest = workload_digest(cloudlets);
    let outcome = simulate_outcome(config, cloudlets, policy)?;
    let report = compute_report(
        &outcome.records,
        &outcome.vm_busy_ms(),
        policy,
        config.starvation_threshold_ms,
    )?;
    Ok(PolicyRun {
        report,
        records: outcome.records,
        dispatch_order: outcome.dispatch_order,
        workload_digest,
    })
}

/// Writes every file to a temporary name in `dir` first and only renames once
/// all contents are on disk, so a failure leaves no partial reports behind.
fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(bytes)
            .and_then(|_| tmp.as_file().sync_all())
            .map_err(io_err(tmp.path()))?;
        staged.push((tmp, dir.join(name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, dest) in staged {
        tmp.persist(&dest).map_err(|e| CliError::Io {
            path: dest.clone(),
            source: e.error,
        })?;
        written.push(dest);
    }
    Ok(written)
}

fn render<F>(f: F) -> Vec<u8>
where
    F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

#[derive(Debug)]
pub struct RunSummary {
    pub run: PolicyRun,
    pub files: Vec<PathBuf>,
}

/// Simulates one policy and writes `tasks.csv` and a one-row `comparison.csv`.
pub fn run_command(
    config: &SimConfig,
    policy: PolicyId,
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<RunSummary, CliError> {
    let config = match seed {
        Some(s) => config.clone().with_seed(s),
        None => config.clone(),
    };
    let cloudlets = load_workload(&config)?;
    if cloudlets.is_empty() {
        return Err(CliError::Usage(
            "workload is empty; nothing to report".into(),
        ));
    }
    let run = simulate(&config, &cloudlets, policy)?;
    let tasks = render(|b| write_task_csv(b, &run.records));
    let summary = render(|b| write_comparison_csv(b, std::slice::from_ref(&run.report)));
    let files = write_outputs(out_dir, &[(TASKS_FILE, tasks), (COMPARISON_FILE, summary)])?;
    Ok(RunSummary { run, files })
}

#[derive(Debug)]
pub struct CompareSummary {
    /// In fixed policy order.
    pub reports: Vec<MetricsReport>,
    pub workload_digest: u64,
    pub files: Vec<PathBuf>,
}

/// Runs the same workload under each policy (concurrently) and writes
/// `comparison.csv` and `comparison.svg`.
pub fn compare_command(
    config: &SimConfig,
    policies: &[PolicyId],
    seed: Option<u64>,
    out_dir: &Path,
) -> Result<CompareSummary, CliError> {
    if policies.is_empty() {
        return Err(CliError::Usage("policy list is empty".into()));
    }
    let mut policies = policies.to_vec();
    policies.sort();
    policies.dedup();

    let config = match seed {
        Some(s) => config.clone().with_seed(s),
        None => config.clone(),
    };
    let cloudlets = load_workload(&config)?;
    if cloudlets.is_empty() {
        return Err(CliError::Usage(
            "workload is empty; nothing to compare".into(),
        ));
    }
    let digest = workload_digest(&cloudlets);

    let results: Vec<Result<PolicyRun, CliError>> = thread::scope(|s| {
        let handles: Vec<_> = policies
            .iter()
            .map(|&p| {
                let (config, cloudlets) = (&config, &cloudlets);
                s.spawn(move || simulate(config, cloudlets, p))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });

    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let run = r?;
        if run.workload_digest != digest {
            return Err(EngineError::Invariant(format!(
                "policy {} saw a different workload",
                run.report.policy
            ))
            .into());
        }
        reports.push(run.report);
    }

    let csv = render(|b| write_comparison_csv(b, &reports));
    let svg = render_comparison_chart(&reports).into_bytes();
    let files = write_outputs(out_dir, &[(COMPARISON_FILE, csv), (CHART_FILE, svg)])?;
    Ok(CompareSummary {
        reports,
        workload_digest: digest,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn policy_list_parsing() {
        assert_eq!(
            parse_policy_list("hybrid, FCFS,sjf,hybrid").unwrap(),
            vec![PolicyId::Fcfs, PolicyId::Sjf, PolicyId::Hybrid]
        );
        assert_eq!(
            parse_policy_list("sjf,sjjf").unwrap_err().to_string(),
            "unknown policy: sjjf"
        );
        assert!(parse_policy_list(" , ").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(
            CliError::from(ConfigError::UnknownKey("k".into())).exit_code(),
            1
        );
        assert_eq!(
            CliError::from(EngineError::HandshakeIncomplete).exit_code(),
            2
        );
    }

    #[test]
    fn out_of_range_priority_is_a_config_error() {
        let cfg = parse_config(
            r#"{"workload": {"num_cloudlets": 3, "priority": {"dist": "uniform"}},
                "hybrid": {"priority_levels": 8}}"#,
        )
        .unwrap();
        assert!(load_workload(&cfg).is_ok());
        let mut narrow = cfg.clone();
        narrow.hybrid.priority_levels = 1;
        let WorkloadSource::Generated(w) = &mut narrow.workload else {
            panic!()
        };
        w.priority = baas_sim::PriorityDist::Constant(3);
        assert_eq!(load_workload(&narrow).unwrap_err().exit_code(), 1);
    }
}
