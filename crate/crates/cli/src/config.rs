//! JSON simulation config with strict key checking.
//!
//! Every field is optional. Missing fields take the stock cloudlet and VM
//! profile (length 40000 MI, file/output size 300, 1 PE; VM image 10000 MB,
//! 512 MB RAM, 250 MIPS, bandwidth 1000, 1 PE).
//!
//! ```json
//! {
//!   "workload": {
//!     "num_cloudlets": 10000,
//!     "length":   { "dist": "uniform", "min": 10000, "max": 70000 },
//!     "priority": { "dist": "uniform" },
//!     "arrival":  { "model": "all_at_zero" },
//!     "seed": 42
//!   },
//!   "vm_count": 50,
//!   "hybrid": { "aging_quantum_ms": 20000, "priority_levels": 8 }
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use baas_sim::entities::{
    DEFAULT_VM_BANDWIDTH, DEFAULT_VM_IMAGE_SIZE_MB, DEFAULT_VM_MIPS, DEFAULT_VM_PES,
    DEFAULT_VM_RAM_MB,
};
use baas_sim::metrics::DEFAULT_STARVATION_THRESHOLD_MS;
use baas_sim::policies::{DEFAULT_AGING_QUANTUM_MS, DEFAULT_PRIORITY_LEVELS};
use baas_sim::workload::{
    DEFAULT_FILE_SIZE, DEFAULT_LENGTH_MI, DEFAULT_NUM_CLOUDLETS, DEFAULT_OUTPUT_SIZE, DEFAULT_PES,
};
use baas_sim::{
    AgingQuantum, ArrivalModel, DatacenterSpec, HybridParams, LengthDist, PolicyId, PriorityDist,
    VmSpec, WorkloadConfig,
};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("unknown key: {0}")]
    UnknownKey(String),
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// Where the cloudlets come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkloadSource {
    Generated(WorkloadConfig),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub workload: WorkloadSource,
    /// Total VMs, spread round-robin over the datacenters.
    pub vm_count: u32,
    pub dc_count: u32,
    pub chains: u64,
    /// Hardware profile shared by every VM; `vm_id` is ignored.
    pub vm: VmSpec,
    pub hybrid: HybridParams,
    pub starvation_threshold_ms: u64,
    pub out_dir: Option<PathBuf>,
    pub policy: Option<PolicyId>,
}

impl SimConfig {
    /// Datacenter layout: VM `i` (ids `0..vm_count`) lives in DC `i % dc_count`.
    pub fn datacenters(&self) -> Vec<DatacenterSpec> {
        let mut dcs: Vec<DatacenterSpec> = (0..self.dc_count)
            .map(|dc_id| DatacenterSpec {
                dc_id,
                vm_specs: Vec::new(),
            })
            .collect();
        for vm_id in 0..self.vm_count {
            dcs[(vm_id % self.dc_count) as usize].vm_specs.push(VmSpec {
                vm_id,
                ..self.vm.clone()
            });
        }
        dcs
    }

    /// Replaces the generator seed. No effect on CSV workloads.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let WorkloadSource::Generated(w) = &mut self.workload {
            w.seed = seed;
        }
        self
    }
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct RawConfig {
    workload: RawWorkload,
    workload_csv: Option<PathBuf>,
    vm_count: i64,
    dc_count: i64,
    chains: i64,
    vm: RawVm,
    hybrid: RawHybrid,
    starvation_threshold_ms: i64,
    out_dir: Option<PathBuf>,
    policy: Option<String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            workload: RawWorkload::default(),
            workload_csv: None,
            vm_count: 1,
            dc_count: 1,
            chains: 1,
            vm: RawVm::default(),
            hybrid: RawHybrid::default(),
            starvation_threshold_ms: DEFAULT_STARVATION_THRESHOLD_MS as i64,
            out_dir: None,
            policy: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct RawWorkload {
    num_cloudlets: i64,
    length: RawDist,
    priority: RawDist,
    arrival: RawArrival,
    file_size: i64,
    output_size: i64,
    pes: i64,
    seed: u64,
}

impl Default for RawWorkload {
    fn default() -> Self {
        Self {
            num_cloudlets: DEFAULT_NUM_CLOUDLETS as i64,
            length: RawDist::default(),
            priority: RawDist::default(),
            arrival: RawArrival::default(),
            file_size: DEFAULT_FILE_SIZE as i64,
            output_size: DEFAULT_OUTPUT_SIZE as i64,
            pes: i64::from(DEFAULT_PES),
            seed: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct RawDist {
    dist: String,
    value: Option<i64>,
    min: Option<i64>,
    max: Option<i64>,
}

impl Default for RawDist {
    fn default() -> Self {
        Self {
            dist: "constant".into(),
            value: None,
            min: None,
            max: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct RawArrival {
    model: String,
    base_interval_ms: Option<i64>,
    jitter_ms: Option<i64>,
}

impl Default for RawArrival {
    fn default() -> Self {
        Self {
            model: "all_at_zero".into(),
            base_interval_ms: None,
            jitter_ms: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct RawVm {
    mips: i64,
    pes: i64,
    ram_mb: i64,
    bandwidth: i64,
    image_size_mb: i64,
}

impl Default for RawVm {
    fn default() -> Self {
        Self {
            mips: DEFAULT_VM_MIPS as i64,
            pes: i64::from(DEFAULT_VM_PES),
            ram_mb: DEFAULT_VM_RAM_MB as i64,
            bandwidth: DEFAULT_VM_BANDWIDTH as i64,
            image_size_mb: DEFAULT_VM_IMAGE_SIZE_MB as i64,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawQuantum {
    Millis(i64),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct RawHybrid {
    aging_quantum_ms: RawQuantum,
    priority_levels: i64,
}

impl Default for RawHybrid {
    fn default() -> Self {
        Self {
            aging_quantum_ms: RawQuantum::Millis(DEFAULT_AGING_QUANTUM_MS as i64),
            priority_levels: i64::from(DEFAULT_PRIORITY_LEVELS),
        }
    }
}

fn at_least(key: &str, v: i64, min: i64) -> Result<u64, ConfigError> {
    if v < min {
        return invalid(format!("{key} must be ≥ {min}"));
    }
    Ok(v as u64)
}

fn at_least_u32(key: &str, v: i64, min: i64) -> Result<u32, ConfigError> {
    let v = at_least(key, v, min)?;
    u32::try_from(v).or_else(|_| invalid(format!("{key} is too large")))
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    // serde accepts a sequence for a struct; the schema has no arrays at all
    reject_arrays(&doc, "")?;
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
        .map_err(|e| ConfigError::Malformed(e.to_string()))?;
    de.end()
        .map_err(|e| ConfigError::Malformed(e.to_string()))?;
    if let Some(key) = unknown.into_iter().next() {
        return Err(ConfigError::UnknownKey(key));
    }
    convert(raw)
}

fn reject_arrays(v: &serde_json::Value, path: &str) -> Result<(), ConfigError> {
    match v {
        serde_json::Value::Array(_) => Err(ConfigError::Malformed(if path.is_empty() {
            "expected a JSON object".into()
        } else {
            format!("{path}: expected an object or scalar, found an array")
        })),
        serde_json::Value::Object(map) => map.iter().try_for_each(|(k, v)| {
            let sub = if path.is_empty() {
                k.clone()
            } else {
                format!("{path}.{k}")
            };
            reject_arrays(v, &sub)
        }),
        _ => Ok(()),
    }
}

/// Reads a config file. A relative `workload_csv` path is resolved against
/// the config file's directory.
pub fn load_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut config = parse_config(&text)?;
    if let WorkloadSource::Csv(csv) = &mut config.workload {
        if csv.is_relative() {
            if let Some(dir) = path.parent() {
                *csv = dir.join(&*csv);
            }
        }
    }
    Ok(config)
}

fn convert(raw: RawConfig) -> Result<SimConfig, ConfigError> {
    let vm_count = at_least_u32("vm_count", raw.vm_count, 1)?;
    let dc_count = at_least_u32("dc_count", raw.dc_count, 1)?;
    if vm_count < dc_count {
        return invalid("vm_count must be ≥ dc_count (every datacenter hosts a VM)");
    }
    let chains = at_least("chains", raw.chains, 1)?;

    let vm = VmSpec {
        vm_id: 0,
        mips: at_least("vm.mips", raw.vm.mips, 1)?,
        pes: at_least_u32("vm.pes", raw.vm.pes, 1)?,
        ram_mb: at_least("vm.ram_mb", raw.vm.ram_mb, 0)?,
        bandwidth: at_least("vm.bandwidth", raw.vm.bandwidth, 0)?,
        image_size_mb: at_least("vm.image_size_mb", raw.vm.image_size_mb, 0)?,
    };

    let priority_levels = at_least_u32("hybrid.priority_levels", raw.hybrid.priority_levels, 1)?;
    let aging_quantum = match raw.hybrid.aging_quantum_ms {
        RawQuantum::Millis(ms) => {
            AgingQuantum::millis(at_least("hybrid.aging_quantum_ms", ms, 1)?).unwrap()
        }
        RawQuantum::Word(w) if w.eq_ignore_ascii_case("infinite") => AgingQuantum::Infinite,
        RawQuantum::Word(_) => {
            return invalid("hybrid.aging_quantum_ms must be a positive integer or \"infinite\"")
        }
    };
    let hybrid = HybridParams {
        aging_quantum,
        priority_levels,
    };

    let generated = convert_workload(raw.workload, priority_levels)?;
    let workload = match raw.workload_csv {
        Some(path) => WorkloadSource::Csv(path),
        None => WorkloadSource::Generated(generated),
    };

    let policy = raw
        .policy
        .map(|p| p.parse::<PolicyId>())
        .transpose()
        .map_err(|e| ConfigError::Invalid(format!("policy: {e}")))?;

    Ok(SimConfig {
        workload,
        vm_count,
        dc_count,
        chains,
        vm,
        hybrid,
        starvation_threshold_ms: at_least(
            "starvation_threshold_ms",
            raw.starvation_threshold_ms,
            0,
        )?,
        out_dir: raw.out_dir,
        policy,
    })
}

fn convert_workload(w: RawWorkload, levels: u32) -> Result<WorkloadConfig, ConfigError> {
    let length = match w.length.dist.as_str() {
        "constant" => {
            reject_bounds("workload.length", &w.length)?;
            let v = w.length.value.unwrap_or(DEFAULT_LENGTH_MI as i64);
            LengthDist::Constant(at_least("workload.length.value", v, 1)?)
        }
        "uniform" => {
            if w.length.value.is_some() {
                return invalid("workload.length.value is only valid with dist \"constant\"");
            }
            let (Some(min), Some(max)) = (w.length.min, w.length.max) else {
                return invalid("workload.length uniform needs min and max");
            };
            let min = at_least("workload.length.min", min, 1)?;
            let max = at_least("workload.length.max", max, 1)?;
            if min > max {
                return invalid("workload.length.min must be ≤ workload.length.max");
            }
            LengthDist::Uniform { min, max }
        }
        other => {
            return invalid(format!(
                "workload.length.dist: unknown distribution {other:?}"
            ))
        }
    };

    let priority = match w.priority.dist.as_str() {
        "constant" => {
            reject_bounds("workload.priority", &w.priority)?;
            let v = at_least("workload.priority.value", w.priority.value.unwrap_or(0), 0)?;
            if v >= u64::from(levels) {
                return invalid(format!(
                    "workload.priority.value must be < hybrid.priority_levels ({levels})"
                ));
            }
            PriorityDist::Constant(v as u32)
        }
        "uniform" => {
            if w.priority.value.is_some() || w.priority.min.is_some() || w.priority.max.is_some() {
                return invalid(
                    "workload.priority uniform spans [0, priority_levels - 1] and takes no bounds",
                );
            }
            PriorityDist::Uniform { levels }
        }
        other => {
            return invalid(format!(
                "workload.priority.dist: unknown distribution {other:?}"
            ))
        }
    };

    let arrival = match w.arrival.model.as_str() {
        "all_at_zero" => {
            if w.arrival.base_interval_ms.is_some() || w.arrival.jitter_ms.is_some() {
                return invalid("workload.arrival all_at_zero takes no parameters");
            }
            ArrivalModel::AllAtZero
        }
        "uniform_jitter" => ArrivalModel::UniformJitter {
            base_interval_ms: at_least(
                "workload.arrival.base_interval_ms",
                w.arrival.base_interval_ms.unwrap_or(0),
                0,
            )?,
            jitter_ms: at_least(
                "workload.arrival.jitter_ms",
                w.arrival.jitter_ms.unwrap_or(0),
                0,
            )?,
        },
        other => return invalid(format!("workload.arrival.model: unknown model {other:?}")),
    };

    let config = WorkloadConfig {
        num_cloudlets: at_least("workload.num_cloudlets", w.num_cloudlets, 0)?,
        length,
        priority,
        arrival,
        file_size: at_least("workload.file_size", w.file_size, 0)?,
        output_size: at_least("workload.output_size", w.output_size, 0)?,
        pes: at_least_u32("workload.pes", w.pes, 1)?,
        seed: w.seed,
    };
    config
        .validate()
        .map_err(|e| ConfigError::Invalid(format!("workload: {e}")))?;
    Ok(config)
}

fn reject_bounds(key: &str, d: &RawDist) -> Result<(), ConfigError> {
    if d.min.is_some() || d.max.is_some() {
        return invalid(format!(
            "{key}.min/max are only valid with dist \"uniform\""
        ));
    }
    Ok(())
}
