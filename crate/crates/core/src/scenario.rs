//! Scenario files: a flat, line-oriented key/value format with `[section]`
//! headers, plus the price file and dataset manifest it references. Parsing
//! is dependency-free and every error names the file and line.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::autoscaler::{ScalingPolicy, Strategy};
use crate::costmodel::StoragePrices;
use crate::ids::ObjectId;
use crate::market::{AzKey, AzScope, BidPolicy, DelayModel, MarketKind};
use crate::storagesim::{parse_policy, StagingModel, Tier, TierPolicy};
use crate::traces::{parse_trace_csv, TraceRow};
use crate::workload::{QueueKind, WorkloadParams};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}:{line}: {reason}")]
    Load { path: String, line: usize, reason: String },
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
}

impl ScenarioError {
    fn at(path: &Path, line: usize, reason: impl Into<String>) -> Self {
        ScenarioError::Load {
            path: path.display().to_string(),
            line,
            reason: reason.into(),
        }
    }

    fn file(path: &Path, reason: impl fmt::Display) -> Self {
        ScenarioError::File { path: path.display().to_string(), reason: reason.to_string() }
    }
}

/// One parsed `key = value` line.
#[derive(Debug, Clone)]
struct KvLine {
    section: String,
    key: String,
    value: String,
    line: usize,
}

/// A parsed key/value file.
#[derive(Debug)]
pub struct KvFile {
    path: PathBuf,
    lines: Vec<KvLine>,
}

impl KvFile {
    pub fn parse(path: &Path, text: &str) -> Result<KvFile, ScenarioError> {
        let mut section = String::new();
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    ScenarioError::at(path, i + 1, "unterminated section header")
                })?;
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ScenarioError::at(path, i + 1, format!("expected key = value, got '{line}'")));
            };
            if section.is_empty() {
                return Err(ScenarioError::at(path, i + 1, "key before any [section]"));
            }
            lines.push(KvLine {
                section: section.clone(),
                key: key.trim().to_string(),
                value: value.trim().to_string(),
                line: i + 1,
            });
        }
        Ok(KvFile { path: path.to_path_buf(), lines })
    }

    pub fn load(path: &Path) -> Result<KvFile, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::file(path, e))?;
        Self::parse(path, &text)
    }

    fn get(&self, section: &str, key: &str) -> Option<&KvLine> {
        self.lines.iter().find(|l| l.section == section && l.key == key)
    }

    fn get_all(&self, section: &str, key: &str) -> Vec<&KvLine> {
        self.lines.iter().filter(|l| l.section == section && l.key == key).collect()
    }

    fn has_section(&self, section: &str) -> bool {
        self.lines.iter().any(|l| l.section == section)
    }

    fn value(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key).map(|l| l.value.as_str())
    }

    fn require(&self, section: &str, key: &str) -> Result<&KvLine, ScenarioError> {
        self.get(section, key).ok_or_else(|| {
            ScenarioError::at(&self.path, 0, format!("missing key '{key}' in [{section}]"))
        })
    }

    fn parse_with<T, F>(&self, line: &KvLine, what: &str, f: F) -> Result<T, ScenarioError>
    where
        F: FnOnce(&str) -> Option<T>,
    {
        f(&line.value).ok_or_else(|| {
            ScenarioError::at(
                &self.path,
                line.line,
                format!("bad {what} '{}' for key '{}'", line.value, line.key),
            )
        })
    }

    fn req_f64(&self, section: &str, key: &str) -> Result<f64, ScenarioError> {
        let line = self.require(section, key)?;
        self.parse_with(line, "number", |v| v.parse().ok())
    }

    fn req_u64(&self, section: &str, key: &str) -> Result<u64, ScenarioError> {
        let line = self.require(section, key)?;
        self.parse_with(line, "integer", |v| v.parse().ok())
    }

    fn opt_f64(&self, section: &str, key: &str, default: f64) -> Result<f64, ScenarioError> {
        match self.get(section, key) {
            Some(line) => self.parse_with(line, "number", |v| v.parse().ok()),
            None => Ok(default),
        }
    }

    fn opt_u64(&self, section: &str, key: &str, default: u64) -> Result<u64, ScenarioError> {
        match self.get(section, key) {
            Some(line) => self.parse_with(line, "integer", |v| v.parse().ok()),
            None => Ok(default),
        }
    }

    fn opt_bool(&self, section: &str, key: &str, default: bool) -> Result<bool, ScenarioError> {
        match self.get(section, key) {
            Some(line) => self.parse_with(line, "boolean", |v| match v {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            }),
            None => Ok(default),
        }
    }
}

/// Experiment families the runner knows how to drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    ElasticScaling,
    StorageCost,
    Throughput,
    CostAwareProvisioning,
    LifecycleSimulation,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Option<ExperimentKind> {
        match s {
            "elastic-scaling" => Some(ExperimentKind::ElasticScaling),
            "storage-cost" => Some(ExperimentKind::StorageCost),
            "throughput" => Some(ExperimentKind::Throughput),
            "cost-aware-provisioning" => Some(ExperimentKind::CostAwareProvisioning),
            "lifecycle-simulation" => Some(ExperimentKind::LifecycleSimulation),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::ElasticScaling => "elastic-scaling",
            ExperimentKind::StorageCost => "storage-cost",
            ExperimentKind::Throughput => "throughput",
            ExperimentKind::CostAwareProvisioning => "cost-aware-provisioning",
            ExperimentKind::LifecycleSimulation => "lifecycle-simulation",
        }
    }
}

/// All the prices one scenario runs under.
#[derive(Debug, Clone)]
pub struct PriceConfig {
    pub storage: StoragePrices,
    pub on_demand_per_hour: f64,
    pub transfer_per_gb: f64,
    pub billing_quantum_secs: u64,
    pub staging: StagingModel,
    pub delay: DelayModel,
}

impl Default for PriceConfig {
    fn default() -> Self {
        PriceConfig {
            storage: StoragePrices::default(),
            on_demand_per_hour: 0.239,
            transfer_per_gb: 0.020,
            billing_quantum_secs: 3600,
            staging: StagingModel::default(),
            delay: DelayModel::default(),
        }
    }
}

fn parse_delay_model(s: &str) -> Option<DelayModel> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["constant", v] => Some(DelayModel::Constant(v.parse().ok()?)),
        ["uniform", lo, hi] => {
            Some(DelayModel::Uniform { min_secs: lo.parse().ok()?, max_secs: hi.parse().ok()? })
        }
        ["uniform-spikes", lo, hi, prob, max] => Some(DelayModel::UniformWithSpikes {
            min_secs: lo.parse().ok()?,
            max_secs: hi.parse().ok()?,
            spike_prob: prob.parse().ok()?,
            spike_max_secs: max.parse().ok()?,
        }),
        _ => None,
    }
}

/// Loads a price file: one value per key, units in the key name.
pub fn load_price_file(path: &Path) -> Result<PriceConfig, ScenarioError> {
    let kv = KvFile::load(path)?;
    let s = "prices";
    if !kv.has_section(s) {
        return Err(ScenarioError::file(path, "missing [prices] section"));
    }
    let mut config = PriceConfig::default();
    config.storage.std_tiered = vec![
        (kv.opt_f64(s, "std-tier1-threshold-gb", 1000.0)?, kv.opt_f64(s, "std-tier1-usd-per-gb-month", 0.0300)?),
        (f64::INFINITY, kv.opt_f64(s, "std-usd-per-gb-month", 0.0295)?),
    ];
    config.storage.ia_per_gb_month = kv.opt_f64(s, "ia-usd-per-gb-month", 0.0125)?;
    config.storage.glacier_per_gb_month = kv.opt_f64(s, "glacier-usd-per-gb-month", 0.007)?;
    config.storage.glacier_transfer_price = kv.opt_f64(s, "glacier-transfer-usd-per-gb-hour", 0.01)?;
    config.storage.free_quota_fraction = kv.opt_f64(s, "glacier-free-quota-fraction", 0.05)?;
    config.storage.retrieval_window_hours = kv.opt_f64(s, "glacier-retrieval-window-hours", 4.0)?;
    config.on_demand_per_hour = kv.opt_f64(s, "on-demand-usd-per-hour", 0.239)?;
    config.transfer_per_gb = kv.opt_f64(s, "transfer-usd-per-gb", 0.020)?;
    config.billing_quantum_secs = kv.opt_u64(s, "billing-quantum-secs", 3600)?;
    config.staging = StagingModel {
        bandwidth_gb_per_sec: kv.opt_f64(s, "staging-bandwidth-gb-per-sec", 0.1)?,
        glacier_retrieval_secs: kv.opt_u64(s, "glacier-retrieval-secs", 4 * 3600)?,
    };
    if let Some(line) = kv.get(s, "provisioning-delay") {
        config.delay = kv.parse_with(line, "delay model", parse_delay_model)?;
    }
    Ok(config)
}

/// One dataset manifest row: `object_id,size_gb,initial_tier,owner_role`.
#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub object: ObjectId,
    pub size_gb: f64,
    pub initial_tier: Tier,
    pub owner_role: String,
}

pub const MANIFEST_HEADER: &str = "object_id,size_gb,initial_tier,owner_role";

pub fn parse_manifest_csv(path: &Path, text: &str) -> Result<Vec<ManifestRow>, ScenarioError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == MANIFEST_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(ScenarioError::at(path, i + 1, format!("expected 4 fields, got {}", fields.len())));
        }
        let size_gb = fields[1]
            .parse::<f64>()
            .map_err(|_| ScenarioError::at(path, i + 1, format!("bad size '{}'", fields[1])))?;
        let tier = Tier::parse(fields[2])
            .ok_or_else(|| ScenarioError::at(path, i + 1, format!("unknown tier '{}'", fields[2])))?;
        rows.push(ManifestRow {
            object: ObjectId::new(fields[0]),
            size_gb,
            initial_tier: tier,
            owner_role: fields[3].to_string(),
        });
    }
    Ok(rows)
}

/// A role declaration from the scenario's `[rbac]` section.
#[derive(Debug, Clone)]
pub struct RoleDecl {
    pub name: String,
    pub internal: bool,
    pub trusted: bool,
}

/// A policy declaration: role, resource pattern, actions.
#[derive(Debug, Clone)]
pub struct PolicyDecl {
    pub role: String,
    pub resource: String,
    pub actions: Vec<String>,
}

/// Scaling configuration including market and placement choices.
#[derive(Debug, Clone)]
pub struct ScalingConfig {
    pub policy: ScalingPolicy,
    pub bid: BidPolicy,
    /// Fixed pools that exist before the workload start with zero
    /// provisioning delay.
    pub pre_provisioned: bool,
}

#[derive(Debug, Clone)]
pub struct ThroughputConfig {
    pub task_count: u32,
    pub worker_counts: Vec<u32>,
    pub per_worker_rate: f64,
    pub read_capacity: f64,
    pub write_capacity: f64,
    pub reads_per_task: u32,
    pub writes_per_task: u32,
}

#[derive(Debug, Clone)]
pub struct LifecycleConfig {
    pub days: u32,
    /// Hot objects are re-accessed roughly this often.
    pub access_period_days: u32,
    pub access_jitter_days: u32,
}

#[derive(Debug, Clone)]
pub struct CostAwareConfig {
    pub data_volume_grid_gb: Vec<f64>,
    pub month_hours: u64,
}

/// One requested row of the storage-cost projection.
#[derive(Debug, Clone)]
pub enum StorageCostRow {
    SingleTier(Tier),
    Policy { policy: TierPolicy, hot_fraction: f64 },
}

impl StorageCostRow {
    pub fn label(&self) -> String {
        match self {
            StorageCostRow::SingleTier(t) => match t {
                Tier::Std => "S3-Standard".to_string(),
                Tier::Ia => "S3-Infrequent Access".to_string(),
                Tier::Glacier | Tier::Retrieving => "Glacier".to_string(),
            },
            StorageCostRow::Policy { policy, hot_fraction } => {
                if policy.terminal_tier() == Tier::Glacier {
                    format!("{policy} ({:.0}%)", hot_fraction * 100.0)
                } else {
                    policy.to_string()
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StorageCostConfig {
    pub dataset_gb: f64,
    pub rows: Vec<StorageCostRow>,
    /// Enables the access-cost column for archive-backed rows.
    pub peak_daily_retrieval_gb: Option<f64>,
}

/// A fully loaded scenario.
#[derive(Debug)]
pub struct Scenario {
    pub path: PathBuf,
    pub name: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub max_virtual_days: u64,
    pub instance_type: String,
    pub home: AzKey,
    pub prices: PriceConfig,
    pub trace_rows: Vec<TraceRow>,
    pub manifest: Vec<ManifestRow>,
    pub tier_policy: Option<TierPolicy>,
    /// Attach each workload job's input to a manifest object of the same size.
    pub bind_inputs_by_size: bool,
    pub workload: Option<WorkloadParams>,
    pub scaling: Option<ScalingConfig>,
    /// A second pool, typically the always-on development pool.
    pub scaling_dev: Option<ScalingConfig>,
    pub roles: Vec<RoleDecl>,
    pub policies: Vec<PolicyDecl>,
    pub throughput: Option<ThroughputConfig>,
    pub lifecycle: Option<LifecycleConfig>,
    pub cost_aware: Option<CostAwareConfig>,
    pub storage_cost: Option<StorageCostConfig>,
}

fn parse_csv_list<T, F>(kv: &KvFile, line: &KvLine, what: &str, f: F) -> Result<Vec<T>, ScenarioError>
where
    F: Fn(&str) -> Option<T>,
{
    line.value
        .split(',')
        .map(|tok| {
            f(tok.trim()).ok_or_else(|| {
                ScenarioError::at(
                    kv.path.as_path(),
                    line.line,
                    format!("bad {what} '{}' in list for '{}'", tok.trim(), line.key),
                )
            })
        })
        .collect()
}

fn load_workload(kv: &KvFile) -> Result<Option<WorkloadParams>, ScenarioError> {
    let s = "workload";
    if !kv.has_section(s) {
        return Ok(None);
    }
    let mix_line = kv.require(s, "duration-mix")?;
    let duration_mix = parse_csv_list(kv, mix_line, "duration:probability", |tok| {
        let (d, p) = tok.split_once(':')?;
        Some((d.parse::<u64>().ok()?, p.parse::<f64>().ok()?))
    })?;
    let sizes_line = kv.require(s, "input-size-choices-gb")?;
    let input_size_choices_gb = parse_csv_list(kv, sizes_line, "size", |tok| tok.parse::<f64>().ok())?;
    let queue_line = kv.require(s, "queue")?;
    let queue = kv.parse_with(queue_line, "queue", QueueKind::parse)?;
    Ok(Some(WorkloadParams {
        job_count: kv.req_u64(s, "job-count")? as u32,
        mean_inter_arrival_secs: kv.req_f64(s, "mean-inter-arrival-secs")?,
        duration_mix,
        duration_jitter_fraction: kv.opt_f64(s, "duration-jitter-fraction", 0.0)?,
        input_size_choices_gb,
        output_size_gb: kv.opt_f64(s, "output-size-gb", 0.0)?,
        queue,
        owner_role: kv.require(s, "owner-role")?.value.clone(),
    }))
}

fn load_scaling(kv: &KvFile, s: &str) -> Result<Option<ScalingConfig>, ScenarioError> {
    if !kv.has_section(s) {
        return Ok(None);
    }
    let strategy_line = kv.require(s, "strategy")?;
    let strategy = match strategy_line.value.as_str() {
        "no-scaling" => Strategy::NoScaling { fixed_size: kv.req_u64(s, "fixed-size")? as u32 },
        "limited" => Strategy::Limited { max_size: kv.req_u64(s, "max-size")? as u32 },
        "unlimited" => Strategy::Unlimited,
        other => {
            return Err(ScenarioError::at(
                kv.path.as_path(),
                strategy_line.line,
                format!("unknown strategy '{other}'"),
            ))
        }
    };
    let market = match kv.value(s, "market") {
        Some(v) => {
            let line = kv.get(s, "market").unwrap();
            kv.parse_with(line, "market", |_| MarketKind::parse(v))?
        }
        None => MarketKind::Spot,
    };
    let az_scope = match kv.get(s, "az-scope") {
        Some(line) => kv.parse_with(line, "az scope", AzScope::parse)?,
        None => AzScope::WithinRegion,
    };
    let pool = match kv.get(s, "pool") {
        Some(line) => kv.parse_with(line, "pool", QueueKind::parse)?,
        None => QueueKind::Production,
    };
    let bid = match kv.get(s, "bid-policy") {
        Some(line) => kv.parse_with(line, "bid policy", |v| {
            let (kind, val) = v.split_once(':')?;
            let val: f64 = val.parse().ok()?;
            match kind {
                "static" => Some(BidPolicy::Static(val)),
                "fraction" => Some(BidPolicy::FractionOfOnDemand(val)),
                _ => None,
            }
        })?,
        None => BidPolicy::FractionOfOnDemand(1.0),
    };
    let policy = ScalingPolicy {
        strategy,
        min_size: kv.opt_u64(s, "min-size", 0)? as u32,
        pool,
        market,
        az_scope,
        idle_timeout_secs: kv.opt_u64(s, "idle-timeout-secs", 3300)?,
    };
    policy.validate().map_err(|e| ScenarioError::file(kv.path.as_path(), e))?;
    Ok(Some(ScalingConfig {
        policy,
        bid,
        pre_provisioned: kv.opt_bool(s, "pre-provisioned", false)?,
    }))
}

fn load_rbac(kv: &KvFile) -> Result<(Vec<RoleDecl>, Vec<PolicyDecl>), ScenarioError> {
    let mut roles = Vec::new();
    for line in kv.get_all("rbac", "role") {
        let parts: Vec<&str> = line.value.split_whitespace().collect();
        let (name, rest) = parts.split_first().ok_or_else(|| {
            ScenarioError::at(kv.path.as_path(), line.line, "empty role declaration")
        })?;
        let mut internal = false;
        let mut trusted = false;
        for tok in rest {
            match *tok {
                "user" => internal = false,
                "internal" => internal = true,
                "trusted" => trusted = true,
                other => {
                    return Err(ScenarioError::at(
                        kv.path.as_path(),
                        line.line,
                        format!("unknown role attribute '{other}'"),
                    ))
                }
            }
        }
        roles.push(RoleDecl { name: (*name).to_string(), internal, trusted });
    }
    let mut policies = Vec::new();
    for line in kv.get_all("rbac", "policy") {
        let parts: Vec<&str> = line.value.split_whitespace().collect();
        let [role, resource, actions] = parts.as_slice() else {
            return Err(ScenarioError::at(
                kv.path.as_path(),
                line.line,
                "policy needs: <role> <resource> <action[,action]>",
            ));
        };
        policies.push(PolicyDecl {
            role: (*role).to_string(),
            resource: (*resource).to_string(),
            actions: actions.split(',').map(str::to_string).collect(),
        });
    }
    Ok((roles, policies))
}

fn load_storage_cost(kv: &KvFile) -> Result<Option<StorageCostConfig>, ScenarioError> {
    let s = "storage-cost";
    if !kv.has_section(s) {
        return Ok(None);
    }
    let mut rows = Vec::new();
    for line in kv.get_all(s, "row") {
        let (policy_text, hot) = match line.value.split_once(':') {
            Some((p, h)) => {
                let hot = h.parse::<f64>().map_err(|_| {
                    ScenarioError::at(kv.path.as_path(), line.line, format!("bad hot fraction '{h}'"))
                })?;
                (p, hot)
            }
            None => (line.value.as_str(), 0.0),
        };
        if let Some(tier) = Tier::parse(policy_text) {
            rows.push(StorageCostRow::SingleTier(tier));
        } else {
            let policy = parse_policy(policy_text)
                .map_err(|e| ScenarioError::at(kv.path.as_path(), line.line, e.to_string()))?;
            rows.push(StorageCostRow::Policy { policy, hot_fraction: hot });
        }
    }
    if rows.is_empty() {
        return Err(ScenarioError::file(kv.path.as_path(), "storage-cost needs at least one row"));
    }
    let peak_daily_retrieval_gb = match kv.get(s, "peak-daily-retrieval-gb") {
        Some(line) => Some(kv.parse_with(line, "number", |v| v.parse().ok())?),
        None => None,
    };
    Ok(Some(StorageCostConfig {
        dataset_gb: kv.req_f64(s, "dataset-gb")?,
        rows,
        peak_daily_retrieval_gb,
    }))
}

/// Loads and validates a scenario file and everything it references.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let kv = KvFile::load(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let s = "scenario";

    let kind_line = kv.require(s, "kind")?;
    let kind = kv.parse_with(kind_line, "experiment kind", ExperimentKind::parse)?;
    let name = kv
        .value(s, "name")
        .map(str::to_string)
        .or_else(|| path.file_stem().map(|v| v.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "scenario".to_string());

    let prices = match kv.value(s, "price-file") {
        Some(rel) => load_price_file(&dir.join(rel))?,
        None => PriceConfig::default(),
    };

    let trace_rows = match kv.value(s, "spot-trace-file") {
        Some(rel) => {
            let trace_path = dir.join(rel);
            let text = std::fs::read_to_string(&trace_path)
                .map_err(|e| ScenarioError::file(&trace_path, e))?;
            parse_trace_csv(&text).map_err(|e| ScenarioError::file(&trace_path, e))?
        }
        None => Vec::new(),
    };

    let manifest = match kv.value(s, "dataset-manifest") {
        Some(rel) => {
            let manifest_path = dir.join(rel);
            let text = std::fs::read_to_string(&manifest_path)
                .map_err(|e| ScenarioError::file(&manifest_path, e))?;
            parse_manifest_csv(&manifest_path, &text)?
        }
        None => Vec::new(),
    };

    let tier_policy = match kv.get(s, "tier-policy") {
        Some(line) => Some(
            parse_policy(&line.value)
                .map_err(|e| ScenarioError::at(path, line.line, e.to_string()))?,
        ),
        None => None,
    };

    let home = AzKey::new(
        kv.value(s, "home-region").unwrap_or("us-east-1").to_string(),
        kv.value(s, "home-az").unwrap_or("us-east-1a").to_string(),
    );

    let workload = load_workload(&kv)?;
    if let Some(ref w) = workload {
        w.validate().map_err(|e| ScenarioError::file(path, e))?;
    }
    let scaling = load_scaling(&kv, "scaling")?;
    let scaling_dev = load_scaling(&kv, "scaling-development")?;
    let (roles, policies) = load_rbac(&kv)?;

    let throughput = if kv.has_section("throughput") {
        let t = "throughput";
        let counts_line = kv.require(t, "worker-counts")?;
        let config = ThroughputConfig {
            task_count: kv.req_u64(t, "task-count")? as u32,
            worker_counts: parse_csv_list(&kv, counts_line, "worker count", |v| v.parse().ok())?,
            per_worker_rate: kv.opt_f64(t, "per-worker-rate", 4.90)?,
            read_capacity: kv.opt_f64(t, "read-capacity", 100.0)?,
            write_capacity: kv.opt_f64(t, "write-capacity", 400.0)?,
            reads_per_task: kv.opt_u64(t, "reads-per-task", 1)? as u32,
            writes_per_task: kv.opt_u64(t, "writes-per-task", 5)? as u32,
        };
        if config.read_capacity <= 0.0 || config.write_capacity <= 0.0 || config.per_worker_rate <= 0.0 {
            return Err(ScenarioError::file(path, "broker capacities and worker rate must be positive"));
        }
        Some(config)
    } else {
        None
    };

    let lifecycle = if kv.has_section("lifecycle") {
        Some(LifecycleConfig {
            days: kv.opt_u64("lifecycle", "days", 365)? as u32,
            access_period_days: kv.opt_u64("lifecycle", "access-period-days", 91)? as u32,
            access_jitter_days: kv.opt_u64("lifecycle", "access-jitter-days", 3)? as u32,
        })
    } else {
        None
    };

    let cost_aware = if kv.has_section("cost-aware") {
        let grid_line = kv.require("cost-aware", "data-volume-grid-gb")?;
        Some(CostAwareConfig {
            data_volume_grid_gb: parse_csv_list(&kv, grid_line, "volume", |v| v.parse().ok())?,
            month_hours: kv.opt_u64("cost-aware", "month-hours", 720)?,
        })
    } else {
        None
    };

    let storage_cost = load_storage_cost(&kv)?;

    let scenario = Scenario {
        path: path.to_path_buf(),
        name,
        kind,
        seed: kv.req_u64(s, "seed")?,
        max_virtual_days: kv.opt_u64(s, "max-virtual-days", 30)?,
        instance_type: kv.value(s, "instance-type").unwrap_or("m4.xlarge").to_string(),
        home,
        prices,
        trace_rows,
        manifest,
        tier_policy,
        bind_inputs_by_size: kv.opt_bool(s, "bind-inputs-by-size", true)?,
        workload,
        scaling,
        scaling_dev,
        roles,
        policies,
        throughput,
        lifecycle,
        cost_aware,
        storage_cost,
    };

    // Per-kind requirements, checked before any simulation starts.
    let need = |ok: bool, what: &str| -> Result<(), ScenarioError> {
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::file(path, format!("{} scenario needs {what}", scenario.kind.label())))
        }
    };
    match scenario.kind {
        ExperimentKind::ElasticScaling => {
            need(scenario.workload.is_some(), "a [workload] section")?;
            need(scenario.scaling.is_some(), "a [scaling] section")?;
            let spot = scenario.scaling.as_ref().map(|c| c.policy.market) == Some(MarketKind::Spot);
            need(!spot || !scenario.trace_rows.is_empty(), "a spot-trace-file for the spot market")?;
        }
        ExperimentKind::StorageCost => need(scenario.storage_cost.is_some(), "a [storage-cost] section")?,
        ExperimentKind::Throughput => need(scenario.throughput.is_some(), "a [throughput] section")?,
        ExperimentKind::CostAwareProvisioning => {
            need(scenario.cost_aware.is_some(), "a [cost-aware] section")?;
            need(!scenario.trace_rows.is_empty(), "a spot-trace-file")?;
        }
        ExperimentKind::LifecycleSimulation => {
            need(scenario.lifecycle.is_some(), "a [lifecycle] section")?;
            need(!scenario.manifest.is_empty(), "a dataset-manifest")?;
            need(scenario.tier_policy.is_some(), "a tier-policy")?;
        }
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn parses_sections_keys_and_comments() {
        let text = "# comment\n[scenario]\nkind = storage-cost # trailing\nseed = 7\n\n[storage-cost]\ndataset-gb = 10000\nrow = STD\n";
        let kv = KvFile::parse(Path::new("test.scn"), text).unwrap();
        assert_eq!(kv.value("scenario", "kind"), Some("storage-cost"));
        assert_eq!(kv.value("scenario", "seed"), Some("7"));
        assert_eq!(kv.get_all("storage-cost", "row").len(), 1);
    }

    #[test]
    fn key_outside_section_errors_with_line() {
        let err = KvFile::parse(Path::new("test.scn"), "kind = x\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Load { line: 1, .. }), "{err}");
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let err = load_scenario(Path::new("/nonexistent/missing.scn")).unwrap_err();
        assert!(err.to_string().contains("missing.scn"));
    }

    #[test]
    fn full_storage_cost_scenario_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(
            dir.path(),
            "storage.scn",
            "[scenario]\nkind = storage-cost\nseed = 1\n\n[storage-cost]\ndataset-gb = 10000\nrow = STD\nrow = IA\nrow = GLACIER\nrow = STD30-IA\nrow = STD30-IA60-Glacier:0.03\nrow = STD30-IA60-Glacier:0.10\n",
        );
        let scenario = load_scenario(&path).unwrap();
        assert_eq!(scenario.kind, ExperimentKind::StorageCost);
        let sc = scenario.storage_cost.unwrap();
        assert_eq!(sc.rows.len(), 6);
        assert_eq!(sc.rows[4].label(), "STD30-IA60-Glacier (3%)");
    }

    #[test]
    fn manifest_round_trip() {
        let text = format!("{MANIFEST_HEADER}\ndataset/a,5,STD,analyst\ndataset/b,2.5,GLACIER,analyst\n");
        let rows = parse_manifest_csv(Path::new("m.csv"), &text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].initial_tier, Tier::Glacier);
        assert_eq!(rows[1].size_gb, 2.5);
    }

    #[test]
    fn bad_manifest_tier_names_line() {
        let err = parse_manifest_csv(Path::new("m.csv"), "dataset/a,5,WARM,analyst\n").unwrap_err();
        assert!(err.to_string().contains("m.csv:1"), "{err}");
    }

    #[test]
    fn price_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(
            dir.path(),
            "prices.txt",
            "[prices]\non-demand-usd-per-hour = 0.5\nbilling-quantum-secs = 1\nprovisioning-delay = constant:0\n",
        );
        let config = load_price_file(&path).unwrap();
        assert_eq!(config.on_demand_per_hour, 0.5);
        assert_eq!(config.billing_quantum_secs, 1);
        assert_eq!(config.delay, DelayModel::Constant(0));
        // untouched keys keep their defaults
        assert_eq!(config.storage.ia_per_gb_month, 0.0125);
    }

    #[test]
    fn elastic_scenario_requires_workload_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(dir.path(), "e.scn", "[scenario]\nkind = elastic-scaling\nseed = 1\n");
        let err = load_scenario(&path).unwrap_err();
        assert!(err.to_string().contains("[workload]"), "{err}");
    }

    #[test]
    fn rbac_declarations_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(
            dir.path(),
            "r.scn",
            "[scenario]\nkind = storage-cost\nseed = 1\n[storage-cost]\ndataset-gb = 1\nrow = STD\n[rbac]\nrole = analyst user\nrole = task-executor internal trusted\npolicy = analyst dataset/* read,download\n",
        );
        let scenario = load_scenario(&path).unwrap();
        assert_eq!(scenario.roles.len(), 2);
        assert!(scenario.roles[1].trusted && scenario.roles[1].internal);
        assert_eq!(scenario.policies[0].actions, vec!["read", "download"]);
    }
}
