//! Report assembly and the CSV/summary formats the runner emits. Every CSV
//! writer here has a matching parser, and writing is deterministic: the
//! same report always serializes to the same bytes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::costmodel::StrategyCost;
use crate::engine::JobEventRow;
use crate::ids::{InstanceId, JobId, ObjectId};
use crate::jobmgr::ThroughputRun;
use crate::rbac::{AuditRecord, Decision};
use crate::scenario::ExperimentKind;
use crate::simkernel::SimTime;
use crate::storagesim::Tier;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn parse_err(line: usize, reason: impl Into<String>) -> ReportError {
    ReportError::Parse { line, reason: reason.into() }
}

/// Per-job timing record.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub id: JobId,
    pub submit_secs: u64,
    pub wait_secs: u64,
    pub staging_secs: u64,
    pub run_secs: u64,
    pub completion_secs: u64,
    pub attempts: u32,
}

/// Per-instance billing record.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub id: InstanceId,
    pub market: String,
    pub region: String,
    pub az: String,
    pub ready_secs: u64,
    pub terminated_secs: u64,
    pub billed_usd: f64,
    pub od_equivalent_usd: f64,
}

/// Results of a full queue/fleet simulation.
#[derive(Debug, Clone)]
pub struct ElasticReport {
    pub strategy_label: String,
    pub jobs: Vec<JobRecord>,
    pub instances: Vec<InstanceRecord>,
    pub job_log: Vec<JobEventRow>,
    pub audit: Vec<AuditRecord>,
    pub makespan_secs: u64,
    pub billed_cost_usd: f64,
    pub od_equivalent_usd: f64,
    pub avg_wait_secs: f64,
    pub peak_wait_secs: u64,
    pub peak_concurrency: u32,
    pub revocations: u64,
    pub provision_failures: u64,
    pub broker_reads: u64,
    pub broker_writes: u64,
}

impl ElasticReport {
    pub fn audit_counts(&self) -> (u64, u64) {
        let allows = self.audit.iter().filter(|r| r.decision == Decision::Allow).count() as u64;
        (allows, self.audit.len() as u64 - allows)
    }
}

/// One row of the yearly storage projection.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageTableRow {
    pub label: String,
    pub cost_usd_per_year: f64,
    /// Yearly retrieval charge, when the scenario configured a demand.
    pub access_cost_usd: Option<f64>,
    pub access_time_hours: Option<f64>,
}

/// Analytic and simulated throughput per worker count.
#[derive(Debug, Clone)]
pub struct ThroughputReport {
    pub per_worker_rate: f64,
    pub rows: Vec<ThroughputTableRow>,
}

#[derive(Debug, Clone)]
pub struct ThroughputTableRow {
    pub workers: u32,
    pub analytic_tasks_per_sec: f64,
    pub run: ThroughputRun,
}

/// Daily aggregate of the lifecycle simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyTierRow {
    pub day: u32,
    pub std_gb: f64,
    pub ia_gb: f64,
    pub glacier_gb: f64,
    pub retrieving_gb: f64,
    pub cost_usd: f64,
}

/// Results of the year-long storage lifecycle simulation.
#[derive(Debug, Clone)]
pub struct LifecycleReport {
    pub days: u32,
    pub dataset_gb: f64,
    pub hot_fraction: f64,
    pub integrated_cost_usd: f64,
    pub formula_cost_usd: f64,
    pub object_order: Vec<ObjectId>,
    /// `tiers[day][i]` is the tier of `object_order[i]` at the end of `day`.
    pub daily_tiers: Vec<Vec<Tier>>,
    pub daily_rows: Vec<DailyTierRow>,
    pub accesses: Vec<(ObjectId, SimTime)>,
    pub audit: Vec<AuditRecord>,
}

/// Everything one scenario run produced.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub elastic: Option<ElasticReport>,
    pub storage_table: Option<Vec<StorageTableRow>>,
    pub throughput: Option<ThroughputReport>,
    pub cost_aware: Option<Vec<StrategyCost>>,
    pub lifecycle: Option<LifecycleReport>,
}

// --- job events CSV -------------------------------------------------------

pub const JOB_EVENTS_HEADER: &str = "job_id,event,at_seconds,detail";

pub fn write_job_events_csv(rows: &[JobEventRow]) -> String {
    let mut out = String::from(JOB_EVENTS_HEADER);
    out.push('\n');
    for row in rows {
        let job = if row.job == JobId(u64::MAX) { "-".to_string() } else { row.job.to_string() };
        let _ = writeln!(out, "{},{},{},{}", job, row.event, row.at.secs(), row.detail);
    }
    out
}

pub fn parse_job_events_csv(text: &str) -> Result<Vec<(String, String, u64, String)>, ReportError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == JOB_EVENTS_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, ',').collect();
        if fields.len() != 4 {
            return Err(parse_err(i + 1, "expected 4 fields"));
        }
        let at = fields[2].parse::<u64>().map_err(|_| parse_err(i + 1, "bad at_seconds"))?;
        rows.push((fields[0].to_string(), fields[1].to_string(), at, fields[3].to_string()));
    }
    Ok(rows)
}

// --- audit CSV ------------------------------------------------------------

pub const AUDIT_HEADER: &str = "at,principal,role,resource,action,decision";

pub fn write_audit_csv(records: &[AuditRecord]) -> String {
    let mut out = String::from(AUDIT_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.at.secs(),
            r.principal,
            r.acting_role,
            r.resource,
            r.action,
            r.decision
        );
    }
    out
}

/// Parsed audit row: (at, principal, role, resource, action, decision).
pub type AuditRow = (u64, String, String, String, String, String);

pub fn parse_audit_csv(text: &str) -> Result<Vec<AuditRow>, ReportError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == AUDIT_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(i + 1, "expected 6 fields"));
        }
        let at = fields[0].parse::<u64>().map_err(|_| parse_err(i + 1, "bad at"))?;
        rows.push((
            at,
            fields[1].to_string(),
            fields[2].to_string(),
            fields[3].to_string(),
            fields[4].to_string(),
            fields[5].to_string(),
        ));
    }
    Ok(rows)
}

// --- cost CSVs (one schema per experiment kind) ----------------------------

pub const INSTANCE_COST_HEADER: &str =
    "instance_id,market,region,az,ready_at_seconds,terminated_at_seconds,billed_usd,od_equivalent_usd";

pub fn write_instance_cost_csv(rows: &[InstanceRecord]) -> String {
    let mut out = String::from(INSTANCE_COST_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6}",
            r.id, r.market, r.region, r.az, r.ready_secs, r.terminated_secs, r.billed_usd, r.od_equivalent_usd
        );
    }
    out
}

pub fn parse_instance_cost_csv(text: &str) -> Result<Vec<(String, String, f64, f64)>, ReportError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == INSTANCE_COST_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(i + 1, "expected 8 fields"));
        }
        let billed = fields[6].parse::<f64>().map_err(|_| parse_err(i + 1, "bad billed_usd"))?;
        let od = fields[7].parse::<f64>().map_err(|_| parse_err(i + 1, "bad od_equivalent_usd"))?;
        rows.push((fields[0].to_string(), fields[1].to_string(), billed, od));
    }
    Ok(rows)
}

pub const STORAGE_COST_HEADER: &str = "strategy,cost_usd_per_year,access_cost_usd,access_time_hours";

pub fn write_storage_cost_csv(rows: &[StorageTableRow]) -> String {
    let mut out = String::from(STORAGE_COST_HEADER);
    out.push('\n');
    for r in rows {
        let access_cost = r.access_cost_usd.map_or("NIL".to_string(), |v| format!("{v:.2}"));
        let access_time = r.access_time_hours.map_or("NIL".to_string(), |v| format!("{v:.0}"));
        let _ = writeln!(out, "{},{:.2},{},{}", r.label, r.cost_usd_per_year, access_cost, access_time);
    }
    out
}

pub fn parse_storage_cost_csv(text: &str) -> Result<Vec<(String, f64)>, ReportError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == STORAGE_COST_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(i + 1, "expected 4 fields"));
        }
        let cost = fields[1].parse::<f64>().map_err(|_| parse_err(i + 1, "bad cost"))?;
        rows.push((fields[0].to_string(), cost));
    }
    Ok(rows)
}

pub const STRATEGY_COST_HEADER: &str = "data_gb,strategy,monthly_usd";

pub fn write_strategy_cost_csv(rows: &[StrategyCost]) -> String {
    let mut out = String::from(STRATEGY_COST_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{:.3},{},{:.6}", r.data_gb, r.strategy.label(), r.monthly_usd);
    }
    out
}

pub fn parse_strategy_cost_csv(text: &str) -> Result<Vec<(f64, String, f64)>, ReportError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == STRATEGY_COST_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(i + 1, "expected 3 fields"));
        }
        let gb = fields[0].parse::<f64>().map_err(|_| parse_err(i + 1, "bad data_gb"))?;
        let usd = fields[2].parse::<f64>().map_err(|_| parse_err(i + 1, "bad monthly_usd"))?;
        rows.push((gb, fields[1].to_string(), usd));
    }
    Ok(rows)
}

pub const THROUGHPUT_HEADER: &str =
    "workers,analytic_tasks_per_sec,simulated_completion_secs,simulated_tasks_per_sec";

pub fn write_throughput_csv(report: &ThroughputReport) -> String {
    let mut out = String::from(THROUGHPUT_HEADER);
    out.push('\n');
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{:.4},{:.3},{:.4}",
            row.workers, row.analytic_tasks_per_sec, row.run.completion_secs, row.run.tasks_per_sec
        );
    }
    out
}

pub fn parse_throughput_csv(text: &str) -> Result<Vec<(u32, f64, f64, f64)>, ReportError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == THROUGHPUT_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(i + 1, "expected 4 fields"));
        }
        let parse_f = |idx: usize| -> Result<f64, ReportError> {
            fields[idx].parse::<f64>().map_err(|_| parse_err(i + 1, "bad number"))
        };
        let workers = fields[0].parse::<u32>().map_err(|_| parse_err(i + 1, "bad workers"))?;
        rows.push((workers, parse_f(1)?, parse_f(2)?, parse_f(3)?));
    }
    Ok(rows)
}

pub const LIFECYCLE_HEADER: &str = "day,std_gb,ia_gb,glacier_gb,retrieving_gb,cost_usd";

pub fn write_lifecycle_csv(rows: &[DailyTierRow]) -> String {
    let mut out = String::from(LIFECYCLE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.3},{:.3},{:.3},{:.3},{:.6}",
            r.day, r.std_gb, r.ia_gb, r.glacier_gb, r.retrieving_gb, r.cost_usd
        );
    }
    out
}

/// Parsed daily row: (day, std, ia, glacier, retrieving, cost).
pub type LifecycleRow = (u32, f64, f64, f64, f64, f64);

pub fn parse_lifecycle_csv(text: &str) -> Result<Vec<LifecycleRow>, ReportError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == LIFECYCLE_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(i + 1, "expected 6 fields"));
        }
        let day = fields[0].parse::<u32>().map_err(|_| parse_err(i + 1, "bad day"))?;
        let mut nums = [0.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field.parse::<f64>().map_err(|_| parse_err(i + 1, "bad number"))?;
        }
        rows.push((day, nums[0], nums[1], nums[2], nums[3], nums[4]));
    }
    Ok(rows)
}

// --- summary --------------------------------------------------------------

fn hm(secs: u64) -> String {
    format!("{}:{:02}", secs / 3600, (secs % 3600) / 60)
}

/// Renders the human-readable run summary.
pub fn summary(report: &ScenarioReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}  kind: {}  seed: {}", report.name, report.kind.label(), report.seed);
    let _ = writeln!(out, "{}", "-".repeat(72));

    if let Some(e) = &report.elastic {
        let (allows, denies) = e.audit_counts();
        let _ = writeln!(out, "strategy:              {}", e.strategy_label);
        let _ = writeln!(out, "jobs completed:        {}", e.jobs.len());
        let _ = writeln!(out, "makespan:              {} ({} s)", hm(e.makespan_secs), e.makespan_secs);
        let _ = writeln!(out, "billed cost:           ${:.2}", e.billed_cost_usd);
        let _ = writeln!(out, "on-demand equivalent:  ${:.2}", e.od_equivalent_usd);
        let _ = writeln!(out, "avg wait:              {} ({:.0} s)", hm(e.avg_wait_secs as u64), e.avg_wait_secs);
        let _ = writeln!(out, "peak wait:             {}", hm(e.peak_wait_secs));
        let _ = writeln!(out, "peak concurrency:      {}", e.peak_concurrency);
        let _ = writeln!(out, "instances provisioned: {}", e.instances.len());
        let _ = writeln!(out, "revocations:           {}", e.revocations);
        let _ = writeln!(out, "provision failures:    {}", e.provision_failures);
        let _ = writeln!(out, "broker ops (r/w):      {}/{}", e.broker_reads, e.broker_writes);
        let _ = writeln!(out, "audit records:         {} allow / {} deny", allows, denies);
    }

    if let Some(rows) = &report.storage_table {
        let _ = writeln!(out, "{:<28} {:>12} {:>14} {:>12}", "storage strategy", "cost ($/yr)", "access cost", "access time");
        for r in rows {
            let access_cost = r.access_cost_usd.map_or("NIL".to_string(), |v| format!("${v:.2}"));
            let access_time = r.access_time_hours.map_or("NIL".to_string(), |v| format!("{v:.0} hours"));
            let _ = writeln!(out, "{:<28} {:>12.2} {:>14} {:>12}", r.label, r.cost_usd_per_year, access_cost, access_time);
        }
    }

    if let Some(t) = &report.throughput {
        let _ = writeln!(out, "per-worker rate: {:.2} tasks/s", t.per_worker_rate);
        let _ = writeln!(out, "{:>8} {:>18} {:>18} {:>18}", "workers", "analytic t/s", "sim completion s", "sim t/s");
        for row in &t.rows {
            let _ = writeln!(
                out,
                "{:>8} {:>18.2} {:>18.1} {:>18.2}",
                row.workers, row.analytic_tasks_per_sec, row.run.completion_secs, row.run.tasks_per_sec
            );
        }
    }

    if let Some(rows) = &report.cost_aware {
        let _ = writeln!(out, "{:>10} {:>28} {:>14}", "data (GB)", "strategy", "monthly ($)");
        for r in rows {
            let _ = writeln!(out, "{:>10.1} {:>28} {:>14.2}", r.data_gb, r.strategy.label(), r.monthly_usd);
        }
    }

    if let Some(l) = &report.lifecycle {
        let _ = writeln!(out, "days simulated:        {}", l.days);
        let _ = writeln!(out, "dataset:               {:.0} GB, hot fraction {:.1}%", l.dataset_gb, l.hot_fraction * 100.0);
        let _ = writeln!(out, "integrated cost:       ${:.2}", l.integrated_cost_usd);
        let _ = writeln!(out, "projected cost:        ${:.2}", l.formula_cost_usd);
        let rel = (l.integrated_cost_usd - l.formula_cost_usd).abs() / l.formula_cost_usd.max(1e-9);
        let _ = writeln!(out, "relative gap:          {:.2}%", rel * 100.0);
        let _ = writeln!(out, "accesses issued:       {}", l.accesses.len());
    }

    out
}

/// Builds the strategy comparison table across runs: one row per scenario,
/// savings measured on on-demand-equivalent cost against the first row.
pub fn comparison_table(reports: &[ScenarioReport], warnings: &[String]) -> String {
    let mut out = String::new();
    for w in warnings {
        let _ = writeln!(out, "! {w}");
    }
    let _ = writeln!(
        out,
        "{:<22} {:>10} {:>12} {:>12} {:>10} {:>10}",
        "strategy", "makespan", "spot ($)", "od-eq ($)", "avg wait", "savings"
    );
    let baseline = reports
        .first()
        .and_then(|r| r.elastic.as_ref())
        .map(|e| e.od_equivalent_usd)
        .unwrap_or(0.0);
    for report in reports {
        let Some(e) = &report.elastic else { continue };
        let savings = if baseline > 0.0 { (1.0 - e.od_equivalent_usd / baseline) * 100.0 } else { 0.0 };
        let _ = writeln!(
            out,
            "{:<22} {:>10} {:>12.2} {:>12.2} {:>10} {:>9.1}%",
            e.strategy_label,
            hm(e.makespan_secs),
            e.billed_cost_usd,
            e.od_equivalent_usd,
            hm(e.avg_wait_secs as u64),
            savings
        );
    }
    out
}
