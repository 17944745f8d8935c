//! Scenario execution: loads a scenario, drives the right experiment, and
//! writes the report files. `run` and `compare` are the library face of the
//! command-line tool.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::autoscaler::Strategy;
use crate::costmodel::{
    self, glacier_retrieval_cost, lifecycle_year_cost, storage_year_cost, LifecycleCostInputs,
    RetrievalDemand,
};
use crate::engine::{bind_inputs_by_size, Engine, RunError};
use crate::ids::ObjectId;
use crate::jobmgr::{effective_throughput, simulate_throughput, BrokerCapacity};
use crate::market::PriceBook;
use crate::report::{
    summary, write_audit_csv, write_instance_cost_csv, write_job_events_csv, write_lifecycle_csv,
    write_storage_cost_csv, write_strategy_cost_csv, write_throughput_csv, DailyTierRow,
    ElasticReport, InstanceRecord, JobRecord, LifecycleReport, ScenarioReport, StorageTableRow,
    ThroughputReport, ThroughputTableRow,
};
use crate::scenario::{
    load_scenario, ExperimentKind, Scenario, ScenarioError, StorageCostRow,
};
use crate::simkernel::{RngFactory, SimTime, SECS_PER_DAY};
use crate::storagesim::{StagingPlan, Tier};
use crate::traces::load_into_book;
use crate::workload::{self, JobState};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl RunnerError {
    /// Process exit code: 2 for configuration problems, 3 when the
    /// simulation guard tripped.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Run(RunError::Guard { .. }) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> RunnerError {
    RunnerError::Io { path: path.display().to_string(), source }
}

/// Caller overrides for a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub max_virtual_days: Option<u64>,
    /// Per-event invariant checking (used by the test suites).
    pub strict: bool,
}

/// Loads, validates, and runs one scenario, writing outputs when an output
/// directory is configured.
pub fn run(path: &Path, opts: &RunOptions) -> Result<ScenarioReport, RunnerError> {
    let mut scenario = load_scenario(path)?;
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }
    if let Some(days) = opts.max_virtual_days {
        scenario.max_virtual_days = days;
    }
    let report = run_loaded(&scenario, opts)?;
    if let Some(dir) = &opts.out_dir {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

/// Runs an already-loaded scenario (no files written).
pub fn run_loaded(scenario: &Scenario, opts: &RunOptions) -> Result<ScenarioReport, RunnerError> {
    let rngs = RngFactory::new(scenario.seed);
    let mut report = ScenarioReport {
        name: scenario.name.clone(),
        kind: scenario.kind,
        seed: scenario.seed,
        elastic: None,
        storage_table: None,
        throughput: None,
        cost_aware: None,
        lifecycle: None,
    };
    match scenario.kind {
        ExperimentKind::ElasticScaling => {
            report.elastic = Some(run_elastic(scenario, &rngs, opts.strict)?)
        }
        ExperimentKind::StorageCost => report.storage_table = Some(run_storage_cost(scenario)?),
        ExperimentKind::Throughput => report.throughput = Some(run_throughput(scenario)),
        ExperimentKind::CostAwareProvisioning => {
            report.cost_aware = Some(run_cost_aware(scenario)?)
        }
        ExperimentKind::LifecycleSimulation => {
            report.lifecycle = Some(run_lifecycle(scenario, &rngs, opts.strict)?)
        }
    }
    Ok(report)
}

fn strategy_label(scenario: &Scenario) -> String {
    match scenario.scaling.as_ref().map(|c| c.policy.strategy) {
        Some(Strategy::NoScaling { fixed_size }) => format!("no-scaling-{fixed_size}"),
        Some(Strategy::Limited { max_size }) => format!("limited-{max_size}"),
        Some(Strategy::Unlimited) => "unlimited".to_string(),
        None => "none".to_string(),
    }
}

/// The full queue/fleet simulation.
pub fn run_elastic(
    scenario: &Scenario,
    rngs: &RngFactory,
    strict: bool,
) -> Result<ElasticReport, RunnerError> {
    let params = scenario
        .workload
        .as_ref()
        .ok_or_else(|| RunnerError::Invalid("elastic scenario without workload".into()))?;
    let mut specs = workload::generate(params, rngs)
        .map_err(|e| RunnerError::Invalid(e.to_string()))?;
    if scenario.bind_inputs_by_size {
        bind_inputs_by_size(&mut specs, &scenario.manifest);
    }

    let mut engine = Engine::build(scenario, rngs)?;
    engine.set_strict(strict);
    engine.submit_workload(specs)?;
    engine.run_guarded(scenario.max_virtual_days)?;

    if strict && !engine.state.violations.is_empty() {
        return Err(RunnerError::Invalid(format!(
            "invariant violations: {}",
            engine.state.violations.join("; ")
        )));
    }

    let mut jobs = Vec::new();
    let mut intervals = Vec::new();
    let mut wait_total = 0u64;
    let mut peak_wait = 0u64;
    for job in engine.state.mgr.jobs() {
        let completion = job
            .completion_time()
            .ok_or_else(|| RunnerError::Invalid(format!("{} never completed", job.spec.id)))?;
        let wait = job.wait_secs();
        wait_total += wait;
        peak_wait = peak_wait.max(wait);
        intervals.push((job.submit_time(), completion));
        jobs.push(JobRecord {
            id: job.spec.id,
            submit_secs: job.submit_time().secs(),
            wait_secs: wait,
            staging_secs: job.secs_in(|s| matches!(s, JobState::StagingIn | JobState::StagingOut)),
            run_secs: job.secs_in(|s| s == JobState::Running),
            completion_secs: completion.secs(),
            attempts: job.attempt + 1,
        });
    }
    let makespan_secs = {
        let first = intervals.iter().map(|(s, _)| s.secs()).min().unwrap_or(0);
        let last = intervals.iter().map(|(_, c)| c.secs()).max().unwrap_or(0);
        last - first
    };

    // peak concurrent jobs alive (submitted, not yet completed)
    let mut edges: Vec<(u64, i32)> = intervals
        .iter()
        .flat_map(|(s, c)| [(s.secs(), 1), (c.secs(), -1)])
        .collect();
    edges.sort_by_key(|&(t, delta)| (t, delta));
    let mut live = 0i32;
    let mut peak_concurrency = 0i32;
    for (_, delta) in edges {
        live += delta;
        peak_concurrency = peak_concurrency.max(live);
    }

    let instances: Vec<InstanceRecord> = engine
        .state
        .instances()
        .map(|i| InstanceRecord {
            id: i.id,
            market: i.market.to_string(),
            region: i.zone.region.clone(),
            az: i.zone.az.clone(),
            ready_secs: i.ready_time.map_or(0, SimTime::secs),
            terminated_secs: i.terminate_time.map_or(0, SimTime::secs),
            billed_usd: i.accrued_cost,
            od_equivalent_usd: 0.0,
        })
        .collect();
    let (billed_cost_usd, od_equivalent_usd) = engine.state.fleet_costs()?;
    let mut instances = instances;
    for record in &mut instances {
        let inst = engine
            .state
            .instances()
            .find(|i| i.id == record.id)
            .expect("record from live instance");
        record.od_equivalent_usd = crate::market::on_demand_equivalent(
            &engine.state.book,
            inst,
            inst.terminate_time.unwrap_or(SimTime::ZERO),
        )
        .map_err(RunError::from)?;
    }

    let (broker_reads, broker_writes) = engine.state.mgr.broker_ops();
    let n = jobs.len().max(1) as f64;
    Ok(ElasticReport {
        strategy_label: strategy_label(scenario),
        avg_wait_secs: wait_total as f64 / n,
        peak_wait_secs: peak_wait,
        makespan_secs,
        peak_concurrency: peak_concurrency as u32,
        billed_cost_usd,
        od_equivalent_usd,
        revocations: engine.state.revocations,
        provision_failures: engine.state.provision_failures,
        broker_reads,
        broker_writes,
        jobs,
        instances,
        job_log: engine.state.job_log.clone(),
        audit: engine.state.rbac.audit_log().to_vec(),
    })
}

/// The yearly storage projection table.
pub fn run_storage_cost(scenario: &Scenario) -> Result<Vec<StorageTableRow>, RunnerError> {
    let config = scenario
        .storage_cost
        .as_ref()
        .ok_or_else(|| RunnerError::Invalid("storage-cost scenario without table".into()))?;
    let prices = &scenario.prices.storage;
    let mut rows = Vec::new();
    for row in &config.rows {
        let (cost, glacier_resident) = match row {
            StorageCostRow::SingleTier(tier) => (
                storage_year_cost(prices, *tier, config.dataset_gb),
                (*tier == Tier::Glacier).then_some(config.dataset_gb),
            ),
            StorageCostRow::Policy { policy, hot_fraction } => {
                let inputs = LifecycleCostInputs {
                    dataset_gb: config.dataset_gb,
                    hot_fraction: *hot_fraction,
                    policy: policy.clone(),
                };
                let cost = lifecycle_year_cost(prices, &inputs)
                    .map_err(|e| RunnerError::Invalid(e.to_string()))?;
                let resident = (policy.terminal_tier() == Tier::Glacier)
                    .then(|| config.dataset_gb * (1.0 - hot_fraction));
                (cost, resident)
            }
        };
        let access_cost_usd = match (glacier_resident, config.peak_daily_retrieval_gb) {
            (Some(resident), Some(daily)) => Some(
                glacier_retrieval_cost(
                    RetrievalDemand { peak_daily_volume_gb: daily, glacier_resident_gb: resident },
                    prices,
                ) * costmodel::MONTHS_PER_YEAR,
            ),
            _ => None,
        };
        rows.push(StorageTableRow {
            label: row.label(),
            cost_usd_per_year: cost,
            access_cost_usd,
            access_time_hours: glacier_resident.map(|_| prices.retrieval_window_hours),
        });
    }
    Ok(rows)
}

/// Analytic throughput plus the simulated many-small-tasks runs.
pub fn run_throughput(scenario: &Scenario) -> ThroughputReport {
    let config = scenario.throughput.as_ref().expect("validated at load");
    let capacity = BrokerCapacity {
        read_ops_per_sec: config.read_capacity,
        write_ops_per_sec: config.write_capacity,
    };
    let rows = config
        .worker_counts
        .iter()
        .map(|&workers| ThroughputTableRow {
            workers,
            analytic_tasks_per_sec: effective_throughput(
                workers,
                config.per_worker_rate,
                capacity,
                config.reads_per_task,
                config.writes_per_task,
            ),
            run: simulate_throughput(
                config.task_count,
                workers,
                config.per_worker_rate,
                capacity,
                config.reads_per_task,
                config.writes_per_task,
            ),
        })
        .collect();
    ThroughputReport { per_worker_rate: config.per_worker_rate, rows }
}

/// The egress-aware instance selection study.
pub fn run_cost_aware(scenario: &Scenario) -> Result<Vec<costmodel::StrategyCost>, RunnerError> {
    let config = scenario.cost_aware.as_ref().expect("validated at load");
    let mut book = PriceBook::new(scenario.home.clone());
    book.set_transfer_price_per_gb(scenario.prices.transfer_per_gb);
    load_into_book(&mut book, &scenario.trace_rows).map_err(RunError::from)?;
    costmodel::strategy_comparison(
        &book,
        &scenario.instance_type,
        &config.data_volume_grid_gb,
        config.month_hours,
    )
    .map_err(|e| RunnerError::Invalid(e.to_string()))
}

/// The year-long lifecycle simulation with a seeded access pattern. Hot
/// objects (those starting in the standard tier) are re-accessed once per
/// configured period; everything else sinks under the staleness policy.
pub fn run_lifecycle(
    scenario: &Scenario,
    rngs: &RngFactory,
    strict: bool,
) -> Result<LifecycleReport, RunnerError> {
    let config = scenario.lifecycle.as_ref().expect("validated at load");
    let policy = scenario.tier_policy.as_ref().expect("validated at load").clone();

    let mut engine = Engine::build(scenario, rngs)?;
    engine.set_strict(strict);
    engine.schedule_lifecycle_ticks(config.days)?;

    // Access schedule: each hot object at (k+1) * period +- jitter days, at noon.
    let mut access_rng = rngs.stream("lifecycle-access");
    let mut accesses: Vec<(SimTime, ObjectId, String)> = Vec::new();
    for row in &scenario.manifest {
        if row.initial_tier != Tier::Std {
            continue;
        }
        let mut k = 1u64;
        loop {
            let base = k * u64::from(config.access_period_days);
            let jitter = access_rng.uniform(0.0, (2 * config.access_jitter_days + 1) as f64) as u64;
            let day = base + jitter - u64::from(config.access_jitter_days).min(base);
            if day >= u64::from(config.days) {
                break;
            }
            accesses.push((
                SimTime(day * SECS_PER_DAY + 43_200),
                row.object.clone(),
                row.owner_role.clone(),
            ));
            k += 1;
        }
    }
    accesses.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));

    let prices = &scenario.prices.storage;
    let object_order: Vec<ObjectId> =
        engine.state.storage.objects().map(|o| o.id.clone()).collect();
    let mut daily_tiers: Vec<Vec<Tier>> = Vec::with_capacity(config.days as usize);
    let mut daily_rows = Vec::with_capacity(config.days as usize);
    let mut integrated = 0.0;
    let mut next_access = 0usize;

    for day in 1..=config.days {
        let day_end = SimTime(u64::from(day) * SECS_PER_DAY);
        while next_access < accesses.len() && accesses[next_access].0 <= day_end {
            let (at, object, owner) = accesses[next_access].clone();
            next_access += 1;
            engine.run_to(at)?;
            let plan = engine
                .state
                .storage
                .request(&object, &format!("user:{owner}"), &owner, at, &mut engine.state.rbac)
                .map_err(RunError::from)?;
            if let StagingPlan::Deferred { ready_at, newly_started: true } = plan {
                engine
                    .queue
                    .schedule(ready_at, crate::simkernel::EventKind::RetrievalDone { object })
                    .map_err(RunError::from)?;
            }
        }
        engine.run_to(day_end)?;

        let tiers: Vec<Tier> = engine.state.storage.objects().map(|o| o.tier).collect();
        let gb = |t: Tier| engine.state.storage.gb_in_tier(t);
        let day_cost = (prices.month_cost(Tier::Std, gb(Tier::Std))
            + prices.month_cost(Tier::Ia, gb(Tier::Ia))
            + prices.month_cost(Tier::Glacier, gb(Tier::Glacier) + gb(Tier::Retrieving)))
            * costmodel::MONTHS_PER_YEAR
            / 365.0;
        integrated += day_cost;
        daily_rows.push(DailyTierRow {
            day,
            std_gb: gb(Tier::Std),
            ia_gb: gb(Tier::Ia),
            glacier_gb: gb(Tier::Glacier),
            retrieving_gb: gb(Tier::Retrieving),
            cost_usd: day_cost,
        });
        daily_tiers.push(tiers);
    }

    let dataset_gb = engine.state.storage.total_gb();
    let hot_gb: f64 = scenario
        .manifest
        .iter()
        .filter(|r| r.initial_tier == Tier::Std)
        .map(|r| r.size_gb)
        .sum();
    let hot_fraction = if dataset_gb > 0.0 { hot_gb / dataset_gb } else { 0.0 };
    let formula_year = lifecycle_year_cost(
        prices,
        &LifecycleCostInputs { dataset_gb, hot_fraction, policy },
    )
    .map_err(|e| RunnerError::Invalid(e.to_string()))?;

    Ok(LifecycleReport {
        days: config.days,
        dataset_gb,
        hot_fraction,
        integrated_cost_usd: integrated,
        formula_cost_usd: formula_year * f64::from(config.days) / 365.0,
        object_order,
        daily_tiers,
        daily_rows,
        accesses: accesses.into_iter().map(|(at, obj, _)| (obj, at)).collect(),
        audit: engine.state.rbac.audit_log().to_vec(),
    })
}

/// Writes the report's files into `dir` (created if needed).
pub fn write_outputs(report: &ScenarioReport, dir: &Path) -> Result<(), RunnerError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let write = |name: &str, text: String| -> Result<(), RunnerError> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    };
    write("summary.txt", summary(report))?;
    if let Some(e) = &report.elastic {
        write("job_events.csv", write_job_events_csv(&e.job_log))?;
        write("cost.csv", write_instance_cost_csv(&e.instances))?;
        write("audit.csv", write_audit_csv(&e.audit))?;
    }
    if let Some(rows) = &report.storage_table {
        write("cost.csv", write_storage_cost_csv(rows))?;
    }
    if let Some(t) = &report.throughput {
        write("cost.csv", write_throughput_csv(t))?;
    }
    if let Some(rows) = &report.cost_aware {
        write("cost.csv", write_strategy_cost_csv(rows))?;
    }
    if let Some(l) = &report.lifecycle {
        write("cost.csv", write_lifecycle_csv(&l.daily_rows))?;
        write("audit.csv", write_audit_csv(&l.audit))?;
    }
    Ok(())
}

/// Runs several scenarios and builds the strategy comparison table. The
/// first scenario is the savings baseline. Mismatched seeds produce a
/// warning, not an error.
pub fn compare(
    paths: &[PathBuf],
    opts: &RunOptions,
) -> Result<(String, Vec<ScenarioReport>), RunnerError> {
    if paths.len() < 2 {
        return Err(RunnerError::Invalid("compare needs at least two scenarios".into()));
    }
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    for path in paths {
        let per_run = RunOptions { out_dir: None, ..opts.clone() };
        let report = run(path, &per_run)?;
        if report.elastic.is_none() {
            return Err(RunnerError::Invalid(format!(
                "{}: compare expects elastic-scaling scenarios",
                path.display()
            )));
        }
        reports.push(report);
    }
    let baseline_seed = reports[0].seed;
    if reports.iter().any(|r| r.seed != baseline_seed) {
        warnings.push(format!(
            "workload seeds differ across scenarios (baseline {baseline_seed}); costs are not like-for-like"
        ));
    }
    let table = crate::report::comparison_table(&reports, &warnings);
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("comparison.txt");
        std::fs::write(&path, &table).map_err(|e| io_err(&path, e))?;
    }
    Ok((table, reports))
}
