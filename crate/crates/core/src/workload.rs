//! Job stream generation: Poisson arrivals, a categorical duration mix with
//! multiplicative jitter, and uniformly chosen input sizes — the shape of a
//! production batch-analytics workload. Also the job data model shared by
//! the queueing and reporting layers.

use std::fmt;

use thiserror::Error;

use crate::ids::{JobId, ObjectId};
use crate::simkernel::{RngFactory, SimTime};

/// Which logical pool a job targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum QueueKind {
    Development,
    Production,
}

impl QueueKind {
    pub fn parse(s: &str) -> Option<QueueKind> {
        match s {
            "development" => Some(QueueKind::Development),
            "production" => Some(QueueKind::Production),
            _ => None,
        }
    }

    /// Resource name used for submit authorization.
    pub fn resource(&self) -> &'static str {
        match self {
            QueueKind::Development => "queue/development",
            QueueKind::Production => "queue/production",
        }
    }
}

impl fmt::Display for QueueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueueKind::Development => f.write_str("development"),
            QueueKind::Production => f.write_str("production"),
        }
    }
}

/// A complete description of one unit of work.
#[derive(Debug, Clone)]
pub struct JobSpec {
    pub id: JobId,
    pub submit_time: SimTime,
    pub nominal_duration_secs: u64,
    pub input_gb: f64,
    pub output_gb: f64,
    pub queue: QueueKind,
    pub owner_role: String,
    /// Opaque description of what runs (script name, template id, ...).
    pub executable: String,
    /// Managed input object, when the input lives in the object store.
    /// Jobs without one stage `input_gb` straight from the standard tier.
    pub input_object: Option<ObjectId>,
}

/// Job lifecycle states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobState {
    Submitted,
    Queued,
    WaitingForRetrieval,
    StagingIn,
    Running,
    StagingOut,
    Completed,
    Failed,
    Resubmitted,
}

impl JobState {
    pub fn label(&self) -> &'static str {
        match self {
            JobState::Submitted => "submitted",
            JobState::Queued => "queued",
            JobState::WaitingForRetrieval => "waiting-for-retrieval",
            JobState::StagingIn => "staging-in",
            JobState::Running => "running",
            JobState::StagingOut => "staging-out",
            JobState::Completed => "completed",
            JobState::Failed => "failed",
            JobState::Resubmitted => "resubmitted",
        }
    }

    /// Legal state-machine edges. Staging states may be resubmitted too:
    /// a revocation can land while data is moving, not just mid-run.
    pub fn can_transition_to(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Submitted, Queued)
                | (Queued, StagingIn)
                | (Queued, WaitingForRetrieval)
                | (WaitingForRetrieval, Queued)
                | (StagingIn, Running)
                | (StagingIn, Resubmitted)
                | (Running, StagingOut)
                | (Running, Resubmitted)
                | (Running, Failed)
                | (StagingOut, Completed)
                | (StagingOut, Resubmitted)
                | (Resubmitted, Queued)
        )
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Parameters of a generated workload.
#[derive(Debug, Clone)]
pub struct WorkloadParams {
    pub job_count: u32,
    /// Mean of the exponential inter-arrival gap, in seconds.
    pub mean_inter_arrival_secs: f64,
    /// (duration seconds, probability) categories; probabilities sum to 1.
    pub duration_mix: Vec<(u64, f64)>,
    /// Multiplicative jitter half-width applied to each drawn duration.
    pub duration_jitter_fraction: f64,
    /// Input sizes drawn uniformly from this set, in GB.
    pub input_size_choices_gb: Vec<f64>,
    /// Output staged back per job, in GB (default none).
    pub output_size_gb: f64,
    pub queue: QueueKind,
    pub owner_role: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("workload configuration error: {0}")]
    Config(String),
}

impl WorkloadParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.duration_mix.is_empty() {
            return Err(WorkloadError::Config("duration mix is empty".into()));
        }
        let total: f64 = self.duration_mix.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(WorkloadError::Config(format!(
                "duration mix probabilities sum to {total}, expected 1"
            )));
        }
        if self.duration_mix.iter().any(|&(d, _)| d == 0) {
            return Err(WorkloadError::Config("duration mix entries must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.duration_jitter_fraction) {
            return Err(WorkloadError::Config(format!(
                "duration jitter {} outside [0, 1)",
                self.duration_jitter_fraction
            )));
        }
        if self.mean_inter_arrival_secs <= 0.0 {
            return Err(WorkloadError::Config("mean inter-arrival must be positive".into()));
        }
        if self.input_size_choices_gb.is_empty() {
            return Err(WorkloadError::Config("input size choices are empty".into()));
        }
        if self.output_size_gb < 0.0 {
            return Err(WorkloadError::Config("output size must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generates the job stream. Arrival gaps are exponential around the
/// configured mean, durations come from the mix and get jittered by up to
/// the configured fraction, sizes are a uniform choice. Each concern draws
/// from its own named stream.
pub fn generate(params: &WorkloadParams, rngs: &RngFactory) -> Result<Vec<JobSpec>, WorkloadError> {
    params.validate()?;
    let mut arrivals = rngs.stream("arrivals");
    let mut durations = rngs.stream("durations");
    let mut jitter = rngs.stream("jitter");
    let mut sizes = rngs.stream("sizes");

    let mut specs = Vec::with_capacity(params.job_count as usize);
    let mut clock = 0.0f64;
    for i in 0..params.job_count {
        clock += arrivals.exponential(params.mean_inter_arrival_secs);

        let pick = durations.unit();
        let mut acc = 0.0;
        let mut nominal = params.duration_mix.last().unwrap().0;
        for &(duration, prob) in &params.duration_mix {
            acc += prob;
            if pick < acc {
                nominal = duration;
                break;
            }
        }
        let j = params.duration_jitter_fraction;
        let jittered = (nominal as f64 * jitter.uniform(1.0 - j, 1.0 + j)).round().max(1.0);

        specs.push(JobSpec {
            id: JobId(u64::from(i)),
            submit_time: SimTime(clock as u64),
            nominal_duration_secs: jittered as u64,
            input_gb: *sizes.choose(&params.input_size_choices_gb),
            output_gb: params.output_size_gb,
            queue: params.queue,
            owner_role: params.owner_role.clone(),
            executable: format!("analysis-{i}"),
            input_object: None,
        });
    }
    Ok(specs)
}

/// A worst-case throughput workload: `task_count` zero-duration tasks with
/// no data staging, all submitted at the start.
pub fn throughput_workload(task_count: u32) -> Vec<JobSpec> {
    (0..task_count)
        .map(|i| JobSpec {
            id: JobId(u64::from(i)),
            submit_time: SimTime::ZERO,
            nominal_duration_secs: 0,
            input_gb: 0.0,
            output_gb: 0.0,
            queue: QueueKind::Production,
            owner_role: "task-executor".to_string(),
            executable: "sleep-0".to_string(),
            input_object: None,
        })
        .collect()
}
