//! Job management: the two logical queues plus the deferred-retrieval
//! queue, worker polling, status markers, watcher-driven resubmission after
//! revocations, and the broker-capacity throughput model.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::ids::{InstanceId, JobId};
use crate::rbac::{Action, Decision, Rbac};
use crate::simkernel::SimTime;
use crate::storagesim::{StagingPlan, StorageError, StorageSim};
use crate::workload::{JobSpec, JobState, QueueKind};

/// Broker (database) capacity in operations per second. Every task costs
/// one queue read plus a handful of status writes, which is what caps
/// throughput once workers outrun the broker.
#[derive(Debug, Clone, Copy)]
pub struct BrokerCapacity {
    pub read_ops_per_sec: f64,
    pub write_ops_per_sec: f64,
}

impl Default for BrokerCapacity {
    fn default() -> Self {
        BrokerCapacity { read_ops_per_sec: 100.0, write_ops_per_sec: 400.0 }
    }
}

/// Broker writes consumed per task: submit, three status markers, completion.
pub const DEFAULT_WRITES_PER_TASK: u32 = 5;
pub const DEFAULT_READS_PER_TASK: u32 = 1;

/// A status marker written to the database as the job progresses.
#[derive(Debug, Clone)]
pub struct StatusMarker {
    pub job: JobId,
    pub at: SimTime,
    pub state: JobState,
    /// (cpu fraction, I/O GB, RAM GB) as reported by the worker.
    pub worker_stats: Option<(f64, f64, f64)>,
}

/// One job's live record.
#[derive(Debug, Clone)]
pub struct Job {
    pub spec: JobSpec,
    pub state: JobState,
    pub history: Vec<(SimTime, JobState)>,
    pub assigned_instance: Option<InstanceId>,
    /// Attempt counter; bumps on every resubmission so stale completion
    /// events from a revoked attempt are recognized.
    pub attempt: u32,
}

impl Job {
    fn new(spec: JobSpec, at: SimTime) -> Self {
        Job {
            spec,
            state: JobState::Submitted,
            history: vec![(at, JobState::Submitted)],
            assigned_instance: None,
            attempt: 0,
        }
    }

    pub fn submit_time(&self) -> SimTime {
        self.history.first().expect("history starts at submit").0
    }

    pub fn completion_time(&self) -> Option<SimTime> {
        self.history.iter().find(|(_, s)| *s == JobState::Completed).map(|(t, _)| *t)
    }

    /// Seconds spent in states matching `pred`, treating the record as a
    /// closed timeline from submit to the last transition.
    pub fn secs_in<F: Fn(JobState) -> bool>(&self, pred: F) -> u64 {
        let mut total = 0;
        for pair in self.history.windows(2) {
            if pred(pair[0].1) {
                total += pair[1].0.since(pair[0].0);
            }
        }
        total
    }

    /// Queue wait: everything between submission and first productive work,
    /// including time parked for an archive retrieval.
    pub fn wait_secs(&self) -> u64 {
        self.secs_in(|s| {
            matches!(
                s,
                JobState::Submitted
                    | JobState::Queued
                    | JobState::WaitingForRetrieval
                    | JobState::Resubmitted
            )
        })
    }
}

#[derive(Debug, Error)]
pub enum JobError {
    #[error("access denied: role {role} may not submit to {queue}")]
    SubmitDenied { role: String, queue: QueueKind },
    #[error("invalid job spec: {0}")]
    Validation(String),
    #[error("illegal state transition {from} -> {to} for {job}")]
    IllegalTransition { job: JobId, from: JobState, to: JobState },
    #[error(transparent)]
    Storage(#[from] StorageError),
}

/// Where a submission landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Enqueued,
    /// Input is archived; the job parks in the deferred queue until the
    /// retrieval completes at this time. `retrieval_started` is false when
    /// an earlier job already kicked off the same retrieval.
    Deferred { ready_at: SimTime, retrieval_started: bool },
}

/// The queues plus job table.
#[derive(Debug, Default)]
pub struct JobManager {
    jobs: BTreeMap<JobId, Job>,
    development: VecDeque<JobId>,
    production: VecDeque<JobId>,
    deferred: VecDeque<JobId>,
    markers: Vec<StatusMarker>,
    broker_reads: u64,
    broker_writes: u64,
    submitted: u64,
    completed: u64,
    /// Jobs whose worker died since the last watcher sweep.
    dead_worker_jobs: Vec<JobId>,
}

impl JobManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn job(&self, id: JobId) -> Option<&Job> {
        self.jobs.get(&id)
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.jobs.values()
    }

    pub fn markers(&self) -> &[StatusMarker] {
        &self.markers
    }

    pub fn broker_ops(&self) -> (u64, u64) {
        (self.broker_reads, self.broker_writes)
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.submitted, self.completed)
    }

    pub fn queue_depth(&self, queue: QueueKind) -> u32 {
        match queue {
            QueueKind::Development => self.development.len() as u32,
            QueueKind::Production => self.production.len() as u32,
        }
    }

    pub fn deferred_depth(&self) -> u32 {
        self.deferred.len() as u32
    }

    fn queue_mut(&mut self, queue: QueueKind) -> &mut VecDeque<JobId> {
        match queue {
            QueueKind::Development => &mut self.development,
            QueueKind::Production => &mut self.production,
        }
    }

    fn transition(&mut self, id: JobId, to: JobState, at: SimTime) -> Result<(), JobError> {
        let job = self.jobs.get_mut(&id).expect("transition on known job");
        if !job.state.can_transition_to(to) {
            return Err(JobError::IllegalTransition { job: id, from: job.state, to });
        }
        job.state = to;
        job.history.push((at, to));
        Ok(())
    }

    fn write_marker(&mut self, id: JobId, state: JobState, at: SimTime, stats: Option<(f64, f64, f64)>) {
        self.markers.push(StatusMarker { job: id, at, state, worker_stats: stats });
        self.broker_writes += 1;
    }

    /// Stores and enqueues a job. The caller's role must hold a submit
    /// grant on the target queue; jobs whose input object sits in the
    /// archive go to the deferred queue with a retrieval under way.
    pub fn submit(
        &mut self,
        spec: JobSpec,
        caller_role: &str,
        at: SimTime,
        rbac: &mut Rbac,
        storage: &mut StorageSim,
    ) -> Result<SubmitOutcome, JobError> {
        if spec.input_gb < 0.0 || spec.output_gb < 0.0 {
            return Err(JobError::Validation(format!("{}: negative data size", spec.id)));
        }
        let principal = format!("user:{}", spec.owner_role);
        let decision =
            rbac.authorize(&principal, caller_role, spec.queue.resource(), Action::Submit, at);
        if decision == Decision::Deny {
            return Err(JobError::SubmitDenied { role: caller_role.to_string(), queue: spec.queue });
        }

        // Inputs resting in the archive park the job until retrieval; the
        // tier peek itself is not a data access, the retrieval request is.
        let offline = match spec.input_object {
            Some(ref obj) => {
                let object = storage.object(obj).ok_or(StorageError::NotFound(obj.clone()))?;
                matches!(object.tier, crate::storagesim::Tier::Glacier | crate::storagesim::Tier::Retrieving)
            }
            None => false,
        };

        let id = spec.id;
        let queue = spec.queue;
        let owner = spec.owner_role.clone();
        let input_object = spec.input_object.clone();
        self.jobs.insert(id, Job::new(spec, at));
        self.submitted += 1;
        self.write_marker(id, JobState::Queued, at, None);
        self.transition(id, JobState::Queued, at)?;

        if offline {
            let obj = input_object.expect("offline implies an input object");
            let plan = storage.request(&obj, &principal, &owner, at, rbac)?;
            let StagingPlan::Deferred { ready_at, newly_started } = plan else {
                unreachable!("archived objects always defer")
            };
            self.transition(id, JobState::WaitingForRetrieval, at)?;
            self.deferred.push_back(id);
            return Ok(SubmitOutcome::Deferred { ready_at, retrieval_started: newly_started });
        }
        self.queue_mut(queue).push_back(id);
        Ok(SubmitOutcome::Enqueued)
    }

    pub fn peek_queue(&self, queue: QueueKind) -> Option<JobId> {
        match queue {
            QueueKind::Development => self.development.front().copied(),
            QueueKind::Production => self.production.front().copied(),
        }
    }

    /// Parks the queue-head job in the deferred queue (its input object
    /// went back to the archive while it waited).
    pub fn defer_head(&mut self, queue: QueueKind, at: SimTime) -> Option<JobId> {
        let id = self.queue_mut(queue).pop_front()?;
        self.transition(id, JobState::WaitingForRetrieval, at).expect("queued -> waiting");
        self.deferred.push_back(id);
        Some(id)
    }

    /// An idle worker polls its queue; the head job is assigned to it.
    /// Returns the job id, or nothing when the queue is empty.
    pub fn worker_poll(
        &mut self,
        worker: InstanceId,
        queue: QueueKind,
        at: SimTime,
    ) -> Option<JobId> {
        self.broker_reads += 1;
        let id = self.queue_mut(queue).pop_front()?;
        let job = self.jobs.get_mut(&id).expect("queued job exists");
        job.assigned_instance = Some(worker);
        self.transition(id, JobState::StagingIn, at).expect("queued -> staging-in");
        let input = self.jobs[&id].spec.input_gb;
        self.write_marker(id, JobState::StagingIn, at, Some((0.0, input, 0.0)));
        Some(id)
    }

    /// Stage-in finished; the job starts executing.
    pub fn start_running(&mut self, id: JobId, at: SimTime) -> Result<(), JobError> {
        self.transition(id, JobState::Running, at)?;
        self.write_marker(id, JobState::Running, at, Some((1.0, 0.0, 0.0)));
        Ok(())
    }

    /// Execution finished; output staging begins.
    pub fn start_staging_out(&mut self, id: JobId, at: SimTime) -> Result<(), JobError> {
        self.transition(id, JobState::StagingOut, at)?;
        let output = self.jobs[&id].spec.output_gb;
        self.write_marker(id, JobState::StagingOut, at, Some((0.0, output, 0.0)));
        Ok(())
    }

    /// Output landed; the job is done and the worker frees up.
    pub fn complete(&mut self, id: JobId, at: SimTime) -> Result<(), JobError> {
        self.transition(id, JobState::Completed, at)?;
        self.write_marker(id, JobState::Completed, at, None);
        let job = self.jobs.get_mut(&id).expect("completing job exists");
        job.assigned_instance = None;
        self.completed += 1;
        Ok(())
    }

    /// Marks a job's worker as gone (revoked or failed); the next watcher
    /// sweep resubmits it.
    pub fn worker_died(&mut self, id: JobId) {
        self.dead_worker_jobs.push(id);
    }

    /// The queue watcher: every job whose worker died since the last sweep
    /// is resubmitted with its spec intact and partial progress discarded.
    pub fn watcher_tick(&mut self, at: SimTime) -> Vec<JobId> {
        let victims = std::mem::take(&mut self.dead_worker_jobs);
        let mut resubmitted = Vec::new();
        for id in victims {
            let Some(job) = self.jobs.get_mut(&id) else { continue };
            if matches!(job.state, JobState::StagingIn | JobState::Running | JobState::StagingOut)
            {
                job.assigned_instance = None;
                job.attempt += 1;
                self.transition(id, JobState::Resubmitted, at).expect("active -> resubmitted");
                self.transition(id, JobState::Queued, at).expect("resubmitted -> queued");
                let queue = self.jobs[&id].spec.queue;
                self.queue_mut(queue).push_back(id);
                resubmitted.push(id);
            }
        }
        resubmitted
    }

    /// Moves a deferred job back into its queue once its input's retrieval
    /// completed. Only jobs waiting on `ready_objects` move.
    pub fn release_deferred<F>(&mut self, at: SimTime, is_ready: F) -> Vec<JobId>
    where
        F: Fn(&JobSpec) -> bool,
    {
        let mut released = Vec::new();
        let mut keep = VecDeque::new();
        while let Some(id) = self.deferred.pop_front() {
            let job = &self.jobs[&id];
            if is_ready(&job.spec) {
                let queue = job.spec.queue;
                self.transition(id, JobState::Queued, at).expect("waiting -> queued");
                self.queue_mut(queue).push_back(id);
                released.push(id);
            } else {
                keep.push_back(id);
            }
        }
        self.deferred = keep;
        released
    }
}

/// Analytic task throughput: workers scale linearly until the broker's
/// read or write channel saturates.
pub fn effective_throughput(
    worker_count: u32,
    per_worker_rate: f64,
    capacity: BrokerCapacity,
    reads_per_task: u32,
    writes_per_task: u32,
) -> f64 {
    let worker_bound = f64::from(worker_count) * per_worker_rate;
    let read_bound = capacity.read_ops_per_sec / f64::from(reads_per_task.max(1));
    let write_bound = capacity.write_ops_per_sec / f64::from(writes_per_task.max(1));
    worker_bound.min(read_bound).min(write_bound)
}

/// Result of a simulated many-small-tasks run.
#[derive(Debug, Clone, Copy)]
pub struct ThroughputRun {
    pub tasks: u32,
    pub workers: u32,
    pub completion_secs: f64,
    pub tasks_per_sec: f64,
}

/// Simulates `tasks` trivial tasks over `workers` workers against the
/// broker. Workers cycle at `1/per_worker_rate` seconds per task and block
/// on the broker's read channel to poll and write channel to record
/// markers, so completion time is `tasks / min(worker rate, broker bound)`.
///
/// This runs on a fractional-second micro-clock of its own: per-task cycles
/// are shorter than the kernel's one-second resolution.
pub fn simulate_throughput(
    tasks: u32,
    workers: u32,
    per_worker_rate: f64,
    capacity: BrokerCapacity,
    reads_per_task: u32,
    writes_per_task: u32,
) -> ThroughputRun {
    assert!(workers > 0 && tasks > 0 && per_worker_rate > 0.0);
    let cycle = 1.0 / per_worker_rate;
    let read_cost = f64::from(reads_per_task) / capacity.read_ops_per_sec;
    let write_cost = f64::from(writes_per_task) / capacity.write_ops_per_sec;

    let mut worker_free = vec![0.0f64; workers as usize];
    let mut read_free = 0.0f64;
    let mut write_free = 0.0f64;
    let mut last_completion = 0.0f64;

    for _ in 0..tasks {
        // earliest-free worker, lowest index on ties
        let (w, _) = worker_free
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(&b.0)))
            .expect("at least one worker");
        let poll_granted = worker_free[w].max(read_free);
        read_free = poll_granted + read_cost;
        let executed = poll_granted + cycle;
        // markers drain through the write channel without blocking the
        // worker's next poll; the per-worker rate already covers them
        let completion = executed.max(write_free) + write_cost;
        write_free = completion;
        worker_free[w] = executed;
        last_completion = last_completion.max(completion);
    }

    ThroughputRun {
        tasks,
        workers,
        completion_secs: last_completion,
        tasks_per_sec: f64::from(tasks) / last_completion,
    }
}
