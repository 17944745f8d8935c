//! The simulation engine: wires the kernel, queues, fleet, storage, and the
//! security fabric into one event loop and exposes drivers for each
//! experiment family.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::autoscaler::{self, PoolState, ScalingAction};
use crate::ids::{InstanceId, JobId, ObjectId};
use crate::jobmgr::{Job, JobError, JobManager, SubmitOutcome};
use crate::market::{
    self, billing, on_demand_equivalent, Instance, InstanceState, MarketError, PriceBook,
};
use crate::rbac::{Rbac, RbacError, RoleKind};
use crate::scenario::{ManifestRow, PolicyDecl, RoleDecl, ScalingConfig, Scenario};
use crate::simkernel::{
    Event, EventKind, EventQueue, KernelError, RngFactory, RngStream, SimTime, StageDirection,
    SECS_PER_DAY,
};
use crate::storagesim::{StagingPlan, StorageError, StorageSim, Tier, TierPolicy};
use crate::traces::{load_into_book, TraceError};
use crate::workload::{JobSpec, JobState, QueueKind};

/// Watcher sweep period in virtual seconds.
pub const WATCHER_PERIOD_SECS: u64 = 60;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Job(#[from] JobError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Rbac(#[from] RbacError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("simulation guard tripped at {at}: {incomplete} of {expected} jobs incomplete")]
    Guard { at: SimTime, incomplete: u64, expected: u64 },
    #[error("engine configuration error: {0}")]
    Config(String),
}

/// One row of the job event log (`job_id,event,at_seconds,detail`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobEventRow {
    pub job: JobId,
    pub event: String,
    pub at: SimTime,
    pub detail: String,
}

/// A pool: its scaling configuration plus the instances serving it.
#[derive(Debug)]
struct PoolRuntime {
    config: ScalingConfig,
    /// Idle instances in the order they went idle.
    idle: VecDeque<(InstanceId, SimTime)>,
    members: Vec<InstanceId>,
}

impl PoolRuntime {
    fn queue(&self) -> QueueKind {
        self.config.policy.pool
    }
}

/// Everything the event handlers mutate.
#[derive(Debug)]
pub struct SimState {
    pub mgr: JobManager,
    pub rbac: Rbac,
    pub storage: StorageSim,
    pub book: PriceBook,
    instances: BTreeMap<InstanceId, Instance>,
    job_of_instance: BTreeMap<InstanceId, JobId>,
    pools: Vec<PoolRuntime>,
    specs: BTreeMap<JobId, JobSpec>,
    instance_type: String,
    tier_policy: Option<TierPolicy>,
    delay_rng: RngStream,
    next_instance: u64,
    expected_jobs: u64,
    done: bool,
    watcher_scheduled: bool,
    pub job_log: Vec<JobEventRow>,
    pub revocations: u64,
    pub provision_failures: u64,
    /// Invariant violations collected when strict checking is on.
    pub violations: Vec<String>,
    strict: bool,
}

/// The engine couples the kernel's queue with the simulated state.
#[derive(Debug)]
pub struct Engine {
    pub queue: EventQueue,
    pub state: SimState,
}

fn worker_principal(id: InstanceId) -> String {
    format!("worker:{id}")
}

fn user_principal(role: &str) -> String {
    format!("user:{role}")
}

impl Engine {
    /// Builds an engine from scenario parts. Registers roles and policies,
    /// loads the manifest and traces, and seeds the named random streams.
    pub fn build(scenario: &Scenario, rngs: &RngFactory) -> Result<Engine, RunError> {
        let mut rbac = Rbac::new();
        register_roles(&mut rbac, &scenario.roles, &scenario.policies)?;

        let mut storage = StorageSim::new(scenario.prices.staging);
        load_manifest(&mut storage, &scenario.manifest);

        let mut book = PriceBook::new(scenario.home.clone());
        book.set_on_demand_price(&scenario.instance_type, scenario.prices.on_demand_per_hour);
        book.set_transfer_price_per_gb(scenario.prices.transfer_per_gb);
        book.billing_quantum_secs = scenario.prices.billing_quantum_secs;
        book.delay_model = scenario.prices.delay;
        load_into_book(&mut book, &scenario.trace_rows)?;

        let mut pools = Vec::new();
        for config in [&scenario.scaling, &scenario.scaling_dev].into_iter().flatten() {
            pools.push(PoolRuntime {
                config: config.clone(),
                idle: VecDeque::new(),
                members: Vec::new(),
            });
        }

        let state = SimState {
            mgr: JobManager::new(),
            rbac,
            storage,
            book,
            instances: BTreeMap::new(),
            job_of_instance: BTreeMap::new(),
            pools,
            specs: BTreeMap::new(),
            instance_type: scenario.instance_type.clone(),
            tier_policy: scenario.tier_policy.clone(),
            delay_rng: rngs.stream("provisioning-delay"),
            next_instance: 0,
            expected_jobs: 0,
            done: false,
            watcher_scheduled: false,
            job_log: Vec::new(),
            revocations: 0,
            provision_failures: 0,
            violations: Vec::new(),
            strict: false,
        };
        Ok(Engine { queue: EventQueue::new(), state })
    }

    /// Turns on per-event invariant checking (pool bounds, work
    /// conservation, event conservation); violations accumulate in
    /// `state.violations`.
    pub fn set_strict(&mut self, strict: bool) {
        self.state.strict = strict;
    }

    /// Queues a workload: arrival events fire at each spec's submit time.
    pub fn submit_workload(&mut self, specs: Vec<JobSpec>) -> Result<(), RunError> {
        self.state.expected_jobs += specs.len() as u64;
        for spec in specs {
            self.queue.schedule(spec.submit_time, EventKind::JobArrival { job: spec.id })?;
            self.state.specs.insert(spec.id, spec);
        }
        if !self.state.watcher_scheduled {
            self.queue.schedule(SimTime(WATCHER_PERIOD_SECS), EventKind::WatcherTick)?;
            self.state.watcher_scheduled = true;
        }
        // fixed pools fill immediately
        self.state.react(&mut self.queue, SimTime::ZERO)?;
        Ok(())
    }

    /// Schedules daily lifecycle sweeps for `days` days (day 1 onward).
    pub fn schedule_lifecycle_ticks(&mut self, days: u32) -> Result<(), RunError> {
        for d in 1..=u64::from(days) {
            self.queue.schedule(SimTime(d * SECS_PER_DAY), EventKind::LifecycleTick)?;
        }
        Ok(())
    }

    /// Runs the event loop until `deadline`, returning events processed.
    pub fn run_to(&mut self, deadline: SimTime) -> Result<u64, RunError> {
        let state = &mut self.state;
        let mut first_error: Option<RunError> = None;
        let n = self.queue.run_until(deadline, |queue, ev| {
            if first_error.is_some() {
                return; // drain without acting once poisoned
            }
            if let Err(e) = state.handle(queue, ev) {
                first_error = Some(e);
            } else if state.strict {
                state.check_invariants(queue);
            }
        });
        match first_error {
            Some(e) => Err(e),
            None => Ok(n),
        }
    }

    /// Runs to the guard deadline and fails if jobs are still incomplete.
    pub fn run_guarded(&mut self, max_virtual_days: u64) -> Result<(), RunError> {
        let deadline = SimTime(max_virtual_days * SECS_PER_DAY);
        self.run_to(deadline)?;
        let (submitted, completed) = self.state.mgr.counts();
        let arrived_all = submitted == self.state.expected_jobs;
        if self.state.expected_jobs > 0 && (!arrived_all || completed < self.state.expected_jobs) {
            return Err(RunError::Guard {
                at: self.queue.clock(),
                incomplete: self.state.expected_jobs - completed,
                expected: self.state.expected_jobs,
            });
        }
        Ok(())
    }
}

fn register_roles(
    rbac: &mut Rbac,
    roles: &[RoleDecl],
    policies: &[PolicyDecl],
) -> Result<(), RunError> {
    for role in roles {
        let kind = if role.internal { RoleKind::Internal } else { RoleKind::User };
        rbac.register_role(&role.name, kind, role.trusted)?;
    }
    // workers always exist; make sure their role does too
    if rbac.role("task-executor").is_none() {
        rbac.register_role("task-executor", RoleKind::Internal, true)?;
    }
    for policy in policies {
        let mut actions = Vec::new();
        for action in &policy.actions {
            let parsed = crate::rbac::Action::parse(action).ok_or_else(|| {
                RunError::Config(format!("unknown action '{action}' in policy for {}", policy.role))
            })?;
            actions.push(parsed);
        }
        rbac.add_policy(&policy.role, &policy.resource, actions);
    }
    Ok(())
}

fn load_manifest(storage: &mut StorageSim, manifest: &[ManifestRow]) {
    for row in manifest {
        storage.insert(row.object.clone(), row.size_gb, row.initial_tier, &row.owner_role, SimTime::ZERO);
    }
}

/// Attaches each job to the first manifest object whose size matches its
/// drawn input size, so staging flows through the managed store.
pub fn bind_inputs_by_size(specs: &mut [JobSpec], manifest: &[ManifestRow]) {
    for spec in specs.iter_mut() {
        if spec.input_object.is_some() || spec.input_gb == 0.0 {
            continue;
        }
        if let Some(row) = manifest.iter().find(|r| (r.size_gb - spec.input_gb).abs() < 1e-9) {
            spec.input_object = Some(row.object.clone());
        }
    }
}

impl SimState {
    fn log(&mut self, job: JobId, event: &str, at: SimTime, detail: impl Into<String>) {
        self.job_log.push(JobEventRow { job, event: event.to_string(), at, detail: detail.into() });
    }

    fn pool_state(&self, pool_idx: usize, at: SimTime) -> PoolState {
        let pool = &self.pools[pool_idx];
        let mut state = PoolState::default();
        for id in &pool.members {
            match self.instances[id].state {
                InstanceState::Provisioning => state.provisioning += 1,
                InstanceState::Idle => state.idle += 1,
                InstanceState::Busy => state.busy += 1,
                _ => {}
            }
        }
        state.idle_past_timeout = pool
            .idle
            .iter()
            .filter(|(_, since)| at.since(*since) >= pool.config.policy.idle_timeout_secs)
            .count() as u32;
        state
    }

    fn handle(&mut self, queue: &mut EventQueue, ev: Event) -> Result<(), RunError> {
        let at = ev.fire_at;
        match ev.kind {
            EventKind::JobArrival { job } => self.on_job_arrival(queue, job, at),
            EventKind::InstanceReady { instance } => self.on_instance_ready(queue, instance, at),
            EventKind::InstanceRevoked { instance } => self.on_instance_revoked(queue, instance, at),
            EventKind::JobFinished { job, attempt } => self.on_job_finished(queue, job, attempt, at),
            EventKind::StagingDone { job, attempt, direction } => {
                self.on_staging_done(queue, job, attempt, direction, at)
            }
            EventKind::LifecycleTick => self.on_lifecycle_tick(at),
            EventKind::RetrievalDone { object } => self.on_retrieval_done(queue, object, at),
            EventKind::WatcherTick => self.on_watcher_tick(queue, at),
        }
    }

    fn on_job_arrival(
        &mut self,
        queue: &mut EventQueue,
        job: JobId,
        at: SimTime,
    ) -> Result<(), RunError> {
        let spec = self
            .specs
            .get(&job)
            .cloned()
            .ok_or_else(|| RunError::Config(format!("arrival for unknown {job}")))?;
        let owner = spec.owner_role.clone();
        let submitter = user_principal(&owner);
        self.log(job, "submitted", at, &submitter);
        let outcome = self.mgr.submit(spec, &owner, at, &mut self.rbac, &mut self.storage)?;
        match outcome {
            SubmitOutcome::Enqueued => self.log(job, "queued", at, ""),
            SubmitOutcome::Deferred { ready_at, retrieval_started } => {
                self.log(job, "waiting-for-retrieval", at, format!("ready-at={}", ready_at.secs()));
                if retrieval_started {
                    let object = self.specs[&job].input_object.clone().expect("deferred job has input");
                    queue.schedule(ready_at, EventKind::RetrievalDone { object })?;
                }
            }
        }
        self.dispatch(queue, at)?;
        self.react(queue, at)
    }

    /// Matches queued jobs to idle instances, pool by pool.
    fn dispatch(&mut self, queue: &mut EventQueue, at: SimTime) -> Result<(), RunError> {
        for pool_idx in 0..self.pools.len() {
            let pool_queue = self.pools[pool_idx].queue();
            while let Some(job) = self.mgr.peek_queue(pool_queue) {
                if self.pools[pool_idx].idle.is_empty() {
                    break;
                }

                // an input that sank back into the archive re-defers the job
                let input_object = self.mgr.job(job).expect("queued job").spec.input_object.clone();
                if let Some(ref obj) = input_object {
                    let tier = self
                        .storage
                        .object(obj)
                        .ok_or_else(|| RunError::Storage(StorageError::NotFound(obj.clone())))?
                        .tier;
                    if matches!(tier, Tier::Glacier | Tier::Retrieving) {
                        self.mgr.defer_head(pool_queue, at);
                        let owner = self.mgr.job(job).expect("job").spec.owner_role.clone();
                        let plan = self.storage.request(obj, &user_principal(&owner), &owner, at, &mut self.rbac)?;
                        self.log(job, "waiting-for-retrieval", at, obj.to_string());
                        if let StagingPlan::Deferred { ready_at, newly_started: true } = plan {
                            queue.schedule(ready_at, EventKind::RetrievalDone { object: obj.clone() })?;
                        }
                        continue;
                    }
                }

                let (instance, _) = self.pools[pool_idx].idle.pop_front().expect("idle checked");
                let polled = self.mgr.worker_poll(instance, pool_queue, at);
                debug_assert_eq!(polled, Some(job));
                self.instances.get_mut(&instance).expect("pool member").state = InstanceState::Busy;
                self.job_of_instance.insert(instance, job);

                // stage-in under the owner's role, assumed by the worker
                let spec = self.mgr.job(job).expect("assigned job").spec.clone();
                let principal = worker_principal(instance);
                let transfer_secs = match spec.input_object {
                    Some(ref obj) => {
                        let handle =
                            self.rbac.assume_role(&principal, "task-executor", &spec.owner_role, at)?;
                        let plan =
                            self.storage.request(obj, &principal, &handle.user_role, at, &mut self.rbac)?;
                        match plan {
                            StagingPlan::Immediate { transfer_secs } => transfer_secs,
                            StagingPlan::Deferred { .. } => {
                                unreachable!("offline inputs are deferred before assignment")
                            }
                        }
                    }
                    None => self.storage.staging.transfer_secs(spec.input_gb),
                };
                let attempt = self.mgr.job(job).expect("job").attempt;
                self.log(job, "staging-in", at, format!("{instance}"));
                queue.schedule(
                    at.plus(transfer_secs),
                    EventKind::StagingDone { job, attempt, direction: StageDirection::In },
                )?;
            }
        }
        Ok(())
    }

    /// Applies the scaling policy of every pool.
    fn react(&mut self, queue: &mut EventQueue, at: SimTime) -> Result<(), RunError> {
        if self.done {
            return Ok(());
        }
        for pool_idx in 0..self.pools.len() {
            let pool_queue = self.pools[pool_idx].queue();
            let depth = self.mgr.queue_depth(pool_queue);
            let pool_state = self.pool_state(pool_idx, at);
            let actions =
                autoscaler::react(&self.pools[pool_idx].config.policy, depth, pool_state, at);
            for action in actions {
                match action {
                    ScalingAction::Provision { count } => {
                        for _ in 0..count {
                            if !self.provision_one(queue, pool_idx, at)? {
                                break; // spot priced out; the watcher retries
                            }
                        }
                    }
                    ScalingAction::Terminate { count } => {
                        self.terminate_idle(pool_idx, count, at)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Provisions one instance for a pool. Returns false when the spot
    /// market is priced above the bid right now.
    fn provision_one(
        &mut self,
        queue: &mut EventQueue,
        pool_idx: usize,
        at: SimTime,
    ) -> Result<bool, RunError> {
        let config = self.pools[pool_idx].config.clone();
        let (zone, market) =
            autoscaler::place(&config.policy, &self.book, &self.instance_type, at)?;
        let id = InstanceId(self.next_instance);
        let delay_override = config.pre_provisioned;
        let result = market::provision(
            &self.book,
            id,
            market,
            zone,
            &self.instance_type,
            config.bid,
            at,
            &mut self.delay_rng,
        );
        match result {
            Ok((mut instance, revoked_at)) => {
                self.next_instance += 1;
                if delay_override {
                    instance.ready_time = Some(at);
                }
                let ready = instance.ready_time.expect("provisioned instances have a ready time");
                self.instances.insert(id, instance);
                self.pools[pool_idx].members.push(id);
                queue.schedule(ready, EventKind::InstanceReady { instance: id })?;
                if let Some(t) = revoked_at {
                    queue.schedule(t, EventKind::InstanceRevoked { instance: id })?;
                }
                Ok(true)
            }
            Err(MarketError::PriceExceeded { .. }) => {
                self.provision_failures += 1;
                Ok(false)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn terminate_idle(&mut self, pool_idx: usize, count: u32, at: SimTime) -> Result<(), RunError> {
        let timeout = self.pools[pool_idx].config.policy.idle_timeout_secs;
        let mut terminated = 0;
        while terminated < count {
            let Some(&(id, since)) = self.pools[pool_idx].idle.front() else { break };
            if at.since(since) < timeout {
                break; // deque is oldest-first; younger entries can't qualify
            }
            self.pools[pool_idx].idle.pop_front();
            self.finalize_instance(id, InstanceState::Terminated, at)?;
            terminated += 1;
        }
        Ok(())
    }

    /// Ends an instance's life and freezes its billed cost.
    fn finalize_instance(
        &mut self,
        id: InstanceId,
        end_state: InstanceState,
        at: SimTime,
    ) -> Result<(), RunError> {
        let instance = self.instances.get_mut(&id).expect("finalizing known instance");
        instance.state = end_state;
        instance.terminate_time = Some(at);
        let frozen = billing(&self.book, instance, at)?;
        self.instances.get_mut(&id).expect("instance").accrued_cost = frozen;
        Ok(())
    }

    fn on_instance_ready(
        &mut self,
        queue: &mut EventQueue,
        id: InstanceId,
        at: SimTime,
    ) -> Result<(), RunError> {
        let Some(instance) = self.instances.get_mut(&id) else { return Ok(()) };
        if instance.state != InstanceState::Provisioning {
            return Ok(()); // revoked or terminated while provisioning
        }
        instance.state = InstanceState::Idle;
        let pool_idx = self
            .pools
            .iter()
            .position(|p| p.members.contains(&id))
            .ok_or_else(|| RunError::Config(format!("{id} belongs to no pool")))?;
        self.pools[pool_idx].idle.push_back((id, at));
        self.dispatch(queue, at)
    }

    fn on_instance_revoked(&mut self, queue: &mut EventQueue, id: InstanceId, at: SimTime) -> Result<(), RunError> {
        let Some(instance) = self.instances.get(&id) else { return Ok(()) };
        if !matches!(
            instance.state,
            InstanceState::Provisioning | InstanceState::Idle | InstanceState::Busy
        ) {
            return Ok(());
        }
        self.revocations += 1;
        for pool in &mut self.pools {
            pool.idle.retain(|(i, _)| *i != id);
        }
        if let Some(job) = self.job_of_instance.remove(&id) {
            self.mgr.worker_died(job);
            self.log(job, "worker-revoked", at, format!("{id}"));
        }
        self.finalize_instance(id, InstanceState::Revoked, at)?;
        // fixed pools refill straight away; the orphaned job itself comes
        // back through the watcher
        self.react(queue, at)
    }

    fn on_job_finished(
        &mut self,
        queue: &mut EventQueue,
        job: JobId,
        attempt: u32,
        at: SimTime,
    ) -> Result<(), RunError> {
        let Some(record) = self.mgr.job(job) else { return Ok(()) };
        if record.attempt != attempt || record.state != JobState::Running {
            return Ok(()); // stale event from a revoked attempt
        }
        let output_gb = record.spec.output_gb;
        self.mgr.start_staging_out(job, at)?;
        self.log(job, "staging-out", at, "");
        let transfer = self.storage.staging.transfer_secs(output_gb);
        queue.schedule(
            at.plus(transfer),
            EventKind::StagingDone { job, attempt, direction: StageDirection::Out },
        )?;
        Ok(())
    }

    fn on_staging_done(
        &mut self,
        queue: &mut EventQueue,
        job: JobId,
        attempt: u32,
        direction: StageDirection,
        at: SimTime,
    ) -> Result<(), RunError> {
        let Some(record) = self.mgr.job(job) else { return Ok(()) };
        if record.attempt != attempt {
            return Ok(());
        }
        match direction {
            StageDirection::In => {
                if record.state != JobState::StagingIn {
                    return Ok(());
                }
                // worker resumed its own role; execution starts
                let duration = record.spec.nominal_duration_secs;
                self.mgr.start_running(job, at)?;
                self.log(job, "running", at, "");
                queue.schedule(at.plus(duration), EventKind::JobFinished { job, attempt })?;
                Ok(())
            }
            StageDirection::Out => {
                if record.state != JobState::StagingOut {
                    return Ok(());
                }
                let instance = record.assigned_instance;
                self.mgr.complete(job, at)?;
                self.log(job, "completed", at, "");
                if let Some(id) = instance {
                    self.job_of_instance.remove(&id);
                    if let Some(inst) = self.instances.get_mut(&id) {
                        if inst.state == InstanceState::Busy {
                            inst.state = InstanceState::Idle;
                            if let Some(pool) =
                                self.pools.iter_mut().find(|p| p.members.contains(&id))
                            {
                                pool.idle.push_back((id, at));
                            }
                        }
                    }
                }
                let (_, completed) = self.mgr.counts();
                if completed == self.expected_jobs {
                    self.finish_run(at)?;
                } else {
                    self.dispatch(queue, at)?;
                    self.react(queue, at)?;
                }
                Ok(())
            }
        }
    }

    fn on_lifecycle_tick(&mut self, at: SimTime) -> Result<(), RunError> {
        if let Some(policy) = self.tier_policy.clone() {
            for demotion in self.storage.lifecycle_tick(&policy, at) {
                self.job_log.push(JobEventRow {
                    job: JobId(u64::MAX),
                    event: "tier-demotion".to_string(),
                    at,
                    detail: format!("{} {}>{}", demotion.object, demotion.from, demotion.to),
                });
            }
        }
        Ok(())
    }

    fn on_retrieval_done(
        &mut self,
        queue: &mut EventQueue,
        object: ObjectId,
        at: SimTime,
    ) -> Result<(), RunError> {
        self.storage.retrieval_done(&object, at)?;
        let released =
            self.mgr.release_deferred(at, |spec| spec.input_object.as_ref() == Some(&object));
        for job in released {
            self.log(job, "queued", at, format!("retrieved {object}"));
        }
        self.dispatch(queue, at)?;
        self.react(queue, at)
    }

    fn on_watcher_tick(&mut self, queue: &mut EventQueue, at: SimTime) -> Result<(), RunError> {
        for job in self.mgr.watcher_tick(at) {
            self.log(job, "resubmitted", at, "");
        }
        self.dispatch(queue, at)?;
        self.react(queue, at)?;
        if !self.done {
            queue.schedule(at.plus(WATCHER_PERIOD_SECS), EventKind::WatcherTick)?;
        }
        Ok(())
    }

    /// All jobs are done: the experiment is over, surviving instances are
    /// terminated and billed.
    fn finish_run(&mut self, at: SimTime) -> Result<(), RunError> {
        self.done = true;
        let ids: Vec<InstanceId> = self
            .instances
            .iter()
            .filter(|(_, i)| {
                matches!(
                    i.state,
                    InstanceState::Provisioning | InstanceState::Idle | InstanceState::Busy
                )
            })
            .map(|(id, _)| *id)
            .collect();
        for id in ids {
            self.finalize_instance(id, InstanceState::Terminated, at)?;
        }
        for pool in &mut self.pools {
            pool.idle.clear();
        }
        Ok(())
    }

    fn check_invariants(&mut self, queue: &EventQueue) {
        let at = queue.clock();
        let (scheduled, processed, pending) = queue.counts();
        if scheduled != processed + pending {
            self.violations.push(format!("event conservation broken at {at}"));
        }
        if self.done {
            return;
        }
        for (idx, pool) in self.pools.iter().enumerate() {
            let mut live = 0u32;
            let mut idle = 0u32;
            for id in &pool.members {
                match self.instances[id].state {
                    InstanceState::Provisioning | InstanceState::Busy => live += 1,
                    InstanceState::Idle => {
                        live += 1;
                        idle += 1;
                    }
                    _ => {}
                }
            }
            if let Some(cap) = pool.config.policy.ceiling() {
                if live > cap {
                    self.violations.push(format!(
                        "pool {idx} over ceiling at {at}: {live} > {cap}"
                    ));
                }
            }
            // a priced-out spot market legitimately leaves the floor unmet;
            // otherwise the pool must hold its minimum
            let floor = pool.config.policy.floor();
            if live < floor && self.provision_failures == 0 {
                self.violations.push(format!("pool {idx} under floor at {at}: {live} < {floor}"));
            }
            if idle > 0 && self.mgr.queue_depth(pool.queue()) > 0 {
                self.violations.push(format!(
                    "work conservation broken at {at}: {idle} idle with jobs queued"
                ));
            }
        }
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.values()
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.mgr.jobs()
    }

    /// (billed cost, on-demand-equivalent cost) summed over all instances.
    pub fn fleet_costs(&self) -> Result<(f64, f64), RunError> {
        let mut billed = 0.0;
        let mut od = 0.0;
        for instance in self.instances.values() {
            let until = instance.terminate_time.unwrap_or(SimTime::ZERO);
            billed += billing(&self.book, instance, until)?;
            od += on_demand_equivalent(&self.book, instance, until)?;
        }
        Ok((billed, od))
    }
}
