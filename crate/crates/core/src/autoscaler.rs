//! Scaling strategies over an instance pool: a fixed-size baseline,
//! demand-following provisioning with an optional cap, and idle reclamation.
//! Placement delegates to the market's cheapest-zone search.

use thiserror::Error;

use crate::market::{cheapest_az, AzKey, AzScope, MarketError, MarketKind, PriceBook};
use crate::simkernel::SimTime;
use crate::workload::QueueKind;

/// The three scaling strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// A fixed fleet, provisioned up front and held for the whole run.
    NoScaling { fixed_size: u32 },
    /// Demand-following, capped at `max_size` (in-flight provisioning
    /// counts against the cap).
    Limited { max_size: u32 },
    /// Demand-following with no upper bound.
    Unlimited,
}

/// A pool's scaling policy.
#[derive(Debug, Clone)]
pub struct ScalingPolicy {
    pub strategy: Strategy,
    pub min_size: u32,
    pub pool: QueueKind,
    pub market: MarketKind,
    pub az_scope: AzScope,
    /// Idle instances past this age are reclaimed (default 55 minutes:
    /// just inside the billing hour).
    pub idle_timeout_secs: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("scaling policy error: {0}")]
    Invalid(String),
}

impl ScalingPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if let Strategy::Limited { max_size } = self.strategy {
            if max_size < self.min_size {
                return Err(PolicyError::Invalid(format!(
                    "limited max size {max_size} below min size {}",
                    self.min_size
                )));
            }
        }
        if self.pool == QueueKind::Development
            && (self.min_size < 1 || self.market != MarketKind::OnDemand)
        {
            return Err(PolicyError::Invalid(
                "development pool needs min size >= 1 on the on-demand market".into(),
            ));
        }
        Ok(())
    }

    /// Size the pool never shrinks below.
    pub fn floor(&self) -> u32 {
        match self.strategy {
            Strategy::NoScaling { fixed_size } => fixed_size,
            _ => self.min_size,
        }
    }

    /// Size the pool never grows beyond, if bounded.
    pub fn ceiling(&self) -> Option<u32> {
        match self.strategy {
            Strategy::NoScaling { fixed_size } => Some(fixed_size),
            Strategy::Limited { max_size } => Some(max_size),
            Strategy::Unlimited => None,
        }
    }
}

/// Instance counts by state, as seen by the scaler.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoolState {
    pub provisioning: u32,
    pub idle: u32,
    pub busy: u32,
    /// Subset of `idle` whose idle age exceeds the policy timeout.
    pub idle_past_timeout: u32,
}

impl PoolState {
    pub fn total(&self) -> u32 {
        self.provisioning + self.idle + self.busy
    }
}

/// Scaling actions. Provisioning is one instance per waiting job; which
/// idle instances to reclaim is the caller's choice (oldest first).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingAction {
    Provision { count: u32 },
    Terminate { count: u32 },
}

/// Decides provisioning and reclamation for the current queue depth.
///
/// Waiting jobs already matched by an idle or in-flight instance do not
/// trigger another provision, which keeps bursts from over-provisioning.
pub fn react(policy: &ScalingPolicy, queue_depth: u32, pool: PoolState, _at: SimTime) -> Vec<ScalingAction> {
    let mut actions = Vec::new();
    let total = pool.total();

    let demand = match policy.strategy {
        // fixed fleet: hold the target size, ignore the queue
        Strategy::NoScaling { fixed_size } => fixed_size.saturating_sub(total),
        Strategy::Limited { max_size } => {
            let unmatched = queue_depth.saturating_sub(pool.provisioning + pool.idle);
            let headroom = max_size.saturating_sub(total);
            let refill = policy.min_size.saturating_sub(total);
            unmatched.min(headroom).max(refill)
        }
        Strategy::Unlimited => {
            let unmatched = queue_depth.saturating_sub(pool.provisioning + pool.idle);
            let refill = policy.min_size.saturating_sub(total);
            unmatched.max(refill)
        }
    };
    if demand > 0 {
        actions.push(ScalingAction::Provision { count: demand });
    }

    if !matches!(policy.strategy, Strategy::NoScaling { .. }) {
        let reclaimable = pool.idle_past_timeout.min(total.saturating_sub(policy.floor()));
        if reclaimable > 0 {
            actions.push(ScalingAction::Terminate { count: reclaimable });
        }
    }
    actions
}

/// Picks where a job's instance goes: spot searches the configured scope
/// for the cheapest zone, on-demand stays in the home zone.
pub fn place(
    policy: &ScalingPolicy,
    book: &PriceBook,
    instance_type: &str,
    at: SimTime,
) -> Result<(AzKey, MarketKind), MarketError> {
    match policy.market {
        MarketKind::OnDemand => Ok((book.home().clone(), MarketKind::OnDemand)),
        MarketKind::Spot => {
            let (zone, _) = cheapest_az(book, policy.az_scope, instance_type, at)?;
            Ok((zone, MarketKind::Spot))
        }
    }
}
