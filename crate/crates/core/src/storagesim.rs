//! Tiered storage with least-recently-used staleness policies.
//!
//! Objects rest in the standard tier, demote to infrequent access and then
//! to archive when idle past the policy's staleness windows, and come back
//! via a slow retrieval when a job needs archived data. Staging to and from
//! workers is modeled as bandwidth-limited latency.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ids::ObjectId;
use crate::rbac::{Action, Decision, Rbac};
use crate::simkernel::{SimTime, SECS_PER_DAY};

/// Storage tiers in demotion order. `Retrieving` is the transient state of
/// an archived object on its way back to the standard tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tier {
    Std,
    Ia,
    Glacier,
    Retrieving,
}

impl Tier {
    pub fn parse(s: &str) -> Option<Tier> {
        match s.to_ascii_uppercase().as_str() {
            "STD" => Some(Tier::Std),
            "IA" => Some(Tier::Ia),
            "GLACIER" => Some(Tier::Glacier),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Tier::Std => "STD",
            Tier::Ia => "IA",
            Tier::Glacier => "GLACIER",
            Tier::Retrieving => "RETRIEVING",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One link of a staleness chain: objects idle in `tier` for more than
/// `staleness_days` move one link down. The terminal link has no staleness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyLink {
    pub tier: Tier,
    pub staleness_days: Option<u32>,
}

/// A parsed staleness policy such as `STD30-IA60-Glacier`.
#[derive(Debug, Clone, PartialEq)]
pub struct TierPolicy {
    links: Vec<PolicyLink>,
}

impl TierPolicy {
    pub fn links(&self) -> &[PolicyLink] {
        &self.links
    }

    pub fn terminal_tier(&self) -> Tier {
        self.links.last().expect("policy has at least one link").tier
    }

    /// Position of `tier` in the chain, if present.
    fn link_index(&self, tier: Tier) -> Option<usize> {
        self.links.iter().position(|l| l.tier == tier)
    }
}

impl fmt::Display for TierPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, link) in self.links.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            // policy strings conventionally write the archive tier mixed-case
            f.write_str(match link.tier {
                Tier::Glacier => "Glacier",
                other => other.label(),
            })?;
            if let Some(days) = link.staleness_days {
                write!(f, "{days}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StorageError {
    #[error("policy parse error at token '{token}': {reason}")]
    PolicyParse { token: String, reason: String },
    #[error("unknown object {0}")]
    NotFound(ObjectId),
    #[error("access denied for role {role} on {object}")]
    AccessDenied { role: String, object: ObjectId },
}

/// Parses a staleness policy string: dash-separated links, each a tier name
/// followed by a day count, except the terminal tier which has none.
pub fn parse_policy(text: &str) -> Result<TierPolicy, StorageError> {
    if text.trim().is_empty() {
        return Err(StorageError::PolicyParse {
            token: String::new(),
            reason: "empty policy".into(),
        });
    }
    let mut links = Vec::new();
    let tokens: Vec<&str> = text.split('-').collect();
    for (i, token) in tokens.iter().enumerate() {
        let terminal = i == tokens.len() - 1;
        let split = token.find(|c: char| c.is_ascii_digit()).unwrap_or(token.len());
        let (name, digits) = token.split_at(split);
        let tier = Tier::parse(name).ok_or_else(|| StorageError::PolicyParse {
            token: (*token).to_string(),
            reason: format!("unknown tier '{name}'"),
        })?;
        let staleness_days = if digits.is_empty() {
            None
        } else {
            Some(digits.parse::<u32>().map_err(|_| StorageError::PolicyParse {
                token: (*token).to_string(),
                reason: "bad day count".into(),
            })?)
        };
        match (terminal, staleness_days) {
            (false, None) => {
                return Err(StorageError::PolicyParse {
                    token: (*token).to_string(),
                    reason: "non-terminal tier needs a staleness in days".into(),
                })
            }
            (false, Some(0)) => {
                return Err(StorageError::PolicyParse {
                    token: (*token).to_string(),
                    reason: "staleness must be positive".into(),
                })
            }
            (true, Some(_)) => {
                return Err(StorageError::PolicyParse {
                    token: (*token).to_string(),
                    reason: "terminal tier takes no staleness".into(),
                })
            }
            _ => {}
        }
        if let Some(prev) = links.last() {
            let prev: &PolicyLink = prev;
            if tier <= prev.tier {
                return Err(StorageError::PolicyParse {
                    token: (*token).to_string(),
                    reason: "tiers must descend (STD, IA, GLACIER)".into(),
                });
            }
        }
        links.push(PolicyLink { tier, staleness_days });
    }
    Ok(TierPolicy { links })
}

/// A stored object and its lifecycle bookkeeping. The staleness clock for a
/// link runs from whichever is later: last access or entry into the tier,
/// so a chain like STD30-IA60 really holds an untouched object for
/// 30 + 60 days before archiving it.
#[derive(Debug, Clone)]
pub struct DataObject {
    pub id: ObjectId,
    pub size_gb: f64,
    pub tier: Tier,
    pub last_access: SimTime,
    pub tier_entered: SimTime,
    pub owner_role: String,
    pub access_count: u64,
    /// Completion time of an in-flight retrieval.
    pub retrieval_done_at: Option<SimTime>,
}

/// Staging latency parameters.
#[derive(Debug, Clone, Copy)]
pub struct StagingModel {
    /// Object-store to instance bandwidth in GB/second.
    pub bandwidth_gb_per_sec: f64,
    /// Archive retrieval latency in seconds (default four hours).
    pub glacier_retrieval_secs: u64,
}

impl Default for StagingModel {
    fn default() -> Self {
        StagingModel { bandwidth_gb_per_sec: 0.1, glacier_retrieval_secs: 4 * 3600 }
    }
}

impl StagingModel {
    pub fn transfer_secs(&self, size_gb: f64) -> u64 {
        (size_gb / self.bandwidth_gb_per_sec).ceil() as u64
    }
}

/// Outcome of asking for an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StagingPlan {
    /// Data is online; staging takes this many seconds.
    Immediate { transfer_secs: u64 },
    /// Data is archived; it becomes available at `ready_at`. `newly_started`
    /// is false when a retrieval was already in flight.
    Deferred { ready_at: SimTime, newly_started: bool },
}

/// One demotion performed by a lifecycle sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Demotion {
    pub object: ObjectId,
    pub from: Tier,
    pub to: Tier,
    pub at: SimTime,
}

/// The object store.
#[derive(Debug, Default)]
pub struct StorageSim {
    objects: BTreeMap<ObjectId, DataObject>,
    pub staging: StagingModel,
}

impl StorageSim {
    pub fn new(staging: StagingModel) -> Self {
        StorageSim { objects: BTreeMap::new(), staging }
    }

    pub fn insert(&mut self, id: ObjectId, size_gb: f64, tier: Tier, owner_role: &str, at: SimTime) {
        self.objects.insert(
            id.clone(),
            DataObject {
                id,
                size_gb,
                tier,
                last_access: at,
                tier_entered: at,
                owner_role: owner_role.to_string(),
                access_count: 0,
                retrieval_done_at: None,
            },
        );
    }

    pub fn object(&self, id: &ObjectId) -> Option<&DataObject> {
        self.objects.get(id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &DataObject> {
        self.objects.values()
    }

    pub fn total_gb(&self) -> f64 {
        self.objects.values().map(|o| o.size_gb).sum()
    }

    pub fn gb_in_tier(&self, tier: Tier) -> f64 {
        self.objects.values().filter(|o| o.tier == tier).map(|o| o.size_gb).sum()
    }

    /// Demotes every object idle past its current link's staleness by one
    /// link. Demotion does not touch the access clock.
    pub fn lifecycle_tick(&mut self, policy: &TierPolicy, at: SimTime) -> Vec<Demotion> {
        let mut demotions = Vec::new();
        for obj in self.objects.values_mut() {
            let Some(idx) = policy.link_index(obj.tier) else { continue };
            let Some(staleness_days) = policy.links()[idx].staleness_days else { continue };
            let clock_start = obj.last_access.max(obj.tier_entered);
            if at.since(clock_start) >= u64::from(staleness_days) * SECS_PER_DAY {
                let from = obj.tier;
                let to = policy.links()[idx + 1].tier;
                obj.tier = to;
                obj.tier_entered = at;
                demotions.push(Demotion { object: obj.id.clone(), from, to, at });
            }
        }
        demotions
    }

    /// Requests an object on behalf of `acting_role`. Online objects stage
    /// immediately at the configured bandwidth; archived objects flip to
    /// retrieving and surface in the standard tier once the retrieval
    /// window elapses. Every request is authorized and audited.
    pub fn request(
        &mut self,
        id: &ObjectId,
        principal: &str,
        acting_role: &str,
        at: SimTime,
        rbac: &mut Rbac,
    ) -> Result<StagingPlan, StorageError> {
        if !self.objects.contains_key(id) {
            return Err(StorageError::NotFound(id.clone()));
        }
        let decision = rbac.authorize(principal, acting_role, id.as_str(), Action::Read, at);
        if decision == Decision::Deny {
            return Err(StorageError::AccessDenied {
                role: acting_role.to_string(),
                object: id.clone(),
            });
        }
        let staging = self.staging;
        let obj = self.objects.get_mut(id).expect("checked above");
        obj.last_access = at;
        obj.access_count += 1;
        match obj.tier {
            Tier::Std | Tier::Ia => Ok(StagingPlan::Immediate {
                transfer_secs: staging.transfer_secs(obj.size_gb),
            }),
            Tier::Glacier => {
                let ready_at = at.plus(staging.glacier_retrieval_secs);
                obj.tier = Tier::Retrieving;
                obj.tier_entered = at;
                obj.retrieval_done_at = Some(ready_at);
                Ok(StagingPlan::Deferred { ready_at, newly_started: true })
            }
            Tier::Retrieving => {
                let ready_at = obj.retrieval_done_at.expect("retrieving object has a due time");
                Ok(StagingPlan::Deferred { ready_at, newly_started: false })
            }
        }
    }

    /// Lands a finished retrieval in the standard tier.
    pub fn retrieval_done(&mut self, id: &ObjectId, at: SimTime) -> Result<(), StorageError> {
        let obj = self.objects.get_mut(id).ok_or_else(|| StorageError::NotFound(id.clone()))?;
        obj.tier = Tier::Std;
        obj.tier_entered = at;
        obj.last_access = at;
        obj.retrieval_done_at = None;
        Ok(())
    }
}
