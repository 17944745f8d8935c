//! Shared helpers for the integration and acceptance suites: scenario
//! paths, a naive day-by-day storage-lifecycle reference, and a brute-force
//! policy evaluator. The references here recompute everything from scratch
//! so they stay independent of the engine's incremental bookkeeping.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use nimbus_core::ids::ObjectId;
use nimbus_core::scenario::ManifestRow;
use nimbus_core::simkernel::{SimTime, SECS_PER_DAY};
use nimbus_core::storagesim::{Tier, TierPolicy};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn scenario_path(name: &str) -> PathBuf {
    scenario_dir().join(name)
}

/// One object's state in the reference interpreter.
#[derive(Debug, Clone)]
struct RefObject {
    tier: Tier,
    last_access: u64,
    tier_entered: u64,
    retrieval_due: Option<u64>,
}

/// Day-by-day reference for the storage lifecycle: walks the calendar one
/// day at a time, re-deriving "seconds since last touch" per object per day
/// from raw timestamps, landing due retrievals, and applying the policy
/// chain naively. Returns end-of-day tiers in object-id order.
pub fn lifecycle_reference(
    manifest: &[ManifestRow],
    policy: &TierPolicy,
    accesses: &[(ObjectId, SimTime)],
    retrieval_secs: u64,
    days: u32,
) -> Vec<Vec<Tier>> {
    let mut objects: BTreeMap<ObjectId, RefObject> = manifest
        .iter()
        .map(|row| {
            (
                row.object.clone(),
                RefObject {
                    tier: row.initial_tier,
                    last_access: 0,
                    tier_entered: 0,
                    retrieval_due: None,
                },
            )
        })
        .collect();

    let mut events: Vec<(u64, ObjectId)> =
        accesses.iter().map(|(obj, at)| (at.secs(), obj.clone())).collect();
    events.sort();
    let mut next_event = 0usize;

    let land_due = |objects: &mut BTreeMap<ObjectId, RefObject>, now: u64| {
        for obj in objects.values_mut() {
            if let Some(due) = obj.retrieval_due {
                if due <= now {
                    obj.tier = Tier::Std;
                    obj.tier_entered = due;
                    obj.last_access = due;
                    obj.retrieval_due = None;
                }
            }
        }
    };

    let mut snapshots = Vec::with_capacity(days as usize);
    for day in 1..=u64::from(days) {
        let day_end = day * SECS_PER_DAY;

        while next_event < events.len() && events[next_event].0 <= day_end {
            let (at, ref id) = events[next_event];
            land_due(&mut objects, at);
            let obj = objects.get_mut(id).expect("access to known object");
            obj.last_access = at;
            match obj.tier {
                Tier::Glacier => {
                    obj.tier = Tier::Retrieving;
                    obj.tier_entered = at;
                    obj.retrieval_due = Some(at + retrieval_secs);
                }
                Tier::Retrieving => {} // joins the in-flight retrieval
                Tier::Std | Tier::Ia => {}
            }
            next_event += 1;
        }

        land_due(&mut objects, day_end);

        // the daily sweep: demote anything idle past its link's staleness
        for obj in objects.values_mut() {
            let Some(idx) = policy.links().iter().position(|l| l.tier == obj.tier) else {
                continue;
            };
            let Some(staleness_days) = policy.links()[idx].staleness_days else { continue };
            let clock_start = obj.last_access.max(obj.tier_entered);
            let idle_days = (day_end - clock_start) as f64 / SECS_PER_DAY as f64;
            if idle_days >= f64::from(staleness_days) {
                obj.tier = policy.links()[idx + 1].tier;
                obj.tier_entered = day_end;
            }
        }

        snapshots.push(objects.values().map(|o| o.tier).collect());
    }
    snapshots
}

/// A policy triple for the brute-force evaluator.
#[derive(Debug, Clone)]
pub struct FlatPolicy {
    pub role: String,
    pub resource: String,
    pub actions: Vec<String>,
}

/// Straight-line reference: scan every policy, match pattern by equality or
/// trailing-star prefix, allow on any hit, deny otherwise.
pub fn brute_force_allow(
    registered_roles: &[String],
    policies: &[FlatPolicy],
    role: &str,
    resource: &str,
    action: &str,
) -> bool {
    if !registered_roles.iter().any(|r| r == role) {
        return false;
    }
    for policy in policies {
        if policy.role != role {
            continue;
        }
        if !policy.actions.iter().any(|a| a == action) {
            continue;
        }
        let hit = if let Some(prefix) = policy.resource.strip_suffix('*') {
            resource.starts_with(prefix)
        } else {
            policy.resource == resource
        };
        if hit {
            return true;
        }
    }
    false
}
