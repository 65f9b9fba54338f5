//! Allocation strategies.
//!
//! Partial-Based and Demand-Based consume each slot's registered services
//! until the slot demand is met, then either fill every request or split the
//! selected energy among the slot's requests subject to a minimum chunk.
//! Greedy and Max-Min are the full-fulfillment baselines.

mod greedy;
mod maxmin;
mod partial;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    validate_instance_with, CompositionResult, EnergyRequest, EnergyService, Grant, Mah,
    MicrocellDemand, ServiceId, Strategy, ValidationReport,
};

pub use greedy::compose_greedy;
pub use maxmin::{compose_maxmin, max_min_split};
pub use partial::{compose_db, compose_pb, db_slot_order};

#[derive(Debug, Error, PartialEq)]
pub enum CompositionError {
    #[error("invalid instance:\n{0}")]
    InvalidInstance(ValidationReport),
    #[error("pool holds {available} mAh but the requests need {needed} mAh")]
    PoolShortfall { needed: Mah, available: Mah },
    #[error("partial assignment requires a non-empty pool")]
    EmptyPool,
    #[error("pool of {available} mAh covers the full demand of {needed} mAh, use full assignment")]
    PoolCoversDemand { needed: Mah, available: Mah },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Minimum partial-service chunk in mAh.
    pub threshold_mah: Mah,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy, threshold_mah: Mah) -> Self {
        Self {
            strategy,
            threshold_mah,
        }
    }

    pub fn compose(
        &self,
        demand: &MicrocellDemand,
        services: &[EnergyService],
    ) -> Result<CompositionResult, CompositionError> {
        compose(self.strategy, demand, services, self.threshold_mah)
    }
}

/// Runs `strategy` on the instance. The threshold is recorded for every
/// strategy but only shapes PB and DB.
pub fn compose(
    strategy: Strategy,
    demand: &MicrocellDemand,
    services: &[EnergyService],
    threshold_mah: Mah,
) -> Result<CompositionResult, CompositionError> {
    match strategy {
        Strategy::PartialBased => compose_pb(demand, services, threshold_mah),
        Strategy::DemandBased => compose_db(demand, services, threshold_mah),
        Strategy::Greedy => compose_greedy(demand, services),
        Strategy::MaxMin => compose_maxmin(demand, services, threshold_mah),
    }
}

/// Energy drawn from one service and earmarked for a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolEntry {
    pub service_id: ServiceId,
    pub available_mah: Mah,
}

impl PoolEntry {
    pub fn new(service_id: ServiceId, available_mah: Mah) -> Self {
        Self {
            service_id,
            available_mah,
        }
    }
}

fn pool_total(pool: &[PoolEntry]) -> Mah {
    pool.iter().map(|p| p.available_mah).sum()
}

/// Working copy of every slot's registration list.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    lists: Vec<Vec<ServiceId>>,
}

impl Registry {
    pub fn from_demand(demand: &MicrocellDemand) -> Self {
        Self {
            lists: demand
                .slots
                .iter()
                .map(|s| s.registered_services.clone())
                .collect(),
        }
    }

    pub fn registered(&self, slot: usize) -> &[ServiceId] {
        &self.lists[slot]
    }

    pub fn is_registered(&self, slot: usize, service: ServiceId) -> bool {
        self.lists[slot].contains(&service)
    }
}

/// Drops a fully consumed service from every slot's registration list.
pub fn remove_service(service: ServiceId, registry: &mut Registry) {
    for list in &mut registry.lists {
        list.retain(|&s| s != service);
    }
}

/// Per-run balances of every service, keyed by id.
#[derive(Debug, Clone)]
pub(crate) struct Balances {
    remaining: HashMap<ServiceId, Mah>,
    candidate_counts: HashMap<ServiceId, usize>,
    order: HashMap<ServiceId, usize>,
}

impl Balances {
    pub(crate) fn new(services: &[EnergyService]) -> Self {
        Self {
            remaining: services.iter().map(|s| (s.service_id, s.amount_mah)).collect(),
            candidate_counts: services
                .iter()
                .map(|s| (s.service_id, s.candidate_slots.len()))
                .collect(),
            order: services
                .iter()
                .enumerate()
                .map(|(i, s)| (s.service_id, i))
                .collect(),
        }
    }

    pub(crate) fn remaining(&self, id: ServiceId) -> Mah {
        self.remaining.get(&id).copied().unwrap_or(0)
    }

    pub(crate) fn take(&mut self, id: ServiceId, amount: Mah) {
        let r = self.remaining.get_mut(&id).expect("unknown service");
        *r -= amount;
    }

    pub(crate) fn candidate_count(&self, id: ServiceId) -> usize {
        self.candidate_counts[&id]
    }

    pub(crate) fn registration_rank(&self, id: ServiceId) -> usize {
        self.order[&id]
    }
}

pub(crate) fn check_instance(
    demand: &MicrocellDemand,
    services: &[EnergyService],
) -> Result<(), CompositionError> {
    let report = validate_instance_with(demand, services, demand.slots.len().max(1));
    if report.is_valid() {
        Ok(())
    } else {
        Err(CompositionError::InvalidInstance(report))
    }
}

/// Draws `amount` for `request` from the pool front to back, skipping
/// exhausted entries. The caller guarantees the pool holds enough.
fn draw(request: &EnergyRequest, mut amount: Mah, pool: &mut [PoolEntry], grants: &mut Vec<Grant>) {
    for entry in pool.iter_mut() {
        if amount == 0 {
            break;
        }
        if entry.available_mah == 0 {
            continue;
        }
        let take = amount.min(entry.available_mah);
        entry.available_mah -= take;
        amount -= take;
        grants.push(Grant {
            slot_index: request.slot_index,
            service_id: entry.service_id,
            request_id: request.request_id,
            amount_mah: take,
        });
    }
    debug_assert_eq!(amount, 0, "pool exhausted mid-draw");
}

/// Serves every request in full, drawing from the pool in its existing order.
pub fn assign_energy(
    requests: &[EnergyRequest],
    pool: &mut [PoolEntry],
) -> Result<Vec<Grant>, CompositionError> {
    let needed: Mah = requests.iter().map(|r| r.amount_mah).sum();
    let available = pool_total(pool);
    if available < needed {
        return Err(CompositionError::PoolShortfall { needed, available });
    }
    let mut grants = Vec::new();
    for r in requests {
        draw(r, r.amount_mah, pool, &mut grants);
    }
    Ok(grants)
}

/// Splits an insufficient pool across the slot's requests.
///
/// The pool is water-filled over the active requests: equal shares, capped at
/// each request's need, with capped surplus re-split among the rest. While the
/// smallest uncapped share is below `threshold_mah`, the latest-arriving
/// active request is dropped, skipping any request whose removal would leave
/// the remaining needs unable to absorb the whole pool. The pool is always
/// delivered in full.
pub fn assign_partial_energy(
    requests: &[EnergyRequest],
    pool: &mut [PoolEntry],
    threshold_mah: Mah,
) -> Result<Vec<Grant>, CompositionError> {
    let available = pool_total(pool);
    let needed: Mah = requests.iter().map(|r| r.amount_mah).sum();
    if available == 0 {
        return Err(CompositionError::EmptyPool);
    }
    if available >= needed {
        return Err(CompositionError::PoolCoversDemand { needed, available });
    }

    let needs: Vec<Mah> = requests.iter().map(|r| r.amount_mah).collect();
    let mut active = vec![true; requests.len()];
    let mut active_need = needed;
    let shares = loop {
        let members: Vec<usize> = (0..needs.len()).filter(|&i| active[i]).collect();
        let member_needs: Vec<Mah> = members.iter().map(|&i| needs[i]).collect();
        let (alloc, _) = water_fill(available, &member_needs);
        let min_uncapped = alloc
            .iter()
            .zip(&member_needs)
            .filter(|(a, n)| a < n)
            .map(|(a, _)| *a)
            .min();
        let short = matches!(min_uncapped, Some(m) if m < threshold_mah);
        let removable = members
            .iter()
            .rev()
            .copied()
            .find(|&i| active_need - needs[i] >= available);
        match (short, removable) {
            (true, Some(i)) => {
                active[i] = false;
                active_need -= needs[i];
            }
            _ => {
                let mut shares = vec![0; needs.len()];
                for (m, a) in members.into_iter().zip(alloc) {
                    shares[m] = a;
                }
                break shares;
            }
        }
    };

    let mut grants = Vec::new();
    for (r, share) in requests.iter().zip(shares) {
        if share > 0 {
            draw(r, share, pool, &mut grants);
        }
    }
    Ok(grants)
}

/// Integer max-min fair split of `amount` over `needs`.
///
/// Returns each entry's share (never above its need) and the undistributed
/// leftover, which is non-zero only when `amount` exceeds the total need.
/// Indivisible remainder units go to the earliest uncapped entries.
pub fn water_fill(amount: Mah, needs: &[Mah]) -> (Vec<Mah>, Mah) {
    let mut alloc = vec![0; needs.len()];
    let mut by_need: Vec<usize> = (0..needs.len()).filter(|&i| needs[i] > 0).collect();
    by_need.sort_by_key(|&i| (needs[i], i));

    let mut remaining = amount;
    let mut open = by_need.len();
    let mut cursor = 0;
    while cursor < by_need.len() {
        let i = by_need[cursor];
        if needs[i] * open as Mah > remaining {
            break;
        }
        alloc[i] = needs[i];
        remaining -= needs[i];
        open -= 1;
        cursor += 1;
    }
    if open > 0 {
        let mut uncapped: Vec<usize> = by_need[cursor..].to_vec();
        uncapped.sort_unstable();
        let base = remaining / open as Mah;
        let extra = (remaining % open as Mah) as usize;
        for (k, &i) in uncapped.iter().enumerate() {
            alloc[i] = base + Mah::from(k < extra);
        }
        remaining = 0;
    }
    (alloc, remaining)
}

/// Residual demand per slot once `grants` are delivered.
pub(crate) fn unserved(demand: &MicrocellDemand, grants: &[Grant]) -> Vec<Mah> {
    let mut delivered = vec![0; demand.slots.len()];
    for g in grants {
        delivered[g.slot_index] += g.amount_mah;
    }
    demand
        .slots
        .iter()
        .zip(delivered)
        .map(|(s, d)| s.required_energy_mah - d)
        .collect()
}
