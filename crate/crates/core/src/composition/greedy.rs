use crate::domain::{CompositionResult, EnergyRequest, EnergyService, Grant, MicrocellDemand, Strategy};

use super::{check_instance, draw, pool_total, unserved, Balances, CompositionError, PoolEntry};

/// First-come first-served baseline. Slots run in chronological order and each
/// slot draws on its registered services in registration order. Requests are
/// served in arrival order and only in full; a request the remaining pool
/// cannot cover is skipped. Unused energy stays with its service for later
/// slots.
pub fn compose_greedy(
    demand: &MicrocellDemand,
    services: &[EnergyService],
) -> Result<CompositionResult, CompositionError> {
    check_instance(demand, services)?;
    let mut balances = Balances::new(services);
    let mut grants = Vec::new();

    for slot in &demand.slots {
        let mut pool: Vec<PoolEntry> = slot
            .registered_services
            .iter()
            .map(|&id| PoolEntry::new(id, balances.remaining(id)))
            .filter(|p| p.available_mah > 0)
            .collect();
        let before: Vec<_> = pool.clone();
        fill_in_full(&slot.requests, &mut pool, &mut grants);
        for (b, a) in before.iter().zip(&pool) {
            balances.take(b.service_id, b.available_mah - a.available_mah);
        }
    }

    Ok(CompositionResult {
        strategy: Strategy::Greedy,
        threshold_mah: 0,
        unserved_demand_mah: unserved(demand, &grants),
        grants,
    })
}

/// Full-fulfillment pass used by Greedy and by the second phase of Max-Min.
pub(super) fn fill_in_full(
    requests: &[EnergyRequest],
    pool: &mut [PoolEntry],
    grants: &mut Vec<Grant>,
) {
    let mut left = pool_total(pool);
    for r in requests {
        if r.amount_mah <= left {
            draw(r, r.amount_mah, pool, grants);
            left -= r.amount_mah;
        }
    }
}
