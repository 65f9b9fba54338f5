use crate::domain::{CompositionResult, EnergyService, Mah, MicrocellDemand, Strategy};

use super::greedy::fill_in_full;
use super::{check_instance, unserved, water_fill, CompositionError, PoolEntry};

/// Max-Min baseline.
///
/// Phase one earmarks energy per slot: single-slot services go wholly to
/// their slot, then every flexible service (in registration order) is
/// water-filled across its candidate slots against their unmet demand. Phase
/// two serves each slot's requests in full, in arrival order, from the
/// earmarked pool. The threshold is recorded but unused.
pub fn compose_maxmin(
    demand: &MicrocellDemand,
    services: &[EnergyService],
    threshold_mah: Mah,
) -> Result<CompositionResult, CompositionError> {
    check_instance(demand, services)?;
    let pools = max_min_split(demand, services);
    let mut grants = Vec::new();
    for (slot, mut pool) in demand.slots.iter().zip(pools) {
        fill_in_full(&slot.requests, &mut pool, &mut grants);
    }
    Ok(CompositionResult {
        strategy: Strategy::MaxMin,
        threshold_mah,
        unserved_demand_mah: unserved(demand, &grants),
        grants,
    })
}

/// Phase one of Max-Min: energy earmarked per slot, each pool ordered by
/// service registration order.
pub fn max_min_split(demand: &MicrocellDemand, services: &[EnergyService]) -> Vec<Vec<PoolEntry>> {
    let n = demand.slots.len();
    let mut unmet: Vec<Mah> = demand.slots.iter().map(|s| s.required_energy_mah).collect();
    let mut earmarked: Vec<Vec<(usize, PoolEntry)>> = vec![Vec::new(); n];

    for (rank, s) in services.iter().enumerate() {
        if let [slot] = s.candidate_slots[..] {
            earmarked[slot].push((rank, PoolEntry::new(s.service_id, s.amount_mah)));
            unmet[slot] = unmet[slot].saturating_sub(s.amount_mah);
        }
    }
    for (rank, s) in services.iter().enumerate() {
        if s.candidate_slots.len() < 2 {
            continue;
        }
        let needs: Vec<Mah> = s.candidate_slots.iter().map(|&i| unmet[i]).collect();
        let (shares, _leftover) = water_fill(s.amount_mah, &needs);
        for (&slot, share) in s.candidate_slots.iter().zip(shares) {
            if share > 0 {
                earmarked[slot].push((rank, PoolEntry::new(s.service_id, share)));
                unmet[slot] -= share;
            }
        }
    }

    earmarked
        .into_iter()
        .map(|mut entries| {
            entries.sort_by_key(|(rank, _)| *rank);
            entries.into_iter().map(|(_, e)| e).collect()
        })
        .collect()
}
