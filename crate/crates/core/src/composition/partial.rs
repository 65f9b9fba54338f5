use crate::domain::{CompositionResult, EnergyService, Mah, MicrocellDemand, ServiceId, Strategy};

use super::{
    assign_energy, assign_partial_energy, check_instance, remove_service, unserved, Balances,
    CompositionError, PoolEntry, Registry,
};

/// Partial-Based composition: slots in chronological order, registered
/// services in registration order.
pub fn compose_pb(
    demand: &MicrocellDemand,
    services: &[EnergyService],
    threshold_mah: Mah,
) -> Result<CompositionResult, CompositionError> {
    check_instance(demand, services)?;
    let order: Vec<usize> = (0..demand.slots.len()).collect();
    Ok(run(
        Strategy::PartialBased,
        demand,
        services,
        threshold_mah,
        &order,
        |ids, _| ids.to_vec(),
    ))
}

/// Demand-Based composition: slots by descending consumer count, then
/// descending required energy; within a slot the least flexible services
/// (fewest candidate slots) are consumed first.
pub fn compose_db(
    demand: &MicrocellDemand,
    services: &[EnergyService],
    threshold_mah: Mah,
) -> Result<CompositionResult, CompositionError> {
    check_instance(demand, services)?;
    let order = db_slot_order(demand);
    Ok(run(
        Strategy::DemandBased,
        demand,
        services,
        threshold_mah,
        &order,
        |ids, balances| {
            let mut sorted = ids.to_vec();
            sorted.sort_by_key(|&id| (balances.candidate_count(id), balances.registration_rank(id)));
            sorted
        },
    ))
}

/// Slot processing order used by Demand-Based composition:
/// `(nc desc, re desc, index asc)`.
pub fn db_slot_order(demand: &MicrocellDemand) -> Vec<usize> {
    let mut order: Vec<usize> = (0..demand.slots.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&demand.slots[a], &demand.slots[b]);
        sb.consumer_count
            .cmp(&sa.consumer_count)
            .then(sb.required_energy_mah.cmp(&sa.required_energy_mah))
            .then(a.cmp(&b))
    });
    order
}

fn run(
    strategy: Strategy,
    demand: &MicrocellDemand,
    services: &[EnergyService],
    threshold_mah: Mah,
    slot_order: &[usize],
    service_order: impl Fn(&[ServiceId], &Balances) -> Vec<ServiceId>,
) -> CompositionResult {
    let mut registry = Registry::from_demand(demand);
    let mut balances = Balances::new(services);
    let mut grants = Vec::new();

    for &idx in slot_order {
        let slot = &demand.slots[idx];
        let mut outstanding = slot.required_energy_mah;
        let mut pool = Vec::new();
        for id in service_order(registry.registered(idx), &balances) {
            if outstanding == 0 {
                break;
            }
            let take = balances.remaining(id).min(outstanding);
            if take == 0 {
                continue;
            }
            outstanding -= take;
            balances.take(id, take);
            pool.push(PoolEntry::new(id, take));
            if balances.remaining(id) == 0 {
                remove_service(id, &mut registry);
            }
        }

        let slot_grants = if outstanding == 0 {
            assign_energy(&slot.requests, &mut pool)
        } else if pool.is_empty() {
            Ok(Vec::new())
        } else {
            assign_partial_energy(&slot.requests, &mut pool, threshold_mah)
        };
        grants.extend(slot_grants.expect("pool sized to the slot demand"));
    }

    CompositionResult {
        strategy,
        threshold_mah,
        unserved_demand_mah: unserved(demand, &grants),
        grants,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::*;
    use crate::domain::{validate_composition, Grant, RequestId};
    use crate::metrics::{qoe, satisfaction_ratio, fulfillment_ratio};

    #[test]
    fn exact_match_single_slot() {
        let services = vec![service(0, 100, &[0])];
        let d = demand(&[&[100]], &services);
        let res = compose_pb(&d, &services, 10).unwrap();
        assert_eq!(
            res.grants,
            vec![Grant { slot_index: 0, service_id: ServiceId(0), request_id: RequestId(0), amount_mah: 100 }]
        );
        let report = qoe(&d, &services, &res, 0.5).unwrap();
        assert_eq!(report.qoe, 1.0);
        assert_eq!(res.unserved_demand_mah, vec![0]);
    }

    #[test]
    fn two_requests_share_one_service() {
        let services = vec![service(0, 100, &[0])];
        let d = demand(&[&[100, 100]], &services);
        let res = compose_pb(&d, &services, 10).unwrap();
        assert_eq!(res.grants.iter().map(|g| g.amount_mah).collect::<Vec<_>>(), vec![50, 50]);
        assert_eq!(satisfaction_ratio(&d.slots[0], &res).unwrap(), 1.0);
        assert_eq!(fulfillment_ratio(&d.slots[0], &res).unwrap(), 0.5);
    }

    #[test]
    fn earlier_slot_wins_shared_service() {
        let services = vec![service(0, 100, &[0, 1])];
        let d = demand(&[&[100], &[100]], &services);
        let res = compose_pb(&d, &services, 10).unwrap();
        assert_eq!(res.grants.len(), 1);
        assert_eq!(res.grants[0].slot_index, 0);
        assert_eq!(res.unserved_demand_mah, vec![0, 100]);
    }

    #[test]
    fn partially_used_service_carries_residual() {
        let services = vec![service(0, 150, &[0, 1])];
        let d = demand(&[&[100], &[100]], &services);
        let res = compose_pb(&d, &services, 10).unwrap();
        assert_eq!(res.grants.iter().map(|g| (g.slot_index, g.amount_mah)).collect::<Vec<_>>(), vec![(0, 100), (1, 50)]);
    }

    #[test]
    fn db_prefers_more_consumers_over_more_energy() {
        let services = vec![service(0, 500, &[0, 1])];
        // slot 0: 2 consumers, 800 mAh; slot 1: 5 consumers, 500 mAh
        let d = demand(&[&[400, 400], &[100; 5]], &services);
        assert_eq!(db_slot_order(&d), vec![1, 0]);
        let res = compose_db(&d, &services, 10).unwrap();
        assert!(res.grants.iter().all(|g| g.slot_index == 1));
        assert_eq!(res.total_granted_mah(), 500);
    }

    #[test]
    fn db_consumes_least_connected_first() {
        let services = vec![service(1, 100, &[0, 1, 2]), service(2, 100, &[0])];
        let d = demand(&[&[100], &[10], &[10]], &services);
        let res = compose_db(&d, &services, 10).unwrap();
        let slot0: Vec<_> = res.grants.iter().filter(|g| g.slot_index == 0).collect();
        assert_eq!(slot0.len(), 1);
        assert_eq!(slot0[0].service_id, ServiceId(2));
        // the flexible service survives for the later slots
        assert_eq!(res.unserved_demand_mah, vec![0, 0, 0]);
    }

    #[test]
    fn db_slot_order_ties_break_on_energy_then_index() {
        let d = demand(&[&[10, 10], &[10, 30], &[25, 20], &[5]], &[]);
        assert_eq!(db_slot_order(&d), vec![2, 1, 0, 3]);
    }

    #[test]
    fn db_equals_pb_for_inflexible_services() {
        let services = vec![service(0, 70, &[0]), service(1, 30, &[1]), service(2, 40, &[0])];
        let d = demand(&[&[50, 50, 50], &[20, 30]], &services);
        let mut pb = compose_pb(&d, &services, 10).unwrap().grants;
        let mut db = compose_db(&d, &services, 10).unwrap().grants;
        pb.sort();
        db.sort();
        assert_eq!(pb, db);
    }

    #[test]
    fn outputs_validate() {
        let services = vec![
            service(0, 120, &[0, 1]),
            service(1, 35, &[1, 2]),
            service(2, 300, &[2]),
        ];
        let d = demand(&[&[50, 90, 40], &[200, 15], &[60]], &services);
        for res in [compose_pb(&d, &services, 10).unwrap(), compose_db(&d, &services, 10).unwrap()] {
            assert!(validate_composition(&res, &d, &services).is_valid());
        }
    }

    #[test]
    fn invalid_instance_is_rejected() {
        let services = vec![service(0, 100, &[0])];
        let d = demand(&[&[10], &[]], &services);
        assert!(matches!(compose_pb(&d, &services, 10), Err(CompositionError::InvalidInstance(_))));
    }
}
