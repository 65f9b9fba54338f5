//! Build a small instance by hand and print each strategy's grant list.
//!
//! cargo run --example compose_strategies

use chrono::{Duration, TimeZone, Utc};
use microcell_qoe::composition::compose;
use microcell_qoe::domain::{
    validate_composition, ConsumerId, EnergyRequest, EnergyService, Location, MicrocellDemand,
    ProviderId, RequestId, ServiceId, Strategy, TimeSlot,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let start = Utc.with_ymd_and_hms(2021, 4, 8, 12, 0, 0).unwrap();
    let services = vec![
        offer(0, 400, &[0, 1]),
        offer(1, 250, &[1]),
        offer(2, 300, &[0, 1, 2]),
    ];
    let amounts: [&[u64]; 3] = [&[300, 150], &[200, 200, 120], &[500]];
    let mut id = 0;
    let slots = amounts
        .iter()
        .enumerate()
        .map(|(k, list)| {
            let requests = list
                .iter()
                .map(|&amount_mah| {
                    id += 1;
                    EnergyRequest {
                        request_id: RequestId(id),
                        consumer_id: ConsumerId(id),
                        amount_mah,
                        slot_index: k,
                        location: Location::default(),
                    }
                })
                .collect();
            let at = start + Duration::minutes(30 * k as i64);
            TimeSlot::new(k, at, at + Duration::minutes(30), 0.0, requests)
        })
        .collect();
    let demand = MicrocellDemand::new(slots, &services);

    for strategy in Strategy::ALL {
        let result = compose(strategy, &demand, &services, 50)?;
        assert!(validate_composition(&result, &demand, &services).is_valid());
        println!("{strategy}: unserved per slot {:?}", result.unserved_demand_mah);
        for g in &result.grants {
            println!("  slot {} {} -> {} {:>4} mAh", g.slot_index, g.service_id, g.request_id, g.amount_mah);
        }
    }
    Ok(())
}

fn offer(id: u32, amount_mah: u64, slots: &[usize]) -> EnergyService {
    EnergyService {
        service_id: ServiceId(id),
        provider_id: ProviderId(id),
        amount_mah,
        candidate_slots: slots.to_vec(),
        location: Location::default(),
    }
}
