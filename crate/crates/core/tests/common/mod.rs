#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{Duration, TimeZone, Utc};
use microcell_qoe::composition::compose;
use microcell_qoe::domain::{
    CompositionResult, ConsumerId, EnergyRequest, EnergyService, Location, Mah, MicrocellDemand,
    ProviderId, RequestId, ServiceId, Strategy, TimeSlot,
};
use microcell_qoe::metrics::qoe;
use microcell_qoe::workload::{generate, GeneratorConfig, RatioMode};
use rand::seq::SliceRandom;
use rand::Rng;

/// Thresholds drawn by the property suite: zero plus the studied range.
pub const THRESHOLDS: [Mah; 6] = [0, 10, 30, 50, 70, 90];

/// A generator config spanning small to mid-sized instances.
pub fn random_config(rng: &mut impl Rng) -> GeneratorConfig {
    let num_slots = rng.gen_range(1..=8);
    let num_requests = rng.gen_range(2 * num_slots..=120);
    let min_ratio = (1.0 / num_requests as f64).max(0.05);
    let smax = rng.gen_range(1..=num_slots.min(3));
    GeneratorConfig {
        seed: rng.gen(),
        num_slots,
        num_requests,
        service_to_request_ratio: rng.gen_range(min_ratio..=1.0),
        ratio_mode: if rng.gen_bool(0.2) { RatioMode::Energy } else { RatioMode::Count },
        slots_per_service_range: (rng.gen_range(1..=smax), smax),
        ..GeneratorConfig::default()
    }
}

/// Every invariant a composition must satisfy, checked from first principles.
/// Returns a description per broken invariant.
pub fn invariant_failures(
    strategy: Strategy,
    threshold: Mah,
    demand: &MicrocellDemand,
    services: &[EnergyService],
    result: &CompositionResult,
) -> Vec<String> {
    let mut bad = Vec::new();
    let by_id: BTreeMap<ServiceId, &EnergyService> = services.iter().map(|s| (s.service_id, s)).collect();
    let requests: BTreeMap<RequestId, &EnergyRequest> = demand.requests().map(|r| (r.request_id, r)).collect();

    let mut given: BTreeMap<ServiceId, Mah> = BTreeMap::new();
    let mut got: BTreeMap<RequestId, Mah> = BTreeMap::new();
    for g in &result.grants {
        let (Some(s), Some(r)) = (by_id.get(&g.service_id), requests.get(&g.request_id)) else {
            bad.push(format!("grant names unknown ids: {g:?}"));
            continue;
        };
        if g.amount_mah == 0 {
            bad.push(format!("zero grant {g:?}"));
        }
        if g.slot_index != r.slot_index || !s.candidate_slots.contains(&g.slot_index) {
            bad.push(format!("grant outside candidate slots: {g:?}"));
        }
        *given.entry(g.service_id).or_default() += g.amount_mah;
        *got.entry(g.request_id).or_default() += g.amount_mah;
    }
    for (id, &amount) in &given {
        if amount > by_id[id].amount_mah {
            bad.push(format!("{id} gives {amount} of {}", by_id[id].amount_mah));
        }
    }
    for (id, &amount) in &got {
        if amount > requests[id].amount_mah {
            bad.push(format!("{id} receives {amount} of {}", requests[id].amount_mah));
        }
    }

    for slot in &demand.slots {
        let delivered: Mah = slot.requests.iter().map(|r| got.get(&r.request_id).copied().unwrap_or(0)).sum();
        if result.unserved_demand_mah.get(slot.index) != Some(&(slot.required_energy_mah - delivered)) {
            bad.push(format!("slot {} unserved demand mismatch", slot.index));
        }
        if strategy.uses_threshold() && threshold > 0 {
            let recipients = slot.requests.iter().filter(|r| got.contains_key(&r.request_id)).count();
            for r in &slot.requests {
                let x = got.get(&r.request_id).copied().unwrap_or(0);
                let sole_small = recipients == 1 && delivered < threshold;
                if x > 0 && x < threshold && x != r.amount_mah && !sole_small {
                    bad.push(format!("{} gets a {x} mAh chunk below threshold {threshold}", r.request_id));
                }
            }
        }
    }

    match qoe(demand, services, result, 0.5) {
        Ok(rep) => {
            for (name, v) in [("qoe", rep.qoe), ("eu", rep.energy_utilization), ("sr", rep.weighted_sr()), ("fr", rep.weighted_fr())] {
                if !(0.0..=1.0).contains(&v) {
                    bad.push(format!("{name} = {v} outside [0, 1]"));
                }
            }
            for s in &rep.per_slot {
                if !(0.0..=1.0).contains(&s.sr) || !(0.0..=1.0).contains(&s.fr) {
                    bad.push(format!("slot {} ratios out of range", s.slot_index));
                }
            }
        }
        Err(e) => bad.push(format!("scoring failed: {e}")),
    }
    bad
}

/// Generates, composes and checks one instance per strategy, including a
/// replay of both steps from the same seed.
pub fn property_case(rng: &mut impl Rng, strategy: Strategy) -> Vec<String> {
    let config = random_config(rng);
    let threshold = *THRESHOLDS.choose(rng).unwrap();
    let (demand, services) = match generate(&config) {
        Ok(x) => x,
        Err(e) => return vec![format!("generation failed for {config:?}: {e}")],
    };
    let result = match compose(strategy, &demand, &services, threshold) {
        Ok(r) => r,
        Err(e) => return vec![format!("composition failed: {e}")],
    };
    let mut bad = invariant_failures(strategy, threshold, &demand, &services, &result);
    let (d2, s2) = generate(&config).unwrap();
    if d2 != demand || s2 != services {
        bad.push("generator is not deterministic".into());
    }
    if compose(strategy, &d2, &s2, threshold).as_ref() != Ok(&result) {
        bad.push("composition is not deterministic".into());
    }
    bad.iter_mut().for_each(|m| *m = format!("{strategy} seed {}: {m}", config.seed));
    bad
}

/// A tiny instance: 1 to 3 slots, up to 6 single-request consumers asking
/// 1 to 4 mAh, and 1 to 4 services offering 1 to 6 mAh.
pub fn tiny_instance(rng: &mut impl Rng) -> (MicrocellDemand, Vec<EnergyService>) {
    let n_slots = rng.gen_range(1..=3);
    let n_requests = rng.gen_range(n_slots..=6);
    let mut slot_of: Vec<usize> = (0..n_requests).map(|i| if i < n_slots { i } else { rng.gen_range(0..n_slots) }).collect();
    slot_of.shuffle(rng);
    slot_of.sort_unstable();

    let services: Vec<EnergyService> = (0..rng.gen_range(1..=4))
        .map(|i| {
            let mut slots: Vec<usize> = (0..n_slots).filter(|_| rng.gen_bool(0.5)).collect();
            if slots.is_empty() {
                slots.push(rng.gen_range(0..n_slots));
            }
            EnergyService {
                service_id: ServiceId(i),
                provider_id: ProviderId(i),
                amount_mah: rng.gen_range(1..=6),
                candidate_slots: slots,
                location: Location::default(),
            }
        })
        .collect();

    let start = Utc.with_ymd_and_hms(2021, 4, 8, 9, 0, 0).unwrap();
    let slots = (0..n_slots)
        .map(|k| {
            let requests = slot_of
                .iter()
                .enumerate()
                .filter(|&(_, &s)| s == k)
                .map(|(i, _)| EnergyRequest {
                    request_id: RequestId(i as u32),
                    consumer_id: ConsumerId(i as u32),
                    amount_mah: rng.gen_range(1..=4),
                    slot_index: k,
                    location: Location::default(),
                })
                .collect();
            let at = start + Duration::hours(k as i64);
            TimeSlot::new(k, at, at + Duration::hours(1), 0.0, requests)
        })
        .collect();
    (MicrocellDemand::new(slots, &services), services)
}

/// Half-and-half QoE scaled by `2 * consumers * required` to an integer.
/// Valid when every consumer files exactly one request.
pub fn scaled_objective(demand: &MicrocellDemand, received: &[Mah]) -> u128 {
    let n = demand.total_consumers() as u128;
    let re = demand.total_required_mah() as u128;
    let served = received.iter().filter(|&&x| x > 0).count() as u128;
    let delivered: u128 = received.iter().map(|&x| x as u128).sum();
    served * re + delivered * n
}

/// Best scaled objective over every integer receipt vector, with
/// feasibility decided by Hall's condition on the service/request graph.
pub fn brute_force_best(demand: &MicrocellDemand, services: &[EnergyService]) -> u128 {
    let requests: Vec<&EnergyRequest> = demand.requests().collect();
    let n = requests.len();
    let mut best = 0;
    let mut x = vec![0 as Mah; n];
    loop {
        let feasible = (1u32..1 << n).all(|subset| {
            let wanted: Mah = (0..n).filter(|j| subset >> j & 1 == 1).map(|j| x[j]).sum();
            let supply: Mah = services
                .iter()
                .filter(|s| (0..n).any(|j| subset >> j & 1 == 1 && s.candidate_slots.contains(&requests[j].slot_index)))
                .map(|s| s.amount_mah)
                .sum();
            wanted <= supply
        });
        if feasible {
            best = best.max(scaled_objective(demand, &x));
        }
        // odometer over 0..=need per request
        let mut j = 0;
        loop {
            if j == n {
                return best;
            }
            if x[j] < requests[j].amount_mah {
                x[j] += 1;
                break;
            }
            x[j] = 0;
            j += 1;
        }
    }
}

pub fn receipts(demand: &MicrocellDemand, result: &CompositionResult) -> Vec<Mah> {
    let got = result.received_by_request();
    demand.requests().map(|r| got.get(&r.request_id).copied().unwrap_or(0)).collect()
}

