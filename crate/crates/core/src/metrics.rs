//! Consumer-satisfaction scoring of a composition.
//!
//! Per slot, the satisfaction ratio (SR) counts the requests that received
//! any energy and the fulfillment ratio (FR) is the demand-weighted mean of
//! each request's fulfilled fraction. The microcell QoE blends both across
//! slots: `alpha * sum(SR_i * beta_i) + (1 - alpha) * sum(FR_i * gamma_i)`,
//! where `beta_i` is the slot's share of consumers and `gamma_i` its share of
//! required energy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    CompositionResult, EnergyRequest, EnergyService, Mah, MicrocellDemand, RequestId, TimeSlot,
};

/// Blend weight used by the experiments unless overridden.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("slot {0} has no requests, satisfaction ratio is undefined")]
    NoRequests(usize),
    #[error("slot {0} requires no energy, fulfillment ratio is undefined")]
    NoDemand(usize),
    #[error("slot {0} has no consumers")]
    NoConsumers(usize),
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("no energy is offered, utilization is undefined")]
    NoOffer,
    #[error("microcell has no slots")]
    NoSlots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotQoE {
    pub slot_index: usize,
    pub sr: f64,
    pub fr: f64,
    pub beta: f64,
    pub gamma: f64,
    pub consumer_count: usize,
    pub required_energy_mah: Mah,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoEReport {
    pub per_slot: Vec<SlotQoE>,
    pub alpha: f64,
    pub qoe: f64,
    pub energy_utilization: f64,
}

impl QoEReport {
    /// Consumer-weighted satisfaction ratio of the microcell.
    pub fn weighted_sr(&self) -> f64 {
        weighted(&self.per_slot, |s| (s.sr, s.consumer_count as f64))
    }

    /// Energy-weighted fulfillment ratio of the microcell.
    pub fn weighted_fr(&self) -> f64 {
        weighted(&self.per_slot, |s| (s.fr, s.required_energy_mah as f64))
    }
}

/// `sum(v * w) / sum(w)` with integral weights, so a ratio of 1 in every slot
/// blends to exactly 1 and rounding never leaves [0, 1].
fn weighted(slots: &[SlotQoE], f: impl Fn(&SlotQoE) -> (f64, f64)) -> f64 {
    let (num, den) = slots.iter().map(&f).fold((0.0, 0.0), |(n, d), (v, w)| (n + v * w, d + w));
    if den == 0.0 {
        0.0
    } else {
        (num / den).min(1.0)
    }
}

pub fn satisfaction_ratio(slot: &TimeSlot, result: &CompositionResult) -> Result<f64, MetricsError> {
    let received = result.received_by_request();
    slot_sr(slot, &|r| lookup(&received, r))
}

/// Ratio-of-sums form: delivered energy over required energy.
pub fn fulfillment_ratio(slot: &TimeSlot, result: &CompositionResult) -> Result<f64, MetricsError> {
    let received = result.received_by_request();
    slot_fr(slot, &|r| lookup(&received, r))
}

/// Weighted-sum form: `sum(w_i * received_i / requested_i)` with
/// `w_i = requested_i / sum(requested)`. Equal to [`fulfillment_ratio`] up
/// to rounding.
pub fn fulfillment_ratio_weighted(
    slot: &TimeSlot,
    result: &CompositionResult,
) -> Result<f64, MetricsError> {
    let received = result.received_by_request();
    let total: Mah = slot.requests.iter().map(|r| r.amount_mah).sum();
    if total == 0 {
        return Err(MetricsError::NoDemand(slot.index));
    }
    Ok(slot
        .requests
        .iter()
        .map(|r| {
            let w = r.amount_mah as f64 / total as f64;
            w * (lookup(&received, r) as f64 / r.amount_mah as f64)
        })
        .sum())
}

/// Full QoE report for `result` on `demand`.
pub fn qoe(
    demand: &MicrocellDemand,
    services: &[EnergyService],
    result: &CompositionResult,
    alpha: f64,
) -> Result<QoEReport, MetricsError> {
    let received = result.received_by_request();
    let (qoe, per_slot) = blended_qoe(demand, alpha, |r| lookup(&received, r))?;
    let energy_utilization = energy_utilization(services, result)?;
    Ok(QoEReport {
        per_slot,
        alpha,
        qoe,
        energy_utilization,
    })
}

/// Scores an arbitrary receipt function. Every scoring path in the crate goes
/// through here, so equal receipts give bit-identical QoE values.
pub fn blended_qoe(
    demand: &MicrocellDemand,
    alpha: f64,
    received: impl Fn(&EnergyRequest) -> Mah,
) -> Result<(f64, Vec<SlotQoE>), MetricsError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MetricsError::Alpha(alpha));
    }
    if demand.slots.is_empty() {
        return Err(MetricsError::NoSlots);
    }
    let total_consumers = demand.total_consumers();
    let total_required = demand.total_required_mah();

    let mut per_slot = Vec::with_capacity(demand.slots.len());
    for slot in &demand.slots {
        if slot.consumer_count == 0 {
            return Err(MetricsError::NoConsumers(slot.index));
        }
        let sr = slot_sr(slot, &received)?;
        let fr = slot_fr(slot, &received)?;
        let beta = slot.consumer_count as f64 / total_consumers as f64;
        let gamma = slot.required_energy_mah as f64 / total_required as f64;
        per_slot.push(SlotQoE {
            slot_index: slot.index,
            sr,
            fr,
            beta,
            gamma,
            consumer_count: slot.consumer_count,
            required_energy_mah: slot.required_energy_mah,
        });
    }
    let sr_part = weighted(&per_slot, |s| (s.sr, s.consumer_count as f64));
    let fr_part = weighted(&per_slot, |s| (s.fr, s.required_energy_mah as f64));
    Ok(((alpha * sr_part + (1.0 - alpha) * fr_part).min(1.0), per_slot))
}

/// Blend of microcell-wide pooled ratios: served requests over all requests
/// and delivered energy over all required energy. Coincides with the slot
/// weighted QoE whenever every consumer files a single request.
pub fn pooled_blend(
    demand: &MicrocellDemand,
    result: &CompositionResult,
    alpha: f64,
) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MetricsError::Alpha(alpha));
    }
    let received = result.received_by_request();
    let total_requests = demand.request_count();
    let total_required = demand.total_required_mah();
    if total_requests == 0 || total_required == 0 {
        return Err(MetricsError::NoSlots);
    }
    let served = demand
        .requests()
        .filter(|r| lookup(&received, r) > 0)
        .count();
    let delivered: Mah = demand.requests().map(|r| lookup(&received, r)).sum();
    Ok(alpha * served as f64 / total_requests as f64
        + (1.0 - alpha) * delivered as f64 / total_required as f64)
}

/// Delivered energy over offered energy.
pub fn energy_utilization(
    services: &[EnergyService],
    result: &CompositionResult,
) -> Result<f64, MetricsError> {
    let offered: Mah = services.iter().map(|s| s.amount_mah).sum();
    if offered == 0 {
        return Err(MetricsError::NoOffer);
    }
    Ok(result.total_granted_mah() as f64 / offered as f64)
}

fn lookup(received: &BTreeMap<RequestId, Mah>, r: &EnergyRequest) -> Mah {
    received.get(&r.request_id).copied().unwrap_or(0)
}

fn slot_sr(slot: &TimeSlot, received: &impl Fn(&EnergyRequest) -> Mah) -> Result<f64, MetricsError> {
    if slot.requests.is_empty() {
        return Err(MetricsError::NoRequests(slot.index));
    }
    let served = slot.requests.iter().filter(|r| received(r) > 0).count();
    Ok(served as f64 / slot.requests.len() as f64)
}

fn slot_fr(slot: &TimeSlot, received: &impl Fn(&EnergyRequest) -> Mah) -> Result<f64, MetricsError> {
    let requested: Mah = slot.requests.iter().map(|r| r.amount_mah).sum();
    if requested == 0 {
        return Err(MetricsError::NoDemand(slot.index));
    }
    let delivered: Mah = slot.requests.iter().map(received).sum();
    Ok(delivered as f64 / requested as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::*;
    use crate::domain::{Grant, ServiceId, Strategy};

    fn result_with(receipts: &[(u32, usize, Mah)]) -> CompositionResult {
        CompositionResult {
            strategy: Strategy::Greedy,
            threshold_mah: 0,
            grants: receipts
                .iter()
                .filter(|(_, _, a)| *a > 0)
                .map(|&(r, slot, a)| Grant {
                    slot_index: slot,
                    service_id: ServiceId(0),
                    request_id: RequestId(r),
                    amount_mah: a,
                })
                .collect(),
            unserved_demand_mah: vec![],
        }
    }

    #[test]
    fn sr_all_served() {
        let d = demand(&[&[10, 10, 10, 10]], &[]);
        let res = result_with(&[(0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 0, 10)]);
        assert_eq!(satisfaction_ratio(&d.slots[0], &res).unwrap(), 1.0);
    }

    #[test]
    fn sr_counts_partial_receipts() {
        let d = demand(&[&[10, 10, 10, 10, 10]], &[]);
        let res = result_with(&[(0, 0, 4), (2, 0, 4), (4, 0, 4)]);
        assert_eq!(satisfaction_ratio(&d.slots[0], &res).unwrap(), 0.6);
    }

    #[test]
    fn sr_half_of_fourteen() {
        let d = demand(&[&[10; 14]], &[]);
        let served: Vec<_> = (0..7).map(|r| (r, 0, 10)).collect();
        let res = result_with(&served);
        assert_eq!(satisfaction_ratio(&d.slots[0], &res).unwrap(), 0.5);
    }

    #[test]
    fn sr_undefined_without_requests() {
        let d = demand(&[&[]], &[]);
        let res = result_with(&[]);
        assert_eq!(
            satisfaction_ratio(&d.slots[0], &res),
            Err(MetricsError::NoRequests(0))
        );
        assert_eq!(fulfillment_ratio(&d.slots[0], &res), Err(MetricsError::NoDemand(0)));
    }

    #[test]
    fn fr_worked_example() {
        let d = demand(&[&[10, 20, 20, 70]], &[]);
        let res = result_with(&[(0, 0, 10), (1, 0, 20), (2, 0, 20)]);
        let fr = fulfillment_ratio(&d.slots[0], &res).unwrap();
        assert!((fr - 50.0 / 120.0).abs() < 1e-9);
        let frw = fulfillment_ratio_weighted(&d.slots[0], &res).unwrap();
        assert!((frw - fr).abs() < 1e-9);
    }

    #[test]
    fn fr_single_request_quarter() {
        let d = demand(&[&[100]], &[]);
        let res = result_with(&[(0, 0, 25)]);
        assert_eq!(fulfillment_ratio(&d.slots[0], &res).unwrap(), 0.25);
    }

    #[test]
    fn qoe_bounds() {
        let services = vec![service(0, 100, &[0, 1])];
        let d = demand(&[&[10, 20], &[30]], &services);
        let none = result_with(&[]);
        let full = result_with(&[(0, 0, 10), (1, 0, 20), (2, 1, 30)]);
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            assert_eq!(qoe(&d, &services, &none, alpha).unwrap().qoe, 0.0);
            assert!((qoe(&d, &services, &full, alpha).unwrap().qoe - 1.0).abs() < 1e-12);
        }
        assert_eq!(energy_utilization(&services, &none).unwrap(), 0.0);
        assert!((qoe(&d, &services, &full, 0.5).unwrap().energy_utilization - 0.6).abs() < 1e-12);
    }

    #[test]
    fn qoe_blend_of_half_and_forty_point_six() {
        // 0.5 * 0.50 + 0.5 * 0.40625 = 0.453125
        let q: f64 = 0.5 * 0.5 + 0.5 * 0.40625;
        assert!((q - 0.453).abs() < 0.001);
    }

    #[test]
    fn qoe_alpha_out_of_range() {
        let services = vec![service(0, 100, &[0])];
        let d = demand(&[&[10]], &services);
        let res = result_with(&[]);
        assert_eq!(qoe(&d, &services, &res, 1.5), Err(MetricsError::Alpha(1.5)));
        assert_eq!(qoe(&d, &services, &res, -0.1), Err(MetricsError::Alpha(-0.1)));
    }

    #[test]
    fn alpha_extremes_select_components() {
        let services = vec![service(0, 100, &[0, 1])];
        let d = demand(&[&[10, 30], &[60]], &services);
        let res = result_with(&[(0, 0, 5), (2, 1, 30)]);
        let r1 = qoe(&d, &services, &res, 1.0).unwrap();
        let r0 = qoe(&d, &services, &res, 0.0).unwrap();
        assert!((r1.qoe - r1.weighted_sr()).abs() < 1e-12);
        assert!((r0.qoe - r0.weighted_fr()).abs() < 1e-12);
        // sr: slot0 1/2, slot1 1; beta 2/3, 1/3 -> 2/3
        assert!((r1.qoe - 2.0 / 3.0).abs() < 1e-12);
        // fr: 35 / 100
        assert!((r0.qoe - 0.35).abs() < 1e-12);
        let betas: f64 = r1.per_slot.iter().map(|s| s.beta).sum();
        let gammas: f64 = r1.per_slot.iter().map(|s| s.gamma).sum();
        assert!((betas - 1.0).abs() < 1e-12 && (gammas - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_utilization_requires_offer() {
        assert_eq!(energy_utilization(&[], &result_with(&[])), Err(MetricsError::NoOffer));
    }
}
