//! Microcell entities: energy services, energy requests, time slots and the
//! allocation ledger produced by a composition run.
//!
//! Energy is counted in whole mAh. All types here are immutable once an
//! instance is built; working balances live in the composition ledger.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Energy quantity in milliamp-hours.
pub type Mah = u64;

/// Largest number of candidate slots a service may register for unless a
/// caller overrides it.
pub const DEFAULT_MAX_CANDIDATE_SLOTS: usize = 3;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(ServiceId, "s");
id_newtype!(ProviderId, "p");
id_newtype!(RequestId, "r");
id_newtype!(ConsumerId, "c");

/// Planar coordinate of a device inside the microcell. Carried for dataset
/// fidelity; no strategy reads it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

/// A provider's offer of a fixed amount of energy over a set of candidate slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyService {
    pub service_id: ServiceId,
    pub provider_id: ProviderId,
    pub amount_mah: Mah,
    /// Slot indices the provider is willing to serve, in registration order.
    pub candidate_slots: Vec<usize>,
    #[serde(flatten)]
    pub location: Location,
}

/// A consumer's request for energy inside exactly one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRequest {
    pub request_id: RequestId,
    pub consumer_id: ConsumerId,
    pub amount_mah: Mah,
    pub slot_index: usize,
    #[serde(flatten)]
    pub location: Location,
}

/// One slot of the microcell energy demand.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSlot {
    pub index: usize,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    /// Opaque incentive value; never consulted by allocation.
    pub reward: f64,
    pub required_energy_mah: Mah,
    pub consumer_count: usize,
    /// Requests in arrival order.
    pub requests: Vec<EnergyRequest>,
    /// Services offered for this slot, in registration order.
    pub registered_services: Vec<ServiceId>,
}

impl TimeSlot {
    /// Builds a slot and derives `required_energy_mah` and `consumer_count`
    /// from the request list.
    pub fn new(
        index: usize,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        reward: f64,
        requests: Vec<EnergyRequest>,
    ) -> Self {
        let required_energy_mah = requests.iter().map(|r| r.amount_mah).sum();
        let consumer_count = distinct_consumers(&requests);
        Self {
            index,
            start,
            end,
            reward,
            required_energy_mah,
            consumer_count,
            requests,
            registered_services: Vec::new(),
        }
    }
}

fn distinct_consumers(requests: &[EnergyRequest]) -> usize {
    requests
        .iter()
        .map(|r| r.consumer_id)
        .collect::<HashSet<_>>()
        .len()
}

/// Computes the reward advertised for a slot. The incentive model itself is
/// external; the default advertises the slot's required energy.
pub trait RewardModel {
    fn reward(&self, required_energy_mah: Mah, consumer_count: usize) -> f64;
}

/// `reward = re`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DemandReward;

impl RewardModel for DemandReward {
    fn reward(&self, required_energy_mah: Mah, _consumer_count: usize) -> f64 {
        required_energy_mah as f64
    }
}

/// Time-slotted energy demand of a microcell over its interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrocellDemand {
    pub slots: Vec<TimeSlot>,
}

impl MicrocellDemand {
    /// Wraps `slots` and fills every slot's registration list from the
    /// services' candidate slots, preserving the order of `services`.
    /// Candidate indices that do not resolve are skipped here and reported by
    /// [`validate_instance`].
    pub fn new(mut slots: Vec<TimeSlot>, services: &[EnergyService]) -> Self {
        for slot in &mut slots {
            slot.registered_services.clear();
        }
        for service in services {
            let mut seen = BTreeSet::new();
            for &idx in &service.candidate_slots {
                if idx < slots.len() && seen.insert(idx) {
                    slots[idx].registered_services.push(service.service_id);
                }
            }
        }
        Self { slots }
    }

    /// Overall clock span covered by the slots.
    pub fn interval(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        let first = self.slots.first()?;
        let last = self.slots.last()?;
        Some((first.start, last.end))
    }

    pub fn total_required_mah(&self) -> Mah {
        self.slots.iter().map(|s| s.required_energy_mah).sum()
    }

    pub fn total_consumers(&self) -> usize {
        self.slots.iter().map(|s| s.consumer_count).sum()
    }

    pub fn requests(&self) -> impl Iterator<Item = &EnergyRequest> {
        self.slots.iter().flat_map(|s| s.requests.iter())
    }

    pub fn request_count(&self) -> usize {
        self.slots.iter().map(|s| s.requests.len()).sum()
    }
}

/// Label of an allocation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Partial-Based.
    #[serde(rename = "PB", alias = "pb")]
    PartialBased,
    /// Demand-Based.
    #[serde(rename = "DB", alias = "db")]
    DemandBased,
    /// First-come first-served with full fulfillment.
    #[serde(rename = "GREEDY", alias = "greedy")]
    Greedy,
    /// Max-min split of flexible services across slots.
    #[serde(rename = "MAXMIN", alias = "maxmin")]
    MaxMin,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::PartialBased,
        Strategy::DemandBased,
        Strategy::Greedy,
        Strategy::MaxMin,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::PartialBased => "PB",
            Strategy::DemandBased => "DB",
            Strategy::Greedy => "GREEDY",
            Strategy::MaxMin => "MAXMIN",
        }
    }

    /// Whether the partial-service threshold influences this strategy.
    pub fn uses_threshold(self) -> bool {
        matches!(self, Strategy::PartialBased | Strategy::DemandBased)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pb" | "partial" | "partial-based" => Ok(Strategy::PartialBased),
            "db" | "demand" | "demand-based" => Ok(Strategy::DemandBased),
            "greedy" | "fcfs" => Ok(Strategy::Greedy),
            "maxmin" | "max-min" => Ok(Strategy::MaxMin),
            other => Err(format!("unknown strategy `{other}` (expected pb, db, greedy, maxmin)")),
        }
    }
}

/// One entry of the allocation ledger: `amount_mah` of `service_id` delivered
/// to `request_id` during slot `slot_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Grant {
    pub slot_index: usize,
    pub service_id: ServiceId,
    pub request_id: RequestId,
    pub amount_mah: Mah,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionResult {
    #[serde(rename = "strategy_name")]
    pub strategy: Strategy,
    pub threshold_mah: Mah,
    pub grants: Vec<Grant>,
    /// Residual demand per slot, indexed by slot index.
    pub unserved_demand_mah: Vec<Mah>,
}

impl CompositionResult {
    /// Total energy received by each request that got any.
    pub fn received_by_request(&self) -> BTreeMap<RequestId, Mah> {
        let mut out = BTreeMap::new();
        for g in &self.grants {
            *out.entry(g.request_id).or_insert(0) += g.amount_mah;
        }
        out
    }

    pub fn granted_by_service(&self) -> BTreeMap<ServiceId, Mah> {
        let mut out = BTreeMap::new();
        for g in &self.grants {
            *out.entry(g.service_id).or_insert(0) += g.amount_mah;
        }
        out
    }

    pub fn total_granted_mah(&self) -> Mah {
        self.grants.iter().map(|g| g.amount_mah).sum()
    }
}

// ---------------------------------------------------------------------------
// Interchange format

/// Slot row of the instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub index: usize,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub reward: f64,
}

/// The instance JSON document shared by the generator, the ingester, the
/// strategies and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub slots: Vec<SlotRecord>,
    pub requests: Vec<EnergyRequest>,
    pub services: Vec<EnergyService>,
}

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("slot record at position {position} carries index {index}")]
    SlotOrder { position: usize, index: usize },
    #[error("request {request} refers to slot {slot_index}, which does not exist")]
    UnknownSlot {
        request: RequestId,
        slot_index: usize,
    },
}

impl Instance {
    pub fn from_parts(demand: &MicrocellDemand, services: &[EnergyService]) -> Self {
        Self {
            slots: demand
                .slots
                .iter()
                .map(|s| SlotRecord {
                    index: s.index,
                    start: s.start,
                    end: s.end,
                    reward: s.reward,
                })
                .collect(),
            requests: demand.requests().cloned().collect(),
            services: services.to_vec(),
        }
    }

    /// Resolves requests into their slots. Each slot record's `index` must
    /// equal its position.
    pub fn to_parts(&self) -> Result<(MicrocellDemand, Vec<EnergyService>), InstanceError> {
        let mut grouped: Vec<Vec<EnergyRequest>> = vec![Vec::new(); self.slots.len()];
        for (position, rec) in self.slots.iter().enumerate() {
            if rec.index != position {
                return Err(InstanceError::SlotOrder {
                    position,
                    index: rec.index,
                });
            }
        }
        for req in &self.requests {
            let bucket = grouped
                .get_mut(req.slot_index)
                .ok_or(InstanceError::UnknownSlot {
                    request: req.request_id,
                    slot_index: req.slot_index,
                })?;
            bucket.push(req.clone());
        }
        let slots = self
            .slots
            .iter()
            .zip(grouped)
            .map(|(rec, reqs)| TimeSlot::new(rec.index, rec.start, rec.end, rec.reward, reqs))
            .collect();
        Ok((MicrocellDemand::new(slots, &self.services), self.services.clone()))
    }
}

// ---------------------------------------------------------------------------
// Validation

/// A single broken invariant, naming the offending entity.
#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    #[error("duplicate service id {0}")]
    DuplicateService(ServiceId),
    #[error("service {0} offers no energy")]
    ServiceZeroAmount(ServiceId),
    #[error("service {0} has no candidate slots")]
    ServiceNoCandidateSlots(ServiceId),
    #[error("service {service} lists slot {slot} more than once")]
    ServiceDuplicateSlot { service: ServiceId, slot: usize },
    #[error("service {service} lists unknown slot {slot}")]
    ServiceUnknownSlot { service: ServiceId, slot: usize },
    #[error("service {service} registers {count} slots, more than the maximum {max}")]
    ServiceTooManySlots {
        service: ServiceId,
        count: usize,
        max: usize,
    },
    #[error("duplicate request id {0}")]
    DuplicateRequest(RequestId),
    #[error("request {0} asks for no energy")]
    RequestZeroAmount(RequestId),
    #[error("request {request} claims slot {claimed} but is listed in slot {listed}")]
    RequestSlotMismatch {
        request: RequestId,
        claimed: usize,
        listed: usize,
    },
    #[error("slot at position {position} carries index {index}")]
    SlotIndexMismatch { position: usize, index: usize },
    #[error("slot {0} has an empty or reversed duration")]
    SlotEmptyDuration(usize),
    #[error("slot {0} starts before the previous slot ends")]
    SlotOverlap(usize),
    #[error("slot {slot} stores re = {stored} but its requests sum to {actual}")]
    SlotRequiredEnergyMismatch { slot: usize, stored: Mah, actual: Mah },
    #[error("slot {slot} stores nc = {stored} but has {actual} distinct consumers")]
    SlotConsumerCountMismatch {
        slot: usize,
        stored: usize,
        actual: usize,
    },
    #[error("slot {0} has no required energy")]
    SlotZeroDemand(usize),
    #[error("slot {slot} registration list disagrees with service candidate slots")]
    SlotRegistrationMismatch { slot: usize },
    #[error("grant #{grant} has zero amount")]
    GrantZeroAmount { grant: usize },
    #[error("grant #{grant} names unknown service {service}")]
    GrantUnknownService { grant: usize, service: ServiceId },
    #[error("grant #{grant} names unknown request {request}")]
    GrantUnknownRequest { grant: usize, request: RequestId },
    #[error("grant #{grant} uses service {service} in slot {slot}, outside its candidate slots")]
    GrantSlotNotCandidate {
        grant: usize,
        service: ServiceId,
        slot: usize,
    },
    #[error("grant #{grant} serves request {request} in slot {slot}, but the request lives in slot {request_slot}")]
    GrantSlotMismatch {
        grant: usize,
        request: RequestId,
        slot: usize,
        request_slot: usize,
    },
    #[error("service {service} granted {granted} mAh of {amount} mAh")]
    ServiceOverdrawn {
        service: ServiceId,
        granted: Mah,
        amount: Mah,
    },
    #[error("request {request} received {received} mAh of {amount} mAh")]
    RequestOverfilled {
        request: RequestId,
        received: Mah,
        amount: Mah,
    },
    #[error("request {request} received a {received} mAh chunk, below threshold {threshold} mAh")]
    ChunkBelowThreshold {
        request: RequestId,
        received: Mah,
        threshold: Mah,
    },
    #[error("slot {slot} records {recorded} mAh unserved, actual residual is {actual} mAh")]
    UnservedMismatch {
        slot: usize,
        recorded: Mah,
        actual: Mah,
    },
}

/// Every violation found by a validation pass; empty when valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// Instance checks with the default candidate-slot cap.
pub fn validate_instance(demand: &MicrocellDemand, services: &[EnergyService]) -> ValidationReport {
    validate_instance_with(demand, services, DEFAULT_MAX_CANDIDATE_SLOTS)
}

pub fn validate_instance_with(
    demand: &MicrocellDemand,
    services: &[EnergyService],
    max_candidate_slots: usize,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n_slots = demand.slots.len();

    let mut service_ids = HashSet::new();
    for s in services {
        if !service_ids.insert(s.service_id) {
            report.push(Violation::DuplicateService(s.service_id));
        }
        if s.amount_mah == 0 {
            report.push(Violation::ServiceZeroAmount(s.service_id));
        }
        if s.candidate_slots.is_empty() {
            report.push(Violation::ServiceNoCandidateSlots(s.service_id));
        }
        if s.candidate_slots.len() > max_candidate_slots {
            report.push(Violation::ServiceTooManySlots {
                service: s.service_id,
                count: s.candidate_slots.len(),
                max: max_candidate_slots,
            });
        }
        let mut seen = HashSet::new();
        for &slot in &s.candidate_slots {
            if !seen.insert(slot) {
                report.push(Violation::ServiceDuplicateSlot {
                    service: s.service_id,
                    slot,
                });
            }
            if slot >= n_slots {
                report.push(Violation::ServiceUnknownSlot {
                    service: s.service_id,
                    slot,
                });
            }
        }
    }

    let mut request_ids = HashSet::new();
    let mut previous_end = None;
    for (position, slot) in demand.slots.iter().enumerate() {
        if slot.index != position {
            report.push(Violation::SlotIndexMismatch {
                position,
                index: slot.index,
            });
        }
        if slot.start >= slot.end {
            report.push(Violation::SlotEmptyDuration(position));
        }
        if let Some(end) = previous_end {
            if slot.start < end {
                report.push(Violation::SlotOverlap(position));
            }
        }
        previous_end = Some(slot.end);

        for r in &slot.requests {
            if !request_ids.insert(r.request_id) {
                report.push(Violation::DuplicateRequest(r.request_id));
            }
            if r.amount_mah == 0 {
                report.push(Violation::RequestZeroAmount(r.request_id));
            }
            if r.slot_index != position {
                report.push(Violation::RequestSlotMismatch {
                    request: r.request_id,
                    claimed: r.slot_index,
                    listed: position,
                });
            }
        }

        let actual_re: Mah = slot.requests.iter().map(|r| r.amount_mah).sum();
        if actual_re != slot.required_energy_mah {
            report.push(Violation::SlotRequiredEnergyMismatch {
                slot: position,
                stored: slot.required_energy_mah,
                actual: actual_re,
            });
        }
        let actual_nc = distinct_consumers(&slot.requests);
        if actual_nc != slot.consumer_count {
            report.push(Violation::SlotConsumerCountMismatch {
                slot: position,
                stored: slot.consumer_count,
                actual: actual_nc,
            });
        }
        if slot.required_energy_mah == 0 {
            report.push(Violation::SlotZeroDemand(position));
        }

        let expected: Vec<ServiceId> = services
            .iter()
            .filter(|s| s.candidate_slots.contains(&position))
            .map(|s| s.service_id)
            .collect();
        if expected != slot.registered_services {
            report.push(Violation::SlotRegistrationMismatch { slot: position });
        }
    }

    report
}

/// Ledger checks for a composition on a valid instance: conservation,
/// no-overfill, slot membership, the partial-service threshold and the
/// recorded residuals.
///
/// The threshold rule (threshold-using strategies only) accepts a request's
/// total receipt when it is at least the threshold, when it completes the
/// request, or when the request is the sole recipient of a slot whose entire
/// delivered energy is below the threshold.
pub fn validate_composition(
    result: &CompositionResult,
    demand: &MicrocellDemand,
    services: &[EnergyService],
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let service_by_id: BTreeMap<ServiceId, &EnergyService> =
        services.iter().map(|s| (s.service_id, s)).collect();
    let request_by_id: BTreeMap<RequestId, &EnergyRequest> =
        demand.requests().map(|r| (r.request_id, r)).collect();

    for (i, g) in result.grants.iter().enumerate() {
        if g.amount_mah == 0 {
            report.push(Violation::GrantZeroAmount { grant: i });
        }
        match service_by_id.get(&g.service_id) {
            None => report.push(Violation::GrantUnknownService {
                grant: i,
                service: g.service_id,
            }),
            Some(s) if !s.candidate_slots.contains(&g.slot_index) => {
                report.push(Violation::GrantSlotNotCandidate {
                    grant: i,
                    service: g.service_id,
                    slot: g.slot_index,
                })
            }
            Some(_) => {}
        }
        match request_by_id.get(&g.request_id) {
            None => report.push(Violation::GrantUnknownRequest {
                grant: i,
                request: g.request_id,
            }),
            Some(r) if r.slot_index != g.slot_index => {
                report.push(Violation::GrantSlotMismatch {
                    grant: i,
                    request: g.request_id,
                    slot: g.slot_index,
                    request_slot: r.slot_index,
                })
            }
            Some(_) => {}
        }
    }

    for (id, granted) in result.granted_by_service() {
        if let Some(s) = service_by_id.get(&id) {
            if granted > s.amount_mah {
                report.push(Violation::ServiceOverdrawn {
                    service: id,
                    granted,
                    amount: s.amount_mah,
                });
            }
        }
    }

    let received = result.received_by_request();
    for (&id, &got) in &received {
        if let Some(r) = request_by_id.get(&id) {
            if got > r.amount_mah {
                report.push(Violation::RequestOverfilled {
                    request: id,
                    received: got,
                    amount: r.amount_mah,
                });
            }
        }
    }

    if result.strategy.uses_threshold() && result.threshold_mah > 0 {
        for slot in &demand.slots {
            let recipients: Vec<(&EnergyRequest, Mah)> = slot
                .requests
                .iter()
                .filter_map(|r| received.get(&r.request_id).map(|&m| (r, m)))
                .collect();
            let slot_total: Mah = recipients.iter().map(|(_, m)| m).sum();
            let sole_small_pool = recipients.len() == 1 && slot_total < result.threshold_mah;
            for (r, got) in recipients {
                let ok = got >= result.threshold_mah || got == r.amount_mah || sole_small_pool;
                if !ok {
                    report.push(Violation::ChunkBelowThreshold {
                        request: r.request_id,
                        received: got,
                        threshold: result.threshold_mah,
                    });
                }
            }
        }
    }

    for slot in &demand.slots {
        let delivered: Mah = slot
            .requests
            .iter()
            .filter_map(|r| received.get(&r.request_id))
            .sum();
        let actual = slot.required_energy_mah.saturating_sub(delivered);
        let recorded = result
            .unserved_demand_mah
            .get(slot.index)
            .copied()
            .unwrap_or(slot.required_energy_mah);
        if recorded != actual {
            report.push(Violation::UnservedMismatch {
                slot: slot.index,
                recorded,
                actual,
            });
        }
    }

    report
}
