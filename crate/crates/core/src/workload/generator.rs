use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ConsumerId, DemandReward, EnergyRequest, EnergyService, Instance, Location, Mah,
    MicrocellDemand, ProviderId, RequestId, RewardModel, ServiceId, SlotRecord,
};

use super::WorkloadError;

/// How the service-to-request ratio is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// `round(ratio * num_requests)` services.
    #[default]
    Count,
    /// Services are drawn until their total energy reaches
    /// `ratio * total requested energy`.
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub num_slots: usize,
    pub slot_duration_minutes: i64,
    pub start: DateTime<Utc>,
    pub num_requests: usize,
    pub service_to_request_ratio: f64,
    pub ratio_mode: RatioMode,
    /// Energy amounts as fractions of `nominal_battery_mah`, inclusive.
    pub amount_range_pct: (f64, f64),
    pub nominal_battery_mah: Mah,
    /// Inclusive range of how many slots a service registers for.
    pub slots_per_service_range: (usize, usize),
    /// Optional relative arrival weight per slot; uniform when absent.
    pub slot_weights: Option<Vec<f64>>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_slots: 6,
            slot_duration_minutes: 60,
            start: Utc.with_ymd_and_hms(2021, 4, 8, 9, 0, 0).unwrap(),
            num_requests: 300,
            service_to_request_ratio: 0.5,
            ratio_mode: RatioMode::Count,
            amount_range_pct: (0.05, 1.0),
            nominal_battery_mah: 3000,
            slots_per_service_range: (1, 3),
            slot_weights: None,
        }
    }
}

impl GeneratorConfig {
    /// Smallest and largest energy amount a draw can produce.
    pub fn amount_bounds(&self) -> (Mah, Mah) {
        let battery = self.nominal_battery_mah as f64;
        let lo = (self.amount_range_pct.0 * battery).ceil() as Mah;
        let hi = (self.amount_range_pct.1 * battery).floor() as Mah;
        (lo.max(1), hi)
    }

    pub fn service_count(&self) -> usize {
        (self.service_to_request_ratio * self.num_requests as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::Parameter(m));
        let ratio = self.service_to_request_ratio;
        if !(ratio > 0.0 && ratio <= 1.0) {
            return bad(format!("service_to_request_ratio must lie in (0, 1], got {ratio}"));
        }
        if self.num_slots == 0 {
            return bad("num_slots must be positive".into());
        }
        if self.slot_duration_minutes <= 0 {
            return bad("slot_duration_minutes must be positive".into());
        }
        if self.num_requests < self.num_slots {
            return bad(format!(
                "num_requests ({}) must be at least num_slots ({}) so that every slot has demand",
                self.num_requests, self.num_slots
            ));
        }
        let (lo, hi) = self.amount_range_pct;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("amount_range_pct must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"));
        }
        let (alo, ahi) = self.amount_bounds();
        if alo > ahi {
            return bad("amount range contains no whole mAh value".into());
        }
        let (smin, smax) = self.slots_per_service_range;
        if !(smin >= 1 && smin <= smax && smax <= self.num_slots) {
            return bad(format!(
                "slots_per_service_range must lie within [1, {}], got ({smin}, {smax})",
                self.num_slots
            ));
        }
        if let Some(w) = &self.slot_weights {
            if w.len() != self.num_slots || w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return bad("slot_weights needs one positive weight per slot".into());
            }
        }
        if self.ratio_mode == RatioMode::Count && self.service_count() == 0 {
            return bad("ratio and request count yield zero services".into());
        }
        Ok(())
    }
}

/// Draws an instance. Identical configs give identical instances.
pub fn generate(config: &GeneratorConfig) -> Result<(MicrocellDemand, Vec<EnergyService>), WorkloadError> {
    let inst = generate_instance(config)?;
    Ok(inst.to_parts().expect("generator emits resolvable slots"))
}

pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance, WorkloadError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.amount_bounds();
    let n_slots = config.num_slots;

    let slot_of = draw_slot_assignment(config, &mut rng)?;
    let mut requests: Vec<EnergyRequest> = slot_of
        .iter()
        .enumerate()
        .map(|(i, &slot)| EnergyRequest {
            request_id: RequestId(i as u32),
            consumer_id: ConsumerId(i as u32),
            amount_mah: rng.gen_range(lo..=hi),
            slot_index: slot,
            location: random_location(&mut rng),
        })
        .collect();
    requests.sort_by_key(|r| (r.slot_index, r.request_id));

    let total_requested: Mah = requests.iter().map(|r| r.amount_mah).sum();
    let energy_target = (config.service_to_request_ratio * total_requested as f64).ceil() as Mah;
    let mut services = Vec::new();
    let mut offered: Mah = 0;
    loop {
        let done = match config.ratio_mode {
            RatioMode::Count => services.len() >= config.service_count(),
            RatioMode::Energy => !services.is_empty() && offered >= energy_target,
        };
        if done {
            break;
        }
        let id = services.len() as u32;
        let amount = rng.gen_range(lo..=hi);
        let (smin, smax) = config.slots_per_service_range;
        let k = rng.gen_range(smin..=smax);
        let mut slots = sample(&mut rng, n_slots, k).into_vec();
        slots.sort_unstable();
        offered += amount;
        services.push(EnergyService {
            service_id: ServiceId(id),
            provider_id: ProviderId(id),
            amount_mah: amount,
            candidate_slots: slots,
            location: random_location(&mut rng),
        });
    }

    let slots = (0..n_slots)
        .map(|i| {
            let start = config.start + Duration::minutes(config.slot_duration_minutes * i as i64);
            let end = start + Duration::minutes(config.slot_duration_minutes);
            let re: Mah = requests.iter().filter(|r| r.slot_index == i).map(|r| r.amount_mah).sum();
            let nc = requests.iter().filter(|r| r.slot_index == i).count();
            SlotRecord {
                index: i,
                start,
                end,
                reward: DemandReward.reward(re, nc),
            }
        })
        .collect();

    Ok(Instance {
        slots,
        requests,
        services,
    })
}

/// Slot per request, redrawn until every slot holds at least one request.
fn draw_slot_assignment(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, WorkloadError> {
    let n = config.num_slots;
    let weights = config.slot_weights.clone().unwrap_or_else(|| vec![1.0; n]);
    let dist = WeightedIndex::new(&weights).map_err(|e| WorkloadError::Parameter(e.to_string()))?;
    for _ in 0..10_000 {
        let assignment: Vec<usize> = (0..config.num_requests).map(|_| dist.sample(rng)).collect();
        let mut seen = vec![false; n];
        for &s in &assignment {
            seen[s] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok(assignment);
        }
    }
    Err(WorkloadError::Parameter(
        "could not place a request in every slot; raise num_requests or flatten slot_weights".into(),
    ))
}

fn random_location(rng: &mut ChaCha8Rng) -> Location {
    Location {
        x: rng.gen_range(0.0..100.0),
        y: rng.gen_range(0.0..100.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_instance_with;

    fn config(seed: u64, ratio: f64, requests: usize) -> GeneratorConfig {
        GeneratorConfig {
            seed,
            num_requests: requests,
            service_to_request_ratio: ratio,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn counts_and_bounds() {
        let (d, s) = generate(&config(11, 0.5, 100)).unwrap();
        assert_eq!(d.request_count(), 100);
        assert_eq!(s.len(), 50);
        assert_eq!(d.slots.len(), 6);
        for a in d.requests().map(|r| r.amount_mah).chain(s.iter().map(|s| s.amount_mah)) {
            assert!((150..=3000).contains(&a), "{a}");
        }
        assert!(s.iter().all(|s| (1..=3).contains(&s.candidate_slots.len())));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = serde_json::to_vec(&generate_instance(&config(5, 0.3, 80)).unwrap()).unwrap();
        let b = serde_json::to_vec(&generate_instance(&config(5, 0.3, 80)).unwrap()).unwrap();
        let c = serde_json::to_vec(&generate_instance(&config(6, 0.3, 80)).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn output_validates_by_recomputation() {
        for seed in 0..20 {
            let cfg = config(seed, 0.15 + 0.04 * seed as f64, 30 + seed as usize);
            let (d, s) = generate(&cfg).unwrap();
            assert!(validate_instance_with(&d, &s, 3).is_valid());
            for slot in &d.slots {
                let re: Mah = slot.requests.iter().map(|r| r.amount_mah).sum();
                let nc = slot.requests.iter().map(|r| r.consumer_id).collect::<std::collections::HashSet<_>>().len();
                assert_eq!((re, nc), (slot.required_energy_mah, slot.consumer_count));
                assert_eq!(slot.reward, re as f64);
            }
        }
    }

    #[test]
    fn energy_ratio_mode_reaches_target() {
        let cfg = GeneratorConfig { ratio_mode: RatioMode::Energy, ..config(3, 0.6, 120) };
        let (d, s) = generate(&cfg).unwrap();
        let offered: Mah = s.iter().map(|s| s.amount_mah).sum();
        assert!(offered as f64 >= 0.6 * d.total_required_mah() as f64);
    }

    #[test]
    fn rejects_bad_parameters() {
        for cfg in [
            config(0, 0.0, 100),
            config(0, 1.5, 100),
            config(0, 0.5, 3),
            GeneratorConfig { slots_per_service_range: (0, 2), ..config(0, 0.5, 100) },
            GeneratorConfig { slots_per_service_range: (2, 7), ..config(0, 0.5, 100) },
            GeneratorConfig { amount_range_pct: (0.5, 0.2), ..config(0, 0.5, 100) },
            GeneratorConfig { slot_weights: Some(vec![1.0; 5]), ..config(0, 0.5, 100) },
        ] {
            assert!(matches!(generate(&cfg), Err(WorkloadError::Parameter(_))), "{cfg:?}");
        }
    }

    #[test]
    fn slot_weights_shape_arrivals() {
        let cfg = GeneratorConfig {
            slot_weights: Some(vec![10.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
            ..config(9, 0.5, 600)
        };
        let (d, _) = generate(&cfg).unwrap();
        assert!(d.slots[0].requests.len() > 3 * d.slots[1].requests.len());
    }

    #[test]
    fn amounts_look_uniform() {
        // chi-square over 10 equal-width bins; critical value at p = 0.001, 9 dof
        let (d, s) = generate(&config(21, 1.0, 3000)).unwrap();
        let amounts: Vec<Mah> = d.requests().map(|r| r.amount_mah).chain(s.iter().map(|s| s.amount_mah)).collect();
        let mut bins = [0usize; 10];
        for a in &amounts {
            let b = (((a - 150) as f64 / 2851.0) * 10.0) as usize;
            bins[b.min(9)] += 1;
        }
        let expected = amounts.len() as f64 / 10.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }
}
