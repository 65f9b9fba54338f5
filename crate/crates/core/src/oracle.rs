//! Exhaustive reference allocator for tiny instances.
//!
//! Energy is enumerated in units of `quantum` mAh. The reachable set of
//! per-request receipt vectors is built one service at a time (each service
//! may split its units among requests in its candidate slots, or keep them),
//! every reachable vector is scored with the shared QoE routine, and the best
//! one is realised as a grant list.
//!
//! On quantisation: QoE is piecewise linear in the receipts, but the
//! satisfaction ratio jumps as soon as a request receives anything. A quantum
//! coarser than 1 mAh can therefore miss allocations that hand small slivers
//! to many requests, so dominance over integer-mAh heuristics is only
//! guaranteed at `quantum = 1`.
//!
//! Ties are broken by the smallest dense allocation matrix: rows are services
//! in instance order, columns are requests in arrival order, compared
//! lexicographically.

use std::collections::HashSet;

use thiserror::Error;

use crate::composition::unserved;
use crate::domain::{CompositionResult, EnergyService, Grant, Mah, MicrocellDemand, Strategy};
use crate::metrics::{blended_qoe, MetricsError};

/// Limits on instance size for exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_slots: usize,
    pub max_services: usize,
    pub max_requests: usize,
    pub amount_quantum_mah: Mah,
}

impl OracleBudget {
    pub fn new(amount_quantum_mah: Mah) -> Self {
        Self {
            max_slots: 3,
            max_services: 4,
            max_requests: 6,
            amount_quantum_mah,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance has {actual} {what}, budget allows {limit}")]
    Budget {
        what: &'static str,
        actual: usize,
        limit: usize,
    },
    #[error("quantum must be positive")]
    ZeroQuantum,
    #[error("amount {0} mAh is not a multiple of the quantum {1} mAh")]
    Indivisible(Mah, Mah),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Maximum achievable QoE together with an allocation attaining it.
pub fn optimal_qoe(
    demand: &MicrocellDemand,
    services: &[EnergyService],
    alpha: f64,
    quantum: Mah,
) -> Result<(CompositionResult, f64), OracleError> {
    optimal_qoe_within(demand, services, alpha, OracleBudget::new(quantum))
}

pub fn optimal_qoe_within(
    demand: &MicrocellDemand,
    services: &[EnergyService],
    alpha: f64,
    budget: OracleBudget,
) -> Result<(CompositionResult, f64), OracleError> {
    let q = budget.amount_quantum_mah;
    if q == 0 {
        return Err(OracleError::ZeroQuantum);
    }
    for (what, actual, limit) in [
        ("slots", demand.slots.len(), budget.max_slots),
        ("services", services.len(), budget.max_services),
        ("requests", demand.request_count(), budget.max_requests),
    ] {
        if actual > limit {
            return Err(OracleError::Budget {
                what,
                actual,
                limit,
            });
        }
    }
    let requests: Vec<_> = demand.requests().collect();
    for a in requests
        .iter()
        .map(|r| r.amount_mah)
        .chain(services.iter().map(|s| s.amount_mah))
    {
        if a % q != 0 {
            return Err(OracleError::Indivisible(a, q));
        }
    }

    let caps: Vec<u32> = requests.iter().map(|r| (r.amount_mah / q) as u32).collect();
    let units: Vec<u32> = services.iter().map(|s| (s.amount_mah / q) as u32).collect();
    let compatible: Vec<Vec<usize>> = services
        .iter()
        .map(|s| {
            (0..requests.len())
                .filter(|&j| s.candidate_slots.contains(&requests[j].slot_index))
                .collect()
        })
        .collect();

    // suffix[k] = receipt vectors reachable using services k.. only
    let mut suffix: Vec<HashSet<Vec<u32>>> = vec![HashSet::new(); services.len() + 1];
    suffix[services.len()].insert(vec![0; requests.len()]);
    for k in (0..services.len()).rev() {
        let mut next = HashSet::new();
        for base in &suffix[k + 1] {
            for row in rows(units[k], &compatible[k], base, &caps) {
                let mut v = base.clone();
                for (vj, rj) in v.iter_mut().zip(&row) {
                    *vj += rj;
                }
                next.insert(v);
            }
        }
        suffix[k] = next;
    }

    let position = |id| requests.iter().position(|r| r.request_id == id);
    let score = |v: &[u32]| -> Result<f64, MetricsError> {
        blended_qoe(demand, alpha, |r| {
            position(r.request_id).map_or(0, |j| v[j] as Mah * q)
        })
        .map(|(value, _)| value)
    };

    let mut best: Option<(f64, Vec<Vec<u32>>)> = None;
    let mut candidates: Vec<&Vec<u32>> = suffix[0].iter().collect();
    candidates.sort();
    for v in candidates {
        let value = score(v)?;
        let better = match &best {
            None => true,
            Some((b, _)) => value > *b,
        };
        let tied = matches!(&best, Some((b, _)) if value == *b);
        if better || tied {
            let matrix = realise(v, &units, &compatible, &caps, &suffix);
            if better || best.as_ref().is_some_and(|(_, m)| matrix < *m) {
                best = Some((value, matrix));
            }
        }
    }
    let (value, matrix) = best.expect("zero allocation is always reachable");

    let mut grants = Vec::new();
    for (k, row) in matrix.iter().enumerate() {
        for (j, &u) in row.iter().enumerate() {
            if u > 0 {
                grants.push(Grant {
                    slot_index: requests[j].slot_index,
                    service_id: services[k].service_id,
                    request_id: requests[j].request_id,
                    amount_mah: u as Mah * q,
                });
            }
        }
    }
    grants.sort_by_key(|g| (g.slot_index, g.service_id, g.request_id));
    let result = CompositionResult {
        strategy: Strategy::PartialBased,
        threshold_mah: 0,
        unserved_demand_mah: unserved(demand, &grants),
        grants,
    };
    Ok((result, value))
}

/// All ways one service can hand out at most `units` units to compatible
/// requests without pushing any receipt past its cap, in ascending
/// lexicographic order.
fn rows(units: u32, compatible: &[usize], base: &[u32], caps: &[u32]) -> Vec<Vec<u32>> {
    fn go(
        idx: usize,
        left: u32,
        compatible: &[usize],
        base: &[u32],
        caps: &[u32],
        row: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if idx == compatible.len() {
            out.push(row.clone());
            return;
        }
        let j = compatible[idx];
        let room = (caps[j] - base[j]).min(left);
        for u in 0..=room {
            row[j] = u;
            go(idx + 1, left - u, compatible, base, caps, row, out);
        }
        row[j] = 0;
    }
    let mut out = Vec::new();
    let mut row = vec![0; caps.len()];
    go(0, units, compatible, base, caps, &mut row, &mut out);
    out
}

/// Lexicographically smallest matrix whose column sums equal `target`.
fn realise(
    target: &[u32],
    units: &[u32],
    compatible: &[Vec<usize>],
    caps: &[u32],
    suffix: &[HashSet<Vec<u32>>],
) -> Vec<Vec<u32>> {
    let mut left = target.to_vec();
    let mut matrix = Vec::with_capacity(units.len());
    let zero = vec![0; caps.len()];
    for k in 0..units.len() {
        // rows bounded by the still-unassigned receipts
        let bound: Vec<u32> = caps.iter().zip(&left).map(|(c, l)| c - l).collect();
        let row = rows(units[k], &compatible[k], &bound, caps)
            .into_iter()
            .find(|row| {
                let rest: Vec<u32> = left.iter().zip(row).map(|(l, r)| l - r).collect();
                suffix[k + 1].contains(&rest)
            })
            .expect("target is reachable");
        for (l, r) in left.iter_mut().zip(&row) {
            *l -= r;
        }
        matrix.push(row);
    }
    debug_assert_eq!(left, zero);
    matrix
}
