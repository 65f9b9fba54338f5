//! The three-slot café scenario under every strategy.
//!
//! cargo run --example reference_scenario

use microcell_qoe::composition::compose;
use microcell_qoe::domain::Strategy;
use microcell_qoe::harness::reference_scenario;
use microcell_qoe::metrics::{pooled_blend, qoe};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (demand, services) = reference_scenario();
    println!(
        "{} slots, {} consumers, {} mAh requested, {} mAh offered",
        demand.slots.len(),
        demand.total_consumers(),
        demand.total_required_mah(),
        services.iter().map(|s| s.amount_mah).sum::<u64>()
    );
    for strategy in Strategy::ALL {
        let result = compose(strategy, &demand, &services, 10)?;
        let report = qoe(&demand, &services, &result, 0.5)?;
        let served = result.received_by_request().values().filter(|&&v| v > 0).count();
        println!(
            "{:<7} served {:>2}/14  delivered {:>4} mAh  SR {:.3}  FR {:.5}  QoE {:.4} (pooled {:.4})",
            strategy.label(),
            served,
            result.total_granted_mah(),
            report.weighted_sr(),
            report.weighted_fr(),
            report.qoe,
            pooled_blend(&demand, &result, 0.5)?
        );
    }
    Ok(())
}
