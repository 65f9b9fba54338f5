//! How far the heuristics fall short of the exhaustive optimum on tiny
//! instances.
//!
//! cargo run --release --example oracle_bound

use microcell_qoe::composition::compose;
use microcell_qoe::domain::Strategy;
use microcell_qoe::metrics::qoe;
use microcell_qoe::oracle::optimal_qoe;
use microcell_qoe::workload::{generate, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut gaps = [0.0; 4];
    let trials = 50;
    for seed in 0..trials {
        let config = GeneratorConfig {
            seed,
            num_slots: 2,
            num_requests: 5,
            service_to_request_ratio: 0.6,
            nominal_battery_mah: 12,
            amount_range_pct: (0.1, 0.5),
            slots_per_service_range: (1, 2),
            ..GeneratorConfig::default()
        };
        let (demand, services) = generate(&config)?;
        let (_, best) = optimal_qoe(&demand, &services, 0.5, 1)?;
        for (gap, strategy) in gaps.iter_mut().zip(Strategy::ALL) {
            let result = compose(strategy, &demand, &services, 1)?;
            *gap += best - qoe(&demand, &services, &result, 0.5)?.qoe;
        }
    }
    for (gap, strategy) in gaps.iter().zip(Strategy::ALL) {
        println!("{:<7} mean gap to optimum {:.4}", strategy.label(), gap / trials as f64);
    }
    Ok(())
}
