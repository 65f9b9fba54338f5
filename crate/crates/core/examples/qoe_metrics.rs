//! Per-slot satisfaction and fulfillment, and how alpha trades them off.
//!
//! cargo run --example qoe_metrics

use microcell_qoe::composition::compose_pb;
use microcell_qoe::metrics::{energy_utilization, qoe};
use microcell_qoe::workload::{generate, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = GeneratorConfig { seed: 42, num_requests: 60, service_to_request_ratio: 0.4, ..GeneratorConfig::default() };
    let (demand, services) = generate(&config)?;
    let result = compose_pb(&demand, &services, 30)?;

    let report = qoe(&demand, &services, &result, 0.5)?;
    println!("slot   SR     FR     beta   gamma");
    for s in &report.per_slot {
        println!("{:>4} {:.3}  {:.3}  {:.3}  {:.3}", s.slot_index, s.sr, s.fr, s.beta, s.gamma);
    }
    println!("EU {:.3}", energy_utilization(&services, &result)?);
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!("alpha {alpha:.2}: QoE {:.4}", qoe(&demand, &services, &result, alpha)?.qoe);
    }
    Ok(())
}
