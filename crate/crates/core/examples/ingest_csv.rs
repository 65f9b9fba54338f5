//! Turn a transaction log and an energy-transfer log into an instance.
//!
//! cargo run --example ingest_csv

use std::path::Path;

use microcell_qoe::composition::compose_db;
use microcell_qoe::metrics::qoe;
use microcell_qoe::workload::{ingest_transactions_files, MappingConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let config = MappingConfig { provider_share: 0.35, seed: 1, num_slots: 4, ..MappingConfig::default() };
    let (demand, services, report) =
        ingest_transactions_files(&data.join("transactions.csv"), &data.join("energy.csv"), &config)?;
    println!("{report:?}");
    for slot in &demand.slots {
        println!(
            "slot {} {}: {} requests, {} mAh, {} services",
            slot.index,
            slot.start.format("%H:%M"),
            slot.requests.len(),
            slot.required_energy_mah,
            slot.registered_services.len()
        );
    }
    let result = compose_db(&demand, &services, 10)?;
    println!("DB QoE {:.4}", qoe(&demand, &services, &result, 0.5)?.qoe);
    Ok(())
}
