//! Draw synthetic instances by count and by energy ratio and save one as JSON.
//!
//! cargo run --example generate_workload -- [out.json]

use microcell_qoe::domain::validate_instance;
use microcell_qoe::workload::{generate, generate_instance, GeneratorConfig, RatioMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let by_count = GeneratorConfig { seed: 7, num_requests: 100, service_to_request_ratio: 0.5, ..GeneratorConfig::default() };
    let by_energy = GeneratorConfig { ratio_mode: RatioMode::Energy, ..by_count.clone() };

    for (name, config) in [("count", &by_count), ("energy", &by_energy)] {
        let (demand, services) = generate(config)?;
        assert!(validate_instance(&demand, &services).is_valid());
        let offered: u64 = services.iter().map(|s| s.amount_mah).sum();
        println!(
            "{name:<6}: {} requests / {} services, {} mAh requested / {offered} mAh offered",
            demand.request_count(),
            services.len(),
            demand.total_required_mah()
        );
    }

    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, serde_json::to_string_pretty(&generate_instance(&by_count)?)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
