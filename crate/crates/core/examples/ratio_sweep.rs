//! Ratio sweep: mean SR, FR, QoE and EU per strategy as services become
//! more plentiful relative to requests.
//!
//! cargo run --release --example ratio_sweep -- [repetitions]

use microcell_qoe::domain::Strategy;
use microcell_qoe::harness::{run_sweep, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let repetitions = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let spec = SweepSpec {
        ratios: vec![0.15, 0.30, 0.45, 0.60, 0.75, 0.90],
        thresholds: vec![10],
        repetitions,
        threshold_ratio: None,
        master_seed: 2021,
        ..SweepSpec::default()
    };
    let result = run_sweep(&spec)?;
    println!("{:<7} {:>5} {:>7} {:>7} {:>7} {:>7} {:>10}", "strat", "ratio", "SR", "FR", "QoE", "EU", "time(us)");
    for &ratio in &spec.ratios {
        for s in Strategy::ALL {
            let row = result.row(s, ratio, Some(10)).expect("row per strategy and ratio");
            println!(
                "{:<7} {:>5.2} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>10.1}",
                s.label(),
                ratio,
                row.mean_sr,
                row.mean_fr,
                row.mean_qoe,
                row.mean_eu,
                row.mean_runtime_ns / 1e3
            );
        }
    }
    Ok(())
}
