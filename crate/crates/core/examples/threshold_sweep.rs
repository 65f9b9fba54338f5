//! PB and DB at a near one-to-one service ratio across chunk thresholds.
//!
//! cargo run --release --example threshold_sweep -- [repetitions]

use microcell_qoe::domain::Strategy;
use microcell_qoe::harness::{run_sweep, SweepSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let repetitions = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let thresholds = vec![10, 30, 50, 70, 90, 150, 300, 600];
    let spec = SweepSpec {
        strategies: vec![Strategy::PartialBased, Strategy::DemandBased],
        repetitions,
        ..SweepSpec::threshold_study(0.99, thresholds.clone())
    };
    let result = run_sweep(&spec)?;
    println!("{:<4} {:>9} {:>7} {:>7} {:>7} {:>10}", "", "threshold", "SR", "FR", "QoE", "time(us)");
    for s in &spec.strategies {
        for &t in &thresholds {
            let row = result.row(*s, 0.99, Some(t)).expect("row per threshold");
            println!(
                "{:<4} {:>9} {:>7.4} {:>7.4} {:>7.4} {:>10.1}",
                s.label(),
                t,
                row.mean_sr,
                row.mean_fr,
                row.mean_qoe,
                row.mean_runtime_ns / 1e3
            );
        }
    }
    Ok(())
}
