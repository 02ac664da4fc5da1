//! Collection throughput: how much slower each method is than bare hands.
//!
//! cargo run --example slowdown

use aumi::replay_eval::{slowdown_report, CollectionMethod, ThroughputRecord};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rec = |task: &str, method, duration| ThroughputRecord {
        method,
        task: task.into(),
        duration,
    };
    let records = vec![
        rec("fold", CollectionMethod::BareHand, 100.0),
        rec("fold", CollectionMethod::ActiveUmi, 206.0),
        rec("fold", CollectionMethod::Teleoperation, 327.0),
        rec("pour", CollectionMethod::BareHand, 100.0),
        rec("pour", CollectionMethod::ActiveUmi, 149.0),
        rec("pour", CollectionMethod::Teleoperation, 263.0),
    ];
    for row in slowdown_report(&records)? {
        println!("{:<5} {:<14} {:.2}x", row.task, row.method.name(), row.ratio);
    }
    Ok(())
}
