//! Tape-measure replay fidelity: ten spans from 1 m down to 10 cm, replayed
//! perfectly, with a fixed 5 mm bias, and with 2 mm execution noise.
//!
//! cargo run --example tape_measure_rpe

use aumi::replay_eval::{
    tape_measure_nominals, tape_measure_protocol, BiasReplayer, IdentityReplayer, NoiseReplayer, ProtocolOptions,
    Replayer,
};
use aumi::simsource::{simulate_tape_measure, NoiseModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = simulate_tape_measure(&tape_measure_nominals(), &NoiseModel::zero(1))?;
    let opts = ProtocolOptions::default();
    let runs: Vec<(&str, Box<dyn Replayer>)> = vec![
        ("identity", Box::new(IdentityReplayer)),
        ("bias 5 mm", Box::new(BiasReplayer { bias: 0.005 })),
        ("noise 2 mm", Box::new(NoiseReplayer::new(0.002, 9))),
    ];
    for (name, mut r) in runs {
        let report = tape_measure_protocol(&trials, r.as_mut(), &opts)?;
        println!("{name}: mean RPE {:.4}%", report.mean_rpe);
        for t in &report.trials {
            println!("  {:>4.0} cm  replay {:.5} m  RPE {:.4}%", t.nominal * 100.0, t.replay, t.rpe);
        }
    }
    Ok(())
}
