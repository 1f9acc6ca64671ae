//! Synthetic hardware data from hidden actuator parameters, and how the
//! similarity score tells the truth apart from a naive model.
//!
//! cargo run --example synthetic_hardware

use simgap::actuator::ActuatorParams;
use simgap::calibration::{hardware_seed, sim_seed};
use simgap::config::RunConfig;
use simgap::metrics::Scorer;
use simgap::plant::{rollout_sim, rollout_synthetic_hardware};
use simgap::rollout::gen_command_sequences;

fn main() -> simgap::Result<()> {
    let cfg = RunConfig { seed: 4, duration_s: 4.0, ..RunConfig::default() };
    let seqs = gen_command_sequences(&cfg.command_config())?;
    let setup = cfg.setup();
    let hidden = ActuatorParams::spot_calibrated();

    let mut hardware = Vec::new();
    for s in &seqs {
        hardware.extend(rollout_synthetic_hardware(s, &hidden, &setup, &cfg.sensor_noise(), 3, hardware_seed(cfg.seed))?);
    }
    println!("{} hardware rollouts, {} per sequence", hardware.len(), hardware.len() / seqs.len());

    let scorer = Scorer::new(&hardware, &cfg.gains)?;
    let candidates = [
        ("hidden parameters", hidden),
        ("calibration start", ActuatorParams::calibration_start()),
        ("tau limits x0.8", ActuatorParams { tau_max: 0.8 * hidden.tau_max, tau_min: 0.8 * hidden.tau_min, ..hidden }),
        ("no knee friction", ActuatorParams { friction_knee: 0.0, ..hidden }),
    ];
    println!("\n{:>20} {:>12} {:>12}", "simulated with", "W1", "MMD²");
    for (label, params) in candidates {
        let mut sim = Vec::new();
        for s in &seqs {
            sim.extend(rollout_sim(s, &params, &setup, cfg.sim_rollouts, sim_seed(cfg.seed, None))?);
        }
        let (w, m) = scorer.score(&sim, &cfg.score)?.raw_measures();
        println!("{label:>20} {w:>12.4} {m:>12.6}");
    }
    Ok(())
}
