//! Command sequences, one simulated rollout and its CSV and feature forms.
//!
//! cargo run --example rollout_io

use simgap::actuator::{ActuatorParams, GainConfig};
use simgap::plant::{rollout_sim, PlantConfig, RolloutSetup, ScriptedPolicy};
use simgap::rollout::{channel_names, extract_features, gen_command_sequences, load_rollout, save_rollout, CommandGenConfig};

fn main() -> simgap::Result<()> {
    let seqs = gen_command_sequences(&CommandGenConfig { duration_s: 4.0, seed: 2, ..Default::default() })?;
    for s in &seqs {
        let peak = s.samples.iter().map(|c| c.norm()).fold(0.0, f64::max);
        println!("{:<14} {} ticks, peak command {peak:.2}", s.id.to_string(), s.len());
    }

    let gains = GainConfig::default();
    let (config, policy) = (PlantConfig::default(), ScriptedPolicy::default());
    let setup = RolloutSetup { gains: &gains, config: &config, policy: &policy };
    let rollout = rollout_sim(&seqs[0], &ActuatorParams::spot_calibrated(), &setup, 1, 2)?.remove(0);

    let dir = std::env::temp_dir().join("simgap_rollout_io");
    std::fs::create_dir_all(&dir).ok();
    let path = dir.join(rollout.file_name());
    save_rollout(&rollout, &path)?;
    let back = load_rollout(&path)?;
    println!("\nwrote {} ({} rows), reloaded identical: {}", path.display(), back.len(), back == rollout);

    let features = extract_features(&rollout, &gains)?;
    let names = channel_names();
    println!("\nfeature matrix {} x {}; last tick of the front-left leg:", features.rows(), features.cols());
    let last = features.row(features.rows() - 1);
    for j in [0, 1, 2, 12, 13, 14, 24, 25, 26] {
        println!("  {:<12} {:>9.3}", names[j], last[j]);
    }
    Ok(())
}
