//! End-to-end calibration on files: commands, synthetic hardware, CMA-ES
//! fit and the report, all in a scratch directory.
//!
//! cargo run --example calibration [generations] [duration_s]
//!
//! The defaults keep the run to a minute or so; 100 generations on 5 s
//! sequences is the full budget.

use simgap::actuator::ActuatorParams;
use simgap::calibration;
use simgap::config::RunConfig;

fn main() -> simgap::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(25);
    let duration_s = args.next().and_then(|s| s.parse().ok()).unwrap_or(3.0);

    let root = std::env::temp_dir().join("simgap_calibration_example");
    let (commands, hardware, run, report) =
        (root.join("commands"), root.join("hardware"), root.join("run"), root.join("report"));

    let mut cfg = RunConfig { seed: 11, duration_s, iterations, ..RunConfig::default() };
    calibration::gen_commands(&cfg, &commands)?;
    calibration::make_hardware(&cfg, &commands, &hardware, None)?;

    cfg.seed = 12;
    cfg.params = ActuatorParams::calibration_start();
    let result = calibration::calibrate(&cfg, &hardware, &commands, &run, false)?;
    println!(
        "{} generations in {:.0} s, score {:.4} -> {:.5}",
        result.history.len(),
        result.elapsed_s,
        result.initial_score(),
        result.final_score()
    );

    for path in calibration::report(&cfg, &run, &hardware, &report)? {
        println!("wrote {}", path.display());
    }
    print!("\n{}", std::fs::read_to_string(report.join(calibration::RECOVERY_FILE)).unwrap_or_default());
    Ok(())
}
