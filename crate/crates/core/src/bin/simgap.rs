//! Command-line front end for the calibration pipeline.
//!
//! Exit codes: 0 success, 2 usage, 3 data or schema, 4 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simgap::calibration;
use simgap::config::RunConfig;
use simgap::{Error, Result};

#[derive(Parser)]
#[command(name = "simgap", version, about = "Score and close the sim-to-real gap of an actuator model")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Root seed; overrides `seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the four command-sequence CSVs.
    GenCommands {
        /// Sequence length in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Generate synthetic hardware rollouts from hidden parameters.
    MakeHardware {
        #[arg(long, default_value = "commands")]
        commands_dir: PathBuf,
        /// Repeats per sequence.
        #[arg(long)]
        repeats: Option<usize>,
        /// NoiseModel CSV giving per-channel sensor noise.
        #[arg(long)]
        noise_model: Option<PathBuf>,
    },
    /// Simulate every command sequence with `params.*` from the config.
    Simulate {
        #[arg(long, default_value = "commands")]
        commands_dir: PathBuf,
        /// Simulated rollouts per sequence.
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Score simulated rollouts against hardware rollouts.
    Score {
        #[arg(long)]
        hardware_dir: PathBuf,
        #[arg(long)]
        sim_dir: PathBuf,
    },
    /// Fit the actuator parameters to hardware rollouts with CMA-ES.
    Calibrate {
        #[arg(long)]
        hardware_dir: PathBuf,
        #[arg(long, default_value = "commands")]
        commands_dir: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        population: Option<usize>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Estimate per-channel white-noise levels of one rollout.
    NoiseEstimate {
        #[arg(long)]
        rollout: PathBuf,
        /// Output file name inside `--out-dir`.
        #[arg(long, default_value = "noise_model.csv")]
        output: String,
    },
    /// Recovered-vs-hidden table and SVG plots for a calibration run.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        hardware_dir: PathBuf,
        /// Histogram bins per feature.
        #[arg(long)]
        bins: Option<usize>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn override_with(cfg: &mut RunConfig, apply: impl FnOnce(&mut RunConfig)) -> Result<()> {
    apply(cfg);
    cfg.validate().map_err(|e| match e {
        Error::Model(m) => Error::InvalidArgument(m),
        other => other,
    })
}

fn list(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    let out = cli.common.out_dir.as_path();
    match cli.cmd {
        Cmd::GenCommands { duration } => {
            override_with(&mut cfg, |c| c.duration_s = duration.unwrap_or(c.duration_s))?;
            let paths = calibration::gen_commands(&cfg, out)?;
            println!("wrote {} command sequences ({} s at {} Hz)", paths.len(), cfg.duration_s, cfg.gains.f_policy);
            list(&paths);
        }
        Cmd::MakeHardware { commands_dir, repeats, noise_model } => {
            override_with(&mut cfg, |c| c.hardware_repeats = repeats.unwrap_or(c.hardware_repeats))?;
            let paths = calibration::make_hardware(&cfg, &commands_dir, out, noise_model.as_deref())?;
            println!("wrote {} hardware rollouts", paths.len());
        }
        Cmd::Simulate { commands_dir, rollouts } => {
            override_with(&mut cfg, |c| c.sim_rollouts = rollouts.unwrap_or(c.sim_rollouts))?;
            let paths = calibration::simulate(&cfg, &commands_dir, out)?;
            println!("wrote {} simulated rollouts", paths.len());
        }
        Cmd::Score { hardware_dir, sim_dir } => {
            let report = calibration::score(&cfg, &hardware_dir, &sim_dir, out)?;
            print!("{}", report.summary());
        }
        Cmd::Calibrate { hardware_dir, commands_dir, iterations, population, resume } => {
            override_with(&mut cfg, |c| {
                c.iterations = iterations.unwrap_or(c.iterations);
                c.population = population.unwrap_or(c.population);
            })?;
            let run = calibration::calibrate(&cfg, &hardware_dir, &commands_dir, out, resume)?;
            println!(
                "{} generations, score {:.6} -> {:.6} in {:.1} s",
                run.history.len(),
                run.initial_score(),
                run.final_score(),
                run.elapsed_s
            );
            print!("{}", simgap::config::params_to_text(&run.best_params));
        }
        Cmd::NoiseEstimate { rollout, output } => {
            let model = calibration::noise_estimate(&cfg, &rollout)?;
            std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
            let path = out.join(output);
            model.save(&path)?;
            println!("wrote {}", path.display());
        }
        Cmd::Report { run_dir, hardware_dir, bins } => {
            override_with(&mut cfg, |c| c.report_bins = bins.unwrap_or(c.report_bins))?;
            list(&calibration::report(&cfg, &run_dir, &hardware_dir, out)?);
        }
    }
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::MissingSequences { missing } = &e {
                for m in missing {
                    eprintln!("  missing: {m}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
