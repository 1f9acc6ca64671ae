//! Pipeline stages: command generation, synthetic hardware, simulation,
//! scoring, calibration, noise estimation and reporting.
//!
//! Each stage reads and writes plain files in a directory so the stages can
//! be chained from the `simgap` binary or from code. The synthetic hardware
//! stage writes its ground-truth parameters to [`HIDDEN_PARAMS_FILE`];
//! only [`report`] ever opens that file.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::actuator::ActuatorParams;
use crate::cmaes::{self, CmaesState, GenerationRecord};
use crate::config::{params_to_text, RunConfig};
use crate::metrics::{ScoreReport, ScoreWeights, Scorer};
use crate::noise::{estimate_sigma_band, NoiseModel};
use crate::plant::{rollout_sim, rollout_synthetic_hardware, SensorNoise};
use crate::report::{fitness_history_svg, histogram_overlay_svg, parse_history_csv};
use crate::rollout::{
    command_file_name, extract_features, gen_command_sequences, load_command_sequence, load_rollout,
    load_rollout_dir, save_command_sequence, save_rollout, CommandSequence, Rollout, SequenceId,
};
use crate::{rng, Error, Result, N_JOINTS};

/// Sealed ground-truth parameters of a synthetic hardware directory.
pub const HIDDEN_PARAMS_FILE: &str = "hidden_params.hidden";
pub const HISTORY_FILE: &str = "fitness_history.csv";
pub const CANDIDATES_FILE: &str = "candidates.csv";
pub const BEST_PARAMS_FILE: &str = "best_params.cfg";
pub const CONFIG_SNAPSHOT_FILE: &str = "run_config.cfg";
pub const CHECKPOINT_FILE: &str = "cmaes_state.json";
pub const FINAL_SCORE_FILE: &str = "final_score.csv";
pub const INITIAL_SCORE_FILE: &str = "initial_score.csv";
pub const RUN_SUMMARY_FILE: &str = "run_summary.txt";
pub const RUN_TIMING_FILE: &str = "run_timing.txt";
pub const BEST_SIM_DIR: &str = "best_sim";
pub const RECOVERY_FILE: &str = "recovered_vs_hidden.csv";
pub const HISTORY_SVG_FILE: &str = "fitness_history.svg";
pub const HISTOGRAM_SVG_FILE: &str = "feature_histograms.svg";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Seed of the synthetic hardware's initial states and sensor noise.
pub fn hardware_seed(root: u64) -> u64 {
    rng::derive_seed(root, "hardware", 0)
}

/// Seed of simulated rollouts; with common random numbers off, each
/// candidate gets its own stream index.
pub fn sim_seed(root: u64, candidate: Option<u64>) -> u64 {
    match candidate {
        None => rng::derive_seed(root, "sim", 0),
        Some(k) => rng::derive_seed(root, "sim.candidate", k),
    }
}

/// Writes the four command-sequence CSVs to `out_dir`.
pub fn gen_commands(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let seqs = gen_command_sequences(&cfg.command_config())?;
    create_dir(out_dir)?;
    seqs.iter()
        .map(|s| {
            let p = out_dir.join(command_file_name(s.id));
            save_command_sequence(s, &p)?;
            Ok(p)
        })
        .collect()
}

/// Loads every `commands_<id>.csv` in `dir`, in sequence order.
pub fn load_commands(dir: &Path) -> Result<Vec<CommandSequence>> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory")));
    }
    let seqs: Vec<CommandSequence> = SequenceId::ALL
        .iter()
        .map(|id| dir.join(command_file_name(*id)))
        .filter(|p| p.exists())
        .map(|p| load_command_sequence(&p))
        .collect::<Result<_>>()?;
    if seqs.is_empty() {
        return Err(Error::MissingSequences {
            missing: SequenceId::ALL.iter().map(|id| command_file_name(*id)).collect(),
        });
    }
    Ok(seqs)
}

fn load_commands_for(dir: &Path, ids: &BTreeSet<SequenceId>) -> Result<Vec<CommandSequence>> {
    let seqs = load_commands(dir)?;
    let have: BTreeSet<SequenceId> = seqs.iter().map(|s| s.id).collect();
    let missing: Vec<String> = ids.difference(&have).map(|id| command_file_name(*id)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingSequences { missing });
    }
    Ok(seqs.into_iter().filter(|s| ids.contains(&s.id)).collect())
}

fn sensor_noise_from_model(model: &NoiseModel) -> Result<SensorNoise> {
    let mut noise = SensorNoise::zero();
    for j in 0..N_JOINTS {
        noise.q[j] = model.sigma_of(&format!("q_{j}")).unwrap_or(0.0);
        noise.q_dot[j] = model.sigma_of(&format!("qd_{j}")).unwrap_or(0.0);
    }
    Ok(noise)
}

/// Generates synthetic hardware rollouts for every command file in
/// `commands_dir` with `cfg.params` as the hidden parameters, and seals
/// those parameters in `out_dir/`[`HIDDEN_PARAMS_FILE`]. Sensor noise comes
/// from `noise_model` when given, otherwise from the `hardware.sigma_*`
/// settings.
pub fn make_hardware(
    cfg: &RunConfig,
    commands_dir: &Path,
    out_dir: &Path,
    noise_model: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let seqs = load_commands(commands_dir)?;
    let noise = match noise_model {
        Some(p) => sensor_noise_from_model(&NoiseModel::load(p)?)?,
        None => cfg.sensor_noise(),
    };
    let setup = cfg.setup();
    let seed = hardware_seed(cfg.seed);
    let rollouts: Vec<Vec<Rollout>> = seqs
        .par_iter()
        .map(|s| rollout_synthetic_hardware(s, &cfg.params, &setup, &noise, cfg.hardware_repeats, seed))
        .collect::<Result<_>>()?;
    create_dir(out_dir)?;
    let mut paths = Vec::new();
    for r in rollouts.iter().flatten() {
        let p = out_dir.join(r.file_name());
        save_rollout(r, &p)?;
        paths.push(p);
    }
    write(
        &out_dir.join(HIDDEN_PARAMS_FILE),
        &format!("# ground truth of the synthetic hardware; read only by `report`\n{}", params_to_text(&cfg.params)),
    )?;
    Ok(paths)
}

/// Simulated rollouts of every sequence under `params`.
pub fn simulate_sequences(
    cfg: &RunConfig,
    seqs: &[CommandSequence],
    params: &ActuatorParams,
    seed: u64,
) -> Result<Vec<Rollout>> {
    let setup = cfg.setup();
    let per_seq: Vec<Vec<Rollout>> = seqs
        .par_iter()
        .map(|s| rollout_sim(s, params, &setup, cfg.sim_rollouts, seed))
        .collect::<Result<_>>()?;
    Ok(per_seq.into_iter().flatten().collect())
}

fn save_rollouts(rollouts: &[Rollout], dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    rollouts
        .iter()
        .map(|r| {
            let p = dir.join(r.file_name());
            save_rollout(r, &p)?;
            Ok(p)
        })
        .collect()
}

/// Simulates every command file in `commands_dir` with `cfg.params`.
pub fn simulate(cfg: &RunConfig, commands_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let seqs = load_commands(commands_dir)?;
    let rollouts = simulate_sequences(cfg, &seqs, &cfg.params, sim_seed(cfg.seed, None))?;
    save_rollouts(&rollouts, out_dir)
}

/// Scores the rollouts in `sim_dir` against those in `hardware_dir` and
/// writes `score_report.csv` and `score_summary.txt` to `out_dir`.
pub fn score(cfg: &RunConfig, hardware_dir: &Path, sim_dir: &Path, out_dir: &Path) -> Result<ScoreReport> {
    let hardware = load_rollout_dir(hardware_dir)?;
    let simulated = load_rollout_dir(sim_dir)?;
    let scorer = Scorer::new(&hardware, &cfg.gains)?;
    let hw_ids: BTreeSet<SequenceId> = hardware.iter().map(|r| r.sequence_id).collect();
    let sim_ids: BTreeSet<SequenceId> = simulated.iter().map(|r| r.sequence_id).collect();
    let missing: Vec<String> = hw_ids.symmetric_difference(&sim_ids).map(|id| id.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingSequences { missing });
    }
    let report = scorer.score(&simulated, &cfg.score)?;
    create_dir(out_dir)?;
    write(&out_dir.join("score_report.csv"), &report.to_csv())?;
    write(&out_dir.join("score_summary.txt"), &report.summary())?;
    Ok(report)
}

/// Everything a calibration run produced.
#[derive(Debug, Clone)]
pub struct CalibrationRun {
    pub config: RunConfig,
    pub history: Vec<GenerationRecord>,
    /// Raw Wasserstein and MMD of the initial iterate, used as the score
    /// normalizers for the whole run.
    pub normalizers: (f64, f64),
    pub initial_report: ScoreReport,
    pub final_report: ScoreReport,
    pub best_params: ActuatorParams,
    pub best_fitness: f64,
    pub elapsed_s: f64,
}

impl CalibrationRun {
    pub fn initial_score(&self) -> f64 {
        self.initial_report.combined
    }

    pub fn final_score(&self) -> f64 {
        self.final_report.combined
    }
}

/// Normalizer for a raw measure: the measure itself when it is clearly
/// positive, else 1 so the term keeps its raw scale.
fn normalizer(raw: f64) -> f64 {
    if raw.is_finite() && raw > 1e-12 {
        raw
    } else {
        1.0
    }
}

/// Per-generation callback of [`calibrate_rollouts`].
pub type GenerationHook<'a> = dyn FnMut(&GenerationRecord, &CmaesState) -> Result<()> + 'a;

/// Calibrates the actuator parameters against in-memory hardware rollouts.
///
/// The fitness of a candidate is the combined score of its simulated
/// rollouts, normalized by the raw measures of the initial iterate so the
/// starting point scores `w_wasserstein + w_mmd`. `resume` continues from a
/// checkpointed optimizer state.
pub fn calibrate_rollouts(
    cfg: &RunConfig,
    hardware: &[Rollout],
    seqs: &[CommandSequence],
    resume: Option<CmaesState>,
    on_generation: &mut GenerationHook<'_>,
) -> Result<CalibrationRun> {
    cfg.validate()?;
    let started = Instant::now();
    let scorer = Scorer::new(hardware, &cfg.gains)?;
    let cma = cfg.cmaes_config();
    let crn_seed = sim_seed(cfg.seed, None);

    let initial_sim = simulate_sequences(cfg, seqs, &cfg.init, crn_seed)?;
    let raw = scorer.score(&initial_sim, &ScoreWeights { norm_wasserstein: 1.0, norm_mmd: 1.0, ..cfg.score.clone() })?;
    let (raw_w, raw_m) = raw.raw_measures();
    let normalizers = (normalizer(raw_w), normalizer(raw_m));
    let weights = ScoreWeights { norm_wasserstein: normalizers.0, norm_mmd: normalizers.1, ..cfg.score.clone() };
    let initial_report = scorer.score(&initial_sim, &weights)?;

    let evaluate = |generation: usize, cands: &[Vec<f64>]| -> Result<Vec<f64>> {
        cands
            .par_iter()
            .enumerate()
            .map(|(k, x)| {
                let params = ActuatorParams::from_slice(x)?;
                let seed = if cfg.common_random_numbers {
                    crn_seed
                } else {
                    sim_seed(cfg.seed, Some((generation * cma.population + k) as u64))
                };
                let sim = simulate_sequences(cfg, seqs, &params, seed)?;
                Ok(scorer.score(&sim, &weights)?.combined)
            })
            .collect()
    };
    let state = match resume {
        Some(s) => s,
        None => CmaesState::new(&cma, Some(&cfg.init.to_array()))?,
    };
    let mut generation = state.generation;
    let result = cmaes::optimize_from(
        state,
        &cma,
        |cands| {
            let f = evaluate(generation, cands);
            generation += 1;
            f
        },
        |record, state| on_generation(record, state),
    )?;

    let best_params = ActuatorParams::from_slice(&result.best_params)?;
    let best_sim = simulate_sequences(cfg, seqs, &best_params, crn_seed)?;
    let final_report = scorer.score(&best_sim, &weights)?;
    Ok(CalibrationRun {
        config: cfg.clone(),
        history: result.history,
        normalizers,
        initial_report,
        final_report,
        best_params,
        best_fitness: result.best_fitness,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

fn history_row(r: &GenerationRecord) -> String {
    format!("{},{},{},{}\n", r.generation, r.best, r.mean, r.step_size)
}

fn candidate_rows(r: &GenerationRecord) -> String {
    let mut out = String::new();
    for (k, (x, f)) in r.candidates.iter().zip(&r.fitness).enumerate() {
        let cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{},{k},{},{f}", r.generation, cells.join(","));
    }
    out
}

/// Keeps the header and the first `rows` data lines of a CSV file, or
/// returns just `header` when the file is missing.
fn kept_rows(path: &Path, header: &str, keep: impl Fn(&str) -> bool) -> String {
    let mut out = format!("{header}\n");
    if let Ok(text) = fs::read_to_string(path) {
        for line in text.lines().skip(1).filter(|l| keep(l)) {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn generation_of(line: &str) -> Option<usize> {
    line.split(',').next()?.trim().parse().ok()
}

/// Runs a calibration against the hardware rollouts in `hardware_dir`
/// (only `*.csv` files are read) using the command files in `commands_dir`.
///
/// Writes to `out_dir`: the config snapshot, the fitness history and every
/// candidate (rewritten after each generation, so a failed run keeps the
/// finished generations), an optimizer checkpoint, the best parameters as a
/// loadable config, initial and final score reports, a summary, and the
/// simulated rollouts at the best parameters. Wall-clock time goes to a
/// separate file so that all other outputs are reproducible byte for byte.
///
/// With `resume`, a checkpoint in `out_dir` is continued instead of
/// starting over.
pub fn calibrate(
    cfg: &RunConfig,
    hardware_dir: &Path,
    commands_dir: &Path,
    out_dir: &Path,
    resume: bool,
) -> Result<CalibrationRun> {
    let hardware = load_rollout_dir(hardware_dir)?;
    if hardware.is_empty() {
        return Err(Error::MissingSequences { missing: vec![format!("{} has no rollouts", hardware_dir.display())] });
    }
    let ids: BTreeSet<SequenceId> = hardware.iter().map(|r| r.sequence_id).collect();
    let seqs = load_commands_for(commands_dir, &ids)?;
    create_dir(out_dir)?;
    write(&out_dir.join(CONFIG_SNAPSHOT_FILE), &cfg.to_text())?;

    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let state = if resume && checkpoint.exists() { Some(CmaesState::load(&checkpoint)?) } else { None };
    let done = state.as_ref().map_or(0, |s| s.generation);
    let param_header = ActuatorParams::NAMES.join(",");
    let history_path = out_dir.join(HISTORY_FILE);
    let candidates_path = out_dir.join(CANDIDATES_FILE);
    let before = |l: &str| generation_of(l).is_some_and(|g| g < done);
    let mut history = kept_rows(&history_path, "generation,best,mean,step_size", before);
    let mut candidates = kept_rows(&candidates_path, &format!("generation,index,{param_header},fitness"), before);
    write(&history_path, &history)?;
    write(&candidates_path, &candidates)?;

    let run = calibrate_rollouts(cfg, &hardware, &seqs, state, &mut |record, state| {
        history.push_str(&history_row(record));
        candidates.push_str(&candidate_rows(record));
        write(&history_path, &history)?;
        write(&candidates_path, &candidates)?;
        state.save(&checkpoint)
    })?;

    write(&out_dir.join(BEST_PARAMS_FILE), &params_to_text(&run.best_params))?;
    write(&out_dir.join(INITIAL_SCORE_FILE), &run.initial_report.to_csv())?;
    write(&out_dir.join(FINAL_SCORE_FILE), &run.final_report.to_csv())?;
    write(&out_dir.join(RUN_SUMMARY_FILE), &run_summary(&run))?;
    write(&out_dir.join(RUN_TIMING_FILE), &format!("elapsed_s = {:.3}\n", run.elapsed_s))?;
    let best_dir = out_dir.join(BEST_SIM_DIR);
    if best_dir.is_dir() {
        fs::remove_dir_all(&best_dir).map_err(|e| Error::io(&best_dir, e))?;
    }
    let best_sim = simulate_sequences(cfg, &seqs, &run.best_params, sim_seed(cfg.seed, None))?;
    save_rollouts(&best_sim, &best_dir)?;
    Ok(run)
}

fn run_summary(run: &CalibrationRun) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "generations = {}", run.history.len());
    let _ = writeln!(out, "population = {}", run.config.population);
    let _ = writeln!(out, "norm_wasserstein = {}", run.normalizers.0);
    let _ = writeln!(out, "norm_mmd = {}", run.normalizers.1);
    let _ = writeln!(out, "initial_score = {}", run.initial_score());
    let _ = writeln!(out, "final_score = {}", run.final_score());
    let _ = writeln!(out, "best_fitness = {}", run.best_fitness);
    for (n, v) in ActuatorParams::NAMES.iter().zip(run.best_params.to_array()) {
        let _ = writeln!(out, "best.{n} = {v}");
    }
    out
}

/// Estimates per-channel white-noise levels of the joint positions and
/// velocities in one rollout, at the rollout's sampling rate.
pub fn noise_estimate(cfg: &RunConfig, rollout_path: &Path) -> Result<NoiseModel> {
    let rollout = load_rollout(rollout_path)?;
    let f_s = 1.0 / rollout.dt;
    let channels: Vec<String> = ["q", "qd"]
        .iter()
        .flat_map(|p| (0..N_JOINTS).map(move |j| format!("{p}_{j}")))
        .collect();
    let sigma = channels
        .iter()
        .map(|c| {
            let signal = rollout.channel(c).expect("joint channel exists");
            estimate_sigma_band(&signal, f_s, cfg.noise_band)
        })
        .collect::<Result<Vec<f64>>>()?;
    NoiseModel::new(channels, sigma, f_s)
}

fn read_params_file(path: &Path) -> Result<ActuatorParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut c = RunConfig::default();
    c.apply_text(&text, path)?;
    Ok(c.params)
}

/// Recovered-versus-hidden table. This is oracle output: it is the one place
/// that opens the sealed hidden parameters.
pub fn recovery_table(recovered: &ActuatorParams, hidden: Option<&ActuatorParams>) -> String {
    let mut out = String::from("# oracle output: recovered parameters against the sealed hidden values\n");
    out.push_str("parameter,recovered,hidden,abs_error,rel_error\n");
    for (i, n) in ActuatorParams::NAMES.iter().enumerate() {
        let r = recovered.to_array()[i];
        match hidden {
            Some(h) => {
                let h = h.to_array()[i];
                let abs = (r - h).abs();
                let rel = if h != 0.0 { abs / h.abs() } else { f64::NAN };
                let _ = writeln!(out, "{n},{r},{h},{abs},{rel}");
            }
            None => {
                let _ = writeln!(out, "{n},{r},,,");
            }
        }
    }
    out
}

/// Writes the recovered-versus-hidden table, the fitness-history plot and
/// the per-feature histogram overlays for the run in `run_dir`.
pub fn report(cfg: &RunConfig, run_dir: &Path, hardware_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if !run_dir.is_dir() {
        return Err(Error::io(run_dir, std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found")));
    }
    let history_path = run_dir.join(HISTORY_FILE);
    let history = parse_history_csv(&fs::read_to_string(&history_path).map_err(|e| Error::io(&history_path, e))?)?;
    let best = read_params_file(&run_dir.join(BEST_PARAMS_FILE))?;
    let hidden_path = hardware_dir.join(HIDDEN_PARAMS_FILE);
    let hidden = if hidden_path.exists() { Some(read_params_file(&hidden_path)?) } else { None };

    let features = |rs: Vec<Rollout>| -> Result<Vec<_>> { rs.iter().map(|r| extract_features(r, &cfg.gains)).collect() };
    let hw = features(load_rollout_dir(hardware_dir)?)?;
    let sim = features(load_rollout_dir(&run_dir.join(BEST_SIM_DIR))?)?;
    let names = crate::rollout::channel_names();

    create_dir(out_dir)?;
    let outputs = [
        (RECOVERY_FILE, recovery_table(&best, hidden.as_ref())),
        (HISTORY_SVG_FILE, fitness_history_svg(&history)),
        (HISTOGRAM_SVG_FILE, histogram_overlay_svg(&hw, &sim, &names, cfg.report_bins)?),
    ];
    outputs
        .into_iter()
        .map(|(name, text)| {
            let p = out_dir.join(name);
            write(&p, &text)?;
            Ok(p)
        })
        .collect()
}
