//! Flat `key = value` run configuration.
//!
//! Keys are namespaced by module (`gains.k_p`, `params.tau_max`,
//! `cmaes.population`, `bounds.tau_max = 40, 150`, ...). Lines starting with
//! `#` and blank lines are ignored. Unknown keys and malformed values are
//! rejected with the line number. [`RunConfig::to_text`] writes every key,
//! so a saved file reloads to an identical configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::actuator::{ActuatorParams, GainConfig, TorquePositionCurve};
use crate::cmaes::CmaesConfig;
use crate::metrics::ScoreWeights;
use crate::noise::DEFAULT_BAND;
use crate::plant::{PlantConfig, RolloutSetup, ScriptedPolicy, SensorNoise};
use crate::rollout::{CommandGenConfig, SequenceId};
use crate::{Error, Result};

/// Search box of the calibration. Wide enough to contain both the starting
/// point and physically plausible actuators of this size class.
pub fn default_bounds() -> [(f64, f64); ActuatorParams::DIM] {
    [
        (0.0, 0.5),
        (0.0, 0.5),
        (40.0, 150.0),
        (-150.0, -40.0),
        (16.0, 40.0),
        (-40.0, -16.0),
        (0.0, 15.0),
        (-15.0, 0.0),
    ]
}

/// Every setting of the pipeline in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub gains: GainConfig,
    /// Actuator parameters used to generate synthetic hardware and by
    /// `simulate`.
    pub params: ActuatorParams,
    /// Calibration starting point.
    pub init: ActuatorParams,
    pub bounds: [(f64, f64); ActuatorParams::DIM],
    pub plant: PlantConfig,
    /// File the torque-position curve was loaded from, if any.
    pub position_curve_path: Option<PathBuf>,
    pub policy: ScriptedPolicy,
    pub duration_s: f64,
    pub resample_interval_s: f64,
    pub population: usize,
    pub iterations: usize,
    pub sigma0: f64,
    pub score: ScoreWeights,
    /// Simulated rollouts per sequence and candidate.
    pub sim_rollouts: usize,
    /// Reuse the same initial-state seeds for every candidate.
    pub common_random_numbers: bool,
    pub hardware_repeats: usize,
    pub hardware_sigma_q: f64,
    pub hardware_sigma_qd: f64,
    pub noise_band: (f64, f64),
    pub report_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cmd = CommandGenConfig::default();
        RunConfig {
            seed: 0,
            gains: GainConfig::default(),
            params: ActuatorParams::spot_calibrated(),
            init: ActuatorParams::calibration_start(),
            bounds: default_bounds(),
            plant: PlantConfig::default(),
            position_curve_path: None,
            policy: ScriptedPolicy::default(),
            duration_s: cmd.duration_s,
            resample_interval_s: cmd.resample_interval_s,
            population: 10,
            iterations: 100,
            sigma0: 0.3,
            score: ScoreWeights::default(),
            sim_rollouts: 2,
            common_random_numbers: true,
            hardware_repeats: 5,
            hardware_sigma_q: 0.001,
            hardware_sigma_qd: 0.01,
            noise_band: DEFAULT_BAND,
            report_bins: 50,
        }
    }
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got {v:?}"))
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("expected a nonnegative integer, got {v:?}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_pair(v: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = v.split_once(',').ok_or_else(|| format!("expected `lo, hi`, got {v:?}"))?;
    Ok((parse_f64(a.trim())?, parse_f64(b.trim())?))
}

fn param_index(name: &str) -> Option<usize> {
    ActuatorParams::NAMES.iter().position(|n| *n == name)
}

fn set_param(p: &mut ActuatorParams, name: &str, v: &str) -> std::result::Result<bool, String> {
    let Some(i) = param_index(name) else { return Ok(false) };
    let mut a = p.to_array();
    a[i] = parse_f64(v)?;
    *p = ActuatorParams::from_slice(&a).map_err(|e| e.to_string())?;
    Ok(true)
}

impl RunConfig {
    /// Parses a config file on top of the defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines from `text`; `path` is used in errors and
    /// to resolve relative file references.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Config { path: path.to_path_buf(), line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "plant.position_curve" {
                let p = path.parent().unwrap_or(Path::new(".")).join(value);
                self.plant.position_curve = Some(TorquePositionCurve::load(&p)?);
                self.position_curve_path = Some(p);
                continue;
            }
            self.set(key, value).map_err(err)?;
        }
        self.validate().map_err(|e| match e {
            Error::InvalidArgument(message) | Error::Model(message) => {
                Error::Config { path: path.to_path_buf(), line: 0, message }
            }
            other => other,
        })
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let (ns, name) = key.split_once('.').unwrap_or(("", key));
        let handled = match (ns, name) {
            ("", "seed") => {
                self.seed = v.parse().map_err(|_| format!("expected an unsigned integer, got {v:?}"))?;
                true
            }
            ("gains", "k_p") => set(&mut self.gains.k_p, v)?,
            ("gains", "k_d") => set(&mut self.gains.k_d, v)?,
            ("gains", "sigma_a") => set(&mut self.gains.sigma_a, v)?,
            ("gains", "f_policy") => set(&mut self.gains.f_policy, v)?,
            ("gains", "f_torque") => set(&mut self.gains.f_torque, v)?,
            ("gains", "delay_ms") => set(&mut self.gains.delay_ms, v)?,
            ("params", n) => set_param(&mut self.params, n, v)?,
            ("init", n) => set_param(&mut self.init, n, v)?,
            ("bounds", n) => match param_index(n) {
                Some(i) => {
                    self.bounds[i] = parse_pair(v)?;
                    true
                }
                None => false,
            },
            ("plant", "inertia") => set(&mut self.plant.inertia, v)?,
            ("plant", "viscous_damping") => set(&mut self.plant.viscous_damping, v)?,
            ("plant", "gravity_torque_amplitude") => set(&mut self.plant.gravity_torque_amplitude, v)?,
            ("plant", "stance_load_knee") => set(&mut self.plant.stance_load_knee, v)?,
            ("plant", "stance_load_hip") => set(&mut self.plant.stance_load_hip, v)?,
            ("plant", "stance_load_speed_cap") => set(&mut self.plant.stance_load_speed_cap, v)?,
            ("policy", "base_frequency") => set(&mut self.policy.base_frequency, v)?,
            ("policy", "frequency_gain") => set(&mut self.policy.frequency_gain, v)?,
            ("policy", "amplitude") => set(&mut self.policy.amplitude, v)?,
            ("commands", "duration_s") => set(&mut self.duration_s, v)?,
            ("commands", "resample_interval_s") => set(&mut self.resample_interval_s, v)?,
            ("cmaes", "population") => {
                self.population = parse_usize(v)?;
                true
            }
            ("cmaes", "iterations") => {
                self.iterations = parse_usize(v)?;
                true
            }
            ("cmaes", "sigma0") => set(&mut self.sigma0, v)?,
            ("score", "w_wasserstein") => set(&mut self.score.w_wasserstein, v)?,
            ("score", "w_mmd") => set(&mut self.score.w_mmd, v)?,
            ("score", n) if n.starts_with("weight.") => {
                let id: SequenceId = n["weight.".len()..].parse().map_err(|e: Error| e.to_string())?;
                self.score.sequence.get_or_insert_with(BTreeMap::new).insert(id, parse_f64(v)?);
                true
            }
            ("sim", "rollouts_per_sequence") => {
                self.sim_rollouts = parse_usize(v)?;
                true
            }
            ("sim", "common_random_numbers") => {
                self.common_random_numbers = parse_bool(v)?;
                true
            }
            ("hardware", "repeats") => {
                self.hardware_repeats = parse_usize(v)?;
                true
            }
            ("hardware", "sigma_q") => set(&mut self.hardware_sigma_q, v)?,
            ("hardware", "sigma_qd") => set(&mut self.hardware_sigma_qd, v)?,
            ("noise", "band_lo") => set(&mut self.noise_band.0, v)?,
            ("noise", "band_hi") => set(&mut self.noise_band.1, v)?,
            ("report", "bins") => {
                self.report_bins = parse_usize(v)?;
                true
            }
            _ => false,
        };
        if handled {
            Ok(())
        } else {
            Err(format!("unknown key {key:?}"))
        }
    }

    /// Checks cross-field constraints that single-key parsing cannot see.
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        self.plant.validate()?;
        self.params.validate()?;
        self.init.validate()?;
        self.command_config().validate()?;
        self.cmaes_config().validate()?;
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            let x = self.init.to_array()[i];
            if !(lo <= &x && &x <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "init.{} = {x} lies outside bounds [{lo}, {hi}]",
                    ActuatorParams::NAMES[i]
                )));
            }
        }
        let positive = [
            ("sim.rollouts_per_sequence", self.sim_rollouts),
            ("hardware.repeats", self.hardware_repeats),
            ("report.bins", self.report_bins),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{k} must be at least 1")));
        }
        for (k, v) in [("hardware.sigma_q", self.hardware_sigma_q), ("hardware.sigma_qd", self.hardware_sigma_qd)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{k} must be nonnegative, got {v}")));
            }
        }
        let w = &self.score;
        if !(w.w_wasserstein >= 0.0 && w.w_mmd >= 0.0 && w.w_wasserstein + w.w_mmd > 0.0) {
            return Err(Error::InvalidArgument("score weights must be nonnegative and not both zero".into()));
        }
        Ok(())
    }

    pub fn command_config(&self) -> CommandGenConfig {
        CommandGenConfig {
            f_policy_hz: self.gains.f_policy,
            duration_s: self.duration_s,
            seed: self.seed,
            resample_interval_s: self.resample_interval_s,
        }
    }

    pub fn cmaes_config(&self) -> CmaesConfig {
        CmaesConfig {
            population: self.population,
            iterations: self.iterations,
            sigma0: self.sigma0,
            bounds: self.bounds.to_vec(),
            seed: self.seed,
        }
    }

    pub fn sensor_noise(&self) -> SensorNoise {
        SensorNoise::uniform(self.hardware_sigma_q, self.hardware_sigma_qd)
    }

    pub fn setup(&self) -> RolloutSetup<'_> {
        RolloutSetup { gains: &self.gains, config: &self.plant, policy: &self.policy }
    }

    /// All keys with their current values, in file order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        let g = &self.gains;
        for (k, v) in [
            ("k_p", g.k_p),
            ("k_d", g.k_d),
            ("sigma_a", g.sigma_a),
            ("f_policy", g.f_policy),
            ("f_torque", g.f_torque),
            ("delay_ms", g.delay_ms),
        ] {
            kv(&format!("gains.{k}"), v.to_string());
        }
        for (ns, p) in [("params", &self.params), ("init", &self.init)] {
            for (n, v) in ActuatorParams::NAMES.iter().zip(p.to_array()) {
                kv(&format!("{ns}.{n}"), v.to_string());
            }
        }
        for (n, (lo, hi)) in ActuatorParams::NAMES.iter().zip(&self.bounds) {
            kv(&format!("bounds.{n}"), format!("{lo}, {hi}"));
        }
        let p = &self.plant;
        for (k, v) in [
            ("inertia", p.inertia),
            ("viscous_damping", p.viscous_damping),
            ("gravity_torque_amplitude", p.gravity_torque_amplitude),
            ("stance_load_knee", p.stance_load_knee),
            ("stance_load_hip", p.stance_load_hip),
            ("stance_load_speed_cap", p.stance_load_speed_cap),
        ] {
            kv(&format!("plant.{k}"), v.to_string());
        }
        if let Some(path) = &self.position_curve_path {
            kv("plant.position_curve", path.display().to_string());
        }
        let pol = &self.policy;
        kv("policy.base_frequency", pol.base_frequency.to_string());
        kv("policy.frequency_gain", pol.frequency_gain.to_string());
        kv("policy.amplitude", pol.amplitude.to_string());
        kv("commands.duration_s", self.duration_s.to_string());
        kv("commands.resample_interval_s", self.resample_interval_s.to_string());
        kv("cmaes.population", self.population.to_string());
        kv("cmaes.iterations", self.iterations.to_string());
        kv("cmaes.sigma0", self.sigma0.to_string());
        kv("score.w_wasserstein", self.score.w_wasserstein.to_string());
        kv("score.w_mmd", self.score.w_mmd.to_string());
        if let Some(seq) = &self.score.sequence {
            for (id, w) in seq {
                kv(&format!("score.weight.{id}"), w.to_string());
            }
        }
        kv("sim.rollouts_per_sequence", self.sim_rollouts.to_string());
        kv("sim.common_random_numbers", self.common_random_numbers.to_string());
        kv("hardware.repeats", self.hardware_repeats.to_string());
        kv("hardware.sigma_q", self.hardware_sigma_q.to_string());
        kv("hardware.sigma_qd", self.hardware_sigma_qd.to_string());
        kv("noise.band_lo", self.noise_band.0.to_string());
        kv("noise.band_hi", self.noise_band.1.to_string());
        kv("report.bins", self.report_bins.to_string());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn set(slot: &mut f64, v: &str) -> std::result::Result<bool, String> {
    *slot = parse_f64(v)?;
    Ok(true)
}

/// Actuator parameters as `params.<name> = value` lines, loadable as a
/// config file.
pub fn params_to_text(p: &ActuatorParams) -> String {
    ActuatorParams::NAMES
        .iter()
        .zip(p.to_array())
        .fold(String::new(), |mut out, (n, v)| {
            let _ = writeln!(out, "params.{n} = {v}");
            out
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        c.apply_text(text, Path::new("test.cfg"))?;
        Ok(c)
    }

    #[test]
    fn defaults_round_trip_through_text() {
        let c = RunConfig::default();
        assert_eq!(parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn namespaced_keys_and_comments() {
        let c = parse(
            "# gains\n\ngains.k_p = 40\nparams.tau_max = 90.5\nbounds.tau_max = 50, 120\n\
             cmaes.population = 6\nscore.weight.forward_run = 2\nsim.common_random_numbers = false\n",
        )
        .unwrap();
        assert_eq!(c.gains.k_p, 40.0);
        assert_eq!(c.params.tau_max, 90.5);
        assert_eq!(c.bounds[2], (50.0, 120.0));
        assert_eq!(c.population, 6);
        assert_eq!(c.score.sequence.as_ref().unwrap()[&SequenceId::ForwardRun], 2.0);
        assert!(!c.common_random_numbers);
        assert_eq!(parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_line() {
        match parse("seed = 1\ngains.kp = 3\n").unwrap_err() {
            Error::Config { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("gains.kp"));
            }
            e => panic!("{e}"),
        }
        assert!(matches!(parse("cmaes.population = ten").unwrap_err(), Error::Config { line: 1, .. }));
        assert!(matches!(parse("no equals sign").unwrap_err(), Error::Config { .. }));
        assert!(matches!(parse("cmaes.population = 1").unwrap_err(), Error::Config { .. }));
        assert!(matches!(parse("init.tau_max = 200").unwrap_err(), Error::Config { .. }));
    }

    #[test]
    fn params_text_loads_as_config() {
        let p = ActuatorParams { tau_max: 88.25, ..ActuatorParams::spot_calibrated() };
        assert_eq!(parse(&params_to_text(&p)).unwrap().params, p);
    }
}
