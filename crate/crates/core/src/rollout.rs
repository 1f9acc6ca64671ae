//! Command sequences, rollouts, their CSV format, and feature extraction.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::actuator::GainConfig;
use crate::{rng, Error, JointVec, Result, N_JOINTS};

/// Generation-time command bounds.
pub const VX_RANGE: (f64, f64) = (-2.0, 5.5);
pub const VY_RANGE: (f64, f64) = (-1.5, 1.5);
pub const WZ_RANGE: (f64, f64) = (-2.0, 2.0);

/// Peak forward speed of the forward-run sequence, m/s.
pub const FORWARD_RUN_PEAK: f64 = 4.0;
/// Command magnitude held on each axis of the six-direction sequence.
pub const SIX_DIRECTION_MAGNITUDE: f64 = 1.5;

/// Velocity command at one policy tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CommandSample {
    pub t: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub omega_z: f64,
}

impl CommandSample {
    pub fn norm(&self) -> f64 {
        (self.v_x * self.v_x + self.v_y * self.v_y + self.omega_z * self.omega_z).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.v_x == 0.0 && self.v_y == 0.0 && self.omega_z == 0.0
    }
}

/// Which scripted command sequence a rollout belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SequenceId {
    ForwardRun,
    SixDirection,
    Randomized,
    User,
}

impl SequenceId {
    pub const ALL: [SequenceId; 4] = [
        SequenceId::ForwardRun,
        SequenceId::SixDirection,
        SequenceId::Randomized,
        SequenceId::User,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SequenceId::ForwardRun => "forward_run",
            SequenceId::SixDirection => "six_direction",
            SequenceId::Randomized => "randomized",
            SequenceId::User => "user",
        }
    }
}

impl fmt::Display for SequenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SequenceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SequenceId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sequence id {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSequence {
    pub id: SequenceId,
    pub f_policy: f64,
    pub samples: Vec<CommandSample>,
}

impl CommandSequence {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.f_policy
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Settings for [`gen_command_sequences`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandGenConfig {
    pub f_policy_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub resample_interval_s: f64,
}

impl Default for CommandGenConfig {
    fn default() -> Self {
        CommandGenConfig {
            f_policy_hz: 50.0,
            duration_s: 10.0,
            seed: 0,
            resample_interval_s: 2.0,
        }
    }
}

impl CommandGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        if !(self.f_policy_hz.is_finite() && self.f_policy_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "f_policy_hz must be positive, got {}",
                self.f_policy_hz
            )));
        }
        if !(self.resample_interval_s.is_finite() && self.resample_interval_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "resample_interval_s must be positive, got {}",
                self.resample_interval_s
            )));
        }
        if self.n_samples() == 0 {
            return Err(Error::InvalidArgument(format!(
                "duration {} s is shorter than one policy tick",
                self.duration_s
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.f_policy_hz).round() as usize
    }
}

/// Builds the four scripted command sequences: a forward run ramping to
/// 4 m/s, the six signed command axes in turn, piecewise-constant random
/// commands, and a fixed mixed script standing in for teleoperation.
pub fn gen_command_sequences(cfg: &CommandGenConfig) -> Result<Vec<CommandSequence>> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let dt = 1.0 / cfg.f_policy_hz;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let make = |id: SequenceId, f: &mut dyn FnMut(usize, f64) -> (f64, f64, f64)| {
        let samples = times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let (v_x, v_y, omega_z) = f(k, t);
                CommandSample { t, v_x, v_y, omega_z }
            })
            .collect();
        CommandSequence { id, f_policy: cfg.f_policy_hz, samples }
    };
    let duration = n as f64 * dt;

    let ramp_end = 0.5 * duration;
    let forward = make(SequenceId::ForwardRun, &mut |_, t| {
        (FORWARD_RUN_PEAK * (t / ramp_end).min(1.0), 0.0, 0.0)
    });

    let six = make(SequenceId::SixDirection, &mut |k, _| {
        // Each axis gets an equal slot: active for the first two thirds,
        // zero command for the rest.
        let slot = (k * 6 / n).min(5);
        let within = (k * 6) % n;
        if within * 3 >= 2 * n {
            return (0.0, 0.0, 0.0);
        }
        let m = SIX_DIRECTION_MAGNITUDE;
        match slot {
            0 => (m, 0.0, 0.0),
            1 => (-m, 0.0, 0.0),
            2 => (0.0, m, 0.0),
            3 => (0.0, -m, 0.0),
            4 => (0.0, 0.0, m),
            _ => (0.0, 0.0, -m),
        }
    });

    let mut rng = rng::stream(cfg.seed, "commands.randomized", 0);
    let mut current = (0.0, 0.0, 0.0);
    let mut next_switch = 0.0;
    let randomized = make(SequenceId::Randomized, &mut |_, t| {
        if t >= next_switch - 1e-12 {
            current = (
                rng.gen_range(VX_RANGE.0..=VX_RANGE.1),
                rng.gen_range(VY_RANGE.0..=VY_RANGE.1),
                rng.gen_range(WZ_RANGE.0..=WZ_RANGE.1),
            );
            next_switch += cfg.resample_interval_s;
        }
        current
    });

    const USER_SCRIPT: [(f64, (f64, f64, f64)); 7] = [
        (0.10, (0.0, 0.0, 0.0)),
        (0.30, (1.0, 0.0, 0.0)),
        (0.45, (2.5, 0.0, 0.5)),
        (0.60, (0.0, -1.0, 0.0)),
        (0.75, (3.0, 0.0, -1.0)),
        (0.90, (-1.0, 0.5, 0.0)),
        (1.00, (0.0, 0.0, 0.0)),
    ];
    let user = make(SequenceId::User, &mut |_, t| {
        let frac = t / duration;
        USER_SCRIPT
            .iter()
            .find(|(end, _)| frac < *end)
            .map_or((0.0, 0.0, 0.0), |(_, c)| *c)
    });

    Ok(vec![forward, six, randomized, user])
}

/// Where a rollout came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Hardware,
    Simulated,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Hardware => "hardware",
            Source::Simulated => "simulated",
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hardware" => Ok(Source::Hardware),
            "simulated" => Ok(Source::Simulated),
            other => Err(Error::InvalidArgument(format!("unknown source {other:?}"))),
        }
    }
}

/// One recorded policy tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub q: JointVec,
    pub q_dot: JointVec,
    pub action: JointVec,
    pub command: CommandSample,
    pub tau_applied: Option<JointVec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub sequence_id: SequenceId,
    pub source: Source,
    pub repeat_index: usize,
    pub dt: f64,
    pub steps: Vec<Step>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Conventional file name, e.g. `hardware_forward_run_r02.csv`.
    pub fn file_name(&self) -> String {
        format!(
            "{}_{}_r{:02}.csv",
            self.source.as_str(),
            self.sequence_id,
            self.repeat_index
        )
    }

    fn has_torque(&self) -> bool {
        self.steps.first().is_some_and(|s| s.tau_applied.is_some())
    }

    /// Column `channel` of the raw record as a time series, using the
    /// CSV column names (`q_3`, `qd_7`, `a_0`, ...).
    pub fn channel(&self, name: &str) -> Option<Vec<f64>> {
        let (prefix, idx) = name.rsplit_once('_')?;
        let j: usize = idx.parse().ok()?;
        if j >= N_JOINTS {
            return None;
        }
        let pick: fn(&Step) -> &JointVec = match prefix {
            "q" => |s| &s.q,
            "qd" => |s| &s.q_dot,
            "a" => |s| &s.action,
            _ => return None,
        };
        Some(self.steps.iter().map(|s| pick(s)[j]).collect())
    }
}

/// Names of the raw per-joint channels in CSV column order (without `t`,
/// commands, or torques).
pub fn channel_names() -> Vec<String> {
    ["q", "qd", "a"]
        .iter()
        .flat_map(|p| (0..N_JOINTS).map(move |j| format!("{p}_{j}")))
        .collect()
}

fn rollout_header(with_tau: bool) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(channel_names());
    cols.extend(["cmd_vx", "cmd_vy", "cmd_wz"].map(String::from));
    if with_tau {
        cols.extend((0..N_JOINTS).map(|j| format!("tau_{j}")));
    }
    cols
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&v.to_string());
    }
    out.push('\n');
}

/// Serializes a rollout to the CSV format. Numbers are written in their
/// shortest round-trip form.
pub fn rollout_to_csv(r: &Rollout) -> String {
    let with_tau = r.has_torque();
    let mut out = String::new();
    out.push_str(&format!("# sequence_id={}\n", r.sequence_id));
    out.push_str(&format!("# source={}\n", r.source.as_str()));
    out.push_str(&format!("# repeat_index={}\n", r.repeat_index));
    out.push_str(&format!("# dt={}\n", r.dt));
    out.push_str(&rollout_header(with_tau).join(","));
    out.push('\n');
    for s in &r.steps {
        let c = &s.command;
        let tau = s.tau_applied.iter().flatten().copied();
        push_row(
            &mut out,
            std::iter::once(c.t)
                .chain(s.q)
                .chain(s.q_dot)
                .chain(s.action)
                .chain([c.v_x, c.v_y, c.omega_z])
                .chain(tau),
        );
    }
    out
}

pub fn save_rollout(r: &Rollout, path: &Path) -> Result<()> {
    if r.steps.iter().any(|s| s.tau_applied.is_some() != r.has_torque()) {
        return Err(Error::InvalidArgument(
            "tau_applied must be present on every step or on none".into(),
        ));
    }
    fs::write(path, rollout_to_csv(r)).map_err(|e| Error::io(path, e))
}

struct CsvBody<'a> {
    meta: Vec<(usize, &'a str, &'a str)>,
    header: Option<(usize, Vec<&'a str>)>,
    rows: Vec<(usize, &'a str)>,
}

fn split_csv(text: &str) -> CsvBody<'_> {
    let mut body = CsvBody { meta: Vec::new(), header: None, rows: Vec::new() };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                body.meta.push((lineno, k.trim(), v.trim()));
            }
            continue;
        }
        match body.header {
            None => body.header = Some((lineno, line.split(',').map(str::trim).collect())),
            Some(_) => body.rows.push((lineno, line)),
        }
    }
    body
}

fn parse_row(path: &Path, lineno: usize, line: &str, width: usize) -> Result<Vec<f64>> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != width {
        let column = if cells.len() > width {
            cells[..width].iter().map(|c| c.len() + 1).sum::<usize>() + 1
        } else {
            line.len() + 1
        };
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            column,
            message: format!("expected {width} fields, found {}", cells.len()),
        });
    }
    let mut offset = 1;
    let mut out = Vec::with_capacity(width);
    for cell in cells {
        let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            column: offset,
            message: format!("not a number: {:?}", cell.trim()),
        })?;
        out.push(v);
        offset += cell.len() + 1;
    }
    Ok(out)
}

fn meta_value<'a>(path: &Path, body: &CsvBody<'a>, key: &str) -> Result<(usize, &'a str)> {
    body.meta
        .iter()
        .find(|(_, k, _)| *k == key)
        .map(|(l, _, v)| (*l, *v))
        .ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            message: format!("missing metadata line `# {key}=...`"),
        })
}

fn parse_meta<T: FromStr>(path: &Path, body: &CsvBody<'_>, key: &str) -> Result<T> {
    let (line, v) = meta_value(path, body, key)?;
    v.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        column: key.len() + 4,
        message: format!("bad value for {key}: {v:?}"),
    })
}

fn check_joint_columns(path: &Path, header: &[&str]) -> Result<()> {
    for prefix in ["q_", "qd_", "a_"] {
        let n = header.iter().filter(|c| c.starts_with(prefix)).count();
        if n != N_JOINTS {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("{n} `{prefix}*` columns, expected {N_JOINTS}"),
            });
        }
    }
    let n_tau = header.iter().filter(|c| c.starts_with("tau_")).count();
    if n_tau != 0 && n_tau != N_JOINTS {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("{n_tau} `tau_*` columns, expected 0 or {N_JOINTS}"),
        });
    }
    Ok(())
}

pub fn rollout_from_csv(path: &Path, text: &str) -> Result<Rollout> {
    let body = split_csv(text);
    let Some((header_line, header)) = &body.header else {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: text.lines().count().max(1),
            column: 1,
            message: "no header row".into(),
        });
    };
    check_joint_columns(path, header)?;
    let with_tau = header.iter().any(|c| c.starts_with("tau_"));
    let expected = rollout_header(with_tau);
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!(
                "line {header_line}: header does not match `{}`",
                expected.join(",")
            ),
        });
    }
    let sequence_id: SequenceId = {
        let (line, v) = meta_value(path, &body, "sequence_id")?;
        v.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 15,
            message: format!("unknown sequence id {v:?}"),
        })?
    };
    let source: Source = {
        let (line, v) = meta_value(path, &body, "source")?;
        v.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 10,
            message: format!("unknown source {v:?}"),
        })?
    };
    let repeat_index: usize = parse_meta(path, &body, "repeat_index")?;
    let dt: f64 = parse_meta(path, &body, "dt")?;

    let n = N_JOINTS;
    let mut steps = Vec::with_capacity(body.rows.len());
    for &(lineno, line) in &body.rows {
        let v = parse_row(path, lineno, line, expected.len())?;
        let block = |start: usize| -> JointVec { v[start..start + n].try_into().expect("12 cells") };
        let c0 = 1 + 3 * n;
        steps.push(Step {
            q: block(1),
            q_dot: block(1 + n),
            action: block(1 + 2 * n),
            command: CommandSample { t: v[0], v_x: v[c0], v_y: v[c0 + 1], omega_z: v[c0 + 2] },
            tau_applied: with_tau.then(|| block(c0 + 3)),
        });
    }
    Ok(Rollout { sequence_id, source, repeat_index, dt, steps })
}

pub fn load_rollout(path: &Path) -> Result<Rollout> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    rollout_from_csv(path, &text)
}

/// Loads every `*.csv` rollout in `dir`, sorted by file name.
pub fn load_rollout_dir(dir: &Path) -> Result<Vec<Rollout>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_rollout(p)).collect()
}

const COMMAND_HEADER: &str = "t,cmd_vx,cmd_vy,cmd_wz";

pub fn command_sequence_to_csv(seq: &CommandSequence) -> String {
    let mut out = format!("# sequence_id={}\n# f_policy_hz={}\n{COMMAND_HEADER}\n", seq.id, seq.f_policy);
    for c in &seq.samples {
        push_row(&mut out, [c.t, c.v_x, c.v_y, c.omega_z]);
    }
    out
}

pub fn save_command_sequence(seq: &CommandSequence, path: &Path) -> Result<()> {
    fs::write(path, command_sequence_to_csv(seq)).map_err(|e| Error::io(path, e))
}

pub fn load_command_sequence(path: &Path) -> Result<CommandSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let body = split_csv(&text);
    let Some((line, header)) = &body.header else {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "no header row".into(),
        });
    };
    if header.join(",") != COMMAND_HEADER {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("line {line}: header must be `{COMMAND_HEADER}`"),
        });
    }
    let id: SequenceId = {
        let (line, v) = meta_value(path, &body, "sequence_id")?;
        v.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 15,
            message: format!("unknown sequence id {v:?}"),
        })?
    };
    let f_policy: f64 = parse_meta(path, &body, "f_policy_hz")?;
    let samples = body
        .rows
        .iter()
        .map(|&(lineno, row)| {
            parse_row(path, lineno, row, 4)
                .map(|v| CommandSample { t: v[0], v_x: v[1], v_y: v[2], omega_z: v[3] })
        })
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: "command sequence has no samples".into(),
        });
    }
    Ok(CommandSequence { id, f_policy, samples })
}

/// Conventional file name of a command sequence, e.g. `commands_user.csv`.
pub fn command_file_name(id: SequenceId) -> String {
    format!("commands_{id}.csv")
}

/// Row-major matrix of per-timestep feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    cols: usize,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Dimension(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Ok(FeatureMatrix { data: rows.concat(), cols })
    }

    pub fn from_flat(data: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 || data.len() % cols != 0 {
            return Err(Error::Dimension(format!(
                "{} values cannot form rows of {cols} columns",
                data.len()
            )));
        }
        Ok(FeatureMatrix { data, cols })
    }

    pub fn rows(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.data.len() / self.cols
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.iter().skip(j).step_by(self.cols).copied().collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        FeatureMatrix { data: self.data.iter().map(|v| v * c).collect(), cols: self.cols }
    }
}

/// Gain-normalized features: `q·k_p`, `q̇·k_d` and `a·σ_a·k_p` per joint.
pub fn extract_features(rollout: &Rollout, gains: &GainConfig) -> Result<FeatureMatrix> {
    if rollout.is_empty() {
        return Err(Error::InvalidArgument("cannot extract features from an empty rollout".into()));
    }
    if !(gains.k_p > 0.0 && gains.k_d > 0.0 && gains.sigma_a > 0.0) {
        return Err(Error::InvalidArgument("feature gains must be positive".into()));
    }
    let action_scale = gains.sigma_a * gains.k_p;
    let mut data = Vec::with_capacity(rollout.len() * 3 * N_JOINTS);
    for s in &rollout.steps {
        data.extend(s.q.iter().map(|v| v * gains.k_p));
        data.extend(s.q_dot.iter().map(|v| v * gains.k_d));
        data.extend(s.action.iter().map(|v| v * action_scale));
    }
    Ok(FeatureMatrix { data, cols: 3 * N_JOINTS })
}
