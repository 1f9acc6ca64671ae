//! Surrogate joint dynamics and rollout generators.
//!
//! Each joint is an independent rotor driven by the actuator model, with
//! viscous damping, a sinusoidal restoring torque about the standing pose,
//! and an optional external load. A scripted trot gait stands in for the
//! trained policy and also supplies a stance-phase ground load, so that fast
//! commands push the actuators into their torque limits.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::actuator::{
    apply_limits, friction_torque, pd_torque_joint, ActuatorParams, DelayBuffer, GainConfig,
    TorquePositionCurve,
};
use crate::rollout::{CommandSample, CommandSequence, Rollout, SequenceId, Source, Step};
use crate::{rng, Error, JointKind, JointVec, Result, N_JOINTS};

/// Half-width of the uniform initial joint-position perturbation, rad.
pub const INIT_PERTURBATION: f64 = 0.2;

/// Default standing pose: hip_x ±0.1 (left/right), hip_y 0.9, knee −1.5 rad.
pub fn standing_pose() -> JointVec {
    let mut q = [0.0; N_JOINTS];
    for (leg, chunk) in q.chunks_mut(3).enumerate() {
        let side = if leg % 2 == 0 { 1.0 } else { -1.0 };
        chunk.copy_from_slice(&[0.1 * side, 0.9, -1.5]);
    }
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Reflected rotor + link inertia per joint, kg·m².
    pub inertia: f64,
    /// N·m·s/rad.
    pub viscous_damping: f64,
    pub q_default: JointVec,
    /// Amplitude of the restoring torque `−g·sin(q − q_default)`, N·m.
    pub gravity_torque_amplitude: f64,
    /// Peak stance load on each knee per unit command magnitude, N·m.
    /// Flexes the knee, so the actuator answers with positive torque.
    pub stance_load_knee: f64,
    /// Peak stance load on each hip_y per unit command magnitude, N·m.
    /// Extends the hip, so the actuator answers with negative torque.
    pub stance_load_hip: f64,
    /// Command magnitude above which the stance load stops growing.
    pub stance_load_speed_cap: f64,
    pub position_curve: Option<TorquePositionCurve>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            inertia: 0.05,
            viscous_damping: 0.01,
            q_default: standing_pose(),
            gravity_torque_amplitude: 2.0,
            stance_load_knee: 28.0,
            stance_load_hip: 30.0,
            stance_load_speed_cap: 4.5,
            position_curve: None,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inertia.is_finite() && self.inertia > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "plant.inertia must be positive, got {}",
                self.inertia
            )));
        }
        let nonneg = [
            ("viscous_damping", self.viscous_damping),
            ("gravity_torque_amplitude", self.gravity_torque_amplitude),
            ("stance_load_knee", self.stance_load_knee),
            ("stance_load_hip", self.stance_load_hip),
            ("stance_load_speed_cap", self.stance_load_speed_cap),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "plant.{name} must be nonnegative, got {v}"
                )));
            }
        }
        if self.q_default.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidArgument("plant.q_default must be finite".into()));
        }
        Ok(())
    }
}

/// Open-loop trot used in place of a trained policy.
///
/// Gait frequency grows with the command magnitude; diagonal leg pairs
/// (FL+HR, FR+HL) move in phase. Each leg spends half of its cycle in swing
/// (`sin θ > 0`) and half in stance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub base_frequency: f64,
    pub frequency_gain: f64,
    /// Action units per unit command.
    pub amplitude: f64,
}

impl Default for ScriptedPolicy {
    fn default() -> Self {
        ScriptedPolicy { base_frequency: 1.5, frequency_gain: 0.5, amplitude: 0.25 }
    }
}

const LEG_PHASE: [f64; 4] = [0.0, 0.5, 0.5, 0.0];

impl ScriptedPolicy {
    pub fn gait_frequency(&self, cmd: &CommandSample) -> f64 {
        self.base_frequency + self.frequency_gain * cmd.norm()
    }

    fn leg_angle(&self, cmd: &CommandSample, t: f64, leg: usize) -> f64 {
        std::f64::consts::TAU * (self.gait_frequency(cmd) * t + LEG_PHASE[leg])
    }

    /// Actions for every joint, each within `[-1, 1]`. Zero command means
    /// standing still.
    pub fn action(&self, cmd: &CommandSample, t: f64) -> JointVec {
        let mut a = [0.0; N_JOINTS];
        if cmd.is_zero() {
            return a;
        }
        let k = self.amplitude;
        for leg in 0..4 {
            let s = self.leg_angle(cmd, t, leg).sin();
            let side = if leg % 2 == 0 { 1.0 } else { -1.0 };
            let hip_x = k * (cmd.v_y + 0.5 * side * cmd.omega_z) * s;
            let hip_y = k * (cmd.v_x + 0.3 * (cmd.v_y.abs() + cmd.omega_z.abs())) * s;
            let knee = -k * (0.5 + cmd.norm()) * s.max(0.0);
            a[3 * leg] = hip_x.clamp(-1.0, 1.0);
            a[3 * leg + 1] = hip_y.clamp(-1.0, 1.0);
            a[3 * leg + 2] = knee.clamp(-1.0, 1.0);
        }
        a
    }

    /// Stance intensity of each leg in `[0, 1]`: a half-sine over the stance
    /// half of the cycle, zero when standing.
    pub fn stance(&self, cmd: &CommandSample, t: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        if cmd.is_zero() {
            return out;
        }
        for (leg, o) in out.iter_mut().enumerate() {
            *o = (-self.leg_angle(cmd, t, leg).sin()).max(0.0);
        }
        out
    }
}

/// External ground-reaction torques for one policy tick.
pub fn stance_load(policy: &ScriptedPolicy, config: &PlantConfig, cmd: &CommandSample, t: f64) -> JointVec {
    let stance = policy.stance(cmd, t);
    let speed = cmd.norm().min(config.stance_load_speed_cap);
    let mut load = [0.0; N_JOINTS];
    for (j, l) in load.iter_mut().enumerate() {
        let s = stance[j / 3] * speed;
        *l = match JointKind::of(j) {
            JointKind::HipX => 0.0,
            JointKind::HipY => config.stance_load_hip * s,
            JointKind::Knee => -config.stance_load_knee * s,
        };
    }
    load
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub q: JointVec,
    pub q_dot: JointVec,
    pub t: f64,
    pub delay: DelayBuffer,
}

impl PlantState {
    /// At rest at `q`, with an empty (zero-filled) delay line.
    pub fn at_rest(q: JointVec, gains: &GainConfig) -> Self {
        PlantState { q, q_dot: [0.0; N_JOINTS], t: 0.0, delay: DelayBuffer::from_gains(gains) }
    }

    /// Advances one policy period under `action` and a constant external
    /// torque `load`. Returns the torques applied in the last substep.
    ///
    /// Each torque-rate substep pops the delayed action, computes the PD
    /// torque, clamps it to the actuator limits, adds damping, the restoring
    /// term and the load, then integrates with semi-implicit Euler (velocity
    /// first). Coulomb friction is applied to the updated velocity as an
    /// impulse that may bring the joint to rest but not past it.
    pub fn advance(
        &mut self,
        action: &JointVec,
        load: &JointVec,
        params: &ActuatorParams,
        gains: &GainConfig,
        config: &PlantConfig,
    ) -> Result<JointVec> {
        let dt = gains.torque_dt();
        let mut applied = [0.0; N_JOINTS];
        for substep in 0..gains.substeps() {
            let delayed = self.delay.push_pop(*action);
            for j in 0..N_JOINTS {
                let (q, qd, qd0) = (self.q[j], self.q_dot[j], config.q_default[j]);
                let tau_cmd = pd_torque_joint(delayed[j], q, qd, qd0, gains);
                let tau = apply_limits(tau_cmd, q, qd, params, config.position_curve.as_ref())?;
                let net = tau - config.viscous_damping * qd - config.gravity_torque_amplitude * (q - qd0).sin()
                    + load[j];
                let qd_free = qd + net / config.inertia * dt;
                // Friction acts against the motion the other torques would
                // produce and can at most stop the joint, never reverse it.
                let coulomb = params.friction_for(j);
                let qd_next = if qd_free.abs() * config.inertia <= coulomb * dt {
                    0.0
                } else {
                    qd_free + friction_torque(qd_free, coulomb) / config.inertia * dt
                };
                let q_next = q + qd_next * dt;
                if !(qd_next.is_finite() && q_next.is_finite()) {
                    return Err(Error::NonFinite { joint: j, substep });
                }
                self.q_dot[j] = qd_next;
                self.q[j] = q_next;
                applied[j] = tau;
            }
        }
        self.t += gains.policy_dt();
        Ok(applied)
    }
}

/// One policy period of the unloaded plant.
pub fn step(
    state: &PlantState,
    action: &JointVec,
    params: &ActuatorParams,
    gains: &GainConfig,
    config: &PlantConfig,
) -> Result<PlantState> {
    let mut next = state.clone();
    next.advance(action, &[0.0; N_JOINTS], params, gains, config)?;
    Ok(next)
}

/// Shared settings for generating rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSetup<'a> {
    pub gains: &'a GainConfig,
    pub config: &'a PlantConfig,
    pub policy: &'a ScriptedPolicy,
}

fn init_stream(seed: u64, seq: SequenceId, index: usize) -> rand_chacha::ChaCha8Rng {
    rng::stream(seed, &format!("plant.init.{seq}"), index as u64)
}

/// Runs one rollout; returns the true (noise-free) record.
fn run(
    seq: &CommandSequence,
    params: &ActuatorParams,
    setup: &RolloutSetup<'_>,
    source: Source,
    index: usize,
    seed: u64,
) -> Result<Rollout> {
    let mut rng = init_stream(seed, seq.id, index);
    let mut q0 = setup.config.q_default;
    for q in q0.iter_mut() {
        *q += rng.gen_range(-INIT_PERTURBATION..=INIT_PERTURBATION);
    }
    let mut state = PlantState::at_rest(q0, setup.gains);
    let mut steps = Vec::with_capacity(seq.len());
    for cmd in &seq.samples {
        let action = setup.policy.action(cmd, cmd.t);
        let load = stance_load(setup.policy, setup.config, cmd, cmd.t);
        let (q, q_dot) = (state.q, state.q_dot);
        let tau = state.advance(&action, &load, params, setup.gains, setup.config)?;
        steps.push(Step { q, q_dot, action, command: *cmd, tau_applied: Some(tau) });
    }
    Ok(Rollout { sequence_id: seq.id, source, repeat_index: index, dt: 1.0 / seq.f_policy, steps })
}

/// Simulated rollouts of `seq`, each from a seeded random perturbation of
/// the standing pose. No sensor noise is added.
pub fn rollout_sim(
    seq: &CommandSequence,
    params: &ActuatorParams,
    setup: &RolloutSetup<'_>,
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<Rollout>> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("n_rollouts must be at least 1".into()));
    }
    params.validate()?;
    (0..n_rollouts)
        .map(|i| run(seq, params, setup, Source::Simulated, i, seed))
        .collect()
}

/// Per-channel sensor noise standard deviations for recorded joint states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    pub q: JointVec,
    pub q_dot: JointVec,
}

impl SensorNoise {
    pub fn zero() -> Self {
        SensorNoise { q: [0.0; N_JOINTS], q_dot: [0.0; N_JOINTS] }
    }

    pub fn uniform(sigma_q: f64, sigma_qd: f64) -> Self {
        SensorNoise { q: [sigma_q; N_JOINTS], q_dot: [sigma_qd; N_JOINTS] }
    }
}

/// Stand-in for hardware data collection: rollouts with the hidden actuator
/// parameters, tagged as hardware, with Gaussian noise added to the recorded
/// positions and velocities (the dynamics themselves stay noise-free).
/// Torques are not recorded.
pub fn rollout_synthetic_hardware(
    seq: &CommandSequence,
    hidden_params: &ActuatorParams,
    setup: &RolloutSetup<'_>,
    noise: &SensorNoise,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<Rollout>> {
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("n_repeats must be at least 1".into()));
    }
    hidden_params.validate()?;
    let sigmas = noise.q.iter().chain(&noise.q_dot);
    if let Some(s) = sigmas.clone().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::InvalidArgument(format!("noise sigma must be nonnegative, got {s}")));
    }
    let q_noise: Vec<Normal<f64>> = noise.q.iter().map(|&s| Normal::new(0.0, s).expect("sigma >= 0")).collect();
    let qd_noise: Vec<Normal<f64>> =
        noise.q_dot.iter().map(|&s| Normal::new(0.0, s).expect("sigma >= 0")).collect();
    (0..n_repeats)
        .map(|i| {
            let mut r = run(seq, hidden_params, setup, Source::Hardware, i, seed)?;
            let mut rng = rng::stream(seed, &format!("plant.sensor.{}", seq.id), i as u64);
            for s in &mut r.steps {
                for j in 0..N_JOINTS {
                    s.q[j] += q_noise[j].sample(&mut rng);
                    s.q_dot[j] += qd_noise[j].sample(&mut rng);
                }
                s.tau_applied = None;
            }
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::{gen_command_sequences, CommandGenConfig};

    fn neutral_params() -> ActuatorParams {
        ActuatorParams {
            friction_hip: 0.0,
            friction_knee: 0.0,
            tau_max: 1e9,
            tau_min: -1e9,
            omega_max: 1e9,
            omega_min: -1e9,
            intersect_pos: 1e8,
            intersect_neg: -1e8,
        }
    }

    fn bare_plant() -> PlantConfig {
        PlantConfig { viscous_damping: 0.0, gravity_torque_amplitude: 0.0, ..Default::default() }
    }

    #[test]
    fn rest_is_an_equilibrium() {
        let gains = GainConfig::default();
        let config = PlantConfig::default();
        let params = ActuatorParams::spot_calibrated();
        let mut s = PlantState::at_rest(config.q_default, &gains);
        for _ in 0..50 {
            s = step(&s, &[0.0; N_JOINTS], &params, &gains, &config).unwrap();
        }
        assert_eq!(s.q, config.q_default);
        assert_eq!(s.q_dot, [0.0; N_JOINTS]);
        assert!((s.t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_action_settles_at_pd_fixed_point() {
        let gains = GainConfig::default();
        let config = bare_plant();
        let params = neutral_params();
        let action = [0.7; N_JOINTS];
        let mut s = PlantState::at_rest(config.q_default, &gains);
        for _ in 0..500 {
            s = step(&s, &action, &params, &gains, &config).unwrap();
        }
        for j in 0..N_JOINTS {
            let target = config.q_default[j] + gains.sigma_a * 0.7;
            assert!((s.q[j] - target).abs() < 1e-9, "joint {j}: {} vs {target}", s.q[j]);
        }
    }

    #[test]
    fn first_substep_sees_only_the_delayed_action() {
        // With a 4-substep policy period and one step of delay, the new action
        // acts for three substeps; compare against a no-delay run of three.
        let gains = GainConfig::default();
        let config = bare_plant();
        let params = neutral_params();
        let action = [1.0; N_JOINTS];
        let start = PlantState::at_rest(config.q_default, &gains);
        let delayed = step(&start, &action, &params, &gains, &config).unwrap();

        let per_substep = GainConfig { f_policy: 200.0, delay_ms: 0.0, ..gains };
        let zero = [0.0; N_JOINTS];
        let mut s = PlantState::at_rest(config.q_default, &per_substep);
        s.advance(&zero, &zero, &params, &per_substep, &config).unwrap();
        for _ in 0..3 {
            s.advance(&action, &zero, &params, &per_substep, &config).unwrap();
        }
        assert_eq!(delayed.q, s.q);
        assert_eq!(delayed.q_dot, s.q_dot);
        assert!(delayed.q[0] > start.q[0]);
    }

    #[test]
    fn non_finite_state_reports_joint() {
        let gains = GainConfig::default();
        let config = PlantConfig::default();
        let mut s = PlantState::at_rest(config.q_default, &gains);
        s.q_dot[5] = f64::INFINITY;
        let err = step(&s, &[0.0; N_JOINTS], &ActuatorParams::spot_calibrated(), &gains, &config).unwrap_err();
        assert!(matches!(err, Error::NonFinite { joint: 5, substep: 0 }), "{err}");
    }

    #[test]
    fn policy_is_bounded_and_standing_is_still() {
        let p = ScriptedPolicy::default();
        let zero = CommandSample::default();
        assert_eq!(p.action(&zero, 1.3), [0.0; N_JOINTS]);
        let fast = CommandSample { t: 0.0, v_x: 5.5, v_y: 1.5, omega_z: 2.0 };
        for k in 0..200 {
            let a = p.action(&fast, k as f64 * 0.02);
            assert!(a.iter().all(|v| v.abs() <= 1.0));
        }
        // Diagonal pairs share a phase.
        let a = p.action(&CommandSample { v_x: 1.0, ..zero }, 0.13);
        assert_eq!(a[1], a[10]);
        assert_eq!(a[4], a[7]);
    }

    fn short_sequences() -> Vec<CommandSequence> {
        gen_command_sequences(&CommandGenConfig { duration_s: 2.0, seed: 3, ..Default::default() }).unwrap()
    }

    #[test]
    fn rollouts_are_deterministic_and_distinct() {
        let (gains, config, policy) = (GainConfig::default(), PlantConfig::default(), ScriptedPolicy::default());
        let setup = RolloutSetup { gains: &gains, config: &config, policy: &policy };
        let seq = &short_sequences()[0];
        let params = ActuatorParams::spot_calibrated();
        let a = rollout_sim(seq, &params, &setup, 2, 11).unwrap();
        let b = rollout_sim(seq, &params, &setup, 2, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_ne!(a[0].steps[0].q, a[1].steps[0].q);
        assert!(a.iter().all(|r| r.len() == seq.len() && r.source == Source::Simulated));
        for j in 0..N_JOINTS {
            let d = a[0].steps[0].q[j] - config.q_default[j];
            assert!(d.abs() <= INIT_PERTURBATION);
        }
        assert!(rollout_sim(seq, &params, &setup, 0, 11).is_err());
    }

    #[test]
    fn noiseless_hardware_matches_simulation() {
        let (gains, config, policy) = (GainConfig::default(), PlantConfig::default(), ScriptedPolicy::default());
        let setup = RolloutSetup { gains: &gains, config: &config, policy: &policy };
        let params = ActuatorParams::spot_calibrated();
        for seq in &short_sequences() {
            let sim = rollout_sim(seq, &params, &setup, 2, 5).unwrap();
            let hw = rollout_synthetic_hardware(seq, &params, &setup, &SensorNoise::zero(), 2, 5).unwrap();
            for (s, h) in sim.iter().zip(&hw) {
                assert_eq!(h.source, Source::Hardware);
                for (ss, hs) in s.steps.iter().zip(&h.steps) {
                    assert_eq!(ss.q, hs.q);
                    assert_eq!(ss.q_dot, hs.q_dot);
                    assert_eq!(ss.action, hs.action);
                    assert!(hs.tau_applied.is_none());
                }
            }
        }
    }

    #[test]
    fn fast_commands_saturate_the_actuators() {
        let (gains, config, policy) = (GainConfig::default(), PlantConfig::default(), ScriptedPolicy::default());
        let setup = RolloutSetup { gains: &gains, config: &config, policy: &policy };
        let seq = &short_sequences()[0];
        let params = ActuatorParams::calibration_start();
        let r = &rollout_sim(seq, &params, &setup, 1, 1).unwrap()[0];
        let peak = r
            .steps
            .iter()
            .flat_map(|s| s.tau_applied.unwrap())
            .fold(0.0_f64, |m, t| m.max(t.abs()));
        assert!(peak >= 69.0, "peak applied torque {peak}");
    }
}
