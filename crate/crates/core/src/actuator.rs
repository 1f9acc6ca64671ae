//! Parametric actuator model.
//!
//! A policy action is turned into a joint torque by the PD law, then capped by
//! the minimum of a torque-speed envelope and an optional torque-position
//! curve. Coulomb friction opposes joint motion and actions reach the joints
//! through a fixed-depth delay line.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, JointVec, Result, N_JOINTS};

/// PD gains, action scale and loop rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainConfig {
    /// Stiffness, N·m/rad.
    pub k_p: f64,
    /// Damping, N·m·s/rad.
    pub k_d: f64,
    /// Action scale: one action unit is `sigma_a` rad of set-point offset.
    pub sigma_a: f64,
    /// Policy rate, Hz.
    pub f_policy: f64,
    /// Torque (inner loop) rate, Hz.
    pub f_torque: f64,
    /// Action transport delay, ms.
    pub delay_ms: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        GainConfig {
            k_p: 60.0,
            k_d: 1.5,
            sigma_a: 0.2,
            f_policy: 50.0,
            f_torque: 200.0,
            delay_ms: 5.0,
        }
    }
}

fn integral(x: f64) -> Option<usize> {
    let r = x.round();
    ((x - r).abs() < 1e-9 && r >= 0.0).then_some(r as usize)
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("k_p", self.k_p),
            ("k_d", self.k_d),
            ("sigma_a", self.sigma_a),
            ("f_policy", self.f_policy),
            ("f_torque", self.f_torque),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "gains.{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.delay_ms.is_finite() && self.delay_ms >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gains.delay_ms must be nonnegative, got {}",
                self.delay_ms
            )));
        }
        if integral(self.f_torque / self.f_policy).map_or(true, |n| n == 0) {
            return Err(Error::InvalidArgument(format!(
                "gains.f_torque ({}) must be an integer multiple of gains.f_policy ({})",
                self.f_torque, self.f_policy
            )));
        }
        if integral(self.delay_ms * self.f_torque / 1000.0).is_none() {
            return Err(Error::InvalidArgument(format!(
                "gains.delay_ms ({}) is not a whole number of torque steps at {} Hz",
                self.delay_ms, self.f_torque
            )));
        }
        Ok(())
    }

    /// Inner torque-rate substeps per policy step.
    pub fn substeps(&self) -> usize {
        (self.f_torque / self.f_policy).round() as usize
    }

    /// Delay expressed in torque-rate steps.
    pub fn delay_steps(&self) -> usize {
        (self.delay_ms * self.f_torque / 1000.0).round() as usize
    }

    pub fn policy_dt(&self) -> f64 {
        1.0 / self.f_policy
    }

    pub fn torque_dt(&self) -> f64 {
        1.0 / self.f_torque
    }
}

/// The eight calibrated actuator parameters.
///
/// hip_x and hip_y share `friction_hip`; all joints share the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorParams {
    pub friction_hip: f64,
    pub friction_knee: f64,
    pub tau_max: f64,
    pub tau_min: f64,
    pub omega_max: f64,
    pub omega_min: f64,
    pub intersect_pos: f64,
    pub intersect_neg: f64,
}

impl ActuatorParams {
    pub const DIM: usize = 8;

    pub const NAMES: [&'static str; 8] = [
        "friction_hip",
        "friction_knee",
        "tau_max",
        "tau_min",
        "omega_max",
        "omega_min",
        "intersect_pos",
        "intersect_neg",
    ];

    /// Values identified on the real robot; the default hidden parameters of
    /// the synthetic hardware.
    pub fn spot_calibrated() -> Self {
        ActuatorParams {
            friction_hip: 0.008,
            friction_knee: 0.180,
            tau_max: 97.00,
            tau_min: -108.79,
            omega_max: 25.03,
            omega_min: -22.22,
            intersect_pos: 9.48,
            intersect_neg: -8.32,
        }
    }

    /// Starting point of a calibration run: no friction, ±70 N·m,
    /// ±20 rad/s and intersects at zero speed.
    pub fn calibration_start() -> Self {
        ActuatorParams {
            friction_hip: 0.0,
            friction_knee: 0.0,
            tau_max: 70.0,
            tau_min: -70.0,
            omega_max: 20.0,
            omega_min: -20.0,
            intersect_pos: 0.0,
            intersect_neg: 0.0,
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.friction_hip,
            self.friction_knee,
            self.tau_max,
            self.tau_min,
            self.omega_max,
            self.omega_min,
            self.intersect_pos,
            self.intersect_neg,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != Self::DIM {
            return Err(Error::Dimension(format!(
                "actuator parameter vector has {} entries, expected {}",
                v.len(),
                Self::DIM
            )));
        }
        Ok(ActuatorParams {
            friction_hip: v[0],
            friction_knee: v[1],
            tau_max: v[2],
            tau_min: v[3],
            omega_max: v[4],
            omega_min: v[5],
            intersect_pos: v[6],
            intersect_neg: v[7],
        })
    }

    /// Checks sign and ordering constraints. The intersect speeds may sit at
    /// exactly zero, which is where calibration starts.
    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if let Some(i) = a.iter().position(|v| !v.is_finite()) {
            return Err(Error::Model(format!("{} is not finite", Self::NAMES[i])));
        }
        let checks = [
            (self.friction_hip >= 0.0, "friction_hip >= 0"),
            (self.friction_knee >= 0.0, "friction_knee >= 0"),
            (self.tau_min < 0.0 && 0.0 < self.tau_max, "tau_min < 0 < tau_max"),
            (
                self.omega_min < 0.0 && 0.0 < self.omega_max,
                "omega_min < 0 < omega_max",
            ),
            (
                0.0 <= self.intersect_pos && self.intersect_pos < self.omega_max,
                "0 <= intersect_pos < omega_max",
            ),
            (
                self.omega_min < self.intersect_neg && self.intersect_neg <= 0.0,
                "omega_min < intersect_neg <= 0",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, rule)) => Err(Error::Model(format!("violated {rule}: {self:?}"))),
            None => Ok(()),
        }
    }

    pub fn friction_for(&self, joint: usize) -> f64 {
        if crate::JointKind::of(joint).is_hip() {
            self.friction_hip
        } else {
            self.friction_knee
        }
    }
}

/// Piecewise-linear torque bounds as a function of joint position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorquePositionCurve {
    /// `(q, hi, lo)` sorted by `q`.
    breakpoints: Vec<(f64, f64, f64)>,
}

impl TorquePositionCurve {
    pub fn new(mut breakpoints: Vec<(f64, f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::Model("torque-position curve has no breakpoints".into()));
        }
        if breakpoints
            .iter()
            .any(|&(q, hi, lo)| !(q.is_finite() && hi.is_finite() && lo.is_finite()))
        {
            return Err(Error::Model("torque-position curve has non-finite entries".into()));
        }
        breakpoints.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(&(q, hi, lo)) = breakpoints.iter().find(|(_, hi, lo)| hi < lo) {
            return Err(Error::Model(format!(
                "torque-position curve inverted at q={q}: hi={hi} < lo={lo}"
            )));
        }
        Ok(TorquePositionCurve { breakpoints })
    }

    pub fn breakpoints(&self) -> &[(f64, f64, f64)] {
        &self.breakpoints
    }

    /// `(lo, hi)` at position `q`, held constant beyond the end breakpoints.
    pub fn limits(&self, q: f64) -> (f64, f64) {
        let bp = &self.breakpoints;
        let first = bp[0];
        let last = bp[bp.len() - 1];
        if q <= first.0 {
            return (first.2, first.1);
        }
        if q >= last.0 {
            return (last.2, last.1);
        }
        let i = bp.partition_point(|b| b.0 <= q);
        let (q0, hi0, lo0) = bp[i - 1];
        let (q1, hi1, lo1) = bp[i];
        let s = (q - q0) / (q1 - q0);
        (lo0 + s * (lo1 - lo0), hi0 + s * (hi1 - hi0))
    }

    /// Reads a 3-column CSV `q,hi,lo`. A non-numeric first line is taken as a
    /// header; `#` lines are comments.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut points = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Vec<Option<f64>> = cells.iter().map(|c| c.parse().ok()).collect();
            if points.is_empty() && parsed.iter().all(Option::is_none) {
                continue;
            }
            if cells.len() != 3 {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected 3 columns, got {}", idx + 1, cells.len()),
                });
            }
            let mut row = [0.0; 3];
            for (c, (cell, value)) in cells.iter().zip(&parsed).enumerate() {
                row[c] = value.ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    column: c + 1,
                    message: format!("not a number: {cell:?}"),
                })?;
            }
            points.push((row[0], row[1], row[2]));
        }
        Self::new(points)
    }
}

/// PD torque for one joint, unclamped.
#[inline]
pub fn pd_torque_joint(a: f64, q: f64, q_dot: f64, q_default: f64, gains: &GainConfig) -> f64 {
    gains.k_p * (gains.sigma_a * a + (q_default - q)) - gains.k_d * q_dot
}

/// Desired torques `k_p (σ_a a + q_default − q) − k_d q̇` for every joint.
pub fn pd_torque(
    a: &[f64],
    q: &[f64],
    q_dot: &[f64],
    q_default: &[f64],
    gains: &GainConfig,
) -> Result<Vec<f64>> {
    for (name, len) in [
        ("action", a.len()),
        ("q", q.len()),
        ("q_dot", q_dot.len()),
        ("q_default", q_default.len()),
    ] {
        if len != N_JOINTS {
            return Err(Error::Dimension(format!(
                "{name} has {len} entries, expected {N_JOINTS}"
            )));
        }
    }
    Ok((0..N_JOINTS)
        .map(|j| pd_torque_joint(a[j], q[j], q_dot[j], q_default[j], gains))
        .collect())
}

/// Torque bounds `(lo, hi)` of the torque-speed envelope at speed `omega`.
///
/// The upper bound is flat at `tau_max` up to `intersect_pos` and falls
/// linearly to zero at `omega_max`; the lower bound mirrors this through the
/// third quadrant.
pub fn torque_speed_limit(omega: f64, p: &ActuatorParams) -> (f64, f64) {
    let hi = if omega <= p.intersect_pos {
        p.tau_max
    } else if omega >= p.omega_max {
        0.0
    } else {
        p.tau_max * (p.omega_max - omega) / (p.omega_max - p.intersect_pos)
    };
    let lo = if omega >= p.intersect_neg {
        p.tau_min
    } else if omega <= p.omega_min {
        0.0
    } else {
        p.tau_min * (omega - p.omega_min) / (p.intersect_neg - p.omega_min)
    };
    (lo, hi)
}

/// Clamps `tau` into the intersection of the torque-speed envelope and the
/// optional torque-position curve.
pub fn apply_limits(
    tau: f64,
    q: f64,
    omega: f64,
    p: &ActuatorParams,
    pos_curve: Option<&TorquePositionCurve>,
) -> Result<f64> {
    let (ts_lo, ts_hi) = torque_speed_limit(omega, p);
    let (tp_lo, tp_hi) = pos_curve.map_or((f64::NEG_INFINITY, f64::INFINITY), |c| c.limits(q));
    let lo = ts_lo.max(tp_lo);
    let hi = ts_hi.min(tp_hi);
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::Model(format!(
            "empty torque interval [{lo}, {hi}] at q={q}, omega={omega}"
        )));
    }
    Ok(tau.clamp(lo, hi))
}

/// Coulomb friction torque `−coulomb · sign(q̇)`, zero at rest.
pub fn friction_torque(q_dot: f64, coulomb: f64) -> f64 {
    if q_dot > 0.0 {
        -coulomb
    } else if q_dot < 0.0 {
        coulomb
    } else {
        0.0
    }
}

/// Fixed-depth FIFO of action vectors, pre-filled with zero actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBuffer {
    queue: VecDeque<JointVec>,
    depth: usize,
}

impl DelayBuffer {
    pub fn new(depth: usize) -> Self {
        DelayBuffer {
            queue: std::iter::repeat([0.0; N_JOINTS]).take(depth).collect(),
            depth,
        }
    }

    pub fn from_gains(gains: &GainConfig) -> Self {
        Self::new(gains.delay_steps())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Enqueues `action` and returns the one pushed `depth` calls earlier.
    pub fn push_pop(&mut self, action: JointVec) -> JointVec {
        if self.depth == 0 {
            return action;
        }
        self.queue.push_back(action);
        self.queue.pop_front().expect("delay queue holds depth entries")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> (GainConfig, JointVec) {
        (GainConfig::default(), [0.3; N_JOINTS])
    }

    #[test]
    fn pd_equilibrium_is_zero() {
        let (g, qd) = defaults();
        let tau = pd_torque(&[0.0; 12], &qd, &[0.0; 12], &qd, &g).unwrap();
        assert!(tau.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn pd_unit_action_gives_twelve_newton_metres() {
        let (g, qd) = defaults();
        let tau = pd_torque(&[1.0; 12], &qd, &[0.0; 12], &qd, &g).unwrap();
        assert!(tau.iter().all(|&t| (t - 12.0).abs() < 1e-12));
    }

    #[test]
    fn pd_damping_term() {
        let (g, qd) = defaults();
        let tau = pd_torque(&[0.0; 12], &qd, &[2.0; 12], &qd, &g).unwrap();
        assert!(tau.iter().all(|&t| t == -3.0));
    }

    #[test]
    fn pd_rejects_short_arrays() {
        let (g, qd) = defaults();
        let err = pd_torque(&[0.0; 11], &qd, &[0.0; 12], &qd, &g).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn envelope_at_rest_matches_rated_torques() {
        let p = ActuatorParams::spot_calibrated();
        assert_eq!(torque_speed_limit(0.0, &p), (-108.79, 97.00));
    }

    #[test]
    fn envelope_endpoints_and_midpoint() {
        let p = ActuatorParams::spot_calibrated();
        assert_eq!(torque_speed_limit(p.omega_max, &p).1, 0.0);
        assert_eq!(torque_speed_limit(p.omega_min, &p).0, 0.0);
        let mid = 0.5 * (p.intersect_pos + p.omega_max);
        assert!((torque_speed_limit(mid, &p).1 - 48.5).abs() < 1e-12);
        let mid_neg = 0.5 * (p.intersect_neg + p.omega_min);
        assert!((torque_speed_limit(mid_neg, &p).0 + 108.79 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_with_zero_intersect_tapers_from_rest() {
        let p = ActuatorParams::calibration_start();
        assert_eq!(torque_speed_limit(0.0, &p), (-70.0, 70.0));
        assert!((torque_speed_limit(10.0, &p).1 - 35.0).abs() < 1e-12);
        assert!((torque_speed_limit(-10.0, &p).0 + 35.0).abs() < 1e-12);
    }

    #[test]
    fn limits_compose_as_minimum() {
        let p = ActuatorParams::spot_calibrated();
        assert_eq!(apply_limits(150.0, 0.0, 0.0, &p, None).unwrap(), 97.00);
        assert_eq!(apply_limits(10.0, 0.0, 0.0, &p, None).unwrap(), 10.0);
        let curve = TorquePositionCurve::new(vec![(-1.0, 40.0, -30.0), (1.0, 40.0, -30.0)]).unwrap();
        assert_eq!(apply_limits(-50.0, 0.2, 0.0, &p, Some(&curve)).unwrap(), -30.0);
    }

    #[test]
    fn disjoint_limits_are_a_model_error() {
        let p = ActuatorParams::spot_calibrated();
        let curve = TorquePositionCurve::new(vec![(0.0, 200.0, 150.0)]).unwrap();
        assert!(matches!(
            apply_limits(0.0, 0.0, 0.0, &p, Some(&curve)),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn position_curve_interpolates_and_holds_ends() {
        let c = TorquePositionCurve::new(vec![(1.0, 10.0, -10.0), (0.0, 20.0, -20.0)]).unwrap();
        assert_eq!(c.limits(0.5), (-15.0, 15.0));
        assert_eq!(c.limits(-3.0), (-20.0, 20.0));
        assert_eq!(c.limits(3.0), (-10.0, 10.0));
        assert!(TorquePositionCurve::new(vec![(0.0, -1.0, 1.0)]).is_err());
    }

    #[test]
    fn friction_signs() {
        assert_eq!(friction_torque(3.0, 0.180), -0.180);
        assert_eq!(friction_torque(0.0, 0.180), 0.0);
        assert_eq!(friction_torque(-1.0, 0.008), 0.008);
    }

    #[test]
    fn delay_fifo_semantics() {
        let mut b = DelayBuffer::new(1);
        let a0 = [1.0; N_JOINTS];
        let a1 = [2.0; N_JOINTS];
        assert_eq!(b.push_pop(a0), [0.0; N_JOINTS]);
        assert_eq!(b.push_pop(a1), a0);
        let mut pass = DelayBuffer::new(0);
        assert_eq!(pass.push_pop(a1), a1);
        assert_eq!(DelayBuffer::from_gains(&GainConfig::default()).depth(), 1);
    }

    #[test]
    fn gain_validation() {
        assert!(GainConfig::default().validate().is_ok());
        let bad_ratio = GainConfig { f_torque: 130.0, ..Default::default() };
        assert!(bad_ratio.validate().is_err());
        let bad_delay = GainConfig { delay_ms: 3.0, ..Default::default() };
        assert!(bad_delay.validate().is_err());
        let negative = GainConfig { k_p: -1.0, ..Default::default() };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ActuatorParams::spot_calibrated().validate().is_ok());
        assert!(ActuatorParams::calibration_start().validate().is_ok());
        let mut p = ActuatorParams::spot_calibrated();
        p.intersect_pos = 30.0;
        assert!(p.validate().is_err());
        let v = ActuatorParams::spot_calibrated().to_array();
        assert_eq!(ActuatorParams::from_slice(&v).unwrap(), ActuatorParams::spot_calibrated());
        assert!(ActuatorParams::from_slice(&v[..7]).is_err());
    }
}
