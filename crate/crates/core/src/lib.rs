//! Sim-to-real gap scoring and actuator calibration.
//!
//! The crate scores how far simulated joint rollouts are from hardware
//! rollouts of the same command sequences, using per-feature Wasserstein
//! distances and a kernel maximum mean discrepancy, and tunes an
//! eight-parameter actuator model (two Coulomb frictions plus a six-parameter
//! torque-speed envelope) with CMA-ES so the two distributions agree.
//!
//! A surrogate per-joint plant stands in for the physics simulator, and a
//! synthetic "hardware" generator with sealed ground-truth parameters makes
//! the whole loop checkable on a desk.
//!
//! Modules, bottom-up:
//!
//! - [`actuator`]: PD law, torque-speed/torque-position limits, friction, delay
//! - [`plant`]: surrogate joint dynamics, scripted gait, rollout generators
//! - [`rollout`]: command sequences, rollout CSV format, feature extraction
//! - [`metrics`]: Wasserstein, MMD, median heuristic, aggregate score
//! - [`noise`]: FFT-based observation noise estimation and corruption
//! - [`cmaes`]: ask/tell CMA-ES over a bounded box
//! - [`calibration`]: the pipeline stages behind the `simgap` binary
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod actuator;
pub mod calibration;
pub mod cmaes;
pub mod config;
pub mod error;
pub mod metrics;
pub mod noise;
pub mod plant;
pub mod report;
pub mod rng;
pub mod rollout;

pub use error::{Error, Result};

/// Number of actuated joints: hip_x, hip_y, knee for each of four legs.
pub const N_JOINTS: usize = 12;

/// A per-joint quantity in the fixed joint order.
pub type JointVec = [f64; N_JOINTS];

/// Leg order used for every per-joint array.
pub const LEGS: [&str; 4] = ["fl", "fr", "hl", "hr"];

/// Actuator group a joint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    HipX,
    HipY,
    Knee,
}

impl JointKind {
    /// Kind of joint `j`; joints are ordered leg-major (FL, FR, HL, HR), then
    /// hip_x, hip_y, knee within each leg.
    pub fn of(j: usize) -> JointKind {
        match j % 3 {
            0 => JointKind::HipX,
            1 => JointKind::HipY,
            _ => JointKind::Knee,
        }
    }

    pub fn is_hip(self) -> bool {
        !matches!(self, JointKind::Knee)
    }
}

/// Human-readable joint name, e.g. `fl_hip_x`.
pub fn joint_name(j: usize) -> String {
    let part = match JointKind::of(j) {
        JointKind::HipX => "hip_x",
        JointKind::HipY => "hip_y",
        JointKind::Knee => "knee",
    };
    format!("{}_{}", LEGS[j / 3], part)
}
