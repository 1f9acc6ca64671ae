//! Actuator model at the calibrated parameters: the torque-speed envelope,
//! the PD law and what clamping does to a torque request.
//!
//! cargo run --example actuator_envelope

use simgap::actuator::{apply_limits, pd_torque_joint, torque_speed_limit, ActuatorParams, DelayBuffer, GainConfig};
use simgap::N_JOINTS;

fn main() -> simgap::Result<()> {
    let p = ActuatorParams::spot_calibrated();
    let gains = GainConfig::default();

    println!("torque-speed envelope");
    println!("{:>8} {:>10} {:>10}", "omega", "lo", "hi");
    for k in -6..=6 {
        let omega = 5.0 * k as f64;
        let (lo, hi) = torque_speed_limit(omega, &p);
        println!("{omega:>8.1} {lo:>10.3} {hi:>10.3}");
    }

    // A large step in the action saturates the actuator once the joint is
    // moving fast.
    let request = pd_torque_joint(8.0, 0.0, 0.0, 0.0, &gains);
    println!("\nPD request for an 8-unit action at rest: {request:.1} N·m");
    for omega in [0.0, 12.0, 20.0, 30.0] {
        let applied = apply_limits(request, 0.0, omega, &p, None)?;
        println!("  applied at {omega:>4.1} rad/s: {applied:.2} N·m");
    }

    let mut delay = DelayBuffer::from_gains(&gains);
    let first = delay.push_pop([1.0; N_JOINTS]);
    let second = delay.push_pop([2.0; N_JOINTS]);
    println!(
        "\n{} ms delay at {} Hz is {} torque step(s): outputs {} then {}",
        gains.delay_ms,
        gains.f_torque,
        delay.depth(),
        first[0],
        second[0]
    );
    Ok(())
}
