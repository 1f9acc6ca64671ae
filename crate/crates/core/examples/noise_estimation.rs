//! Estimating white sensor noise from the top half of the spectrum, then
//! using the estimate to corrupt clean observations.
//!
//! cargo run --example noise_estimation

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use simgap::noise::{corrupt_with, estimate_sigma, NoiseModel};

fn main() -> simgap::Result<()> {
    let f_s = 50.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let white = Normal::new(0.0, 0.01).unwrap();

    // A slow gait-like signal buried in noise: only the noise reaches the
    // band used for the estimate.
    let signal: Vec<f64> = (0..16384)
        .map(|k| {
            let t = k as f64 / f_s;
            0.5 * (2.0 * std::f64::consts::PI * 1.7 * t).sin() + white.sample(&mut rng)
        })
        .collect();
    let sigma = estimate_sigma(&signal, f_s)?;
    println!("true sigma 0.01, estimated {sigma:.5}");

    let model = NoiseModel::new(vec!["q_FL_knee".into(), "qd_FL_knee".into()], vec![sigma, 10.0 * sigma], f_s)?;
    print!("\nnoise model:\n{}", model.to_csv());
    println!("\nthree corrupted copies of the observation [-1.5, 0.0]:");
    for _ in 0..3 {
        let noisy = corrupt_with(&[-1.5, 0.0], &model, &mut rng)?;
        println!("  [{:.4}, {:.4}]", noisy[0], noisy[1]);
    }
    Ok(())
}
