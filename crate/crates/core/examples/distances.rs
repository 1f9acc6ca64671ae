//! The two distribution distances behind the similarity score, on toy data.
//!
//! cargo run --example distances

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use simgap::metrics::{median_heuristic, mmd, wasserstein_1d, wasserstein_features};
use simgap::rollout::FeatureMatrix;

fn draw(n: usize, d: usize, mean: f64, sd: f64, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    let normal = Normal::new(mean, sd).unwrap();
    FeatureMatrix::from_flat((0..n * d).map(|_| normal.sample(rng)).collect(), d).unwrap()
}

fn main() -> simgap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    println!("W1 between point sets of different sizes:");
    println!("  {{0, 1}} vs {{0.5}}: {}", wasserstein_1d(&[0.0, 1.0], &[0.5])?);
    println!("  {{0, 0, 3}} vs {{1, 2}}: {}", wasserstein_1d(&[0.0, 0.0, 3.0], &[1.0, 2.0])?);

    let base = draw(500, 4, 0.0, 1.0, &mut rng);
    println!("\n{:>22} {:>10} {:>12} {:>10}", "other sample", "W1 (mean)", "MMD²", "bandwidth");
    for (label, mean, sd) in [("same distribution", 0.0, 1.0), ("mean +0.5", 0.5, 1.0), ("mean +2", 2.0, 1.0), ("sd x2", 0.0, 2.0)] {
        let other = draw(500, 4, mean, sd, &mut rng);
        let h = median_heuristic(&base, &other)?;
        println!(
            "{label:>22} {:>10.4} {:>12.5} {h:>10.4}",
            wasserstein_features(&base, &other)?,
            mmd(&base, &other, h)?
        );
    }
    println!("\nThe unbiased MMD estimate can dip below zero when the samples agree.");
    Ok(())
}
