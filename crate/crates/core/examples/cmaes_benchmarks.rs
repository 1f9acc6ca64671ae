//! Box-constrained CMA-ES on the sphere and Rosenbrock functions, followed
//! by a checkpoint round trip.
//!
//! cargo run --example cmaes_benchmarks [seed]

use simgap::cmaes::{optimize, optimize_from, CmaesConfig, CmaesState};

fn main() -> simgap::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);

    let target: Vec<f64> = (0..8).map(|i| 0.3 * i as f64 - 1.0).collect();
    let sphere_cfg = CmaesConfig { seed, ..CmaesConfig::new(vec![(-5.0, 5.0); 8]) };
    let sphere = optimize(|x| Ok(x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum()), &sphere_cfg, None)?;
    println!("sphere d=8, {} generations of {}:", sphere_cfg.iterations, sphere_cfg.population);
    for g in sphere.history.iter().step_by(20) {
        println!("  gen {:>3}  best {:.3e}  sigma {:.3e}", g.generation, g.best, g.step_size);
    }
    println!("  final best {:.3e}", sphere.best_fitness);

    let rosen = |x: &[f64]| -> simgap::Result<f64> {
        Ok(x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum())
    };
    let rosen_cfg = CmaesConfig { seed, iterations: 300, ..CmaesConfig::new(vec![(-5.0, 5.0); 4]) };
    let r = optimize(rosen, &rosen_cfg, None)?;
    println!("\nrosenbrock d=4 after 300 generations: {:.3e} at {:?}", r.best_fitness, r.best_params);

    // Stop half way, save, reload and finish: same answer as one long run.
    let half = CmaesConfig { iterations: 150, ..rosen_cfg.clone() };
    let first = optimize_from(CmaesState::new(&half, None)?, &half, |c| c.iter().map(|x| rosen(x)).collect(), |_, _| Ok(()))?;
    let path = std::env::temp_dir().join("cmaes_example_checkpoint.json");
    first.state.save(&path)?;
    let resumed = optimize_from(CmaesState::load(&path)?, &rosen_cfg, |c| c.iter().map(|x| rosen(x)).collect(), |_, _| Ok(()))?;
    println!("resumed from a checkpoint: {:.3e} (identical: {})", resumed.best_fitness, resumed.state == r.state);
    std::fs::remove_file(path).ok();
    Ok(())
}
