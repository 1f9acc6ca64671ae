//! (μ/μ_w, λ)-CMA-ES over a bounded box.
//!
//! The search runs in coordinates normalized to `[0, 1]^d` by the bounds.
//! Sampled points are clipped to the unit box before evaluation and the
//! clipped points drive the update. Strategy constants are the usual
//! defaults: `μ = ⌊λ/2⌋` log-rank weights, cumulative step-size adaptation,
//! and rank-one plus rank-μ covariance updates.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesConfig {
    pub population: usize,
    pub iterations: usize,
    /// Initial step size in normalized coordinates.
    pub sigma0: f64,
    /// `(lo, hi)` per dimension; `lo == hi` pins the dimension.
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl CmaesConfig {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        CmaesConfig { population: 10, iterations: 100, sigma0: 0.3, bounds, seed: 0 }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidArgument(format!(
                "cmaes.population must be at least 2, got {}",
                self.population
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("cmaes.iterations must be at least 1".into()));
        }
        if !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cmaes.sigma0 must be positive, got {}",
                self.sigma0
            )));
        }
        if self.bounds.is_empty() {
            return Err(Error::InvalidArgument("cmaes needs at least one dimension".into()));
        }
        if let Some((i, (lo, hi))) = self
            .bounds
            .iter()
            .enumerate()
            .find(|(_, (lo, hi))| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return Err(Error::InvalidArgument(format!("bounds[{i}] = ({lo}, {hi}) is not an interval")));
        }
        Ok(())
    }

    fn to_box(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.bounds).map(|(u, (lo, hi))| lo + u * (hi - lo)).collect()
    }

    fn from_box(&self, x: &[f64], fallback: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .zip(fallback)
            .map(|((x, (lo, hi)), f)| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { *f })
            .collect()
    }
}

/// Strategy constants derived from dimension and population size.
#[derive(Debug, Clone)]
struct Strategy {
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Strategy { weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n }
    }

    /// Recombination weight per rank (zero beyond μ), with tied fitnesses
    /// sharing the mean weight of the ranks they span.
    fn rank_weights(&self, sorted_fitness: &[f64]) -> Vec<f64> {
        let lambda = sorted_fitness.len();
        let mut w: Vec<f64> = (0..lambda).map(|r| self.weights.get(r).copied().unwrap_or(0.0)).collect();
        let mut start = 0;
        while start < lambda {
            let mut end = start + 1;
            while end < lambda && sorted_fitness[end] == sorted_fitness[start] {
                end += 1;
            }
            if end - start > 1 {
                let avg = w[start..end].iter().sum::<f64>() / (end - start) as f64;
                w[start..end].iter_mut().for_each(|x| *x = avg);
            }
            start = end;
        }
        w
    }
}

/// Full optimizer state; serializable for checkpoint/restore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesState {
    /// Mean in normalized coordinates.
    pub mean: Vec<f64>,
    pub step_size: f64,
    /// Row-major `d × d`.
    pub covariance: Vec<f64>,
    pub p_sigma: Vec<f64>,
    pub p_c: Vec<f64>,
    pub generation: usize,
    /// Best candidate so far in box coordinates and its fitness.
    pub best_seen: Option<(Vec<f64>, f64)>,
    /// Generations in which the covariance needed eigenvalue repair.
    pub repairs: usize,
    /// Candidates whose fitness was NaN and were ranked last.
    pub nan_fitnesses: usize,
}

/// Candidates of one generation, in box and normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub generation: usize,
    pub params: Vec<Vec<f64>>,
    normalized: Vec<Vec<f64>>,
}

impl CmaesState {
    /// Fresh state centred at `initial` (box coordinates), or at the box
    /// centre when `None`.
    pub fn new(config: &CmaesConfig, initial: Option<&[f64]>) -> Result<Self> {
        config.validate()?;
        let d = config.dim();
        let centre = vec![0.5; d];
        let mean = match initial {
            Some(x) if x.len() != d => {
                return Err(Error::Dimension(format!("initial point has {} entries, expected {d}", x.len())))
            }
            Some(x) => config.from_box(x, &centre),
            None => centre,
        };
        let mut covariance = vec![0.0; d * d];
        (0..d).for_each(|i| covariance[i * d + i] = 1.0);
        Ok(CmaesState {
            mean,
            step_size: config.sigma0,
            covariance,
            p_sigma: vec![0.0; d],
            p_c: vec![0.0; d],
            generation: 0,
            best_seen: None,
            repairs: 0,
            nan_fitnesses: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.covariance)
    }

    /// Mean in box coordinates.
    pub fn mean_params(&self, config: &CmaesConfig) -> Vec<f64> {
        config.to_box(&self.mean)
    }

    /// Eigen-decomposition of C with eigenvalues floored to keep it positive
    /// definite. Returns whether a repair was needed.
    fn decompose(&self) -> (SymmetricEigen<f64, nalgebra::Dyn>, bool) {
        let c = self.cov_matrix();
        let c = (&c + c.transpose()) * 0.5;
        let mut eig = SymmetricEigen::new(c);
        let max = eig.eigenvalues.iter().copied().filter(|v| v.is_finite()).fold(0.0_f64, f64::max);
        let floor = if max > 0.0 { max * 1e-14 } else { 1.0 };
        let mut repaired = false;
        for v in eig.eigenvalues.iter_mut() {
            if !(v.is_finite() && *v > floor) {
                *v = floor;
                repaired = true;
            }
        }
        if eig.eigenvectors.iter().any(|v| !v.is_finite()) {
            eig.eigenvectors = DMatrix::identity(self.dim(), self.dim());
            eig.eigenvalues.fill(1.0);
            repaired = true;
        }
        (eig, repaired)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Samples `population` candidates from `N(mean, σ²C)`, clipped to the box.
/// Deterministic per `(seed, generation)`.
pub fn ask(state: &mut CmaesState, config: &CmaesConfig) -> Result<Candidates> {
    config.validate()?;
    if state.dim() != config.dim() {
        return Err(Error::Dimension(format!(
            "state has {} dimensions, config {}",
            state.dim(),
            config.dim()
        )));
    }
    let d = state.dim();
    let (eig, repaired) = state.decompose();
    if repaired {
        state.repairs += 1;
    }
    let sqrt_d = eig.eigenvalues.map(f64::sqrt);
    let mut rng = rng::stream(config.seed, "cmaes.ask", state.generation as u64);
    let mut normalized = Vec::with_capacity(config.population);
    for _ in 0..config.population {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let y = &eig.eigenvectors * z.component_mul(&sqrt_d);
        let raw: Vec<f64> = (0..d)
            .map(|i| {
                let v = state.mean[i] + state.step_size * y[i];
                if v.is_finite() {
                    v
                } else {
                    state.mean[i]
                }
            })
            .collect();
        normalized.push(raw.iter().map(|v| v.clamp(0.0, 1.0)).collect::<Vec<f64>>());
    }
    let params = normalized.iter().map(|u| config.to_box(u)).collect();
    Ok(Candidates { generation: state.generation, params, normalized })
}

/// Updates the state from fitnesses given in candidate order (lower is
/// better). NaN fitnesses rank last and are counted in `nan_fitnesses`.
pub fn tell(state: &mut CmaesState, config: &CmaesConfig, candidates: &Candidates, fitness: &[f64]) -> Result<()> {
    let lambda = candidates.normalized.len();
    if fitness.len() != lambda {
        return Err(Error::Dimension(format!("{} fitnesses for {lambda} candidates", fitness.len())));
    }
    if candidates.generation != state.generation {
        return Err(Error::InvalidArgument(format!(
            "candidates belong to generation {}, state is at {}",
            candidates.generation, state.generation
        )));
    }
    let d = state.dim();
    let strat = Strategy::new(d, lambda);
    let ranked_fitness: Vec<f64> = fitness.iter().map(|f| if f.is_nan() { f64::INFINITY } else { *f }).collect();
    state.nan_fitnesses += fitness.iter().filter(|f| f.is_nan()).count();
    let mut order: Vec<usize> = (0..lambda).collect();
    order.sort_by(|&a, &b| ranked_fitness[a].total_cmp(&ranked_fitness[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| ranked_fitness[i]).collect();
    let w = strat.rank_weights(&sorted);

    let mean_old = DVector::from_column_slice(&state.mean);
    let sigma = state.step_size;
    let ys: Vec<DVector<f64>> = order
        .iter()
        // The update uses the clipped points, i.e. the ones actually
        // evaluated, so the fitness and the step it drives always agree.
        .map(|&i| (DVector::from_column_slice(&candidates.normalized[i]) - &mean_old) / sigma)
        .collect();
    let y_w = ys.iter().zip(&w).fold(DVector::zeros(d), |acc, (y, wi)| acc + y * *wi);
    let mean_new = (&mean_old + &y_w * sigma).map(|v| v.clamp(0.0, 1.0));

    let (eig, _) = state.decompose();
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();

    let cs = strat.c_sigma;
    let p_sigma = DVector::from_column_slice(&state.p_sigma) * (1.0 - cs)
        + &inv_sqrt * &y_w * (cs * (2.0 - cs) * strat.mu_eff).sqrt();
    let gen = (state.generation + 1) as f64;
    let ps_norm = p_sigma.norm();
    let h_sigma = ps_norm / (1.0 - (1.0 - cs).powf(2.0 * gen)).sqrt()
        < (1.4 + 2.0 / (d as f64 + 1.0)) * strat.chi_n;
    let cc = strat.c_c;
    let h = if h_sigma { 1.0 } else { 0.0 };
    let p_c = DVector::from_column_slice(&state.p_c) * (1.0 - cc) + &y_w * (h * (cc * (2.0 - cc) * strat.mu_eff).sqrt());

    let c_old = state.cov_matrix();
    let rank_mu = ys.iter().zip(&w).fold(DMatrix::zeros(d, d), |acc, (y, wi)| acc + y * y.transpose() * *wi);
    let delta_h = (1.0 - h) * cc * (2.0 - cc);
    let (c1, cmu) = (strat.c_1, strat.c_mu);
    let w_sum: f64 = w.iter().sum();
    let mut c_new = &c_old * (1.0 - c1 - cmu * w_sum) + (&p_c * p_c.transpose() + &c_old * delta_h) * c1 + rank_mu * cmu;
    c_new = (&c_new + c_new.transpose()) * 0.5;

    let step = sigma * ((cs / strat.d_sigma) * (ps_norm / strat.chi_n - 1.0)).exp();

    state.mean = mean_new.iter().copied().collect();
    state.p_sigma = p_sigma.iter().copied().collect();
    state.p_c = p_c.iter().copied().collect();
    state.covariance = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| c_new[(i, j)]).collect();
    state.step_size = if step.is_finite() && step > 0.0 { step } else { sigma };
    let (_, repaired) = state.decompose();
    if repaired {
        state.repairs += 1;
        let (eig, _) = state.decompose();
        let fixed = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
        state.covariance = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| fixed[(i, j)]).collect();
    }

    let best_idx = order[0];
    let best_f = ranked_fitness[best_idx];
    let improves = match &state.best_seen {
        Some((_, f)) => best_f < *f,
        None => best_f.is_finite(),
    };
    if improves {
        state.best_seen = Some((candidates.params[best_idx].clone(), best_f));
    }
    state.generation += 1;
    let _ = config;
    Ok(())
}

/// Summary of one finished generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub candidates: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
    /// Best fitness seen up to and including this generation.
    pub best: f64,
    /// Mean of this generation's finite fitnesses.
    pub mean: f64,
    /// Step size after the update.
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best_params: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord>,
    pub state: CmaesState,
}

impl OptimizeResult {
    pub fn best_history(&self) -> Vec<f64> {
        self.history.iter().map(|g| g.best).collect()
    }
}

/// Runs ask/tell from `state` until `config.iterations` generations are
/// done. `evaluate` scores a whole generation and returns fitnesses in
/// candidate order; `on_generation` sees each record, together with the
/// updated state, as soon as the generation is done.
pub fn optimize_from<E, G>(
    mut state: CmaesState,
    config: &CmaesConfig,
    mut evaluate: E,
    mut on_generation: G,
) -> Result<OptimizeResult>
where
    E: FnMut(&[Vec<f64>]) -> Result<Vec<f64>>,
    G: FnMut(&GenerationRecord, &CmaesState) -> Result<()>,
{
    config.validate()?;
    let mut history = Vec::with_capacity(config.iterations.saturating_sub(state.generation));
    while state.generation < config.iterations {
        let generation = state.generation;
        let cands = ask(&mut state, config)?;
        let fitness = evaluate(&cands.params)
            .map_err(|e| Error::Objective { generation, source: Box::new(e) })?;
        tell(&mut state, config, &cands, &fitness)?;
        let finite: Vec<f64> = fitness.iter().copied().filter(|f| f.is_finite()).collect();
        let record = GenerationRecord {
            generation,
            candidates: cands.params,
            fitness,
            best: state.best_seen.as_ref().map_or(f64::INFINITY, |b| b.1),
            mean: if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 },
            step_size: state.step_size,
        };
        on_generation(&record, &state)?;
        history.push(record);
    }
    let (best_params, best_fitness) = state
        .best_seen
        .clone()
        .unwrap_or_else(|| (state.mean_params(config), f64::INFINITY));
    Ok(OptimizeResult { best_params, best_fitness, history, state })
}

/// Minimizes `objective` over the box for `config.iterations` generations,
/// starting at `initial` (or the box centre).
pub fn optimize<F>(mut objective: F, config: &CmaesConfig, initial: Option<&[f64]>) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let state = CmaesState::new(config, initial)?;
    optimize_from(state, config, |cands| cands.iter().map(|c| objective(c)).collect(), |_, _| Ok(()))
}

/// Fitness history as CSV: `generation,best,mean,step_size`.
pub fn history_csv(history: &[GenerationRecord]) -> String {
    let mut out = String::from("generation,best,mean,step_size\n");
    for g in history {
        let _ = writeln!(out, "{},{},{},{}", g.generation, g.best, g.mean, g.step_size);
    }
    out
}
