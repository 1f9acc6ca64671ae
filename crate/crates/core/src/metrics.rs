//! Two-sample distances between feature distributions and the aggregate
//! similarity score used as the calibration objective.
//!
//! Rows of a [`FeatureMatrix`] are treated as i.i.d. samples, so time order
//! plays no role: drift that compounds over a trajectory does not dominate
//! the comparison the way it would for a step-by-step state error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actuator::GainConfig;
use crate::rollout::{extract_features, FeatureMatrix, Rollout, SequenceId, Source};
use crate::{Error, Result};

/// Rows beyond which the median heuristic subsamples by stride.
pub const MEDIAN_MAX_ROWS: usize = 2000;
/// Lower bound returned by [`median_heuristic`].
pub const MIN_BANDWIDTH: f64 = 1e-9;

fn sorted(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("sample contains NaN".into()));
    }
    let mut s = v.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    Ok(s)
}

/// Empirical 1-D Wasserstein-1 distance.
///
/// Computed as the integral over `u ∈ [0, 1]` of the absolute difference of
/// the two empirical quantile functions; with equal sample counts this is
/// the mean absolute difference of the sorted samples.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("wasserstein_1d needs non-empty samples".into()));
    }
    let a = sorted(a)?;
    let b = sorted(b)?;
    Ok(w1_sorted(&a, &b))
}

fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == m {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
    }
    // Walk the merged quantile breakpoints i/n and j/m in exact integer
    // arithmetic on the common denominator n·m.
    let (nm, step_a, step_b) = (n * m, m, n);
    let (mut i, mut j, mut u, mut total) = (0usize, 0usize, 0usize, 0.0);
    while u < nm {
        let next_a = (i + 1) * step_a;
        let next_b = (j + 1) * step_b;
        let next = next_a.min(next_b);
        total += (next - u) as f64 * (a[i] - b[j]).abs();
        u = next;
        if next == next_a {
            i += 1;
        }
        if next == next_b {
            j += 1;
        }
    }
    total / nm as f64
}

/// Mean of the per-column 1-D Wasserstein distances.
pub fn wasserstein_features(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "feature matrices have {} and {} columns",
            a.cols(),
            b.cols()
        )));
    }
    if a.cols() == 0 {
        return Err(Error::InvalidArgument("feature matrices have no columns".into()));
    }
    let total = (0..a.cols())
        .map(|j| wasserstein_1d(&a.column(j), &b.column(j)))
        .sum::<Result<f64>>()?;
    Ok(total / a.cols() as f64)
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Squared distances between distinct rows `i < j`, row-major upper triangle.
fn sq_within(m: &FeatureMatrix) -> Vec<f64> {
    let n = m.rows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        let ri = m.row(i);
        for j in i + 1..n {
            out.push(sq_dist(ri, m.row(j)));
        }
    }
    out
}

fn sq_cross(a: &FeatureMatrix, b: &FeatureMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.rows() * b.rows());
    for i in 0..a.rows() {
        let ri = a.row(i);
        for j in 0..b.rows() {
            out.push(sq_dist(ri, b.row(j)));
        }
    }
    out
}

/// Median of `sqrt(d²)` over `values`, averaging the two middle entries for
/// even counts. Reorders `values`.
fn median_of_sq(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = upper.sqrt();
    if len % 2 == 1 {
        return upper;
    }
    let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max).sqrt();
    0.5 * (below + upper)
}

/// Kernel bandwidth from the median pairwise Euclidean distance of the
/// pooled rows of `a` and `b`.
///
/// Pools with more than [`MEDIAN_MAX_ROWS`] rows are thinned by a fixed
/// stride. A zero median is floored at [`MIN_BANDWIDTH`].
pub fn median_heuristic(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "feature matrices have {} and {} columns",
            a.cols(),
            b.cols()
        )));
    }
    let total = a.rows() + b.rows();
    if total < 2 {
        return Err(Error::InvalidArgument("median heuristic needs at least 2 rows".into()));
    }
    let stride = total.div_ceil(MEDIAN_MAX_ROWS);
    let pooled: Vec<&[f64]> = (0..a.rows())
        .map(|i| a.row(i))
        .chain((0..b.rows()).map(|i| b.row(i)))
        .step_by(stride)
        .collect();
    let mut d2 = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d2.push(sq_dist(pooled[i], pooled[j]));
        }
    }
    if d2.is_empty() {
        return Ok(MIN_BANDWIDTH);
    }
    Ok(median_of_sq(&mut d2).max(MIN_BANDWIDTH))
}

fn kernel_mean(d2: &[f64], inv_two_h2: f64) -> f64 {
    d2.iter().map(|d| (-d * inv_two_h2).exp()).sum::<f64>() / d2.len() as f64
}

fn check_mmd_inputs(a: &FeatureMatrix, b: &FeatureMatrix, bandwidth: f64) -> Result<()> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "feature matrices have {} and {} columns",
            a.cols(),
            b.cols()
        )));
    }
    if a.rows() < 2 || b.rows() < 2 {
        return Err(Error::InvalidArgument("mmd needs at least 2 rows per sample".into()));
    }
    Ok(())
}

fn mmd_from_blocks(within_a: &[f64], within_b: &[f64], cross: &[f64], bandwidth: f64) -> f64 {
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    kernel_mean(within_a, inv) + kernel_mean(within_b, inv) - 2.0 * kernel_mean(cross, inv)
}

/// Unbiased squared MMD with a Gaussian kernel
/// `k(x, y) = exp(−‖x − y‖² / (2·bandwidth²))`.
///
/// Within-sample means exclude the diagonal, so the estimate can dip
/// slightly below zero when both samples share a distribution.
pub fn mmd(a: &FeatureMatrix, b: &FeatureMatrix, bandwidth: f64) -> Result<f64> {
    check_mmd_inputs(a, b, bandwidth)?;
    Ok(mmd_from_blocks(&sq_within(a), &sq_within(b), &sq_cross(a, b), bandwidth))
}

/// Features of one rollout with its within-sample squared distances, which
/// do not depend on the bandwidth and can be reused across pairs.
#[derive(Debug, Clone)]
pub struct PreparedRollout {
    pub sequence_id: SequenceId,
    pub repeat_index: usize,
    pub features: FeatureMatrix,
    within: Vec<f64>,
}

impl PreparedRollout {
    pub fn new(rollout: &Rollout, gains: &GainConfig) -> Result<Self> {
        let features = extract_features(rollout, gains)?;
        let within = sq_within(&features);
        Ok(PreparedRollout {
            sequence_id: rollout.sequence_id,
            repeat_index: rollout.repeat_index,
            features,
            within,
        })
    }
}

/// Distances of one hardware/simulation pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub sequence_id: SequenceId,
    pub hardware_repeat: usize,
    pub sim_index: usize,
    pub wasserstein: f64,
    pub mmd: f64,
    pub bandwidth: f64,
}

/// Compares two prepared rollouts.
pub fn score_pair(hw: &PreparedRollout, sim: &PreparedRollout) -> Result<PairScore> {
    let (a, b) = (&hw.features, &sim.features);
    let wasserstein = wasserstein_features(a, b)?;
    let cross = sq_cross(a, b);
    let bandwidth = if a.rows() + b.rows() <= MEDIAN_MAX_ROWS {
        let mut pooled = Vec::with_capacity(hw.within.len() + sim.within.len() + cross.len());
        pooled.extend_from_slice(&hw.within);
        pooled.extend_from_slice(&sim.within);
        pooled.extend_from_slice(&cross);
        median_of_sq(&mut pooled).max(MIN_BANDWIDTH)
    } else {
        median_heuristic(a, b)?
    };
    check_mmd_inputs(a, b, bandwidth)?;
    let mmd = mmd_from_blocks(&hw.within, &sim.within, &cross, bandwidth);
    Ok(PairScore {
        sequence_id: hw.sequence_id,
        hardware_repeat: hw.repeat_index,
        sim_index: sim.repeat_index,
        wasserstein,
        mmd,
        bandwidth,
    })
}

/// Weights and normalizers of the combined score.
///
/// `sequence` maps sequence ids to nonnegative weights; absent entries
/// (or `None`) mean uniform weights over the sequences being scored. The
/// measure weights are renormalized to sum to one. Each sequence-averaged
/// measure is divided by its normalizer before weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub sequence: Option<BTreeMap<SequenceId, f64>>,
    pub w_wasserstein: f64,
    pub w_mmd: f64,
    pub norm_wasserstein: f64,
    pub norm_mmd: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            sequence: None,
            w_wasserstein: 0.5,
            w_mmd: 0.5,
            norm_wasserstein: 1.0,
            norm_mmd: 1.0,
        }
    }
}

/// Weights actually applied, after normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedWeights {
    pub sequence: BTreeMap<SequenceId, f64>,
    pub w_wasserstein: f64,
    pub w_mmd: f64,
    pub norm_wasserstein: f64,
    pub norm_mmd: f64,
}

impl ScoreWeights {
    fn resolve(&self, ids: &BTreeSet<SequenceId>) -> Result<ResolvedWeights> {
        let mw = self.w_wasserstein + self.w_mmd;
        if self.w_wasserstein < 0.0 || self.w_mmd < 0.0 || !(mw > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "measure weights must be nonnegative with a positive sum, got {} and {}",
                self.w_wasserstein, self.w_mmd
            )));
        }
        for (name, v) in [("wasserstein", self.norm_wasserstein), ("mmd", self.norm_mmd)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} normalizer must be positive, got {v}"
                )));
            }
        }
        let raw: BTreeMap<SequenceId, f64> = ids
            .iter()
            .map(|id| {
                let w = self.sequence.as_ref().and_then(|m| m.get(id)).copied().unwrap_or(
                    if self.sequence.is_some() { 0.0 } else { 1.0 },
                );
                (*id, w)
            })
            .collect();
        if raw.values().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("sequence weights must be nonnegative".into()));
        }
        let total: f64 = raw.values().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(
                "sequence weights of the scored sequences sum to zero".into(),
            ));
        }
        Ok(ResolvedWeights {
            sequence: raw.into_iter().map(|(k, w)| (k, w / total)).collect(),
            w_wasserstein: self.w_wasserstein / mw,
            w_mmd: self.w_mmd / mw,
            norm_wasserstein: self.norm_wasserstein,
            norm_mmd: self.norm_mmd,
        })
    }
}

/// Pair-averaged distances of one command sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub sequence_id: SequenceId,
    pub pairs: usize,
    pub wasserstein: f64,
    /// Raw mean of the unbiased estimates; may be slightly negative.
    pub mmd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_pair: Vec<PairScore>,
    pub per_sequence: Vec<SequenceScore>,
    pub combined: f64,
    pub weights: ResolvedWeights,
}

fn pair_order(a: &PairScore, b: &PairScore) -> std::cmp::Ordering {
    (a.sequence_id, a.hardware_repeat, a.sim_index)
        .cmp(&(b.sequence_id, b.hardware_repeat, b.sim_index))
        .then(a.wasserstein.total_cmp(&b.wasserstein))
        .then(a.mmd.total_cmp(&b.mmd))
}

impl ScoreReport {
    /// Aggregates pair scores: averages within each sequence, clamps the
    /// averaged MMD at zero, and forms the weighted combination.
    pub fn aggregate(mut per_pair: Vec<PairScore>, weights: &ScoreWeights) -> Result<Self> {
        if per_pair.is_empty() {
            return Err(Error::NoPairs);
        }
        per_pair.sort_by(pair_order);
        let ids: BTreeSet<SequenceId> = per_pair.iter().map(|p| p.sequence_id).collect();
        let weights = weights.resolve(&ids)?;
        let mut per_sequence = Vec::with_capacity(ids.len());
        let mut combined = 0.0;
        for id in ids {
            let pairs: Vec<&PairScore> = per_pair.iter().filter(|p| p.sequence_id == id).collect();
            let n = pairs.len() as f64;
            let w = pairs.iter().map(|p| p.wasserstein).sum::<f64>() / n;
            let m = pairs.iter().map(|p| p.mmd).sum::<f64>() / n;
            combined += weights.sequence[&id]
                * (weights.w_wasserstein * w / weights.norm_wasserstein
                    + weights.w_mmd * m.max(0.0) / weights.norm_mmd);
            per_sequence.push(SequenceScore { sequence_id: id, pairs: pairs.len(), wasserstein: w, mmd: m });
        }
        Ok(ScoreReport { per_pair, per_sequence, combined, weights })
    }

    /// Weighted sequence means of the two raw measures (MMD clamped at zero),
    /// before normalization. Used to fix the normalizers of a run.
    pub fn raw_measures(&self) -> (f64, f64) {
        self.per_sequence.iter().fold((0.0, 0.0), |(w, m), s| {
            let ws = self.weights.sequence[&s.sequence_id];
            (w + ws * s.wasserstein, m + ws * s.mmd.max(0.0))
        })
    }

    /// Per-pair table as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence_id,hardware_repeat,sim_index,wasserstein,mmd,bandwidth\n");
        for p in &self.per_pair {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.sequence_id, p.hardware_repeat, p.sim_index, p.wasserstein, p.mmd, p.bandwidth
            );
        }
        out
    }

    /// Human-readable summary including the weights used.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "combined_score = {}", self.combined);
        let _ = writeln!(out, "pairs = {}", self.per_pair.len());
        let _ = writeln!(
            out,
            "measure_weights = wasserstein:{} mmd:{}",
            self.weights.w_wasserstein, self.weights.w_mmd
        );
        let _ = writeln!(
            out,
            "normalizers = wasserstein:{} mmd:{}",
            self.weights.norm_wasserstein, self.weights.norm_mmd
        );
        for s in &self.per_sequence {
            let _ = writeln!(
                out,
                "sequence {} weight={} pairs={} wasserstein={} mmd={}",
                s.sequence_id, self.weights.sequence[&s.sequence_id], s.pairs, s.wasserstein, s.mmd
            );
        }
        out
    }
}

/// Hardware rollouts prepared once and scored against many simulated sets.
#[derive(Debug, Clone)]
pub struct Scorer {
    hardware: Vec<PreparedRollout>,
    gains: GainConfig,
}

impl Scorer {
    pub fn new(hardware: &[Rollout], gains: &GainConfig) -> Result<Self> {
        if let Some(r) = hardware.iter().find(|r| r.source != Source::Hardware) {
            return Err(Error::InvalidArgument(format!(
                "rollout {} {} in the hardware set is {}",
                r.sequence_id,
                r.repeat_index,
                r.source.as_str()
            )));
        }
        let hardware = hardware
            .par_iter()
            .map(|r| PreparedRollout::new(r, gains))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scorer { hardware, gains: *gains })
    }

    pub fn hardware(&self) -> &[PreparedRollout] {
        &self.hardware
    }

    pub fn score(&self, simulated: &[Rollout], weights: &ScoreWeights) -> Result<ScoreReport> {
        let hw_ids: BTreeSet<SequenceId> = self.hardware.iter().map(|h| h.sequence_id).collect();
        let missing: BTreeSet<String> = simulated
            .iter()
            .filter(|s| !hw_ids.contains(&s.sequence_id))
            .map(|s| s.sequence_id.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingSequences { missing: missing.into_iter().collect() });
        }
        let sims = simulated
            .par_iter()
            .map(|r| PreparedRollout::new(r, &self.gains))
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(&PreparedRollout, &PreparedRollout)> = self
            .hardware
            .iter()
            .flat_map(|h| sims.iter().filter(move |s| s.sequence_id == h.sequence_id).map(move |s| (h, s)))
            .collect();
        if pairs.is_empty() {
            return Err(Error::NoPairs);
        }
        let per_pair = pairs
            .par_iter()
            .map(|(h, s)| score_pair(h, s))
            .collect::<Result<Vec<_>>>()?;
        ScoreReport::aggregate(per_pair, weights)
    }
}

/// Scores simulated rollouts against hardware rollouts of the same command
/// sequences: every matching pair is compared, pair distances are averaged
/// per sequence, and the sequence averages are combined with `weights`.
pub fn similarity_score(
    hardware: &[Rollout],
    simulated: &[Rollout],
    gains: &GainConfig,
    weights: &ScoreWeights,
) -> Result<ScoreReport> {
    Scorer::new(hardware, gains)?.score(simulated, weights)
}
