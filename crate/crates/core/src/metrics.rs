//! Alignment, baseline, and integration scores plus the effect-size
//! statistics used by the experiment harness.
//!
//! Everything here is pure arithmetic over in-memory samples. Bootstrap
//! procedures take an explicit seed and are deterministic for a given
//! `(input, seed)` pair.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Tolerance for weight vectors that must sum to 1.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Resamples drawn by every percentile bootstrap in this module.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Confidence level of the interval in [`EffectSizeReport`].
pub const EFFECT_CI_LEVEL: f64 = 0.95;

pub const DEFAULT_EFFECT_SEED: u64 = 0x5eed_cafe;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("zero-denominator: all weight*task_score terms are zero")]
    ZeroDenominator,
    #[error("empty-entries")]
    EmptyEntries,
    #[error("invalid-record: {0}")]
    InvalidRecord(String),
    #[error("length-mismatch: {actual} actuals vs {predicted} predictions")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("too-few-samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("degenerate-actuals: actual values have zero interquartile range")]
    DegenerateActuals,
    #[error("invalid-distribution: {0}")]
    InvalidDistribution(String),
    #[error("zero-precision-and-recall")]
    ZeroPrecisionAndRecall,
    #[error("zero-pooled-variance")]
    ZeroPooledVariance,
    #[error("invalid-level: {0}")]
    InvalidLevel(f64),
}

fn check_unit(name: &str, value: f64) -> Result<(), MetricError> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(MetricError::InvalidRecord(format!(
            "{name} must lie in [0, 1], got {value}"
        )));
    }
    Ok(())
}

fn check_weight_sum(name: &str, sum: f64) -> Result<(), MetricError> {
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(MetricError::InvalidRecord(format!(
            "{name} must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// One (task score, goal score, weight) triple of an alignment record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub task_score: f64,
    pub goal_score: f64,
    pub weight: f64,
}

/// A validated set of alignment entries: scores in [0, 1], weights positive
/// and summing to 1 within [`WEIGHT_TOLERANCE`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    entries: Vec<AlignmentEntry>,
    pub context_tag: Option<String>,
}

impl AlignmentRecord {
    pub fn new(
        entries: Vec<AlignmentEntry>,
        context_tag: Option<String>,
    ) -> Result<Self, MetricError> {
        if entries.is_empty() {
            return Err(MetricError::EmptyEntries);
        }
        let mut weight_sum = 0.0;
        for entry in &entries {
            check_unit("task_score", entry.task_score)?;
            check_unit("goal_score", entry.goal_score)?;
            if !entry.weight.is_finite() || entry.weight <= 0.0 {
                return Err(MetricError::InvalidRecord(format!(
                    "weight must be positive, got {}",
                    entry.weight
                )));
            }
            weight_sum += entry.weight;
        }
        check_weight_sum("weights", weight_sum)?;
        Ok(AlignmentRecord {
            entries,
            context_tag,
        })
    }

    pub fn entries(&self) -> &[AlignmentEntry] {
        &self.entries
    }
}

/// Weighted goal attainment over weighted task performance:
/// `sum(w*t*g) / sum(w*t)`. Lies in [0, 1]; fails with
/// [`MetricError::ZeroDenominator`] when every task term is zero.
pub fn gai(record: &AlignmentRecord) -> Result<f64, MetricError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for e in &record.entries {
        num += e.weight * e.task_score * e.goal_score;
        den += e.weight * e.task_score;
    }
    if den == 0.0 {
        return Err(MetricError::ZeroDenominator);
    }
    Ok(num / den)
}

/// One measured baseline metric with its importance weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub metric_id: String,
    pub value: f64,
    pub importance: f64,
}

/// Pre-intervention assessment: normalized metric values in [0, 1] with
/// positive importances summing to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineAssessment {
    entries: Vec<BaselineEntry>,
}

impl BaselineAssessment {
    pub fn new(entries: Vec<BaselineEntry>) -> Result<Self, MetricError> {
        if entries.is_empty() {
            return Err(MetricError::EmptyEntries);
        }
        let mut sum = 0.0;
        for entry in &entries {
            check_unit(&entry.metric_id, entry.value)?;
            if !entry.importance.is_finite() || entry.importance <= 0.0 {
                return Err(MetricError::InvalidRecord(format!(
                    "importance of {} must be positive, got {}",
                    entry.metric_id, entry.importance
                )));
            }
            sum += entry.importance;
        }
        check_weight_sum("importances", sum)?;
        Ok(BaselineAssessment { entries })
    }

    pub fn entries(&self) -> &[BaselineEntry] {
        &self.entries
    }
}

/// Importance-weighted mean of the baseline metric values:
/// `sum(v*p) / sum(v)`.
pub fn baseline_score(assessment: &BaselineAssessment) -> Result<f64, MetricError> {
    if assessment.entries.is_empty() {
        return Err(MetricError::EmptyEntries);
    }
    let num: f64 = assessment
        .entries
        .iter()
        .map(|e| e.importance * e.value)
        .sum();
    let den: f64 = assessment.entries.iter().map(|e| e.importance).sum();
    Ok(num / den)
}

/// Components of the integration score: quality, cost efficiency, and
/// performance, each in [0, 1], with non-negative blend weights summing to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationInputs {
    pub quality: f64,
    pub cost_efficiency: f64,
    pub performance: f64,
    pub weights: [f64; 3],
}

/// Convex blend `w0*quality + w1*cost_efficiency + w2*performance`.
pub fn integration_score(inputs: &IntegrationInputs) -> Result<f64, MetricError> {
    check_unit("quality", inputs.quality)?;
    check_unit("cost_efficiency", inputs.cost_efficiency)?;
    check_unit("performance", inputs.performance)?;
    for w in inputs.weights {
        if !w.is_finite() || w < 0.0 {
            return Err(MetricError::InvalidRecord(format!(
                "blend weight must be non-negative, got {w}"
            )));
        }
    }
    check_weight_sum("blend weights", inputs.weights.iter().sum())?;
    Ok(inputs.weights[0] * inputs.quality
        + inputs.weights[1] * inputs.cost_efficiency
        + inputs.weights[2] * inputs.performance)
}

/// Linear-interpolation quantile (R type 7) of an ascending-sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Interquartile range under type-7 quantiles.
pub fn iqr(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)
}

/// Goal attainment ratio of a prediction: `IQR(actual - predicted) /
/// IQR(actual)`. 0 means residuals are constant (perfect up to a shift);
/// values near 1 mean the prediction explains none of the spread. Adding a
/// constant to every prediction leaves the result unchanged.
pub fn gar(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    if actual.len() != predicted.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.len() < 4 {
        return Err(MetricError::TooFewSamples {
            need: 4,
            got: actual.len(),
        });
    }
    let spread = iqr(actual);
    if spread == 0.0 {
        return Err(MetricError::DegenerateActuals);
    }
    let residuals: Vec<f64> = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| a - p)
        .collect();
    Ok(iqr(&residuals) / spread)
}

/// Shannon entropy in nats of a probability distribution
/// (terms with p = 0 contribute nothing).
pub fn entropy_nats(dist: &[f64]) -> Result<f64, MetricError> {
    if dist.is_empty() {
        return Err(MetricError::InvalidDistribution("empty".to_string()));
    }
    let mut sum = 0.0;
    for &p in dist {
        if !p.is_finite() || p < 0.0 {
            return Err(MetricError::InvalidDistribution(format!(
                "probability {p} out of range"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(MetricError::InvalidDistribution(format!(
            "probabilities sum to {sum}"
        )));
    }
    Ok(dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}

/// Entropy-boosted F1: `F1 * (1 + H(pattern_dist))` with `H` in nats.
/// Rewards classifiers that stay accurate across diverse pattern usage;
/// always at least plain F1.
pub fn modified_f1(precision: f64, recall: f64, pattern_dist: &[f64]) -> Result<f64, MetricError> {
    check_unit("precision", precision)?;
    check_unit("recall", recall)?;
    if precision + recall == 0.0 {
        return Err(MetricError::ZeroPrecisionAndRecall);
    }
    let f1 = 2.0 * precision * recall / (precision + recall);
    Ok(f1 * (1.0 + entropy_nats(pattern_dist)?))
}

/// Pooled-variance effect size with a Welch two-sample test and a seeded
/// percentile-bootstrap confidence interval. Group `a` is the treatment:
/// positive `d` means `a` scored higher.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeReport {
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub sigma_pooled: f64,
    pub d: f64,
    pub t_stat: f64,
    pub dof: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn d_statistic(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_var(a, ma), sample_var(b, mb));
    let pooled =
        (((a.len() - 1) as f64 * va + (b.len() - 1) as f64 * vb) / (a.len() + b.len() - 2) as f64)
            .sqrt();
    (pooled > 0.0).then(|| (ma - mb) / pooled)
}

/// Unbiased index draw in `0..n` via 128-bit multiply (n is far below 2^64).
#[inline]
fn draw_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Cohen's d between two samples with the default bootstrap seed.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<EffectSizeReport, MetricError> {
    cohens_d_seeded(a, b, DEFAULT_EFFECT_SEED)
}

/// Cohen's d, Welch two-sided p-value, and a percentile-bootstrap CI
/// ([`BOOTSTRAP_RESAMPLES`] resamples of each group, seeded).
pub fn cohens_d_seeded(a: &[f64], b: &[f64], seed: u64) -> Result<EffectSizeReport, MetricError> {
    for sample in [a, b] {
        if sample.len() < 2 {
            return Err(MetricError::TooFewSamples {
                need: 2,
                got: sample.len(),
            });
        }
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_var(a, ma), sample_var(b, mb));
    let d = d_statistic(a, b).ok_or(MetricError::ZeroPooledVariance)?;
    let pooled = (ma - mb) / d;
    // With a non-zero pooled variance at least one group varies, so the Welch
    // standard error is positive.
    let se2 = va / a.len() as f64 + vb / b.len() as f64;
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2
        / ((va / a.len() as f64).powi(2) / (a.len() - 1) as f64
            + (vb / b.len() as f64).powi(2) / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| MetricError::InvalidRecord(e.to_string()))?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resample_a = vec![0.0; a.len()];
    let mut resample_b = vec![0.0; b.len()];
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in resample_a.iter_mut() {
            *slot = a[draw_index(&mut rng, a.len())];
        }
        for slot in resample_b.iter_mut() {
            *slot = b[draw_index(&mut rng, b.len())];
        }
        // A degenerate resample (both groups constant) carries no effect
        // information; fall back to the observed statistic.
        stats.push(d_statistic(&resample_a, &resample_b).unwrap_or(d));
    }
    stats.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let tail = (1.0 - EFFECT_CI_LEVEL) / 2.0;
    // The percentile interval is widened to the observed d in the rare case
    // the bootstrap distribution excludes it, keeping ci_low <= d <= ci_high.
    let ci_low = quantile_sorted(&stats, tail).min(d);
    let ci_high = quantile_sorted(&stats, 1.0 - tail).max(d);

    Ok(EffectSizeReport {
        n_a: a.len(),
        n_b: b.len(),
        mean_a: ma,
        mean_b: mb,
        sigma_pooled: pooled.abs(),
        d,
        t_stat: t,
        dof,
        p_value,
        ci_low,
        ci_high,
    })
}

/// Statistic resampled by [`bootstrap_ci`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapStat {
    Mean,
    Median,
}

/// Seeded percentile-bootstrap confidence interval for the mean or median of
/// a sample ([`BOOTSTRAP_RESAMPLES`] resamples). Returns `(low, high)` with
/// `low <= high`; a constant sample collapses to a point interval.
pub fn bootstrap_ci(
    sample: &[f64],
    stat: BootstrapStat,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), MetricError> {
    if sample.is_empty() {
        return Err(MetricError::EmptyEntries);
    }
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(MetricError::InvalidLevel(level));
    }
    let n = sample.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    match stat {
        BootstrapStat::Mean => {
            for _ in 0..BOOTSTRAP_RESAMPLES {
                let mut sum = 0.0;
                for _ in 0..n {
                    sum += sample[draw_index(&mut rng, n)];
                }
                stats.push(sum / n as f64);
            }
        }
        BootstrapStat::Median => {
            let mut scratch = vec![0.0; n];
            for _ in 0..BOOTSTRAP_RESAMPLES {
                for slot in scratch.iter_mut() {
                    *slot = sample[draw_index(&mut rng, n)];
                }
                scratch.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                stats.push(quantile_sorted(&scratch, 0.5));
            }
        }
    }
    stats.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0;
    Ok((
        quantile_sorted(&stats, tail),
        quantile_sorted(&stats, 1.0 - tail),
    ))
}
