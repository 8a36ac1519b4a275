//! Cross-domain transfer scoring.
//!
//! A policy trained in one domain is applied to a simulation of another,
//! performance is measured with the same goal criteria on both sides, and
//! the transfer counts as a success when target performance lands within 15%
//! of the source's. The tau score summarizes a priori domain similarity:
//! cosine similarity of behavioral feature vectors, damped by the relative
//! gap in typical session length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Domain, InteractionEvent, ScenarioConfig};
use crate::generator::{simulate, GenError, RecPolicy};
use crate::goals::{evaluate_criteria, Decomposition, GoalError, MetricId};
use crate::metrics::{gai, MetricError};
use crate::stats::{span_days, user_stats};

/// Maximum relative performance gap that still counts as a successful
/// transfer.
pub const TRANSFER_SUCCESS_THRESHOLD: f64 = 0.15;

/// Behavioral profile of a domain: four components in [0, 1] in a shared
/// space (preferred item duration, affinity concentration, creator
/// attachment, novelty appetite) plus `psi`, the typical session length in
/// minutes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainFeatureVector {
    pub domain: Domain,
    pub features: [f64; 4],
    pub psi: f64,
}

impl DomainFeatureVector {
    /// Fixed reference profile of a domain, with a nominal session length.
    pub fn reference(domain: Domain) -> DomainFeatureVector {
        let (features, psi) = match domain {
            Domain::Music => ([0.45, 0.70, 0.55, 0.35], 18.0),
            Domain::Podcast => ([0.55, 0.65, 0.60, 0.40], 28.0),
            Domain::Audiobook => ([0.70, 0.45, 0.80, 0.20], 52.0),
        };
        DomainFeatureVector {
            domain,
            features,
            psi,
        }
    }

    /// Reference features with a caller-supplied session length.
    pub fn with_psi(domain: Domain, psi: f64) -> DomainFeatureVector {
        DomainFeatureVector {
            psi,
            ..Self::reference(domain)
        }
    }

    /// Reference features with `psi` measured from a log: mean session
    /// engagement in minutes over the domain's events. None when the log has
    /// no such events.
    pub fn from_log(domain: Domain, events: &[InteractionEvent]) -> Option<DomainFeatureVector> {
        let in_domain: Vec<InteractionEvent> = events
            .iter()
            .filter(|e| e.domain == domain)
            .cloned()
            .collect();
        if in_domain.is_empty() {
            return None;
        }
        let stats = user_stats(&in_domain);
        let sessions: u64 = stats.values().map(|u| u.sessions).sum();
        let engagement: u64 = stats.values().map(|u| u.total_engagement_s).sum();
        if sessions == 0 {
            return None;
        }
        let psi = (engagement as f64 / sessions as f64 / 60.0).max(1e-6);
        Some(Self::with_psi(domain, psi))
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum TransferError {
    #[error("zero-vector: cosine similarity is undefined")]
    ZeroVector,
    #[error("nonpositive-psi: {0}")]
    NonpositivePsi(f64),
    #[error("no-dominant-domain: scenario domain mix is empty")]
    NoDominantDomain,
    #[error(transparent)]
    Sim(#[from] GenError),
    #[error(transparent)]
    Goals(#[from] GoalError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Similarity of two domain profiles:
/// `cos(features) * (1 - |psi_a - psi_b| / max(psi_a, psi_b))`.
///
/// Exactly symmetric in its arguments. For non-negative features the result
/// lies in [0, 1]; in general in [-1, 1].
pub fn transfer_metric(
    a: &DomainFeatureVector,
    b: &DomainFeatureVector,
) -> Result<f64, TransferError> {
    if a.psi <= 0.0 || !a.psi.is_finite() {
        return Err(TransferError::NonpositivePsi(a.psi));
    }
    if b.psi <= 0.0 || !b.psi.is_finite() {
        return Err(TransferError::NonpositivePsi(b.psi));
    }
    let dot: f64 = a
        .features
        .iter()
        .zip(&b.features)
        .map(|(x, y)| x * y)
        .sum();
    let norm_a: f64 = a.features.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b: f64 = b.features.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(TransferError::ZeroVector);
    }
    let cosine = (dot / (norm_a * norm_b)).clamp(-1.0, 1.0);
    let penalty = 1.0 - (a.psi - b.psi).abs() / a.psi.max(b.psi);
    Ok(cosine * penalty)
}

/// The performance statistic a transfer run compares across domains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferScore {
    /// Goal alignment computed from the shared goal criteria (default).
    Gai,
    /// Population mean of one user-level metric.
    UserMean(MetricId),
}

impl Default for TransferScore {
    fn default() -> Self {
        TransferScore::Gai
    }
}

impl std::fmt::Display for TransferScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransferScore::Gai => f.write_str("gai"),
            TransferScore::UserMean(id) => write!(f, "mean_{id}"),
        }
    }
}

/// Outcome of one source-to-target transfer run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub source: Domain,
    pub target: Domain,
    pub tau: f64,
    pub success: bool,
    pub source_metric: f64,
    pub target_metric: f64,
    pub threshold: f64,
}

/// The 15% rule: success iff `|target - source| / source <= threshold`.
/// A zero source metric succeeds only on an exactly zero target metric.
pub fn transfer_success(source_metric: f64, target_metric: f64, threshold: f64) -> bool {
    if source_metric == 0.0 {
        return target_metric == 0.0;
    }
    (target_metric - source_metric).abs() / source_metric.abs() <= threshold
}

fn score_log(
    events: &[InteractionEvent],
    goals: &Decomposition,
    horizon_days: Option<u32>,
    score: TransferScore,
) -> Result<f64, TransferError> {
    match score {
        TransferScore::Gai => {
            let record = evaluate_criteria(goals, events, horizon_days)?;
            Ok(gai(&record)?)
        }
        TransferScore::UserMean(id) => {
            if events.is_empty() {
                return Err(TransferError::Goals(GoalError::EmptyLog));
            }
            let stats = user_stats(events);
            let span = span_days(events, horizon_days);
            Ok(stats.values().map(|u| id.value(u, span)).sum::<f64>() / stats.len() as f64)
        }
    }
}

/// Simulates both scenarios under the same (source-trained) policy, scores
/// both logs with the same goal criteria, and applies the 15% rule.
///
/// `psi` is measured from each log; a log with no events in its scenario's
/// dominant domain falls back to the reference profile.
pub fn run_transfer(
    source: &ScenarioConfig,
    target: &ScenarioConfig,
    goals: &Decomposition,
    policy: &RecPolicy,
    score: TransferScore,
) -> Result<TransferResult, TransferError> {
    let source_domain = source
        .dominant_domain()
        .ok_or(TransferError::NoDominantDomain)?;
    let target_domain = target
        .dominant_domain()
        .ok_or(TransferError::NoDominantDomain)?;

    let source_out = simulate(source, policy)?;
    let target_out = simulate(target, policy)?;

    let source_metric = score_log(
        &source_out.events,
        goals,
        Some(source.duration_days()),
        score,
    )?;
    let target_metric = score_log(
        &target_out.events,
        goals,
        Some(target.duration_days()),
        score,
    )?;

    let source_vector = DomainFeatureVector::from_log(source_domain, &source_out.events)
        .unwrap_or_else(|| DomainFeatureVector::reference(source_domain));
    let target_vector = DomainFeatureVector::from_log(target_domain, &target_out.events)
        .unwrap_or_else(|| DomainFeatureVector::reference(target_domain));
    let tau = transfer_metric(&source_vector, &target_vector)?;

    Ok(TransferResult {
        source: source_domain,
        target: target_domain,
        tau,
        success: transfer_success(source_metric, target_metric, TRANSFER_SUCCESS_THRESHOLD),
        source_metric,
        target_metric,
        threshold: TRANSFER_SUCCESS_THRESHOLD,
    })
}
