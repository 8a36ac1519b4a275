//! Goal specifications: a strategic objective decomposed through tactical
//! sub-objectives into weighted, threshold-based criteria that can be
//! evaluated against an interaction log.
//!
//! Evaluation scores every criterion as a pass fraction: the share of users
//! whose log statistic satisfies the comparator. Task-kind criteria supply
//! task scores, goal-kind criteria supply goal scores, and pairs are formed
//! by declaration index within each kind.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Domain, InteractionEvent};
use crate::metrics::{AlignmentEntry, AlignmentRecord, MetricError};
use crate::stats::{span_days, user_stats, UserStats};

/// The log statistics a criterion can bind to. Each is computed per user;
/// see [`UserStats`] for definitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    SessionLengthMin,
    CompletionRate,
    WeeklyActiveDays,
    DiscoveryRate,
    Retention,
    LatencyMs,
    RecognitionRate,
}

impl MetricId {
    pub const ALL: [MetricId; 7] = [
        MetricId::SessionLengthMin,
        MetricId::CompletionRate,
        MetricId::WeeklyActiveDays,
        MetricId::DiscoveryRate,
        MetricId::Retention,
        MetricId::LatencyMs,
        MetricId::RecognitionRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::SessionLengthMin => "session_length_min",
            MetricId::CompletionRate => "completion_rate",
            MetricId::WeeklyActiveDays => "weekly_active_days",
            MetricId::DiscoveryRate => "discovery_rate",
            MetricId::Retention => "retention",
            MetricId::LatencyMs => "latency_ms",
            MetricId::RecognitionRate => "recognition_rate",
        }
    }

    /// The user-level statistic this metric reads.
    pub fn value(self, stats: &UserStats, span_days: u32) -> f64 {
        match self {
            MetricId::SessionLengthMin => stats.session_length_min(),
            MetricId::CompletionRate => stats.completion_rate(),
            MetricId::WeeklyActiveDays => stats.weekly_active_days(span_days),
            MetricId::DiscoveryRate => stats.discovery_rate(),
            MetricId::Retention => stats.retained(span_days),
            MetricId::LatencyMs => stats.latency_ms(),
            MetricId::RecognitionRate => stats.recognition_rate(),
        }
    }
}

impl std::fmt::Display for MetricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Threshold comparison direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = ">=")]
    GreaterEq,
    #[serde(rename = "<")]
    Less,
    #[serde(rename = "<=")]
    LessEq,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Greater => value > threshold,
            Comparator::GreaterEq => value >= threshold,
            Comparator::Less => value < threshold,
            Comparator::LessEq => value <= threshold,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Greater => ">",
            Comparator::GreaterEq => ">=",
            Comparator::Less => "<",
            Comparator::LessEq => "<=",
        }
    }
}

impl std::fmt::Display for Comparator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a criterion measures task performance or goal progress.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Task,
    Goal,
}

fn default_weight() -> f64 {
    1.0
}

/// One measurable criterion: a metric, a direction, a threshold, and the
/// side of the alignment computation it feeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub metric_id: MetricId,
    pub comparator: Comparator,
    pub threshold: f64,
    pub kind: CriterionKind,
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Optional tag looked up in the goal spec's `context_weights` multipliers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

/// A tactical sub-objective and the criteria that operationalize it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tactical {
    pub objective: String,
    #[serde(default)]
    pub criteria: Vec<Criterion>,
}

/// A named constraint. Constraints with a `domain` restrict evaluation to
/// events of that domain; anything else is carried as inert metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A hierarchical goal specification as loaded from disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub strategic: String,
    #[serde(default)]
    pub tactical: Vec<Tactical>,
    /// Criteria attached directly to the strategic objective.
    #[serde(default)]
    pub operational: Vec<Criterion>,
    #[serde(default)]
    pub constraints: Vec<ConstraintRecord>,
    /// Weight multipliers applied to criteria carrying the matching context
    /// tag during decomposition.
    #[serde(default)]
    pub context_weights: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum GoalError {
    #[error("empty-criteria: the goal spec contains no criteria")]
    EmptyCriteria,
    #[error("invalid-weight: criterion {index} has weight {weight}")]
    InvalidWeight { index: usize, weight: f64 },
    #[error("invalid-threshold: criterion {index} has threshold {threshold}")]
    InvalidThreshold { index: usize, threshold: f64 },
    #[error("invalid-context-weight: {context} = {weight}")]
    InvalidContextWeight { context: String, weight: f64 },
    #[error("empty-log: no events to evaluate")]
    EmptyLog,
    #[error(transparent)]
    Alignment(#[from] MetricError),
}

/// The flattened form of a spec: criteria in declaration order with context
/// multipliers folded in and weights normalized to sum 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub strategic: String,
    pub criteria: Vec<Criterion>,
    pub constraints: Vec<ConstraintRecord>,
}

impl Decomposition {
    /// Re-wraps the decomposition as a flat spec. Context multipliers are
    /// already folded into the weights, so the map is left empty; running
    /// [`decompose`] on the result reproduces this decomposition.
    pub fn to_spec(&self) -> GoalSpec {
        GoalSpec {
            strategic: self.strategic.clone(),
            tactical: Vec::new(),
            operational: self.criteria.clone(),
            constraints: self.constraints.clone(),
            context_weights: BTreeMap::new(),
        }
    }
}

/// Flattens the hierarchy (tactical criteria in order, then operational),
/// folds context multipliers into weights, and normalizes weights to sum 1.
pub fn decompose(spec: &GoalSpec) -> Result<Decomposition, GoalError> {
    for (context, &weight) in &spec.context_weights {
        if !weight.is_finite() || weight <= 0.0 {
            return Err(GoalError::InvalidContextWeight {
                context: context.clone(),
                weight,
            });
        }
    }

    let mut criteria: Vec<Criterion> = spec
        .tactical
        .iter()
        .flat_map(|t| t.criteria.iter().cloned())
        .chain(spec.operational.iter().cloned())
        .collect();
    if criteria.is_empty() {
        return Err(GoalError::EmptyCriteria);
    }

    let mut sum = 0.0;
    for (index, criterion) in criteria.iter_mut().enumerate() {
        if !criterion.threshold.is_finite() {
            return Err(GoalError::InvalidThreshold {
                index,
                threshold: criterion.threshold,
            });
        }
        if !criterion.weight.is_finite() || criterion.weight <= 0.0 {
            return Err(GoalError::InvalidWeight {
                index,
                weight: criterion.weight,
            });
        }
        let multiplier = criterion
            .context
            .as_ref()
            .and_then(|tag| spec.context_weights.get(tag))
            .copied()
            .unwrap_or(1.0);
        criterion.weight *= multiplier;
        sum += criterion.weight;
    }
    for criterion in &mut criteria {
        criterion.weight /= sum;
    }

    Ok(Decomposition {
        strategic: spec.strategic.clone(),
        criteria,
        constraints: spec.constraints.clone(),
    })
}

/// A criterion together with its pass fraction on a log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCriterion {
    pub criterion: Criterion,
    pub score: f64,
}

/// Full evaluation output: the alignment record plus per-criterion scores
/// for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub record: AlignmentRecord,
    pub scores: Vec<ScoredCriterion>,
    pub users: usize,
    pub span_days: u32,
}

/// Evaluates a decomposition against a log and reports per-criterion scores
/// alongside the alignment record.
///
/// `horizon_days` fixes the observation window for rate and retention
/// statistics; None derives it from the log itself. Criteria of the missing
/// kind on a ragged tail pair with the mean score of the other kind, and a
/// completely absent kind contributes a neutral 1.0.
pub fn evaluate_detailed(
    decomposition: &Decomposition,
    events: &[InteractionEvent],
    horizon_days: Option<u32>,
) -> Result<Evaluation, GoalError> {
    let domain_filters: Vec<Domain> = decomposition
        .constraints
        .iter()
        .filter_map(|c| c.domain)
        .collect();
    let filtered: Vec<InteractionEvent>;
    let visible: &[InteractionEvent] = if domain_filters.is_empty() {
        events
    } else {
        filtered = events
            .iter()
            .filter(|e| domain_filters.contains(&e.domain))
            .cloned()
            .collect();
        &filtered
    };
    if visible.is_empty() {
        return Err(GoalError::EmptyLog);
    }

    let stats = user_stats(visible);
    let span = span_days(visible, horizon_days);
    let users = stats.len();

    let scores: Vec<ScoredCriterion> = decomposition
        .criteria
        .iter()
        .map(|criterion| {
            let passed = stats
                .values()
                .filter(|u| {
                    criterion
                        .comparator
                        .holds(criterion.metric_id.value(u, span), criterion.threshold)
                })
                .count();
            ScoredCriterion {
                criterion: criterion.clone(),
                score: passed as f64 / users as f64,
            }
        })
        .collect();

    let tasks: Vec<&ScoredCriterion> = scores
        .iter()
        .filter(|s| s.criterion.kind == CriterionKind::Task)
        .collect();
    let goals: Vec<&ScoredCriterion> = scores
        .iter()
        .filter(|s| s.criterion.kind == CriterionKind::Goal)
        .collect();

    let mean = |side: &[&ScoredCriterion]| -> f64 {
        if side.is_empty() {
            1.0
        } else {
            side.iter().map(|s| s.score).sum::<f64>() / side.len() as f64
        }
    };
    let task_fill = mean(&tasks);
    let goal_fill = mean(&goals);

    let pairs = tasks.len().max(goals.len());
    let mut entries = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let task = tasks.get(i);
        let goal = goals.get(i);
        let weight = match (task, goal) {
            (Some(t), Some(g)) => (t.criterion.weight + g.criterion.weight) / 2.0,
            (Some(t), None) => t.criterion.weight,
            (None, Some(g)) => g.criterion.weight,
            (None, None) => unreachable!(),
        };
        entries.push(AlignmentEntry {
            task_score: task.map(|t| t.score).unwrap_or(task_fill),
            goal_score: goal.map(|g| g.score).unwrap_or(goal_fill),
            weight,
        });
    }
    let total: f64 = entries.iter().map(|e| e.weight).sum();
    for entry in &mut entries {
        entry.weight /= total;
    }

    let record = AlignmentRecord::new(entries, None)?;
    Ok(Evaluation {
        record,
        scores,
        users,
        span_days: span,
    })
}

/// Criterion evaluation reduced to the alignment record.
pub fn evaluate_criteria(
    decomposition: &Decomposition,
    events: &[InteractionEvent],
    horizon_days: Option<u32>,
) -> Result<AlignmentRecord, GoalError> {
    evaluate_detailed(decomposition, events, horizon_days).map(|e| e.record)
}
