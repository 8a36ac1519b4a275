//! Tabular estimation of hidden-state and goal tables from interaction logs.
//!
//! The model factorizes P(g | t) = sum_h P(g | h, t) * P(h | t) over a finite
//! task alphabet t (command type x recognized), K hidden satisfaction buckets
//! h, and a small goal alphabet g (session engaged or not). Both conditional
//! tables are Laplace-smoothed counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CommandType, InteractionEvent};

/// Default number of hidden satisfaction buckets.
pub const DEFAULT_BUCKETS: usize = 4;

/// Default Laplace smoothing constant.
pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// A session counts as goal-reaching when its total engagement meets this
/// many seconds.
pub const DEFAULT_ENGAGED_THRESHOLD_S: u64 = 600;

/// Seconds per simulated day (used to align events with latent traces).
pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PatternError {
    #[error("empty-log")]
    EmptyLog,
    #[error("dimension-mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid-smoothing: {0}")]
    InvalidSmoothing(f64),
    #[error("unknown-task-state: {got} (model has {have})")]
    UnknownTaskState { got: usize, have: usize },
    #[error("missing-trace-entry: user {user_id} day {day}")]
    MissingTraceEntry { user_id: String, day: u32 },
}

/// Bucket index of a satisfaction value in [0, 1]: equal-width buckets,
/// half-open below the top, with 1.0 closed into the top bucket.
pub fn bucket_of(satisfaction: f64, buckets: usize) -> usize {
    debug_assert!(buckets > 0);
    ((satisfaction.clamp(0.0, 1.0) * buckets as f64) as usize).min(buckets - 1)
}

/// Dimensions and labeling conventions of the estimation problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub hidden_buckets: usize,
    pub engaged_threshold_s: u64,
}

impl Default for StateSpace {
    fn default() -> Self {
        StateSpace {
            hidden_buckets: DEFAULT_BUCKETS,
            engaged_threshold_s: DEFAULT_ENGAGED_THRESHOLD_S,
        }
    }
}

impl StateSpace {
    /// Task alphabet size: five command types, recognized or not.
    pub fn task_count(&self) -> usize {
        CommandType::ALL.len() * 2
    }

    pub fn task_index(command: CommandType, recognized: bool) -> usize {
        command.index() * 2 + recognized as usize
    }

    pub fn task_labels() -> Vec<String> {
        CommandType::ALL
            .iter()
            .flat_map(|c| {
                [
                    format!("{c}:unrecognized"),
                    format!("{c}:recognized"),
                ]
            })
            .collect()
    }

    pub fn goal_labels() -> Vec<String> {
        vec!["not_engaged".to_string(), "engaged_session".to_string()]
    }
}

/// Ground-truth latent satisfaction, keyed by (user_id, day).
pub type LatentTrace = BTreeMap<(String, u32), f64>;

/// Fitted conditional tables. `p_h_given_t` is indexed `[t][h]`,
/// `p_g_given_ht` is indexed `[t][h][g]`; both rows sum to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternModel {
    pub task_labels: Vec<String>,
    pub hidden_count: usize,
    pub goal_labels: Vec<String>,
    pub smoothing: f64,
    pub observations: u64,
    p_h_given_t: Vec<Vec<f64>>,
    p_g_given_ht: Vec<Vec<Vec<f64>>>,
}

impl PatternModel {
    /// Fits both tables from (task, hidden, goal) index triples.
    ///
    /// With smoothing 0 the estimate is the maximum-likelihood ratio;
    /// conditions never observed fall back to uniform rows so every row
    /// remains a distribution.
    pub fn fit(
        triples: &[(usize, usize, usize)],
        task_labels: Vec<String>,
        hidden_count: usize,
        goal_labels: Vec<String>,
        smoothing: f64,
    ) -> Result<Self, PatternError> {
        if triples.is_empty() {
            return Err(PatternError::EmptyLog);
        }
        if !smoothing.is_finite() || smoothing < 0.0 {
            return Err(PatternError::InvalidSmoothing(smoothing));
        }
        let (n_t, n_h, n_g) = (task_labels.len(), hidden_count, goal_labels.len());
        if n_t == 0 || n_h == 0 || n_g == 0 {
            return Err(PatternError::DimensionMismatch(
                "all alphabets must be non-empty".to_string(),
            ));
        }
        let mut joint = vec![0u64; n_t * n_h * n_g];
        for &(t, h, g) in triples {
            if t >= n_t || h >= n_h || g >= n_g {
                return Err(PatternError::DimensionMismatch(format!(
                    "triple ({t}, {h}, {g}) outside ({n_t}, {n_h}, {n_g})"
                )));
            }
            joint[(t * n_h + h) * n_g + g] += 1;
        }

        let count_th = |t: usize, h: usize| -> u64 {
            (0..n_g).map(|g| joint[(t * n_h + h) * n_g + g]).sum()
        };
        let count_t = |t: usize| -> u64 { (0..n_h).map(|h| count_th(t, h)).sum() };

        let p_h_given_t: Vec<Vec<f64>> = (0..n_t)
            .map(|t| {
                let total = count_t(t) as f64;
                (0..n_h)
                    .map(|h| {
                        smoothed(count_th(t, h) as f64, total, smoothing, n_h)
                    })
                    .collect()
            })
            .collect();
        let p_g_given_ht: Vec<Vec<Vec<f64>>> = (0..n_t)
            .map(|t| {
                (0..n_h)
                    .map(|h| {
                        let total = count_th(t, h) as f64;
                        (0..n_g)
                            .map(|g| {
                                smoothed(
                                    joint[(t * n_h + h) * n_g + g] as f64,
                                    total,
                                    smoothing,
                                    n_g,
                                )
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        Ok(PatternModel {
            task_labels,
            hidden_count,
            goal_labels,
            smoothing,
            observations: triples.len() as u64,
            p_h_given_t,
            p_g_given_ht,
        })
    }

    pub fn task_count(&self) -> usize {
        self.task_labels.len()
    }

    pub fn goal_count(&self) -> usize {
        self.goal_labels.len()
    }

    pub fn p_h_given_t(&self, task: usize) -> Result<&[f64], PatternError> {
        self.p_h_given_t
            .get(task)
            .map(|row| row.as_slice())
            .ok_or(PatternError::UnknownTaskState {
                got: task,
                have: self.task_count(),
            })
    }

    pub fn p_g_given_ht(&self, task: usize, hidden: usize) -> Result<&[f64], PatternError> {
        if task >= self.task_count() {
            return Err(PatternError::UnknownTaskState {
                got: task,
                have: self.task_count(),
            });
        }
        Ok(&self.p_g_given_ht[task][hidden])
    }

    /// Goal distribution for a task, marginalized over hidden states:
    /// `P(g | t) = sum_h P(g | h, t) * P(h | t)`. Sums to 1.
    pub fn goal_given_task(&self, task: usize) -> Result<Vec<f64>, PatternError> {
        let hidden = self.p_h_given_t(task)?;
        let mut out = vec![0.0; self.goal_count()];
        for (h, &p_h) in hidden.iter().enumerate() {
            for (g, slot) in out.iter_mut().enumerate() {
                *slot += self.p_g_given_ht[task][h][g] * p_h;
            }
        }
        Ok(out)
    }
}

fn smoothed(count: f64, total: f64, lambda: f64, arity: usize) -> f64 {
    let den = total + lambda * arity as f64;
    if den == 0.0 {
        // Unsmoothed and never observed: uniform.
        1.0 / arity as f64
    } else {
        (count + lambda) / den
    }
}

/// Assigns each event a hidden bucket.
///
/// With ground truth, the event's simulated day is looked up in the latent
/// trace and bucketed directly. Without it, sessions are ranked by total
/// engagement and each event inherits its session's rank-quantile bucket
/// (ties broken by session id so the labeling is order-invariant).
pub fn label_hidden(
    events: &[InteractionEvent],
    space: &StateSpace,
    ground_truth: Option<&LatentTrace>,
) -> Result<Vec<usize>, PatternError> {
    if events.is_empty() {
        return Err(PatternError::EmptyLog);
    }
    if let Some(trace) = ground_truth {
        return events
            .iter()
            .map(|event| {
                let day = (event.timestamp / SECONDS_PER_DAY) as u32;
                trace
                    .get(&(event.user_id.clone(), day))
                    .map(|&s| bucket_of(s, space.hidden_buckets))
                    .ok_or_else(|| PatternError::MissingTraceEntry {
                        user_id: event.user_id.clone(),
                        day,
                    })
            })
            .collect();
    }

    let mut session_engagement: BTreeMap<&str, u64> = BTreeMap::new();
    for event in events {
        *session_engagement.entry(&event.session_id).or_insert(0) += event.engagement_s;
    }
    let mut ranked: Vec<(&str, u64)> = session_engagement
        .iter()
        .map(|(&id, &e)| (id, e))
        .collect();
    ranked.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0)));
    let n = ranked.len() as f64;
    let session_bucket: BTreeMap<&str, usize> = ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (id, _))| {
            let fraction = (rank as f64 + 0.5) / n;
            (id, bucket_of(fraction, space.hidden_buckets))
        })
        .collect();
    Ok(events
        .iter()
        .map(|e| session_bucket[e.session_id.as_str()])
        .collect())
}

/// (task, hidden, goal) triples for a labeled log. The goal label is shared
/// by every event of a session: engaged when the session's total engagement
/// reaches the space's threshold.
pub fn event_triples(
    events: &[InteractionEvent],
    space: &StateSpace,
    hidden: &[usize],
) -> Vec<(usize, usize, usize)> {
    let mut session_engagement: BTreeMap<&str, u64> = BTreeMap::new();
    for event in events {
        *session_engagement.entry(&event.session_id).or_insert(0) += event.engagement_s;
    }
    events
        .iter()
        .zip(hidden)
        .map(|(event, &h)| {
            let engaged = session_engagement[event.session_id.as_str()]
                >= space.engaged_threshold_s;
            (
                StateSpace::task_index(event.command_type, event.recognized),
                h,
                engaged as usize,
            )
        })
        .collect()
}

/// Labels a log (see [`label_hidden`]) and fits the conditional tables.
pub fn fit_from_events(
    events: &[InteractionEvent],
    space: &StateSpace,
    ground_truth: Option<&LatentTrace>,
    smoothing: f64,
) -> Result<PatternModel, PatternError> {
    let hidden = label_hidden(events, space, ground_truth)?;
    let triples = event_triples(events, space, &hidden);
    PatternModel::fit(
        &triples,
        StateSpace::task_labels(),
        space.hidden_buckets,
        StateSpace::goal_labels(),
        smoothing,
    )
}
