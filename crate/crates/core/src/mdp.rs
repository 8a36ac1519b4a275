//! Tabular MDP estimation and value-iteration policy optimization.
//!
//! States are satisfaction-bucket x domain pairs when estimated from
//! simulator output, but the solver itself is generic over any finite
//! labeled state/action space. Ties in the greedy step break toward the
//! lowest action index, so solutions are deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Domain;
use crate::generator::DayRecord;
use crate::pattern::bucket_of;

/// Default discount factor.
pub const DEFAULT_GAMMA: f64 = 0.9;

/// Default sup-norm residual tolerance for value iteration.
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-9;

/// Sup-norm tolerance for iterative policy evaluation.
pub const POLICY_EVAL_TOLERANCE: f64 = 1e-10;

/// The four recommendation actions a policy can take each day, in tie-break
/// order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    ExploitSimilar,
    ExploreNew,
    ResumeContent,
    SwitchDomain,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::ExploitSimilar,
        Action::ExploreNew,
        Action::ResumeContent,
        Action::SwitchDomain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::ExploitSimilar => "exploit_similar",
            Action::ExploreNew => "explore_new",
            Action::ResumeContent => "resume_content",
            Action::SwitchDomain => "switch_domain",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|a| *a == self).unwrap()
    }

    pub fn labels() -> Vec<String> {
        Self::ALL.iter().map(|a| a.as_str().to_string()).collect()
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("invalid-spec: {0}")]
    InvalidSpec(String),
    #[error("no-convergence: residual {residual} after {iterations} sweeps")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("no-action-annotations: the day log is empty")]
    NoActionAnnotations,
    #[error("policy-shape-mismatch: policy covers {policy} states, spec has {spec}")]
    PolicyShapeMismatch { policy: usize, spec: usize },
    #[error("unknown-goal: {0}")]
    UnknownGoal(String),
}

/// A finite MDP: transition rows sum to 1, utilities are finite and carry one
/// slice per goal tag, and `goal` selects the slice the solver optimizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub state_labels: Vec<String>,
    pub action_labels: Vec<String>,
    pub goal_labels: Vec<String>,
    /// Row-major `[state][action][next_state]`.
    transition: Vec<f64>,
    /// Row-major `[state][action][goal]`.
    utility: Vec<f64>,
    pub gamma: f64,
    pub goal: usize,
}

impl MdpSpec {
    pub fn new(
        state_labels: Vec<String>,
        action_labels: Vec<String>,
        goal_labels: Vec<String>,
        transition: Vec<f64>,
        utility: Vec<f64>,
        gamma: f64,
        goal: usize,
    ) -> Result<Self, MdpError> {
        let (n_s, n_a, n_g) = (state_labels.len(), action_labels.len(), goal_labels.len());
        if n_s == 0 || n_a == 0 || n_g == 0 {
            return Err(MdpError::InvalidSpec(
                "states, actions, and goals must be non-empty".to_string(),
            ));
        }
        if transition.len() != n_s * n_a * n_s {
            return Err(MdpError::InvalidSpec(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_s * n_a * n_s
            )));
        }
        if utility.len() != n_s * n_a * n_g {
            return Err(MdpError::InvalidSpec(format!(
                "utility table has {} entries, expected {}",
                utility.len(),
                n_s * n_a * n_g
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::InvalidSpec(format!(
                "gamma must lie in [0, 1), got {gamma}"
            )));
        }
        if goal >= n_g {
            return Err(MdpError::UnknownGoal(format!(
                "index {goal} of {n_g} goal tags"
            )));
        }
        for (i, row) in transition.chunks(n_s).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(MdpError::InvalidSpec(format!(
                    "transition row {i} is not a distribution (sum {sum})"
                )));
            }
        }
        if utility.iter().any(|u| !u.is_finite()) {
            return Err(MdpError::InvalidSpec("non-finite utility".to_string()));
        }
        Ok(MdpSpec {
            state_labels,
            action_labels,
            goal_labels,
            transition,
            utility,
            gamma,
            goal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_labels.len()
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions() + a) * self.n_states() + next]
    }

    #[inline]
    fn p_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states();
        let base = (s * self.n_actions() + a) * n;
        &self.transition[base..base + n]
    }

    /// Utility of (s, a) under the active goal slice.
    #[inline]
    pub fn u(&self, s: usize, a: usize) -> f64 {
        self.utility[(s * self.n_actions() + a) * self.goal_labels.len() + self.goal]
    }

    /// Re-targets the optimization at another goal tag.
    pub fn with_goal(mut self, label: &str) -> Result<Self, MdpError> {
        self.goal = self
            .goal_labels
            .iter()
            .position(|g| g == label)
            .ok_or_else(|| MdpError::UnknownGoal(label.to_string()))?;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, MdpError> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::InvalidSpec(format!(
                "gamma must lie in [0, 1), got {gamma}"
            )));
        }
        self.gamma = gamma;
        Ok(self)
    }
}

/// A deterministic state-to-action map with the values it was extracted
/// from. Serializes as a standalone document so policies can be stored and
/// replayed against fresh simulations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub state_labels: Vec<String>,
    pub action_labels: Vec<String>,
    /// Action index per state.
    pub actions: Vec<usize>,
    /// Value estimate per state under the active goal.
    pub values: Vec<f64>,
    pub gamma: f64,
    pub goal_label: String,
}

impl Policy {
    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }
}

/// Value iteration output: the greedy policy plus the sup-norm Bellman
/// residual of every sweep (non-increasing for a valid spec).
#[derive(Clone, Debug)]
pub struct Solved {
    pub policy: Policy,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Synchronous value iteration to a sup-norm residual below `tol`.
pub fn value_iteration(mdp: &MdpSpec, tol: f64, max_iterations: usize) -> Result<Solved, MdpError> {
    if !(tol > 0.0) {
        return Err(MdpError::InvalidSpec(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n_s = mdp.n_states();
    let n_a = mdp.n_actions();
    let mut values = vec![0.0; n_s];
    let mut next = vec![0.0; n_s];
    let mut residuals = Vec::new();

    for iteration in 1..=max_iterations {
        let mut residual = 0.0f64;
        for s in 0..n_s {
            let mut best = f64::NEG_INFINITY;
            for a in 0..n_a {
                let expected: f64 = mdp
                    .p_row(s, a)
                    .iter()
                    .zip(&values)
                    .map(|(p, v)| p * v)
                    .sum();
                let q = mdp.u(s, a) + mdp.gamma * expected;
                if q > best {
                    best = q;
                }
            }
            next[s] = best;
            residual = residual.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        residuals.push(residual);
        if residual < tol {
            let actions = greedy(mdp, &values);
            return Ok(Solved {
                policy: Policy {
                    state_labels: mdp.state_labels.clone(),
                    action_labels: mdp.action_labels.clone(),
                    actions,
                    values,
                    gamma: mdp.gamma,
                    goal_label: mdp.goal_labels[mdp.goal].clone(),
                },
                residuals,
                iterations: iteration,
            });
        }
    }
    Err(MdpError::NoConvergence {
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        iterations: max_iterations,
    })
}

/// Greedy action per state; ties go to the lowest action index.
fn greedy(mdp: &MdpSpec, values: &[f64]) -> Vec<usize> {
    (0..mdp.n_states())
        .map(|s| {
            let mut best = f64::NEG_INFINITY;
            let mut best_action = 0;
            for a in 0..mdp.n_actions() {
                let expected: f64 = mdp
                    .p_row(s, a)
                    .iter()
                    .zip(values)
                    .map(|(p, v)| p * v)
                    .sum();
                let q = mdp.u(s, a) + mdp.gamma * expected;
                if q > best {
                    best = q;
                    best_action = a;
                }
            }
            best_action
        })
        .collect()
}

/// Evaluates a fixed action-per-state map by iterating the policy's Bellman
/// operator to [`POLICY_EVAL_TOLERANCE`].
pub fn policy_value(mdp: &MdpSpec, actions: &[usize]) -> Result<Vec<f64>, MdpError> {
    if actions.len() != mdp.n_states() {
        return Err(MdpError::PolicyShapeMismatch {
            policy: actions.len(),
            spec: mdp.n_states(),
        });
    }
    if let Some(&bad) = actions.iter().find(|&&a| a >= mdp.n_actions()) {
        return Err(MdpError::InvalidSpec(format!(
            "action index {bad} out of range"
        )));
    }
    let n_s = mdp.n_states();
    let mut values = vec![0.0; n_s];
    let mut next = vec![0.0; n_s];
    // gamma < 1 contracts, so the sweep count is bounded by
    // log(tol) / log(gamma); 10^6 covers every tolerance used here.
    for _ in 0..1_000_000 {
        let mut residual = 0.0f64;
        for s in 0..n_s {
            let a = actions[s];
            let expected: f64 = mdp
                .p_row(s, a)
                .iter()
                .zip(&values)
                .map(|(p, v)| p * v)
                .sum();
            next[s] = mdp.u(s, a) + mdp.gamma * expected;
            residual = residual.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if residual < POLICY_EVAL_TOLERANCE {
            return Ok(values);
        }
    }
    Err(MdpError::NoConvergence {
        residual: f64::INFINITY,
        iterations: 1_000_000,
    })
}

/// Simulator state index for a (satisfaction bucket, domain) pair:
/// domain-major so labels group by domain.
pub fn sim_state_index(bucket: usize, domain: Domain, buckets: usize) -> usize {
    domain.index() * buckets + bucket
}

pub fn sim_state_label(bucket: usize, domain: Domain) -> String {
    format!("{domain}:b{bucket}")
}

/// All simulator state labels for a bucket count, in index order.
pub fn sim_state_labels(buckets: usize) -> Vec<String> {
    Domain::ALL
        .iter()
        .flat_map(|&d| (0..buckets).map(move |b| sim_state_label(b, d)))
        .collect()
}

/// Goal tags produced by [`estimate_mdp`]: utilities from day engagement and
/// from the novel-content rate.
pub const ESTIMATED_GOALS: [&str; 2] = ["engagement", "discovery"];

/// Estimates a bucket x domain MDP from simulator day records.
///
/// Transitions count consecutive days of the same user with Laplace
/// smoothing `lambda` (never-taken state/action pairs become uniform rows).
/// The `engagement` utility slice is the mean same-day engagement of each
/// (state, action), the `discovery` slice the mean same-day novel-play rate;
/// both are normalized by their largest cell, and pairs without data score 0.
pub fn estimate_mdp(
    days: &[DayRecord],
    buckets: usize,
    lambda: f64,
    gamma: f64,
) -> Result<MdpSpec, MdpError> {
    if days.is_empty() {
        return Err(MdpError::NoActionAnnotations);
    }
    if buckets == 0 {
        return Err(MdpError::InvalidSpec("buckets must be positive".to_string()));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(MdpError::InvalidSpec(format!(
            "smoothing must be non-negative, got {lambda}"
        )));
    }
    let n_s = buckets * Domain::ALL.len();
    let n_a = Action::ALL.len();

    let mut transition_counts = vec![0u64; n_s * n_a * n_s];
    let mut occurrences = vec![0u64; n_s * n_a];
    let mut engagement_sum = vec![0.0f64; n_s * n_a];
    let mut novelty_sum = vec![0.0f64; n_s * n_a];

    let state_of = |record: &DayRecord| -> usize {
        sim_state_index(bucket_of(record.satisfaction, buckets), record.domain, buckets)
    };

    for record in days {
        let s = state_of(record);
        let a = record.action.index();
        occurrences[s * n_a + a] += 1;
        engagement_sum[s * n_a + a] += record.engagement_s as f64;
        if record.events > 0 {
            novelty_sum[s * n_a + a] += record.novel_plays as f64 / record.events as f64;
        }
    }
    for pair in days.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if prev.user_id == next.user_id && next.day == prev.day + 1 {
            let s = state_of(prev);
            let a = prev.action.index();
            transition_counts[(s * n_a + a) * n_s + state_of(next)] += 1;
        }
    }

    let mut transition = vec![0.0f64; n_s * n_a * n_s];
    for sa in 0..n_s * n_a {
        let row = &transition_counts[sa * n_s..(sa + 1) * n_s];
        let total: u64 = row.iter().sum();
        let den = total as f64 + lambda * n_s as f64;
        for (next, &count) in row.iter().enumerate() {
            transition[sa * n_s + next] = if den == 0.0 {
                1.0 / n_s as f64
            } else {
                (count as f64 + lambda) / den
            };
        }
    }

    let n_g = ESTIMATED_GOALS.len();
    let mut utility = vec![0.0f64; n_s * n_a * n_g];
    for (g, sums) in [engagement_sum, novelty_sum].into_iter().enumerate() {
        let means: Vec<f64> = sums
            .iter()
            .zip(&occurrences)
            .map(|(&sum, &n)| if n == 0 { 0.0 } else { sum / n as f64 })
            .collect();
        let max = means.iter().cloned().fold(0.0f64, f64::max);
        for (sa, &m) in means.iter().enumerate() {
            utility[sa * n_g + g] = if max > 0.0 { m / max } else { 0.0 };
        }
    }

    MdpSpec::new(
        sim_state_labels(buckets),
        Action::labels(),
        ESTIMATED_GOALS.iter().map(|g| g.to_string()).collect(),
        transition,
        utility,
        gamma,
        0,
    )
}
