//! Experiment orchestration: paired-arm trials, engagement summaries,
//! policy training, transfer matrices, and report rendering.
//!
//! A trial pairs a control scenario (static exploit-similar policy) with a
//! treatment scenario sharing the same seed, so metric differences reflect
//! the policy and not the random draw. The treatment pipeline decomposes the
//! goal spec, scores the pre-optimization baseline, fits the satisfaction
//! model, solves for a policy by value iteration on a training simulation,
//! and then re-simulates under that policy. Training runs use a fixed seed
//! offset so evaluation logs stay held out.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Arm, InteractionEvent, ScenarioConfig};
use crate::generator::{latent_trace, simulate, GenError, RecPolicy};
use crate::goals::{
    decompose, evaluate_criteria, evaluate_detailed, Decomposition, GoalError, GoalSpec,
};
use crate::mdp::{
    estimate_mdp, value_iteration, Action, MdpError, MdpSpec, Policy, DEFAULT_GAMMA,
    DEFAULT_VI_TOLERANCE,
};
use crate::metrics::{
    baseline_score, cohens_d_seeded, gai, BaselineAssessment, BaselineEntry, EffectSizeReport,
    MetricError, DEFAULT_EFFECT_SEED,
};
use crate::pattern::{
    fit_from_events, PatternError, PatternModel, StateSpace, DEFAULT_BUCKETS, DEFAULT_SMOOTHING,
    SECONDS_PER_DAY,
};
use crate::stats::{span_days, user_stats, UserStats};
use crate::transfer::{run_transfer, TransferError, TransferResult, TransferScore};

/// XOR-ed into a scenario seed to derive its training-run seed, keeping the
/// evaluation log held out from everything the optimizer saw.
pub const TRAIN_SEED_XOR: u64 = 0x7472_6169;

/// Sweep cap for value iteration inside training.
const VI_MAX_ITERATIONS: usize = 100_000;

/// The six engagement metrics every summary and effect table reports, in
/// presentation order.
pub const SUMMARY_METRICS: [&str; 6] = [
    "daily_listening_min",
    "discovery_rate",
    "retention",
    "episode_completion",
    "monthly_active",
    "genre_exploration",
];

#[derive(Clone, Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("empty-log")]
    EmptyLog,
    #[error("arm-mismatch: {0}")]
    ArmMismatch(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Goal(#[from] GoalError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
}

/// Population engagement profile of one log.
///
/// Play-level fields (`discovery_rate`, `episode_completion`,
/// `genre_exploration`) are pooled fractions over recognized plays;
/// activity fields (`retention`, `monthly_active`) are fractions of users;
/// `daily_listening_min` is the mean over users of listening minutes per
/// day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngagementSummary {
    pub daily_listening_min: f64,
    pub discovery_rate: f64,
    pub retention: f64,
    pub episode_completion: f64,
    pub monthly_active: f64,
    pub genre_exploration: f64,
}

impl EngagementSummary {
    /// (metric name, value) rows in [`SUMMARY_METRICS`] order.
    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("daily_listening_min", self.daily_listening_min),
            ("discovery_rate", self.discovery_rate),
            ("retention", self.retention),
            ("episode_completion", self.episode_completion),
            ("monthly_active", self.monthly_active),
            ("genre_exploration", self.genre_exploration),
        ]
    }
}

/// Computes the engagement summary of a log. `horizon_days` fixes the
/// observation window; None derives it from the log.
pub fn summarize(
    events: &[InteractionEvent],
    horizon_days: Option<u32>,
) -> Result<EngagementSummary, HarnessError> {
    if events.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    let stats = user_stats(events);
    let span = span_days(events, horizon_days);
    let users = stats.len() as f64;

    let mut recognized = 0u64;
    let mut completed = 0u64;
    let mut novel = 0u64;
    let mut genres = 0u64;
    let mut daily = 0.0;
    let mut retention = 0.0;
    let mut monthly = 0.0;
    for u in stats.values() {
        recognized += u.recognized;
        completed += u.completed;
        novel += u.novel;
        genres += u.distinct_genres;
        daily += u.daily_listening_min(span);
        retention += u.retained(span);
        monthly += u.monthly_active(span);
    }
    let play_fraction = |n: u64| {
        if recognized == 0 {
            0.0
        } else {
            n as f64 / recognized as f64
        }
    };
    Ok(EngagementSummary {
        daily_listening_min: daily / users,
        discovery_rate: play_fraction(novel),
        retention: retention / users,
        episode_completion: play_fraction(completed),
        monthly_active: monthly / users,
        genre_exploration: play_fraction(genres).min(1.0),
    })
}

/// Per-user metric samples of one arm, in user-id order, for effect sizes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricSamples {
    pub daily_listening_min: Vec<f64>,
    pub discovery_rate: Vec<f64>,
    pub retention: Vec<f64>,
    pub episode_completion: Vec<f64>,
    pub monthly_active: Vec<f64>,
    pub genre_exploration: Vec<f64>,
}

impl MetricSamples {
    fn push_user(&mut self, u: &UserStats, span: u32) {
        self.daily_listening_min.push(u.daily_listening_min(span));
        self.discovery_rate.push(u.discovery_rate());
        self.retention.push(u.retained(span));
        self.episode_completion.push(u.completion_rate());
        self.monthly_active.push(u.monthly_active(span));
        self.genre_exploration.push(u.genre_exploration());
    }

    fn extend(&mut self, other: &MetricSamples) {
        self.daily_listening_min
            .extend_from_slice(&other.daily_listening_min);
        self.discovery_rate.extend_from_slice(&other.discovery_rate);
        self.retention.extend_from_slice(&other.retention);
        self.episode_completion
            .extend_from_slice(&other.episode_completion);
        self.monthly_active.extend_from_slice(&other.monthly_active);
        self.genre_exploration
            .extend_from_slice(&other.genre_exploration);
    }

    pub fn field(&self, metric: &str) -> &[f64] {
        match metric {
            "daily_listening_min" => &self.daily_listening_min,
            "discovery_rate" => &self.discovery_rate,
            "retention" => &self.retention,
            "episode_completion" => &self.episode_completion,
            "monthly_active" => &self.monthly_active,
            "genre_exploration" => &self.genre_exploration,
            other => panic!("unknown summary metric {other}"),
        }
    }
}

/// Per-user samples of every summary metric.
pub fn metric_samples(events: &[InteractionEvent], horizon_days: Option<u32>) -> MetricSamples {
    let stats = user_stats(events);
    let span = span_days(events, horizon_days);
    let mut samples = MetricSamples::default();
    for u in stats.values() {
        samples.push_user(u, span);
    }
    samples
}

/// One week of one arm, for plotting metric trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeeklyPoint {
    pub week: u32,
    /// Users active this week over users ever seen in the arm.
    pub active_fraction: f64,
    /// Mean listening minutes per active user per day this week.
    pub daily_listening_min: f64,
    pub discovery_rate: f64,
    /// Goal alignment of this week's events, when computable.
    pub gai: Option<f64>,
}

fn weekly_points(
    events: &[InteractionEvent],
    weeks: u32,
    total_users: u64,
    goals: &Decomposition,
) -> Vec<WeeklyPoint> {
    let mut index: Vec<Vec<u32>> = vec![Vec::new(); weeks as usize];
    for (i, event) in events.iter().enumerate() {
        let week = (event.timestamp / SECONDS_PER_DAY / 7) as usize;
        if week < index.len() {
            index[week].push(i as u32);
        }
    }
    index
        .iter()
        .enumerate()
        .map(|(week, ids)| {
            let slice: Vec<InteractionEvent> =
                ids.iter().map(|&i| events[i as usize].clone()).collect();
            if slice.is_empty() {
                return WeeklyPoint {
                    week: week as u32,
                    active_fraction: 0.0,
                    daily_listening_min: 0.0,
                    discovery_rate: 0.0,
                    gai: None,
                };
            }
            let stats = user_stats(&slice);
            let active = stats.len() as f64;
            let engagement: u64 = stats.values().map(|u| u.total_engagement_s).sum();
            let recognized: u64 = stats.values().map(|u| u.recognized).sum();
            let novel: u64 = stats.values().map(|u| u.novel).sum();
            let week_gai = evaluate_criteria(goals, &slice, Some(7))
                .ok()
                .and_then(|record| gai(&record).ok());
            WeeklyPoint {
                week: week as u32,
                active_fraction: active / total_users.max(1) as f64,
                daily_listening_min: engagement as f64 / 60.0 / 7.0 / active,
                discovery_rate: if recognized == 0 {
                    0.0
                } else {
                    novel as f64 / recognized as f64
                },
                gai: week_gai,
            }
        })
        .collect()
}

/// One simulated arm, reduced to aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub scenario_id: String,
    pub arm: Arm,
    pub users: u64,
    pub events: u64,
    /// Whole-run goal alignment against the arm's goal criteria.
    pub gai: f64,
    pub summary: EngagementSummary,
    pub weekly: Vec<WeeklyPoint>,
}

fn arm_run(
    config: &ScenarioConfig,
    events: &[InteractionEvent],
    goals: &Decomposition,
) -> Result<(ArmRun, MetricSamples), HarnessError> {
    let horizon = Some(config.duration_days());
    let summary = summarize(events, horizon)?;
    let samples = metric_samples(events, horizon);
    let record = evaluate_criteria(goals, events, horizon)?;
    let run = ArmRun {
        scenario_id: config.scenario_id.clone(),
        arm: config.arm,
        users: samples.daily_listening_min.len() as u64,
        events: events.len() as u64,
        gai: gai(&record)?,
        summary,
        weekly: weekly_points(events, config.duration_weeks, config.n_users, goals),
    };
    Ok((run, samples))
}

/// Everything the treatment pipeline produced before re-simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatArtifacts {
    /// Importance-weighted readiness score of the training log.
    pub baseline_score: f64,
    pub baseline: Vec<BaselineEntry>,
    pub pattern: PatternModel,
    pub policy: Policy,
    pub vi_iterations: usize,
    pub final_residual: f64,
}

/// Which policy the treatment arm runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CatPolicy {
    /// Full pipeline: estimate, optimize, re-simulate.
    Trained,
    /// Fixed action override, e.g. to mirror the control arm exactly for
    /// null checks.
    Static { action: Action },
}

/// Trial knobs with defaults matching the library's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RctOptions {
    pub cat_policy: CatPolicy,
    pub buckets: usize,
    pub smoothing: f64,
    pub gamma: f64,
    pub vi_tolerance: f64,
    pub effect_seed: u64,
}

impl Default for RctOptions {
    fn default() -> Self {
        RctOptions {
            cat_policy: CatPolicy::Trained,
            buckets: DEFAULT_BUCKETS,
            smoothing: DEFAULT_SMOOTHING,
            gamma: DEFAULT_GAMMA,
            vi_tolerance: DEFAULT_VI_TOLERANCE,
            effect_seed: DEFAULT_EFFECT_SEED,
        }
    }
}

/// A scenario plus its loaded goal spec; the library does no file IO.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub goals: GoalSpec,
}

/// Improvement of one summary metric, as a percentage of the control value.
/// None when the control value is zero and the treatment's is not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub metric: String,
    pub pct: Option<f64>,
}

fn improvements(control: &EngagementSummary, cat: &EngagementSummary) -> Vec<Improvement> {
    control
        .rows()
        .iter()
        .zip(cat.rows())
        .map(|((metric, base), (_, treated))| Improvement {
            metric: metric.to_string(),
            pct: if *base == 0.0 {
                if treated == 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            } else {
                Some((treated - base) / base * 100.0)
            },
        })
        .collect()
}

/// One control/treatment pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub seed: u64,
    pub control: ArmRun,
    pub cat: ArmRun,
    /// None when the treatment ran a static override instead of training.
    pub artifacts: Option<CatArtifacts>,
    pub improvements: Vec<Improvement>,
}

/// Effect-size row of one metric, pooled over all pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEffect {
    pub metric: String,
    pub control_mean: f64,
    pub cat_mean: f64,
    pub improvement_pct: Option<f64>,
    pub effect: EffectSizeReport,
}

/// Full trial output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RctReport {
    pub pairs: Vec<PairReport>,
    pub effects: Vec<MetricEffect>,
    pub options: RctOptions,
}

/// A trained policy with the model it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub mdp: MdpSpec,
    pub policy: Policy,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn train_scenario(config: &ScenarioConfig) -> ScenarioConfig {
    let mut train = config.clone();
    train.seed ^= TRAIN_SEED_XOR;
    train.scenario_id.push_str("-train");
    train
}

fn solve_from_days(
    days: &[crate::generator::DayRecord],
    options: &RctOptions,
) -> Result<TrainedModel, HarnessError> {
    let mdp = estimate_mdp(days, options.buckets, options.smoothing, options.gamma)?;
    let solved = value_iteration(&mdp, options.vi_tolerance, VI_MAX_ITERATIONS)?;
    Ok(TrainedModel {
        mdp,
        policy: solved.policy,
        residuals: solved.residuals,
        iterations: solved.iterations,
    })
}

/// Runs an exploratory simulation on the training seed and solves for the
/// engagement-optimal policy.
pub fn train_policy(
    config: &ScenarioConfig,
    options: &RctOptions,
) -> Result<TrainedModel, HarnessError> {
    let out = simulate(&train_scenario(config), &RecPolicy::Uniform)?;
    solve_from_days(&out.days, options)
}

fn train_cat(
    config: &ScenarioConfig,
    goals: &Decomposition,
    options: &RctOptions,
) -> Result<CatArtifacts, HarnessError> {
    let train_config = train_scenario(config);
    let out = simulate(&train_config, &RecPolicy::Uniform)?;

    let evaluation = evaluate_detailed(goals, &out.events, Some(train_config.duration_days()))?;
    let baseline: Vec<BaselineEntry> = evaluation
        .scores
        .iter()
        .map(|s| BaselineEntry {
            metric_id: s.criterion.metric_id.as_str().to_string(),
            value: s.score,
            importance: s.criterion.weight,
        })
        .collect();
    let base = baseline_score(&BaselineAssessment::new(baseline.clone())?)?;

    let space = StateSpace {
        hidden_buckets: options.buckets,
        ..StateSpace::default()
    };
    let trace = latent_trace(&out.days);
    let pattern = fit_from_events(&out.events, &space, Some(&trace), options.smoothing)?;

    let trained = solve_from_days(&out.days, options)?;
    Ok(CatArtifacts {
        baseline_score: base,
        baseline,
        pattern,
        policy: trained.policy,
        vi_iterations: trained.iterations,
        final_residual: trained.residuals.last().copied().unwrap_or(0.0),
    })
}

fn degenerate_effect(n_a: usize, n_b: usize, mean: f64) -> EffectSizeReport {
    EffectSizeReport {
        n_a,
        n_b,
        mean_a: mean,
        mean_b: mean,
        sigma_pooled: 0.0,
        d: 0.0,
        t_stat: 0.0,
        dof: (n_a + n_b).saturating_sub(2) as f64,
        p_value: 1.0,
        ci_low: 0.0,
        ci_high: 0.0,
    }
}

fn effect_rows(
    cat: &MetricSamples,
    control: &MetricSamples,
    effect_seed: u64,
) -> Result<Vec<MetricEffect>, HarnessError> {
    SUMMARY_METRICS
        .iter()
        .map(|metric| {
            let a = cat.field(metric);
            let b = control.field(metric);
            let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
            let (mean_a, mean_b) = (mean(a), mean(b));
            let effect = match cohens_d_seeded(a, b, effect_seed) {
                Ok(effect) => effect,
                // Two constant, equal samples: a legitimate zero effect
                // (identical-arm null runs land here).
                Err(MetricError::ZeroPooledVariance) if mean_a == mean_b => {
                    degenerate_effect(a.len(), b.len(), mean_a)
                }
                Err(e) => return Err(HarnessError::Metric(e)),
            };
            Ok(MetricEffect {
                metric: metric.to_string(),
                control_mean: mean_b,
                cat_mean: mean_a,
                improvement_pct: if mean_b == 0.0 {
                    if mean_a == 0.0 {
                        Some(0.0)
                    } else {
                        None
                    }
                } else {
                    Some((mean_a - mean_b) / mean_b * 100.0)
                },
                effect,
            })
        })
        .collect()
}

/// Runs the paired trial over every control/treatment pair in `bundles`.
///
/// Pairing is by seed: each seed must appear with exactly one control and
/// one treatment scenario. Pairs are reported in treatment scenario-id
/// order; per-metric effects pool user-level samples across pairs.
pub fn run_rct(bundles: &[ScenarioBundle], options: &RctOptions) -> Result<RctReport, HarnessError> {
    let mut by_seed: BTreeMap<u64, [Option<&ScenarioBundle>; 2]> = BTreeMap::new();
    for bundle in bundles {
        let slot = by_seed.entry(bundle.config.seed).or_insert([None, None]);
        let side = match bundle.config.arm {
            Arm::Control => 0,
            Arm::Cat => 1,
        };
        if slot[side].is_some() {
            return Err(HarnessError::ArmMismatch(format!(
                "duplicate {} arm for seed {}",
                bundle.config.arm, bundle.config.seed
            )));
        }
        slot[side] = Some(bundle);
    }
    if by_seed.is_empty() {
        return Err(HarnessError::ArmMismatch("no scenarios supplied".to_string()));
    }

    let mut paired = Vec::new();
    for (seed, [control, cat]) in by_seed {
        match (control, cat) {
            (Some(c), Some(t)) => paired.push((seed, c, t)),
            (Some(c), None) => {
                return Err(HarnessError::ArmMismatch(format!(
                    "control scenario {} (seed {seed}) has no treatment partner",
                    c.config.scenario_id
                )))
            }
            (None, Some(t)) => {
                return Err(HarnessError::ArmMismatch(format!(
                    "treatment scenario {} (seed {seed}) has no control partner",
                    t.config.scenario_id
                )))
            }
            (None, None) => unreachable!(),
        }
    }
    paired.sort_by(|a, b| a.2.config.scenario_id.cmp(&b.2.config.scenario_id));

    let mut pairs = Vec::new();
    let mut control_samples = MetricSamples::default();
    let mut cat_samples = MetricSamples::default();

    for (seed, control_bundle, cat_bundle) in paired {
        let control_goals = decompose(&control_bundle.goals)?;
        let cat_goals = decompose(&cat_bundle.goals)?;

        let control_out = simulate(
            &control_bundle.config,
            &RecPolicy::Static {
                action: Action::ExploitSimilar,
            },
        )?;
        let (control_run, samples) =
            arm_run(&control_bundle.config, &control_out.events, &control_goals)?;
        control_samples.extend(&samples);
        drop(control_out);

        let (cat_policy, artifacts) = match &options.cat_policy {
            CatPolicy::Static { action } => (RecPolicy::Static { action: *action }, None),
            CatPolicy::Trained => {
                let artifacts = train_cat(&cat_bundle.config, &cat_goals, options)?;
                (
                    RecPolicy::Table {
                        policy: artifacts.policy.clone(),
                    },
                    Some(artifacts),
                )
            }
        };
        let cat_out = simulate(&cat_bundle.config, &cat_policy)?;
        let (cat_run, samples) = arm_run(&cat_bundle.config, &cat_out.events, &cat_goals)?;
        cat_samples.extend(&samples);
        drop(cat_out);

        pairs.push(PairReport {
            seed,
            improvements: improvements(&control_run.summary, &cat_run.summary),
            control: control_run,
            cat: cat_run,
            artifacts,
        });
    }

    let effects = effect_rows(&cat_samples, &control_samples, options.effect_seed)?;
    Ok(RctReport {
        pairs,
        effects,
        options: options.clone(),
    })
}

/// Trains a policy on every scenario and applies it to every scenario,
/// scoring each ordered pair with the source's goal criteria. Row-major in
/// bundle order; the diagonal holds identity transfers.
pub fn transfer_matrix(
    bundles: &[ScenarioBundle],
    options: &RctOptions,
) -> Result<Vec<TransferResult>, HarnessError> {
    let mut results = Vec::with_capacity(bundles.len() * bundles.len());
    for source in bundles {
        let goals = decompose(&source.goals)?;
        let trained = train_policy(&source.config, options)?;
        let policy = RecPolicy::Table {
            policy: trained.policy,
        };
        for target in bundles {
            results.push(run_transfer(
                &source.config,
                &target.config,
                &goals,
                &policy,
                TransferScore::Gai,
            )?);
        }
    }
    Ok(results)
}

fn format_metric(metric: &str, value: f64) -> String {
    if metric == "daily_listening_min" {
        format!("{value:10.2}")
    } else {
        format!("{value:10.4}")
    }
}

fn format_pct(pct: Option<f64>) -> String {
    match pct {
        Some(p) => format!("{p:+10.1}%"),
        None => format!("{:>11}", "n/a"),
    }
}

fn format_p(p: f64) -> String {
    if p == 0.0 {
        "<1e-300".to_string()
    } else if p < 1e-4 {
        format!("{p:.1e}")
    } else {
        format!("{p:.4}")
    }
}

/// Per-pair engagement tables: metric, control, treatment, improvement.
pub fn render_summary_table(report: &RctReport) -> String {
    let mut out = String::new();
    for pair in &report.pairs {
        let _ = writeln!(
            out,
            "pair seed {}: {} vs {} ({} users)",
            pair.seed, pair.control.scenario_id, pair.cat.scenario_id, pair.control.users
        );
        let _ = writeln!(
            out,
            "  {:<22} {:>10} {:>10} {:>11}",
            "metric", "control", "cat", "improvement"
        );
        for (improvement, ((metric, base), (_, treated))) in pair
            .improvements
            .iter()
            .zip(pair.control.summary.rows().iter().zip(pair.cat.summary.rows()))
        {
            let _ = writeln!(
                out,
                "  {:<22} {} {} {}",
                metric,
                format_metric(metric, *base),
                format_metric(metric, treated),
                format_pct(improvement.pct),
            );
        }
        let _ = writeln!(
            out,
            "  {:<22} {:>10.4} {:>10.4}",
            "gai", pair.control.gai, pair.cat.gai
        );
        out.push('\n');
    }
    out
}

/// Statistical validation table: one row per metric with effect size, test
/// statistic, p-value, sample sizes, and confidence interval.
pub fn render_effect_table(report: &RctReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:>8} {:>9} {:>9} {:>8} {:>8} {:>17}",
        "metric", "d", "t", "p", "n_cat", "n_ctl", "95% CI"
    );
    for row in &report.effects {
        let _ = writeln!(
            out,
            "{:<22} {:>8.3} {:>9.2} {:>9} {:>8} {:>8} [{:>6.3}, {:>6.3}]",
            row.metric,
            row.effect.d,
            row.effect.t_stat,
            format_p(row.effect.p_value),
            row.effect.n_a,
            row.effect.n_b,
            row.effect.ci_low,
            row.effect.ci_high,
        );
    }
    out
}

/// Weekly trajectories of both arms as CSV for external plotting.
pub fn plot_data(report: &RctReport) -> String {
    let mut out = String::from(
        "scenario_id,arm,week,active_fraction,daily_listening_min,discovery_rate,gai\n",
    );
    for pair in &report.pairs {
        for run in [&pair.control, &pair.cat] {
            for point in &run.weekly {
                let gai_field = point
                    .gai
                    .map(|g| format!("{g}"))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    run.scenario_id,
                    run.arm,
                    point.week,
                    point.active_fraction,
                    point.daily_listening_min,
                    point.discovery_rate,
                    gai_field,
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CommandType, Domain};
    use crate::generator::tests::test_scenario;
    use crate::goals::{Comparator, Criterion, CriterionKind, MetricId, Tactical};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn play(
        user: &str,
        session: &str,
        day: u32,
        engagement_s: u64,
        completed: bool,
        novel: bool,
        genre: &str,
    ) -> InteractionEvent {
        InteractionEvent {
            timestamp: day as u64 * SECONDS_PER_DAY + 30_000,
            user_id: user.to_string(),
            session_id: session.to_string(),
            domain: Domain::Music,
            command_type: CommandType::PlaySimilar,
            recognized: true,
            latency_ms: 150,
            content_id: format!("{genre}-a001-i0001"),
            novel_content: novel,
            engagement_s,
            completed,
        }
    }

    fn hand_log() -> Vec<InteractionEvent> {
        let mut log = vec![
            play("u1", "a", 0, 600, true, false, "m00"),
            play("u1", "a", 0, 600, true, true, "m00"),
            play("u1", "a", 0, 600, false, false, "m01"),
            play("u1", "b", 21, 1200, true, false, "m02"),
            play("u2", "c", 3, 900, false, true, "p05"),
            play("u3", "d", 26, 300, true, false, "b09"),
        ];
        // One unrecognized command with no play side effects.
        let mut failed = play("u2", "c", 3, 0, false, false, "p05");
        failed.recognized = false;
        log.push(failed);
        log
    }

    #[test]
    fn summary_matches_hand_tally() {
        let summary = summarize(&hand_log(), Some(28)).unwrap();
        // Recognized plays: 6. Novel: 2. Completed: 4. Distinct genres:
        // u1 {m00, m01, m02}, u2 {p05}, u3 {b09} = 5.
        assert!((summary.discovery_rate - 2.0 / 6.0).abs() < 1e-12);
        assert!((summary.episode_completion - 4.0 / 6.0).abs() < 1e-12);
        assert!((summary.genre_exploration - 5.0 / 6.0).abs() < 1e-12);
        // Final week = days 21..27: u1 and u3 are active there.
        assert!((summary.retention - 2.0 / 3.0).abs() < 1e-12);
        // Final four weeks cover day 0 onward: everyone.
        assert_eq!(summary.monthly_active, 1.0);
        // Listening minutes per day: u1 3000s, u2 900s, u3 300s over 28 days.
        let expected =
            (3000.0 + 900.0 + 300.0) / 60.0 / 28.0 / 3.0;
        assert!((summary.daily_listening_min - expected).abs() < 1e-12);
    }

    #[test]
    fn fully_completed_log_scores_one() {
        let log = vec![
            play("u1", "a", 0, 600, true, false, "m00"),
            play("u2", "b", 0, 700, true, true, "m03"),
        ];
        let summary = summarize(&log, None).unwrap();
        assert_eq!(summary.episode_completion, 1.0);
    }

    #[test]
    fn retention_is_zero_when_activity_stops_in_week_one() {
        let log = vec![play("u1", "a", 2, 600, true, false, "m00")];
        let summary = summarize(&log, Some(26 * 7)).unwrap();
        assert_eq!(summary.retention, 0.0);
        assert_eq!(summary.monthly_active, 0.0);
    }

    #[test]
    fn empty_log_is_rejected() {
        assert_eq!(summarize(&[], None), Err(HarnessError::EmptyLog));
    }

    #[test]
    fn summaries_are_order_invariant() {
        let mut log = hand_log();
        let forward = summarize(&log, Some(28)).unwrap();
        log.reverse();
        assert_eq!(forward, summarize(&log, Some(28)).unwrap());
    }

    fn engagement_goals() -> GoalSpec {
        GoalSpec {
            strategic: "Sustain engaged listening".to_string(),
            tactical: vec![Tactical {
                objective: "Reliable voice control".to_string(),
                criteria: vec![Criterion {
                    metric_id: MetricId::RecognitionRate,
                    comparator: Comparator::Greater,
                    threshold: 0.5,
                    kind: CriterionKind::Task,
                    weight: 1.0,
                    context: None,
                }],
            }],
            operational: vec![
                Criterion {
                    metric_id: MetricId::SessionLengthMin,
                    comparator: Comparator::Greater,
                    threshold: 15.0,
                    kind: CriterionKind::Goal,
                    weight: 1.0,
                    context: None,
                },
                Criterion {
                    metric_id: MetricId::WeeklyActiveDays,
                    comparator: Comparator::Greater,
                    threshold: 2.0,
                    kind: CriterionKind::Goal,
                    weight: 1.0,
                    context: None,
                },
            ],
            constraints: Vec::new(),
            context_weights: BTreeMap::new(),
        }
    }

    fn bundle_pair(seed: u64, n_users: u64, weeks: u32) -> Vec<ScenarioBundle> {
        let mut control = test_scenario(seed, n_users, weeks);
        control.scenario_id = format!("trial-{seed}-control");
        control.arm = Arm::Control;
        let mut cat = test_scenario(seed, n_users, weeks);
        cat.scenario_id = format!("trial-{seed}-cat");
        cat.arm = Arm::Cat;
        vec![
            ScenarioBundle {
                config: control,
                goals: engagement_goals(),
            },
            ScenarioBundle {
                config: cat,
                goals: engagement_goals(),
            },
        ]
    }

    #[test]
    fn identical_policies_give_exactly_zero_improvements() {
        let bundles = bundle_pair(7, 150, 3);
        let options = RctOptions {
            cat_policy: CatPolicy::Static {
                action: Action::ExploitSimilar,
            },
            ..RctOptions::default()
        };
        let report = run_rct(&bundles, &options).unwrap();
        assert_eq!(report.pairs.len(), 1);
        let pair = &report.pairs[0];
        assert_eq!(pair.control.summary, pair.cat.summary);
        for improvement in &pair.improvements {
            assert_eq!(improvement.pct, Some(0.0), "{}", improvement.metric);
        }
        for row in &report.effects {
            assert_eq!(row.effect.d, 0.0, "{}", row.metric);
            assert_eq!(row.effect.p_value, 1.0);
            assert_eq!(row.improvement_pct, Some(0.0));
        }
        assert!(pair.artifacts.is_none());
    }

    #[test]
    fn trained_arm_beats_control_directionally() {
        let bundles = bundle_pair(11, 400, 4);
        let report = run_rct(&bundles, &RctOptions::default()).unwrap();
        let pair = &report.pairs[0];
        assert!(
            pair.cat.summary.daily_listening_min > pair.control.summary.daily_listening_min,
            "cat {} vs control {}",
            pair.cat.summary.daily_listening_min,
            pair.control.summary.daily_listening_min
        );
        let artifacts = pair.artifacts.as_ref().unwrap();
        assert!(artifacts.final_residual < RctOptions::default().vi_tolerance);
        assert!((0.0..=1.0).contains(&artifacts.baseline_score));
        assert_eq!(artifacts.policy.state_labels.len(), 12);
        // Weekly trajectories cover the whole horizon for both arms.
        assert_eq!(pair.control.weekly.len(), 4);
        assert_eq!(pair.cat.weekly.len(), 4);
        assert!(pair.control.weekly.iter().all(|w| w.active_fraction <= 1.0));
    }

    #[test]
    fn unpaired_scenarios_are_rejected() {
        let mut bundles = bundle_pair(3, 20, 1);
        bundles.pop();
        let err = run_rct(&bundles, &RctOptions::default()).unwrap_err();
        assert!(matches!(err, HarnessError::ArmMismatch(_)));

        let mut twins = bundle_pair(3, 20, 1);
        twins[1].config.arm = Arm::Control;
        let err = run_rct(&twins, &RctOptions::default()).unwrap_err();
        assert!(matches!(err, HarnessError::ArmMismatch(_)));
    }

    #[test]
    fn report_renders_all_three_forms() {
        let bundles = bundle_pair(5, 80, 2);
        let options = RctOptions {
            cat_policy: CatPolicy::Static {
                action: Action::ExploreNew,
            },
            ..RctOptions::default()
        };
        let report = run_rct(&bundles, &options).unwrap();

        let summary = render_summary_table(&report);
        assert!(summary.contains("daily_listening_min"));
        assert!(summary.contains("improvement"));

        let effects = render_effect_table(&report);
        assert_eq!(effects.lines().count(), 1 + SUMMARY_METRICS.len());

        let csv = plot_data(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "scenario_id,arm,week,active_fraction,daily_listening_min,discovery_rate,gai");
        // Two arms, two weeks each.
        assert_eq!(lines.len(), 1 + 4);
    }

    #[test]
    fn raising_explore_drive_never_lowers_discovery_under_zero_noise() {
        use crate::generator::{simulate, GeneratorParams};

        for seed in 0..10u64 {
            let mut rates = Vec::new();
            for explore_drive in [0.6, 0.9] {
                let mut config = test_scenario(seed, 80, 2);
                for domain in Domain::ALL {
                    let mut params = GeneratorParams::defaults_for(domain);
                    params.sigma = 0.0;
                    config.generator.insert(domain, params);
                }
                config.drive.explore_new = explore_drive;
                let out = simulate(
                    &config,
                    &RecPolicy::Static {
                        action: Action::ExploreNew,
                    },
                )
                .unwrap();
                let summary = summarize(&out.events, Some(config.duration_days())).unwrap();
                rates.push(summary.discovery_rate);
            }
            assert!(
                rates[1] >= rates[0],
                "seed {seed}: discovery {} -> {}",
                rates[0],
                rates[1]
            );
        }
    }

    #[test]
    fn two_pooled_sd_separation_reports_d_near_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let control: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let treated: Vec<f64> = (0..10_000)
            .map(|_| normal.sample(&mut rng) + 2.0)
            .collect();
        let effect = cohens_d_seeded(&treated, &control, 99).unwrap();
        assert!((effect.d - 2.0).abs() < 0.1, "d = {}", effect.d);
        assert!(effect.p_value < 1e-10);
        assert!(effect.ci_low < effect.d && effect.d < effect.ci_high);
    }

    #[test]
    fn rct_is_deterministic() {
        let bundles = bundle_pair(13, 60, 2);
        let options = RctOptions::default();
        let a = run_rct(&bundles, &options).unwrap();
        let b = run_rct(&bundles, &options).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn transfer_matrix_covers_all_ordered_pairs() {
        let mut music = test_scenario(21, 40, 2);
        music.scenario_id = "tm-music".to_string();
        let mut podcast = test_scenario(22, 40, 2);
        podcast.scenario_id = "tm-podcast".to_string();
        podcast.domain_mix = BTreeMap::from([
            (Domain::Music, 0.1),
            (Domain::Podcast, 0.8),
            (Domain::Audiobook, 0.1),
        ]);
        let bundles = vec![
            ScenarioBundle {
                config: music,
                goals: engagement_goals(),
            },
            ScenarioBundle {
                config: podcast,
                goals: engagement_goals(),
            },
        ];
        let results = transfer_matrix(&bundles, &RctOptions::default()).unwrap();
        assert_eq!(results.len(), 4);
        // Diagonal entries are identity transfers.
        assert!(results[0].success);
        assert_eq!(results[0].source_metric, results[0].target_metric);
        assert!(results[3].success);
        assert_eq!(results[1].source, Domain::Music);
        assert_eq!(results[1].target, Domain::Podcast);
    }
}
