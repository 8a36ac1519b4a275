//! Synthetic interaction-log generator.
//!
//! Each user carries a latent daily satisfaction in [0, 1] that evolves as a
//! clamped AR(1) process pulled toward the drive of whatever action the
//! active recommendation policy chose that day:
//!
//! `s' = clamp(alpha * s + (1 - alpha) * drive(a) + sigma * eps)`
//!
//! Satisfaction feeds everything observable: session probability, events per
//! session, per-event engagement, completion odds, and weekly churn hazard.
//! All randomness is drawn from per-user ChaCha8 streams keyed on
//! (scenario seed, user index, lane), so output is independent of thread
//! count and generation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AgeGroup, CommandType, Domain, DriveTable, InteractionEvent, ScenarioConfig, UserProfile,
};
use crate::mdp::{sim_state_index, sim_state_labels, Action, Policy};
use crate::pattern::{bucket_of, LatentTrace, SECONDS_PER_DAY};

/// Earliest second of the day a session can start (06:00).
const SESSION_WINDOW_START_S: u64 = 6 * 3600;

/// Latest second of the day a session can start (14:00), leaving room for
/// long sessions to finish before midnight.
const SESSION_WINDOW_END_S: u64 = 14 * 3600;

/// Per-domain knobs of the satisfaction process and the observation model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Noise scale of the daily satisfaction update.
    pub sigma: f64,
    /// Persistence of the satisfaction process, in [0, 1].
    pub alpha: f64,
    /// Probability a voice command is recognized.
    pub base_recognition_rate: f64,
    /// Poisson mean for events per session, before satisfaction scaling.
    pub mean_session_events: f64,
    /// Base probability a played item is novel to the user.
    pub novelty_base_rate: f64,
    /// Base probability a recognized play runs to completion.
    pub completion_base_rate: f64,
    /// Satisfaction every user starts with on day 0.
    pub initial_satisfaction: f64,
}

impl GeneratorParams {
    /// Calibrated reference parameters. Music listeners are the stickiest
    /// and least noisy; audiobook listeners the most volatile.
    pub fn defaults_for(domain: Domain) -> GeneratorParams {
        match domain {
            Domain::Music => GeneratorParams {
                sigma: 0.10,
                alpha: 0.8,
                base_recognition_rate: 0.92,
                mean_session_events: 6.0,
                novelty_base_rate: 0.25,
                completion_base_rate: 0.60,
                initial_satisfaction: 0.5,
            },
            Domain::Podcast => GeneratorParams {
                sigma: 0.15,
                alpha: 0.7,
                base_recognition_rate: 0.90,
                mean_session_events: 4.0,
                novelty_base_rate: 0.35,
                completion_base_rate: 0.50,
                initial_satisfaction: 0.5,
            },
            Domain::Audiobook => GeneratorParams {
                sigma: 0.20,
                alpha: 0.6,
                base_recognition_rate: 0.88,
                mean_session_events: 3.0,
                novelty_base_rate: 0.15,
                completion_base_rate: 0.35,
                initial_satisfaction: 0.5,
            },
        }
    }

    /// Human-readable reasons this parameter set is unusable, empty when ok.
    pub fn violations(&self) -> Vec<String> {
        let mut reasons = Vec::new();
        let unit = |name: &str, v: f64, reasons: &mut Vec<String>| {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                reasons.push(format!("{name} must lie in [0, 1], got {v}"));
            }
        };
        if !self.sigma.is_finite() || !(0.0..=1.0).contains(&self.sigma) {
            reasons.push(format!("sigma must lie in [0, 1], got {}", self.sigma));
        }
        unit("alpha", self.alpha, &mut reasons);
        if !self.base_recognition_rate.is_finite()
            || !(self.base_recognition_rate > 0.0 && self.base_recognition_rate <= 1.0)
        {
            reasons.push(format!(
                "base_recognition_rate must lie in (0, 1], got {}",
                self.base_recognition_rate
            ));
        }
        if !self.mean_session_events.is_finite()
            || !(self.mean_session_events > 0.0 && self.mean_session_events <= 100.0)
        {
            reasons.push(format!(
                "mean_session_events must lie in (0, 100], got {}",
                self.mean_session_events
            ));
        }
        unit("novelty_base_rate", self.novelty_base_rate, &mut reasons);
        unit("completion_base_rate", self.completion_base_rate, &mut reasons);
        unit("initial_satisfaction", self.initial_satisfaction, &mut reasons);
        reasons
    }
}

/// The recommendation policy driving the simulated service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecPolicy {
    /// The same action every day for everyone.
    Static { action: Action },
    /// Uniformly random action each user-day; used to collect training data
    /// that covers the whole state-action space.
    Uniform,
    /// A solved state-to-action table over satisfaction-bucket x domain
    /// states.
    Table { policy: Policy },
}

impl RecPolicy {
    /// Bucket count implied by a table policy, or None for the stateless
    /// variants. Errors when the table was built over a different state
    /// space than the simulator's.
    fn table_buckets(&self) -> Result<Option<usize>, GenError> {
        let RecPolicy::Table { policy } = self else {
            return Ok(None);
        };
        let n_domains = Domain::ALL.len();
        let n = policy.state_labels.len();
        if n == 0 || n % n_domains != 0 {
            return Err(GenError::IncompatiblePolicy(format!(
                "{n} states cannot tile {n_domains} domains"
            )));
        }
        let buckets = n / n_domains;
        if policy.state_labels != sim_state_labels(buckets) {
            return Err(GenError::IncompatiblePolicy(
                "state labels do not match the simulator state space".to_string(),
            ));
        }
        if policy.action_labels != Action::labels() {
            return Err(GenError::IncompatiblePolicy(
                "action labels do not match the simulator actions".to_string(),
            ));
        }
        Ok(Some(buckets))
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum GenError {
    #[error("incompatible-policy: {0}")]
    IncompatiblePolicy(String),
}

/// One user-day of simulator ground truth. `satisfaction` is the value the
/// day started with, before that day's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub user_id: String,
    pub day: u32,
    pub domain: Domain,
    pub satisfaction: f64,
    pub action: Action,
    pub events: u32,
    pub engagement_s: u64,
    pub novel_plays: u32,
}

/// Everything one simulation run produces: the observable event log plus the
/// per-user-day ground truth behind it. Events are grouped by user in spawn
/// order and chronological within each user.
#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub events: Vec<InteractionEvent>,
    pub days: Vec<DayRecord>,
}

/// Ground-truth satisfaction keyed by (user, day), for evaluating inference
/// against the generator.
pub fn latent_trace(days: &[DayRecord]) -> LatentTrace {
    days.iter()
        .map(|d| ((d.user_id.clone(), d.day), d.satisfaction))
        .collect()
}

fn user_rng(seed: u64, user_index: u64, lane: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&user_index.to_le_bytes());
    key[16..24].copy_from_slice(&lane.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn user_id(index: u64) -> String {
    format!("u{index:08}")
}

/// Samples one profile. The primary domain gets a 1.5 affinity boost before
/// normalization, so the affinity argmax always recovers it.
fn spawn_user(config: &ScenarioConfig, index: u64) -> UserProfile {
    let mut rng = user_rng(config.seed, index, 0);
    let age_group = AgeGroup::ALL[rng.random_range(0..AgeGroup::ALL.len())];

    let roll: f64 = rng.random();
    let mut primary = Domain::Music;
    let mut acc = 0.0;
    for &domain in &Domain::ALL {
        acc += config.domain_mix.get(&domain).copied().unwrap_or(0.0);
        if roll < acc {
            primary = domain;
            break;
        }
    }

    let domain_affinity = Domain::ALL
        .iter()
        .map(|&d| {
            let mix = config.domain_mix.get(&d).copied().unwrap_or(0.0);
            let boost = if d == primary { 1.5 } else { 0.0 };
            (d, (mix + boost) / 2.5)
        })
        .collect();

    UserProfile {
        user_id: user_id(index),
        age_group,
        domain_affinity,
        base_daily_minutes: rng.random_range(45.0..120.0),
        exploration_propensity: rng.random(),
        churn_hazard: 0.005 + 0.03 * rng.random::<f64>(),
    }
}

/// The population a scenario simulates, in user-id order.
pub fn spawn_population(config: &ScenarioConfig) -> Vec<UserProfile> {
    (0..config.n_users)
        .into_par_iter()
        .map(|i| spawn_user(config, i))
        .collect()
}

fn primary_domain(profile: &UserProfile) -> Domain {
    *profile
        .domain_affinity
        .iter()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(d, _)| d)
        .unwrap_or(&Domain::Music)
}

fn command_for(action: Action, rng: &mut ChaCha8Rng) -> CommandType {
    let roll: f64 = rng.random();
    match action {
        Action::ExploitSimilar => match roll {
            r if r < 0.60 => CommandType::PlaySimilar,
            r if r < 0.85 => CommandType::PlaySpecific,
            r if r < 0.95 => CommandType::Navigate,
            _ => CommandType::Resume,
        },
        Action::ExploreNew => match roll {
            r if r < 0.65 => CommandType::ExploreNew,
            r if r < 0.80 => CommandType::PlaySimilar,
            r if r < 0.95 => CommandType::Navigate,
            _ => CommandType::PlaySpecific,
        },
        Action::ResumeContent => match roll {
            r if r < 0.70 => CommandType::Resume,
            r if r < 0.85 => CommandType::Navigate,
            _ => CommandType::PlaySpecific,
        },
        Action::SwitchDomain => match roll {
            r if r < 0.50 => CommandType::Navigate,
            r if r < 0.80 => CommandType::PlaySpecific,
            _ => CommandType::ExploreNew,
        },
    }
}

/// Content ids are `{domain code}{genre:02}-a{artist:03}-i{item:04}`; genre
/// and creator are recoverable from the id alone. Familiar plays stay inside
/// the user's three home genres, novel plays range over the full catalog.
fn content_id(domain: Domain, novel: bool, user_index: u64, rng: &mut ChaCha8Rng) -> String {
    let genre = if novel {
        rng.random_range(0..20u64)
    } else {
        let home = user_index % 20;
        match rng.random_range(0..3u64) {
            0 => home,
            1 => (home + 7) % 20,
            _ => (home + 13) % 20,
        }
    };
    let artist = rng.random_range(0..500u64);
    let item = rng.random_range(0..10_000u64);
    format!("{}{genre:02}-a{artist:03}-i{item:04}", domain.code())
}

struct UserSim {
    events: Vec<InteractionEvent>,
    days: Vec<DayRecord>,
}

fn simulate_user(
    config: &ScenarioConfig,
    policy: &RecPolicy,
    table_buckets: Option<usize>,
    index: u64,
) -> UserSim {
    let profile = spawn_user(config, index);
    let mut rng = user_rng(config.seed, index, 1);
    let mut domain = primary_domain(&profile);
    let mut satisfaction = config.params_for(domain).initial_satisfaction;

    let mut events = Vec::new();
    let mut days = Vec::new();

    for day in 0..config.duration_days() {
        // Weekly churn check before any activity; the hazard doubles as
        // satisfaction falls to zero and vanishes as it approaches one.
        if day > 0 && day % 7 == 0 {
            let hazard = (profile.churn_hazard * 2.0 * (1.0 - satisfaction)).clamp(0.0, 1.0);
            if rng.random::<f64>() < hazard {
                break;
            }
        }

        let params = config.params_for(domain);
        let action = match policy {
            RecPolicy::Static { action } => *action,
            RecPolicy::Uniform => Action::ALL[rng.random_range(0..Action::ALL.len())],
            RecPolicy::Table { policy } => {
                let buckets = table_buckets.expect("validated table policy");
                let state = sim_state_index(bucket_of(satisfaction, buckets), domain, buckets);
                Action::ALL[policy.action(state)]
            }
        };

        if action == Action::SwitchDomain {
            let others: Vec<(Domain, f64)> = Domain::ALL
                .iter()
                .filter(|&&d| d != domain)
                .map(|&d| {
                    (
                        d,
                        profile.domain_affinity.get(&d).copied().unwrap_or(0.0).max(1e-9),
                    )
                })
                .collect();
            let total: f64 = others.iter().map(|(_, w)| w).sum();
            domain = if rng.random::<f64>() * total < others[0].1 {
                others[0].0
            } else {
                others[1].0
            };
        }
        let params = if action == Action::SwitchDomain {
            config.params_for(domain)
        } else {
            params
        };

        let p_session = (0.25 + 0.6 * satisfaction).clamp(0.0, 1.0);
        let mut n_events = 0u32;
        let mut day_engagement = 0u64;
        let mut novel_plays = 0u32;

        if rng.random::<f64>() < p_session {
            let lambda = params.mean_session_events * (0.5 + satisfaction);
            let extra: f64 = rng.sample(Poisson::new(lambda).expect("validated lambda"));
            n_events = 1 + extra as u32;

            let session_id = format!("{}-d{day:05}", profile.user_id);
            let day_base = day as u64 * SECONDS_PER_DAY;
            let day_end = day_base + SECONDS_PER_DAY - 1;
            let mut ts =
                day_base + rng.random_range(SESSION_WINDOW_START_S..SESSION_WINDOW_END_S);

            // Novelty seeking scales with both the user's curiosity trait
            // and how satisfied they currently are: content users wander.
            let p_novel = (params.novelty_base_rate
                * (0.5 + profile.exploration_propensity)
                * (0.5 + satisfaction)
                * if action == Action::ExploreNew { 2.0 } else { 1.0 })
            .clamp(0.0, 0.95);

            for _ in 0..n_events {
                let command_type = command_for(action, &mut rng);
                let recognized = rng.random::<f64>() < params.base_recognition_rate;
                let latency_ms = if recognized {
                    rng.random_range(80..600)
                } else {
                    rng.random_range(250..1500)
                };
                let novel_content = recognized && rng.random::<f64>() < p_novel;
                let engagement_s = if recognized {
                    let noise: f64 = rng.random_range(0.5..1.5);
                    let raw = profile.base_daily_minutes * 60.0
                        / (params.mean_session_events * 2.0)
                        * (0.4 + 0.8 * satisfaction)
                        * noise;
                    raw.max(0.0).round() as u64
                } else {
                    0
                };
                let completed = recognized
                    && rng.random::<f64>()
                        < params.completion_base_rate * (0.4 + 0.6 * satisfaction);

                if novel_content {
                    novel_plays += 1;
                }
                day_engagement += engagement_s;

                events.push(InteractionEvent {
                    timestamp: ts.min(day_end),
                    user_id: profile.user_id.clone(),
                    session_id: session_id.clone(),
                    domain,
                    command_type,
                    recognized,
                    latency_ms,
                    content_id: content_id(domain, novel_content, index, &mut rng),
                    novel_content,
                    engagement_s,
                    completed,
                });
                ts += engagement_s + rng.random_range(5..120);
            }
        }

        days.push(DayRecord {
            user_id: profile.user_id.clone(),
            day,
            domain,
            satisfaction,
            action,
            events: n_events,
            engagement_s: day_engagement,
            novel_plays,
        });

        let eps: f64 = rng.sample(StandardNormal);
        let drive = drive_of(&config.drive, action);
        satisfaction = (params.alpha * satisfaction
            + (1.0 - params.alpha) * drive
            + params.sigma * eps)
            .clamp(0.0, 1.0);
    }

    UserSim { events, days }
}

fn drive_of(table: &DriveTable, action: Action) -> f64 {
    table.get(action)
}

/// Runs the generator for a validated scenario under `policy`.
pub fn simulate(config: &ScenarioConfig, policy: &RecPolicy) -> Result<SimOutput, GenError> {
    let table_buckets = policy.table_buckets()?;
    let per_user: Vec<UserSim> = (0..config.n_users)
        .into_par_iter()
        .map(|index| simulate_user(config, policy, table_buckets, index))
        .collect();

    let mut events = Vec::with_capacity(per_user.iter().map(|u| u.events.len()).sum());
    let mut days = Vec::with_capacity(per_user.iter().map(|u| u.days.len()).sum());
    for user in per_user {
        events.extend(user.events);
        days.extend(user.days);
    }
    Ok(SimOutput { events, days })
}
