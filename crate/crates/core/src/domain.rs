//! Shared vocabulary: domains, interaction events, user profiles, and
//! scenario configuration, plus the validation rules that keep them honest.
//!
//! Interaction logs are newline-delimited JSON, one event per line with keys
//! in lexicographic order (see [`crate::io`]). Timestamps are integer seconds
//! from the scenario epoch; engagement is integer seconds of listening.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::generator::GeneratorParams;
use crate::mdp::Action;

/// Tolerance for probability shares that must sum to 1.
pub const SHARE_TOLERANCE: f64 = 1e-9;

/// Populations above this break the fixed-width user-id scheme that keeps
/// lexicographic user order equal to spawn order.
pub const MAX_POPULATION: u64 = 99_999_999;

/// The three audio service domains. The set is closed by design; every
/// domain-keyed table in a config must cover a subset of these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Music,
    Podcast,
    Audiobook,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Music, Domain::Podcast, Domain::Audiobook];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Music => "music",
            Domain::Podcast => "podcast",
            Domain::Audiobook => "audiobook",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Domain::Music => 0,
            Domain::Podcast => 1,
            Domain::Audiobook => 2,
        }
    }

    /// Single-letter prefix used in generated content ids ("m03-a017-i0042").
    pub fn code(self) -> char {
        match self {
            Domain::Music => 'm',
            Domain::Podcast => 'p',
            Domain::Audiobook => 'b',
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "music" => Ok(Domain::Music),
            "podcast" => Ok(Domain::Podcast),
            "audiobook" => Ok(Domain::Audiobook),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

/// The five voice/UI command kinds a logged interaction can carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandType {
    PlaySimilar,
    PlaySpecific,
    Resume,
    Navigate,
    ExploreNew,
}

impl CommandType {
    pub const ALL: [CommandType; 5] = [
        CommandType::PlaySimilar,
        CommandType::PlaySpecific,
        CommandType::Resume,
        CommandType::Navigate,
        CommandType::ExploreNew,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandType::PlaySimilar => "play_similar",
            CommandType::PlaySpecific => "play_specific",
            CommandType::Resume => "resume",
            CommandType::Navigate => "navigate",
            CommandType::ExploreNew => "explore_new",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).unwrap()
    }
}

impl fmt::Display for CommandType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One logged interaction. `engagement_s` is 0 whenever the command was not
/// recognized; a failed command cannot complete content either.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub timestamp: u64,
    pub user_id: String,
    pub session_id: String,
    pub domain: Domain,
    pub command_type: CommandType,
    pub recognized: bool,
    pub latency_ms: u64,
    pub content_id: String,
    pub novel_content: bool,
    pub engagement_s: u64,
    pub completed: bool,
}

/// Coarse age band attached to each synthetic user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    Teen,
    YoungAdult,
    Adult,
    Senior,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 4] = [
        AgeGroup::Teen,
        AgeGroup::YoungAdult,
        AgeGroup::Adult,
        AgeGroup::Senior,
    ];
}

/// A synthetic listener. `domain_affinity` is a probability table over the
/// three domains (sums to 1 within [`SHARE_TOLERANCE`]); `churn_hazard` is a
/// weekly base probability of leaving the service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub age_group: AgeGroup,
    pub domain_affinity: BTreeMap<Domain, f64>,
    pub base_daily_minutes: f64,
    pub exploration_propensity: f64,
    pub churn_hazard: f64,
}

/// Which experiment arm a scenario belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    Cat,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Control => "control",
            Arm::Cat => "cat",
        })
    }
}

/// Satisfaction pull of each policy action, in [0, 1]. The simulator blends
/// this into the latent satisfaction update each day.
///
/// Defaults reflect the calibrated reference service: exploration pays off
/// most, domain switches least.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriveTable {
    pub exploit_similar: f64,
    pub explore_new: f64,
    pub resume_content: f64,
    pub switch_domain: f64,
}

impl Default for DriveTable {
    fn default() -> Self {
        DriveTable {
            exploit_similar: 0.48,
            explore_new: 0.78,
            resume_content: 0.62,
            switch_domain: 0.40,
        }
    }
}

impl DriveTable {
    pub fn get(&self, action: Action) -> f64 {
        match action {
            Action::ExploitSimilar => self.exploit_similar,
            Action::ExploreNew => self.explore_new,
            Action::ResumeContent => self.resume_content,
            Action::SwitchDomain => self.switch_domain,
        }
    }

    fn entries(&self) -> [(Action, f64); 4] {
        [
            (Action::ExploitSimilar, self.exploit_similar),
            (Action::ExploreNew, self.explore_new),
            (Action::ResumeContent, self.resume_content),
            (Action::SwitchDomain, self.switch_domain),
        ]
    }
}

fn default_duration_weeks() -> u32 {
    26
}

/// One simulated service configuration: population, horizon, domain mix,
/// per-domain generator parameters, and the goal spec the evaluation uses.
///
/// `generator` may cover any subset of domains; missing domains fall back to
/// [`GeneratorParams::defaults_for`]. `goal_spec_path` is resolved relative
/// to the config file's directory by the CLI before validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub seed: u64,
    pub n_users: u64,
    #[serde(default = "default_duration_weeks")]
    pub duration_weeks: u32,
    pub domain_mix: BTreeMap<Domain, f64>,
    #[serde(default)]
    pub generator: BTreeMap<Domain, GeneratorParams>,
    #[serde(default)]
    pub drive: DriveTable,
    pub goal_spec_path: PathBuf,
    pub arm: Arm,
}

impl ScenarioConfig {
    /// Effective generator parameters for `domain`.
    pub fn params_for(&self, domain: Domain) -> GeneratorParams {
        self.generator
            .get(&domain)
            .copied()
            .unwrap_or_else(|| GeneratorParams::defaults_for(domain))
    }

    pub fn duration_days(&self) -> u32 {
        self.duration_weeks * 7
    }

    /// Domain with the largest mix share (ties broken by domain order).
    pub fn dominant_domain(&self) -> Option<Domain> {
        Domain::ALL
            .iter()
            .copied()
            .map(|d| (d, self.domain_mix.get(&d).copied().unwrap_or(0.0)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .filter(|(_, share)| *share > 0.0)
            .map(|(d, _)| d)
    }
}

/// A single violated invariant from [`validate_scenario`].
#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioViolation {
    NonpositivePopulation,
    PopulationTooLarge { n: u64 },
    InvalidDurationWeeks { weeks: u32 },
    InvalidShareSum { sum: f64 },
    ShareOutOfRange { domain: Domain, value: f64 },
    InvalidGeneratorParams { domain: Domain, reason: String },
    InvalidDriveValue { action: Action, value: f64 },
    MissingGoalSpec { path: PathBuf },
}

impl fmt::Display for ScenarioViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioViolation::NonpositivePopulation => {
                write!(f, "nonpositive-population: n_users must be at least 1")
            }
            ScenarioViolation::PopulationTooLarge { n } => {
                write!(f, "population-too-large: {n} exceeds {MAX_POPULATION}")
            }
            ScenarioViolation::InvalidDurationWeeks { weeks } => {
                write!(f, "invalid-duration-weeks: {weeks}")
            }
            ScenarioViolation::InvalidShareSum { sum } => {
                write!(f, "invalid-share-sum: domain_mix sums to {sum}")
            }
            ScenarioViolation::ShareOutOfRange { domain, value } => {
                write!(f, "share-out-of-range: domain_mix[{domain}] = {value}")
            }
            ScenarioViolation::InvalidGeneratorParams { domain, reason } => {
                write!(f, "invalid-generator-params: {domain}: {reason}")
            }
            ScenarioViolation::InvalidDriveValue { action, value } => {
                write!(f, "invalid-drive-value: {action} = {value}")
            }
            ScenarioViolation::MissingGoalSpec { path } => {
                write!(f, "missing-goal-spec: {}", path.display())
            }
        }
    }
}

/// Checks every type invariant and returns the config unchanged only when all
/// of them hold; otherwise returns the complete list of violations, in field
/// declaration order.
pub fn validate_scenario(config: ScenarioConfig) -> Result<ScenarioConfig, Vec<ScenarioViolation>> {
    let mut violations = Vec::new();

    if config.n_users == 0 {
        violations.push(ScenarioViolation::NonpositivePopulation);
    } else if config.n_users > MAX_POPULATION {
        violations.push(ScenarioViolation::PopulationTooLarge { n: config.n_users });
    }

    if config.duration_weeks == 0 {
        violations.push(ScenarioViolation::InvalidDurationWeeks {
            weeks: config.duration_weeks,
        });
    }

    let mut sum = 0.0;
    for (&domain, &share) in &config.domain_mix {
        if !share.is_finite() || !(0.0..=1.0).contains(&share) {
            violations.push(ScenarioViolation::ShareOutOfRange {
                domain,
                value: share,
            });
        }
        sum += share;
    }
    if (sum - 1.0).abs() > SHARE_TOLERANCE {
        violations.push(ScenarioViolation::InvalidShareSum { sum });
    }

    for (&domain, params) in &config.generator {
        for reason in params.violations() {
            violations.push(ScenarioViolation::InvalidGeneratorParams { domain, reason });
        }
    }

    for (action, value) in config.drive.entries() {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            violations.push(ScenarioViolation::InvalidDriveValue { action, value });
        }
    }

    if !config.goal_spec_path.is_file() {
        violations.push(ScenarioViolation::MissingGoalSpec {
            path: config.goal_spec_path.clone(),
        });
    }

    if violations.is_empty() {
        Ok(config)
    } else {
        Err(violations)
    }
}

/// First integrity violation found in an event stream, if any.
#[derive(Clone, Debug, PartialEq)]
pub enum StreamViolation {
    /// Timestamps within one session must be non-decreasing.
    OutOfOrderTimestamp { index: usize, session_id: String },
    /// An unrecognized command cannot accrue engagement.
    EngagementWithoutRecognition { index: usize },
    /// Events of one session must share user and domain.
    SessionIntegrity { index: usize, session_id: String },
}

impl fmt::Display for StreamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamViolation::OutOfOrderTimestamp { index, session_id } => write!(
                f,
                "out-of-order-timestamp: event {index} in session {session_id}"
            ),
            StreamViolation::EngagementWithoutRecognition { index } => write!(
                f,
                "engagement-without-recognition: event {index} has engagement but was not recognized"
            ),
            StreamViolation::SessionIntegrity { index, session_id } => write!(
                f,
                "session-integrity: event {index} changes user or domain within session {session_id}"
            ),
        }
    }
}

/// Scans a log and returns the first violated stream invariant.
///
/// Sessions do not need to be contiguous; state is tracked per session id.
pub fn event_stream_check(events: &[InteractionEvent]) -> Result<(), StreamViolation> {
    let mut sessions: HashMap<&str, (&str, Domain, u64)> = HashMap::new();

    for (index, event) in events.iter().enumerate() {
        if !event.recognized && event.engagement_s > 0 {
            return Err(StreamViolation::EngagementWithoutRecognition { index });
        }
        match sessions.get_mut(event.session_id.as_str()) {
            None => {
                sessions.insert(
                    &event.session_id,
                    (&event.user_id, event.domain, event.timestamp),
                );
            }
            Some((user, domain, last_ts)) => {
                if *user != event.user_id || *domain != event.domain {
                    return Err(StreamViolation::SessionIntegrity {
                        index,
                        session_id: event.session_id.clone(),
                    });
                }
                if event.timestamp < *last_ts {
                    return Err(StreamViolation::OutOfOrderTimestamp {
                        index,
                        session_id: event.session_id.clone(),
                    });
                }
                *last_ts = event.timestamp;
            }
        }
    }
    Ok(())
}
