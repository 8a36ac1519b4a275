//! Per-user statistics extracted from interaction logs.
//!
//! Both criterion evaluation and the experiment harness consume the same
//! single-pass accumulation, so a metric means exactly one thing everywhere.
//! All statistics are invariant under reordering of log lines.

use std::collections::{BTreeMap, HashSet};

use crate::domain::InteractionEvent;
use crate::pattern::SECONDS_PER_DAY;

/// Inclusive day range covered by a log.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogSpan {
    pub first_day: u32,
    pub last_day: u32,
}

impl LogSpan {
    pub fn days(&self) -> u32 {
        self.last_day - self.first_day + 1
    }
}

/// Day range of a log, None when empty.
pub fn log_span(events: &[InteractionEvent]) -> Option<LogSpan> {
    let mut span: Option<LogSpan> = None;
    for event in events {
        let day = (event.timestamp / SECONDS_PER_DAY) as u32;
        span = Some(match span {
            None => LogSpan {
                first_day: day,
                last_day: day,
            },
            Some(s) => LogSpan {
                first_day: s.first_day.min(day),
                last_day: s.last_day.max(day),
            },
        });
    }
    span
}

/// Observation window length in days: the configured horizon when one is
/// known, otherwise the log's own extent from day 0.
pub fn span_days(events: &[InteractionEvent], horizon_days: Option<u32>) -> u32 {
    horizon_days
        .or_else(|| log_span(events).map(|s| s.last_day + 1))
        .unwrap_or(0)
        .max(1)
}

/// One user's accumulated log statistics. Counts refer to events; a "play"
/// is a recognized event.
#[derive(Clone, Debug, PartialEq)]
pub struct UserStats {
    pub user_id: String,
    pub events: u64,
    pub recognized: u64,
    pub completed: u64,
    pub novel: u64,
    pub sessions: u64,
    pub distinct_genres: u64,
    pub total_engagement_s: u64,
    pub total_latency_ms: u64,
    pub active_days: u64,
    pub first_day: u32,
    pub last_day: u32,
}

impl UserStats {
    fn new(user_id: &str, day: u32) -> UserStats {
        UserStats {
            user_id: user_id.to_string(),
            events: 0,
            recognized: 0,
            completed: 0,
            novel: 0,
            sessions: 0,
            distinct_genres: 0,
            total_engagement_s: 0,
            total_latency_ms: 0,
            active_days: 0,
            first_day: day,
            last_day: day,
        }
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    /// Mean engagement per session, in minutes.
    pub fn session_length_min(&self) -> f64 {
        Self::ratio(self.total_engagement_s, self.sessions) / 60.0
    }

    /// Completed plays over recognized plays.
    pub fn completion_rate(&self) -> f64 {
        Self::ratio(self.completed, self.recognized)
    }

    /// Mean active days per week over the window.
    pub fn weekly_active_days(&self, span_days: u32) -> f64 {
        self.active_days as f64 / (span_days as f64 / 7.0)
    }

    /// Novel plays over recognized plays.
    pub fn discovery_rate(&self) -> f64 {
        Self::ratio(self.novel, self.recognized)
    }

    /// 1 when the user was active in the final week of the window.
    pub fn retained(&self, span_days: u32) -> f64 {
        (self.last_day + 7 >= span_days) as u64 as f64
    }

    /// 1 when the user was active in the final four weeks of the window.
    pub fn monthly_active(&self, span_days: u32) -> f64 {
        (self.last_day + 28 >= span_days) as u64 as f64
    }

    /// Mean command latency in milliseconds, over all events.
    pub fn latency_ms(&self) -> f64 {
        Self::ratio(self.total_latency_ms, self.events)
    }

    /// Recognized events over all events.
    pub fn recognition_rate(&self) -> f64 {
        Self::ratio(self.recognized, self.events)
    }

    /// Mean listening minutes per day over the window.
    pub fn daily_listening_min(&self, span_days: u32) -> f64 {
        self.total_engagement_s as f64 / 60.0 / span_days as f64
    }

    /// Fraction of plays that opened a genre the user had never played
    /// before. Each distinct genre has exactly one first play, so this is
    /// the distinct-genre count over plays.
    pub fn genre_exploration(&self) -> f64 {
        Self::ratio(self.distinct_genres, self.recognized).min(1.0)
    }
}

/// Genre key of a content id: the segment before the first '-'.
pub fn genre_of(content_id: &str) -> &str {
    content_id.split('-').next().unwrap_or(content_id)
}

/// Single pass over a log, grouping by user id. Returns users in id order.
pub fn user_stats(events: &[InteractionEvent]) -> BTreeMap<String, UserStats> {
    let mut stats: BTreeMap<String, UserStats> = BTreeMap::new();
    let mut sessions: HashSet<(String, String)> = HashSet::new();
    let mut days: HashSet<(String, u32)> = HashSet::new();
    let mut genres: HashSet<(String, String)> = HashSet::new();

    for event in events {
        let day = (event.timestamp / SECONDS_PER_DAY) as u32;
        let entry = stats
            .entry(event.user_id.clone())
            .or_insert_with(|| UserStats::new(&event.user_id, day));

        entry.events += 1;
        entry.total_latency_ms += event.latency_ms;
        entry.total_engagement_s += event.engagement_s;
        entry.first_day = entry.first_day.min(day);
        entry.last_day = entry.last_day.max(day);
        if event.recognized {
            entry.recognized += 1;
            if genres.insert((
                event.user_id.clone(),
                genre_of(&event.content_id).to_string(),
            )) {
                entry.distinct_genres += 1;
            }
        }
        if event.completed {
            entry.completed += 1;
        }
        if event.novel_content {
            entry.novel += 1;
        }
        if sessions.insert((event.user_id.clone(), event.session_id.clone())) {
            entry.sessions += 1;
        }
        if days.insert((event.user_id.clone(), day)) {
            entry.active_days += 1;
        }
    }
    stats
}
