//! cat-bench: synthetic agentic-interaction logs for audio services plus the
//! evaluation stack that scores recommendation policies against hierarchical
//! goal specs.
//!
//! The crate is organized around a single pipeline:
//!
//! * [`domain`] - shared vocabulary (events, profiles, scenario configs) and
//!   their validation rules.
//! * [`generator`] - seeded population + interaction-log simulation with a
//!   latent per-user satisfaction process.
//! * [`pattern`] - tabular estimation of hidden-state and goal-conditional
//!   tables from logs.
//! * [`goals`] - decomposition of strategic goal specs into weighted,
//!   log-measurable criteria.
//! * [`metrics`] - alignment/baseline/integration scores and effect-size
//!   statistics.
//! * [`mdp`] - tabular MDP estimation and value-iteration policy optimization.
//! * [`transfer`] - cross-domain policy transfer scoring.
//! * [`harness`] - randomized controlled trials comparing a static baseline
//!   arm against the full decompose/assess/fit/optimize arm.
//! * [`io`] - newline-delimited JSON logs, canonical JSON documents, and run
//!   manifests.
//!
//! Everything downstream of a `(seed, config)` pair is deterministic:
//! identical inputs produce byte-identical logs and reports, independent of
//! thread scheduling.

pub mod domain;
pub mod generator;
pub mod goals;
pub mod harness;
pub mod io;
pub mod mdp;
pub mod metrics;
pub mod pattern;
pub mod stats;
pub mod transfer;
