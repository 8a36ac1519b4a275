//! Generative invariant checks: serialization round-trips, score bounds,
//! order invariance, and solver contracts over randomized inputs.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cat_bench::domain::{AgeGroup, Arm, CommandType, Domain, InteractionEvent, ScenarioConfig};
use cat_bench::goals::{
    decompose, Comparator, ConstraintRecord, Criterion, CriterionKind, GoalSpec, MetricId,
    Tactical,
};
use cat_bench::harness::summarize;
use cat_bench::io::{canonical_json, emit_log_string, parse_log_str, ParseMode};
use cat_bench::mdp::{value_iteration, MdpSpec};
use cat_bench::metrics::{
    baseline_score, gai, gar, AlignmentEntry, AlignmentRecord, BaselineAssessment, BaselineEntry,
};
use cat_bench::pattern::PatternModel;
use cat_bench::transfer::{transfer_metric, DomainFeatureVector};

const SUM_TOLERANCE: f64 = 1e-12;

fn domain_strategy() -> impl Strategy<Value = Domain> {
    prop::sample::select(Domain::ALL.to_vec())
}

fn command_strategy() -> impl Strategy<Value = CommandType> {
    prop::sample::select(CommandType::ALL.to_vec())
}

fn event_strategy() -> impl Strategy<Value = InteractionEvent> {
    (
        0u64..10_000_000,
        "[a-z0-9_-]{1,16}",
        any::<String>(),
        domain_strategy(),
        command_strategy(),
        any::<bool>(),
        0u64..600_000,
        any::<String>(),
        (any::<bool>(), any::<bool>(), 0u64..100_000),
    )
        .prop_map(
            |(
                timestamp,
                user_id,
                session_id,
                domain,
                command_type,
                recognized,
                latency_ms,
                content_id,
                (novel_content, completed, engagement_s),
            )| InteractionEvent {
                timestamp,
                user_id,
                session_id,
                domain,
                command_type,
                recognized,
                latency_ms,
                content_id,
                novel_content,
                engagement_s,
                completed,
            },
        )
}

fn metric_strategy() -> impl Strategy<Value = MetricId> {
    prop::sample::select(vec![
        MetricId::SessionLengthMin,
        MetricId::CompletionRate,
        MetricId::WeeklyActiveDays,
        MetricId::DiscoveryRate,
        MetricId::RecognitionRate,
        MetricId::LatencyMs,
    ])
}

fn criterion_strategy() -> impl Strategy<Value = Criterion> {
    (
        metric_strategy(),
        prop::sample::select(vec![
            Comparator::Greater,
            Comparator::GreaterEq,
            Comparator::Less,
            Comparator::LessEq,
        ]),
        -100.0f64..100.0,
        prop::bool::ANY,
        0.05f64..20.0,
        prop::option::of("[a-z]{1,6}"),
    )
        .prop_map(|(metric_id, comparator, threshold, is_task, weight, context)| Criterion {
            metric_id,
            comparator,
            threshold,
            kind: if is_task {
                CriterionKind::Task
            } else {
                CriterionKind::Goal
            },
            weight,
            context,
        })
}

fn goal_spec_strategy() -> impl Strategy<Value = GoalSpec> {
    (
        "[A-Za-z ]{1,30}",
        prop::collection::vec(
            ("[a-z ]{1,20}", prop::collection::vec(criterion_strategy(), 0..4)),
            0..3,
        ),
        prop::collection::vec(criterion_strategy(), 0..5),
        prop::collection::vec("[a-z ]{1,15}", 0..3),
        prop::collection::btree_map("[a-z]{1,6}", 0.1f64..5.0, 0..3),
    )
        .prop_map(|(strategic, tactical, operational, constraints, context_weights)| GoalSpec {
            strategic,
            tactical: tactical
                .into_iter()
                .map(|(objective, criteria)| Tactical {
                    objective,
                    criteria,
                })
                .collect(),
            operational,
            constraints: constraints
                .into_iter()
                .map(|name| ConstraintRecord {
                    name,
                    domain: None,
                    note: None,
                })
                .collect(),
            context_weights,
        })
}

proptest! {
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    /// Strict-mode parsing reverses emission exactly, whatever the strings
    /// contain.
    #[test]
    fn log_roundtrip_is_lossless(events in prop::collection::vec(event_strategy(), 0..40)) {
        let text = emit_log_string(&events);
        let parsed = parse_log_str(&text, ParseMode::Strict, "prop.ndjson").unwrap();
        prop_assert_eq!(parsed, events);
    }

    /// A goal spec survives a JSON round trip bit for bit.
    #[test]
    fn goal_spec_roundtrip(spec in goal_spec_strategy()) {
        let doc = serde_json::to_string(&spec).unwrap();
        let back: GoalSpec = serde_json::from_str(&doc).unwrap();
        prop_assert_eq!(back, spec);
    }

    /// A scenario config survives canonical serialization.
    #[test]
    fn scenario_config_roundtrip(
        seed in any::<u64>(),
        n_users in 1u64..100_000,
        weeks in 1u32..30,
        shares in prop::collection::vec(0.01f64..10.0, 3),
        arm in prop::bool::ANY,
    ) {
        let config = ScenarioConfig {
            scenario_id: "prop".to_string(),
            seed,
            n_users,
            duration_weeks: weeks,
            domain_mix: Domain::ALL.iter().copied().zip(shares).collect(),
            generator: BTreeMap::new(),
            drive: Default::default(),
            goal_spec_path: "goals.json".into(),
            arm: if arm { Arm::Cat } else { Arm::Control },
        };
        let doc = canonical_json(&config);
        let back: ScenarioConfig = serde_json::from_str(&doc).unwrap();
        prop_assert_eq!(back, config);
    }

    /// The alignment index is a weighted mean of goal scores, so it can
    /// never leave their envelope.
    #[test]
    fn alignment_index_stays_inside_goal_envelope(
        rows in prop::collection::vec((0.01f64..1.0, 0.0f64..1.0, 0.05f64..10.0), 1..8),
    ) {
        let total: f64 = rows.iter().map(|r| r.2).sum();
        let entries: Vec<AlignmentEntry> = rows
            .iter()
            .map(|&(task_score, goal_score, weight)| AlignmentEntry {
                task_score,
                goal_score,
                weight: weight / total,
            })
            .collect();
        let record = AlignmentRecord::new(entries, None).unwrap();
        let value = gai(&record).unwrap();
        let lo = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(value >= lo - SUM_TOLERANCE && value <= hi + SUM_TOLERANCE,
            "gai {} outside [{}, {}]", value, lo, hi);
    }

    /// The baseline composite is likewise bounded by its entry values.
    #[test]
    fn baseline_stays_inside_value_envelope(
        rows in prop::collection::vec((0.0f64..1.0, 0.05f64..10.0), 1..8),
    ) {
        let total: f64 = rows.iter().map(|r| r.1).sum();
        let entries: Vec<BaselineEntry> = rows
            .iter()
            .enumerate()
            .map(|(i, &(value, importance))| BaselineEntry {
                metric_id: format!("m{i}"),
                value,
                importance: importance / total,
            })
            .collect();
        let assessment = BaselineAssessment::new(entries).unwrap();
        let score = baseline_score(&assessment).unwrap();
        let lo = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(score >= lo - SUM_TOLERANCE && score <= hi + SUM_TOLERANCE);
    }

    /// Flattening keeps every criterion in declaration order and produces
    /// weights that sum to one.
    #[test]
    fn decomposition_normalizes_weights(spec in goal_spec_strategy()) {
        let expected: Vec<(MetricId, CriterionKind)> = spec
            .tactical
            .iter()
            .flat_map(|t| t.criteria.iter())
            .chain(spec.operational.iter())
            .map(|c| (c.metric_id, c.kind))
            .collect();
        match decompose(&spec) {
            Ok(flat) => {
                prop_assert!(!expected.is_empty());
                let got: Vec<(MetricId, CriterionKind)> =
                    flat.criteria.iter().map(|c| (c.metric_id, c.kind)).collect();
                prop_assert_eq!(got, expected);
                let sum: f64 = flat.criteria.iter().map(|c| c.weight).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9, "weights sum to {}", sum);
            }
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    /// Re-decomposing a flattened spec reproduces it.
    #[test]
    fn decomposition_is_stable_under_reflattening(spec in goal_spec_strategy()) {
        prop_assume!(spec.tactical.iter().any(|t| !t.criteria.is_empty())
            || !spec.operational.is_empty());
        let once = decompose(&spec).unwrap();
        let twice = decompose(&once.to_spec()).unwrap();
        prop_assert_eq!(once.criteria.len(), twice.criteria.len());
        for (a, b) in once.criteria.iter().zip(&twice.criteria) {
            prop_assert_eq!(a.metric_id, b.metric_id);
            prop_assert_eq!(a.kind, b.kind);
            prop_assert!((a.weight - b.weight).abs() <= SUM_TOLERANCE);
        }
    }

    /// Every fitted conditional table row is a probability distribution.
    #[test]
    fn pattern_tables_are_distributions(
        dims in (1usize..5, 1usize..5, 1usize..5),
        raw in prop::collection::vec((0usize..64, 0usize..64, 0usize..64), 1..120),
        smoothing in prop::sample::select(vec![0.0f64, 0.5, 1.0]),
    ) {
        let (n_t, n_h, n_g) = dims;
        let triples: Vec<(usize, usize, usize)> = raw
            .into_iter()
            .map(|(t, h, g)| (t % n_t, h % n_h, g % n_g))
            .collect();
        let model = PatternModel::fit(
            &triples,
            (0..n_t).map(|t| format!("t{t}")).collect(),
            n_h,
            (0..n_g).map(|g| format!("g{g}")).collect(),
            smoothing,
        )
        .unwrap();
        for t in 0..n_t {
            let hidden = model.p_h_given_t(t).unwrap();
            prop_assert!((hidden.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
            for h in 0..n_h {
                let goals = model.p_g_given_ht(t, h).unwrap();
                prop_assert!((goals.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
            }
            let marginal = model.goal_given_task(t).unwrap();
            prop_assert!((marginal.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
            prop_assert!(marginal.iter().all(|p| (0.0..=1.0 + SUM_TOLERANCE).contains(p)));
        }
    }

    /// Engagement summaries do not depend on event order.
    #[test]
    fn summaries_ignore_event_order(
        events in prop::collection::vec(event_strategy(), 1..60),
        shuffle_seed in any::<u64>(),
        horizon in prop::option::of(1u32..120),
    ) {
        let mut shuffled = events.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let a = summarize(&events, horizon).unwrap();
        let b = summarize(&shuffled, horizon).unwrap();
        prop_assert_eq!(a.rows(), b.rows());
    }

    /// A profile compared with itself scores a full match.
    #[test]
    fn self_similarity_is_one(
        features in prop::collection::vec(0.01f64..1.0, 4),
        psi in 0.1f64..200.0,
    ) {
        let vector = DomainFeatureVector {
            domain: Domain::Music,
            features: [features[0], features[1], features[2], features[3]],
            psi,
        };
        let tau = transfer_metric(&vector, &vector).unwrap();
        prop_assert!((tau - 1.0).abs() <= SUM_TOLERANCE, "tau(v, v) = {}", tau);
    }

    /// Predictions that differ from the truth by a constant leave no spread
    /// in the residuals.
    #[test]
    fn constant_offset_predictions_score_zero(
        actual in prop::collection::vec(-1000i64..1000, 4..40),
        offset in -1000i64..1000,
    ) {
        let actual: Vec<f64> = actual.iter().map(|&v| v as f64).collect();
        let predicted: Vec<f64> = actual.iter().map(|a| a + offset as f64).collect();
        match gar(&actual, &predicted) {
            Ok(value) => prop_assert_eq!(value, 0.0),
            // Degenerate truth series (zero interquartile range) is the one
            // rejected input shape here.
            Err(_) => {
                let mut sorted = actual.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                prop_assert!(sorted[sorted.len() / 4] == sorted[3 * sorted.len() / 4]
                    || sorted.first() == sorted.last());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    /// Value iteration converges below tolerance with non-increasing
    /// residuals, and values stay inside the discounted utility envelope.
    #[test]
    fn value_iteration_contracts(
        dims in (1usize..5, 1usize..4),
        seed in any::<u64>(),
        gamma in 0.1f64..0.95,
    ) {
        let (n_s, n_a) = dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut transition = Vec::with_capacity(n_s * n_a * n_s);
        for _ in 0..n_s * n_a {
            let row: Vec<f64> = (0..n_s).map(|_| rand::Rng::random_range(&mut rng, 0.001..1.0)).collect();
            let total: f64 = row.iter().sum();
            transition.extend(row.iter().map(|p| p / total));
        }
        let utility: Vec<f64> = (0..n_s * n_a)
            .map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0))
            .collect();
        let mdp = MdpSpec::new(
            (0..n_s).map(|s| format!("s{s}")).collect(),
            (0..n_a).map(|a| format!("a{a}")).collect(),
            vec!["goal".to_string()],
            transition,
            utility.clone(),
            gamma,
            0,
        )
        .unwrap();
        let tol = 1e-8;
        let solved = value_iteration(&mdp, tol, 1_000_000).unwrap();
        prop_assert!(*solved.residuals.last().unwrap() <= tol);
        prop_assert!(solved.residuals.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        let u_max = utility.iter().fold(f64::NEG_INFINITY, |m, &u| m.max(u));
        let bound = u_max / (1.0 - gamma) + tol;
        prop_assert!(solved.policy.values.iter().all(|&v| v >= -tol && v <= bound));
    }

    /// Age groups cover every profile the generator can draw.
    #[test]
    fn age_groups_parse_back(seed in any::<u64>()) {
        let group = AgeGroup::ALL[(seed % AgeGroup::ALL.len() as u64) as usize];
        let doc = serde_json::to_string(&group).unwrap();
        let back: AgeGroup = serde_json::from_str(&doc).unwrap();
        prop_assert_eq!(back, group);
    }
}

#[test]
fn fitting_an_empty_log_is_an_error() {
    let result = PatternModel::fit(
        &[],
        vec!["t0".to_string()],
        2,
        vec!["g0".to_string(), "g1".to_string()],
        1.0,
    );
    assert!(result.is_err());
}
