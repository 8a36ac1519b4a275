//! Subcommand implementations. Every command resolves its inputs, does the
//! work through the library, writes its artifacts plus a manifest, and prints
//! a short human-readable account to stdout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use cat_bench::domain::{validate_scenario, InteractionEvent, ScenarioConfig};
use cat_bench::generator::{simulate, RecPolicy};
use cat_bench::goals::{decompose, evaluate_detailed, CriterionKind, GoalSpec};
use cat_bench::harness::{
    plot_data, render_effect_table, render_summary_table, run_rct, train_policy, transfer_matrix,
    RctOptions, RctReport, ScenarioBundle,
};
use cat_bench::io::{emit_log_string, parse_log, sha256_hex, ParseMode, RunManifest};
use cat_bench::mdp::{Action, DEFAULT_GAMMA, DEFAULT_VI_TOLERANCE};
use cat_bench::metrics::{gai, gar, integration_score, IntegrationInputs};
use cat_bench::pattern::{fit_from_events, StateSpace, SECONDS_PER_DAY};
use cat_bench::transfer::TransferResult;

use crate::artifacts::{resolve_out_dir, ArtifactSet};
use crate::{Cli, CliError, Command};

/// The slowest response the simulator can produce, used to map mean latency
/// onto a [0, 1] cost-efficiency score.
const LATENCY_BUDGET_MS: f64 = 1500.0;

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let out_dir = resolve_out_dir(cli.out_dir)?;
    let mode = if cli.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let artifacts = ArtifactSet::new(out_dir);
    match cli.command {
        Command::Generate {
            scenario,
            from_manifest,
            policy,
            weeks,
        } => generate(artifacts, scenario, from_manifest, policy, weeks),
        Command::Evaluate {
            log,
            goals,
            horizon_days,
        } => evaluate(artifacts, mode, &log, &goals, horizon_days),
        Command::FitPattern {
            log,
            buckets,
            smoothing,
            engaged_threshold_s,
        } => fit_pattern(artifacts, mode, &log, buckets, smoothing, engaged_threshold_s),
        Command::Optimize {
            scenario,
            gamma,
            tolerance,
        } => optimize(artifacts, &scenario, gamma, tolerance),
        Command::Transfer { scenarios } => transfer(artifacts, &scenarios),
        Command::Rct { scenarios, weeks } => rct(artifacts, &scenarios, weeks),
        Command::Report { report: stored } => report(artifacts, &stored),
    }
}

// ------------------------------------------------------------------ loading

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Parses a JSON document, reporting failures as `file:line: message`.
fn parse_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), e.line())))
}

/// Loads a scenario config, resolves its goal path against the config file's
/// directory, and checks every invariant.
fn load_scenario(path: &Path, weeks: Option<u32>) -> Result<ScenarioConfig, CliError> {
    let mut config: ScenarioConfig = parse_json_file(path)?;
    if let Some(weeks) = weeks {
        config.duration_weeks = weeks;
    }
    if config.goal_spec_path.is_relative() {
        if let Some(dir) = path.parent() {
            config.goal_spec_path = dir.join(&config.goal_spec_path);
        }
    }
    validate_scenario(config).map_err(|violations| {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        CliError::data(format!("{}: {}", path.display(), list.join("; ")))
    })
}

fn load_log(path: &Path, mode: ParseMode) -> Result<Vec<InteractionEvent>, CliError> {
    if !path.is_file() {
        return Err(CliError::data(format!(
            "{}: no such file",
            path.display()
        )));
    }
    // LogError positions already read `file:line: message`.
    parse_log(path, mode).map_err(|e| CliError::data(e.to_string()))
}

/// All `.json` files of a scenario directory, sorted by name.
fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::data(format!(
            "{}: no scenario config files (*.json) found",
            dir.display()
        )));
    }
    Ok(files)
}

fn load_bundles(
    artifacts: &mut ArtifactSet,
    dir: &Path,
    weeks: Option<u32>,
) -> Result<Vec<ScenarioBundle>, CliError> {
    let mut bundles = Vec::new();
    for file in scenario_files(dir)? {
        let config = load_scenario(&file, weeks)?;
        let goals: GoalSpec = parse_json_file(&config.goal_spec_path)?;
        artifacts.read_from(&file);
        artifacts.read_from(&config.goal_spec_path);
        bundles.push(ScenarioBundle { config, goals });
    }
    Ok(bundles)
}

fn parse_policy(raw: &str) -> Result<RecPolicy, CliError> {
    if raw == "uniform" {
        return Ok(RecPolicy::Uniform);
    }
    if let Some(name) = raw.strip_prefix("static:") {
        if let Some(action) = Action::ALL.iter().find(|a| a.as_str() == name) {
            return Ok(RecPolicy::Static { action: *action });
        }
    }
    let actions: Vec<&str> = Action::ALL.iter().map(|a| a.as_str()).collect();
    Err(CliError::usage(format!(
        "--policy must be 'uniform' or 'static:<action>' with an action among {}; got '{raw}'",
        actions.join(", ")
    )))
}

// ----------------------------------------------------------------- generate

fn generate(
    mut artifacts: ArtifactSet,
    scenario: Option<PathBuf>,
    from_manifest: Option<PathBuf>,
    policy: Option<String>,
    weeks: Option<u32>,
) -> Result<(), CliError> {
    if let Some(weeks) = weeks {
        if weeks == 0 {
            return Err(CliError::usage("--weeks must be at least 1"));
        }
    }
    let (config, policy) = match (scenario, from_manifest) {
        (Some(_), Some(_)) => {
            return Err(CliError::usage(
                "--scenario and --from-manifest are mutually exclusive",
            ))
        }
        (None, None) => {
            return Err(CliError::usage(
                "one of --scenario or --from-manifest is required",
            ))
        }
        (Some(path), None) => {
            let config = load_scenario(&path, weeks)?;
            let policy = match policy.as_deref() {
                Some(raw) => parse_policy(raw)?,
                None => RecPolicy::Static {
                    action: Action::ExploitSimilar,
                },
            };
            artifacts.read_from(&path);
            (config, policy)
        }
        (None, Some(path)) => {
            if policy.is_some() || weeks.is_some() {
                return Err(CliError::usage(
                    "--policy and --weeks cannot be combined with --from-manifest",
                ));
            }
            let manifest: RunManifest = parse_json_file(&path)?;
            if manifest.command != "generate" {
                return Err(CliError::data(format!(
                    "{}: manifest records a '{}' run, not generate",
                    path.display(),
                    manifest.command
                )));
            }
            let config: ScenarioConfig =
                serde_json::from_value(manifest.parameters["scenario"].clone()).map_err(|e| {
                    CliError::data(format!("{}: bad embedded scenario: {e}", path.display()))
                })?;
            let policy: RecPolicy =
                serde_json::from_value(manifest.parameters["policy"].clone()).map_err(|e| {
                    CliError::data(format!("{}: bad embedded policy: {e}", path.display()))
                })?;
            let config = validate_scenario(config).map_err(|violations| {
                let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                CliError::data(format!("{}: {}", path.display(), list.join("; ")))
            })?;
            artifacts.read_from(&path);
            (config, policy)
        }
    };

    let out = simulate(&config, &policy).map_err(|e| CliError::data(e.to_string()))?;
    let text = emit_log_string(&out.events);
    let log_name = format!("{}.ndjson", config.scenario_id);
    let log_path = artifacts.write_text(&log_name, &text)?;
    let digest = sha256_hex(text.as_bytes());

    println!(
        "wrote {} ({} events, {} users, {} weeks, sha256 {})",
        log_path.display(),
        out.events.len(),
        config.n_users,
        config.duration_weeks,
        &digest[..12]
    );

    let seed = config.seed;
    artifacts.finish(
        "generate",
        vec![seed],
        json!({ "scenario": config, "policy": policy }),
    )
}

// ----------------------------------------------------------------- evaluate

/// Per-user mean daily listening minutes in the first and second half of the
/// observed span: the first half serves as the persistence prediction for the
/// second.
fn persistence_series(events: &[InteractionEvent]) -> (Vec<f64>, Vec<f64>) {
    let day = |e: &InteractionEvent| e.timestamp / SECONDS_PER_DAY;
    let min_day = events.iter().map(day).min().unwrap_or(0);
    let max_day = events.iter().map(day).max().unwrap_or(0);
    let cut = min_day + (max_day - min_day) / 2 + 1;
    let first_days = (cut - min_day) as f64;
    let second_days = ((max_day + 1).saturating_sub(cut)).max(1) as f64;
    let mut per_user: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for event in events {
        let slot = per_user.entry(event.user_id.as_str()).or_default();
        if day(event) < cut {
            slot.0 += event.engagement_s;
        } else {
            slot.1 += event.engagement_s;
        }
    }
    per_user
        .values()
        .map(|&(first, second)| {
            (
                first as f64 / 60.0 / first_days,
                second as f64 / 60.0 / second_days,
            )
        })
        .unzip()
}

fn evaluate(
    mut artifacts: ArtifactSet,
    mode: ParseMode,
    log: &Path,
    goals: &Path,
    horizon_days: Option<u32>,
) -> Result<(), CliError> {
    let events = load_log(log, mode)?;
    let spec: GoalSpec = parse_json_file(goals)?;
    let flat = decompose(&spec).map_err(|e| CliError::data(format!("{}: {e}", goals.display())))?;
    let evaluation = evaluate_detailed(&flat, &events, horizon_days)
        .map_err(|e| CliError::data(format!("{}: {e}", log.display())))?;
    let alignment = gai(&evaluation.record).map_err(|e| CliError::data(e.to_string()))?;

    let (predicted, actual) = persistence_series(&events);
    let persistence = gar(&actual, &predicted);

    let baseline = {
        let entries: Vec<cat_bench::metrics::BaselineEntry> = evaluation
            .scores
            .iter()
            .map(|s| cat_bench::metrics::BaselineEntry {
                metric_id: s.criterion.metric_id.as_str().to_string(),
                value: s.score,
                importance: s.criterion.weight,
            })
            .collect();
        let assessment = cat_bench::metrics::BaselineAssessment::new(entries)
            .map_err(|e| CliError::data(e.to_string()))?;
        cat_bench::metrics::baseline_score(&assessment).map_err(|e| CliError::data(e.to_string()))?
    };

    let recognition_rate =
        events.iter().filter(|e| e.recognized).count() as f64 / events.len() as f64;
    let mean_latency =
        events.iter().map(|e| e.latency_ms as f64).sum::<f64>() / events.len() as f64;
    let cost_efficiency = (1.0 - mean_latency / LATENCY_BUDGET_MS).clamp(0.0, 1.0);
    let integration = integration_score(&IntegrationInputs {
        quality: alignment,
        cost_efficiency,
        performance: recognition_rate,
        weights: [0.5, 0.2, 0.3],
    })
    .map_err(|e| CliError::data(e.to_string()))?;

    let task_count = evaluation
        .scores
        .iter()
        .filter(|s| s.criterion.kind == CriterionKind::Task)
        .count();
    let goal_count = evaluation.scores.len() - task_count;

    println!("gai          {alignment:.6}");
    match persistence {
        Ok(value) => println!("gar          {value:.6}"),
        Err(ref why) => println!("gar          n/a ({why})"),
    }
    println!("baseline     {baseline:.6}");
    println!("integration  {integration:.6}");
    println!(
        "criteria     {} ({task_count} task, {goal_count} goal) over {} users, {} days",
        evaluation.scores.len(),
        evaluation.users,
        evaluation.span_days
    );

    let scores: Vec<serde_json::Value> = evaluation
        .scores
        .iter()
        .map(|s| {
            json!({
                "metric": s.criterion.metric_id,
                "kind": s.criterion.kind,
                "threshold": s.criterion.threshold,
                "weight": s.criterion.weight,
                "score": s.score,
            })
        })
        .collect();
    artifacts.read_from(log);
    artifacts.read_from(goals);
    artifacts.write_json(
        "evaluation.json",
        &json!({
            "gai": alignment,
            "gar": persistence.ok(),
            "baseline": baseline,
            "integration": integration,
            "users": evaluation.users,
            "span_days": evaluation.span_days,
            "scores": scores,
        }),
    )?;
    artifacts.finish(
        "evaluate",
        Vec::new(),
        json!({
            "log": log.display().to_string(),
            "goals": goals.display().to_string(),
            "horizon_days": horizon_days,
        }),
    )
}

// -------------------------------------------------------------- fit-pattern

fn fit_pattern(
    mut artifacts: ArtifactSet,
    mode: ParseMode,
    log: &Path,
    buckets: usize,
    smoothing: f64,
    engaged_threshold_s: u64,
) -> Result<(), CliError> {
    if buckets == 0 {
        return Err(CliError::usage("--buckets must be at least 1"));
    }
    if !smoothing.is_finite() || smoothing < 0.0 {
        return Err(CliError::usage(format!(
            "--smoothing must be a finite non-negative number, got {smoothing}"
        )));
    }
    let events = load_log(log, mode)?;
    let space = StateSpace {
        hidden_buckets: buckets,
        engaged_threshold_s,
    };
    let model = fit_from_events(&events, &space, None, smoothing)
        .map_err(|e| CliError::data(format!("{}: {e}", log.display())))?;

    println!(
        "fitted {} x {} x {} conditional tables from {} observations",
        model.task_labels.len(),
        model.hidden_count,
        model.goal_labels.len(),
        model.observations
    );

    artifacts.read_from(log);
    artifacts.write_json("pattern.json", &model)?;
    artifacts.finish(
        "fit-pattern",
        Vec::new(),
        json!({
            "log": log.display().to_string(),
            "buckets": buckets,
            "smoothing": smoothing,
            "engaged_threshold_s": engaged_threshold_s,
        }),
    )
}

// ----------------------------------------------------------------- optimize

fn optimize(
    mut artifacts: ArtifactSet,
    scenario: &Path,
    gamma: Option<f64>,
    tolerance: Option<f64>,
) -> Result<(), CliError> {
    if let Some(g) = gamma {
        if !(0.0..1.0).contains(&g) {
            return Err(CliError::usage(format!(
                "--gamma must lie in [0, 1), got {g}"
            )));
        }
    }
    if let Some(t) = tolerance {
        if !t.is_finite() || t <= 0.0 {
            return Err(CliError::usage(format!(
                "--tolerance must be a positive number, got {t}"
            )));
        }
    }
    let config = load_scenario(scenario, None)?;
    let options = RctOptions {
        gamma: gamma.unwrap_or(DEFAULT_GAMMA),
        vi_tolerance: tolerance.unwrap_or(DEFAULT_VI_TOLERANCE),
        ..RctOptions::default()
    };
    let trained = train_policy(&config, &options).map_err(|e| CliError::data(e.to_string()))?;

    println!(
        "trained policy for {}: {} states x {} actions, {} sweeps to residual {:.2e}",
        config.scenario_id,
        trained.mdp.n_states(),
        trained.mdp.n_actions(),
        trained.iterations,
        trained.residuals.last().copied().unwrap_or(f64::NAN)
    );

    artifacts.read_from(scenario);
    artifacts.write_json("policy.json", &trained.policy)?;
    artifacts.write_json("mdp.json", &trained.mdp)?;
    let seed = config.seed;
    artifacts.finish(
        "optimize",
        vec![seed],
        json!({
            "scenario": config,
            "gamma": options.gamma,
            "vi_tolerance": options.vi_tolerance,
        }),
    )
}

// ----------------------------------------------------------------- transfer

fn render_transfer_matrix(results: &[TransferResult]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:<10} {:>7} {:>10} {:>10} {:>8}\n",
        "source", "target", "tau", "src_score", "tgt_score", "success"
    ));
    for r in results {
        out.push_str(&format!(
            "{:<10} {:<10} {:>7.3} {:>10.4} {:>10.4} {:>8}\n",
            r.source.to_string(),
            r.target.to_string(),
            r.tau,
            r.source_metric,
            r.target_metric,
            if r.success { "yes" } else { "no" }
        ));
    }
    out
}

fn transfer(mut artifacts: ArtifactSet, scenarios: &Path) -> Result<(), CliError> {
    let bundles = load_bundles(&mut artifacts, scenarios, None)?;
    let options = RctOptions::default();
    let results = transfer_matrix(&bundles, &options).map_err(|e| CliError::data(e.to_string()))?;

    let table = render_transfer_matrix(&results);
    print!("{table}");

    artifacts.write_json("transfer.json", &results)?;
    artifacts.write_text("transfer.txt", &table)?;
    let seeds: Vec<u64> = bundles.iter().map(|b| b.config.seed).collect();
    let configs: Vec<&ScenarioConfig> = bundles.iter().map(|b| &b.config).collect();
    artifacts.finish(
        "transfer",
        seeds,
        json!({ "scenarios": configs, "options": options }),
    )
}

// ---------------------------------------------------------------------- rct

fn rct(mut artifacts: ArtifactSet, scenarios: &Path, weeks: Option<u32>) -> Result<(), CliError> {
    if let Some(weeks) = weeks {
        if weeks == 0 {
            return Err(CliError::usage("--weeks must be at least 1"));
        }
    }
    let bundles = load_bundles(&mut artifacts, scenarios, weeks)?;
    let options = RctOptions::default();
    let trial = run_rct(&bundles, &options).map_err(|e| CliError::data(e.to_string()))?;

    let summary = render_summary_table(&trial);
    let effects = render_effect_table(&trial);
    print!("{summary}");
    println!();
    print!("{effects}");

    artifacts.write_json("report.json", &trial)?;
    artifacts.write_text("summary.txt", &summary)?;
    artifacts.write_text("effects.txt", &effects)?;
    artifacts.write_text("plot_data.csv", &plot_data(&trial))?;

    let seeds: Vec<u64> = bundles.iter().map(|b| b.config.seed).collect();
    let configs: Vec<&ScenarioConfig> = bundles.iter().map(|b| &b.config).collect();
    artifacts.finish(
        "rct",
        seeds,
        json!({
            "scenarios": configs,
            "options": options,
            "weeks_override": weeks,
        }),
    )
}

// ------------------------------------------------------------------- report

fn report(mut artifacts: ArtifactSet, stored: &Path) -> Result<(), CliError> {
    let trial: RctReport = parse_json_file(stored)?;

    let summary = render_summary_table(&trial);
    let effects = render_effect_table(&trial);
    print!("{summary}");
    println!();
    print!("{effects}");

    artifacts.read_from(stored);
    artifacts.write_text("summary.txt", &summary)?;
    artifacts.write_text("effects.txt", &effects)?;
    artifacts.write_text("plot_data.csv", &plot_data(&trial))?;
    artifacts.finish(
        "report",
        Vec::new(),
        json!({ "report": stored.display().to_string() }),
    )
}
