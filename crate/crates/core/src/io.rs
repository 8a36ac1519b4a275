//! Log and document I/O.
//!
//! Event logs are newline-delimited JSON: one event per line, keys in
//! lexicographic order, LF terminated. Emission goes through
//! [`serde_json::Value`], whose object representation sorts keys, so
//! `emit(parse(emit(x)))` is byte-identical to `emit(x)`.
//!
//! Structured documents (configs, models, policies, reports) use the same
//! canonical form, pretty-printed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::InteractionEvent;

/// The exact key set of a serialized event, in emitted (lexicographic) order.
pub const EVENT_FIELDS: [&str; 11] = [
    "command_type",
    "completed",
    "content_id",
    "domain",
    "engagement_s",
    "latency_ms",
    "novel_content",
    "recognized",
    "session_id",
    "timestamp",
    "user_id",
];

/// Environment variable naming the default output directory for the CLI.
pub const OUT_DIR_ENV: &str = "CAT_BENCH_OUT";

/// Strict parsing rejects unknown fields; lenient parsing ignores them.
/// Both reject missing or ill-typed fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}:{line}: {message}")]
    Line {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses one NDJSON log file. Blank lines are rejected: a log is exactly one
/// event per line.
pub fn parse_log(path: &Path, mode: ParseMode) -> Result<Vec<InteractionEvent>, LogError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| LogError::Io {
        path: display.clone(),
        source,
    })?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    let mut events = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|source| LogError::Io {
            path: display.clone(),
            source,
        })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let line = buf.trim_end_matches('\n');
        events.push(parse_line(line, mode).map_err(|message| LogError::Line {
            path: display.clone(),
            line: line_no,
            message,
        })?);
    }
    Ok(events)
}

/// Parses an in-memory log, reporting `origin` in error positions.
pub fn parse_log_str(
    text: &str,
    mode: ParseMode,
    origin: &str,
) -> Result<Vec<InteractionEvent>, LogError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            parse_line(line, mode).map_err(|message| LogError::Line {
                path: origin.to_string(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

fn parse_line(line: &str, mode: ParseMode) -> Result<InteractionEvent, String> {
    match mode {
        ParseMode::Lenient => serde_json::from_str(line).map_err(|e| e.to_string()),
        ParseMode::Strict => {
            let value: serde_json::Map<String, serde_json::Value> =
                serde_json::from_str(line).map_err(|e| e.to_string())?;
            for key in value.keys() {
                if !EVENT_FIELDS.contains(&key.as_str()) {
                    return Err(format!("unknown field `{key}`"));
                }
            }
            serde_json::from_value(serde_json::Value::Object(value)).map_err(|e| e.to_string())
        }
    }
}

/// Canonical single-line form of one event (sorted keys, no trailing newline).
pub fn event_line(event: &InteractionEvent) -> String {
    let value = serde_json::to_value(event).expect("event serialization cannot fail");
    serde_json::to_string(&value).expect("value serialization cannot fail")
}

/// Canonical NDJSON text of a log, one line per event, LF after each.
pub fn emit_log_string(events: &[InteractionEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&event_line(event));
        out.push('\n');
    }
    out
}

/// Writes a log in canonical NDJSON form.
pub fn emit_log(path: &Path, events: &[InteractionEvent]) -> Result<(), LogError> {
    let display = path.display().to_string();
    let wrap = |source| LogError::Io {
        path: display.clone(),
        source,
    };
    let file = File::create(path).map_err(wrap)?;
    let mut writer = BufWriter::with_capacity(1 << 16, file);
    for event in events {
        writer.write_all(event_line(event).as_bytes()).map_err(wrap)?;
        writer.write_all(b"\n").map_err(wrap)?;
    }
    writer.flush().map_err(wrap)
}

#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct DocError {
    pub path: String,
    pub message: String,
}

impl DocError {
    fn new(path: &Path, message: impl ToString) -> Self {
        DocError {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }
}

/// Canonical pretty-printed JSON (sorted keys, trailing newline).
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("document serialization cannot fail");
    let mut text = serde_json::to_string_pretty(&value).expect("value serialization cannot fail");
    text.push('\n');
    text
}

/// Writes a document in canonical JSON form.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DocError> {
    std::fs::write(path, canonical_json(value)).map_err(|e| DocError::new(path, e))
}

/// Reads and deserializes a JSON document.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DocError> {
    let text = std::fs::read_to_string(path).map_err(|e| DocError::new(path, e))?;
    serde_json::from_str(&text).map_err(|e| DocError::new(path, e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Streaming SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String, DocError> {
    let file = File::open(path).map_err(|e| DocError::new(path, e))?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf).map_err(|e| DocError::new(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

/// Name and content hash of one input or output file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ArtifactDigest {
    pub path: String,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<ArtifactDigest, DocError> {
    Ok(ArtifactDigest {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// Provenance record written next to every produced artifact set. The
/// embedded `parameters` document carries the fully resolved inputs, so a run
/// can be reproduced bit-exactly from the manifest alone; `inputs` and
/// `outputs` hold content hashes for after-the-fact verification.
///
/// Manifests carry no wall-clock fields: reruns must be byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<ArtifactDigest>,
    pub outputs: Vec<ArtifactDigest>,
    pub parameters: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: impl ToString, seeds: Vec<u64>, parameters: serde_json::Value) -> Self {
        RunManifest {
            tool: "cat-bench".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            parameters,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CommandType, Domain};

    fn sample_event() -> InteractionEvent {
        InteractionEvent {
            timestamp: 1_209_600,
            user_id: "u00000042".to_string(),
            session_id: "u00000042-d14".to_string(),
            domain: Domain::Podcast,
            command_type: CommandType::ExploreNew,
            recognized: true,
            latency_ms: 312,
            content_id: "p05-a012-i0340".to_string(),
            novel_content: true,
            engagement_s: 1740,
            completed: false,
        }
    }

    #[test]
    fn emitted_keys_are_sorted() {
        let line = event_line(&sample_event());
        let mut positions = Vec::new();
        for field in EVENT_FIELDS {
            let needle = format!("\"{field}\":");
            positions.push(line.find(&needle).expect("field present"));
        }
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        assert_eq!(positions, sorted);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let events = vec![sample_event(), super::super::domain::tests::event("u1", "s1", 5)];
        let text = emit_log_string(&events);
        let parsed = parse_log_str(&text, ParseMode::Strict, "mem").unwrap();
        assert_eq!(parsed, events);
        assert_eq!(emit_log_string(&parsed), text);
    }

    #[test]
    fn strict_mode_rejects_unknown_fields() {
        let mut line = event_line(&sample_event());
        line.insert_str(1, "\"ab_bucket\":3,");
        let err = parse_log_str(&line, ParseMode::Strict, "mem").unwrap_err();
        assert!(err.to_string().contains("unknown field `ab_bucket`"));
        let ok = parse_log_str(&line, ParseMode::Lenient, "mem").unwrap();
        assert_eq!(ok[0], sample_event());
    }

    #[test]
    fn missing_field_errors_name_line_and_field() {
        let good = event_line(&sample_event());
        let bad = good.replace(",\"user_id\":\"u00000042\"", "");
        assert_ne!(bad, good);
        let text = format!("{good}\n{bad}\n");
        let err = parse_log_str(&text, ParseMode::Lenient, "events.ndjson").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("events.ndjson:2:"), "{msg}");
        assert!(msg.contains("user_id"), "{msg}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let events = vec![sample_event()];
        emit_log(&path, &events).unwrap();
        let parsed = parse_log(&path, ParseMode::Strict).unwrap();
        assert_eq!(parsed, events);
        let digest = digest_file(&path).unwrap();
        assert_eq!(digest.sha256, sha256_hex(emit_log_string(&events).as_bytes()));
    }

    #[test]
    fn canonical_json_sorts_and_terminates() {
        #[derive(Serialize)]
        struct Doc {
            zeta: u32,
            alpha: u32,
        }
        let text = canonical_json(&Doc { zeta: 1, alpha: 2 });
        assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
        assert!(text.ends_with('\n'));
    }
}
