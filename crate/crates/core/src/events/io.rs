//! On-disk formats for event logs, labels and schemas.
//!
//! - Event log: one JSON record per line with fields `student_id`, `kind`
//!   (`content|quiz|project`), `ordinal` (1-based), `outcome`
//!   (`null|correct|incorrect|pass|fail`) and `day`.
//! - Label file: CSV with header `student_id,label`, label in `{0,1}`.
//! - Schema file: `key = value` lines for `num_contents`, `num_quizzes`,
//!   `num_projects` and `delta_cap`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{tokenize_student, CourseSchema, EventError, LabeledDataset, RawEvent};

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("label file has no entry for student {0}")]
    MissingLabel(String),
}

fn io_err(path: &Path, source: std::io::Error) -> DataIoError {
    DataIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DataIoError {
    DataIoError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Writes one JSON record per event, in input order.
pub fn write_events(path: &Path, events: &[RawEvent]) -> Result<(), DataIoError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for event in events {
        let line = serde_json::to_string(event).expect("event serializes");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads an event log, skipping blank lines.
pub fn read_events(path: &Path) -> Result<Vec<RawEvent>, DataIoError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: RawEvent = serde_json::from_str(&line)
            .map_err(|e| parse_err(path, idx + 1, e.to_string()))?;
        events.push(event);
    }
    Ok(events)
}

/// Writes the `student_id,label` CSV.
pub fn write_labels(path: &Path, labels: &[(String, bool)]) -> Result<(), DataIoError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "student_id,label").map_err(|e| io_err(path, e))?;
    for (id, label) in labels {
        writeln!(w, "{id},{}", u8::from(*label)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a label CSV, validating the header and the {0,1} domain.
pub fn read_labels(path: &Path) -> Result<Vec<(String, bool)>, DataIoError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim_end();
        if idx == 0 {
            if line != "student_id,label" {
                return Err(parse_err(
                    path,
                    1,
                    format!("expected header 'student_id,label', got '{line}'"),
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (id, value) = line.rsplit_once(',').ok_or_else(|| {
            parse_err(path, idx + 1, "expected 'student_id,label'")
        })?;
        let label = match value {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("label must be 0 or 1, got '{other}'"),
                ))
            }
        };
        labels.push((id.to_string(), label));
    }
    Ok(labels)
}

/// Writes the schema as `key = value` lines.
pub fn write_schema(path: &Path, schema: &CourseSchema) -> Result<(), DataIoError> {
    let text = format!(
        "num_contents = {}\nnum_quizzes = {}\nnum_projects = {}\ndelta_cap = {}\n",
        schema.num_contents, schema.num_quizzes, schema.num_projects, schema.delta_cap
    );
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a `key = value` schema file.
pub fn read_schema(path: &Path) -> Result<CourseSchema, DataIoError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut fields: HashMap<&str, u32> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, idx + 1, "expected 'key = value'"))?;
        let value: u32 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("bad integer '{}'", value.trim())))?;
        fields.insert(
            match key.trim() {
                "num_contents" => "num_contents",
                "num_quizzes" => "num_quizzes",
                "num_projects" => "num_projects",
                "delta_cap" => "delta_cap",
                other => return Err(parse_err(path, idx + 1, format!("unknown key '{other}'"))),
            },
            value,
        );
    }
    let get = |key: &str| {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| parse_err(path, 0, format!("missing key '{key}'")))
    };
    let schema = CourseSchema::new(
        get("num_contents")?,
        get("num_quizzes")?,
        get("num_projects")?,
        get("delta_cap")?,
    )?;
    Ok(schema)
}

/// Groups a flat event log by student (keeping first-seen order), tokenizes
/// each group and pairs it with its label. Every student with events must
/// appear in the label list.
pub fn build_dataset(
    schema: &CourseSchema,
    events: &[RawEvent],
    labels: &[(String, bool)],
) -> Result<LabeledDataset, DataIoError> {
    let label_map: HashMap<&str, bool> = labels
        .iter()
        .map(|(id, label)| (id.as_str(), *label))
        .collect();
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, Vec<&RawEvent>> = HashMap::new();
    for event in events {
        grouped
            .entry(event.student_id.as_str())
            .or_insert_with(|| {
                order.push(event.student_id.as_str());
                Vec::new()
            })
            .push(event);
    }
    let mut entries = Vec::with_capacity(order.len());
    for id in order {
        let label = *label_map
            .get(id)
            .ok_or_else(|| DataIoError::MissingLabel(id.to_string()))?;
        let events: Vec<RawEvent> = grouped[id].iter().map(|&e| e.clone()).collect();
        entries.push((tokenize_student(schema, &events)?, label));
    }
    Ok(LabeledDataset::new(entries)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventKind;

    #[test]
    fn event_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let events = vec![
            RawEvent::content("s1", 1, 0),
            RawEvent::quiz("s1", 2, false, 3),
            RawEvent::project("s2", 1, true, 9),
        ];
        write_events(&path, &events).unwrap();
        assert_eq!(read_events(&path).unwrap(), events);
    }

    #[test]
    fn event_line_format_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        write_events(&path, &[RawEvent::quiz("s1", 2, true, 3)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "{\"student_id\":\"s1\",\"kind\":\"quiz\",\"ordinal\":2,\"outcome\":\"correct\",\"day\":3}\n"
        );
    }

    #[test]
    fn labels_round_trip_and_reject_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let labels = vec![("s1".to_string(), true), ("s2".to_string(), false)];
        write_labels(&path, &labels).unwrap();
        assert_eq!(read_labels(&path).unwrap(), labels);

        std::fs::write(&path, "student_id,label\ns1,2\n").unwrap();
        assert!(read_labels(&path).is_err());
        std::fs::write(&path, "id,label\n").unwrap();
        assert!(read_labels(&path).is_err());
    }

    #[test]
    fn schema_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schema.txt");
        let schema = CourseSchema::new(471, 168, 4, 30).unwrap();
        write_schema(&path, &schema).unwrap();
        assert_eq!(read_schema(&path).unwrap(), schema);
    }

    #[test]
    fn build_dataset_groups_by_student() {
        let schema = CourseSchema::new(3, 1, 1, 30).unwrap();
        let events = vec![
            RawEvent::content("s1", 1, 0),
            RawEvent::content("s2", 2, 1),
            RawEvent::content("s1", 3, 4),
        ];
        let labels = vec![("s1".to_string(), true), ("s2".to_string(), false)];
        let ds = build_dataset(&schema, &events, &labels).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.entries[0].0.student_id, "s1");
        assert_eq!(ds.entries[0].0.len(), 2);
        assert_eq!(ds.entries[1].0.student_id, "s2");

        let missing = vec![("s1".to_string(), true)];
        assert!(matches!(
            build_dataset(&schema, &events, &missing),
            Err(DataIoError::MissingLabel(_))
        ));
    }

    #[test]
    fn kind_names_serialize_lowercase() {
        assert_eq!(serde_json::to_string(&EventKind::Quiz).unwrap(), "\"quiz\"");
    }
}
