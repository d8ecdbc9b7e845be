use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{PjxError, Result};

/// One question/answer/justification item. Paths are relative to the
/// dataset directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub features_path: String,
    /// Question tokens; empty for activity-recognition records.
    pub question: Vec<String>,
    pub answer: String,
    pub explanations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub att_gt_path: Option<String>,
}

impl ExampleRecord {
    pub fn is_activity(&self) -> bool {
        self.question.is_empty()
    }
}

fn field_err(line: usize, field: &str, msg: impl Into<String>) -> PjxError {
    PjxError::Parse {
        line,
        field: field.to_string(),
        msg: msg.into(),
    }
}

fn string_field(obj: &serde_json::Map<String, Value>, line: usize, field: &str) -> Result<String> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(field_err(line, field, "expected a string")),
        None => Err(field_err(line, field, "missing")),
    }
}

fn string_list(obj: &serde_json::Map<String, Value>, line: usize, field: &str) -> Result<Vec<String>> {
    match obj.get(field) {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| field_err(line, field, "expected a list of strings"))
            })
            .collect(),
        Some(_) => Err(field_err(line, field, "expected a list of strings")),
        None => Err(field_err(line, field, "missing")),
    }
}

/// Parses one JSON-lines record, 1-based `line` for diagnostics.
pub fn parse_record(text: &str, line: usize, require_explanations: bool) -> Result<ExampleRecord> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| field_err(line, "<json>", e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(field_err(line, "<json>", "expected an object"));
    };
    let record = ExampleRecord {
        id: string_field(&obj, line, "id")?,
        features_path: string_field(&obj, line, "features_path")?,
        question: string_list(&obj, line, "question")?,
        answer: string_field(&obj, line, "answer")?,
        explanations: string_list(&obj, line, "explanations")?,
        att_gt_path: match obj.get("att_gt_path") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(field_err(line, "att_gt_path", "expected a string or null")),
        },
    };
    if record.id.is_empty() {
        return Err(field_err(line, "id", "empty"));
    }
    if record.answer.trim().is_empty() {
        return Err(field_err(line, "answer", "empty"));
    }
    if require_explanations && record.explanations.is_empty() {
        return Err(field_err(line, "explanations", "training records need at least one"));
    }
    Ok(record)
}

/// Reads records from JSON lines. Blank lines are skipped.
pub fn read_records<R: BufRead>(input: R, require_explanations: bool) -> Result<Vec<ExampleRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| PjxError::io("<records>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1, require_explanations)?);
    }
    Ok(out)
}

pub fn write_records<W: Write>(records: &[ExampleRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Loads `<dir>/<split>.jsonl`. Training splits must carry explanations.
pub fn load_dataset(dir: &Path, split: &str) -> Result<Vec<ExampleRecord>> {
    let path = dir.join(format!("{split}.jsonl"));
    let file = fs::File::open(&path).map_err(|e| PjxError::io(&path, e))?;
    read_records(BufReader::new(file), split == "train")
}

pub fn save_dataset(dir: &Path, split: &str, records: &[ExampleRecord]) -> Result<()> {
    let path = dir.join(format!("{split}.jsonl"));
    let mut buf = Vec::new();
    write_records(records, &mut buf).map_err(|e| PjxError::io(&path, e))?;
    fs::write(&path, buf).map_err(|e| PjxError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"id":"a","features_path":"f/a.pjxf","question":["what","is","it"],"answer":"cat","explanations":["because it purrs"]}"#;

    #[test]
    fn empty_input_is_empty_list() {
        assert!(read_records(&b""[..], true).unwrap().is_empty());
    }

    #[test]
    fn missing_answer_names_field_and_line() {
        let text = format!(
            "{GOOD}\n{}\n",
            r#"{"id":"b","features_path":"x","question":[],"explanations":["e"]}"#
        );
        let err = read_records(text.as_bytes(), true).unwrap_err();
        match err {
            PjxError::Parse { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "answer");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(err_text(&text).contains("line 2"));
    }

    fn err_text(text: &str) -> String {
        read_records(text.as_bytes(), true).unwrap_err().to_string()
    }

    #[test]
    fn training_records_need_explanations() {
        let rec = r#"{"id":"a","features_path":"f","question":[],"answer":"x","explanations":[]}"#;
        assert!(parse_record(rec, 1, true).is_err());
        assert!(parse_record(rec, 1, false).is_ok());
    }

    #[test]
    fn optional_mask_path() {
        let r = parse_record(GOOD, 1, true).unwrap();
        assert_eq!(r.att_gt_path, None);
        let mut buf = Vec::new();
        write_records(&[r], &mut buf).unwrap();
        assert!(!String::from_utf8(buf).unwrap().contains("att_gt_path"));
    }
}
