//! Survey answers as JSON lines, one wire-form answer per line.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costmatrix::{AnswerRecord, RawAnswer};
use crate::error::{Error, Result};

/// A problem found while validating a corpus; `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerDiagnostic {
    pub line: usize,
    pub reason: String,
}

/// Parses one line. JSON errors are reported as schema violations naming the
/// offending field where serde can tell.
pub fn parse_answer_line(line: &str, location: &str) -> Result<AnswerRecord> {
    let raw: RawAnswer = serde_json::from_str(line).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .unwrap_or("json")
            .to_string();
        Error::schema(location, field, msg)
    })?;
    AnswerRecord::from_raw(raw, location)
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Strict parse; fails on the first invalid line.
pub fn parse_answers(text: &str, source: &str) -> Result<Vec<AnswerRecord>> {
    lines(text)
        .map(|(n, l)| parse_answer_line(l, &format!("{source}:{n}")))
        .collect()
}

/// Lenient parse: every valid answer plus one diagnostic per invalid line.
pub fn validate_answers(text: &str) -> (Vec<AnswerRecord>, Vec<AnswerDiagnostic>) {
    let mut ok = Vec::new();
    let mut diagnostics = Vec::new();
    for (n, l) in lines(text) {
        match parse_answer_line(l, &format!("line {n}")) {
            Ok(a) => ok.push(a),
            Err(e) => diagnostics.push(AnswerDiagnostic {
                line: n,
                reason: e.to_string(),
            }),
        }
    }
    (ok, diagnostics)
}

pub fn encode_answer_line(answer: &AnswerRecord) -> String {
    serde_json::to_string(answer).expect("answers always serialize")
}

pub fn encode_answers(answers: &[AnswerRecord]) -> String {
    let mut out = String::new();
    for a in answers {
        out.push_str(&encode_answer_line(a));
        out.push('\n');
    }
    out
}

pub fn read_answers(path: impl AsRef<Path>) -> Result<Vec<AnswerRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_answers(&text, &path.display().to_string())
}

pub fn write_answers(path: impl AsRef<Path>, answers: &[AnswerRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_answers(answers)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"participant_id":"p1","perspective":"passenger","gender":"female","image_id":"img_003","target_class":5,"severities":{"drivable":6,"nondrivable":5,"static":4,"info":4,"dynamic":2},"timestamp":"2024-05-01T10:00:00Z"}"#;

    #[test]
    fn round_trip_is_exact() {
        let a = parse_answer_line(LINE, "t").unwrap();
        assert_eq!(a.target(), 4);
        assert_eq!(a.level(0), Some(6));
        let back = parse_answer_line(&encode_answer_line(&a), "t").unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn missing_severity_names_class() {
        let line = LINE.replace(r#""static":4,"#, "");
        let err = parse_answer_line(&line, "line 1").unwrap_err();
        match &err {
            Error::SchemaViolation { reason, .. } => assert!(reason.contains("static"), "{reason}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_json_field_is_named() {
        let line = LINE.replace(r#""image_id":"img_003","#, "");
        match parse_answer_line(&line, "t") {
            Err(Error::SchemaViolation { field, .. }) => assert_eq!(field, "image_id"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diagnostics_per_bad_line() {
        let text = format!(
            "{LINE}\n\nnot json\n{}\n{LINE}\n",
            LINE.replace("\"drivable\":6", "\"drivable\":7")
        );
        let (ok, diags) = validate_answers(&text);
        assert_eq!(ok.len(), 2);
        assert_eq!(diags.iter().map(|d| d.line).collect::<Vec<_>>(), [3, 4]);
        assert!(parse_answers(&text, "f").is_err());
    }
}
