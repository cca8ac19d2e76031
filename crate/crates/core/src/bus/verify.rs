//! Offline integrity audit of a journal file.

use std::collections::HashMap;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::journal::{decode_record, JournalRecord};
use crate::json::{self, ParseMode};
use crate::schema::{validate_header, validate_topic, MessageId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JournalViolation {
    /// Sequence of the offending record, when it could be decoded.
    pub sequence: Option<u64>,
    /// Byte offset of the start of the offending line.
    pub offset: u64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub records: u64,
    pub bytes: u64,
    pub violations: Vec<JournalViolation>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// JSON with one violation per line.
    pub fn to_json(&self) -> String {
        let mut out = format!(
            "{{\"records\": {}, \"bytes\": {}, \"ok\": {}, \"violations\": [",
            self.records,
            self.bytes,
            self.is_clean()
        );
        for (i, v) in self.violations.iter().enumerate() {
            out.push_str(if i == 0 { "\n  " } else { ",\n  " });
            out.push_str(&json::to_canonical_string(v));
        }
        if !self.violations.is_empty() {
            out.push('\n');
        }
        out.push_str("]}");
        out
    }
}

/// Checks every record of a journal: decodability, header invariants, topic
/// names, contiguous sequence numbers, unique message ids, and that each
/// internal parent appears earlier in the file. Unlike replay, it keeps going
/// after a bad line so that one run lists every problem.
pub fn verify_journal(path: impl AsRef<Path>, mode: ParseMode) -> io::Result<VerifyReport> {
    let bytes = std::fs::read(path)?;
    Ok(verify_bytes(&bytes, mode))
}

pub fn verify_bytes(bytes: &[u8], mode: ParseMode) -> VerifyReport {
    let mut report = VerifyReport { bytes: bytes.len() as u64, ..Default::default() };
    let mut records: Vec<(u64, JournalRecord)> = Vec::new();
    let mut offset = 0usize;
    while offset < bytes.len() {
        let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            report.violations.push(JournalViolation {
                sequence: None,
                offset: offset as u64,
                kind: "torn-tail".into(),
                detail: format!("{} bytes after the last complete record", bytes.len() - offset),
            });
            break;
        };
        match decode_record(&bytes[offset..offset + nl], mode) {
            Ok(r) => records.push((offset as u64, r)),
            Err(e) => report.violations.push(JournalViolation {
                sequence: None,
                offset: offset as u64,
                kind: "corrupt-record".into(),
                detail: e.to_string(),
            }),
        }
        offset += nl + 1;
    }
    report.records = records.len() as u64;

    // Position in file order of each id's first record.
    let mut first_seen: HashMap<MessageId, usize> = HashMap::new();
    for (i, (_, r)) in records.iter().enumerate() {
        first_seen.entry(r.envelope.header.message_id).or_insert(i);
    }

    let mut expected = 1u64;
    let mut seen: HashMap<MessageId, u64> = HashMap::new();
    for (i, (offset, r)) in records.iter().enumerate() {
        let mut push = |kind: &str, detail: String| {
            report.violations.push(JournalViolation {
                sequence: Some(r.sequence),
                offset: *offset,
                kind: kind.into(),
                detail,
            })
        };
        let header = &r.envelope.header;
        if r.sequence != expected {
            push("sequence-gap", format!("expected sequence {expected}, found {}", r.sequence));
        }
        expected = r.sequence + 1;
        if let Err(v) = validate_topic(&r.envelope.topic) {
            push(v.kind.code(), v.to_string());
        }
        if let Err(violations) = validate_header(header) {
            for v in violations.0 {
                push(v.kind.code(), v.to_string());
            }
        }
        if let Some(previous) = seen.insert(header.message_id, r.sequence) {
            push(
                "duplicate-message-id",
                format!("message {} already recorded at sequence {previous}", header.message_id),
            );
        }
        for parent in header.internal_parent_ids() {
            if parent == header.message_id {
                continue;
            }
            match first_seen.get(&parent) {
                None => push("unknown-parent", format!("parent {parent} never appears in the journal")),
                Some(&j) if j > i => push(
                    "parent-after-child",
                    format!("parent {parent} appears at sequence {}, after its child", records[j].1.sequence),
                ),
                Some(_) => {}
            }
        }
    }
    report
}
