//! Canonical text form of [`MessageHeader`]:
//!
//! ```text
//! {"message_id": "...", "timestamp": "YYYY-MM-DDThh:mm:ss.sssZ",
//!  "producer": {"algorithm": "...", "version": "...", "subsystem": "..."},
//!  "data_type": "...",
//!  "traceability": {"internal_parents": [{"message_id": "...", "data_type": "..."}],
//!                   "external_parents": [{"source": "...", "data_type": "...", "parameters": {"k": "v"}}]}}
//! ```
//!
//! emitted on a single line with the key order above. `parameters` is omitted
//! when absent and its keys are sorted.

use serde::{Deserialize, Serialize};

use super::validate::{validate_header, Violations};
use super::{MessageHeader, MessageId, Parameters, ParentKind, ParentRef, Producer, Timestamp};
use crate::json::{self, ParseError, ParseMode};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct WireHeader {
    message_id: MessageId,
    timestamp: Timestamp,
    producer: Producer,
    data_type: String,
    traceability: WireTraceability,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireTraceability {
    internal_parents: Vec<WireInternalParent>,
    external_parents: Vec<WireExternalParent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireInternalParent {
    message_id: MessageId,
    data_type: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireExternalParent {
    source: String,
    data_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parameters: Option<Parameters>,
}

impl From<&MessageHeader> for WireHeader {
    fn from(h: &MessageHeader) -> Self {
        let internal_parents = h
            .internal_parents()
            .filter_map(|p| {
                p.message_id.map(|message_id| WireInternalParent { message_id, data_type: p.data_type.clone() })
            })
            .collect();
        let external_parents = h
            .external_parents()
            .map(|p| WireExternalParent {
                source: p.source.clone().unwrap_or_default(),
                data_type: p.data_type.clone(),
                parameters: p.parameters.clone(),
            })
            .collect();
        WireHeader {
            message_id: h.message_id,
            timestamp: h.timestamp,
            producer: h.producer.clone(),
            data_type: h.data_type.clone(),
            traceability: WireTraceability { internal_parents, external_parents },
        }
    }
}

impl From<WireHeader> for MessageHeader {
    fn from(w: WireHeader) -> Self {
        let mut parents: Vec<ParentRef> = w
            .traceability
            .internal_parents
            .into_iter()
            .map(|p| ParentRef::internal(p.message_id, p.data_type))
            .collect();
        parents.extend(w.traceability.external_parents.into_iter().map(|p| ParentRef {
            kind: ParentKind::External,
            data_type: p.data_type,
            message_id: None,
            source: Some(p.source),
            parameters: p.parameters,
        }));
        MessageHeader {
            message_id: w.message_id,
            timestamp: w.timestamp,
            producer: w.producer,
            data_type: w.data_type,
            parents,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HeaderParseError {
    #[error("malformed header: {0}")]
    Parse(#[from] ParseError),
    #[error("header violates invariants: {0}")]
    Validation(Violations),
}

/// Deterministic single-line encoding.
pub fn serialize_header(header: &MessageHeader) -> Vec<u8> {
    json::to_canonical_vec(&WireHeader::from(header))
}

/// Strict parse followed by validation.
pub fn parse_header(bytes: &[u8]) -> Result<MessageHeader, HeaderParseError> {
    parse_header_with(bytes, ParseMode::Strict)
}

pub fn parse_header_with(bytes: &[u8], mode: ParseMode) -> Result<MessageHeader, HeaderParseError> {
    let header = decode_header(bytes, mode)?;
    validate_header(&header).map_err(HeaderParseError::Validation)?;
    Ok(header)
}

/// Structural decode only; invariants are left for the caller to check.
pub fn decode_header(bytes: &[u8], mode: ParseMode) -> Result<MessageHeader, ParseError> {
    json::decode::<WireHeader>(bytes, mode).map(Into::into)
}
