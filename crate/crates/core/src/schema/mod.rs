//! The traceability envelope every bus message carries: who produced the data,
//! what it is, and which internal messages or external sources it consumed.

mod codec;
mod id;
mod time;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub(crate) use codec::WireHeader;
pub use codec::{decode_header, parse_header, parse_header_with, serialize_header, HeaderParseError};
pub use id::{IdSource, InvalidMessageId, MessageId, RandomIds, SeededIds};
pub use time::{Clock, InvalidTimestamp, ManualClock, SystemClock, Timestamp};
pub use validate::{validate_header, validate_header_in, validate_topic, Violation, ViolationKind, Violations};

/// The algorithm that produced a message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Producer {
    pub algorithm: String,
    pub version: String,
    pub subsystem: String,
}

impl Producer {
    pub fn new(algorithm: impl Into<String>, version: impl Into<String>, subsystem: impl Into<String>) -> Self {
        Self { algorithm: algorithm.into(), version: version.into(), subsystem: subsystem.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentKind {
    /// Another message on the bus.
    Internal,
    /// Data from outside the bus boundary: an API call, a bulk download.
    External,
}

/// Parameters of an external source. Flat text to text; producers encode any
/// nesting themselves.
pub type Parameters = BTreeMap<String, String>;

/// A consumed input of a message.
///
/// The fields mirror the wire form loosely so that malformed references can be
/// represented and reported by [`validate_header`]; use [`ParentRef::internal`]
/// and [`ParentRef::external`] to build well-formed ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParentRef {
    pub kind: ParentKind,
    pub data_type: String,
    /// Required iff `kind` is internal.
    pub message_id: Option<MessageId>,
    /// Required iff `kind` is external.
    pub source: Option<String>,
    /// Only meaningful for external parents.
    pub parameters: Option<Parameters>,
}

impl ParentRef {
    pub fn internal(message_id: MessageId, data_type: impl Into<String>) -> Self {
        Self {
            kind: ParentKind::Internal,
            data_type: data_type.into(),
            message_id: Some(message_id),
            source: None,
            parameters: None,
        }
    }

    pub fn external(source: impl Into<String>, data_type: impl Into<String>) -> Self {
        Self {
            kind: ParentKind::External,
            data_type: data_type.into(),
            message_id: None,
            source: Some(source.into()),
            parameters: None,
        }
    }

    pub fn with_parameters<K, V>(mut self, parameters: impl IntoIterator<Item = (K, V)>) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        self.parameters = Some(parameters.into_iter().map(|(k, v)| (k.into(), v.into())).collect());
        self
    }

    pub fn is_internal(&self) -> bool {
        self.kind == ParentKind::Internal
    }
}

/// Traceability metadata of one message.
///
/// Parents are kept in canonical order: every internal parent precedes every
/// external parent, each group in the order the producer listed it. The
/// serialized form stores the two groups separately, so this is what makes
/// serialization injective.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MessageHeader {
    pub message_id: MessageId,
    pub timestamp: Timestamp,
    pub producer: Producer,
    pub data_type: String,
    pub parents: Vec<ParentRef>,
}

impl MessageHeader {
    pub fn internal_parents(&self) -> impl Iterator<Item = &ParentRef> {
        self.parents.iter().filter(|p| p.is_internal())
    }

    pub fn external_parents(&self) -> impl Iterator<Item = &ParentRef> {
        self.parents.iter().filter(|p| !p.is_internal())
    }

    pub fn internal_parent_ids(&self) -> impl Iterator<Item = MessageId> + '_ {
        self.internal_parents().filter_map(|p| p.message_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HeaderError {
    #[error("data_type must not be empty")]
    EmptyDataType,
    #[error("internal parent {0} listed more than once")]
    DuplicateParent(MessageId),
    #[error("header is invalid: {0}")]
    Invalid(Violations),
}

/// Builds a header with a fresh identifier and the clock's current instant.
///
/// Parents are stably partitioned into canonical order (internal first).
pub fn new_header(
    producer: Producer,
    data_type: impl Into<String>,
    parents: Vec<ParentRef>,
    ids: &mut dyn IdSource,
    clock: &dyn Clock,
) -> Result<MessageHeader, HeaderError> {
    let data_type = data_type.into();
    if data_type.is_empty() {
        return Err(HeaderError::EmptyDataType);
    }
    let mut seen = BTreeSet::new();
    for id in parents.iter().filter(|p| p.is_internal()).filter_map(|p| p.message_id) {
        if !seen.insert(id) {
            return Err(HeaderError::DuplicateParent(id));
        }
    }
    let (mut ordered, external): (Vec<_>, Vec<_>) = parents.into_iter().partition(|p| p.is_internal());
    ordered.extend(external);

    let header =
        MessageHeader { message_id: ids.next_id(), timestamp: clock.now(), producer, data_type, parents: ordered };
    validate_header(&header).map_err(HeaderError::Invalid)?;
    Ok(header)
}

/// A header plus its routing topic and opaque payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageEnvelope {
    pub header: MessageHeader,
    pub topic: String,
    pub payload: Vec<u8>,
}

impl MessageEnvelope {
    pub fn new(header: MessageHeader, topic: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        Self { header, topic: topic.into(), payload: payload.into() }
    }
}

/// Subsystem names producers may claim.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemRegistry(BTreeSet<String>);

impl SubsystemRegistry {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self(names.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}
