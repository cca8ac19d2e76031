use std::collections::BTreeSet;
use std::fmt;

use super::{MessageHeader, ParentKind, SubsystemRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    EmptyField,
    UnknownSubsystem,
    SelfParent,
    DuplicateParent,
    InternalParentMissingMessageId,
    ExternalParentMissingSource,
    InternalParentHasSource,
    InternalParentHasParameters,
    ExternalParentHasMessageId,
    EmptyParameterKey,
    NonCanonicalParentOrder,
    InvalidTopic,
}

impl ViolationKind {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyField => "empty-field",
            Self::UnknownSubsystem => "unknown-subsystem",
            Self::SelfParent => "self-parent",
            Self::DuplicateParent => "duplicate-parent",
            Self::InternalParentMissingMessageId => "internal-parent-missing-message-id",
            Self::ExternalParentMissingSource => "external-parent-missing-source",
            Self::InternalParentHasSource => "internal-parent-has-source",
            Self::InternalParentHasParameters => "internal-parent-has-parameters",
            Self::ExternalParentHasMessageId => "external-parent-has-message-id",
            Self::EmptyParameterKey => "empty-parameter-key",
            Self::NonCanonicalParentOrder => "non-canonical-parent-order",
            Self::InvalidTopic => "invalid-topic",
        }
    }

    fn describe(&self) -> &'static str {
        match self {
            Self::EmptyField => "must not be empty",
            Self::UnknownSubsystem => "subsystem not in registry",
            Self::SelfParent => "self-parent",
            Self::DuplicateParent => "duplicate internal parent",
            Self::InternalParentMissingMessageId => "internal parent missing message_id",
            Self::ExternalParentMissingSource => "external parent missing source",
            Self::InternalParentHasSource => "internal parent must not carry a source",
            Self::InternalParentHasParameters => "internal parent must not carry parameters",
            Self::ExternalParentHasMessageId => "external parent must not carry a message_id",
            Self::EmptyParameterKey => "parameter keys must not be empty",
            Self::NonCanonicalParentOrder => "internal parents must precede external parents",
            Self::InvalidTopic => "topic must be non-empty and use only [a-z0-9._-]",
        }
    }
}

/// One broken invariant, located by field path.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Violation {
    pub path: String,
    pub kind: ViolationKind,
}

impl Violation {
    fn new(path: impl Into<String>, kind: ViolationKind) -> Self {
        Self { path: path.into(), kind }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.kind.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    pub fn iter(&self) -> impl Iterator<Item = &Violation> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Violations {}

/// Checks every header and parent-reference invariant, collecting all
/// violations. The subsystem is only required to be non-empty.
pub fn validate_header(header: &MessageHeader) -> Result<(), Violations> {
    validate_header_in(header, None)
}

/// As [`validate_header`], additionally requiring the producer's subsystem to
/// be registered when a registry is given.
pub fn validate_header_in(header: &MessageHeader, registry: Option<&SubsystemRegistry>) -> Result<(), Violations> {
    let mut out = Vec::new();
    let non_empty = |out: &mut Vec<Violation>, path: &str, value: &str| {
        if value.is_empty() {
            out.push(Violation::new(path, ViolationKind::EmptyField));
        }
    };

    non_empty(&mut out, "producer.algorithm", &header.producer.algorithm);
    non_empty(&mut out, "producer.version", &header.producer.version);
    if header.producer.subsystem.is_empty() {
        out.push(Violation::new("producer.subsystem", ViolationKind::EmptyField));
    } else if registry.is_some_and(|r| !r.contains(&header.producer.subsystem)) {
        out.push(Violation::new("producer.subsystem", ViolationKind::UnknownSubsystem));
    }
    non_empty(&mut out, "data_type", &header.data_type);

    let mut seen_external = false;
    let mut order_flagged = false;
    let mut internal_index = 0usize;
    let mut external_index = 0usize;
    let mut seen_ids = BTreeSet::new();

    for parent in &header.parents {
        match parent.kind {
            ParentKind::Internal => {
                let path = format!("traceability.internal_parents[{internal_index}]");
                internal_index += 1;
                if seen_external && !order_flagged {
                    out.push(Violation::new("traceability", ViolationKind::NonCanonicalParentOrder));
                    order_flagged = true;
                }
                non_empty(&mut out, &format!("{path}.data_type"), &parent.data_type);
                match parent.message_id {
                    None => out.push(Violation::new(
                        format!("{path}.message_id"),
                        ViolationKind::InternalParentMissingMessageId,
                    )),
                    Some(id) if id == header.message_id => {
                        out.push(Violation::new(format!("{path}.message_id"), ViolationKind::SelfParent))
                    }
                    Some(id) => {
                        if !seen_ids.insert(id) {
                            out.push(Violation::new(format!("{path}.message_id"), ViolationKind::DuplicateParent));
                        }
                    }
                }
                if parent.source.is_some() {
                    out.push(Violation::new(format!("{path}.source"), ViolationKind::InternalParentHasSource));
                }
                if parent.parameters.is_some() {
                    out.push(Violation::new(format!("{path}.parameters"), ViolationKind::InternalParentHasParameters));
                }
            }
            ParentKind::External => {
                let path = format!("traceability.external_parents[{external_index}]");
                external_index += 1;
                seen_external = true;
                non_empty(&mut out, &format!("{path}.data_type"), &parent.data_type);
                if parent.source.as_deref().is_none_or(str::is_empty) {
                    out.push(Violation::new(format!("{path}.source"), ViolationKind::ExternalParentMissingSource));
                }
                if parent.message_id.is_some() {
                    out.push(Violation::new(format!("{path}.message_id"), ViolationKind::ExternalParentHasMessageId));
                }
                if parent.parameters.as_ref().is_some_and(|p| p.keys().any(String::is_empty)) {
                    out.push(Violation::new(format!("{path}.parameters"), ViolationKind::EmptyParameterKey));
                }
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(Violations(out))
    }
}

/// Topic names are non-empty and drawn from `[a-z0-9._-]`.
pub fn validate_topic(topic: &str) -> Result<(), Violation> {
    let ok = !topic.is_empty() && topic.bytes().all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'.' | b'_' | b'-'));
    if ok {
        Ok(())
    } else {
        Err(Violation::new("topic", ViolationKind::InvalidTopic))
    }
}
