//! Shared header fixtures: a reference header, its single-field mutations
//! and a generator of valid headers.

use std::collections::BTreeMap;

use proptest::prelude::*;
use provtrace::schema::{
    parse_header, serialize_header, validate_header, HeaderParseError, MessageHeader, MessageId, ParentRef, Producer,
    Timestamp, ViolationKind,
};
use serde_json::Value;

pub fn base_header() -> MessageHeader {
    MessageHeader {
        message_id: MessageId::from_u128(0x10),
        timestamp: Timestamp::parse("2025-02-01T12:30:45.123Z").unwrap(),
        producer: Producer::new("UCTProcessing", "1.0.0", "processing"),
        data_type: "candidate_track".into(),
        parents: vec![
            ParentRef::internal(MessageId::from_u128(0x20), "tracks"),
            ParentRef::internal(MessageId::from_u128(0x30), "observations"),
            ParentRef::external("observations-api", "observations")
                .with_parameters([("endpoint", "/v2/observations"), ("window", "24h")]),
            ParentRef::external("catalog-service", "catalog"),
        ],
    }
}

pub type Mutation = (&'static str, fn(&mut MessageHeader), &'static str, ViolationKind);

/// Every single-field deletion or corruption of the model, with the one
/// violation it must produce.
pub fn model_mutations() -> Vec<Mutation> {
    use ViolationKind::*;
    vec![
        ("algorithm emptied", |h| h.producer.algorithm.clear(), "producer.algorithm", EmptyField),
        ("version emptied", |h| h.producer.version.clear(), "producer.version", EmptyField),
        ("subsystem emptied", |h| h.producer.subsystem.clear(), "producer.subsystem", EmptyField),
        ("data type emptied", |h| h.data_type.clear(), "data_type", EmptyField),
        (
            "internal id deleted",
            |h| h.parents[1].message_id = None,
            "traceability.internal_parents[1].message_id",
            InternalParentMissingMessageId,
        ),
        (
            "internal data type emptied",
            |h| h.parents[0].data_type.clear(),
            "traceability.internal_parents[0].data_type",
            EmptyField,
        ),
        (
            "internal id set to self",
            |h| h.parents[0].message_id = Some(h.message_id),
            "traceability.internal_parents[0].message_id",
            SelfParent,
        ),
        (
            "internal id duplicated",
            |h| h.parents[1].message_id = h.parents[0].message_id,
            "traceability.internal_parents[1].message_id",
            DuplicateParent,
        ),
        (
            "internal gains source",
            |h| h.parents[0].source = Some("x".into()),
            "traceability.internal_parents[0].source",
            InternalParentHasSource,
        ),
        (
            "internal gains parameters",
            |h| h.parents[1].parameters = Some(BTreeMap::new()),
            "traceability.internal_parents[1].parameters",
            InternalParentHasParameters,
        ),
        (
            "external source deleted",
            |h| h.parents[3].source = None,
            "traceability.external_parents[1].source",
            ExternalParentMissingSource,
        ),
        (
            "external source emptied",
            |h| h.parents[2].source = Some(String::new()),
            "traceability.external_parents[0].source",
            ExternalParentMissingSource,
        ),
        (
            "external data type emptied",
            |h| h.parents[2].data_type.clear(),
            "traceability.external_parents[0].data_type",
            EmptyField,
        ),
        (
            "external gains message id",
            |h| h.parents[3].message_id = Some(MessageId::from_u128(0x99)),
            "traceability.external_parents[1].message_id",
            ExternalParentHasMessageId,
        ),
        (
            "external parameter key emptied",
            |h| {
                h.parents[2].parameters.as_mut().unwrap().insert(String::new(), "v".into());
            },
            "traceability.external_parents[0].parameters",
            EmptyParameterKey,
        ),
        ("external moved before internal", |h| h.parents.swap(1, 2), "traceability", NonCanonicalParentOrder),
    ]
}

/// Applies every model mutation; returns how many were checked.
pub fn check_model_mutations() -> usize {
    assert!(validate_header(&base_header()).is_ok());
    for (name, mutate, path, kind) in model_mutations() {
        let mut h = base_header();
        mutate(&mut h);
        let v = validate_header(&h).unwrap_err();
        assert_eq!(v.len(), 1, "{name}: {v}");
        assert_eq!((v.0[0].path.as_str(), v.0[0].kind), (path, kind), "{name}");
        assert!(v.to_string().starts_with(path), "{name}: {v}");
    }
    model_mutations().len()
}

/// Paths (wire form) of every key and string leaf in a JSON document.
pub fn leaves(v: &Value, prefix: String, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                out.push(path.clone());
                leaves(child, path, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                leaves(child, format!("{prefix}[{i}]"), out);
            }
        }
        _ => {}
    }
}

pub fn pointer(path: &str) -> String {
    let mut out = String::new();
    for part in path.split('.') {
        match part.split_once('[') {
            Some((key, rest)) => {
                out.push('/');
                out.push_str(key);
                out.push('/');
                out.push_str(rest.trim_end_matches(']'));
            }
            None => {
                out.push('/');
                out.push_str(part);
            }
        }
    }
    out
}

pub fn remove_at(doc: &mut Value, path: &str) {
    let ptr = pointer(path);
    let (parent, key) = ptr.rsplit_once('/').unwrap();
    doc.pointer_mut(parent).unwrap().as_object_mut().unwrap().remove(key).unwrap();
}

/// Deletes each required wire key; returns how many were checked.
pub fn check_wire_deletions() -> usize {
    let original: Value = serde_json::from_slice(&serialize_header(&base_header())).unwrap();
    let mut paths = Vec::new();
    leaves(&original, String::new(), &mut paths);
    assert!(paths.len() > 20);
    let mut checked = 0;
    for path in paths {
        if path.split('.').any(|p| p.starts_with("parameters")) && !path.ends_with("parameters") {
            continue;
        }
        let mut doc = original.clone();
        remove_at(&mut doc, &path);
        let bytes = serde_json::to_vec(&doc).unwrap();
        if path.ends_with(".parameters") {
            let h = parse_header(&bytes).expect("parameters are optional");
            assert_eq!(h.parents[2].parameters, None);
            continue;
        }
        match parse_header(&bytes) {
            Err(HeaderParseError::Parse(e)) => assert_eq!(e.path, path, "deleting {path}"),
            other => panic!("deleting {path}: {other:?}"),
        }
        checked += 1;
    }
    checked
}

/// Validates, serializes and reparses `h`, requiring an exact round trip.
pub fn check_round_trip(h: &MessageHeader) {
    assert!(validate_header(h).is_ok());
    let bytes = serialize_header(h);
    let parsed = parse_header(&bytes).unwrap();
    assert_eq!(&parsed, h);
    assert_eq!(serialize_header(&parsed), bytes);
}

pub fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 _./:é-]{1,12}"
}

pub fn params() -> impl Strategy<Value = BTreeMap<String, String>> {
    prop::collection::btree_map("[a-z_]{1,6}", "[ -~]{0,10}", 0..4)
}

prop_compose! {
    pub fn arb_header()(
        own in any::<u128>(),
        millis in 0i64..4_102_444_800_000,
        algorithm in text(),
        version in "[0-9]{1,2}\\.[0-9]{1,2}\\.[0-9]{1,2}",
        subsystem in text(),
        data_type in text(),
        internal in prop::collection::btree_map(any::<u128>(), text(), 0..5),
        external in prop::collection::vec((text(), text(), prop::option::of(params())), 0..4),
    ) -> MessageHeader {
        let mut parents: Vec<ParentRef> = internal
            .into_iter()
            .filter(|(id, _)| *id != own)
            .map(|(id, dt)| ParentRef::internal(MessageId::from_u128(id), dt))
            .collect();
        for (source, dt, parameters) in external {
            let mut p = ParentRef::external(source, dt);
            p.parameters = parameters;
            parents.push(p);
        }
        MessageHeader {
            message_id: MessageId::from_u128(own),
            timestamp: Timestamp::from_unix_millis(millis),
            producer: Producer::new(algorithm, version, subsystem),
            data_type,
            parents,
        }
    }
}
