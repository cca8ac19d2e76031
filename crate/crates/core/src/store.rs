//! Lineage graph built from the journal.
//!
//! Nodes are messages and external sources; edges point from a consuming
//! message to what it consumed (child to parent). The journal is the durable
//! source of truth and the graph is a deterministic index over it, so it can
//! always be rebuilt by replaying the journal in sequence order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bus::{JournalError, JournalRecord};
use crate::json;
use crate::schema::{
    validate_header, InvalidMessageId, MessageHeader, MessageId, Parameters, ParentKind, ParentRef, Producer,
    Timestamp, Violations,
};

pub const EXTERNAL_COLOR: &str = "gray";
pub const UNKNOWN_COLOR: &str = "unknown";

/// Identity of a lineage node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Message(MessageId),
    /// An external source, identified by name and a digest of its canonical
    /// parameter map. Absent and empty parameter maps are the same source.
    ExternalSource {
        source: String,
        digest: String,
    },
}

impl NodeId {
    pub fn external(source: &str, parameters: Option<&Parameters>) -> Self {
        let empty = Parameters::new();
        let canonical = json::to_canonical_vec(parameters.unwrap_or(&empty));
        let digest = Sha256::digest(&canonical);
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Self::ExternalSource { source: source.to_string(), digest: hex }
    }

    pub fn as_message(&self) -> Option<MessageId> {
        match self {
            Self::Message(id) => Some(*id),
            Self::ExternalSource { .. } => None,
        }
    }
}

impl From<MessageId> for NodeId {
    fn from(id: MessageId) -> Self {
        Self::Message(id)
    }
}

/// Messages render as their id; external sources as `ext:<source>#<digest>`.
impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Message(id) => write!(f, "{id}"),
            Self::ExternalSource { source, digest } => write!(f, "ext:{source}#{digest}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidNodeId {
    #[error(transparent)]
    Message(#[from] InvalidMessageId),
    #[error("invalid external source id `{0}`")]
    External(String),
}

impl FromStr for NodeId {
    type Err = InvalidNodeId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("ext:") {
            let (source, digest) = rest
                .rsplit_once('#')
                .filter(|(src, d)| !src.is_empty() && d.len() == 16)
                .ok_or_else(|| InvalidNodeId::External(s.to_string()))?;
            return Ok(Self::ExternalSource { source: source.to_string(), digest: digest.to_string() });
        }
        Ok(Self::Message(MessageId::parse(s)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeCategory {
    Message,
    ExternalSource,
}

impl NodeCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Message => "message",
            Self::ExternalSource => "external_source",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceNode {
    pub id: NodeId,
    pub category: NodeCategory,
    pub data_type: String,
    /// Messages only.
    pub producer: Option<Producer>,
    /// Messages only.
    pub timestamp: Option<Timestamp>,
    pub subsystem_color_key: String,
    /// Journal sequence of a message.
    pub sequence: Option<u64>,
    /// Sequence of the record that introduced the node. Orders nodes of every
    /// kind deterministically.
    pub first_seen: u64,
    pub topic: Option<String>,
    /// External sources only.
    pub parameters: Parameters,
    /// A message cited as a parent but never ingested.
    pub unresolved: bool,
}

impl ProvenanceNode {
    pub fn is_message(&self) -> bool {
        self.category == NodeCategory::Message
    }

    /// Tie-break key used by every ordered query.
    pub fn order_key(&self) -> (u64, u64) {
        (self.first_seen, self.sequence.unwrap_or(u64::MAX))
    }
}

/// `child` consumed `parent`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProvenanceEdge {
    pub child: NodeId,
    pub parent: NodeId,
    pub data_type: String,
}

/// Subsystem name to display color key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette(pub BTreeMap<String, String>);

impl Palette {
    pub fn color_for(&self, subsystem: &str) -> String {
        self.0.get(subsystem).cloned().unwrap_or_else(|| UNKNOWN_COLOR.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct StoreConfig {
    pub allow_dangling_parents: bool,
    pub palette: Palette,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("sequence {found} already ingested (high-water mark {high_water_mark})")]
    AlreadyIngested { found: u64, high_water_mark: u64 },
    #[error("out-of-order ingest: expected sequence {expected}, got {found}")]
    OutOfOrderIngest { expected: u64, found: u64 },
    #[error("invalid header at sequence {sequence}: {violations}")]
    InvalidHeader { sequence: u64, violations: Violations },
    #[error("message {0} ingested twice")]
    DuplicateMessage(MessageId),
    #[error("parent {parent} of sequence {sequence} is not in the graph")]
    DanglingParent { sequence: u64, parent: MessageId },
    #[error("message {0} would close a cycle")]
    CycleDetected(MessageId),
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// What one ingest changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphDelta {
    pub nodes_added: Vec<NodeId>,
    pub edges_added: usize,
    /// Parents recorded as unresolved placeholders.
    pub unresolved: Vec<MessageId>,
}

/// Append-only lineage DAG with parent and child adjacency indexes.
#[derive(Debug, Clone, Default)]
pub struct ProvenanceGraph {
    config: StoreConfig,
    nodes: IndexMap<NodeId, ProvenanceNode>,
    edges: Vec<ProvenanceEdge>,
    parent_edges: HashMap<NodeId, Vec<usize>>,
    child_edges: HashMap<NodeId, Vec<usize>>,
    by_sequence: Vec<MessageId>,
    high_water_mark: u64,
}

/// Graphs compare by node set, edge multiset and high-water mark; insertion
/// order and configuration are ignored.
impl PartialEq for ProvenanceGraph {
    fn eq(&self, other: &Self) -> bool {
        if self.high_water_mark != other.high_water_mark
            || self.nodes.len() != other.nodes.len()
            || self.edges.len() != other.edges.len()
        {
            return false;
        }
        if !self.nodes.iter().all(|(id, n)| other.nodes.get(id) == Some(n)) {
            return false;
        }
        let mut a = self.edges.clone();
        let mut b = other.edges.clone();
        a.sort();
        b.sort();
        a == b
    }
}

impl Eq for ProvenanceGraph {}

impl ProvenanceGraph {
    pub fn new(config: StoreConfig) -> Self {
        Self { config, ..Default::default() }
    }

    /// Rebuilds a graph by ingesting every record in order.
    pub fn rebuild<I>(records: I, config: StoreConfig) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = Result<JournalRecord, JournalError>>,
    {
        let mut graph = Self::new(config);
        for record in records {
            graph.ingest(&record?)?;
        }
        Ok(graph)
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    /// Last journal sequence applied.
    pub fn high_water_mark(&self) -> u64 {
        self.high_water_mark
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ProvenanceNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[ProvenanceEdge] {
        &self.edges
    }

    pub fn node(&self, id: &NodeId) -> Option<&ProvenanceNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Ingested messages in journal order.
    pub fn messages(&self) -> impl Iterator<Item = &ProvenanceNode> {
        self.by_sequence.iter().filter_map(|id| self.nodes.get(&NodeId::Message(*id)))
    }

    /// Message with the given journal sequence.
    pub fn message_at(&self, sequence: u64) -> Option<&ProvenanceNode> {
        let id = self.by_sequence.get(sequence.checked_sub(1)? as usize)?;
        self.nodes.get(&NodeId::Message(*id))
    }

    /// Out-edges of `id`, in header order.
    pub fn parent_edges(&self, id: &NodeId) -> impl Iterator<Item = &ProvenanceEdge> {
        self.parent_edges.get(id).into_iter().flatten().map(|&i| &self.edges[i])
    }

    /// In-edges of `id`, by child sequence then header position.
    pub fn child_edges(&self, id: &NodeId) -> impl Iterator<Item = &ProvenanceEdge> {
        self.child_edges.get(id).into_iter().flatten().map(|&i| &self.edges[i])
    }

    pub fn parents_of(&self, id: &NodeId) -> Vec<&ProvenanceNode> {
        self.parent_edges(id).filter_map(|e| self.nodes.get(&e.parent)).collect()
    }

    pub fn children_of(&self, id: &NodeId) -> Vec<&ProvenanceNode> {
        self.child_edges(id).filter_map(|e| self.nodes.get(&e.child)).collect()
    }

    /// Reconstructs the header of an ingested message from the graph.
    /// Absent and empty external parameter maps both come back as `Some`.
    pub fn header_of(&self, id: MessageId) -> Option<MessageHeader> {
        let node = self.nodes.get(&NodeId::Message(id)).filter(|n| !n.unresolved)?;
        let parents = self
            .parent_edges(&node.id)
            .map(|edge| match &edge.parent {
                NodeId::Message(pid) => ParentRef::internal(*pid, edge.data_type.clone()),
                NodeId::ExternalSource { source, .. } => {
                    let params = self.nodes.get(&edge.parent).map(|n| n.parameters.clone()).unwrap_or_default();
                    ParentRef::external(source.clone(), edge.data_type.clone()).with_parameters(params)
                }
            })
            .collect();
        Some(MessageHeader {
            message_id: id,
            timestamp: node.timestamp?,
            producer: node.producer.clone()?,
            data_type: node.data_type.clone(),
            parents,
        })
    }

    /// Applies the next journal record.
    ///
    /// Nothing is modified unless the whole record is accepted.
    pub fn ingest(&mut self, record: &JournalRecord) -> Result<GraphDelta, IngestError> {
        let sequence = record.sequence;
        if sequence <= self.high_water_mark {
            return Err(IngestError::AlreadyIngested { found: sequence, high_water_mark: self.high_water_mark });
        }
        if sequence != self.high_water_mark + 1 {
            return Err(IngestError::OutOfOrderIngest { expected: self.high_water_mark + 1, found: sequence });
        }
        let header = &record.envelope.header;
        validate_header(header).map_err(|violations| IngestError::InvalidHeader { sequence, violations })?;

        let own = NodeId::Message(header.message_id);
        let resolving = match self.nodes.get(&own) {
            Some(n) if n.unresolved => true,
            Some(_) => return Err(IngestError::DuplicateMessage(header.message_id)),
            None => false,
        };

        let mut dangling = Vec::new();
        for pid in header.internal_parent_ids() {
            if !self.nodes.contains_key(&NodeId::Message(pid)) {
                if !self.config.allow_dangling_parents {
                    return Err(IngestError::DanglingParent { sequence, parent: pid });
                }
                dangling.push(pid);
            }
        }
        if resolving {
            let descendants = self.reachable_children(&own);
            if header.internal_parent_ids().any(|p| descendants.contains(&NodeId::Message(p))) {
                return Err(IngestError::CycleDetected(header.message_id));
            }
        }

        let mut delta = GraphDelta::default();
        let node = ProvenanceNode {
            id: own.clone(),
            category: NodeCategory::Message,
            data_type: header.data_type.clone(),
            producer: Some(header.producer.clone()),
            timestamp: Some(header.timestamp),
            subsystem_color_key: self.config.palette.color_for(&header.producer.subsystem),
            sequence: Some(sequence),
            first_seen: sequence,
            topic: Some(record.envelope.topic.clone()),
            parameters: Parameters::new(),
            unresolved: false,
        };
        if resolving {
            // Keep the placeholder's slot so existing edges stay valid.
            let first_seen = self.nodes[&own].first_seen;
            self.nodes.insert(own.clone(), ProvenanceNode { first_seen, ..node });
        } else {
            self.nodes.insert(own.clone(), node);
            delta.nodes_added.push(own.clone());
        }

        for parent in &header.parents {
            let parent_id = match parent.kind {
                ParentKind::Internal => {
                    let pid = parent.message_id.expect("validated internal parent has an id");
                    let id = NodeId::Message(pid);
                    if dangling.contains(&pid) && !self.nodes.contains_key(&id) {
                        self.nodes.insert(id.clone(), placeholder(pid, &parent.data_type, sequence));
                        delta.nodes_added.push(id.clone());
                        delta.unresolved.push(pid);
                    }
                    id
                }
                ParentKind::External => {
                    let source = parent.source.as_deref().unwrap_or_default();
                    let id = NodeId::external(source, parent.parameters.as_ref());
                    if !self.nodes.contains_key(&id) {
                        self.nodes.insert(
                            id.clone(),
                            ProvenanceNode {
                                id: id.clone(),
                                category: NodeCategory::ExternalSource,
                                data_type: parent.data_type.clone(),
                                producer: None,
                                timestamp: None,
                                subsystem_color_key: EXTERNAL_COLOR.to_string(),
                                sequence: None,
                                first_seen: sequence,
                                topic: None,
                                parameters: parent.parameters.clone().unwrap_or_default(),
                                unresolved: false,
                            },
                        );
                        delta.nodes_added.push(id.clone());
                    }
                    id
                }
            };
            let index = self.edges.len();
            self.edges.push(ProvenanceEdge {
                child: own.clone(),
                parent: parent_id.clone(),
                data_type: parent.data_type.clone(),
            });
            self.parent_edges.entry(own.clone()).or_default().push(index);
            self.child_edges.entry(parent_id).or_default().push(index);
            delta.edges_added += 1;
        }

        self.by_sequence.push(header.message_id);
        self.high_water_mark = sequence;
        Ok(delta)
    }

    fn reachable_children(&self, from: &NodeId) -> HashSet<NodeId> {
        let mut seen = HashSet::new();
        let mut stack = vec![from.clone()];
        while let Some(id) = stack.pop() {
            for edge in self.child_edges(&id) {
                if seen.insert(edge.child.clone()) {
                    stack.push(edge.child.clone());
                }
            }
        }
        seen
    }
}

fn placeholder(id: MessageId, data_type: &str, first_seen: u64) -> ProvenanceNode {
    ProvenanceNode {
        id: NodeId::Message(id),
        category: NodeCategory::Message,
        data_type: data_type.to_string(),
        producer: None,
        timestamp: None,
        subsystem_color_key: UNKNOWN_COLOR.to_string(),
        sequence: None,
        first_seen,
        topic: None,
        parameters: Parameters::new(),
        unresolved: true,
    }
}

/// Shared, snapshot-readable graph with a single writer.
///
/// Readers get an immutable [`Arc`] of the graph as of the last completed
/// batch and never wait on ingestion.
#[derive(Debug, Default)]
pub struct ProvenanceStore {
    current: RwLock<Arc<ProvenanceGraph>>,
    writer: Mutex<()>,
}

impl ProvenanceStore {
    pub fn new(config: StoreConfig) -> Self {
        Self::from_graph(ProvenanceGraph::new(config))
    }

    pub fn from_graph(graph: ProvenanceGraph) -> Self {
        Self { current: RwLock::new(Arc::new(graph)), writer: Mutex::new(()) }
    }

    pub fn snapshot(&self) -> Arc<ProvenanceGraph> {
        Arc::clone(&self.current.read().unwrap_or_else(|p| p.into_inner()))
    }

    /// Ingests a batch and publishes the result. Records before a failing one
    /// stay applied.
    pub fn ingest_batch<'a, I>(&self, records: I) -> Result<usize, IngestError>
    where
        I: IntoIterator<Item = &'a JournalRecord>,
    {
        let _writer = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut next = (*self.snapshot()).clone();
        let mut applied = 0;
        let mut result = Ok(());
        for record in records {
            if let Err(e) = next.ingest(record) {
                result = Err(e);
                break;
            }
            applied += 1;
        }
        if applied > 0 {
            *self.current.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(next);
        }
        result.map(|()| applied)
    }
}
