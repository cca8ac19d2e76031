//! Lineage queries over a [`ProvenanceGraph`] snapshot: backward trace to the
//! sources of a decision, forward trace to everything an input influenced, and
//! a causal replay order.

mod export;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use export::{
    export_dot, export_json, export_replay_json, WireEdge, WireNode, WireReplay, WireReplayStep, WireSubgraph,
};

use crate::schema::{MessageId, Producer};
use crate::store::{NodeId, ProvenanceEdge, ProvenanceGraph, ProvenanceNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Child to parent: where did this come from?
    Backward,
    /// Parent to child: what did this influence?
    Forward,
    Both,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Backward => "backward",
            Self::Forward => "forward",
            Self::Both => "both",
        }
    }

    fn includes_backward(&self) -> bool {
        matches!(self, Self::Backward | Self::Both)
    }

    fn includes_forward(&self) -> bool {
        matches!(self, Self::Forward | Self::Both)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "backward" | "back" => Ok(Self::Backward),
            "forward" => Ok(Self::Forward),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// Hop limit of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Depth {
    Limited(u32),
    #[default]
    Unlimited,
}

impl Depth {
    fn allows(&self, depth: u32) -> bool {
        match self {
            Self::Limited(max) => depth <= *max,
            Self::Unlimited => true,
        }
    }
}

impl FromStr for Depth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "unlimited" {
            return Ok(Self::Unlimited);
        }
        s.parse::<u32>()
            .map(Self::Limited)
            .map_err(|_| format!("depth must be a non-negative integer or `unlimited`, got `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("cycle among {0} messages; no replay order exists")]
    CycleDetected(usize),
}

/// Result of a trace: the reachable nodes, the edges among them and where the
/// chain bottoms out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineageSubgraph {
    pub focus: NodeId,
    pub direction: Direction,
    /// Breadth-first: by hop count from the focus, ties by journal order.
    pub nodes: Vec<ProvenanceNode>,
    pub edges: Vec<ProvenanceEdge>,
    /// Nodes with no parents in the full graph.
    pub roots: Vec<NodeId>,
    /// Shortest hop count from the focus.
    pub depth_of: BTreeMap<NodeId, u32>,
    /// Frontier nodes whose further neighbors were cut off by the depth limit.
    pub truncated: BTreeSet<NodeId>,
}

impl LineageSubgraph {
    pub fn contains(&self, id: &NodeId) -> bool {
        self.depth_of.contains_key(id)
    }

    pub fn node(&self, id: &NodeId) -> Option<&ProvenanceNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }
}

pub fn trace_back(graph: &ProvenanceGraph, focus: &NodeId, max_depth: Depth) -> Result<LineageSubgraph, TraceError> {
    trace(graph, focus, Direction::Backward, max_depth)
}

pub fn trace_forward(graph: &ProvenanceGraph, focus: &NodeId, max_depth: Depth) -> Result<LineageSubgraph, TraceError> {
    trace(graph, focus, Direction::Forward, max_depth)
}

fn bfs<'g, F, I>(focus: &NodeId, max_depth: Depth, neighbors: F) -> HashMap<NodeId, u32>
where
    F: Fn(&NodeId) -> I,
    I: Iterator<Item = &'g NodeId>,
{
    let mut depth = HashMap::new();
    depth.insert(focus.clone(), 0u32);
    let mut queue = VecDeque::from([focus.clone()]);
    while let Some(id) = queue.pop_front() {
        let next = depth[&id] + 1;
        if !max_depth.allows(next) {
            continue;
        }
        for n in neighbors(&id) {
            if !depth.contains_key(n) {
                depth.insert(n.clone(), next);
                queue.push_back(n.clone());
            }
        }
    }
    depth
}

/// Collects everything reachable from `focus` within `max_depth` hops.
pub fn trace(
    graph: &ProvenanceGraph,
    focus: &NodeId,
    direction: Direction,
    max_depth: Depth,
) -> Result<LineageSubgraph, TraceError> {
    if !graph.contains(focus) {
        return Err(TraceError::UnknownNode(focus.clone()));
    }
    let back =
        direction.includes_backward().then(|| bfs(focus, max_depth, |id| graph.parent_edges(id).map(|e| &e.parent)));
    let fwd = direction.includes_forward().then(|| bfs(focus, max_depth, |id| graph.child_edges(id).map(|e| &e.child)));

    let mut depth_of: BTreeMap<NodeId, u32> = BTreeMap::new();
    for map in back.iter().chain(fwd.iter()) {
        for (id, d) in map {
            depth_of.entry(id.clone()).and_modify(|cur| *cur = (*cur).min(*d)).or_insert(*d);
        }
    }

    let mut nodes: Vec<ProvenanceNode> = depth_of.keys().filter_map(|id| graph.node(id).cloned()).collect();
    nodes.sort_by(|a, b| (depth_of[&a.id], a.order_key(), &a.id).cmp(&(depth_of[&b.id], b.order_key(), &b.id)));

    let mut truncated = BTreeSet::new();
    if let Depth::Limited(_) = max_depth {
        for node in &nodes {
            let id = &node.id;
            let cut_back = back.as_ref().is_some_and(|m| m.contains_key(id))
                && graph.parent_edges(id).any(|e| !depth_of.contains_key(&e.parent));
            let cut_fwd = fwd.as_ref().is_some_and(|m| m.contains_key(id))
                && graph.child_edges(id).any(|e| !depth_of.contains_key(&e.child));
            if cut_back || cut_fwd {
                truncated.insert(id.clone());
            }
        }
    }

    let edges = nodes
        .iter()
        .flat_map(|n| graph.parent_edges(&n.id))
        .filter(|e| depth_of.contains_key(&e.parent))
        .cloned()
        .collect();
    let roots = nodes.iter().filter(|n| graph.parent_edges(&n.id).next().is_none()).map(|n| n.id.clone()).collect();

    Ok(LineageSubgraph { focus: focus.clone(), direction, nodes, edges, roots, depth_of, truncated })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayStep {
    pub message_id: MessageId,
    pub sequence: u64,
    pub data_type: String,
    pub producer: Option<Producer>,
}

/// Messages of a subgraph in an order where every message follows all of its
/// internal parents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayPlan {
    pub focus: NodeId,
    pub steps: Vec<ReplayStep>,
}

impl ReplayPlan {
    pub fn message_ids(&self) -> Vec<MessageId> {
        self.steps.iter().map(|s| s.message_id).collect()
    }
}

/// Kahn's algorithm over the ingested messages of `subgraph`; among messages
/// that are ready, the lowest journal sequence goes first. External sources
/// and unresolved placeholders are not replayable and are skipped.
pub fn replay_order(subgraph: &LineageSubgraph) -> Result<ReplayPlan, ReplayError> {
    let messages: HashMap<MessageId, &ProvenanceNode> = subgraph
        .nodes
        .iter()
        .filter(|n| n.is_message() && n.sequence.is_some())
        .filter_map(|n| n.id.as_message().map(|id| (id, n)))
        .collect();

    let mut pending: HashMap<MessageId, usize> = messages.keys().map(|id| (*id, 0)).collect();
    let mut dependents: HashMap<MessageId, Vec<MessageId>> = HashMap::new();
    for edge in &subgraph.edges {
        let (Some(child), Some(parent)) = (edge.child.as_message(), edge.parent.as_message()) else {
            continue;
        };
        if messages.contains_key(&child) && messages.contains_key(&parent) {
            *pending.get_mut(&child).expect("child is a message") += 1;
            dependents.entry(parent).or_default().push(child);
        }
    }

    let key = |id: &MessageId| (messages[id].sequence.unwrap_or(u64::MAX), *id);
    let mut ready: BinaryHeap<Reverse<(u64, MessageId)>> =
        pending.iter().filter(|(_, n)| **n == 0).map(|(id, _)| Reverse(key(id))).collect();

    let mut steps = Vec::with_capacity(messages.len());
    while let Some(Reverse((sequence, id))) = ready.pop() {
        let node = messages[&id];
        steps.push(ReplayStep {
            message_id: id,
            sequence,
            data_type: node.data_type.clone(),
            producer: node.producer.clone(),
        });
        for child in dependents.get(&id).into_iter().flatten() {
            let n = pending.get_mut(child).expect("dependent is a message");
            *n -= 1;
            if *n == 0 {
                ready.push(Reverse(key(child)));
            }
        }
    }
    if steps.len() != messages.len() {
        return Err(ReplayError::CycleDetected(messages.len() - steps.len()));
    }
    Ok(ReplayPlan { focus: subgraph.focus.clone(), steps })
}
