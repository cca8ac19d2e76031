//! Text renderings of a [`LineageSubgraph`]: Graphviz DOT for people and the
//! JSON wire form for the explorer UI and other clients.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{LineageSubgraph, ReplayPlan};
use crate::json;
use crate::schema::Producer;
use crate::store::{NodeCategory, UNKNOWN_COLOR};

pub const MESSAGE_FILL: &str = "green";
pub const EXTERNAL_FILL: &str = "gray";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSubgraph {
    pub focus: String,
    pub direction: String,
    pub nodes: Vec<WireNode>,
    pub edges: Vec<WireEdge>,
    pub roots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireNode {
    pub id: String,
    pub kind: NodeCategory,
    pub data_type: String,
    pub producer: Option<Producer>,
    pub subsystem_color_key: String,
    pub depth: u32,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireEdge {
    pub child: String,
    pub parent: String,
    pub data_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireReplay {
    pub focus: String,
    pub steps: Vec<WireReplayStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireReplayStep {
    pub message_id: String,
    pub sequence: u64,
    pub data_type: String,
    pub producer: Option<Producer>,
}

impl From<&LineageSubgraph> for WireSubgraph {
    fn from(sub: &LineageSubgraph) -> Self {
        Self {
            focus: sub.focus.to_string(),
            direction: sub.direction.as_str().to_string(),
            nodes: sub
                .nodes
                .iter()
                .map(|n| WireNode {
                    id: n.id.to_string(),
                    kind: n.category,
                    data_type: n.data_type.clone(),
                    producer: n.producer.clone(),
                    subsystem_color_key: n.subsystem_color_key.clone(),
                    depth: sub.depth_of.get(&n.id).copied().unwrap_or_default(),
                    truncated: sub.truncated.contains(&n.id),
                })
                .collect(),
            edges: sub
                .edges
                .iter()
                .map(|e| WireEdge {
                    child: e.child.to_string(),
                    parent: e.parent.to_string(),
                    data_type: e.data_type.clone(),
                })
                .collect(),
            roots: sub.roots.iter().map(ToString::to_string).collect(),
        }
    }
}

impl From<&ReplayPlan> for WireReplay {
    fn from(plan: &ReplayPlan) -> Self {
        Self {
            focus: plan.focus.to_string(),
            steps: plan
                .steps
                .iter()
                .map(|s| WireReplayStep {
                    message_id: s.message_id.to_string(),
                    sequence: s.sequence,
                    data_type: s.data_type.clone(),
                    producer: s.producer.clone(),
                })
                .collect(),
        }
    }
}

/// Single-line JSON:
/// `{"focus": ..., "direction": ..., "nodes": [...], "edges": [...], "roots": [...]}`.
pub fn export_json(sub: &LineageSubgraph) -> String {
    json::to_canonical_string(&WireSubgraph::from(sub))
}

/// `{"focus": ..., "steps": [{"message_id", "sequence", "data_type", "producer"}]}`.
pub fn export_replay_json(plan: &ReplayPlan) -> String {
    json::to_canonical_string(&WireReplay::from(plan))
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Graphviz digraph with edges drawn in data-flow direction (parent to child).
/// Messages are filled green and outlined in their subsystem color; external
/// sources are filled gray. Depth-truncated nodes are dashed.
pub fn export_dot(sub: &LineageSubgraph) -> String {
    let mut out = String::new();
    out.push_str("digraph lineage {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=ellipse, style=filled, fontname=\"Helvetica\"];\n");
    for node in &sub.nodes {
        let truncated = sub.truncated.contains(&node.id);
        let style = if truncated { "filled,dashed" } else { "filled" };
        let (label, fill) = match node.category {
            NodeCategory::Message => {
                let producer = node
                    .producer
                    .as_ref()
                    .map(|p| format!("{} ({})", p.algorithm, p.subsystem))
                    .unwrap_or_else(|| "unresolved".to_string());
                (format!("{}\n{}", node.data_type, producer), MESSAGE_FILL)
            }
            NodeCategory::ExternalSource => {
                let source = match &node.id {
                    crate::store::NodeId::ExternalSource { source, .. } => source.as_str(),
                    crate::store::NodeId::Message(_) => "",
                };
                (format!("{}\n{}", node.data_type, source), EXTERNAL_FILL)
            }
        };
        let _ = write!(
            out,
            "  {} [label={}, fillcolor={}, style={}",
            quote(&node.id.to_string()),
            quote(&label),
            quote(fill),
            quote(style)
        );
        if node.category == NodeCategory::Message && node.subsystem_color_key != UNKNOWN_COLOR {
            let _ = write!(out, ", color={}, penwidth=3", quote(&node.subsystem_color_key));
        }
        if node.id == sub.focus {
            out.push_str(", peripheries=2");
        }
        out.push_str("];\n");
    }
    for edge in &sub.edges {
        let _ = writeln!(
            out,
            "  {} -> {} [label={}];",
            quote(&edge.parent.to_string()),
            quote(&edge.child.to_string()),
            quote(&edge.data_type)
        );
    }
    out.push_str("}\n");
    out
}
