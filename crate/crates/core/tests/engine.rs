mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::oracle::{check_against_closure, check_replay};
use common::{build_graph, random_dag};
use proptest::prelude::*;
use provtrace::bus::{journal_replay, JournalRecord};
use provtrace::engine::{
    export_dot, export_json, replay_order, trace, trace_back, trace_forward, Depth, Direction, LineageSubgraph,
    TraceError,
};
use provtrace::store::{NodeCategory, NodeId, ProvenanceGraph};
use serde_json::Value;

fn canonical() -> (ProvenanceGraph, Vec<JournalRecord>, provtrace::scenario::RunReport) {
    let dir = tempfile::tempdir().unwrap();
    let (path, report) = common::canonical_journal(dir.path());
    let records: Vec<JournalRecord> = journal_replay(&path).unwrap().map(Result::unwrap).collect();
    (build_graph(&records), records, report)
}

fn data_types(sub: &LineageSubgraph, ids: &[NodeId]) -> BTreeSet<String> {
    ids.iter().map(|id| sub.node(id).unwrap().data_type.clone()).collect()
}

#[test]
fn goal_traces_back_to_the_task_request_and_both_sources() {
    let (g, records, report) = canonical();
    let goal = NodeId::Message(report.goal_message_ids[0]);
    let sub = trace_back(&g, &goal, Depth::Unlimited).unwrap();
    let task = common::message_id_of(&records, "task_request");
    let mut roots: Vec<String> = sub
        .roots
        .iter()
        .map(|id| match id {
            NodeId::Message(m) => {
                assert_eq!(*m, task);
                "task_request".to_string()
            }
            NodeId::ExternalSource { source, .. } => source.clone(),
        })
        .collect();
    roots.sort();
    assert_eq!(roots, ["catalog-service", "observations-api", "task_request"]);
    assert_eq!(sub.depth_of[&goal], 0);
    assert_eq!(sub.nodes[0].id, goal);
    assert!(sub.truncated.is_empty());
    // Everything the goal depends on: 7 messages and 2 sources.
    assert_eq!(sub.nodes.len(), 9);
    assert_eq!(
        data_types(&sub, &sub.nodes.iter().filter(|n| n.is_message()).map(|n| n.id.clone()).collect::<Vec<_>>()),
        [
            "breakup_alert",
            "candidate_track",
            "new_object_discovered",
            "observations",
            "state_vector",
            "task_request",
            "tracks"
        ]
        .into_iter()
        .map(String::from)
        .collect()
    );
}

#[test]
fn roots_and_leaves_trace_to_themselves() {
    let (g, records, report) = canonical();
    let task = NodeId::Message(common::message_id_of(&records, "task_request"));
    let back = trace_back(&g, &task, Depth::Unlimited).unwrap();
    assert_eq!(back.nodes.len(), 1);
    assert_eq!(back.roots, vec![task.clone()]);

    let screening = NodeId::Message(common::message_id_of(&records, "breakup_alert"));
    let back = trace_back(&g, &screening, Depth::Unlimited).unwrap();
    assert_eq!(back.nodes.len(), 3, "alert, its task request and the catalog source");

    let goal = NodeId::Message(report.goal_message_ids[0]);
    let forward = trace_forward(&g, &task, Depth::Unlimited).unwrap();
    assert!(forward.contains(&goal));
    assert_eq!(forward.nodes.len(), 10);
    let leaf = trace_forward(&g, &goal, Depth::Unlimited).unwrap();
    assert_eq!(leaf.nodes.len(), 1);

    let missing = NodeId::Message(provtrace::schema::MessageId::from_u128(1));
    assert_eq!(trace_back(&g, &missing, Depth::Unlimited).unwrap_err(), TraceError::UnknownNode(missing));
}

#[test]
fn depth_zero_is_the_focus_alone() {
    let (g, _, report) = canonical();
    let goal = NodeId::Message(report.goal_message_ids[0]);
    let sub = trace(&g, &goal, Direction::Both, Depth::Limited(0)).unwrap();
    assert_eq!(sub.nodes.len(), 1);
    assert!(sub.edges.is_empty());
    assert!(sub.truncated.contains(&goal));
    let one = trace_back(&g, &goal, Depth::Limited(1)).unwrap();
    assert_eq!(one.nodes.len(), 3);
    assert_eq!(one.truncated.len(), 2);
}

#[test]
fn full_replay_starts_with_the_request_and_ends_with_the_goal() {
    let (g, records, report) = canonical();
    let task = common::message_id_of(&records, "task_request");
    let sub = trace_forward(&g, &NodeId::Message(task), Depth::Unlimited).unwrap();
    let plan = replay_order(&sub).unwrap();
    let ids = plan.message_ids();
    assert_eq!(ids.len(), 10);
    assert_eq!(ids.first(), Some(&task));
    assert_eq!(ids.last(), Some(&report.goal_message_ids[0]));

    let single = trace_back(&g, &NodeId::Message(task), Depth::Unlimited).unwrap();
    assert_eq!(replay_order(&single).unwrap().message_ids(), vec![task]);
}

#[test]
fn dot_styles_sources_gray_and_messages_green() {
    let (g, records, report) = canonical();
    let goal = NodeId::Message(report.goal_message_ids[0]);
    let sub = trace_back(&g, &goal, Depth::Unlimited).unwrap();
    let dot = export_dot(&sub);
    let gray: BTreeSet<String> = dot
        .lines()
        .filter(|l| l.contains("fillcolor=\"gray\""))
        .map(|l| l.trim().split('"').nth(1).unwrap().to_string())
        .collect();
    let sources: BTreeSet<String> =
        sub.nodes.iter().filter(|n| n.category == NodeCategory::ExternalSource).map(|n| n.id.to_string()).collect();
    assert_eq!(gray, sources);
    assert_eq!(dot.matches("fillcolor=\"green\"").count(), 7);
    assert_eq!(dot.matches(" -> ").count(), sub.edges.len());
    // Edges run parent to child.
    let task = common::message_id_of(&records, "task_request").to_string();
    let alert = common::message_id_of(&records, "breakup_alert").to_string();
    assert!(dot.contains(&format!("\"{task}\" -> \"{alert}\"")));

    let root =
        trace_back(&g, &NodeId::Message(common::message_id_of(&records, "task_request")), Depth::Unlimited).unwrap();
    let dot = export_dot(&root);
    assert_eq!(dot.matches("label=").count(), 1);
    assert_eq!(dot.matches(" -> ").count(), 0);
}

/// Reads the wire form back with a general JSON parser and compares
/// multisets against the subgraph.
fn check_wire_form(sub: &LineageSubgraph) {
    let v: Value = serde_json::from_str(&export_json(sub)).unwrap();
    assert_eq!(v["focus"], sub.focus.to_string());
    assert_eq!(v["direction"], sub.direction.as_str());
    let mut nodes: Vec<(String, String, String, u64, bool)> = v["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| {
            (
                n["id"].as_str().unwrap().to_string(),
                n["kind"].as_str().unwrap().to_string(),
                n["data_type"].as_str().unwrap().to_string(),
                n["depth"].as_u64().unwrap(),
                n["truncated"].as_bool().unwrap(),
            )
        })
        .collect();
    let mut expected: Vec<_> = sub
        .nodes
        .iter()
        .map(|n| {
            (
                n.id.to_string(),
                n.category.as_str().to_string(),
                n.data_type.clone(),
                sub.depth_of[&n.id] as u64,
                sub.truncated.contains(&n.id),
            )
        })
        .collect();
    nodes.sort();
    expected.sort();
    assert_eq!(nodes, expected);
    let mut edges: Vec<(String, String, String)> = v["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e["child"].as_str().unwrap().into(),
                e["parent"].as_str().unwrap().into(),
                e["data_type"].as_str().unwrap().into(),
            )
        })
        .collect();
    let mut expected: Vec<_> =
        sub.edges.iter().map(|e| (e.child.to_string(), e.parent.to_string(), e.data_type.clone())).collect();
    edges.sort();
    expected.sort();
    assert_eq!(edges, expected);
    let roots: Vec<String> = v["roots"].as_array().unwrap().iter().map(|r| r.as_str().unwrap().into()).collect();
    assert_eq!(roots, sub.roots.iter().map(ToString::to_string).collect::<Vec<_>>());
}

#[test]
fn canonical_exports_round_trip_and_are_deterministic() {
    let (g, _, report) = canonical();
    let goal = NodeId::Message(report.goal_message_ids[0]);
    for direction in [Direction::Backward, Direction::Forward, Direction::Both] {
        for depth in [Depth::Limited(0), Depth::Limited(2), Depth::Unlimited] {
            let sub = trace(&g, &goal, direction, depth).unwrap();
            check_wire_form(&sub);
            let again = trace(&g, &goal, direction, depth).unwrap();
            assert_eq!(export_json(&sub), export_json(&again));
            assert_eq!(export_dot(&sub), export_dot(&again));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn traces_equal_the_transitive_closure(seed in any::<u64>(), depth in prop::option::of(0u32..4)) {
        let records = random_dag(seed, 50);
        let g = build_graph(&records);
        check_against_closure(&records, &g, depth);
    }

    #[test]
    fn forward_and_backward_are_dual(seed in any::<u64>()) {
        let records = random_dag(seed, 30);
        let g = build_graph(&records);
        let ids: Vec<NodeId> = g.nodes().map(|n| n.id.clone()).collect();
        let back: BTreeMap<&NodeId, LineageSubgraph> =
            ids.iter().map(|id| (id, trace_back(&g, id, Depth::Unlimited).unwrap())).collect();
        for x in &ids {
            let forward = trace_forward(&g, x, Depth::Unlimited).unwrap();
            for y in &ids {
                prop_assert_eq!(forward.contains(y), back[y].contains(x));
            }
        }
    }

    #[test]
    fn replay_respects_every_edge_and_rebuilds_the_subgraph(seed in any::<u64>()) {
        let records = random_dag(seed, 40);
        let g = build_graph(&records);
        check_replay(&records, &g);
    }

    #[test]
    fn exports_round_trip_on_random_graphs(seed in any::<u64>(), depth in prop::option::of(0u32..3)) {
        let records = random_dag(seed, 25);
        let g = build_graph(&records);
        let limit = depth.map_or(Depth::Unlimited, Depth::Limited);
        for n in g.nodes() {
            let sub = trace(&g, &n.id, Direction::Both, limit).unwrap();
            check_wire_form(&sub);
            let dot = export_dot(&sub);
            prop_assert_eq!(dot.matches(" -> ").count(), sub.edges.len());
        }
    }
}
