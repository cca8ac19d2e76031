//! Trace and replay checks against the brute-force closure.

use std::collections::{BTreeMap, BTreeSet};

use provtrace::bus::JournalRecord;
use provtrace::engine::{replay_order, trace, trace_back, trace_forward, Depth, Direction};
use provtrace::store::{NodeId, ProvenanceGraph};

use super::{canonical_config, headers, key_set, node_key, Closure};

/// Compares every trace from every node with the all-pairs closure.
pub fn check_against_closure(records: &[JournalRecord], g: &ProvenanceGraph, depth: Option<u32>) {
    let closure = Closure::from_headers(headers(records));
    let limit = depth.map_or(Depth::Unlimited, Depth::Limited);
    for focus in g.nodes() {
        let key = node_key(focus);
        let back = trace_back(g, &focus.id, limit).unwrap();
        let forward = trace_forward(g, &focus.id, limit).unwrap();
        let both = trace(g, &focus.id, Direction::Both, limit).unwrap();

        let want_back = closure.ancestors(&key, depth);
        let want_forward = closure.descendants(&key, depth);
        let got_back: BTreeMap<String, u32> = back.nodes.iter().map(|n| (node_key(n), back.depth_of[&n.id])).collect();
        let got_forward: BTreeMap<String, u32> =
            forward.nodes.iter().map(|n| (node_key(n), forward.depth_of[&n.id])).collect();
        assert_eq!(got_back, want_back, "backward from {key}");
        assert_eq!(got_forward, want_forward, "forward from {key}");

        let mut want_both = want_back.clone();
        for (k, d) in &want_forward {
            let e = want_both.entry(k.clone()).or_insert(*d);
            *e = (*e).min(*d);
        }
        let got_both: BTreeMap<String, u32> = both.nodes.iter().map(|n| (node_key(n), both.depth_of[&n.id])).collect();
        assert_eq!(got_both, want_both, "both from {key}");

        for sub in [&back, &forward, &both] {
            assert_eq!(sub.nodes[0].id, focus.id);
            let ids: BTreeSet<&NodeId> = sub.nodes.iter().map(|n| &n.id).collect();
            assert_eq!(ids.len(), sub.nodes.len());
            let induced: Vec<_> = g
                .edges()
                .iter()
                .filter(|e| ids.contains(&e.child) && ids.contains(&e.parent))
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let got: Vec<_> = sub.edges.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            assert_eq!(got, induced);
            let roots: BTreeSet<&NodeId> = sub.roots.iter().collect();
            let parentless: BTreeSet<&NodeId> = ids.iter().copied().filter(|id| g.parents_of(id).is_empty()).collect();
            assert_eq!(roots, parentless);
            for w in sub.nodes.windows(2) {
                assert!(sub.depth_of[&w[0].id] <= sub.depth_of[&w[1].id], "breadth-first order");
            }
        }

        let truncated: BTreeSet<&NodeId> = back
            .nodes
            .iter()
            .filter(|n| g.parents_of(&n.id).iter().any(|p| !back.contains(&p.id)))
            .map(|n| &n.id)
            .collect();
        assert_eq!(back.truncated.iter().collect::<BTreeSet<_>>(), truncated);
        if depth.is_none() {
            assert!(back.truncated.is_empty() && forward.truncated.is_empty());
        }
    }
}

/// Replays each message's lineage and re-ingests it in plan order.
pub fn check_replay(records: &[JournalRecord], g: &ProvenanceGraph) {
    for focus in g.messages() {
        let sub = trace_back(g, &focus.id, Depth::Unlimited).unwrap();
        let plan = replay_order(&sub).unwrap();
        let position: BTreeMap<NodeId, usize> =
            plan.message_ids().into_iter().enumerate().map(|(i, id)| (NodeId::Message(id), i)).collect();
        assert_eq!(position.len(), sub.nodes.iter().filter(|n| n.is_message()).count());
        for e in &sub.edges {
            if let Some(p) = position.get(&e.parent) {
                assert!(p < &position[&e.child], "parent after child in plan");
            }
        }
        // Re-ingesting in plan order reproduces the subgraph.
        let by_id: BTreeMap<_, _> = records.iter().map(|r| (r.envelope.header.message_id, r)).collect();
        let mut fresh = ProvenanceGraph::new(canonical_config());
        for (i, id) in plan.message_ids().into_iter().enumerate() {
            let mut r = (*by_id[&id]).clone();
            r.sequence = i as u64 + 1;
            fresh.ingest(&r).unwrap();
        }
        assert_eq!(key_set(fresh.nodes()), key_set(sub.nodes.iter()));
        let fresh_edges: BTreeSet<_> = fresh.edges().iter().cloned().collect();
        let sub_edges: BTreeSet<_> = sub.edges.iter().cloned().collect();
        assert_eq!(fresh_edges, sub_edges);
    }
}
