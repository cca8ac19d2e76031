mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use common::{build_graph, canonical_config, node_key, parent_key, random_dag, record};
use proptest::prelude::*;
use provtrace::bus::journal_replay;
use provtrace::schema::{new_header, ManualClock, MessageId, ParentRef, Producer, SeededIds, Timestamp};
use provtrace::store::{
    IngestError, NodeCategory, NodeId, ProvenanceGraph, ProvenanceStore, StoreConfig, EXTERNAL_COLOR, UNKNOWN_COLOR,
};

fn header(
    ids: &mut SeededIds,
    alg: &str,
    subsystem: &str,
    data_type: &str,
    parents: Vec<ParentRef>,
) -> provtrace::schema::MessageHeader {
    let clock = ManualClock::new(Timestamp::from_unix_millis(common::EPOCH));
    new_header(Producer::new(alg, "1.0.0", subsystem), data_type, parents, ids, &clock).unwrap()
}

#[test]
fn ingest_root_then_two_parent_child() {
    let mut ids = SeededIds::new(1);
    let mut g = ProvenanceGraph::new(canonical_config());
    let tracks = header(&mut ids, "SensorTasking", "sensing", "tracks", vec![]);
    let obs = header(&mut ids, "SensorTasking", "sensing", "observations", vec![]);
    let d = g.ingest(&record(1, tracks.clone())).unwrap();
    assert_eq!((d.nodes_added.len(), d.edges_added), (1, 0));
    g.ingest(&record(2, obs.clone())).unwrap();
    let uct = header(
        &mut ids,
        "UCTProcessing",
        "processing",
        "candidate_track",
        vec![ParentRef::internal(tracks.message_id, "tracks"), ParentRef::internal(obs.message_id, "observations")],
    );
    let d = g.ingest(&record(3, uct.clone())).unwrap();
    assert_eq!((d.nodes_added, d.edges_added), (vec![NodeId::Message(uct.message_id)], 2));
    assert_eq!(g.high_water_mark(), 3);
    assert!(g.parents_of(&NodeId::Message(tracks.message_id)).is_empty());
    let parents: Vec<_> = g.parents_of(&NodeId::Message(uct.message_id)).iter().map(|n| n.id.clone()).collect();
    assert_eq!(parents, [NodeId::Message(tracks.message_id), NodeId::Message(obs.message_id)]);
    assert_eq!(g.header_of(uct.message_id).unwrap(), uct);
}

#[test]
fn identical_external_calls_share_one_node() {
    let mut ids = SeededIds::new(2);
    let mut g = ProvenanceGraph::new(canonical_config());
    let call = || ParentRef::external("observations-api", "observations").with_parameters([("window", "24h")]);
    let a = header(&mut ids, "A", "processing", "x", vec![call()]);
    let b = header(&mut ids, "B", "processing", "y", vec![call()]);
    let c = header(
        &mut ids,
        "C",
        "processing",
        "z",
        vec![ParentRef::external("observations-api", "observations").with_parameters([("window", "48h")])],
    );
    let d1 = g.ingest(&record(1, a)).unwrap();
    assert_eq!((d1.nodes_added.len(), d1.edges_added), (2, 1));
    let d2 = g.ingest(&record(2, b)).unwrap();
    assert_eq!((d2.nodes_added.len(), d2.edges_added), (1, 1), "no new external node");
    let d3 = g.ingest(&record(3, c)).unwrap();
    assert_eq!(d3.nodes_added.len(), 2, "different parameters, different source node");

    let ext = NodeId::external("observations-api", Some(&[("window".to_string(), "24h".to_string())].into()));
    let node = g.node(&ext).unwrap();
    assert_eq!(node.category, NodeCategory::ExternalSource);
    assert_eq!(node.subsystem_color_key, EXTERNAL_COLOR);
    assert_eq!(g.children_of(&ext).len(), 2);
    assert_eq!(NodeId::external("s", None), NodeId::external("s", Some(&BTreeMap::new())));
    assert_eq!(ext.to_string().parse::<NodeId>().unwrap(), ext);
}

#[test]
fn ordering_and_duplicates_are_enforced() {
    let mut ids = SeededIds::new(3);
    let mut g = ProvenanceGraph::new(canonical_config());
    let a = header(&mut ids, "A", "processing", "x", vec![]);
    assert_eq!(g.ingest(&record(2, a.clone())).unwrap_err(), IngestError::OutOfOrderIngest { expected: 1, found: 2 });
    g.ingest(&record(1, a.clone())).unwrap();
    assert!(matches!(g.ingest(&record(1, a.clone())), Err(IngestError::AlreadyIngested { .. })));
    assert_eq!(g.ingest(&record(2, a.clone())).unwrap_err(), IngestError::DuplicateMessage(a.message_id));
    assert_eq!(g.node_count(), 1);
}

#[test]
fn dangling_parents_become_unresolved_placeholders() {
    let mut ids = SeededIds::new(4);
    let ghost = MessageId::from_u128(0xdead);
    let child = header(&mut ids, "A", "processing", "x", vec![ParentRef::internal(ghost, "ghost")]);

    let mut strict = ProvenanceGraph::new(canonical_config());
    assert_eq!(
        strict.ingest(&record(1, child.clone())).unwrap_err(),
        IngestError::DanglingParent { sequence: 1, parent: ghost }
    );

    let mut relaxed = ProvenanceGraph::new(StoreConfig { allow_dangling_parents: true, ..canonical_config() });
    let d = relaxed.ingest(&record(1, child)).unwrap();
    assert_eq!(d.unresolved, vec![ghost]);
    let placeholder = relaxed.node(&NodeId::Message(ghost)).unwrap();
    assert!(placeholder.unresolved);
    assert_eq!(placeholder.subsystem_color_key, UNKNOWN_COLOR);
    assert!(relaxed.messages().all(|n| !n.unresolved));
}

#[test]
fn palette_colors_and_unknown_subsystems() {
    let mut ids = SeededIds::new(5);
    let mut g = ProvenanceGraph::new(canonical_config());
    g.ingest(&record(1, header(&mut ids, "A", "sensing", "x", vec![]))).unwrap();
    g.ingest(&record(2, header(&mut ids, "B", "payroll", "y", vec![]))).unwrap();
    let keys: Vec<_> = g.messages().map(|n| n.subsystem_color_key.as_str()).collect();
    assert_eq!(keys, ["orange", UNKNOWN_COLOR]);
}

#[test]
fn canonical_observation_source_feeds_the_uct_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = common::canonical_journal(dir.path());
    let g = ProvenanceGraph::rebuild(journal_replay(&path).unwrap(), canonical_config()).unwrap();
    let source = g
        .nodes()
        .find(|n| matches!(&n.id, NodeId::ExternalSource { source, .. } if source == "observations-api"))
        .unwrap();
    let children: Vec<_> = g.children_of(&source.id).iter().map(|n| n.data_type.clone()).collect();
    assert_eq!(children, ["candidate_track", "uct_list", "correlation_report", "residuals"]);
    assert!(g.children_of(&source.id).iter().all(|n| n.producer.as_ref().unwrap().algorithm == "UCTProcessing"));
}

#[test]
fn rebuild_of_empty_and_repeated_rebuilds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.ndjson");
    std::fs::write(&path, b"").unwrap();
    let g = ProvenanceGraph::rebuild(journal_replay(&path).unwrap(), canonical_config()).unwrap();
    assert_eq!((g.node_count(), g.edge_count(), g.high_water_mark()), (0, 0, 0));

    let (path, _) = common::canonical_journal(dir.path());
    let a = ProvenanceGraph::rebuild(journal_replay(&path).unwrap(), canonical_config()).unwrap();
    let b = ProvenanceGraph::rebuild(journal_replay(&path).unwrap(), canonical_config()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.edges(), b.edges());
}

#[test]
fn snapshots_are_stable_while_ingesting() {
    let records = random_dag(6, 30);
    let store = ProvenanceStore::new(canonical_config());
    store.ingest_batch(&records[..records.len() / 2]).unwrap();
    let before = store.snapshot();
    let hwm = before.high_water_mark();
    store.ingest_batch(&records[records.len() / 2..]).unwrap();
    assert_eq!(before.high_water_mark(), hwm);
    assert_eq!(store.snapshot().high_water_mark(), records.len() as u64);
    assert_eq!(*store.snapshot(), build_graph(&records));
}

/// Topological order exists iff the graph is acyclic.
fn is_acyclic(g: &ProvenanceGraph) -> bool {
    let mut remaining: HashMap<NodeId, usize> = g.nodes().map(|n| (n.id.clone(), g.parents_of(&n.id).len())).collect();
    let mut ready: Vec<NodeId> = remaining.iter().filter(|(_, &d)| d == 0).map(|(k, _)| k.clone()).collect();
    let mut seen = 0;
    while let Some(n) = ready.pop() {
        seen += 1;
        for child in g.children_of(&n) {
            let d = remaining.get_mut(&child.id).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(child.id.clone());
            }
        }
    }
    seen == g.node_count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn adjacency_matches_a_scan_of_all_headers(seed in any::<u64>()) {
        let records = random_dag(seed, 40);
        let g = build_graph(&records);

        for r in &records {
            let h = &r.envelope.header;
            let id = NodeId::Message(h.message_id);
            let got: Vec<String> = g.parents_of(&id).iter().map(|n| node_key(n)).collect();
            let want: Vec<String> = h.parents.iter().map(parent_key).collect();
            prop_assert_eq!(got, want);
            let labels: Vec<&str> = g.parent_edges(&id).map(|e| e.data_type.as_str()).collect();
            let want_labels: Vec<&str> = h.parents.iter().map(|p| p.data_type.as_str()).collect();
            prop_assert_eq!(labels, want_labels);
        }

        let mut expected_children: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in &records {
            for p in &r.envelope.header.parents {
                expected_children.entry(parent_key(p)).or_default().push(r.envelope.header.message_id.to_string());
            }
        }
        for n in g.nodes() {
            let got: Vec<String> = g.children_of(&n.id).iter().map(|c| node_key(c)).collect();
            let want = expected_children.get(&node_key(n)).cloned().unwrap_or_default();
            prop_assert_eq!(got, want);
            prop_assert_eq!(n.category == NodeCategory::Message, n.id.as_message().is_some());
        }

        let distinct_sources: BTreeSet<String> = records
            .iter()
            .flat_map(|r| r.envelope.header.external_parents().map(parent_key))
            .collect();
        prop_assert_eq!(
            g.nodes().filter(|n| n.category == NodeCategory::ExternalSource).count(),
            distinct_sources.len()
        );
        prop_assert_eq!(g.edge_count(), records.iter().map(|r| r.envelope.header.parents.len()).sum::<usize>());
        for e in g.edges() {
            prop_assert!(g.contains(&e.child) && g.contains(&e.parent));
            prop_assert!(e.child.as_message().is_some());
            prop_assert_ne!(&e.child, &e.parent);
        }
        prop_assert!(is_acyclic(&g));
        prop_assert_eq!(g.high_water_mark(), records.len() as u64);
    }

    #[test]
    fn rebuild_from_journal_equals_live_ingest(seed in any::<u64>()) {
        let records = random_dag(seed, 40);
        let live = build_graph(&records);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.ndjson");
        for r in &records {
            provtrace::bus::journal_append(&path, r).unwrap();
        }
        let rebuilt = ProvenanceGraph::rebuild(journal_replay(&path).unwrap(), canonical_config()).unwrap();
        prop_assert_eq!(&rebuilt, &live);
        let nodes_a: BTreeSet<String> = live.nodes().map(|n| format!("{n:?}")).collect();
        let nodes_b: BTreeSet<String> = rebuilt.nodes().map(|n| format!("{n:?}")).collect();
        prop_assert_eq!(nodes_a, nodes_b);
    }
}
