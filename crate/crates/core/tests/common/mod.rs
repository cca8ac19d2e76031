#![allow(dead_code)]

pub mod headers;
pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use provtrace::bus::{Bus, BusConfig, JournalRecord};
use provtrace::scenario::{canonical_breakup_scenario, run, RunReport};
use provtrace::schema::{
    new_header, ManualClock, MessageEnvelope, MessageHeader, MessageId, ParentRef, Producer, SeededIds, Timestamp,
};
use provtrace::store::{NodeId, ProvenanceGraph, ProvenanceNode, StoreConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPOCH: i64 = 1_700_000_000_000;

pub fn canonical_journal(dir: &Path) -> (PathBuf, RunReport) {
    let path = dir.join("canonical.ndjson");
    let bus = Bus::open(&path, BusConfig::default()).unwrap();
    let report = run(&canonical_breakup_scenario(), &bus).unwrap();
    (path, report)
}

pub fn canonical_config() -> StoreConfig {
    StoreConfig { allow_dangling_parents: false, palette: canonical_breakup_scenario().palette() }
}

pub fn record(sequence: u64, header: MessageHeader) -> JournalRecord {
    let topic = header.data_type.clone();
    JournalRecord { sequence, envelope: MessageEnvelope::new(header, topic, sequence.to_be_bytes().to_vec()) }
}

/// A random DAG of messages: each cites a random subset of earlier messages
/// and of a small pool of external sources.
pub fn random_dag(seed: u64, max_nodes: usize) -> Vec<JournalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_nodes);
    let density = rng.gen_range(0.02..0.4);
    let mut ids = SeededIds::new(seed);
    let clock = ManualClock::stepping(Timestamp::from_unix_millis(EPOCH), 1);
    let subsystems = ["sensing", "processing", "decision"];
    let mut out: Vec<JournalRecord> = Vec::with_capacity(n);
    for i in 0..n {
        let mut parents = Vec::new();
        for earlier in &out {
            if rng.gen_bool(density) {
                let h = &earlier.envelope.header;
                parents.push(ParentRef::internal(h.message_id, h.data_type.clone()));
            }
        }
        if rng.gen_bool(0.3) {
            let source = format!("source-{}", rng.gen_range(0..3));
            let mut ext = ParentRef::external(source, "feed");
            if rng.gen_bool(0.5) {
                ext = ext.with_parameters([("window", rng.gen_range(0..2).to_string())]);
            }
            parents.push(ext);
        }
        let producer = Producer::new(format!("alg{}", i % 5), "1.0.0", subsystems[i % 3]);
        let header = new_header(producer, format!("dt{}", i % 7), parents, &mut ids, &clock).unwrap();
        out.push(record(i as u64 + 1, header));
    }
    out
}

pub fn build_graph(records: &[JournalRecord]) -> ProvenanceGraph {
    let mut g = ProvenanceGraph::new(canonical_config());
    for r in records {
        g.ingest(r).unwrap();
    }
    g
}

/// Oracle vertex key, computed from headers without the store's identifiers.
pub fn parent_key(p: &ParentRef) -> String {
    match p.message_id {
        Some(id) if p.is_internal() => id.to_string(),
        _ => {
            let params: BTreeMap<_, _> = p.parameters.clone().unwrap_or_default().into_iter().collect();
            format!("ext {} {:?}", p.source.as_deref().unwrap_or(""), params)
        }
    }
}

pub fn node_key(n: &ProvenanceNode) -> String {
    match &n.id {
        NodeId::Message(id) => id.to_string(),
        NodeId::ExternalSource { source, .. } => {
            let params: BTreeMap<_, _> = n.parameters.clone().into_iter().collect();
            format!("ext {source} {params:?}")
        }
    }
}

/// All-pairs shortest hop counts over child→parent edges, by Floyd-Warshall
/// on a dense matrix built directly from the headers.
pub struct Closure {
    pub keys: Vec<String>,
    index: BTreeMap<String, usize>,
    dist: Vec<Vec<u32>>,
}

pub const INF: u32 = u32::MAX / 4;

impl Closure {
    pub fn from_headers<'a>(headers: impl IntoIterator<Item = &'a MessageHeader>) -> Self {
        let headers: Vec<&MessageHeader> = headers.into_iter().collect();
        let mut keys: Vec<String> = Vec::new();
        let mut index = BTreeMap::new();
        let mut intern = |k: String, keys: &mut Vec<String>| -> usize {
            *index.entry(k.clone()).or_insert_with(|| {
                keys.push(k);
                keys.len() - 1
            })
        };
        let mut pairs = Vec::new();
        for h in &headers {
            let c = intern(h.message_id.to_string(), &mut keys);
            for p in &h.parents {
                let k = intern(parent_key(p), &mut keys);
                pairs.push((c, k));
            }
        }
        let n = keys.len();
        let mut dist = vec![vec![INF; n]; n];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = 0;
        }
        for (c, p) in pairs {
            dist[c][p] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                if dist[i][k] == INF {
                    continue;
                }
                for j in 0..n {
                    let via = dist[i][k] + dist[k][j];
                    if via < dist[i][j] {
                        dist[i][j] = via;
                    }
                }
            }
        }
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Self { keys, index, dist }
    }

    /// Hop count from `from` to `to` along child→parent edges.
    pub fn hops(&self, from: &str, to: &str) -> u32 {
        self.dist[self.index[from]][self.index[to]]
    }

    pub fn ancestors(&self, from: &str, depth: Option<u32>) -> BTreeMap<String, u32> {
        let i = self.index[from];
        (0..self.keys.len())
            .filter(|&j| self.dist[i][j] < INF && depth.is_none_or(|d| self.dist[i][j] <= d))
            .map(|j| (self.keys[j].clone(), self.dist[i][j]))
            .collect()
    }

    pub fn descendants(&self, from: &str, depth: Option<u32>) -> BTreeMap<String, u32> {
        let j = self.index[from];
        (0..self.keys.len())
            .filter(|&i| self.dist[i][j] < INF && depth.is_none_or(|d| self.dist[i][j] <= d))
            .map(|i| (self.keys[i].clone(), self.dist[i][j]))
            .collect()
    }
}

pub fn headers(records: &[JournalRecord]) -> Vec<&MessageHeader> {
    records.iter().map(|r| &r.envelope.header).collect()
}

pub fn key_set<'a>(nodes: impl IntoIterator<Item = &'a ProvenanceNode>) -> BTreeSet<String> {
    nodes.into_iter().map(node_key).collect()
}

pub fn message_id_of(records: &[JournalRecord], data_type: &str) -> MessageId {
    records.iter().find(|r| r.envelope.header.data_type == data_type).unwrap().envelope.header.message_id
}
