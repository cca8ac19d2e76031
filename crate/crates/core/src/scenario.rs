//! Deterministic driver for data/process/goal pipelines.
//!
//! A [`ScenarioSpec`] lists processes by the data types they consume and
//! produce. Running it publishes one message per produced data type per
//! activation, citing exactly the messages and external sources that fed the
//! activation, so the resulting lineage graph is known in advance.
//!
//! Activation rule: a process keeps a FIFO queue per consumed internal data
//! type and activates once every queue is non-empty, taking the head of each.
//! Each activation is repeated `fan_out` times with the same inputs. The root
//! process has no internal inputs and activates `fan_out` times at start.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bus::{Bus, BusError, StartAt, TopicFilter};
use crate::json::{self, ParseError, ParseMode};
use crate::schema::{
    new_header, validate_topic, Clock, HeaderError, IdSource, ManualClock, MessageEnvelope, MessageId, Parameters,
    ParentKind, ParentRef, Producer, SeededIds, SubsystemRegistry, Timestamp,
};
use crate::store::Palette;

/// 2025-02-01T00:00:00.000Z, the start of simulated time.
pub const SIMULATION_EPOCH_MILLIS: i64 = 1_738_368_000_000;

/// Placeholder in external parameter values replaced by the activation index.
pub const ACTIVATION_PLACEHOLDER: &str = "{activation}";

const PAYLOAD_STREAM: u64 = 0x5eed_0000_0000_0001;
const APPEND_SALT: u64 = 0xa5a5_5a5a_d1b5_4a33;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub processes: Vec<ProcessSpec>,
    pub external_sources: Vec<ExternalSourceSpec>,
    pub subsystem_palette: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalSourceSpec {
    pub source: String,
    pub data_type: String,
    #[serde(default)]
    pub parameters: Parameters,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub algorithm: String,
    #[serde(default = "default_version")]
    pub version: String,
    pub subsystem: String,
    pub consumes: Vec<InputSpec>,
    pub produces: Vec<String>,
    #[serde(default = "default_fan_out")]
    pub fan_out: u32,
    /// Outputs of goal processes are reported as goal messages.
    #[serde(default)]
    pub goal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub data_type: String,
    #[serde(default = "default_kind")]
    pub kind: ParentKind,
    /// Name of a declared external source; required for external inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

fn default_version() -> String {
    "1.0.0".into()
}

fn default_fan_out() -> u32 {
    1
}

fn default_kind() -> ParentKind {
    ParentKind::Internal
}

impl InputSpec {
    pub fn internal(data_type: &str) -> Self {
        Self { data_type: data_type.into(), kind: ParentKind::Internal, source: None }
    }

    pub fn external(source: &str, data_type: &str) -> Self {
        Self { data_type: data_type.into(), kind: ParentKind::External, source: Some(source.into()) }
    }
}

impl ProcessSpec {
    fn internal_inputs(&self) -> impl Iterator<Item = &InputSpec> {
        self.consumes.iter().filter(|i| i.kind == ParentKind::Internal)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario is cyclic through process `{0}`")]
    Cyclic(String),
    #[error("process `{process}` can never activate: nothing produces `{data_type}`")]
    SpecUnsatisfiable { process: String, data_type: String },
    #[error("malformed scenario file: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Header(#[from] HeaderError),
    #[error("scenario worker for `{0}` panicked")]
    Worker(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// Validated execution plan derived from a spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioPlan {
    /// Process indices in dependency order.
    pub order: Vec<usize>,
    /// Activations per process.
    pub activations: Vec<u64>,
    /// Producing process of each data type.
    pub producer_of: BTreeMap<String, usize>,
    pub message_count: u64,
}

impl ScenarioSpec {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ScenarioError> {
        Ok(json::decode(bytes, ParseMode::Strict)?)
    }

    pub fn to_json(&self) -> String {
        json::to_canonical_string(self)
    }

    pub fn palette(&self) -> Palette {
        Palette(self.subsystem_palette.clone())
    }

    pub fn subsystems(&self) -> SubsystemRegistry {
        SubsystemRegistry::new(self.subsystem_palette.keys().cloned())
    }

    fn external(&self, source: &str) -> Option<&ExternalSourceSpec> {
        self.external_sources.iter().find(|e| e.source == source)
    }

    /// Checks the scenario and computes activation counts.
    pub fn plan(&self) -> Result<ScenarioPlan, ScenarioError> {
        if self.name.is_empty() {
            return Err(invalid("scenario name is empty"));
        }
        if self.processes.is_empty() {
            return Err(invalid("scenario has no processes"));
        }
        let mut sources = BTreeSet::new();
        for ext in &self.external_sources {
            if ext.source.is_empty() || ext.data_type.is_empty() {
                return Err(invalid("external sources need a name and a data type"));
            }
            if !sources.insert(ext.source.as_str()) {
                return Err(invalid(format!("external source `{}` declared twice", ext.source)));
            }
        }

        let mut producer_of = BTreeMap::new();
        for (i, p) in self.processes.iter().enumerate() {
            if p.algorithm.is_empty() {
                return Err(invalid(format!("process #{i} has no algorithm name")));
            }
            if p.subsystem.is_empty() {
                return Err(invalid(format!("process `{}` has no subsystem", p.algorithm)));
            }
            if !self.subsystem_palette.is_empty() && !self.subsystem_palette.contains_key(&p.subsystem) {
                return Err(invalid(format!(
                    "process `{}`: subsystem `{}` has no palette entry",
                    p.algorithm, p.subsystem
                )));
            }
            if p.produces.is_empty() {
                return Err(invalid(format!("process `{}` produces nothing", p.algorithm)));
            }
            if p.fan_out == 0 {
                return Err(invalid(format!("process `{}` has fan_out 0", p.algorithm)));
            }
            for dt in &p.produces {
                if validate_topic(dt).is_err() {
                    return Err(invalid(format!("data type `{dt}` is not a valid topic name")));
                }
                if producer_of.insert(dt.clone(), i).is_some() {
                    return Err(invalid(format!("data type `{dt}` has more than one producer")));
                }
            }
            let mut seen = BTreeSet::new();
            for input in &p.consumes {
                if input.data_type.is_empty() {
                    return Err(invalid(format!("process `{}` consumes an empty data type", p.algorithm)));
                }
                let key = (input.kind, input.source.clone(), input.data_type.clone());
                if !seen.insert(key) {
                    return Err(invalid(format!("process `{}` lists input `{}` twice", p.algorithm, input.data_type)));
                }
                if input.kind == ParentKind::External {
                    let ext = input
                        .source
                        .as_deref()
                        .and_then(|s| self.external(s))
                        .ok_or_else(|| invalid(format!("process `{}`: undeclared external source", p.algorithm)))?;
                    if ext.data_type != input.data_type {
                        return Err(invalid(format!(
                            "process `{}`: source `{}` provides `{}`, not `{}`",
                            p.algorithm, ext.source, ext.data_type, input.data_type
                        )));
                    }
                } else if input.source.is_some() {
                    return Err(invalid(format!("process `{}`: internal input with a source", p.algorithm)));
                }
            }
        }
        let roots: Vec<_> = self.processes.iter().filter(|p| p.internal_inputs().next().is_none()).collect();
        if roots.len() != 1 {
            return Err(invalid(format!("expected exactly one root process, found {}", roots.len())));
        }
        for p in &self.processes {
            for input in p.internal_inputs() {
                if !producer_of.contains_key(&input.data_type) {
                    return Err(ScenarioError::SpecUnsatisfiable {
                        process: p.algorithm.clone(),
                        data_type: input.data_type.clone(),
                    });
                }
            }
        }

        // Kahn over process dependencies, lowest index first.
        let n = self.processes.len();
        let mut pending: Vec<usize> = self.processes.iter().map(|p| p.internal_inputs().count()).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for (j, q) in self.processes.iter().enumerate() {
                for input in q.internal_inputs() {
                    if producer_of[&input.data_type] == i {
                        pending[j] -= 1;
                        if pending[j] == 0 {
                            ready.insert(j);
                        }
                    }
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|i| !order.contains(i)).unwrap_or_default();
            return Err(ScenarioError::Cyclic(self.processes[stuck].algorithm.clone()));
        }

        let mut activations = vec![0u64; n];
        for &i in &order {
            let p = &self.processes[i];
            let batches =
                p.internal_inputs().map(|input| activations[producer_of[&input.data_type]]).min().unwrap_or(1);
            activations[i] = batches.saturating_mul(u64::from(p.fan_out));
        }
        let message_count = self.processes.iter().zip(&activations).map(|(p, a)| a * p.produces.len() as u64).sum();
        Ok(ScenarioPlan { order, activations, producer_of, message_count })
    }
}

/// The built-in breakup investigation: a task request triggers breakup
/// screening against the catalog, sensor tasking yields tracks and
/// observations, UCT processing turns those into four products, orbit
/// determination refines the candidate track and the goal process declares a
/// new object.
///
/// UCT output names are illustrative; only their number is fixed.
pub fn canonical_breakup_scenario() -> ScenarioSpec {
    let process = |algorithm: &str, subsystem: &str, consumes: Vec<InputSpec>, produces: &[&str]| ProcessSpec {
        algorithm: algorithm.into(),
        version: "1.0.0".into(),
        subsystem: subsystem.into(),
        consumes,
        produces: produces.iter().map(|s| s.to_string()).collect(),
        fan_out: 1,
        goal: false,
    };
    let mut discovery = process(
        "ObjectDiscovery",
        "decision",
        vec![InputSpec::internal("state_vector"), InputSpec::internal("breakup_alert")],
        &["new_object_discovered"],
    );
    discovery.goal = true;
    ScenarioSpec {
        name: "breakup-object-discovery".into(),
        seed: 42,
        processes: vec![
            process("TaskRequester", "decision", vec![], &["task_request"]),
            process(
                "BreakupScreening",
                "processing",
                vec![InputSpec::internal("task_request"), InputSpec::external("catalog-service", "catalog")],
                &["breakup_alert"],
            ),
            process(
                "SensorTasking",
                "sensing",
                vec![InputSpec::internal("breakup_alert")],
                &["tracks", "observations"],
            ),
            process(
                "UCTProcessing",
                "processing",
                vec![
                    InputSpec::internal("tracks"),
                    InputSpec::internal("observations"),
                    InputSpec::external("observations-api", "observations"),
                ],
                &["candidate_track", "uct_list", "correlation_report", "residuals"],
            ),
            process(
                "OrbitDetermination",
                "processing",
                vec![InputSpec::internal("candidate_track")],
                &["state_vector"],
            ),
            discovery,
        ],
        external_sources: vec![
            ExternalSourceSpec {
                source: "observations-api".into(),
                data_type: "observations".into(),
                parameters: [("endpoint", "/v2/observations"), ("window", "post-breakup")]
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
            },
            ExternalSourceSpec {
                source: "catalog-service".into(),
                data_type: "catalog".into(),
                parameters: [("query", "active-rso")]
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
            },
        ],
        subsystem_palette: [("sensing", "orange"), ("processing", "yellow"), ("decision", "blue")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    }
}

/// How the processes are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriveMode {
    /// One thread, fixed activation order: byte-identical journals per seed.
    #[default]
    Sequential,
    /// One thread per process, each a bus subscriber. Graph shape is the same
    /// as sequential; identifiers and journal order are not.
    Concurrent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub message_count: u64,
    pub first_sequence: u64,
    pub last_sequence: u64,
    pub goal_message_ids: Vec<MessageId>,
    pub messages_by_data_type: BTreeMap<String, u64>,
    pub journal_path: Option<PathBuf>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        json::to_canonical_string(self)
    }
}

/// Runs `spec` against `bus` with its own seed.
pub fn run(spec: &ScenarioSpec, bus: &Bus) -> Result<RunReport, ScenarioError> {
    run_with(spec, bus, DriveMode::Sequential)
}

pub fn run_with(spec: &ScenarioSpec, bus: &Bus, mode: DriveMode) -> Result<RunReport, ScenarioError> {
    let plan = spec.plan()?;
    for p in &spec.processes {
        for dt in &p.produces {
            match bus.topics().into_iter().find(|t| &t.name == dt) {
                Some(t) if &t.data_type == dt => {}
                Some(t) => {
                    return Err(
                        BusError::TopicTypeMismatch { topic: t.name, expected: t.data_type, found: dt.clone() }.into()
                    )
                }
                None => {
                    bus.register_topic(dt.clone(), dt.clone())?;
                }
            }
        }
    }
    let first_sequence = bus.newest_sequence() + 1;
    let clock = Arc::new(ManualClock::stepping(Timestamp::from_unix_millis(SIMULATION_EPOCH_MILLIS), 1));

    // Appending to a non-empty bus salts the streams so ids stay unique.
    let seed = spec.seed ^ (first_sequence - 1).wrapping_mul(APPEND_SALT);
    let published = match mode {
        DriveMode::Sequential => drive_sequential(spec, seed, &plan, bus, clock.as_ref())?,
        DriveMode::Concurrent => drive_concurrent(spec, seed, &plan, bus, clock)?,
    };

    let mut goal_message_ids = Vec::new();
    let mut messages_by_data_type = BTreeMap::new();
    let mut last_sequence = first_sequence.saturating_sub(1);
    for (sequence, process, header_id, data_type) in &published {
        *messages_by_data_type.entry(data_type.clone()).or_insert(0u64) += 1;
        if spec.processes[*process].goal {
            goal_message_ids.push(*header_id);
        }
        last_sequence = last_sequence.max(*sequence);
    }
    Ok(RunReport {
        scenario: spec.name.clone(),
        seed: spec.seed,
        message_count: published.len() as u64,
        first_sequence,
        last_sequence,
        goal_message_ids,
        messages_by_data_type,
        journal_path: None,
    })
}

/// (sequence, process index, message id, data type) per published message.
type Published = Vec<(u64, usize, MessageId, String)>;

/// Per-process activation state shared by both drive modes.
struct Worker<'a> {
    spec: &'a ScenarioSpec,
    index: usize,
    queues: Vec<VecDeque<MessageId>>,
    remaining: u64,
    activation: u64,
}

impl<'a> Worker<'a> {
    fn new(spec: &'a ScenarioSpec, index: usize, activations: u64) -> Self {
        let inputs = spec.processes[index].internal_inputs().count();
        Self { spec, index, queues: vec![VecDeque::new(); inputs], remaining: activations, activation: 0 }
    }

    fn process(&self) -> &'a ProcessSpec {
        &self.spec.processes[self.index]
    }

    fn offer(&mut self, data_type: &str, id: MessageId) {
        let process = self.process();
        for (q, input) in process.internal_inputs().enumerate() {
            if input.data_type == data_type {
                self.queues[q].push_back(id);
            }
        }
    }

    /// Takes one input set if every queue has a message and activations remain.
    fn take_inputs(&mut self) -> Option<Vec<MessageId>> {
        if self.remaining == 0 || self.queues.iter().any(VecDeque::is_empty) {
            return None;
        }
        Some(self.queues.iter_mut().map(|q| q.pop_front().expect("checked non-empty")).collect())
    }

    /// Publishes one activation (one message per produced data type).
    fn activate(
        &mut self,
        inputs: &[MessageId],
        bus: &Bus,
        clock: &dyn Clock,
        ids: &mut dyn IdSource,
        payloads: &mut ChaCha8Rng,
    ) -> Result<Published, ScenarioError> {
        let process = self.process();
        let mut parents: Vec<ParentRef> = process
            .internal_inputs()
            .zip(inputs)
            .map(|(input, id)| ParentRef::internal(*id, input.data_type.clone()))
            .collect();
        for input in process.consumes.iter().filter(|i| i.kind == ParentKind::External) {
            let source = input.source.as_deref().unwrap_or_default();
            let ext = self.spec.external(source).expect("validated external source");
            let activation = self.activation.to_string();
            let params: Parameters = ext
                .parameters
                .iter()
                .map(|(k, v)| (k.clone(), v.replace(ACTIVATION_PLACEHOLDER, &activation)))
                .collect();
            parents.push(ParentRef::external(source, input.data_type.clone()).with_parameters(params));
        }
        let producer = Producer::new(process.algorithm.clone(), process.version.clone(), process.subsystem.clone());

        let mut out = Vec::with_capacity(process.produces.len());
        for data_type in &process.produces {
            let header = new_header(producer.clone(), data_type.clone(), parents.clone(), ids, clock)?;
            let id = header.message_id;
            let mut payload = vec![0u8; payloads.gen_range(16..=48)];
            payloads.fill_bytes(&mut payload);
            let sequence = bus.publish(MessageEnvelope::new(header, data_type.clone(), payload))?;
            out.push((sequence, self.index, id, data_type.clone()));
        }
        self.activation += 1;
        self.remaining -= 1;
        Ok(out)
    }
}

fn drive_sequential(
    spec: &ScenarioSpec,
    seed: u64,
    plan: &ScenarioPlan,
    bus: &Bus,
    clock: &dyn Clock,
) -> Result<Published, ScenarioError> {
    // One identifier stream and one payload stream for the whole run keeps
    // the journal a pure function of the seed.
    let mut ids = SeededIds::new(seed);
    let mut payloads = ChaCha8Rng::seed_from_u64(seed ^ PAYLOAD_STREAM);
    let mut workers: Vec<Worker> =
        (0..spec.processes.len()).map(|i| Worker::new(spec, i, plan.activations[i])).collect();

    let mut published = Vec::new();
    for &i in &plan.order {
        loop {
            let inputs = if workers[i].queues.is_empty() {
                (workers[i].remaining > 0).then(Vec::new)
            } else {
                workers[i].take_inputs()
            };
            let Some(inputs) = inputs else { break };
            for _ in 0..spec.processes[i].fan_out {
                if workers[i].remaining == 0 {
                    break;
                }
                for (seq, process, id, dt) in workers[i].activate(&inputs, bus, clock, &mut ids, &mut payloads)? {
                    for w in workers.iter_mut() {
                        w.offer(&dt, id);
                    }
                    published.push((seq, process, id, dt));
                }
            }
        }
    }
    Ok(published)
}

fn drive_concurrent(
    spec: &ScenarioSpec,
    seed: u64,
    plan: &ScenarioPlan,
    bus: &Bus,
    clock: Arc<ManualClock>,
) -> Result<Published, ScenarioError> {
    let start = bus.newest_sequence() + 1;
    let mut subscriptions = Vec::with_capacity(spec.processes.len());
    for p in &spec.processes {
        let topics: BTreeSet<String> = p.internal_inputs().map(|i| i.data_type.clone()).collect();
        let sub = if topics.is_empty() {
            None
        } else {
            Some(bus.subscribe(TopicFilter::AnyOf(topics), StartAt::Sequence(start))?)
        };
        subscriptions.push(sub);
    }

    thread::scope(|scope| {
        let handles: Vec<_> = subscriptions
            .into_iter()
            .enumerate()
            .map(|(i, sub)| {
                let clock = Arc::clone(&clock);
                let activations = plan.activations[i];
                let handle = scope.spawn(move || -> Result<Published, ScenarioError> {
                    let stream = seed ^ ((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                    let mut worker = Worker::new(spec, i, activations);
                    let mut ids = SeededIds::new(stream);
                    let mut payloads = ChaCha8Rng::seed_from_u64(stream ^ PAYLOAD_STREAM);
                    let fan_out = spec.processes[i].fan_out;
                    let mut published = Vec::new();
                    let Some(mut sub) = sub else {
                        while worker.remaining > 0 {
                            published.extend(worker.activate(&[], bus, clock.as_ref(), &mut ids, &mut payloads)?);
                        }
                        return Ok(published);
                    };
                    while worker.remaining > 0 {
                        let record =
                            sub.recv().ok_or_else(|| ScenarioError::Worker(worker.process().algorithm.clone()))?;
                        worker.offer(&record.envelope.header.data_type, record.envelope.header.message_id);
                        while let Some(inputs) = worker.take_inputs() {
                            for _ in 0..fan_out {
                                if worker.remaining == 0 {
                                    break;
                                }
                                published.extend(worker.activate(
                                    &inputs,
                                    bus,
                                    clock.as_ref(),
                                    &mut ids,
                                    &mut payloads,
                                )?);
                            }
                        }
                    }
                    bus.unsubscribe(sub);
                    Ok(published)
                });
                (spec.processes[i].algorithm.clone(), handle)
            })
            .collect();

        let mut all = Vec::new();
        for (name, handle) in handles {
            all.extend(handle.join().map_err(|_| ScenarioError::Worker(name))??);
        }
        all.sort_by_key(|(seq, ..)| *seq);
        Ok(all)
    })
}

/// Random layered pipeline with at most `max_messages` messages per run.
/// Used to exercise the store and engine on shapes beyond the canonical one.
pub fn random_scenario(seed: u64, max_messages: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsystems = ["sensing", "processing", "decision"];
    let externals: Vec<ExternalSourceSpec> = (0..rng.gen_range(1..=3))
        .map(|i| {
            let mut parameters = Parameters::new();
            parameters.insert("region".into(), format!("r{i}"));
            if rng.gen_bool(0.5) {
                parameters.insert("request".into(), ACTIVATION_PLACEHOLDER.into());
            }
            ExternalSourceSpec { source: format!("ext-{i}"), data_type: format!("ext_data_{i}"), parameters }
        })
        .collect();

    let process_count = rng.gen_range(2..=8);
    let mut produced: Vec<String> = Vec::new();
    let mut processes = Vec::with_capacity(process_count);
    for p in 0..process_count {
        let mut consumes = Vec::new();
        if p > 0 {
            let k = rng.gen_range(1..=3.min(produced.len()));
            let mut picked = BTreeSet::new();
            while picked.len() < k {
                picked.insert(rng.gen_range(0..produced.len()));
            }
            consumes.extend(picked.into_iter().map(|t| InputSpec::internal(&produced[t])));
        }
        if rng.gen_bool(0.4) {
            let e = &externals[rng.gen_range(0..externals.len())];
            consumes.push(InputSpec::external(&e.source, &e.data_type));
        }
        let produces: Vec<String> = (0..rng.gen_range(1..=3)).map(|o| format!("p{p}_out{o}")).collect();
        produced.extend(produces.iter().cloned());
        processes.push(ProcessSpec {
            algorithm: format!("Process{p}"),
            version: format!("0.{}.0", rng.gen_range(1..10)),
            subsystem: subsystems[rng.gen_range(0..subsystems.len())].into(),
            consumes,
            produces,
            fan_out: rng.gen_range(1..=3),
            goal: p + 1 == process_count,
        });
    }
    let mut spec = ScenarioSpec {
        name: format!("random-{seed}"),
        seed,
        processes,
        external_sources: externals,
        subsystem_palette: [("sensing", "orange"), ("processing", "yellow"), ("decision", "blue")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    };
    while spec.plan().map(|p| p.message_count > max_messages).unwrap_or(false) {
        let widest = spec.processes.iter_mut().filter(|p| p.fan_out > 1).max_by_key(|p| p.fan_out);
        match widest {
            Some(p) => p.fan_out -= 1,
            None => {
                spec.processes.pop();
                if let Some(last) = spec.processes.last_mut() {
                    last.goal = true;
                }
            }
        }
    }
    spec
}
