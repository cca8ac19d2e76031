//! In-process publish/subscribe broker.
//!
//! Publishing validates the header, checks that every internal parent has
//! already been published, assigns the next sequence number, journals the
//! record and hands it to every matching subscriber. Subscribers may start from
//! any past sequence; history is served from the in-memory journal and live
//! records from a bounded per-subscriber queue.

mod journal;
mod verify;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TryRecvError};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Duration;

pub use journal::{
    decode_record, encode_record, journal_append, journal_replay, journal_replay_with, read_all, JournalError,
    JournalRecord, JournalReplay, JournalWriter, TornTail,
};
pub use verify::{verify_bytes, verify_journal, JournalViolation, VerifyReport};

use crate::json::ParseMode;
use crate::schema::{validate_header_in, validate_topic, MessageEnvelope, MessageId, SubsystemRegistry, Violations};

pub const DEFAULT_SUBSCRIBER_BUFFER: usize = 1024;

#[derive(Debug, Clone)]
pub struct BusConfig {
    /// Accept internal parents that were never published.
    pub allow_dangling_parents: bool,
    /// Reject publishes to topics that were not registered.
    pub enforce_topic_registry: bool,
    /// Restrict producer subsystems to this set.
    pub subsystems: Option<SubsystemRegistry>,
    /// Capacity of each live subscriber queue. Publishing blocks while any
    /// matching subscriber's queue is full.
    pub subscriber_buffer: usize,
    /// `fsync` after every journal append.
    pub sync_journal: bool,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            allow_dangling_parents: false,
            enforce_topic_registry: false,
            subsystems: None,
            subscriber_buffer: DEFAULT_SUBSCRIBER_BUFFER,
            sync_journal: true,
        }
    }
}

/// A topic and the data type bound to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub name: String,
    pub data_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TopicFilter {
    All,
    Exact(String),
    AnyOf(BTreeSet<String>),
}

impl TopicFilter {
    /// `"*"` selects every topic, `a,b` any of the listed topics, anything
    /// else one exact name.
    pub fn parse(text: &str) -> Self {
        if text == "*" {
            Self::All
        } else if text.contains(',') {
            Self::AnyOf(text.split(',').map(str::to_string).collect())
        } else {
            Self::Exact(text.to_string())
        }
    }

    pub fn matches(&self, topic: &str) -> bool {
        match self {
            Self::All => true,
            Self::Exact(name) => name == topic,
            Self::AnyOf(names) => names.contains(topic),
        }
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::All => f.write_str("*"),
            Self::Exact(name) => f.write_str(name),
            Self::AnyOf(names) => {
                let joined: Vec<&str> = names.iter().map(String::as_str).collect();
                f.write_str(&joined.join(","))
            }
        }
    }
}

/// Where a new subscription starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartAt {
    /// First sequence to deliver. `0` and `1` both mean "from the beginning".
    Sequence(u64),
    /// Only records published after subscribing.
    LiveTail,
}

#[derive(Debug, thiserror::Error)]
pub enum BusError {
    #[error("invalid header: {0}")]
    InvalidHeader(Violations),
    #[error("invalid topic name `{0}`")]
    InvalidTopic(String),
    #[error("topic `{0}` is not registered")]
    UnknownTopic(String),
    #[error("topic `{0}` is already registered")]
    DuplicateTopic(String),
    #[error("topic `{topic}` carries `{expected}`, header says `{found}`")]
    TopicTypeMismatch { topic: String, expected: String, found: String },
    #[error("internal parent {0} was never published")]
    UnknownParent(MessageId),
    #[error("message id {0} was already published")]
    DuplicateMessageId(MessageId),
    #[error("cannot start at sequence {requested}: newest is {newest}")]
    InvalidCursor { requested: u64, newest: u64 },
    #[error("journal sequence {found} where {expected} was expected")]
    SequenceGap { expected: u64, found: u64 },
    #[error(transparent)]
    Journal(#[from] JournalError),
}

type Shared = Arc<JournalRecord>;

struct Slot {
    id: u64,
    filter: TopicFilter,
    sender: SyncSender<Shared>,
}

struct PublishState {
    index: HashMap<MessageId, u64>,
    topics: BTreeMap<String, String>,
    slots: Vec<Slot>,
    journal: Option<JournalWriter>,
    next_slot: u64,
}

struct Inner {
    config: BusConfig,
    // Held across the whole publish so sequence assignment, journaling and
    // fan-out happen in one total order.
    publish: Mutex<PublishState>,
}

/// Cheaply clonable handle to one broker.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
    history: Arc<RwLock<Vec<Shared>>>,
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus").field("newest", &self.newest_sequence()).finish()
    }
}

impl Default for Bus {
    fn default() -> Self {
        Self::new(BusConfig::default())
    }
}

impl Bus {
    /// A bus with an in-memory journal only.
    pub fn new(config: BusConfig) -> Self {
        Self::from_parts(config, Vec::new(), HashMap::new(), None)
    }

    /// A bus backed by the journal file at `path`, restoring its contents.
    ///
    /// Torn tails are cut off; the rest of the journal must be gap-free, valid
    /// and causally ordered.
    pub fn open(path: impl AsRef<Path>, config: BusConfig) -> Result<Self, BusError> {
        let path = path.as_ref();
        let mut writer = JournalWriter::open_append(path)?;
        writer.set_sync_each(config.sync_journal);
        let (records, _) = read_all(path, ParseMode::Strict)?;

        let mut index = HashMap::with_capacity(records.len());
        let mut history = Vec::with_capacity(records.len());
        for (i, record) in records.into_iter().enumerate() {
            let expected = i as u64 + 1;
            if record.sequence != expected {
                return Err(BusError::SequenceGap { expected, found: record.sequence });
            }
            check_envelope(&config, &index, &BTreeMap::new(), &record.envelope, false)?;
            index.insert(record.envelope.header.message_id, record.sequence);
            history.push(Arc::new(record));
        }
        Ok(Self::from_parts(config, history, index, Some(writer)))
    }

    fn from_parts(
        config: BusConfig,
        history: Vec<Shared>,
        index: HashMap<MessageId, u64>,
        journal: Option<JournalWriter>,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                config,
                publish: Mutex::new(PublishState {
                    index,
                    topics: BTreeMap::new(),
                    slots: Vec::new(),
                    journal,
                    next_slot: 1,
                }),
            }),
            history: Arc::new(RwLock::new(history)),
        }
    }

    pub fn config(&self) -> &BusConfig {
        &self.inner.config
    }

    fn lock(&self) -> MutexGuard<'_, PublishState> {
        self.inner.publish.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn register_topic(&self, name: impl Into<String>, data_type: impl Into<String>) -> Result<Topic, BusError> {
        let name = name.into();
        validate_topic(&name).map_err(|_| BusError::InvalidTopic(name.clone()))?;
        let data_type = data_type.into();
        let mut state = self.lock();
        if state.topics.contains_key(&name) {
            return Err(BusError::DuplicateTopic(name));
        }
        state.topics.insert(name.clone(), data_type.clone());
        Ok(Topic { name, data_type })
    }

    pub fn topics(&self) -> Vec<Topic> {
        self.lock()
            .topics
            .iter()
            .map(|(name, data_type)| Topic { name: name.clone(), data_type: data_type.clone() })
            .collect()
    }

    /// Publishes an envelope and returns its sequence number.
    ///
    /// Blocks while a matching live subscriber's queue is full.
    pub fn publish(&self, envelope: MessageEnvelope) -> Result<u64, BusError> {
        let mut state = self.lock();
        check_envelope(
            &self.inner.config,
            &state.index,
            &state.topics,
            &envelope,
            self.inner.config.enforce_topic_registry,
        )?;

        let sequence = self.newest_sequence() + 1;
        let record = Arc::new(JournalRecord { sequence, envelope });
        if let Some(journal) = state.journal.as_mut() {
            journal.append(&record)?;
        }
        state.index.insert(record.envelope.header.message_id, sequence);
        self.history.write().unwrap_or_else(|p| p.into_inner()).push(Arc::clone(&record));

        let topic = record.envelope.topic.as_str();
        state.slots.retain(|slot| {
            if !slot.filter.matches(topic) {
                return true;
            }
            // A closed receiver means the subscription was dropped.
            slot.sender.send(Arc::clone(&record)).is_ok()
        });
        Ok(sequence)
    }

    pub fn subscribe(&self, filter: TopicFilter, start: StartAt) -> Result<Subscription, BusError> {
        let mut state = self.lock();
        let newest = self.newest_sequence();
        let first = match start {
            StartAt::Sequence(s) if s > newest + 1 => return Err(BusError::InvalidCursor { requested: s, newest }),
            StartAt::Sequence(s) => s.max(1),
            StartAt::LiveTail => newest + 1,
        };
        let (sender, receiver) = mpsc::sync_channel(self.inner.config.subscriber_buffer.max(1));
        let id = state.next_slot;
        state.next_slot += 1;
        state.slots.push(Slot { id, filter: filter.clone(), sender });
        Ok(Subscription {
            id,
            filter,
            cursor: first - 1,
            next_history: first,
            live_from: newest + 1,
            history: Arc::clone(&self.history),
            receiver,
        })
    }

    /// Sequence of the newest record, `0` when empty.
    pub fn newest_sequence(&self) -> u64 {
        self.history.read().unwrap_or_else(|p| p.into_inner()).len() as u64
    }

    pub fn record(&self, sequence: u64) -> Option<Arc<JournalRecord>> {
        let history = self.history.read().unwrap_or_else(|p| p.into_inner());
        sequence.checked_sub(1).and_then(|i| history.get(i as usize)).cloned()
    }

    /// Records with sequence greater than `after`.
    pub fn records_after(&self, after: u64) -> Vec<Arc<JournalRecord>> {
        let history = self.history.read().unwrap_or_else(|p| p.into_inner());
        history.iter().skip(after as usize).cloned().collect()
    }

    pub fn sequence_of(&self, id: &MessageId) -> Option<u64> {
        self.lock().index.get(id).copied()
    }

    /// Detaches a subscription. Dropping it has the same effect on the next
    /// publish.
    pub fn unsubscribe(&self, subscription: Subscription) {
        self.lock().slots.retain(|slot| slot.id != subscription.id);
    }

    pub fn subscriber_count(&self) -> usize {
        self.lock().slots.len()
    }
}

fn check_envelope(
    config: &BusConfig,
    index: &HashMap<MessageId, u64>,
    topics: &BTreeMap<String, String>,
    envelope: &MessageEnvelope,
    enforce_topics: bool,
) -> Result<(), BusError> {
    let header = &envelope.header;
    validate_topic(&envelope.topic).map_err(|_| BusError::InvalidTopic(envelope.topic.clone()))?;
    validate_header_in(header, config.subsystems.as_ref()).map_err(BusError::InvalidHeader)?;
    if enforce_topics {
        match topics.get(&envelope.topic) {
            None => return Err(BusError::UnknownTopic(envelope.topic.clone())),
            Some(expected) if *expected != header.data_type => {
                return Err(BusError::TopicTypeMismatch {
                    topic: envelope.topic.clone(),
                    expected: expected.clone(),
                    found: header.data_type.clone(),
                })
            }
            Some(_) => {}
        }
    }
    if index.contains_key(&header.message_id) {
        return Err(BusError::DuplicateMessageId(header.message_id));
    }
    if !config.allow_dangling_parents {
        if let Some(missing) = header.internal_parent_ids().find(|id| !index.contains_key(id)) {
            return Err(BusError::UnknownParent(missing));
        }
    }
    Ok(())
}

/// An ordered, exactly-once feed of matching records.
///
/// History before the subscription point is read from the bus journal; later
/// records arrive on a bounded queue. Anything at or below the cursor is
/// dropped, so a record seen through both paths is delivered once.
pub struct Subscription {
    id: u64,
    filter: TopicFilter,
    cursor: u64,
    next_history: u64,
    live_from: u64,
    history: Arc<RwLock<Vec<Shared>>>,
    receiver: Receiver<Shared>,
}

impl fmt::Debug for Subscription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Subscription")
            .field("id", &self.id)
            .field("filter", &self.filter)
            .field("cursor", &self.cursor)
            .finish()
    }
}

enum Wait {
    Block,
    Timeout(Duration),
    Never,
}

impl Subscription {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn filter(&self) -> &TopicFilter {
        &self.filter
    }

    /// Sequence of the last record handed out (or skipped over as history).
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Blocks for the next record. `None` once every bus handle is gone and
    /// the queue is drained.
    pub fn recv(&mut self) -> Option<Arc<JournalRecord>> {
        self.next_with(Wait::Block)
    }

    pub fn try_recv(&mut self) -> Option<Arc<JournalRecord>> {
        self.next_with(Wait::Never)
    }

    pub fn recv_timeout(&mut self, timeout: Duration) -> Option<Arc<JournalRecord>> {
        self.next_with(Wait::Timeout(timeout))
    }

    fn next_from_history(&mut self) -> Option<Shared> {
        if self.next_history >= self.live_from {
            return None;
        }
        let history = self.history.read().unwrap_or_else(|p| p.into_inner());
        while self.next_history < self.live_from {
            let record = &history[(self.next_history - 1) as usize];
            self.next_history += 1;
            if self.filter.matches(&record.envelope.topic) {
                self.cursor = record.sequence;
                return Some(Arc::clone(record));
            }
        }
        self.cursor = self.cursor.max(self.live_from - 1);
        None
    }

    fn next_with(&mut self, wait: Wait) -> Option<Shared> {
        if let Some(record) = self.next_from_history() {
            return Some(record);
        }
        loop {
            let record = match wait {
                Wait::Block => self.receiver.recv().ok()?,
                Wait::Timeout(d) => match self.receiver.recv_timeout(d) {
                    Ok(r) => r,
                    Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => return None,
                },
                Wait::Never => match self.receiver.try_recv() {
                    Ok(r) => r,
                    Err(TryRecvError::Empty | TryRecvError::Disconnected) => return None,
                },
            };
            if record.sequence > self.cursor {
                self.cursor = record.sequence;
                return Some(record);
            }
        }
    }
}

impl Iterator for Subscription {
    type Item = Arc<JournalRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.recv()
    }
}
