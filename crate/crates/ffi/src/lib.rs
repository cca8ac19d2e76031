//! C ABI over `provtrace`.
//!
//! Handles are opaque pointers created by `pt_*_open` and released by the
//! matching `pt_*_free`. Every fallible call returns a [`PtStatus`]; on failure
//! a description is available from [`pt_last_error_message`] on the same
//! thread. Strings returned through out-parameters are owned by the caller and
//! must be released with [`pt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use provtrace::bus::{journal_replay_with, Bus, BusConfig, BusError, JournalError};
use provtrace::cli::{parse_palette, DEFAULT_PALETTE};
use provtrace::engine::{
    export_dot, export_json, export_replay_json, replay_order, trace, trace_back, Depth, Direction,
};
use provtrace::json::ParseMode;
use provtrace::schema::{
    decode_header, parse_header, serialize_header, validate_header, HeaderParseError, MessageEnvelope, MessageId,
};
use provtrace::store::{NodeId, ProvenanceGraph, StoreConfig, StoreError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    UnknownNode = 6,
    InvalidId = 7,
    Bus = 8,
    CorruptJournal = 9,
    Replay = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtDirection {
    Backward = 0,
    Forward = 1,
    Both = 2,
}

impl From<PtDirection> for Direction {
    fn from(d: PtDirection) -> Self {
        match d {
            PtDirection::Backward => Direction::Backward,
            PtDirection::Forward => Direction::Forward,
            PtDirection::Both => Direction::Both,
        }
    }
}

/// Lineage graph rebuilt from a journal.
pub struct PtGraph {
    graph: ProvenanceGraph,
}

/// Publish/subscribe bus, optionally backed by a journal file.
pub struct PtBus {
    bus: Bus,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PtStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(body: impl FnOnce() -> FfiResult<()>) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            PtStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            PtStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(PtStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(PtStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, name: &str) -> FfiResult<&'a [u8]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(PtStatus::NullArgument, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| Failure(PtStatus::NullArgument, format!("{name} is null")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| Failure(PtStatus::NullArgument, format!("{name} is null")))
}

fn into_c_string(text: String) -> FfiResult<*mut c_char> {
    CString::new(text)
        .map(CString::into_raw)
        .map_err(|_| Failure(PtStatus::InvalidUtf8, "output contains a NUL byte".into()))
}

fn parse_focus(text: &str) -> FfiResult<NodeId> {
    MessageId::parse(text).map(NodeId::Message).map_err(|e| Failure(PtStatus::InvalidId, e.to_string()))
}

fn depth(max_depth: i64) -> Depth {
    u32::try_from(max_depth).map(Depth::Limited).unwrap_or(Depth::Unlimited)
}

fn journal_failure(e: JournalError) -> Failure {
    match e {
        JournalError::Io { .. } => Failure(PtStatus::Io, e.to_string()),
        JournalError::Corrupt { .. } => Failure(PtStatus::CorruptJournal, e.to_string()),
    }
}

fn header_failure(e: HeaderParseError) -> Failure {
    match e {
        HeaderParseError::Parse(p) => Failure(PtStatus::Parse, p.to_string()),
        HeaderParseError::Validation(v) => Failure(PtStatus::Validation, v.to_string()),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Description of the last failure on this thread, or NULL after a success.
/// Valid until the next `pt_*` call on the same thread.
#[no_mangle]
pub extern "C" fn pt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Rebuilds the lineage graph from a journal file. `palette` maps subsystems
/// to colors as `subsystem=color,...`; NULL selects the built-in palette.
///
/// # Safety
/// `path` must be a NUL-terminated string, `palette` NULL or NUL-terminated,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_graph_open(
    path: *const c_char,
    strict: bool,
    allow_dangling_parents: bool,
    palette: *const c_char,
    out: *mut *mut PtGraph,
) -> PtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let palette = if palette.is_null() { DEFAULT_PALETTE } else { str_arg(palette, "palette")? };
        let palette = parse_palette(palette).map_err(|e| Failure(PtStatus::Parse, e))?;
        let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
        let replay = journal_replay_with(Path::new(path), mode).map_err(journal_failure)?;
        let config = StoreConfig { allow_dangling_parents, palette };
        let graph = ProvenanceGraph::rebuild(replay, config).map_err(|e| match e {
            StoreError::Journal(j) => journal_failure(j),
            StoreError::Ingest(i) => Failure(PtStatus::CorruptJournal, i.to_string()),
        })?;
        *out = Box::into_raw(Box::new(PtGraph { graph }));
        Ok(())
    })
}

/// # Safety
/// `graph` must be NULL or a handle from [`pt_graph_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pt_graph_free(graph: *mut PtGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Highest journal sequence in the graph, 0 for NULL or empty.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pt_graph_high_water_mark(graph: *const PtGraph) -> u64 {
    graph.as_ref().map_or(0, |g| g.graph.high_water_mark())
}

unsafe fn render_trace(
    graph: *const PtGraph,
    message_id: *const c_char,
    direction: PtDirection,
    max_depth: i64,
    out: *mut *mut c_char,
    render: fn(&provtrace::engine::LineageSubgraph) -> String,
) -> PtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let graph = &handle(graph, "graph")?.graph;
        let focus = parse_focus(str_arg(message_id, "message_id")?)?;
        let sub = trace(graph, &focus, direction.into(), depth(max_depth))
            .map_err(|e| Failure(PtStatus::UnknownNode, e.to_string()))?;
        *out = into_c_string(render(&sub))?;
        Ok(())
    })
}

/// Lineage of a message as JSON. A negative `max_depth` means unlimited.
///
/// # Safety
/// `graph` must be a live handle, `message_id` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pt_graph_trace_json(
    graph: *const PtGraph,
    message_id: *const c_char,
    direction: PtDirection,
    max_depth: i64,
    out: *mut *mut c_char,
) -> PtStatus {
    render_trace(graph, message_id, direction, max_depth, out, export_json)
}

/// Lineage of a message as Graphviz DOT. A negative `max_depth` means
/// unlimited.
///
/// # Safety
/// As for [`pt_graph_trace_json`].
#[no_mangle]
pub unsafe extern "C" fn pt_graph_trace_dot(
    graph: *const PtGraph,
    message_id: *const c_char,
    direction: PtDirection,
    max_depth: i64,
    out: *mut *mut c_char,
) -> PtStatus {
    render_trace(graph, message_id, direction, max_depth, out, export_dot)
}

/// Replay plan of a message's full backward lineage as JSON.
///
/// # Safety
/// As for [`pt_graph_trace_json`].
#[no_mangle]
pub unsafe extern "C" fn pt_graph_replay_json(
    graph: *const PtGraph,
    message_id: *const c_char,
    out: *mut *mut c_char,
) -> PtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let graph = &handle(graph, "graph")?.graph;
        let focus = parse_focus(str_arg(message_id, "message_id")?)?;
        let sub =
            trace_back(graph, &focus, Depth::Unlimited).map_err(|e| Failure(PtStatus::UnknownNode, e.to_string()))?;
        let plan = replay_order(&sub).map_err(|e| Failure(PtStatus::Replay, e.to_string()))?;
        *out = into_c_string(export_replay_json(&plan))?;
        Ok(())
    })
}

/// Checks a header's invariants. Returns `PT_STATUS_VALIDATION` with one
/// violation per line in `violations` when any fail; `violations` is set to
/// NULL otherwise. Unknown fields are accepted.
///
/// # Safety
/// `json` must point to `len` readable bytes; `violations` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pt_header_validate(json: *const u8, len: usize, violations: *mut *mut c_char) -> PtStatus {
    guard(|| {
        let violations = out_arg(violations, "violations")?;
        *violations = ptr::null_mut();
        let bytes = bytes_arg(json, len, "json")?;
        let header = decode_header(bytes, ParseMode::Lenient).map_err(|e| Failure(PtStatus::Parse, e.to_string()))?;
        if let Err(v) = validate_header(&header) {
            let lines: Vec<String> = v.0.iter().map(ToString::to_string).collect();
            *violations = into_c_string(lines.join("\n"))?;
            return Err(Failure(PtStatus::Validation, v.to_string()));
        }
        Ok(())
    })
}

/// Strictly parses and validates a header, writing its canonical serialization
/// to `canonical`.
///
/// # Safety
/// `json` must point to `len` readable bytes; `canonical` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pt_header_parse(json: *const u8, len: usize, canonical: *mut *mut c_char) -> PtStatus {
    guard(|| {
        let canonical = out_arg(canonical, "canonical")?;
        *canonical = ptr::null_mut();
        let bytes = bytes_arg(json, len, "json")?;
        let header = parse_header(bytes).map_err(header_failure)?;
        let text =
            String::from_utf8(serialize_header(&header)).map_err(|e| Failure(PtStatus::InvalidUtf8, e.to_string()))?;
        *canonical = into_c_string(text)?;
        Ok(())
    })
}

/// Opens a bus. With a non-NULL `journal_path` the journal is recovered and
/// every publish is appended to it; with NULL the bus is memory-only.
///
/// # Safety
/// `journal_path` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pt_bus_open(
    journal_path: *const c_char,
    allow_dangling_parents: bool,
    out: *mut *mut PtBus,
) -> PtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = BusConfig { allow_dangling_parents, ..BusConfig::default() };
        let bus = if journal_path.is_null() {
            Bus::new(config)
        } else {
            let path = str_arg(journal_path, "journal_path")?;
            Bus::open(path, config).map_err(bus_failure)?
        };
        *out = Box::into_raw(Box::new(PtBus { bus }));
        Ok(())
    })
}

/// # Safety
/// `bus` must be NULL or a handle from [`pt_bus_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pt_bus_free(bus: *mut PtBus) {
    if !bus.is_null() {
        drop(Box::from_raw(bus));
    }
}

fn bus_failure(e: BusError) -> Failure {
    match e {
        BusError::Journal(j) => journal_failure(j),
        BusError::InvalidHeader(_) => Failure(PtStatus::Validation, e.to_string()),
        other => Failure(PtStatus::Bus, other.to_string()),
    }
}

/// Publishes a message whose header is given as JSON. The assigned sequence
/// number is written to `sequence`.
///
/// # Safety
/// `bus` must be a live handle; `topic` NUL-terminated; `header_json` and
/// `payload` must point to the given number of readable bytes; `sequence`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn pt_bus_publish(
    bus: *const PtBus,
    topic: *const c_char,
    header_json: *const u8,
    header_len: usize,
    payload: *const u8,
    payload_len: usize,
    sequence: *mut u64,
) -> PtStatus {
    guard(|| {
        let sequence = out_arg(sequence, "sequence")?;
        let bus = &handle(bus, "bus")?.bus;
        let topic = str_arg(topic, "topic")?;
        let header = parse_header(bytes_arg(header_json, header_len, "header_json")?).map_err(header_failure)?;
        let payload = bytes_arg(payload, payload_len, "payload")?.to_vec();
        *sequence = bus.publish(MessageEnvelope::new(header, topic, payload)).map_err(bus_failure)?;
        Ok(())
    })
}

/// Sequence of the newest published record, 0 for NULL or empty.
///
/// # Safety
/// `bus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pt_bus_newest_sequence(bus: *const PtBus) -> u64 {
    bus.as_ref().map_or(0, |b| b.bus.newest_sequence())
}
