//! Newline-delimited journal of published envelopes.
//!
//! Each line is one record:
//!
//! ```text
//! {"sequence": N, "topic": "...", "header": <canonical header>, "payload_b64": "..."}
//! ```
//!
//! A record is only accepted once its terminating LF is on disk. Bytes after
//! the last LF are a torn tail left by an interrupted write; readers stop
//! before them and writers truncate them on open.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::json::{self, ParseError, ParseMode};
use crate::schema::MessageEnvelope;
use crate::schema::WireHeader;

/// One published envelope and its bus-assigned sequence number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalRecord {
    pub sequence: u64,
    pub envelope: MessageEnvelope,
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    sequence: u64,
    topic: String,
    header: WireHeader,
    payload_b64: String,
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt journal record at byte {offset}: {source}")]
    Corrupt {
        offset: u64,
        #[source]
        source: ParseError,
    },
}

impl JournalError {
    fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Bytes after the last complete record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TornTail {
    pub offset: u64,
    pub length: u64,
}

/// Encodes a record as one line, without the terminator.
pub fn encode_record(record: &JournalRecord) -> Vec<u8> {
    json::to_canonical_vec(&WireRecord {
        sequence: record.sequence,
        topic: record.envelope.topic.clone(),
        header: WireHeader::from(&record.envelope.header),
        payload_b64: BASE64.encode(&record.envelope.payload),
    })
}

/// Decodes one line (without terminator). Header invariants are not checked
/// here.
pub fn decode_record(line: &[u8], mode: ParseMode) -> Result<JournalRecord, ParseError> {
    let wire: WireRecord = json::decode(line, mode)?;
    let payload = BASE64.decode(wire.payload_b64.as_bytes()).map_err(|e| ParseError {
        offset: 0,
        path: "payload_b64".into(),
        message: format!("invalid base64: {e}"),
    })?;
    Ok(JournalRecord {
        sequence: wire.sequence,
        envelope: MessageEnvelope { header: wire.header.into(), topic: wire.topic, payload },
    })
}

/// Streaming reader over a journal file.
///
/// Yields complete records in file order. Stops at the first undecodable
/// complete line with [`JournalError::Corrupt`]. A torn tail ends iteration
/// cleanly and is reported by [`JournalReplay::torn_tail`].
pub struct JournalReplay<R = BufReader<File>> {
    reader: R,
    offset: u64,
    mode: ParseMode,
    torn: Option<TornTail>,
    done: bool,
    buf: Vec<u8>,
}

impl<R: BufRead> JournalReplay<R> {
    pub fn from_reader(reader: R, mode: ParseMode) -> Self {
        Self { reader, offset: 0, mode, torn: None, done: false, buf: Vec::with_capacity(1024) }
    }

    /// The torn tail found so far; final once the iterator is exhausted.
    pub fn torn_tail(&self) -> Option<TornTail> {
        self.torn
    }

    /// Byte offset just past the last record yielded.
    pub fn offset(&self) -> u64 {
        self.offset
    }
}

impl<R: BufRead> Iterator for JournalReplay<R> {
    type Item = Result<JournalRecord, JournalError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        self.buf.clear();
        let n = match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(n) => n,
            Err(e) => {
                self.done = true;
                return Some(Err(JournalError::Io { path: PathBuf::new(), source: e }));
            }
        };
        if n == 0 {
            self.done = true;
            return None;
        }
        if self.buf.last() != Some(&b'\n') {
            self.done = true;
            self.torn = Some(TornTail { offset: self.offset, length: n as u64 });
            log::warn!("journal has a torn tail of {n} bytes at offset {}", self.offset);
            return None;
        }
        let start = self.offset;
        match decode_record(&self.buf[..n - 1], self.mode) {
            Ok(record) => {
                self.offset += n as u64;
                Some(Ok(record))
            }
            Err(e) => {
                self.done = true;
                Some(Err(JournalError::Corrupt { offset: start + e.offset as u64, source: e }))
            }
        }
    }
}

/// Replays a journal file in strict mode. An empty file yields nothing.
pub fn journal_replay(path: impl AsRef<Path>) -> Result<JournalReplay, JournalError> {
    journal_replay_with(path, ParseMode::Strict)
}

pub fn journal_replay_with(path: impl AsRef<Path>, mode: ParseMode) -> Result<JournalReplay, JournalError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| JournalError::io(path, e))?;
    Ok(JournalReplay::from_reader(BufReader::new(file), mode))
}

/// Reads every record, failing on the first corrupt one.
pub fn read_all(
    path: impl AsRef<Path>,
    mode: ParseMode,
) -> Result<(Vec<JournalRecord>, Option<TornTail>), JournalError> {
    let mut replay = journal_replay_with(path, mode)?;
    let records = replay.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((records, replay.torn_tail()))
}

/// Appends one record to the journal at `path`, creating it if needed and
/// truncating any torn tail first.
pub fn journal_append(path: impl AsRef<Path>, record: &JournalRecord) -> Result<(), JournalError> {
    let mut writer = JournalWriter::open_append(path.as_ref())?;
    writer.append(record)
}

/// Append handle on a journal file.
#[derive(Debug)]
pub struct JournalWriter {
    file: File,
    path: PathBuf,
    sync_each: bool,
}

impl JournalWriter {
    /// Opens (or creates) the journal and cuts it back to its last complete
    /// record. Interior records are not decoded; use [`read_all`] for that.
    pub fn open_append(path: &Path) -> Result<Self, JournalError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| JournalError::io(path, e))?;
        let len = file.metadata().map_err(|e| JournalError::io(path, e))?.len();
        let keep = complete_prefix_len(&mut file, len).map_err(|e| JournalError::io(path, e))?;
        if keep < len {
            log::warn!("truncating torn tail of {} bytes at offset {keep} in {}", len - keep, path.display());
            file.set_len(keep).map_err(|e| JournalError::io(path, e))?;
            file.sync_all().map_err(|e| JournalError::io(path, e))?;
        }
        Ok(Self { file, path: path.to_path_buf(), sync_each: true })
    }

    /// Whether each append is followed by `fsync`. On by default.
    pub fn set_sync_each(&mut self, sync: bool) {
        self.sync_each = sync;
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &JournalRecord) -> Result<(), JournalError> {
        let mut line = encode_record(record);
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| JournalError::io(&self.path, e))?;
        if self.sync_each {
            self.file.sync_data().map_err(|e| JournalError::io(&self.path, e))?;
        }
        Ok(())
    }
}

/// Length of the file up to and including its last LF.
fn complete_prefix_len(file: &mut File, len: u64) -> io::Result<u64> {
    const CHUNK: u64 = 4096;
    let mut end = len;
    let mut buf = vec![0u8; CHUNK as usize];
    while end > 0 {
        let start = end.saturating_sub(CHUNK);
        let n = (end - start) as usize;
        file.seek(SeekFrom::Start(start))?;
        file.read_exact(&mut buf[..n])?;
        if let Some(pos) = buf[..n].iter().rposition(|b| *b == b'\n') {
            return Ok(start + pos as u64 + 1);
        }
        end = start;
    }
    Ok(0)
}
