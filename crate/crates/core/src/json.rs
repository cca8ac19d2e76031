//! Canonical JSON text: compact, one space after `:` and `,`, keys in struct
//! declaration order. Every wire format in this crate goes through here so the
//! output is byte-stable.

use std::cell::Cell;
use std::fmt;
use std::io::{self, Read, Write};
use std::rc::Rc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::Formatter;

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct SpacedFormatter;

impl Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }
}

/// Serializes `value` in canonical form.
pub fn to_canonical_vec<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SpacedFormatter);
    // Our wire types only hold strings, integers, maps with string keys and
    // sequences, none of which can fail to serialize.
    value.serialize(&mut ser).expect("canonical wire types always serialize");
    out
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_canonical_vec(value)).expect("serde_json emits UTF-8")
}

/// How unknown object keys are treated when decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Unknown keys are an error.
    #[default]
    Strict,
    /// Unknown keys are ignored.
    Lenient,
}

/// A decode failure located by byte offset and field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    /// Dotted path of the offending field (`traceability.internal_parents[0].message_id`).
    /// Empty for errors at the document root.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "<root>" } else { &self.path };
        write!(f, "{} at byte {} (field `{}`)", self.message, self.offset, path)
    }
}

impl std::error::Error for ParseError {}

struct CountingReader<'a> {
    inner: &'a [u8],
    consumed: Rc<Cell<usize>>,
}

impl Read for CountingReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.consumed.set(self.consumed.get() + n);
        Ok(n)
    }
}

/// Decodes one JSON document from `bytes`, reporting the field path and byte
/// offset of the first problem.
pub fn decode<T: DeserializeOwned>(bytes: &[u8], mode: ParseMode) -> Result<T, ParseError> {
    if let Err(e) = std::str::from_utf8(bytes) {
        return Err(ParseError {
            offset: e.valid_up_to(),
            path: String::new(),
            message: "input is not valid UTF-8".into(),
        });
    }
    let consumed = Rc::new(Cell::new(0usize));
    let reader = CountingReader { inner: bytes, consumed: Rc::clone(&consumed) };
    let mut de = serde_json::Deserializer::from_reader(reader);
    let mut unknown: Option<(String, usize)> = None;
    let mut track = serde_path_to_error::Track::new();

    let result = {
        let tracked = serde_path_to_error::Deserializer::new(&mut de, &mut track);
        serde_ignored::deserialize(tracked, |path| {
            if unknown.is_none() {
                let end = consumed.get().min(bytes.len());
                let offset = match &path {
                    serde_ignored::Path::Map { key, .. } => locate_key(&bytes[..end], key).unwrap_or(end),
                    _ => end,
                };
                unknown = Some((render_ignored_path(&path), offset));
            }
        })
    };

    let value: T = match result {
        Ok(v) => v,
        Err(err) => {
            let path = track.path();
            return Err(from_json_error(bytes, &render_tracked_path(&path), &err));
        }
    };
    if let Err(err) = de.end() {
        return Err(from_json_error(bytes, "", &err));
    }
    if mode == ParseMode::Strict {
        if let Some((path, offset)) = unknown {
            return Err(ParseError { offset, path, message: "unknown field".into() });
        }
    }
    Ok(value)
}

/// Start of the last `"key"` token before `end`, which is where an ignored
/// entry begins.
fn locate_key(bytes: &[u8], key: &str) -> Option<usize> {
    let needle = serde_json::to_vec(key).ok()?;
    (0..bytes.len().saturating_sub(needle.len() - 1)).rev().find(|&i| {
        bytes[i..].starts_with(&needle)
            && bytes[i + needle.len()..].iter().find(|b| !b.is_ascii_whitespace()) == Some(&b':')
    })
}

fn from_json_error(bytes: &[u8], path: &str, err: &serde_json::Error) -> ParseError {
    let message = strip_position(&err.to_string());
    let mut path = path.to_string();
    // Missing-field errors are reported against the enclosing object.
    if let Some(field) = message.strip_prefix("missing field `").and_then(|rest| rest.strip_suffix('`')) {
        path = join_key(&path, field);
    }
    ParseError { offset: line_col_to_offset(bytes, err.line(), err.column()), path, message }
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(idx) => message[..idx].to_string(),
        None => message.to_string(),
    }
}

fn line_col_to_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return bytes.len();
    }
    let mut offset = 0usize;
    for (i, chunk) in bytes.split_inclusive(|b| *b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(bytes.len());
        }
        offset += chunk.len();
    }
    bytes.len()
}

fn join_key(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn render_tracked_path(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for segment in path.iter() {
        match segment {
            Segment::Seq { index } => out.push_str(&format!("[{index}]")),
            Segment::Map { key } => out = join_key(&out, key),
            Segment::Enum { variant } => out = join_key(&out, variant),
            Segment::Unknown => out = join_key(&out, "?"),
        }
    }
    out
}

fn render_ignored_path(path: &serde_ignored::Path<'_>) -> String {
    use serde_ignored::Path;
    match path {
        Path::Root => String::new(),
        Path::Seq { parent, index } => format!("{}[{index}]", render_ignored_path(parent)),
        Path::Map { parent, key } => join_key(&render_ignored_path(parent), key),
        Path::Some { parent } | Path::NewtypeStruct { parent } => render_ignored_path(parent),
        Path::NewtypeVariant { parent } => render_ignored_path(parent),
    }
}
