use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use uuid::Uuid;

/// A 128-bit message identifier, rendered as lowercase hyphenated hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageId(Uuid);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid message id `{0}`: expected 8-4-4-4-12 lowercase hex")]
pub struct InvalidMessageId(pub String);

impl MessageId {
    pub const fn from_u128(value: u128) -> Self {
        Self(Uuid::from_u128(value))
    }

    pub fn as_u128(&self) -> u128 {
        self.0.as_u128()
    }

    /// Parses the canonical text form only; braces, URNs, uppercase and the
    /// simple (unhyphenated) form are rejected.
    pub fn parse(text: &str) -> Result<Self, InvalidMessageId> {
        let bytes = text.as_bytes();
        let canonical = bytes.len() == 36
            && bytes.iter().enumerate().all(|(i, b)| match i {
                8 | 13 | 18 | 23 => *b == b'-',
                _ => matches!(b, b'0'..=b'9' | b'a'..=b'f'),
            });
        if !canonical {
            return Err(InvalidMessageId(text.to_string()));
        }
        Uuid::parse_str(text).map(Self).map_err(|_| InvalidMessageId(text.to_string()))
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0.hyphenated(), f)
    }
}

impl fmt::Debug for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MessageId({self})")
    }
}

impl FromStr for MessageId {
    type Err = InvalidMessageId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for MessageId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MessageId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Source of fresh message identifiers.
pub trait IdSource: Send {
    fn next_id(&mut self) -> MessageId;
}

/// Random v4 identifiers from the OS generator. Producers never coordinate.
#[derive(Debug, Default, Clone, Copy)]
pub struct RandomIds;

impl IdSource for RandomIds {
    fn next_id(&mut self) -> MessageId {
        MessageId(Uuid::new_v4())
    }
}

/// v4-shaped identifiers drawn from a seeded stream, for reproducible runs.
#[derive(Debug, Clone)]
pub struct SeededIds {
    rng: ChaCha20Rng,
}

impl SeededIds {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed) }
    }
}

impl IdSource for SeededIds {
    fn next_id(&mut self) -> MessageId {
        let mut bytes = [0u8; 16];
        self.rng.fill_bytes(&mut bytes);
        MessageId(uuid::Builder::from_random_bytes(bytes).into_uuid())
    }
}

impl<T: IdSource + ?Sized> IdSource for Box<T> {
    fn next_id(&mut self) -> MessageId {
        (**self).next_id()
    }
}
