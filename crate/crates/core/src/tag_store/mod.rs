//! The searchable tag repository: an inverted index from normalized tags to
//! commands, synonym-based fallback expansion, ranking and persistence.

mod dictionary;
mod index;
mod lookup;
mod normalize;
mod persist;
mod shared;

use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

pub use dictionary::SynonymDictionary;
pub use index::{merge_stores, TagIndex};
pub use lookup::{lookup, lookup_with, Frequencies, RankedResult, Score};
pub use normalize::normalize;
pub use persist::{decode_record, encode_record, load, parse_store, persist, render_store};
pub(crate) use persist::{
    parse_framed as parse_framed_records, write_atomic as write_file_atomic,
    write_framed as persist_framed,
};
pub use shared::SharedStore;

/// Tags with this prefix carry example command lines rather than tags.
pub const EXAMPLE_TAG_PREFIX: &str = "example:";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("tag is empty after normalization")]
    EmptyAfterNormalization,
    #[error("query has no usable tags")]
    EmptyQuery,
    #[error("invalid command name {0:?}")]
    InvalidCommand(String),
    #[error("invalid source {0:?}")]
    InvalidSource(String),
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("dictionary line {line}: word {word:?} already belongs to another group")]
    DictionaryOverlap { line: usize, word: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a mapping came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    System,
    User(String),
    Peer(String),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::System => f.write_str("system"),
            Source::User(id) => write!(f, "user:{id}"),
            Source::Peer(id) => write!(f, "peer:{id}"),
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.contains(char::is_whitespace)
}

impl FromStr for Source {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StoreError::InvalidSource(s.to_string());
        if s == "system" {
            return Ok(Source::System);
        }
        let (kind, id) = s.split_once(':').ok_or_else(bad)?;
        if !valid_id(id) {
            return Err(bad());
        }
        match kind {
            "user" => Ok(Source::User(id.to_string())),
            "peer" => Ok(Source::Peer(id.to_string())),
            _ => Err(bad()),
        }
    }
}

/// One (tag, command) association.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagMapping {
    pub tag: String,
    pub raw_tag: String,
    pub command: String,
    pub source: Source,
    pub created_at: u64,
}

/// Ordinary commands are single whitespace-free words. Example records
/// carry a whole command line, which only has to fit on one record line.
pub fn validate_command(tag: &str, command: &str) -> Result<(), StoreError> {
    let ok = if is_example_tag(tag) {
        !command.trim().is_empty() && !command.contains(['\t', '\n', '\r'])
    } else {
        valid_id(command)
    };
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidCommand(command.to_string()))
    }
}

impl TagMapping {
    pub fn new(
        raw_tag: &str,
        command: &str,
        source: Source,
        created_at: u64,
    ) -> Result<Self, StoreError> {
        let tag = normalize(raw_tag)?;
        validate_command(&tag, command)?;
        Ok(TagMapping {
            tag,
            raw_tag: raw_tag.to_string(),
            command: command.to_string(),
            source,
            created_at,
        })
    }

    /// Record holding an example command line for `command`.
    pub fn example(
        command: &str,
        line: &str,
        source: Source,
        created_at: u64,
    ) -> Result<Self, StoreError> {
        let line = line.replace('\t', " ");
        Self::new(&example_tag(command), line.trim(), source, created_at)
    }

    pub fn is_example(&self) -> bool {
        is_example_tag(&self.tag)
    }
}

pub fn example_tag(command: &str) -> String {
    format!("{EXAMPLE_TAG_PREFIX}{command}")
}

pub fn is_example_tag(tag: &str) -> bool {
    tag.starts_with(EXAMPLE_TAG_PREFIX)
}

pub fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_text_roundtrip() {
        for s in [
            Source::System,
            Source::User("alice".into()),
            Source::Peer("node:7".into()),
        ] {
            assert_eq!(s.to_string().parse::<Source>().unwrap(), s);
        }
        assert!("user:".parse::<Source>().is_err());
        assert!("root".parse::<Source>().is_err());
        assert!("peer:a b".parse::<Source>().is_err());
    }

    #[test]
    fn mapping_validation() {
        let m = TagMapping::new("  Delete ", "rm", Source::System, 1).unwrap();
        assert_eq!(m.tag, "delete");
        assert_eq!(m.raw_tag, "  Delete ");
        assert!(TagMapping::new("x", "rm -rf", Source::System, 1).is_err());
        assert!(TagMapping::new("x", "", Source::System, 1).is_err());
        assert!(TagMapping::new("   ", "rm", Source::System, 1).is_err());
        let ex = TagMapping::example("ps", "ps aux\t| grep java", Source::System, 1).unwrap();
        assert_eq!(ex.tag, "example:ps");
        assert_eq!(ex.command, "ps aux | grep java");
        assert!(ex.is_example());
    }
}
