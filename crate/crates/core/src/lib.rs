//! Tag-based command discovery.
//!
//! Commands are found by tags instead of memorized names. Tags come from
//! `TAGS` sections of extended man pages, from developer-supplied XML
//! command-tag maps, and from users themselves; they are indexed in a
//! normalized inverted index with synonym fallback. Shell history is mined
//! for usage examples and pipeline co-occurrence, and personal tags can be
//! shared with peers over a small framed protocol.

pub mod config;
pub mod daemon;
pub mod man_format;
pub mod miner;
pub mod overlay;
pub mod sync;
pub mod tag_store;
pub mod xml_map;

pub use man_format::{
    extract_tags, extract_usage_pointer, parse_man_page, serialize_man_page, ManDocument, Section,
    SectionKind,
};
pub use miner::{
    cooccurrences, example_usages, scan_history, selection_frequencies, CoOccurrence, UsageEvent,
};
pub use overlay::{merged_view, UserTagFile};
pub use tag_store::{
    lookup, merge_stores, normalize, RankedResult, Source, SynonymDictionary, TagIndex, TagMapping,
};
pub use xml_map::{
    map_to_mappings, parse_command_map, serialize_command_map, CommandEntry, CommandTagMap,
};
