use std::collections::{BTreeMap, BTreeSet};

use super::{Source, TagMapping};

type Posting = BTreeMap<(String, Source), u64>;

/// Inverted index from normalized tag to commands, with the exact inverse
/// from command to tags.
///
/// A posting is keyed by `(command, source)` and stores the earliest
/// `created_at` seen for it. Posting lists are never left empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagIndex {
    postings: BTreeMap<String, Posting>,
    by_command: BTreeMap<String, BTreeSet<String>>,
    len: usize,
}

impl TagIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_mappings<I: IntoIterator<Item = TagMapping>>(mappings: I) -> Self {
        let mut index = TagIndex::new();
        for m in mappings {
            index.add_mapping(m);
        }
        index
    }

    /// Number of (tag, command, source) records.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Adds a mapping. Returns false if `(tag, command, source)` was already
    /// present, in which case only the earlier timestamp is kept.
    pub fn add_mapping(&mut self, m: TagMapping) -> bool {
        self.insert(m.tag, m.command, m.source, m.created_at)
    }

    pub(crate) fn insert(
        &mut self,
        tag: String,
        command: String,
        source: Source,
        created_at: u64,
    ) -> bool {
        let posting = self.postings.entry(tag.clone()).or_default();
        match posting.get_mut(&(command.clone(), source.clone())) {
            Some(ts) => {
                *ts = (*ts).min(created_at);
                false
            }
            None => {
                posting.insert((command.clone(), source), created_at);
                self.by_command.entry(command).or_default().insert(tag);
                self.len += 1;
                true
            }
        }
    }

    /// Removes one mapping; a no-op (returning false) when absent.
    pub fn remove_mapping(&mut self, tag: &str, command: &str, source: &Source) -> bool {
        let Some(posting) = self.postings.get_mut(tag) else {
            return false;
        };
        if posting
            .remove(&(command.to_string(), source.clone()))
            .is_none()
        {
            return false;
        }
        self.len -= 1;
        let still_held = posting_has_command(posting, command);
        if posting.is_empty() {
            self.postings.remove(tag);
        }
        if !still_held {
            if let Some(tags) = self.by_command.get_mut(command) {
                tags.remove(tag);
                if tags.is_empty() {
                    self.by_command.remove(command);
                }
            }
        }
        true
    }

    pub fn contains(&self, tag: &str, command: &str, source: &Source) -> bool {
        self.postings
            .get(tag)
            .is_some_and(|p| p.contains_key(&(command.to_string(), source.clone())))
    }

    /// Distinct commands holding `tag`, in lexicographic order.
    pub fn commands_for(&self, tag: &str) -> impl Iterator<Item = &str> + '_ {
        let mut last: Option<&str> = None;
        self.postings
            .get(tag)
            .into_iter()
            .flat_map(|p| p.keys())
            .filter_map(move |(command, _)| {
                if last == Some(command.as_str()) {
                    None
                } else {
                    last = Some(command.as_str());
                    last
                }
            })
    }

    pub fn tags_for(&self, command: &str) -> impl Iterator<Item = &str> + '_ {
        self.by_command
            .get(command)
            .into_iter()
            .flat_map(|tags| tags.iter().map(String::as_str))
    }

    pub fn has_command(&self, command: &str) -> bool {
        self.by_command.contains_key(command)
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> + '_ {
        self.postings.keys().map(String::as_str)
    }

    pub fn commands(&self) -> impl Iterator<Item = &str> + '_ {
        self.by_command.keys().map(String::as_str)
    }

    /// All mappings ordered by (tag, command, source). `raw_tag` equals `tag`.
    pub fn mappings(&self) -> impl Iterator<Item = TagMapping> + '_ {
        self.postings.iter().flat_map(|(tag, posting)| {
            posting
                .iter()
                .map(move |((command, source), ts)| TagMapping {
                    tag: tag.clone(),
                    raw_tag: tag.clone(),
                    command: command.clone(),
                    source: source.clone(),
                    created_at: *ts,
                })
        })
    }

    /// Mappings carrying exactly `tag`.
    pub fn mappings_for_tag<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = TagMapping> + 'a {
        self.postings.get(tag).into_iter().flat_map(move |posting| {
            posting
                .iter()
                .map(move |((command, source), ts)| TagMapping {
                    tag: tag.to_string(),
                    raw_tag: tag.to_string(),
                    command: command.clone(),
                    source: source.clone(),
                    created_at: *ts,
                })
        })
    }

    /// Adds every mapping of `other`; returns how many were new.
    pub fn merge_from(&mut self, other: &TagIndex) -> usize {
        other
            .mappings()
            .map(|m| self.add_mapping(m))
            .filter(|added| *added)
            .count()
    }

    /// Checks that postings and by_command are exact inverses and that the
    /// cached length is right.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut count = 0;
        for (tag, posting) in &self.postings {
            if posting.is_empty() {
                return Err(format!("empty posting list for {tag:?}"));
            }
            count += posting.len();
            for (command, _) in posting.keys() {
                if !self
                    .by_command
                    .get(command)
                    .is_some_and(|t| t.contains(tag))
                {
                    return Err(format!("{tag:?}->{command:?} missing from by_command"));
                }
            }
        }
        for (command, tags) in &self.by_command {
            if tags.is_empty() {
                return Err(format!("empty tag set for {command:?}"));
            }
            for tag in tags {
                if !self
                    .postings
                    .get(tag)
                    .is_some_and(|p| posting_has_command(p, command))
                {
                    return Err(format!("{command:?}->{tag:?} missing from postings"));
                }
            }
        }
        if count != self.len {
            return Err(format!("len {} but {} records", self.len, count));
        }
        Ok(())
    }
}

fn posting_has_command(posting: &Posting, command: &str) -> bool {
    posting
        .range((command.to_string(), Source::System)..)
        .next()
        .is_some_and(|((c, _), _)| c == command)
}

/// Set union keyed by (tag, command, source), earlier timestamps winning.
pub fn merge_stores(a: &TagIndex, b: &TagIndex) -> TagIndex {
    let (big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut merged = big.clone();
    merged.merge_from(small);
    merged
}
