use std::collections::BTreeMap;
use std::fmt;

use super::{is_example_tag, normalize, StoreError, SynonymDictionary, TagIndex};

/// Per-command count of selections that followed a tag search.
pub type Frequencies = BTreeMap<String, u64>;

/// Frequency bonus cap, in twentieths (0.5).
const BONUS_CAP: u32 = 10;

/// A ranking score held exactly in units of 1/20.
///
/// Each distinct matched tag is worth 1 (20 units); each recorded selection
/// adds 0.05 (1 unit), up to 0.5 in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Score(u32);

impl Score {
    pub fn new(matched: usize, selections: u64) -> Self {
        let bonus = selections.min(BONUS_CAP as u64) as u32;
        Score(matched as u32 * 20 + bonus)
    }

    pub fn twentieths(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 20.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 20, (self.0 % 20) * 5)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedResult {
    pub command: String,
    pub score: Score,
    pub matched_tags: Vec<String>,
    pub via_dictionary: bool,
}

pub fn lookup<S: AsRef<str>>(
    index: &TagIndex,
    query_tags: &[S],
    dict: Option<&SynonymDictionary>,
) -> Result<Vec<RankedResult>, StoreError> {
    lookup_with(index, query_tags, dict, None)
}

/// Two-phase lookup.
///
/// Exact matches on the normalized query tags come first. Only when that
/// finds nothing and a dictionary is given, every query tag is widened to
/// its synonym group and the match is repeated with `via_dictionary` set.
pub fn lookup_with<S: AsRef<str>>(
    index: &TagIndex,
    query_tags: &[S],
    dict: Option<&SynonymDictionary>,
    frequencies: Option<&Frequencies>,
) -> Result<Vec<RankedResult>, StoreError> {
    let mut tags: Vec<String> = Vec::new();
    for raw in query_tags {
        if let Ok(tag) = normalize(raw.as_ref()) {
            if !is_example_tag(&tag) && !tags.contains(&tag) {
                tags.push(tag);
            }
        }
    }
    if tags.is_empty() {
        return Err(StoreError::EmptyQuery);
    }
    let exact = rank(index, &tags, frequencies, false);
    match dict {
        Some(dict) if exact.is_empty() => {
            let mut expanded: Vec<String> = Vec::new();
            for tag in &tags {
                let group = dict.synonyms(tag).unwrap_or_default();
                for word in std::iter::once(tag).chain(group) {
                    if !expanded.contains(word) {
                        expanded.push(word.clone());
                    }
                }
            }
            Ok(rank(index, &expanded, frequencies, true))
        }
        _ => Ok(exact),
    }
}

fn rank(
    index: &TagIndex,
    tags: &[String],
    frequencies: Option<&Frequencies>,
    via_dictionary: bool,
) -> Vec<RankedResult> {
    let mut matched: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for tag in tags {
        for command in index.commands_for(tag) {
            matched.entry(command).or_default().push(tag.clone());
        }
    }
    let mut results: Vec<RankedResult> = matched
        .into_iter()
        .map(|(command, matched_tags)| {
            let selections = frequencies
                .and_then(|f| f.get(command))
                .copied()
                .unwrap_or(0);
            RankedResult {
                command: command.to_string(),
                score: Score::new(matched_tags.len(), selections),
                matched_tags,
                via_dictionary,
            }
        })
        .collect();
    results.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then_with(|| a.command.cmp(&b.command))
    });
    results
}
