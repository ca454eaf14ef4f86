use std::collections::BTreeMap;
use std::path::Path;

use super::{normalize, StoreError};

const DEFAULT_GROUPS: &str = "delete remove erase\ncopy duplicate\nlist show display\n";

/// Synonym groups used to widen a query that found nothing.
///
/// File format: one group per line, whitespace-separated words, normalized
/// on load. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymDictionary {
    groups: Vec<Vec<String>>,
    group_of: BTreeMap<String, usize>,
}

impl SynonymDictionary {
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_GROUPS).expect("builtin dictionary is valid")
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let mut dict = SynonymDictionary::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut group: Vec<String> = Vec::new();
            for word in line.split_whitespace() {
                let word = normalize(word)?;
                if group.contains(&word) {
                    continue;
                }
                if dict.group_of.contains_key(&word) {
                    return Err(StoreError::DictionaryOverlap {
                        line: idx + 1,
                        word,
                    });
                }
                group.push(word);
            }
            group.sort();
            let id = dict.groups.len();
            for word in &group {
                dict.group_of.insert(word.clone(), id);
            }
            dict.groups.push(group);
        }
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// `"default"` selects the builtin dictionary; anything else is a path.
    pub fn resolve(name: &str) -> Result<Self, StoreError> {
        if name == "default" {
            Ok(Self::builtin())
        } else {
            Self::load(Path::new(name))
        }
    }

    pub fn groups(&self) -> &[Vec<String>] {
        &self.groups
    }

    /// The group containing `word` (sorted), or `None`.
    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.group_of
            .get(word)
            .map(|&id| self.groups[id].as_slice())
    }
}
