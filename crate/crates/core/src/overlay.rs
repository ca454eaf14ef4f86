//! Per-user tag layer.
//!
//! A user's own tags live in a separate file located through
//! `TAGMAN_USER_STORE`; system man pages and the system store are never
//! written on a user's behalf. Each mapping carries a publish flag that
//! decides whether peers may pull it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{home_dir, Environment};
use crate::tag_store::{
    self, decode_record, encode_record, merge_stores, normalize, Source, StoreError, TagIndex,
    TagMapping,
};

pub const USER_STORE_VAR: &str = "TAGMAN_USER_STORE";
const MAGIC: &str = "usertags";

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("no home directory: set HOME or {USER_STORE_VAR}")]
    NoHomeDirectory,
    #[error("tag is empty after normalization")]
    EmptyAfterNormalization,
    #[error("invalid user id {0:?}")]
    InvalidUser(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// `TAGMAN_USER_STORE` when set and non-empty, else `~/.tagman/user.tags`.
pub fn resolve_store_path(env: &Environment) -> Result<PathBuf, OverlayError> {
    match env.get(USER_STORE_VAR) {
        Some(path) if !path.is_empty() => Ok(PathBuf::from(path)),
        _ => home_dir(env)
            .map(|home| home.join(".tagman").join("user.tags"))
            .ok_or(OverlayError::NoHomeDirectory),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    created_at: u64,
    publish: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserTagFile {
    user: String,
    entries: BTreeMap<(String, String), Entry>,
}

impl UserTagFile {
    pub fn new(user: &str) -> Result<Self, OverlayError> {
        if user.is_empty() || user.contains(char::is_whitespace) {
            return Err(OverlayError::InvalidUser(user.to_string()));
        }
        Ok(UserTagFile {
            user: user.to_string(),
            entries: BTreeMap::new(),
        })
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    pub fn source(&self) -> Source {
        Source::User(self.user.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds a personal tag. Returns whether the (tag, command) pair is new;
    /// the publish flag is set to `publish` either way.
    pub fn add_user_tag(
        &mut self,
        raw_tag: &str,
        command: &str,
        publish: bool,
        now: u64,
    ) -> Result<bool, OverlayError> {
        let mapping =
            TagMapping::new(raw_tag, command, self.source(), now).map_err(|e| match e {
                StoreError::EmptyAfterNormalization => OverlayError::EmptyAfterNormalization,
                other => OverlayError::Store(other),
            })?;
        Ok(self.insert(mapping, publish))
    }

    /// Records an example command line for `command`.
    pub fn add_user_example(
        &mut self,
        command: &str,
        line: &str,
        publish: bool,
        now: u64,
    ) -> Result<bool, OverlayError> {
        let mapping = TagMapping::example(command, line, self.source(), now)?;
        Ok(self.insert(mapping, publish))
    }

    fn insert(&mut self, m: TagMapping, publish: bool) -> bool {
        let key = (m.tag, m.command);
        match self.entries.get_mut(&key) {
            Some(entry) => {
                entry.publish = publish;
                false
            }
            None => {
                self.entries.insert(
                    key,
                    Entry {
                        created_at: m.created_at,
                        publish,
                    },
                );
                true
            }
        }
    }

    pub fn remove_user_tag(&mut self, raw_tag: &str, command: &str) -> bool {
        match normalize(raw_tag) {
            Ok(tag) => self.entries.remove(&(tag, command.to_string())).is_some(),
            Err(_) => false,
        }
    }

    pub fn is_published(&self, tag: &str, command: &str) -> Option<bool> {
        self.entries
            .get(&(tag.to_string(), command.to_string()))
            .map(|e| e.publish)
    }

    fn mapping(&self, (tag, command): &(String, String), entry: &Entry) -> TagMapping {
        TagMapping {
            tag: tag.clone(),
            raw_tag: tag.clone(),
            command: command.clone(),
            source: self.source(),
            created_at: entry.created_at,
        }
    }

    pub fn mappings(&self) -> Vec<TagMapping> {
        self.entries
            .iter()
            .map(|(k, e)| self.mapping(k, e))
            .collect()
    }

    pub fn publish_flags(&self) -> BTreeMap<(String, String), bool> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.publish))
            .collect()
    }

    /// Exactly the mappings flagged for publishing.
    pub fn publishable_set(&self) -> Vec<TagMapping> {
        self.entries
            .iter()
            .filter(|(_, e)| e.publish)
            .map(|(k, e)| self.mapping(k, e))
            .collect()
    }

    pub fn index(&self) -> TagIndex {
        TagIndex::from_mappings(self.mappings())
    }

    pub fn render(&self) -> String {
        let records: Vec<String> = self
            .entries
            .iter()
            .map(|(k, e)| {
                let flag = if e.publish { "pub" } else { "priv" };
                format!("{}\t{flag}", encode_record(&self.mapping(k, e)))
            })
            .collect();
        tag_store::persist_framed(
            &format!("{MAGIC} 1 {} {}", records.len(), self.user),
            &records,
        )
    }

    pub fn parse(text: &str) -> Result<Self, OverlayError> {
        let (extra, lines) = tag_store::parse_framed_records(text, MAGIC)?;
        let [user] = extra[..] else {
            return Err(StoreError::CorruptStore("user file header needs a user id".into()).into());
        };
        let mut file = UserTagFile::new(user)?;
        for line in lines {
            let corrupt = || StoreError::CorruptStore(format!("bad user record {line:?}"));
            let (record, flag) = line.rsplit_once('\t').ok_or_else(corrupt)?;
            let publish = match flag {
                "pub" => true,
                "priv" => false,
                _ => return Err(corrupt().into()),
            };
            let m = decode_record(record)?;
            if m.source != file.source() || !file.insert(m, publish) {
                return Err(corrupt().into());
            }
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), OverlayError> {
        tag_store::write_file_atomic(path, self.render().as_bytes()).map_err(StoreError::from)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, OverlayError> {
        let text = std::fs::read_to_string(path).map_err(StoreError::from)?;
        Self::parse(&text)
    }

    /// Loads `path`, or starts an empty file for `user` when it does not exist.
    pub fn load_or_new(path: &Path, user: &str) -> Result<Self, OverlayError> {
        if path.exists() {
            Self::load(path)
        } else {
            Self::new(user)
        }
    }
}

/// System store plus the user's own tags. User tags only ever add.
pub fn merged_view(system: &TagIndex, user: &UserTagFile) -> TagIndex {
    if user.is_empty() {
        return system.clone();
    }
    merge_stores(system, &user.index())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tag_store::lookup;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn env(pairs: &[(&str, &str)]) -> Environment {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn store_path_resolution() {
        assert_eq!(
            resolve_store_path(&env(&[(USER_STORE_VAR, "/tmp/u.tags")])).unwrap(),
            PathBuf::from("/tmp/u.tags")
        );
        assert_eq!(
            resolve_store_path(&env(&[("HOME", "/home/a")])).unwrap(),
            PathBuf::from("/home/a/.tagman/user.tags")
        );
        assert_eq!(
            resolve_store_path(&env(&[(USER_STORE_VAR, ""), ("HOME", "/home/a")])).unwrap(),
            PathBuf::from("/home/a/.tagman/user.tags")
        );
        assert!(matches!(
            resolve_store_path(&env(&[])),
            Err(OverlayError::NoHomeDirectory)
        ));
    }

    #[test]
    fn private_tag_is_searchable_but_not_published() {
        let mut file = UserTagFile::new("alice").unwrap();
        assert!(file.add_user_tag("wipe", "rm", false, 1).unwrap());
        let system =
            TagIndex::from_mappings([TagMapping::new("delete", "rm", Source::System, 0).unwrap()]);
        let view = merged_view(&system, &file);
        assert_eq!(lookup(&view, &["wipe"], None).unwrap()[0].command, "rm");
        assert_eq!(lookup(&view, &["delete"], None).unwrap()[0].command, "rm");
        assert!(file.publishable_set().is_empty());
    }

    #[test]
    fn repeated_add_is_idempotent() {
        let mut file = UserTagFile::new("alice").unwrap();
        file.add_user_tag("Wipe", "rm", false, 1).unwrap();
        let once = file.clone();
        assert!(!file.add_user_tag("wipe", "rm", false, 5).unwrap());
        assert_eq!(file, once);
        assert!(!file.add_user_tag("wipe", "rm", true, 5).unwrap());
        assert_eq!(file.publishable_set().len(), 1);
        assert!(matches!(
            file.add_user_tag("  ", "rm", false, 1),
            Err(OverlayError::EmptyAfterNormalization)
        ));
        assert!(file.add_user_tag("x", "rm -rf", false, 1).is_err());
    }

    #[test]
    fn publish_filter() {
        let mut file = UserTagFile::new("u").unwrap();
        file.add_user_tag("wipe", "rm", true, 1).unwrap();
        file.add_user_tag("scrub", "rm", false, 1).unwrap();
        let published: Vec<_> = file.publishable_set().into_iter().map(|m| m.tag).collect();
        assert_eq!(published, ["wipe"]);
        assert_eq!(file.publish_flags().len(), 2);
    }

    #[test]
    fn empty_overlay_is_identity() {
        let system =
            TagIndex::from_mappings([TagMapping::new("delete", "rm", Source::System, 0).unwrap()]);
        assert_eq!(
            merged_view(&system, &UserTagFile::new("u").unwrap()),
            system
        );
    }

    #[test]
    fn file_roundtrip_and_corruption() {
        let mut file = UserTagFile::new("alice").unwrap();
        file.add_user_tag("wipe", "rm", true, 3).unwrap();
        file.add_user_tag("Scrub Disk", "shred", false, 4).unwrap();
        file.add_user_example("ps", "ps aux | grep java", true, 5)
            .unwrap();
        let text = file.render();
        assert!(text.starts_with("usertags 1 3 alice\n"));
        assert!(text.contains("wipe\trm\tuser:alice\t3\tpub\n"));
        assert!(text.contains("scrub-disk\tshred\tuser:alice\t4\tpriv\n"));
        assert_eq!(UserTagFile::parse(&text).unwrap(), file);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.tags");
        file.save(&path).unwrap();
        assert_eq!(UserTagFile::load(&path).unwrap(), file);

        for bad in [
            "usertags 1 0\nend 0\n",
            "usertags 1 1 alice\nwipe\trm\tuser:bob\t3\tpub\nend 1\n",
            "usertags 1 1 alice\nwipe\trm\tuser:alice\t3\tmaybe\nend 1\n",
            "usertags 1 1 alice\nwipe\trm\tuser:alice\t3\tpub\n",
        ] {
            assert!(UserTagFile::parse(bad).is_err(), "{bad:?}");
        }
    }

    proptest! {
        #[test]
        fn adds_match_shadow_set(adds in prop::collection::vec((0..30u8, 0..10u8, any::<bool>()), 0..1000)) {
            let mut file = UserTagFile::new("u").unwrap();
            let mut shadow = BTreeSet::new();
            for (t, c, publish) in adds {
                let added = file.add_user_tag(&format!("T{t}"), &format!("c{c}"), publish, 0).unwrap();
                prop_assert_eq!(added, shadow.insert((format!("t{t}"), format!("c{c}"))));
            }
            prop_assert_eq!(file.len(), shadow.len());
            prop_assert!(file.publishable_set().len() <= file.len());
        }

        #[test]
        fn merged_view_is_union(
            sys in prop::collection::vec((0..8u8, 0..5u8), 0..30),
            usr in prop::collection::vec((0..8u8, 0..5u8), 0..30),
        ) {
            let system = TagIndex::from_mappings(sys.iter().map(|(t, c)| {
                TagMapping::new(&format!("t{t}"), &format!("c{c}"), Source::System, 0).unwrap()
            }));
            let mut file = UserTagFile::new("u").unwrap();
            for (t, c) in &usr {
                file.add_user_tag(&format!("t{t}"), &format!("c{c}"), false, 0).unwrap();
            }
            let view = merged_view(&system, &file);
            let got: BTreeSet<_> = view.mappings().map(|m| (m.tag, m.command, m.source)).collect();
            let mut want: BTreeSet<_> = system.mappings().map(|m| (m.tag, m.command, m.source)).collect();
            want.extend(file.mappings().into_iter().map(|m| (m.tag, m.command, m.source)));
            prop_assert_eq!(got, want);
        }
    }
}
