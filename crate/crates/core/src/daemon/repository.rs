use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use thiserror::Error;

use super::DaemonConfig;
use crate::man_format::{
    command_name, discover_pages, extract_examples, extract_tags, parse_man_file,
};
use crate::miner::{
    example_usages, index_resolver, pipeline_commands, read_committed, scan_uncommitted,
    selection_frequencies, Checkpoint, MinerError, MinerLog, UsageEvent, DEFAULT_WINDOW,
};
use crate::overlay::{merged_view, OverlayError, UserTagFile};
use crate::sync::{
    self, load_peers, suggest_from_peers, synchronize, Connector, NodeState, SyncError, SyncReport,
};
use crate::tag_store::{
    self, example_tag, lookup_with, normalize, now_secs, RankedResult, SharedStore, Source,
    StoreError, SynonymDictionary, TagIndex, TagMapping, EXAMPLE_TAG_PREFIX,
};
use crate::xml_map::{self, map_to_mappings, CommandEntry, CommandTagMap, MapError};

#[derive(Debug, Error)]
pub enum RepoError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error("{path}: {source}")]
    Map { path: PathBuf, source: MapError },
    #[error(transparent)]
    Sync(#[from] SyncError),
}

/// Outcome of indexing man page directories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexReport {
    /// Tag mappings produced, one per extracted tag.
    pub mappings: usize,
    pub files: usize,
    /// One diagnostic per file or directory that could not be used.
    pub failures: Vec<String>,
}

/// Example lines for a command plus peers that could not be asked.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExampleList {
    pub lines: Vec<String>,
    pub peer_failures: Vec<(String, String)>,
    pub known: bool,
}

/// Store and overlay sizes a cached view was built from.
type ViewKey = (usize, usize);

/// The store, the user's overlay and the miner's committed events, with
/// every operation the CLI can ask for. The daemon and the daemonless CLI
/// both go through this type.
pub struct Repository {
    config: DaemonConfig,
    node: Arc<NodeState>,
    connector: Arc<dyn Connector>,
    events: RwLock<(Checkpoint, Vec<UsageEvent>)>,
    miner: Mutex<Option<MinerLog>>,
    writes: Mutex<()>,
    // store and overlay only grow, so their sizes identify a view
    view: Mutex<Option<(ViewKey, Arc<TagIndex>)>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Repository {
    /// Reads the store, user file, peers and committed miner events.
    /// Nothing is written.
    pub fn open(config: DaemonConfig, connector: Arc<dyn Connector>) -> Result<Self, RepoError> {
        let store = if config.store_path.exists() {
            tag_store::load(&config.store_path)?
        } else {
            TagIndex::new()
        };
        let overlay = UserTagFile::load_or_new(&config.user_store_path, &config.user)?;
        let peers = load_peers(&config.peers_path)?;
        let events = read_committed(&config.state_dir())?;
        let node = Arc::new(NodeState::new(
            &config.node_id,
            SharedStore::new(store),
            Arc::new(RwLock::new(overlay)),
            peers,
        ));
        Ok(Repository {
            config,
            node,
            connector,
            events: RwLock::new(events),
            miner: Mutex::new(None),
            writes: Mutex::new(()),
            view: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &DaemonConfig {
        &self.config
    }

    pub fn node(&self) -> &Arc<NodeState> {
        &self.node
    }

    fn overlay_len(&self) -> usize {
        self.node
            .overlay()
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .len()
    }

    /// Store plus the user's tags.
    pub fn view(&self) -> Arc<TagIndex> {
        let key = (self.node.store().read().len(), self.overlay_len());
        let mut cache = lock(&self.view);
        if let Some((k, v)) = cache.as_ref() {
            if *k == key {
                return v.clone();
            }
        }
        let view = {
            let store = self.node.store().read();
            let overlay = self
                .node
                .overlay()
                .read()
                .unwrap_or_else(|e| e.into_inner());
            Arc::new(merged_view(&store, &overlay))
        };
        *cache = Some((key, view.clone()));
        view
    }

    pub fn events(&self) -> Vec<UsageEvent> {
        self.events
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .1
            .clone()
    }

    /// Ranked commands for `tags`, at most `limit` of them. `dict` is
    /// `default` or a path to a synonym file.
    pub fn lookup(
        &self,
        tags: &[String],
        dict: Option<&str>,
        limit: usize,
    ) -> Result<Vec<RankedResult>, RepoError> {
        let dict = dict.map(SynonymDictionary::resolve).transpose()?;
        let view = self.view();
        let freq = {
            let events = self.events.read().unwrap_or_else(|e| e.into_inner());
            selection_frequencies(&events.1)
        };
        let mut results = lookup_with(&view, tags, dict.as_ref(), Some(&freq))?;
        results.truncate(limit);
        Ok(results)
    }

    fn save_overlay(&self) -> Result<(), RepoError> {
        let overlay = self
            .node
            .overlay()
            .read()
            .unwrap_or_else(|e| e.into_inner());
        overlay.save(&self.config.user_store_path)?;
        Ok(())
    }

    /// Adds personal tags; returns how many (tag, command) pairs are new.
    pub fn add_tags(
        &self,
        command: &str,
        tags: &[String],
        publish: bool,
    ) -> Result<usize, RepoError> {
        let _w = lock(&self.writes);
        for tag in tags {
            TagMapping::new(tag, command, Source::System, 0).map_err(|e| match e {
                StoreError::EmptyAfterNormalization => {
                    RepoError::Overlay(OverlayError::EmptyAfterNormalization)
                }
                other => RepoError::Store(other),
            })?;
        }
        let now = now_secs();
        let mut added = 0;
        {
            let mut overlay = self
                .node
                .overlay()
                .write()
                .unwrap_or_else(|e| e.into_inner());
            for tag in tags {
                added += usize::from(overlay.add_user_tag(tag, command, publish, now)?);
            }
        }
        self.save_overlay()?;
        Ok(added)
    }

    pub fn add_example(&self, command: &str, line: &str, publish: bool) -> Result<bool, RepoError> {
        let _w = lock(&self.writes);
        let added = self
            .node
            .overlay()
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .add_user_example(command, line, publish, now_secs())?;
        self.save_overlay()?;
        Ok(added)
    }

    fn resolver_view(&self) -> (Arc<TagIndex>, SynonymDictionary) {
        (self.view(), SynonymDictionary::builtin())
    }

    /// Up to `k` usage lines for `command`, from mined history (including
    /// lines not mined yet), imported examples and the user's own examples.
    /// With `with`, only lines whose pipeline also runs that command. With
    /// `peers`, lines published by peers are appended.
    pub fn examples(
        &self,
        command: &str,
        k: usize,
        with: Option<&str>,
        peers: bool,
    ) -> Result<ExampleList, RepoError> {
        let view = self.view();
        let (checkpoint, mut events) = {
            let guard = self.events.read().unwrap_or_else(|e| e.into_inner());
            (guard.0.clone(), guard.1.clone())
        };
        if let Ok(bytes) = std::fs::read(&self.config.history_path) {
            let (index, dict) = self.resolver_view();
            let resolve = index_resolver(&index, Some(&dict));
            let history = String::from_utf8_lossy(&bytes);
            events.extend(scan_uncommitted(
                &history,
                &checkpoint,
                DEFAULT_WINDOW,
                &resolve,
            ));
        }
        if let Ok(tag) = normalize(&example_tag(command)) {
            events.extend(view.commands_for(&tag).map(|line| UsageEvent {
                query_tags: Vec::new(),
                command: command.to_string(),
                command_line: line.to_string(),
                observed_at: 0,
            }));
        }
        let known = view.has_command(command) || events.iter().any(|e| e.command == command);
        if let Some(with) = with {
            events.retain(|e| pipeline_commands(&e.command_line).contains(&with));
        }
        let mut out = ExampleList {
            lines: example_usages(&events, command, k),
            peer_failures: Vec::new(),
            known,
        };
        if peers {
            let peer_list = self.reload_peers();
            let s = suggest_from_peers(
                self.node.node_id(),
                &peer_list,
                command,
                self.connector.as_ref(),
            );
            for (line, _) in s.lines {
                let wanted = with.is_none_or(|w| pipeline_commands(&line).contains(&w));
                if wanted && !out.lines.contains(&line) {
                    out.lines.push(line);
                }
            }
            out.peer_failures = s
                .failures
                .into_iter()
                .map(|(peer, e)| (peer, e.to_string()))
                .collect();
        }
        Ok(out)
    }

    fn reload_peers(&self) -> Vec<sync::PeerConfig> {
        if let Ok(peers) = load_peers(&self.config.peers_path) {
            self.node.set_peers(peers);
        }
        self.node.peers().clone()
    }

    pub fn sync(&self, peer_id: &str, filter_tags: &[String]) -> Result<SyncReport, RepoError> {
        let _w = lock(&self.writes);
        self.reload_peers();
        let peer = self
            .node
            .peer(peer_id)
            .ok_or_else(|| SyncError::UnknownPeer(peer_id.to_string()))?;
        let report = synchronize(&self.node, &peer, filter_tags, self.connector.as_ref())?;
        self.persist_store()?;
        Ok(report)
    }

    /// Ingests a command-tag map file; returns the number of tag mappings
    /// it holds.
    pub fn import(&self, path: &Path) -> Result<usize, RepoError> {
        let map_err = |source| RepoError::Map {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::open(path).map_err(|e| map_err(MapError::Io(e)))?;
        let map = xml_map::parse_command_map(file).map_err(map_err)?;
        let _w = lock(&self.writes);
        let now = now_secs();
        let ingest = map_to_mappings(&map, now);
        let count = ingest.mappings.len();
        let examples = ingest.example_records(now);
        self.node
            .store()
            .add_all(ingest.mappings.into_iter().chain(examples));
        self.persist_store()?;
        Ok(count)
    }

    /// Ingests the TAGS and EXAMPLE USAGE sections of every page below
    /// `dirs`. Bad pages are reported and skipped.
    pub fn index(&self, dirs: &[PathBuf]) -> Result<IndexReport, RepoError> {
        let mut report = IndexReport::default();
        let mut mappings = Vec::new();
        let now = now_secs();
        for dir in dirs.iter().filter(|d| !d.is_dir()) {
            report
                .failures
                .push(format!("{}: not a directory", dir.display()));
        }
        for page in discover_pages(dirs) {
            report.files += 1;
            let doc = match parse_man_file(&page) {
                Ok(doc) => doc,
                Err(e) => {
                    report.failures.push(format!("{}: {e}", page.display()));
                    continue;
                }
            };
            let name = command_name(&doc);
            let mut page_mappings = Vec::new();
            let mut failed = None;
            for tag in extract_tags(&doc) {
                match TagMapping::new(&tag, &name, Source::System, now) {
                    Ok(m) => page_mappings.push(m),
                    Err(e) => failed = Some(format!("{}: tag {tag:?}: {e}", page.display())),
                }
            }
            if let Some(f) = failed {
                report.failures.push(f);
                continue;
            }
            report.mappings += page_mappings.len();
            mappings.extend(page_mappings);
            mappings.extend(
                extract_examples(&doc)
                    .iter()
                    .filter_map(|line| TagMapping::example(&name, line, Source::System, now).ok()),
            );
        }
        let _w = lock(&self.writes);
        self.node.store().add_all(mappings);
        self.persist_store()?;
        Ok(report)
    }

    /// The store and the user's tags as a command-tag map.
    pub fn export_map(&self) -> CommandTagMap {
        let view = self.view();
        let mut tags: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut examples: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for m in view.mappings() {
            match m.tag.strip_prefix(EXAMPLE_TAG_PREFIX) {
                Some(cmd) => {
                    if m.command.split_whitespace().next() == Some(cmd) {
                        examples
                            .entry(cmd.to_string())
                            .or_default()
                            .insert(m.command);
                    }
                }
                None => {
                    tags.entry(m.command).or_default().insert(m.tag);
                }
            }
        }
        CommandTagMap {
            entries: tags
                .into_iter()
                .map(|(command, tags)| CommandEntry {
                    examples: examples
                        .remove(&command)
                        .unwrap_or_default()
                        .into_iter()
                        .collect(),
                    command,
                    description: String::new(),
                    tags: tags.into_iter().collect(),
                })
                .collect(),
            ..CommandTagMap::default()
        }
    }

    pub fn persist_store(&self) -> Result<(), RepoError> {
        self.node.store().persist(&self.config.store_path)?;
        Ok(())
    }

    /// Writes the store only when it differs from the file on disk.
    pub fn persist_store_if_changed(&self) -> Result<(), RepoError> {
        let current = self.node.store().snapshot();
        let on_disk = if self.config.store_path.exists() {
            tag_store::load(&self.config.store_path).ok()
        } else {
            None
        };
        let unchanged = match on_disk {
            Some(disk) => disk == current,
            None => current.is_empty(),
        };
        if !unchanged {
            self.persist_store()?;
        }
        Ok(())
    }

    /// Takes ownership of the miner state on disk, discarding any events a
    /// crashed pass left uncommitted.
    pub fn enable_miner(&self) -> Result<(), RepoError> {
        let log = MinerLog::open(&self.config.state_dir())?;
        *self.events.write().unwrap_or_else(|e| e.into_inner()) =
            (log.checkpoint().clone(), log.events().to_vec());
        *lock(&self.miner) = Some(log);
        Ok(())
    }

    /// Mines new history lines. Returns the number of new events, or zero
    /// when the miner is not enabled.
    pub fn mine_once(&self) -> Result<usize, RepoError> {
        let mut guard = lock(&self.miner);
        let Some(log) = guard.as_mut() else {
            return Ok(0);
        };
        let (index, dict) = self.resolver_view();
        let resolve = index_resolver(&index, Some(&dict));
        let n = log.mine_file(&self.config.history_path, DEFAULT_WINDOW, &resolve)?;
        *self.events.write().unwrap_or_else(|e| e.into_inner()) =
            (log.checkpoint().clone(), log.events().to_vec());
        Ok(n)
    }
}
