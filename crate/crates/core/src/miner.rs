//! Shell-history mining.
//!
//! A history is read one command per line. A tag search (`tagman search ...`,
//! `tagman --tags ...` or `man -tags ...`) opens a correlation window: the
//! first of the next `window` executed lines whose command was among the
//! search results becomes a usage event carrying the search tags. Every
//! other executed line is an uncorrelated usage event. Pipelines give
//! command co-occurrence pairs.
//!
//! An event depends only on the lines before it, so mining can resume from a
//! checkpoint (line index plus the open search, if any) without replaying.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::tag_store::{self, lookup, normalize, Frequencies, SynonymDictionary, TagIndex};

pub const DEFAULT_WINDOW: usize = 5;
pub const CHECKPOINT_FILE: &str = "miner.ckpt";
pub const EVENTS_FILE: &str = "usage.events";

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("corrupt miner state: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UsageEvent {
    pub query_tags: Vec<String>,
    pub command: String,
    pub command_line: String,
    /// Line index in the history file.
    pub observed_at: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CoOccurrence {
    pub first: String,
    pub second: String,
    pub count: u64,
}

/// Query tags of a tag-search invocation, or `None` for any other line.
pub fn parse_search(line: &str) -> Option<Vec<String>> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let args: &[&str] = match tokens.as_slice() {
        ["tagman", "search", rest @ ..] => rest,
        ["tagman", "--tags", rest @ ..] => rest,
        ["man", "-tags", rest @ ..] => rest,
        _ => return None,
    };
    let mut tags: Vec<String> = Vec::new();
    let mut skip_value = false;
    for arg in args {
        if skip_value {
            skip_value = false;
            continue;
        }
        if matches!(*arg, "--limit" | "--dict") {
            skip_value = true;
            continue;
        }
        if arg.starts_with('-') {
            continue;
        }
        if let Ok(tag) = normalize(arg) {
            if !tags.contains(&tag) {
                tags.push(tag);
            }
        }
    }
    Some(tags)
}

/// Lines that count as history: non-blank and not `#` comments or timestamps.
fn history_line(line: &str) -> Option<&str> {
    let line = line.trim();
    (!line.is_empty() && !line.starts_with('#')).then_some(line)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingSearch {
    pub tags: Vec<String>,
    pub results: BTreeSet<String>,
    pub remaining: usize,
}

/// Streaming correlator.
#[derive(Debug, Clone)]
pub struct Miner {
    window: usize,
    pending: Option<PendingSearch>,
}

impl Miner {
    pub fn new(window: usize) -> Self {
        Miner {
            window: window.max(1),
            pending: None,
        }
    }

    pub fn resume(window: usize, pending: Option<PendingSearch>) -> Self {
        Miner {
            window: window.max(1),
            pending,
        }
    }

    pub fn pending(&self) -> Option<&PendingSearch> {
        self.pending.as_ref()
    }

    /// Processes history line `observed_at`. `resolve` maps search tags to the
    /// set of commands the search returned.
    pub fn feed(
        &mut self,
        observed_at: usize,
        line: &str,
        resolve: &dyn Fn(&[String]) -> BTreeSet<String>,
    ) -> Option<UsageEvent> {
        let line = history_line(line)?;
        if let Some(tags) = parse_search(line) {
            if !tags.is_empty() {
                self.pending = Some(PendingSearch {
                    results: resolve(&tags),
                    tags,
                    remaining: self.window,
                });
            }
            return None;
        }
        let command = line.split_whitespace().next()?.to_string();
        let mut query_tags = Vec::new();
        if let Some(pending) = self.pending.as_mut() {
            if pending.results.contains(&command) {
                query_tags = self.pending.take().map(|p| p.tags).unwrap_or_default();
            } else {
                pending.remaining -= 1;
                if pending.remaining == 0 {
                    self.pending = None;
                }
            }
        }
        Some(UsageEvent {
            query_tags,
            command,
            command_line: line.to_string(),
            observed_at,
        })
    }
}

/// Resolver backed by a tag index (and optional dictionary), matching what
/// a search would have shown.
pub fn index_resolver<'a>(
    index: &'a TagIndex,
    dict: Option<&'a SynonymDictionary>,
) -> impl Fn(&[String]) -> BTreeSet<String> + 'a {
    move |tags: &[String]| {
        lookup(index, tags, dict)
            .map(|results| results.into_iter().map(|r| r.command).collect())
            .unwrap_or_default()
    }
}

pub fn scan_history<S: AsRef<str>>(
    lines: &[S],
    window: usize,
    resolve: &dyn Fn(&[String]) -> BTreeSet<String>,
) -> Vec<UsageEvent> {
    let mut miner = Miner::new(window);
    lines
        .iter()
        .enumerate()
        .filter_map(|(i, line)| miner.feed(i, line.as_ref(), resolve))
        .collect()
}

/// Commands of each pipeline segment, in order.
pub fn pipeline_commands(line: &str) -> Vec<&str> {
    line.split('|')
        .filter_map(|segment| segment.split_whitespace().next())
        .collect()
}

pub fn cooccurrences<S: AsRef<str>>(lines: &[S]) -> Vec<CoOccurrence> {
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for line in lines.iter().filter_map(|l| history_line(l.as_ref())) {
        for pair in pipeline_commands(line).windows(2) {
            *counts
                .entry((pair[0].to_string(), pair[1].to_string()))
                .or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|((first, second), count)| CoOccurrence {
            first,
            second,
            count,
        })
        .collect()
}

/// The `k` most frequent distinct command lines for `command`; ties go to
/// the most recently observed, then lexicographic order.
pub fn example_usages(events: &[UsageEvent], command: &str, k: usize) -> Vec<String> {
    let mut stats: BTreeMap<&str, (u64, usize)> = BTreeMap::new();
    for e in events.iter().filter(|e| e.command == command) {
        let entry = stats.entry(e.command_line.as_str()).or_insert((0, 0));
        entry.0 += 1;
        entry.1 = entry.1.max(e.observed_at);
    }
    let mut ranked: Vec<(&str, (u64, usize))> = stats.into_iter().collect();
    ranked.sort_by(|(la, (ca, ra)), (lb, (cb, rb))| cb.cmp(ca).then(rb.cmp(ra)).then(la.cmp(lb)));
    ranked
        .into_iter()
        .take(k)
        .map(|(line, _)| line.to_string())
        .collect()
}

/// Selections that followed a tag search, per command.
pub fn selection_frequencies(events: &[UsageEvent]) -> Frequencies {
    let mut freq = Frequencies::new();
    for e in events.iter().filter(|e| !e.query_tags.is_empty()) {
        *freq.entry(e.command.clone()).or_default() += 1;
    }
    freq
}

/// Where mining stopped: the next history line to read, how many events
/// the log holds, and any search still waiting for its command.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Checkpoint {
    pub line_index: usize,
    pub events: usize,
    pub pending: Option<PendingSearch>,
}

impl Checkpoint {
    pub fn render(&self) -> String {
        let mut out = format!("line-index {}\nevents {}\n", self.line_index, self.events);
        if let Some(p) = &self.pending {
            let results: Vec<&str> = p.results.iter().map(String::as_str).collect();
            out.push_str(&format!(
                "pending {}\t{}\t{}\n",
                p.remaining,
                p.tags.join(" "),
                results.join(" ")
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, MinerError> {
        let corrupt = |l: &str| MinerError::Corrupt(format!("bad checkpoint line {l:?}"));
        let mut ckpt = Checkpoint::default();
        let mut saw_index = false;
        for line in text.lines() {
            if let Some(n) = line.strip_prefix("line-index ") {
                ckpt.line_index = n.trim().parse().map_err(|_| corrupt(line))?;
                saw_index = true;
            } else if let Some(n) = line.strip_prefix("events ") {
                ckpt.events = n.trim().parse().map_err(|_| corrupt(line))?;
            } else if let Some(rest) = line.strip_prefix("pending ") {
                let fields: Vec<&str> = rest.split('\t').collect();
                let [remaining, tags, results] = fields[..] else {
                    return Err(corrupt(line));
                };
                ckpt.pending = Some(PendingSearch {
                    remaining: remaining.parse().map_err(|_| corrupt(line))?,
                    tags: tags.split_whitespace().map(str::to_string).collect(),
                    results: results.split_whitespace().map(str::to_string).collect(),
                });
            } else if !line.trim().is_empty() {
                return Err(corrupt(line));
            }
        }
        if !saw_index {
            return Err(MinerError::Corrupt("checkpoint lacks line-index".into()));
        }
        Ok(ckpt)
    }
}

pub fn encode_event(e: &UsageEvent) -> String {
    format!(
        "{}\t{}\t{}\t{}",
        e.observed_at,
        e.command,
        e.query_tags.join(" "),
        e.command_line
    )
}

pub fn decode_event(line: &str) -> Result<UsageEvent, MinerError> {
    let corrupt = || MinerError::Corrupt(format!("bad event line {line:?}"));
    let mut fields = line.splitn(4, '\t');
    let observed_at = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(corrupt)?;
    let command = fields
        .next()
        .filter(|c| !c.is_empty())
        .ok_or_else(corrupt)?;
    let tags = fields.next().ok_or_else(corrupt)?;
    let command_line = fields.next().ok_or_else(corrupt)?;
    Ok(UsageEvent {
        query_tags: tags.split_whitespace().map(str::to_string).collect(),
        command: command.to_string(),
        command_line: command_line.to_string(),
        observed_at,
    })
}

/// Checkpoint, committed events, and the number of lines in the log file.
fn read_log(dir: &Path) -> Result<(Checkpoint, Vec<UsageEvent>, usize), MinerError> {
    let checkpoint = match std::fs::read_to_string(dir.join(CHECKPOINT_FILE)) {
        Ok(text) => Checkpoint::parse(&text)?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Checkpoint::default(),
        Err(e) => return Err(e.into()),
    };
    let text = match std::fs::read_to_string(dir.join(EVENTS_FILE)) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    if lines.len() < checkpoint.events {
        return Err(MinerError::Corrupt(format!(
            "checkpoint expects {} events, log has {}",
            checkpoint.events,
            lines.len()
        )));
    }
    let events = lines[..checkpoint.events]
        .iter()
        .map(|l| decode_event(l.trim_end_matches('\n')))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((checkpoint, events, lines.len()))
}

/// Committed state without touching any file.
pub fn read_committed(dir: &Path) -> Result<(Checkpoint, Vec<UsageEvent>), MinerError> {
    read_log(dir).map(|(c, e, _)| (c, e))
}

/// History lines ending in a newline; an unterminated last line is left out.
pub fn complete_lines(history: &str) -> Vec<&str> {
    match history.rfind('\n') {
        Some(end) => history[..=end].lines().collect(),
        None => Vec::new(),
    }
}

fn scan_from(
    lines: &[&str],
    checkpoint: &Checkpoint,
    window: usize,
    resolve: &dyn Fn(&[String]) -> BTreeSet<String>,
) -> (Vec<UsageEvent>, Option<PendingSearch>) {
    let mut miner = Miner::resume(window, checkpoint.pending.clone());
    let mut fresh = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(checkpoint.line_index) {
        fresh.extend(miner.feed(i, line, resolve));
    }
    (fresh, miner.pending().cloned())
}

/// Events in history lines the checkpoint has not covered yet.
pub fn scan_uncommitted(
    history: &str,
    checkpoint: &Checkpoint,
    window: usize,
    resolve: &dyn Fn(&[String]) -> BTreeSet<String>,
) -> Vec<UsageEvent> {
    scan_from(&complete_lines(history), checkpoint, window, resolve).0
}

/// Durable miner state: an append-only event log plus a checkpoint.
///
/// A commit appends events first and then atomically replaces the
/// checkpoint, which records how many log lines are valid. Log lines past
/// that count were written by a pass that never committed; they are
/// discarded on open and their history lines get mined again.
#[derive(Debug)]
pub struct MinerLog {
    dir: PathBuf,
    checkpoint: Checkpoint,
    events: Vec<UsageEvent>,
}

impl MinerLog {
    pub fn open(dir: &Path) -> Result<Self, MinerError> {
        let (checkpoint, events, log_lines) = read_log(dir)?;
        if log_lines > checkpoint.events {
            let kept: String = events.iter().map(|e| encode_event(e) + "\n").collect();
            tag_store::write_file_atomic(&dir.join(EVENTS_FILE), kept.as_bytes())?;
        }
        Ok(MinerLog {
            dir: dir.to_path_buf(),
            checkpoint,
            events,
        })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn events(&self) -> &[UsageEvent] {
        &self.events
    }

    pub fn commit(
        &mut self,
        new_events: Vec<UsageEvent>,
        mut checkpoint: Checkpoint,
    ) -> Result<(), MinerError> {
        std::fs::create_dir_all(&self.dir)?;
        if !new_events.is_empty() {
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.dir.join(EVENTS_FILE))?;
            let mut buf = String::new();
            for e in &new_events {
                buf.push_str(&encode_event(e));
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())?;
            file.sync_all()?;
        }
        checkpoint.events = self.events.len() + new_events.len();
        tag_store::write_file_atomic(
            &self.dir.join(CHECKPOINT_FILE),
            checkpoint.render().as_bytes(),
        )?;
        self.events.extend(new_events);
        self.checkpoint = checkpoint;
        Ok(())
    }

    /// Mines the history lines after the checkpoint and commits the result.
    /// An unterminated last line is left for the next pass. Returns the
    /// number of new events.
    pub fn mine(
        &mut self,
        history: &str,
        window: usize,
        resolve: &dyn Fn(&[String]) -> BTreeSet<String>,
    ) -> Result<usize, MinerError> {
        let lines = complete_lines(history);
        if self.checkpoint.line_index >= lines.len() {
            return Ok(0);
        }
        let (fresh, pending) = scan_from(&lines, &self.checkpoint, window, resolve);
        let count = fresh.len();
        let checkpoint = Checkpoint {
            line_index: lines.len(),
            events: 0,
            pending,
        };
        self.commit(fresh, checkpoint)?;
        Ok(count)
    }

    pub fn mine_file(
        &mut self,
        history: &Path,
        window: usize,
        resolve: &dyn Fn(&[String]) -> BTreeSet<String>,
    ) -> Result<usize, MinerError> {
        match std::fs::read(history) {
            Ok(bytes) => self.mine(&String::from_utf8_lossy(&bytes), window, resolve),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(e.into()),
        }
    }
}
