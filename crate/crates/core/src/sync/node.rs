//! Node state shared by the sync server and client, and the server session.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock, RwLockReadGuard};

use super::frame::MAX_PAYLOAD;
use super::message::{codes, DecodeError, Message};
use super::transport::{FrameHandler, HandlerFactory};
use super::PeerConfig;
use crate::overlay::UserTagFile;
use crate::tag_store::{normalize, validate_command, SharedStore, Source, StoreError, TagMapping};

/// Longest wire row that still fits in a frame on its own.
pub const MAX_ROW: usize = MAX_PAYLOAD - "Records\t0\n".len();

/// `tag<TAB>command<TAB>created_at`. The source is not sent: receivers
/// stamp records with the sending node.
pub fn encode_wire_record(m: &TagMapping) -> String {
    format!("{}\t{}\t{}", m.tag, m.command, m.created_at)
}

pub fn decode_wire_record(row: &str, sender: &str) -> Result<TagMapping, StoreError> {
    let corrupt = |why: &str| StoreError::CorruptStore(format!("{why}: {row:?}"));
    let fields: Vec<&str> = row.split('\t').collect();
    let [tag, command, created_at] = fields[..] else {
        return Err(corrupt("expected 3 fields"));
    };
    if normalize(tag).ok().as_deref() != Some(tag) {
        return Err(corrupt("tag is not normalized"));
    }
    validate_command(tag, command)?;
    Ok(TagMapping {
        tag: tag.to_string(),
        raw_tag: tag.to_string(),
        command: command.to_string(),
        source: Source::Peer(sender.to_string()),
        created_at: created_at.parse().map_err(|_| corrupt("bad timestamp"))?,
    })
}

pub struct NodeState {
    node_id: String,
    store: SharedStore,
    overlay: Arc<RwLock<UserTagFile>>,
    peers: RwLock<Vec<PeerConfig>>,
}

impl NodeState {
    pub fn new(
        node_id: &str,
        store: SharedStore,
        overlay: Arc<RwLock<UserTagFile>>,
        peers: Vec<PeerConfig>,
    ) -> Self {
        NodeState {
            node_id: node_id.to_string(),
            store,
            overlay,
            peers: RwLock::new(peers),
        }
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn store(&self) -> &SharedStore {
        &self.store
    }

    pub fn overlay(&self) -> &Arc<RwLock<UserTagFile>> {
        &self.overlay
    }

    pub fn peers(&self) -> RwLockReadGuard<'_, Vec<PeerConfig>> {
        self.peers.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn set_peers(&self, peers: Vec<PeerConfig>) {
        *self.peers.write().unwrap_or_else(|e| e.into_inner()) = peers;
    }

    pub fn peer(&self, node_id: &str) -> Option<PeerConfig> {
        self.peers().iter().find(|p| p.node_id == node_id).cloned()
    }

    /// What this node offers `requester`: the user's published mappings plus
    /// everything learned from peers other than `requester` itself, one row
    /// per (tag, command) with the earliest timestamp, sorted, restricted to
    /// `filter` when it is non-empty.
    pub fn publishable_for(&self, requester: Option<&str>, filter: &[String]) -> Vec<TagMapping> {
        let mut best: BTreeMap<(String, String), TagMapping> = BTreeMap::new();
        let mut offer = |m: TagMapping| {
            if !filter.is_empty() && !filter.contains(&m.tag) {
                return;
            }
            if encode_wire_record(&m).len() > MAX_ROW {
                return;
            }
            let key = (m.tag.clone(), m.command.clone());
            match best.get_mut(&key) {
                Some(cur) if cur.created_at <= m.created_at => {}
                Some(cur) => *cur = m,
                None => {
                    best.insert(key, m);
                }
            }
        };
        let published = self
            .overlay
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .publishable_set();
        published.into_iter().for_each(&mut offer);
        let store = self.store.read();
        store
            .mappings()
            .filter(|m| match &m.source {
                Source::Peer(p) => Some(p.as_str()) != requester,
                _ => false,
            })
            .for_each(&mut offer);
        best.into_values().collect()
    }

    /// Decodes `rows` from `sender` and merges them. Returns how many were new.
    pub fn merge_rows(&self, sender: &str, rows: &[String]) -> Result<usize, StoreError> {
        let mappings = rows
            .iter()
            .map(|r| decode_wire_record(r, sender))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.store.add_all(mappings))
    }

    pub fn session(self: &Arc<Self>) -> PeerSession {
        PeerSession {
            node: self.clone(),
            peer: None,
        }
    }

    pub fn handler_factory(self: &Arc<Self>) -> HandlerFactory {
        let node = self.clone();
        Arc::new(move || Box::new(node.session()) as Box<dyn FrameHandler>)
    }
}

/// Splits wire rows into `Records` pages starting after `after`.
/// Returns the page and whether more rows follow.
pub(crate) fn page(
    rows: &[(String, String, String)],
    after: Option<&(String, String)>,
) -> (Vec<String>, bool) {
    let start = match after {
        Some(cursor) => rows.partition_point(|(t, c, _)| (t, c) <= (&cursor.0, &cursor.1)),
        None => 0,
    };
    let mut size = "Records\t0".len();
    let mut out = Vec::new();
    for (_, _, row) in &rows[start..] {
        if size + 1 + row.len() > MAX_PAYLOAD {
            return (out, true);
        }
        size += 1 + row.len();
        out.push(row.clone());
    }
    (out, false)
}

/// Splits rows into `Push` chunks that each fit in one frame.
pub(crate) fn chunks(rows: Vec<String>) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    let mut size = 0;
    for row in rows {
        if out.is_empty() || size + 1 + row.len() > MAX_PAYLOAD {
            out.push(Vec::new());
            size = "Push".len();
        }
        size += 1 + row.len();
        if let Some(last) = out.last_mut() {
            last.push(row);
        }
    }
    out
}

fn normalize_filter(tags: &[String]) -> Result<Vec<String>, StoreError> {
    let mut out: Vec<String> = tags
        .iter()
        .map(|t| normalize(t))
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// Server side of one peer session: `Hello`, then any number of `Pull` and
/// `Push` requests.
pub struct PeerSession {
    node: Arc<NodeState>,
    peer: Option<String>,
}

impl PeerSession {
    fn pull(&self, peer: &str, after: Option<(String, String)>, filter: &[String]) -> Message {
        let filter = match normalize_filter(filter) {
            Ok(f) => f,
            Err(e) => return Message::error(codes::INVALID, e.to_string()),
        };
        let rows: Vec<(String, String, String)> = self
            .node
            .publishable_for(Some(peer), &filter)
            .into_iter()
            .map(|m| {
                let row = encode_wire_record(&m);
                (m.tag, m.command, row)
            })
            .collect();
        let (rows, more) = page(&rows, after.as_ref());
        Message::Records { more, rows }
    }
}

impl FrameHandler for PeerSession {
    fn handle(&mut self, request: Result<Message, DecodeError>) -> (Message, bool) {
        let request = match request {
            Ok(r) => r,
            Err(e) => return (e.into_error_message(), false),
        };
        let Some(peer) = self.peer.clone() else {
            return match request {
                Message::Hello { node_id, token } => {
                    let ok = self.node.peer(&node_id).is_some_and(|p| p.token == token);
                    if !ok {
                        return (Message::error(codes::AUTH_FAILED, node_id), true);
                    }
                    self.peer = Some(node_id);
                    let ack = Message::HelloAck {
                        node_id: self.node.node_id().to_string(),
                    };
                    (ack, false)
                }
                other => (Message::error(codes::UNAUTHENTICATED, other.kind()), false),
            };
        };
        let response = match request {
            Message::Pull { after, filter_tags } => self.pull(&peer, after, &filter_tags),
            Message::Push { records } => match self.node.merge_rows(&peer, &records) {
                Ok(added) => Message::ack(&[added as u64]),
                Err(e) => Message::error(codes::MALFORMED, e.to_string()),
            },
            other => Message::error(codes::UNEXPECTED, other.kind()),
        };
        (response, false)
    }
}
