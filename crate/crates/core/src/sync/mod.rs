//! Peer synchronization of published tag mappings.
//!
//! Nodes exchange length-prefixed frames (see [`frame`]) carrying
//! [`message::Message`] payloads. A session opens with `Hello` carrying the
//! caller's node id and the token shared with that peer; afterwards the
//! caller may `Push` its publishable records and `Pull` the peer's, page by
//! page. Merging is plain set union and every received record is stamped
//! with the sending node as its source.

pub mod client;
pub mod frame;
pub mod message;
pub mod node;
pub mod transport;

use std::io;
use std::path::Path;

use thiserror::Error;

pub use client::{suggest_from_peers, synchronize, Suggestions, SyncReport};
pub use message::Message;
pub use node::{decode_wire_record, encode_wire_record, NodeState, PeerSession};
pub use transport::{Connector, FrameServer, MemoryNetwork, TcpConnector};

pub const DEFAULT_SYNC_PORT: u16 = 7317;
pub const PEERS_FILE: &str = "peers.conf";

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("frame payload of {0} bytes exceeds the 9999-byte limit")]
    FrameTooLarge(usize),
    #[error("cannot encode message: {0}")]
    Unencodable(String),
    #[error("cannot connect to {address}: {source}")]
    Connect { address: String, source: io::Error },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("cannot listen on {0}: {1}")]
    Bind(String, io::Error),
    #[error("unknown peer {0:?}")]
    UnknownPeer(String),
    #[error("peers file line {line}: {reason}")]
    PeersFile { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerConfig {
    pub node_id: String,
    pub address: String,
    pub token: String,
}

/// Parses `node_id<TAB>host:port<TAB>token` lines. Blank lines and lines
/// starting with `#` are ignored.
pub fn parse_peers(text: &str) -> Result<Vec<PeerConfig>, SyncError> {
    let mut peers: Vec<PeerConfig> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| SyncError::PeersFile {
            line: i + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [node_id, address, token] = fields[..] else {
            return Err(bad("expected node_id, address and token separated by tabs"));
        };
        if node_id.is_empty() || node_id.contains(char::is_whitespace) {
            return Err(bad("invalid node id"));
        }
        if address.is_empty() {
            return Err(bad("empty address"));
        }
        if peers.iter().any(|p| p.node_id == node_id) {
            return Err(bad("duplicate node id"));
        }
        peers.push(PeerConfig {
            node_id: node_id.to_string(),
            address: address.to_string(),
            token: token.to_string(),
        });
    }
    Ok(peers)
}

/// A missing peers file means no peers.
pub fn load_peers(path: &Path) -> Result<Vec<PeerConfig>, SyncError> {
    match std::fs::read_to_string(path) {
        Ok(text) => parse_peers(&text),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

pub fn render_peers(peers: &[PeerConfig]) -> String {
    peers
        .iter()
        .map(|p| format!("{}\t{}\t{}\n", p.node_id, p.address, p.token))
        .collect()
}
