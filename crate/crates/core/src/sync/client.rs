//! Client side of a peer session.

use std::collections::{BTreeMap, BTreeSet};

use super::frame::{read_frame, write_frame};
use super::message::{codes, Message};
use super::node::{chunks, decode_wire_record, encode_wire_record, NodeState};
use super::transport::{Connection, Connector};
use super::{PeerConfig, SyncError};
use crate::tag_store::{example_tag, normalize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SyncReport {
    /// Records the peer did not have before.
    pub pushed: usize,
    /// Records this node did not have before.
    pub pulled: usize,
}

struct Session {
    conn: Box<dyn Connection>,
}

impl Session {
    fn open(
        node_id: &str,
        peer: &PeerConfig,
        connector: &dyn Connector,
    ) -> Result<Self, SyncError> {
        let conn = connector
            .connect(&peer.address)
            .map_err(|source| SyncError::Connect {
                address: peer.address.clone(),
                source,
            })?;
        let mut session = Session { conn };
        let hello = Message::Hello {
            node_id: node_id.to_string(),
            token: peer.token.clone(),
        };
        match session.call(&hello)? {
            Message::HelloAck { .. } => Ok(session),
            Message::Error { code, detail } if code == codes::AUTH_FAILED => Err(SyncError::Auth(
                format!("{} rejected {detail}", peer.node_id),
            )),
            other => Err(unexpected("HelloAck", &other)),
        }
    }

    fn call(&mut self, request: &Message) -> Result<Message, SyncError> {
        write_frame(&mut self.conn, &request.encode()?)?;
        let payload = read_frame(&mut self.conn)?
            .ok_or_else(|| SyncError::Protocol("connection closed by peer".into()))?;
        Message::decode(&payload).map_err(|e| SyncError::Protocol(format!("{e:?}")))
    }

    /// Fetches every page of `filter` and returns the raw rows.
    fn pull_all(&mut self, filter: &[String]) -> Result<Vec<String>, SyncError> {
        let mut after: Option<(String, String)> = None;
        let mut rows = Vec::new();
        loop {
            let request = Message::Pull {
                after: after.clone(),
                filter_tags: filter.to_vec(),
            };
            match self.call(&request)? {
                Message::Records { more, rows: page } => {
                    if let Some(last) = page.last() {
                        let mut fields = last.split('\t');
                        let tag = fields.next().unwrap_or_default().to_string();
                        let command = fields.next().unwrap_or_default().to_string();
                        after = Some((tag, command));
                    }
                    let done = !more || page.is_empty();
                    rows.extend(page);
                    if done {
                        return Ok(rows);
                    }
                }
                other => return Err(unexpected("Records", &other)),
            }
        }
    }
}

fn unexpected(wanted: &str, got: &Message) -> SyncError {
    match got {
        Message::Error { code, detail } => {
            SyncError::Protocol(format!("expected {wanted}, peer answered {code}: {detail}"))
        }
        other => SyncError::Protocol(format!("expected {wanted}, got {}", other.kind())),
    }
}

fn normalized_filter(tags: &[String]) -> Result<Vec<String>, SyncError> {
    let mut out = tags
        .iter()
        .map(|t| normalize(t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SyncError::Protocol(format!("filter: {e}")))?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// Pushes this node's publishable records to `peer`, then pulls the peer's.
/// Pulled records are merged with source `Peer(peer.node_id)`; nothing is
/// ever removed locally.
pub fn synchronize(
    node: &NodeState,
    peer: &PeerConfig,
    filter_tags: &[String],
    connector: &dyn Connector,
) -> Result<SyncReport, SyncError> {
    let filter = normalized_filter(filter_tags)?;
    let mut session = Session::open(node.node_id(), peer, connector)?;
    let mut report = SyncReport::default();

    let rows: Vec<String> = node
        .publishable_for(Some(&peer.node_id), &filter)
        .iter()
        .map(encode_wire_record)
        .collect();
    for records in chunks(rows) {
        match session.call(&Message::Push { records })? {
            Message::Ack { counts, .. } if counts.len() == 1 => report.pushed += counts[0] as usize,
            other => return Err(unexpected("Ack", &other)),
        }
    }

    let rows = session.pull_all(&filter)?;
    report.pulled = node
        .merge_rows(&peer.node_id, &rows)
        .map_err(|e| SyncError::Protocol(e.to_string()))?;
    Ok(report)
}

#[derive(Debug, Default)]
pub struct Suggestions {
    /// Example lines with the number of peers offering each, most shared first.
    pub lines: Vec<(String, usize)>,
    pub failures: Vec<(String, SyncError)>,
}

/// Asks each peer for the example lines it publishes for `command`.
pub fn suggest_from_peers(
    node_id: &str,
    peers: &[PeerConfig],
    command: &str,
    connector: &dyn Connector,
) -> Suggestions {
    let mut out = Suggestions::default();
    let filter = match normalize(&example_tag(command)) {
        Ok(t) => vec![t],
        Err(_) => return out,
    };
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for peer in peers {
        let fetched = Session::open(node_id, peer, connector).and_then(|mut s| s.pull_all(&filter));
        let rows = match fetched {
            Ok(rows) => rows,
            Err(e) => {
                out.failures.push((peer.node_id.clone(), e));
                continue;
            }
        };
        let mut lines = BTreeSet::new();
        for row in rows {
            match decode_wire_record(&row, &peer.node_id) {
                Ok(m) if filter.contains(&m.tag) => {
                    lines.insert(m.command);
                }
                Ok(_) => {}
                Err(e) => {
                    out.failures
                        .push((peer.node_id.clone(), SyncError::Protocol(e.to_string())));
                }
            }
        }
        for line in lines {
            *counts.entry(line).or_default() += 1;
        }
    }
    let mut lines: Vec<(String, usize)> = counts.into_iter().collect();
    lines.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.lines = lines;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::UserTagFile;
    use crate::sync::transport::MemoryNetwork;
    use crate::tag_store::{SharedStore, Source, TagIndex};
    use std::sync::{Arc, RwLock};

    fn peer(id: &str, token: &str) -> PeerConfig {
        PeerConfig {
            node_id: id.to_string(),
            address: format!("mem:{id}"),
            token: token.to_string(),
        }
    }

    fn node(net: &MemoryNetwork, id: &str, peers: Vec<PeerConfig>) -> Arc<NodeState> {
        let n = Arc::new(NodeState::new(
            id,
            SharedStore::new(TagIndex::new()),
            Arc::new(RwLock::new(UserTagFile::new(id).unwrap())),
            peers,
        ));
        net.listen(&format!("mem:{id}"), n.handler_factory());
        n
    }

    #[test]
    fn two_node_sync_is_idempotent() {
        let net = MemoryNetwork::new();
        let a = node(&net, "a", vec![peer("b", "t")]);
        let b = node(&net, "b", vec![peer("a", "t")]);
        a.overlay()
            .write()
            .unwrap()
            .add_user_tag("wipe", "rm", true, 1)
            .unwrap();
        a.overlay()
            .write()
            .unwrap()
            .add_user_tag("hidden", "rm", false, 1)
            .unwrap();

        let r = synchronize(&a, &peer("b", "t"), &[], &net).unwrap();
        assert_eq!(
            r,
            SyncReport {
                pushed: 1,
                pulled: 0
            }
        );
        assert!(b
            .store()
            .read()
            .contains("wipe", "rm", &Source::Peer("a".into())));
        assert!(!b.store().read().tags().any(|t| t == "hidden"));
        assert!(a.store().read().is_empty());
        assert_eq!(
            synchronize(&a, &peer("b", "t"), &[], &net).unwrap(),
            SyncReport::default()
        );

        let r = synchronize(&b, &peer("a", "t"), &[], &net).unwrap();
        assert_eq!(r, SyncReport::default());
    }

    #[test]
    fn filter_limits_both_directions() {
        let net = MemoryNetwork::new();
        let a = node(&net, "a", vec![peer("b", "t")]);
        let b = node(&net, "b", vec![peer("a", "t")]);
        a.overlay()
            .write()
            .unwrap()
            .add_user_tag("wipe", "rm", true, 1)
            .unwrap();
        a.overlay()
            .write()
            .unwrap()
            .add_user_tag("list", "ls", true, 1)
            .unwrap();
        b.overlay()
            .write()
            .unwrap()
            .add_user_tag("Wipe", "shred", true, 1)
            .unwrap();
        b.overlay()
            .write()
            .unwrap()
            .add_user_tag("copy", "cp", true, 1)
            .unwrap();
        let r = synchronize(&a, &peer("b", "t"), &["WIPE".into()], &net).unwrap();
        assert_eq!(
            r,
            SyncReport {
                pushed: 1,
                pulled: 1
            }
        );
        assert_eq!(a.store().read().len(), 1);
        assert_eq!(b.store().read().len(), 1);
    }

    #[test]
    fn auth_and_connect_errors() {
        let net = MemoryNetwork::new();
        let a = node(&net, "a", vec![peer("b", "t")]);
        let _b = node(&net, "b", vec![peer("a", "right")]);
        assert!(matches!(
            synchronize(&a, &peer("b", "wrong"), &[], &net),
            Err(SyncError::Auth(_))
        ));
        assert!(matches!(
            synchronize(&a, &peer("zz", "t"), &[], &net),
            Err(SyncError::Connect { .. })
        ));
    }

    #[test]
    fn suggestions_count_across_peers() {
        let net = MemoryNetwork::new();
        let peers = vec![peer("b", "t"), peer("c", "t"), peer("down", "t")];
        let _a = node(&net, "a", peers.clone());
        let b = node(&net, "b", vec![peer("a", "t")]);
        let c = node(&net, "c", vec![peer("a", "t")]);
        for (n, line, publish) in [
            (&b, "ps aux | grep java", true),
            (&b, "ps -ef", true),
            (&c, "ps aux | grep java", true),
            (&c, "ps -secret", false),
        ] {
            n.overlay()
                .write()
                .unwrap()
                .add_user_example("ps", line, publish, 1)
                .unwrap();
        }
        let s = suggest_from_peers("a", &peers, "ps", &net);
        assert_eq!(
            s.lines,
            [
                ("ps aux | grep java".to_string(), 2),
                ("ps -ef".to_string(), 1)
            ]
        );
        assert_eq!(s.failures.len(), 1);
        assert_eq!(s.failures[0].0, "down");
        assert!(suggest_from_peers("a", &[], "ps", &net).lines.is_empty());
    }
}
