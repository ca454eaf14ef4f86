//! Frame payloads.
//!
//! A payload is a header line of tab-separated fields, the first naming the
//! message kind, optionally followed by newline-separated body lines:
//!
//! ```text
//! Pull\t<after-tag>\t<after-command>
//! <filter-tag>
//! <filter-tag>
//! ```
//!
//! Peer sessions use `Hello`, `HelloAck`, `Pull`, `Push`, `Records`, `Ack`
//! and `Error`. The daemon's local endpoint adds the request kinds `Lookup`,
//! `AddTag`, `AddExample`, `Examples`, `Sync`, `Import`, `Index` and
//! `Shutdown`, answered with `Records`, `Ack` or `Error`.

use super::SyncError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello {
        node_id: String,
        token: String,
    },
    HelloAck {
        node_id: String,
    },
    /// Page request. `after` is the last (tag, command) already received.
    Pull {
        after: Option<(String, String)>,
        filter_tags: Vec<String>,
    },
    Push {
        records: Vec<String>,
    },
    Records {
        more: bool,
        rows: Vec<String>,
    },
    Ack {
        counts: Vec<u64>,
        notes: Vec<String>,
    },
    Error {
        code: String,
        detail: String,
    },
    Lookup {
        limit: usize,
        dict: Option<String>,
        tags: Vec<String>,
    },
    AddTag {
        command: String,
        publish: bool,
        tags: Vec<String>,
    },
    AddExample {
        command: String,
        publish: bool,
        line: String,
    },
    Examples {
        command: String,
        k: usize,
        peers: bool,
        with: Option<String>,
    },
    Sync {
        peer_id: String,
        filter_tags: Vec<String>,
    },
    Import {
        path: String,
    },
    Index {
        dirs: Vec<String>,
    },
    Shutdown,
}

/// Error codes carried by `Error` frames.
pub mod codes {
    pub const MALFORMED: &str = "malformed";
    pub const UNKNOWN_REQUEST: &str = "unknown-request";
    pub const UNAUTHENTICATED: &str = "unauthenticated";
    pub const AUTH_FAILED: &str = "auth-failed";
    pub const UNEXPECTED: &str = "unexpected-message";
    pub const EMPTY_QUERY: &str = "empty-query";
    pub const UNKNOWN_PEER: &str = "unknown-peer";
    pub const UNKNOWN_COMMAND: &str = "unknown-command";
    pub const SYNC_FAILED: &str = "sync-failed";
    pub const INVALID: &str = "invalid-argument";
    pub const FAILED: &str = "failed";
    pub const TOO_LARGE: &str = "response-too-large";
}

/// Why a payload could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    UnknownKind(String),
    Malformed(String),
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::UnknownKind(_) => codes::UNKNOWN_REQUEST,
            DecodeError::Malformed(_) => codes::MALFORMED,
        }
    }

    pub fn into_error_message(self) -> Message {
        let code = self.code().to_string();
        let detail = match self {
            DecodeError::UnknownKind(k) => k,
            DecodeError::Malformed(d) => d,
        };
        Message::Error { code, detail }
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn publish_flag(b: bool) -> &'static str {
    if b {
        "pub"
    } else {
        "priv"
    }
}

impl Message {
    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        Message::Error {
            code: code.to_string(),
            detail: detail.into().replace(['\t', '\n', '\r'], " "),
        }
    }

    pub fn ack(counts: &[u64]) -> Self {
        Message::Ack {
            counts: counts.to_vec(),
            notes: Vec::new(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "Hello",
            Message::HelloAck { .. } => "HelloAck",
            Message::Pull { .. } => "Pull",
            Message::Push { .. } => "Push",
            Message::Records { .. } => "Records",
            Message::Ack { .. } => "Ack",
            Message::Error { .. } => "Error",
            Message::Lookup { .. } => "Lookup",
            Message::AddTag { .. } => "AddTag",
            Message::AddExample { .. } => "AddExample",
            Message::Examples { .. } => "Examples",
            Message::Sync { .. } => "Sync",
            Message::Import { .. } => "Import",
            Message::Index { .. } => "Index",
            Message::Shutdown => "Shutdown",
        }
    }

    fn parts(&self) -> (Vec<String>, Vec<String>) {
        let s = |v: &str| v.to_string();
        match self {
            Message::Hello { node_id, token } => (vec![s(node_id), s(token)], vec![]),
            Message::HelloAck { node_id } => (vec![s(node_id)], vec![]),
            Message::Pull { after, filter_tags } => {
                let (t, c) = after.clone().unwrap_or_default();
                (vec![t, c], filter_tags.clone())
            }
            Message::Push { records } => (vec![], records.clone()),
            Message::Records { more, rows } => (vec![s(flag(*more))], rows.clone()),
            Message::Ack { counts, notes } => {
                (counts.iter().map(u64::to_string).collect(), notes.clone())
            }
            Message::Error { code, detail } => (vec![s(code), s(detail)], vec![]),
            Message::Lookup { limit, dict, tags } => (
                vec![limit.to_string(), dict.clone().unwrap_or_default()],
                tags.clone(),
            ),
            Message::AddTag {
                command,
                publish,
                tags,
            } => (vec![s(command), s(publish_flag(*publish))], tags.clone()),
            Message::AddExample {
                command,
                publish,
                line,
            } => (vec![s(command), s(publish_flag(*publish))], vec![s(line)]),
            Message::Examples {
                command,
                k,
                peers,
                with,
            } => (
                vec![
                    s(command),
                    k.to_string(),
                    s(flag(*peers)),
                    with.clone().unwrap_or_default(),
                ],
                vec![],
            ),
            Message::Sync {
                peer_id,
                filter_tags,
            } => (vec![s(peer_id)], filter_tags.clone()),
            Message::Import { path } => (vec![s(path)], vec![]),
            Message::Index { dirs } => (vec![], dirs.clone()),
            Message::Shutdown => (vec![], vec![]),
        }
    }

    pub fn encode(&self) -> Result<String, SyncError> {
        let (fields, lines) = self.parts();
        if let Some(f) = fields.iter().find(|f| f.contains(['\t', '\n'])) {
            return Err(SyncError::Unencodable(format!("field {f:?}")));
        }
        if let Some(l) = lines.iter().find(|l| l.is_empty() || l.contains('\n')) {
            return Err(SyncError::Unencodable(format!("body line {l:?}")));
        }
        let mut out = String::from(self.kind());
        for f in &fields {
            out.push('\t');
            out.push_str(f);
        }
        for l in &lines {
            out.push('\n');
            out.push_str(l);
        }
        Ok(out)
    }

    pub fn decode(payload: &str) -> Result<Message, DecodeError> {
        let (header, body) = match payload.split_once('\n') {
            Some((h, b)) => (h, Some(b)),
            None => (payload, None),
        };
        let lines: Vec<String> = body
            .map(|b| b.split('\n').map(str::to_string).collect())
            .unwrap_or_default();
        if lines.iter().any(String::is_empty) {
            return Err(DecodeError::Malformed("empty body line".into()));
        }
        let mut fields = header.split('\t');
        let kind = fields.next().unwrap_or_default();
        let fields: Vec<&str> = fields.collect();
        let bad = |why: &str| DecodeError::Malformed(format!("{kind}: {why}"));
        let arity = |n: usize| {
            if fields.len() == n {
                Ok(())
            } else {
                Err(bad(&format!("expected {n} fields, got {}", fields.len())))
            }
        };
        let no_body = || {
            if lines.is_empty() {
                Ok(())
            } else {
                Err(bad("unexpected body"))
            }
        };
        let non_empty = |v: &str, what: &str| {
            if v.is_empty() {
                Err(bad(&format!("empty {what}")))
            } else {
                Ok(v.to_string())
            }
        };
        let bool_field = |v: &str| match v {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad("expected 0 or 1")),
        };
        let publish_field = |v: &str| match v {
            "pub" => Ok(true),
            "priv" => Ok(false),
            _ => Err(bad("expected pub or priv")),
        };
        let number = |v: &str| v.parse::<usize>().map_err(|_| bad("expected a number"));
        let optional = |v: &str| (!v.is_empty()).then(|| v.to_string());

        let msg = match kind {
            "Hello" => {
                arity(2)?;
                no_body()?;
                Message::Hello {
                    node_id: non_empty(fields[0], "node id")?,
                    token: fields[1].to_string(),
                }
            }
            "HelloAck" => {
                arity(1)?;
                no_body()?;
                Message::HelloAck {
                    node_id: non_empty(fields[0], "node id")?,
                }
            }
            "Pull" => {
                arity(2)?;
                let after = match (fields[0], fields[1]) {
                    ("", "") => None,
                    ("", _) | (_, "") => return Err(bad("half a cursor")),
                    (t, c) => Some((t.to_string(), c.to_string())),
                };
                Message::Pull {
                    after,
                    filter_tags: lines,
                }
            }
            "Push" => {
                arity(0)?;
                Message::Push { records: lines }
            }
            "Records" => {
                arity(1)?;
                Message::Records {
                    more: bool_field(fields[0])?,
                    rows: lines,
                }
            }
            "Ack" => Message::Ack {
                counts: fields
                    .iter()
                    .map(|f| f.parse::<u64>().map_err(|_| bad("expected counts")))
                    .collect::<Result<_, _>>()?,
                notes: lines,
            },
            "Error" => {
                arity(2)?;
                no_body()?;
                Message::Error {
                    code: non_empty(fields[0], "error code")?,
                    detail: fields[1].to_string(),
                }
            }
            "Lookup" => {
                arity(2)?;
                Message::Lookup {
                    limit: number(fields[0])?,
                    dict: optional(fields[1]),
                    tags: lines,
                }
            }
            "AddTag" => {
                arity(2)?;
                Message::AddTag {
                    command: non_empty(fields[0], "command")?,
                    publish: publish_field(fields[1])?,
                    tags: lines,
                }
            }
            "AddExample" => {
                arity(2)?;
                let [line] = &lines[..] else {
                    return Err(bad("expected one example line"));
                };
                Message::AddExample {
                    command: non_empty(fields[0], "command")?,
                    publish: publish_field(fields[1])?,
                    line: line.clone(),
                }
            }
            "Examples" => {
                arity(4)?;
                no_body()?;
                Message::Examples {
                    command: non_empty(fields[0], "command")?,
                    k: number(fields[1])?,
                    peers: bool_field(fields[2])?,
                    with: optional(fields[3]),
                }
            }
            "Sync" => {
                arity(1)?;
                Message::Sync {
                    peer_id: non_empty(fields[0], "peer id")?,
                    filter_tags: lines,
                }
            }
            "Import" => {
                arity(1)?;
                no_body()?;
                Message::Import {
                    path: non_empty(fields[0], "path")?,
                }
            }
            "Index" => {
                arity(0)?;
                Message::Index { dirs: lines }
            }
            "Shutdown" => {
                arity(0)?;
                no_body()?;
                Message::Shutdown
            }
            other => return Err(DecodeError::UnknownKind(other.to_string())),
        };
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples() -> Vec<Message> {
        vec![
            Message::Hello {
                node_id: "a".into(),
                token: "s3cret".into(),
            },
            Message::Hello {
                node_id: "a".into(),
                token: "".into(),
            },
            Message::HelloAck {
                node_id: "b".into(),
            },
            Message::Pull {
                after: None,
                filter_tags: vec![],
            },
            Message::Pull {
                after: Some(("delete".into(), "rm".into())),
                filter_tags: vec!["wipe".into(), "example:ps".into()],
            },
            Message::Push {
                records: vec!["wipe\trm\tuser:a\t1".into()],
            },
            Message::Push { records: vec![] },
            Message::Records {
                more: true,
                rows: vec!["rm\t1.00\tdelete".into()],
            },
            Message::Records {
                more: false,
                rows: vec![],
            },
            Message::ack(&[]),
            Message::Ack {
                counts: vec![3, 0],
                notes: vec!["bad.1: missing .TH".into()],
            },
            Message::error("auth-failed", ""),
            Message::Lookup {
                limit: 10,
                dict: Some("default".into()),
                tags: vec!["delete".into()],
            },
            Message::Lookup {
                limit: 0,
                dict: None,
                tags: vec![],
            },
            Message::AddTag {
                command: "rm".into(),
                publish: true,
                tags: vec!["wipe".into()],
            },
            Message::AddExample {
                command: "ps".into(),
                publish: false,
                line: "ps aux | grep java".into(),
            },
            Message::Examples {
                command: "ps".into(),
                k: 5,
                peers: true,
                with: Some("grep".into()),
            },
            Message::Examples {
                command: "ps".into(),
                k: 5,
                peers: false,
                with: None,
            },
            Message::Sync {
                peer_id: "b".into(),
                filter_tags: vec!["wipe".into()],
            },
            Message::Import {
                path: "/tmp/map.tagmap.xml".into(),
            },
            Message::Index {
                dirs: vec!["/usr/share/man".into()],
            },
            Message::Shutdown,
        ]
    }

    #[test]
    fn every_kind_roundtrips() {
        for m in samples() {
            let text = m.encode().unwrap();
            assert_eq!(Message::decode(&text).unwrap(), m, "{text:?}");
        }
    }

    #[test]
    fn exact_payloads() {
        assert_eq!(
            Message::Hello {
                node_id: "a".into(),
                token: "t".into()
            }
            .encode()
            .unwrap(),
            "Hello\ta\tt"
        );
        assert_eq!(
            Message::Records {
                more: false,
                rows: vec!["rm".into(), "rmdir".into()]
            }
            .encode()
            .unwrap(),
            "Records\t0\nrm\nrmdir"
        );
        assert_eq!(Message::ack(&[1, 2]).encode().unwrap(), "Ack\t1\t2");
    }

    #[test]
    fn decode_failures() {
        assert_eq!(
            Message::decode("XYZ"),
            Err(DecodeError::UnknownKind("XYZ".into()))
        );
        for bad in [
            "Hello\ta",
            "Hello\t\tt",
            "Pull\tx\t",
            "Records\t2",
            "Ack\tx",
            "Lookup\tten\t",
            "AddTag\trm\tpublic",
            "AddExample\tps\tpub",
            "Examples\tps\t1\t0",
            "Push\nrow\n\nrow",
            "Shutdown\nx",
            "",
        ] {
            assert!(
                matches!(
                    Message::decode(bad),
                    Err(DecodeError::Malformed(_)) | Err(DecodeError::UnknownKind(_))
                ),
                "{bad:?}"
            );
        }
        assert!(Message::decode("").is_err());
    }

    #[test]
    fn unencodable_fields() {
        assert!(Message::Import {
            path: "a\tb".into()
        }
        .encode()
        .is_err());
        assert!(Message::Push {
            records: vec!["".into()]
        }
        .encode()
        .is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_payloads_never_panic(payload in "\\PC{0,60}") {
            let _ = Message::decode(&payload);
        }

        #[test]
        fn lookup_roundtrip(tags in prop::collection::vec("[a-z][a-z0-9-]{0,8}", 0..6), limit in 0usize..100) {
            let m = Message::Lookup { limit, dict: None, tags };
            prop_assert_eq!(Message::decode(&m.encode().unwrap()).unwrap(), m);
        }
    }
}
