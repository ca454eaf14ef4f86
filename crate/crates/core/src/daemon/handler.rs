use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use super::repository::{RepoError, Repository};
use crate::overlay::OverlayError;
use crate::sync::frame::MAX_PAYLOAD;
use crate::sync::message::{codes, DecodeError, Message};
use crate::sync::transport::FrameHandler;
use crate::sync::SyncError;
use crate::tag_store::StoreError;

/// Examples rows holding a tab are peer failure notes, never example lines.
pub const PEER_FAILURE_ROW: &str = "peer-failure";

fn error_code(e: &RepoError) -> &'static str {
    match e {
        RepoError::Store(StoreError::EmptyQuery) => codes::EMPTY_QUERY,
        RepoError::Store(
            StoreError::EmptyAfterNormalization
            | StoreError::InvalidCommand(_)
            | StoreError::DictionaryOverlap { .. },
        )
        | RepoError::Overlay(
            OverlayError::EmptyAfterNormalization
            | OverlayError::Store(StoreError::InvalidCommand(_)),
        ) => codes::INVALID,
        RepoError::Sync(SyncError::UnknownPeer(_)) => codes::UNKNOWN_PEER,
        RepoError::Sync(_) => codes::SYNC_FAILED,
        _ => codes::FAILED,
    }
}

fn failure(e: RepoError) -> Message {
    Message::error(error_code(&e), e.to_string())
}

/// Serves one local request. Exactly one response per request, never
/// larger than a frame.
pub fn handle_request(repo: &Repository, request: Message) -> Message {
    let response = dispatch(repo, request);
    match response.encode() {
        Ok(text) if text.len() <= MAX_PAYLOAD => response,
        Ok(text) => Message::error(codes::TOO_LARGE, format!("{} bytes", text.len())),
        Err(e) => Message::error(codes::FAILED, e.to_string()),
    }
}

fn dispatch(repo: &Repository, request: Message) -> Message {
    match request {
        Message::Lookup { limit, dict, tags } => match repo.lookup(&tags, dict.as_deref(), limit) {
            Ok(results) => Message::Records {
                more: false,
                rows: results
                    .iter()
                    .map(|r| format!("{}\t{}\t{}", r.command, r.score, r.matched_tags.join(",")))
                    .collect(),
            },
            Err(e) => failure(e),
        },
        Message::AddTag {
            command,
            publish,
            tags,
        } => {
            if tags.is_empty() {
                return Message::error(codes::INVALID, "no tags given");
            }
            match repo.add_tags(&command, &tags, publish) {
                Ok(n) => Message::ack(&[n as u64]),
                Err(e) => failure(e),
            }
        }
        Message::AddExample {
            command,
            publish,
            line,
        } => match repo.add_example(&command, &line, publish) {
            Ok(added) => Message::ack(&[u64::from(added)]),
            Err(e) => failure(e),
        },
        Message::Examples {
            command,
            k,
            peers,
            with,
        } => match repo.examples(&command, k, with.as_deref(), peers) {
            Ok(list) if list.lines.is_empty() && !list.known => {
                Message::error(codes::UNKNOWN_COMMAND, command)
            }
            Ok(list) => {
                let mut rows = list.lines;
                rows.extend(
                    list.peer_failures
                        .into_iter()
                        .map(|(peer, why)| format!("{PEER_FAILURE_ROW}\t{peer}\t{why}")),
                );
                Message::Records { more: false, rows }
            }
            Err(e) => failure(e),
        },
        Message::Sync {
            peer_id,
            filter_tags,
        } => match repo.sync(&peer_id, &filter_tags) {
            Ok(r) => Message::ack(&[r.pushed as u64, r.pulled as u64]),
            Err(e) => failure(e),
        },
        Message::Import { path } => match repo.import(&PathBuf::from(path)) {
            Ok(n) => Message::ack(&[n as u64]),
            Err(e) => failure(e),
        },
        Message::Index { dirs } => {
            let dirs: Vec<PathBuf> = dirs.into_iter().map(PathBuf::from).collect();
            match repo.index(&dirs) {
                Ok(report) => Message::Ack {
                    counts: vec![report.mappings as u64, report.files as u64],
                    notes: report.failures,
                },
                Err(e) => failure(e),
            }
        }
        Message::Shutdown => Message::ack(&[]),
        other => Message::error(codes::UNEXPECTED, other.kind()),
    }
}

/// A session on the local endpoint. No authentication; `Shutdown` raises
/// the daemon's stop flag and closes the session.
pub struct LocalSession {
    repo: Arc<Repository>,
    stop: Arc<AtomicBool>,
}

impl LocalSession {
    pub fn new(repo: Arc<Repository>, stop: Arc<AtomicBool>) -> Self {
        LocalSession { repo, stop }
    }
}

impl FrameHandler for LocalSession {
    fn handle(&mut self, request: Result<Message, DecodeError>) -> (Message, bool) {
        match request {
            Ok(Message::Shutdown) => {
                self.stop.store(true, Ordering::SeqCst);
                (Message::ack(&[]), true)
            }
            Ok(request) => (handle_request(&self.repo, request), false),
            Err(e) => (e.into_error_message(), false),
        }
    }
}
