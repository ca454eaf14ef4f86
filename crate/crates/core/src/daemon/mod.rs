//! The long-running process: a local request endpoint, the peer sync
//! service, and a periodic history miner, all over one [`Repository`].

mod handler;
mod repository;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

pub use handler::{handle_request, LocalSession, PEER_FAILURE_ROW};
pub use repository::{ExampleList, IndexReport, RepoError, Repository};

use crate::config::{self, Environment};
use crate::overlay;
use crate::sync::{self, FrameServer, SyncError, TcpConnector};

pub const CONFIG_FILE: &str = "daemon.conf";
pub const DEFAULT_LOCAL_ADDRESS: &str = "127.0.0.1:7316";
pub const DEFAULT_MINER_INTERVAL: u64 = 60;

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error("cannot determine {0}: set HOME or the corresponding TAGMAN_ variable")]
    Unresolvable(&'static str),
    #[error("{path}: line {line}: {reason}")]
    Config {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DaemonConfig {
    pub store_path: PathBuf,
    pub user_store_path: PathBuf,
    pub history_path: PathBuf,
    /// Peer sync service.
    pub listen_address: String,
    pub miner_interval_seconds: u64,
    pub peers_path: PathBuf,
    /// Local request endpoint.
    pub local_address: String,
    pub node_id: String,
    pub user: String,
}

impl DaemonConfig {
    /// Built-in defaults, then `<store-dir>/daemon.conf` if present, then
    /// any path set through `TAGMAN_*` variables.
    pub fn resolve(env: &Environment) -> Result<Self, DaemonError> {
        let mut cfg = Self::defaults(env)?;
        let path = cfg.state_dir().join(CONFIG_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => cfg.apply(&text, &path)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        if let Some(v) = env.get(config::STORE_VAR).filter(|v| !v.is_empty()) {
            cfg.store_path = PathBuf::from(v);
        }
        if let Some(v) = env.get(overlay::USER_STORE_VAR).filter(|v| !v.is_empty()) {
            cfg.user_store_path = PathBuf::from(v);
        }
        if let Some(v) = env.get(config::HISTORY_VAR).filter(|v| !v.is_empty()) {
            cfg.history_path = PathBuf::from(v);
        }
        Ok(cfg)
    }

    pub fn defaults(env: &Environment) -> Result<Self, DaemonError> {
        let store_path = config::store_path(env).ok_or(DaemonError::Unresolvable("store path"))?;
        let dir = config::store_dir(&store_path);
        let user_store_path =
            overlay::resolve_store_path(env).unwrap_or_else(|_| dir.join("user.tags"));
        let history_path = config::history_path(env).unwrap_or_else(|| dir.join("history"));
        let user = env
            .get("USER")
            .filter(|u| !u.is_empty() && !u.contains(char::is_whitespace))
            .cloned()
            .unwrap_or_else(|| "user".to_string());
        Ok(DaemonConfig {
            peers_path: dir.join(sync::PEERS_FILE),
            store_path,
            user_store_path,
            history_path,
            listen_address: format!("0.0.0.0:{}", sync::DEFAULT_SYNC_PORT),
            miner_interval_seconds: DEFAULT_MINER_INTERVAL,
            local_address: DEFAULT_LOCAL_ADDRESS.to_string(),
            node_id: user.clone(),
            user,
        })
    }

    /// Directory of the store file; miner state lives here too.
    pub fn state_dir(&self) -> PathBuf {
        config::store_dir(&self.store_path)
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply(&mut self, text: &str, origin: &Path) -> Result<(), DaemonError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| DaemonError::Config {
                path: origin.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(bad(format!("empty value for {key}")));
            }
            match key {
                "store_path" => self.store_path = value.into(),
                "user_store_path" => self.user_store_path = value.into(),
                "history_path" => self.history_path = value.into(),
                "listen_address" => self.listen_address = value.into(),
                "peers_path" => self.peers_path = value.into(),
                "local_address" => self.local_address = value.into(),
                "node_id" | "user" if value.contains(char::is_whitespace) => {
                    return Err(bad(format!("{key} must not contain whitespace")));
                }
                "node_id" => self.node_id = value.into(),
                "user" => self.user = value.into(),
                "miner_interval_seconds" => {
                    self.miner_interval_seconds = match value.parse::<u64>() {
                        Ok(n) if n >= 1 => n,
                        _ => {
                            return Err(bad(
                                "miner_interval_seconds must be a positive integer".into()
                            ))
                        }
                    }
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        format!(
            "store_path = {}\nuser_store_path = {}\nhistory_path = {}\nlisten_address = {}\n\
             miner_interval_seconds = {}\npeers_path = {}\nlocal_address = {}\nnode_id = {}\nuser = {}\n",
            self.store_path.display(),
            self.user_store_path.display(),
            self.history_path.display(),
            self.listen_address,
            self.miner_interval_seconds,
            self.peers_path.display(),
            self.local_address,
            self.node_id,
            self.user,
        )
    }
}

/// A running daemon. Dropping it stops it.
pub struct Daemon {
    repo: Arc<Repository>,
    local: Option<FrameServer>,
    peer: Option<FrameServer>,
    miner: Option<JoinHandle<()>>,
    stop: Arc<AtomicBool>,
}

impl Daemon {
    /// Loads state, binds both endpoints and starts the miner.
    pub fn start(config: DaemonConfig) -> Result<Self, DaemonError> {
        let repo = Arc::new(Repository::open(config, Arc::new(TcpConnector::default()))?);
        Self::start_with(repo)
    }

    pub fn start_with(repo: Arc<Repository>) -> Result<Self, DaemonError> {
        repo.enable_miner()?;
        let stop = Arc::new(AtomicBool::new(false));
        let local = {
            let repo = repo.clone();
            let stop = stop.clone();
            FrameServer::bind(
                &repo.config().local_address.clone(),
                Arc::new(move || Box::new(LocalSession::new(repo.clone(), stop.clone())) as _),
            )?
        };
        let peer = FrameServer::bind(&repo.config().listen_address, repo.node().handler_factory())?;
        let miner = {
            let repo = repo.clone();
            let stop = stop.clone();
            thread::spawn(move || miner_loop(&repo, &stop))
        };
        Ok(Daemon {
            repo,
            local: Some(local),
            peer: Some(peer),
            miner: Some(miner),
            stop,
        })
    }

    pub fn repository(&self) -> &Arc<Repository> {
        &self.repo
    }

    pub fn local_addr(&self) -> Option<std::net::SocketAddr> {
        self.local.as_ref().map(FrameServer::local_addr)
    }

    pub fn peer_addr(&self) -> Option<std::net::SocketAddr> {
        self.peer.as_ref().map(FrameServer::local_addr)
    }

    /// Blocks until a `Shutdown` request arrives or [`Daemon::stop`] is called
    /// from another handle.
    pub fn wait(&self) {
        while !self.stop.load(Ordering::SeqCst) {
            thread::sleep(Duration::from_millis(50));
        }
    }

    /// Stops both endpoints, lets open sessions finish, and persists state.
    pub fn stop(&mut self) -> Result<(), DaemonError> {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(mut s) = self.local.take() {
            s.stop();
        }
        if let Some(mut s) = self.peer.take() {
            s.stop();
        }
        if let Some(t) = self.miner.take() {
            let _ = t.join();
        }
        self.repo.persist_store_if_changed()?;
        Ok(())
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

fn miner_loop(repo: &Repository, stop: &AtomicBool) {
    let interval = Duration::from_secs(repo.config().miner_interval_seconds.max(1));
    let mut next = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        if Instant::now() >= next {
            if let Err(e) = repo.mine_once() {
                eprintln!("tagman daemon: miner pass failed: {e}");
            }
            if let Err(e) = repo.persist_store_if_changed() {
                eprintln!("tagman daemon: cannot persist store: {e}");
            }
            next = Instant::now() + interval;
        }
        thread::sleep(Duration::from_millis(50));
    }
}
