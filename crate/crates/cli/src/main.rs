//! `tagman`: find commands by tag.
//!
//! Every subcommand becomes one request frame. The request goes to the
//! local daemon when one answers, and is otherwise served in-process
//! against the same files, so output does not depend on which side
//! answered.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use tagman_core::config::{self, Environment};
use tagman_core::daemon::{handle_request, Daemon, DaemonConfig, Repository, PEER_FAILURE_ROW};
use tagman_core::serialize_command_map;
use tagman_core::sync::frame::{read_frame, write_frame};
use tagman_core::sync::message::codes;
use tagman_core::sync::{Connector, Message, TcpConnector};

/// Set to a daemon address, or to `off` to always work on the files directly.
const DAEMON_VAR: &str = "TAGMAN_DAEMON";

const USAGE_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "tagman",
    version,
    about = "Find commands by what they do, not by name",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    /// Search by tags, like `man -tags`.
    #[arg(long = "tags", num_args = 1.., value_name = "TAG")]
    tags: Vec<String>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Rank commands matching the given tags.
    Search(SearchArgs),
    /// Attach personal tags (or an example line) to a command.
    Tag {
        command: String,
        tags: Vec<String>,
        /// Share these tags with peers.
        #[arg(long)]
        publish: bool,
        /// Record LINE as an example usage of the command.
        #[arg(long, value_name = "LINE")]
        example: Option<String>,
    },
    /// Load a command-tag XML map.
    Import { path: PathBuf },
    /// Index the TAGS sections of man pages (default: $TAGMAN_PATH).
    Index { dirs: Vec<PathBuf> },
    /// Show example usages of a command.
    Examples {
        command: String,
        #[arg(short, default_value_t = 5)]
        k: usize,
        /// Also ask peers for the examples they publish.
        #[arg(long)]
        peers: bool,
        /// Only lines whose pipeline also runs this command.
        #[arg(long, value_name = "COMMAND")]
        with: Option<String>,
    },
    /// Exchange published tags with a peer.
    Sync {
        peer_id: String,
        /// Only these tags, comma separated.
        #[arg(long, value_delimiter = ',', value_name = "TAG,...")]
        tags: Vec<String>,
    },
    /// Run the daemon in the foreground.
    Daemon {
        /// Ask the running daemon to shut down.
        #[arg(long)]
        stop: bool,
    },
    /// Print the store and personal tags as a command-tag XML map.
    Export,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(required = true)]
    tags: Vec<String>,
    /// Synonym dictionary: `default` or a file path.
    #[arg(long, value_name = "DICT")]
    dict: Option<String>,
    #[arg(long, default_value_t = 10)]
    limit: usize,
}

fn main() -> ExitCode {
    // the classic single-dash spelling `-tags`
    let args = std::env::args_os().map(|a| if a == "-tags" { "--tags".into() } else { a });
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE_ERROR } else { 0 });
        }
    };
    match run(cli, &config::process_environment()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("tagman: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn usage(message: &str) -> anyhow::Result<u8> {
    eprintln!("tagman: {message}");
    Ok(USAGE_ERROR)
}

fn absolute(path: &Path) -> anyhow::Result<String> {
    Ok(std::path::absolute(path)
        .with_context(|| format!("cannot resolve {}", path.display()))?
        .display()
        .to_string())
}

fn run(cli: Cli, env: &Environment) -> anyhow::Result<u8> {
    let command = match (cli.command, cli.tags) {
        (Some(c), _) => c,
        (None, tags) if !tags.is_empty() => Command::Search(SearchArgs {
            tags,
            dict: None,
            limit: 10,
        }),
        (None, _) => return usage("a subcommand is required (try --help)"),
    };
    let config = DaemonConfig::resolve(env)?;
    let request = match command {
        Command::Search(args) => {
            let dict = match args.dict {
                Some(d) if d == "default" => Some(d),
                Some(d) => Some(absolute(Path::new(&d))?),
                None => None,
            };
            Message::Lookup {
                limit: args.limit,
                dict,
                tags: args.tags,
            }
        }
        Command::Tag {
            command,
            tags,
            publish,
            example,
        } => {
            return tag(env, &config, command, tags, publish, example);
        }
        Command::Import { path } => Message::Import {
            path: absolute(&path)?,
        },
        Command::Index { dirs } => {
            let dirs = if dirs.is_empty() {
                config::man_search_dirs(env)
            } else {
                dirs
            };
            if dirs.is_empty() {
                return usage("no directories given and TAGMAN_PATH is not set");
            }
            Message::Index {
                dirs: dirs.iter().map(|d| absolute(d)).collect::<Result<_, _>>()?,
            }
        }
        Command::Examples {
            command,
            k,
            peers,
            with,
        } => Message::Examples {
            command,
            k,
            peers,
            with,
        },
        Command::Sync { peer_id, tags } => Message::Sync {
            peer_id,
            filter_tags: tags.into_iter().filter(|t| !t.is_empty()).collect(),
        },
        Command::Daemon { stop: true } => Message::Shutdown,
        Command::Daemon { stop: false } => return run_daemon(config),
        Command::Export => {
            let repo = Repository::open(config, Arc::new(TcpConnector::default()))?;
            print!("{}", serialize_command_map(&repo.export_map()));
            return Ok(0);
        }
    };
    let response = if request == Message::Shutdown {
        match daemon_connection(env, &config) {
            Some(mut conn) => call(conn.as_mut(), &request)?,
            None => anyhow::bail!("no daemon is running"),
        }
    } else {
        send(env, config, &request)?
    };
    render(&request, response)
}

fn tag(
    env: &Environment,
    config: &DaemonConfig,
    command: String,
    tags: Vec<String>,
    publish: bool,
    example: Option<String>,
) -> anyhow::Result<u8> {
    if tags.is_empty() && example.is_none() {
        return usage("tag needs a command and at least one tag");
    }
    let mut added = 0;
    if !tags.is_empty() {
        let request = Message::AddTag {
            command: command.clone(),
            publish,
            tags,
        };
        match send(env, config.clone(), &request)? {
            Message::Ack { counts, .. } if counts.len() == 1 => added += counts[0],
            other => return render(&request, other),
        }
    }
    if let Some(line) = example {
        let request = Message::AddExample {
            command,
            publish,
            line,
        };
        match send(env, config.clone(), &request)? {
            Message::Ack { counts, .. } if counts.len() == 1 => added += counts[0],
            other => return render(&request, other),
        }
    }
    println!("{added} added");
    Ok(0)
}

fn daemon_connection(
    env: &Environment,
    config: &DaemonConfig,
) -> Option<Box<dyn tagman_core::sync::transport::Connection>> {
    let address = match env.get(DAEMON_VAR).map(String::as_str) {
        Some("off") => return None,
        Some(a) if !a.is_empty() => a.to_string(),
        _ => config.local_address.clone(),
    };
    let connector = TcpConnector {
        timeout: Duration::from_secs(30),
    };
    connector.connect(&address).ok()
}

fn call(
    conn: &mut dyn tagman_core::sync::transport::Connection,
    request: &Message,
) -> anyhow::Result<Message> {
    write_frame(conn, &request.encode()?)?;
    let payload = read_frame(conn)?.context("daemon closed the connection")?;
    Message::decode(&payload).map_err(|e| anyhow::anyhow!("bad response from daemon: {e:?}"))
}

/// Through the daemon when one answers, otherwise in-process.
fn send(env: &Environment, config: DaemonConfig, request: &Message) -> anyhow::Result<Message> {
    if let Some(mut conn) = daemon_connection(env, &config) {
        return call(conn.as_mut(), request);
    }
    let repo = Repository::open(config, Arc::new(TcpConnector::default()))?;
    Ok(handle_request(&repo, request.clone()))
}

fn render(request: &Message, response: Message) -> anyhow::Result<u8> {
    let mut out = std::io::stdout().lock();
    match (request, response) {
        (_, Message::Error { code, detail }) => {
            eprintln!("tagman: {code}: {detail}");
            Ok(if code == codes::EMPTY_QUERY || code == codes::INVALID {
                USAGE_ERROR
            } else {
                1
            })
        }
        (Message::Lookup { .. }, Message::Records { rows, .. }) => {
            for row in &rows {
                writeln!(out, "{row}")?;
            }
            if rows.is_empty() {
                eprintln!("tagman: no matching commands");
                return Ok(1);
            }
            Ok(0)
        }
        (Message::Examples { command, .. }, Message::Records { rows, .. }) => {
            let mut printed = 0;
            for row in rows {
                match row
                    .strip_prefix(PEER_FAILURE_ROW)
                    .and_then(|r| r.strip_prefix('\t'))
                {
                    Some(note) => {
                        let (peer, why) = note.split_once('\t').unwrap_or((note, ""));
                        eprintln!("tagman: peer {peer}: {why}");
                    }
                    None => {
                        writeln!(out, "{row}")?;
                        printed += 1;
                    }
                }
            }
            if printed == 0 {
                eprintln!("tagman: no examples for {command}");
                return Ok(1);
            }
            Ok(0)
        }
        (Message::Import { .. }, Message::Ack { counts, .. }) if counts.len() == 1 => {
            writeln!(out, "{} mappings", counts[0])?;
            Ok(0)
        }
        (Message::Index { .. }, Message::Ack { counts, notes }) if !counts.is_empty() => {
            writeln!(out, "{} mappings", counts[0])?;
            for note in &notes {
                eprintln!("tagman: {note}");
            }
            Ok(u8::from(!notes.is_empty()))
        }
        (Message::Sync { .. }, Message::Ack { counts, .. }) if counts.len() == 2 => {
            writeln!(out, "pushed {} pulled {}", counts[0], counts[1])?;
            Ok(0)
        }
        (Message::Shutdown, Message::Ack { .. }) => Ok(0),
        (request, other) => {
            anyhow::bail!("unexpected {} response to {}", other.kind(), request.kind())
        }
    }
}

fn run_daemon(config: DaemonConfig) -> anyhow::Result<u8> {
    let mut daemon = Daemon::start(config).context("cannot start daemon")?;
    if let (Some(local), Some(peer)) = (daemon.local_addr(), daemon.peer_addr()) {
        eprintln!("tagman daemon: requests on {local}, peer sync on {peer}");
    }
    daemon.wait();
    daemon.stop()?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
