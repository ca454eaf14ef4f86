//! Environment-driven file locations.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub type Environment = HashMap<String, String>;

pub const STORE_VAR: &str = "TAGMAN_STORE";
pub const HISTORY_VAR: &str = "TAGMAN_HISTORY";
pub const PATH_VAR: &str = "TAGMAN_PATH";

pub fn process_environment() -> Environment {
    std::env::vars().collect()
}

fn non_empty<'a>(env: &'a Environment, key: &str) -> Option<&'a str> {
    env.get(key).map(String::as_str).filter(|v| !v.is_empty())
}

pub fn home_dir(env: &Environment) -> Option<PathBuf> {
    non_empty(env, "HOME").map(PathBuf::from)
}

/// `TAGMAN_STORE`, else `~/.tagman/store.tags`.
pub fn store_path(env: &Environment) -> Option<PathBuf> {
    non_empty(env, STORE_VAR)
        .map(PathBuf::from)
        .or_else(|| home_dir(env).map(|h| h.join(".tagman").join("store.tags")))
}

/// Directory holding the store and its companion files (peers, checkpoint, config).
pub fn store_dir(store_path: &Path) -> PathBuf {
    match store_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// `TAGMAN_HISTORY`, else `~/.bash_history`.
pub fn history_path(env: &Environment) -> Option<PathBuf> {
    non_empty(env, HISTORY_VAR)
        .map(PathBuf::from)
        .or_else(|| home_dir(env).map(|h| h.join(".bash_history")))
}

pub fn man_search_dirs(env: &Environment) -> Vec<PathBuf> {
    non_empty(env, PATH_VAR)
        .map(crate::man_format::search_dirs)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Environment {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_and_overrides() {
        let e = env(&[("HOME", "/home/a")]);
        assert_eq!(
            store_path(&e).unwrap(),
            PathBuf::from("/home/a/.tagman/store.tags")
        );
        assert_eq!(
            history_path(&e).unwrap(),
            PathBuf::from("/home/a/.bash_history")
        );
        assert!(man_search_dirs(&e).is_empty());
        let e = env(&[
            (STORE_VAR, "/s/x.tags"),
            (HISTORY_VAR, "/h"),
            (PATH_VAR, "/m1:/m2"),
        ]);
        assert_eq!(store_path(&e).unwrap(), PathBuf::from("/s/x.tags"));
        assert_eq!(store_dir(&store_path(&e).unwrap()), PathBuf::from("/s"));
        assert_eq!(history_path(&e).unwrap(), PathBuf::from("/h"));
        assert_eq!(man_search_dirs(&e).len(), 2);
        assert!(store_path(&env(&[])).is_none());
        assert_eq!(store_dir(Path::new("x.tags")), PathBuf::from("."));
    }
}
