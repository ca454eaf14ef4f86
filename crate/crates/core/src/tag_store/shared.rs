use std::path::Path;
use std::sync::{Arc, RwLock, RwLockReadGuard};

use super::{persist, StoreError, TagIndex, TagMapping};

/// A tag index shared between threads. Readers run concurrently; writers
/// are serialized and apply each change under the write lock, so a reader
/// never sees a half-applied mapping.
#[derive(Debug, Clone, Default)]
pub struct SharedStore {
    inner: Arc<RwLock<TagIndex>>,
}

impl SharedStore {
    pub fn new(index: TagIndex) -> Self {
        SharedStore {
            inner: Arc::new(RwLock::new(index)),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, TagIndex> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write<T>(&self, f: impl FnOnce(&mut TagIndex) -> T) -> T {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }

    /// Adds all mappings; returns how many were new.
    pub fn add_all<I: IntoIterator<Item = TagMapping>>(&self, mappings: I) -> usize {
        self.write(|index| {
            mappings
                .into_iter()
                .filter(|m| index.add_mapping(m.clone()))
                .count()
        })
    }

    pub fn snapshot(&self) -> TagIndex {
        self.read().clone()
    }

    pub fn persist(&self, path: &Path) -> Result<(), StoreError> {
        let text = super::render_store(&self.read());
        persist::write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tag_store::Source;
    use std::thread;

    #[test]
    fn readers_never_see_torn_state() {
        let store = SharedStore::default();
        let writer = {
            let store = store.clone();
            thread::spawn(move || {
                for i in 0..300 {
                    let m = TagMapping::new(
                        &format!("t{}", i % 17),
                        &format!("c{}", i % 13),
                        Source::System,
                        i,
                    )
                    .unwrap();
                    store.add_all([m]);
                    if i % 3 == 0 {
                        store.write(|idx| {
                            idx.remove_mapping(
                                &format!("t{}", i % 17),
                                &format!("c{}", i % 13),
                                &Source::System,
                            )
                        });
                    }
                }
            })
        };
        let readers: Vec<_> = (0..3)
            .map(|_| {
                let store = store.clone();
                thread::spawn(move || {
                    for _ in 0..200 {
                        store.read().check_invariants().unwrap();
                    }
                })
            })
            .collect();
        writer.join().unwrap();
        for r in readers {
            r.join().unwrap();
        }
        store.read().check_invariants().unwrap();
    }
}
