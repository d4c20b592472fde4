//! Append-only JSON-lines embedding cache.
//!
//! One entry per line: `{"hid": <u64>, "model": <string>, "dim": <usize>,
//! "v": [<f64>...]}`. Batches are serialized to a buffer first and appended
//! with a single write under one append lock, so a crash between flushes
//! leaves whole batches on disk and at worst one partial trailing line,
//! which the loader skips.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::EmbeddingVector;

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    hid: u64,
    model: String,
    dim: usize,
    v: Vec<f64>,
}

/// One completed (headline, vector) pair headed for the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub headline_id: u64,
    pub vector: EmbeddingVector,
}

/// What the loader saw when replaying the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadStats {
    pub entries: usize,
    /// Corrupt or truncated lines skipped.
    pub skipped: usize,
    /// Keys seen more than once (last write wins).
    pub duplicates: usize,
}

pub struct EmbeddingCache {
    path: PathBuf,
    entries: BTreeMap<(u64, String), EmbeddingVector>,
    load_stats: LoadStats,
    file: Mutex<File>,
    flushes: AtomicUsize,
    written: AtomicUsize,
}

impl EmbeddingCache {
    /// Open (or create) a cache file and replay its entries.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut stats = LoadStats::default();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(cl) if cl.dim == cl.v.len() && cl.v.iter().all(|x| x.is_finite()) => {
                        let key = (cl.hid, cl.model.clone());
                        let vector = EmbeddingVector {
                            model_id: cl.model,
                            dim: cl.dim,
                            values: cl.v,
                        };
                        if entries.insert(key, vector).is_some() {
                            stats.duplicates += 1;
                        }
                    }
                    _ => stats.skipped += 1,
                }
            }
        }
        stats.entries = entries.len();
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EmbeddingCache {
            path: path.to_path_buf(),
            entries,
            load_stats: stats,
            file: Mutex::new(file),
            flushes: AtomicUsize::new(0),
            written: AtomicUsize::new(0),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load_stats(&self) -> &LoadStats {
        &self.load_stats
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, headline_id: u64, model_id: &str) -> bool {
        self.entries.contains_key(&(headline_id, model_id.to_string()))
    }

    /// Stored vector for a key, or absent. Never a partial record: corrupt
    /// lines were dropped at load.
    pub fn get(&self, headline_id: u64, model_id: &str) -> Option<&EmbeddingVector> {
        self.entries.get(&(headline_id, model_id.to_string()))
    }

    pub fn entries(&self) -> &BTreeMap<(u64, String), EmbeddingVector> {
        &self.entries
    }

    /// Number of non-empty batch appends performed by this handle.
    pub fn flushes(&self) -> usize {
        self.flushes.load(Ordering::SeqCst)
    }

    /// Total entries appended by this handle.
    pub fn written(&self) -> usize {
        self.written.load(Ordering::SeqCst)
    }

    /// Append a batch to disk: serialize every line into one buffer, then a
    /// single locked write. An empty batch is a no-op.
    pub fn append_batch(&self, batch: &[CacheEntry]) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for entry in batch {
            let line = CacheLine {
                hid: entry.headline_id,
                model: entry.vector.model_id.clone(),
                dim: entry.vector.dim,
                v: entry.vector.values.clone(),
            };
            buf.push_str(
                &serde_json::to_string(&line)
                    .map_err(|e| Error::Io(std::io::Error::other(e)))?,
            );
            buf.push('\n');
        }
        let mut file = self.file.lock().expect("append lock");
        file.write_all(buf.as_bytes())?;
        file.flush()?;
        self.flushes.fetch_add(1, Ordering::SeqCst);
        self.written.fetch_add(batch.len(), Ordering::SeqCst);
        Ok(())
    }

    /// Merge freshly fetched entries into the in-memory map (disk writes
    /// happen separately through [`append_batch`](Self::append_batch)).
    pub fn merge(&mut self, batch: Vec<CacheEntry>) {
        for entry in batch {
            self.entries
                .insert((entry.headline_id, entry.vector.model_id.clone()), entry.vector);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed_offline;

    fn entry(hid: u64, text: &str) -> CacheEntry {
        CacheEntry {
            headline_id: hid,
            vector: embed_offline(text, "small", 8, 1),
        }
    }

    #[test]
    fn append_reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = EmbeddingCache::open(&path).unwrap();
            cache.append_batch(&[entry(1, "a"), entry(2, "b")]).unwrap();
            cache.append_batch(&[entry(3, "c")]).unwrap();
            assert_eq!(cache.flushes(), 2);
            assert_eq!(cache.written(), 3);
        }
        let cache = EmbeddingCache::open(&path).unwrap();
        assert_eq!(cache.len(), 3);
        assert_eq!(cache.load_stats().skipped, 0);
        assert_eq!(cache.get(2, "small").unwrap(), &embed_offline("b", "small", 8, 1));
        assert!(cache.get(9, "small").is_none());
        assert!(cache.get(1, "other-model").is_none());
    }

    #[test]
    fn empty_batch_is_a_noop() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = EmbeddingCache::open(&path).unwrap();
        cache.append_batch(&[]).unwrap();
        assert_eq!(cache.flushes(), 0);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 0);
    }

    #[test]
    fn truncated_tail_is_skipped_earlier_entries_survive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = EmbeddingCache::open(&path).unwrap();
            cache
                .append_batch(&[entry(1, "a"), entry(2, "b"), entry(3, "c")])
                .unwrap();
        }
        // Truncate mid-way through the last record.
        let bytes = std::fs::read(&path).unwrap();
        let content = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = content.lines().collect();
        let keep = lines[0].len() + 1 + lines[1].len() + 1 + lines[2].len() / 2;
        std::fs::write(&path, &content.as_bytes()[..keep]).unwrap();

        let cache = EmbeddingCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.load_stats().skipped, 1);
        assert!(cache.get(1, "small").is_some());
        assert!(cache.get(2, "small").is_some());
        assert!(cache.get(3, "small").is_none());
    }

    #[test]
    fn duplicate_keys_last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = EmbeddingCache::open(&path).unwrap();
            cache.append_batch(&[entry(1, "a")]).unwrap();
            cache.append_batch(&[entry(1, "a")]).unwrap();
        }
        let cache = EmbeddingCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(cache.load_stats().duplicates, 1);
    }
}
