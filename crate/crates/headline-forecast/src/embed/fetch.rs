//! Concurrent embedding acquisition: many fetch workers, few writers.
//!
//! Records missing from the cache go onto a bounded work queue. `workers`
//! fetch threads pull from it, call the provider (with retry and
//! exponential backoff), and push completed vectors over a channel.
//! `writer_count` writer threads accumulate results in a shared buffer and
//! append a whole batch to the cache file every `flush_threshold` entries;
//! a final flush persists any remainder. The post-run cache is identical,
//! as a key-to-value map, to a sequential single-worker run.

use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::corpus::HeadlineRecord;
use crate::error::{Error, Result};

use super::cache::{CacheEntry, EmbeddingCache};
use super::provider::EmbeddingProvider;
use super::EmbeddingVector;

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub workers: usize,
    pub writer_count: usize,
    pub flush_threshold: usize,
    /// Attempts per provider call before giving the records up as failed.
    pub retry_limit: usize,
    /// Initial backoff, doubled per retry.
    pub backoff: Duration,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            workers: 500,
            writer_count: 4,
            flush_threshold: 100,
            retry_limit: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

impl FetchConfig {
    fn validate(&self) -> Result<()> {
        if self.workers < 1 || self.writer_count < 1 || self.flush_threshold < 1 {
            return Err(Error::Config(format!(
                "fetch config needs workers >= 1, writer_count >= 1, flush_threshold >= 1 \
                 (got {}, {}, {})",
                self.workers, self.writer_count, self.flush_threshold
            )));
        }
        if self.retry_limit < 1 {
            return Err(Error::Config("retry limit must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchReport {
    /// Entries fetched and persisted by this run.
    pub fetched: usize,
    /// Records that were already cached.
    pub cached: usize,
    /// Batch appends performed by this run (the final remainder flush
    /// included only when it had entries to write).
    pub flushes: usize,
    pub wall: Duration,
}

/// Populate the cache with one embedding per record not already present.
pub fn fetch_embeddings(
    records: &[HeadlineRecord],
    provider: &dyn EmbeddingProvider,
    cfg: &FetchConfig,
    cache: &mut EmbeddingCache,
) -> Result<FetchReport> {
    cfg.validate()?;
    let start = Instant::now();
    let model_id = provider.model_id();
    let misses: Vec<&HeadlineRecord> = records
        .iter()
        .filter(|r| !cache.contains(r.id, model_id))
        .collect();
    let cached = records.len() - misses.len();
    let flushes_before = cache.flushes();

    if misses.is_empty() {
        return Ok(FetchReport {
            fetched: 0,
            cached,
            flushes: 0,
            wall: start.elapsed(),
        });
    }

    let (work_tx, work_rx) = mpsc::sync_channel::<&HeadlineRecord>(cfg.workers.max(4) * 2);
    let work_rx = Arc::new(Mutex::new(work_rx));
    let (done_tx, done_rx) = mpsc::channel::<CacheEntry>();
    let done_rx = Arc::new(Mutex::new(done_rx));

    let buffer: Arc<Mutex<Vec<CacheEntry>>> = Arc::new(Mutex::new(Vec::new()));
    let written: Arc<Mutex<Vec<CacheEntry>>> = Arc::new(Mutex::new(Vec::new()));
    let failures: Arc<Mutex<Vec<u64>>> = Arc::new(Mutex::new(Vec::new()));
    let write_error: Arc<Mutex<Option<Error>>> = Arc::new(Mutex::new(None));

    thread::scope(|s| {
        for _ in 0..cfg.writer_count {
            let done_rx = Arc::clone(&done_rx);
            let buffer = Arc::clone(&buffer);
            let written = Arc::clone(&written);
            let write_error = Arc::clone(&write_error);
            let cache_ref: &EmbeddingCache = cache;
            s.spawn(move || loop {
                let next = done_rx.lock().expect("done lock").recv();
                match next {
                    Ok(entry) => {
                        let batch = {
                            let mut buf = buffer.lock().expect("buffer lock");
                            buf.push(entry);
                            if buf.len() >= cfg.flush_threshold {
                                Some(std::mem::take(&mut *buf))
                            } else {
                                None
                            }
                        };
                        if let Some(batch) = batch {
                            match cache_ref.append_batch(&batch) {
                                Ok(()) => written.lock().expect("written lock").extend(batch),
                                Err(e) => {
                                    *write_error.lock().expect("error lock") = Some(e);
                                    break;
                                }
                            }
                        }
                    }
                    Err(_) => break,
                }
            });
        }

        for _ in 0..cfg.workers {
            let work_rx = Arc::clone(&work_rx);
            let done_tx = done_tx.clone();
            let failures = Arc::clone(&failures);
            s.spawn(move || loop {
                let claimed: Vec<&HeadlineRecord> = {
                    let rx = work_rx.lock().expect("work lock");
                    match rx.recv() {
                        Ok(first) => {
                            let mut items = vec![first];
                            while items.len() < provider.max_batch() {
                                match rx.try_recv() {
                                    Ok(r) => items.push(r),
                                    Err(_) => break,
                                }
                            }
                            items
                        }
                        Err(_) => break,
                    }
                };
                let texts: Vec<&str> = claimed.iter().map(|r| r.text.as_str()).collect();
                let mut attempt = 0;
                let vectors = loop {
                    match provider.embed_batch(&texts) {
                        Ok(v) => break Some(v),
                        Err(_) => {
                            attempt += 1;
                            if attempt >= cfg.retry_limit {
                                break None;
                            }
                            thread::sleep(cfg.backoff * (1 << (attempt - 1)));
                        }
                    }
                };
                match vectors {
                    Some(vectors) => {
                        for (rec, values) in claimed.iter().zip(vectors) {
                            let entry = CacheEntry {
                                headline_id: rec.id,
                                vector: EmbeddingVector {
                                    model_id: model_id.to_string(),
                                    dim: provider.dim(),
                                    values,
                                },
                            };
                            let _ = done_tx.send(entry);
                        }
                    }
                    None => failures
                        .lock()
                        .expect("failures lock")
                        .extend(claimed.iter().map(|r| r.id)),
                }
            });
        }
        drop(done_tx);

        for rec in &misses {
            if work_tx.send(rec).is_err() {
                break;
            }
        }
        drop(work_tx);
    });

    if let Some(err) = write_error.lock().expect("error lock").take() {
        return Err(err);
    }

    // Final flush of whatever the writers had not yet reached threshold on.
    let remainder = std::mem::take(&mut *buffer.lock().expect("buffer lock"));
    if !remainder.is_empty() {
        cache.append_batch(&remainder)?;
        written.lock().expect("written lock").extend(remainder);
    }

    let written = std::mem::take(&mut *written.lock().expect("written lock"));
    let fetched = written.len();
    cache.merge(written);

    let mut failed = std::mem::take(&mut *failures.lock().expect("failures lock"));
    if !failed.is_empty() {
        failed.sort_unstable();
        return Err(Error::Provider(format!(
            "{} records failed after {} attempts each; ids: {}",
            failed.len(),
            cfg.retry_limit,
            failed
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }

    Ok(FetchReport {
        fetched,
        cached,
        flushes: cache.flushes() - flushes_before,
        wall: start.elapsed(),
    })
}
