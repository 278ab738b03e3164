//! Signature-keyed clause cache fronting all remote retrieval, with hit,
//! miss, and wire-traffic accounting. Absent signatures are cached as empty
//! lists so recursive programs do not hammer the servers.

use crate::ast::{HornClause, Signature};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub frames_sent: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub consistency_violations: u64,
}

/// Session-scoped, unbounded clause cache. An entry, once inserted, is never
/// mutated: the KB is static for the session, so a second insert with
/// different content is flagged as a consistency violation and the original
/// entry kept.
#[derive(Debug, Default)]
pub struct ClauseCache {
    entries: HashMap<Signature, Vec<HornClause>>,
    stats: CacheStats,
}

impl ClauseCache {
    pub fn new() -> Self {
        ClauseCache::default()
    }

    /// Cached clause list for `sig`, counting a hit or miss. An empty list is
    /// a negative hit, not a miss.
    pub fn get(&mut self, sig: &Signature) -> Option<Vec<HornClause>> {
        match self.entries.get(sig) {
            Some(clauses) => {
                self.stats.hits += 1;
                Some(clauses.clone())
            }
            None => {
                self.stats.misses += 1;
                None
            }
        }
    }

    pub fn put(&mut self, sig: Signature, clauses: Vec<HornClause>) {
        match self.entries.get(&sig) {
            Some(existing) if *existing != clauses => {
                self.stats.consistency_violations += 1;
            }
            Some(_) => {}
            None => {
                self.entries.insert(sig, clauses);
            }
        }
    }

    /// Adds one retrieval exchange to the traffic counters. Byte counts are
    /// full frame sizes as seen on the wire.
    pub fn record_traffic(&mut self, frames: u64, bytes_sent: u64, bytes_received: u64) {
        self.stats.frames_sent += frames;
        self.stats.bytes_sent += bytes_sent;
        self.stats.bytes_received += bytes_received;
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CacheStats {
    /// `key value` lines for CLI output and test scraping.
    pub fn to_report(&self) -> String {
        format!(
            "hits {}\nmisses {}\nframes_sent {}\nbytes_sent {}\nbytes_received {}\nconsistency_violations {}\n",
            self.hits,
            self.misses,
            self.frames_sent,
            self.bytes_sent,
            self.bytes_received,
            self.consistency_violations
        )
    }
}
