//! Set-associative cache with LRU replacement and timed prefetch fills.
//!
//! Time is the demand-access index (`seq`). A prefetch accepted at `now`
//! becomes resident once `fill_due` is called with `now + prefetch_fill_delay`
//! or later; a demand to a line that is still in flight is a late prefetch hit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::types::{AccessEvent, ComponentId, LineAddress};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub sets: usize,
    pub ways: usize,
    pub line_size: u64,
    pub hit_latency: u64,
    pub miss_latency: u64,
    pub late_latency: u64,
    /// In demand accesses.
    pub prefetch_fill_delay: u64,
    pub prefetch_queue_capacity: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            sets: 64,
            ways: 8,
            line_size: 64,
            hit_latency: 4,
            miss_latency: 200,
            late_latency: 100,
            prefetch_fill_delay: 40,
            prefetch_queue_capacity: 16,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sets == 0 || !self.sets.is_power_of_two() {
            return Err(SimError::config("sets must be a power of two"));
        }
        if self.line_size == 0 || !self.line_size.is_power_of_two() {
            return Err(SimError::config("line_size must be a power of two"));
        }
        if self.ways == 0 {
            return Err(SimError::config("ways must be at least 1"));
        }
        if !(self.hit_latency < self.late_latency && self.late_latency <= self.miss_latency) {
            return Err(SimError::config(
                "latencies must satisfy hit_latency < late_latency <= miss_latency",
            ));
        }
        Ok(())
    }

    pub fn line_shift(&self) -> u32 {
        self.line_size.trailing_zeros()
    }

    /// Largest representable line address for a 64-bit byte address space.
    pub fn max_line(&self) -> u64 {
        u64::MAX >> self.line_shift()
    }

    pub fn line_of(&self, addr: u64) -> LineAddress {
        LineAddress::from_addr(addr, self.line_shift())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Hit,
    PrefetchHit,
    LatePrefetchHit,
    Miss,
}

impl OutcomeKind {
    /// Misses, prefetch hits, and late prefetch hits trigger the prefetchers.
    pub fn is_pae(self) -> bool {
        self != OutcomeKind::Hit
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessOutcome {
    pub kind: OutcomeKind,
    pub latency: u64,
    pub is_pae: bool,
    pub line: LineAddress,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheLineState {
    pub tag: u64,
    pub valid: bool,
    pub prefetched: bool,
    pub source: Option<ComponentId>,
    pub lru_stamp: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InFlightPrefetch {
    pub line: LineAddress,
    pub issue_seq: u64,
    pub fill_seq: u64,
    pub source: ComponentId,
}

/// Demand outcome counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub accesses: u64,
    pub hits: u64,
    pub prefetch_hits: u64,
    pub late_prefetch_hits: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn record(&mut self, kind: OutcomeKind) {
        self.accesses += 1;
        match kind {
            OutcomeKind::Hit => self.hits += 1,
            OutcomeKind::PrefetchHit => self.prefetch_hits += 1,
            OutcomeKind::LatePrefetchHit => self.late_prefetch_hits += 1,
            OutcomeKind::Miss => self.misses += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.hits + self.prefetch_hits + self.late_prefetch_hits + self.misses
    }

    pub fn pae_count(&self) -> u64 {
        self.prefetch_hits + self.late_prefetch_hits + self.misses
    }

    /// Average memory access time in cycles.
    pub fn amat(&self, cfg: &CacheConfig) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(SimError::EmptyStatistics);
        }
        let cycles = (self.hits + self.prefetch_hits) * cfg.hit_latency
            + self.late_prefetch_hits * cfg.late_latency
            + self.misses * cfg.miss_latency;
        Ok(cycles as f64 / total as f64)
    }
}

/// Prefetch traffic counters, kept globally and per source component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefetchStats {
    /// Every call to `enqueue_prefetch`.
    pub requested: u64,
    /// Accepted into the in-flight queue.
    pub issued: u64,
    pub dropped_resident: u64,
    pub dropped_in_flight: u64,
    pub dropped_queue_full: u64,
    /// Installed by `fill_due` with the prefetched flag set.
    pub filled: u64,
    /// Demanded while still in flight; converted to a demand fill.
    pub late: u64,
    /// Prefetched lines demanded before eviction.
    pub useful: u64,
    /// Prefetched lines evicted without being demanded.
    pub evicted_unused: u64,
}

impl PrefetchStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_resident + self.dropped_in_flight + self.dropped_queue_full
    }
}

enum DropReason {
    Resident,
    InFlight,
    QueueFull,
}

pub struct Cache {
    cfg: CacheConfig,
    lines: Vec<CacheLineState>,
    in_flight: Vec<InFlightPrefetch>,
    tick: u64,
    stats: CacheStats,
    prefetch: PrefetchStats,
    per_source: BTreeMap<ComponentId, PrefetchStats>,
}

impl Cache {
    pub fn new(cfg: CacheConfig) -> Result<Self> {
        cfg.validate()?;
        let lines = vec![CacheLineState::default(); cfg.sets * cfg.ways];
        Ok(Cache {
            cfg,
            lines,
            in_flight: Vec::new(),
            tick: 0,
            stats: CacheStats::default(),
            prefetch: PrefetchStats::default(),
            per_source: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn prefetch_stats(&self) -> &PrefetchStats {
        &self.prefetch
    }

    pub fn per_source_stats(&self) -> &BTreeMap<ComponentId, PrefetchStats> {
        &self.per_source
    }

    pub fn in_flight(&self) -> &[InFlightPrefetch] {
        &self.in_flight
    }

    pub fn line_of(&self, addr: u64) -> LineAddress {
        self.cfg.line_of(addr)
    }

    fn set_range(&self, line: LineAddress) -> std::ops::Range<usize> {
        let set = (line.0 as usize) & (self.cfg.sets - 1);
        let start = set * self.cfg.ways;
        start..start + self.cfg.ways
    }

    fn find(&self, line: LineAddress) -> Option<usize> {
        self.set_range(line)
            .find(|&i| self.lines[i].valid && self.lines[i].tag == line.0)
    }

    /// State of a resident line, if any.
    pub fn lookup(&self, line: LineAddress) -> Option<CacheLineState> {
        self.find(line).map(|i| self.lines[i])
    }

    pub fn is_in_flight(&self, line: LineAddress) -> bool {
        self.in_flight.iter().any(|p| p.line == line)
    }

    fn next_stamp(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    fn source_stats(&mut self, source: ComponentId) -> &mut PrefetchStats {
        self.per_source.entry(source).or_default()
    }

    /// Installs `line` into its set, evicting the least recently touched way.
    fn install(&mut self, line: LineAddress, prefetched: Option<ComponentId>) {
        let range = self.set_range(line);
        let victim = range
            .clone()
            .find(|&i| !self.lines[i].valid)
            .unwrap_or_else(|| {
                range
                    .min_by_key(|&i| self.lines[i].lru_stamp)
                    .expect("ways >= 1")
            });
        let old = self.lines[victim];
        if old.valid && old.prefetched {
            self.prefetch.evicted_unused += 1;
            if let Some(src) = old.source {
                self.source_stats(src).evicted_unused += 1;
            }
        }
        let stamp = self.next_stamp();
        self.lines[victim] = CacheLineState {
            tag: line.0,
            valid: true,
            prefetched: prefetched.is_some(),
            source: prefetched,
            lru_stamp: stamp,
        };
    }

    /// Classifies one demand access and updates cache state.
    pub fn access(&mut self, event: &AccessEvent) -> AccessOutcome {
        let line = self.line_of(event.addr);
        let kind = if let Some(i) = self.find(line) {
            let stamp = self.next_stamp();
            let state = &mut self.lines[i];
            state.lru_stamp = stamp;
            if state.prefetched {
                state.prefetched = false;
                let src = state.source.take();
                self.prefetch.useful += 1;
                if let Some(src) = src {
                    self.source_stats(src).useful += 1;
                }
                OutcomeKind::PrefetchHit
            } else {
                OutcomeKind::Hit
            }
        } else if let Some(pos) = self.in_flight.iter().position(|p| p.line == line) {
            let pf = self.in_flight.remove(pos);
            self.prefetch.late += 1;
            self.source_stats(pf.source).late += 1;
            self.install(line, None);
            OutcomeKind::LatePrefetchHit
        } else {
            self.install(line, None);
            OutcomeKind::Miss
        };
        self.stats.record(kind);
        AccessOutcome {
            kind,
            latency: match kind {
                OutcomeKind::Hit | OutcomeKind::PrefetchHit => self.cfg.hit_latency,
                OutcomeKind::LatePrefetchHit => self.cfg.late_latency,
                OutcomeKind::Miss => self.cfg.miss_latency,
            },
            is_pae: kind.is_pae(),
            line,
        }
    }

    /// Queues a prefetch for `line`. Returns false when it is dropped.
    pub fn enqueue_prefetch(&mut self, line: LineAddress, source: ComponentId, now: u64) -> bool {
        let drop = if self.find(line).is_some() {
            Some(DropReason::Resident)
        } else if self.is_in_flight(line) {
            Some(DropReason::InFlight)
        } else if self.in_flight.len() >= self.cfg.prefetch_queue_capacity {
            Some(DropReason::QueueFull)
        } else {
            None
        };
        if drop.is_none() {
            self.in_flight.push(InFlightPrefetch {
                line,
                issue_seq: now,
                fill_seq: now + self.cfg.prefetch_fill_delay,
                source,
            });
        }
        let mut per_source = *self.source_stats(source);
        for s in [&mut self.prefetch, &mut per_source] {
            s.requested += 1;
            match drop {
                None => s.issued += 1,
                Some(DropReason::Resident) => s.dropped_resident += 1,
                Some(DropReason::InFlight) => s.dropped_in_flight += 1,
                Some(DropReason::QueueFull) => s.dropped_queue_full += 1,
            }
        }
        *self.source_stats(source) = per_source;
        drop.is_none()
    }

    /// Installs every in-flight prefetch with `fill_seq <= now`.
    pub fn fill_due(&mut self, now: u64) -> usize {
        if self.in_flight.iter().all(|p| p.fill_seq > now) {
            return 0;
        }
        let (due, pending): (Vec<_>, Vec<_>) =
            self.in_flight.drain(..).partition(|p| p.fill_seq <= now);
        self.in_flight = pending;
        for pf in &due {
            self.install(pf.line, Some(pf.source));
            self.prefetch.filled += 1;
            self.source_stats(pf.source).filled += 1;
        }
        due.len()
    }
}
