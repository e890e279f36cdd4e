//! Signature-path prefetcher.
//!
//! Each page keeps a 12-bit signature of its recent line deltas. The pattern
//! table, indexed by signature, counts which delta followed that history. A
//! lookahead walk repeatedly takes the most likely delta, multiplying the path
//! confidence by that delta's hit ratio, until the confidence drops below the
//! threshold, the depth limit is reached, or the walk leaves the page. Walks
//! that leave the page are recorded in the global history register so that
//! the next page can pick up the same signature.

use serde::{Deserialize, Serialize};

use super::Prefetcher;
use crate::types::{ComponentId, LineAddress, PaeContext};

const SIGNATURE_MASK: u16 = 0xfff;
const SLOTS: usize = 4;
const MAX_ENCODED_DELTA: i64 = 63;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SppParams {
    pub st_entries: usize,
    pub pt_entries: usize,
    pub ghr_entries: usize,
    pub max_depth: u32,
    pub path_threshold: f64,
    pub page_lines: u64,
    /// Saturation value of the 4-bit pattern counters.
    pub counter_max: u8,
}

impl Default for SppParams {
    fn default() -> Self {
        SppParams {
            st_entries: 256,
            pt_entries: 512,
            ghr_entries: 8,
            max_depth: 8,
            path_threshold: 0.25,
            page_lines: 64,
            counter_max: 15,
        }
    }
}

/// Sign-magnitude 7-bit delta encoding.
pub fn encode_delta(delta: i64) -> u16 {
    debug_assert!(delta.abs() <= MAX_ENCODED_DELTA);
    if delta < 0 {
        0x40 | (delta.unsigned_abs() as u16)
    } else {
        delta as u16
    }
}

pub fn next_signature(signature: u16, delta: i64) -> u16 {
    ((signature << 3) ^ encode_delta(delta)) & SIGNATURE_MASK
}

#[derive(Clone, Copy, Debug, Default)]
struct SignatureEntry {
    valid: bool,
    page: u64,
    signature: u16,
    last_offset: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DeltaSlot {
    pub delta: i64,
    pub count: u8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PatternEntry {
    pub slots: [DeltaSlot; SLOTS],
    pub signature_count: u8,
}

impl PatternEntry {
    fn best(&self) -> Option<DeltaSlot> {
        let mut best: Option<DeltaSlot> = None;
        for slot in self.slots.iter().filter(|s| s.count > 0) {
            if best.is_none_or(|b| slot.count > b.count) {
                best = Some(*slot);
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug)]
struct GhrEntry {
    signature: u16,
    #[allow(dead_code)]
    confidence: f64,
    last_offset: u64,
    delta: i64,
}

/// Lookahead instrumentation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chains: u64,
    pub max_depth: u32,
    pub depth_limit_violations: u64,
    pub confidence_increases: u64,
}

#[derive(Clone, Debug)]
pub struct Spp {
    params: SppParams,
    signatures: Vec<SignatureEntry>,
    patterns: Vec<PatternEntry>,
    ghr: Vec<GhrEntry>,
    ghr_next: usize,
    chain_stats: ChainStats,
    last_chain: Vec<f64>,
    max_line: u64,
}

impl Spp {
    pub fn new(params: SppParams, max_line: u64) -> Self {
        Spp {
            signatures: vec![SignatureEntry::default(); params.st_entries.max(1)],
            patterns: vec![PatternEntry::default(); params.pt_entries.max(1)],
            ghr: Vec::with_capacity(params.ghr_entries),
            ghr_next: 0,
            chain_stats: ChainStats::default(),
            last_chain: Vec::new(),
            max_line,
            params,
        }
    }

    pub fn chain_stats(&self) -> &ChainStats {
        &self.chain_stats
    }

    /// Path confidences of the most recent lookahead walk, one per emitted line.
    pub fn last_chain(&self) -> &[f64] {
        &self.last_chain
    }

    pub fn pattern(&self, signature: u16) -> &PatternEntry {
        &self.patterns[signature as usize % self.patterns.len()]
    }

    pub fn page_signature(&self, page: u64) -> Option<u16> {
        let e = &self.signatures[(page % self.signatures.len() as u64) as usize];
        (e.valid && e.page == page).then_some(e.signature)
    }

    pub(crate) fn train(&mut self, signature: u16, delta: i64) {
        let max = self.params.counter_max.max(1);
        let n = self.patterns.len();
        let entry = &mut self.patterns[signature as usize % n];
        if entry.signature_count >= max {
            entry.signature_count >>= 1;
            for s in &mut entry.slots {
                s.count >>= 1;
            }
        }
        entry.signature_count += 1;
        if let Some(slot) = entry
            .slots
            .iter_mut()
            .find(|s| s.count > 0 && s.delta == delta)
        {
            slot.count += 1;
        } else {
            let slot = entry
                .slots
                .iter_mut()
                .min_by_key(|s| s.count)
                .expect("non-empty slots");
            *slot = DeltaSlot { delta, count: 1 };
        }
    }

    fn push_ghr(&mut self, entry: GhrEntry) {
        let cap = self.params.ghr_entries;
        if cap == 0 {
            return;
        }
        if self.ghr.len() < cap {
            self.ghr.push(entry);
        } else {
            self.ghr[self.ghr_next] = entry;
        }
        self.ghr_next = (self.ghr_next + 1) % cap;
    }

    /// Signature carried over from a walk that left its page and lands on
    /// `offset` of a new page.
    fn ghr_bootstrap(&self, offset: u64) -> Option<u16> {
        let page_lines = self.params.page_lines as i64;
        self.ghr.iter().find_map(|g| {
            let landing = g.last_offset as i64 + g.delta;
            let crossed = !(0..page_lines).contains(&landing);
            (crossed && landing.rem_euclid(page_lines) as u64 == offset)
                .then(|| next_signature(g.signature, g.delta))
        })
    }

    fn lookahead(&mut self, page: u64, offset: u64, mut signature: u16) -> Vec<LineAddress> {
        let page_lines = self.params.page_lines as i64;
        let mut out = Vec::new();
        let mut chain = Vec::new();
        let mut confidence = 1.0f64;
        let mut current = offset as i64;
        while (out.len() as u32) < self.params.max_depth {
            let entry = *self.pattern(signature);
            if entry.signature_count == 0 {
                break;
            }
            let Some(best) = entry.best() else { break };
            confidence *= best.count as f64 / entry.signature_count as f64;
            if confidence < self.params.path_threshold {
                break;
            }
            let next = current + best.delta;
            if !(0..page_lines).contains(&next) {
                self.push_ghr(GhrEntry {
                    signature,
                    confidence,
                    last_offset: current as u64,
                    delta: best.delta,
                });
                break;
            }
            let line = page
                .checked_mul(self.params.page_lines)
                .and_then(|base| base.checked_add(next as u64));
            match line {
                Some(l) if l <= self.max_line => out.push(LineAddress(l)),
                _ => break,
            }
            chain.push(confidence);
            signature = next_signature(signature, best.delta);
            current = next;
        }

        let stats = &mut self.chain_stats;
        stats.chains += 1;
        stats.max_depth = stats.max_depth.max(chain.len() as u32);
        if chain.len() as u32 > self.params.max_depth {
            stats.depth_limit_violations += 1;
        }
        stats.confidence_increases += chain.windows(2).filter(|w| w[1] > w[0]).count() as u64;
        self.last_chain = chain;
        out
    }
}

impl Prefetcher for Spp {
    fn id(&self) -> ComponentId {
        ComponentId::Spp
    }

    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<LineAddress> {
        let page_lines = self.params.page_lines.max(1);
        let page = ctx.line.0 / page_lines;
        let offset = ctx.line.0 % page_lines;
        let idx = (page % self.signatures.len() as u64) as usize;
        let entry = self.signatures[idx];

        if entry.valid && entry.page == page {
            let delta = offset as i64 - entry.last_offset as i64;
            if delta == 0 {
                return Vec::new();
            }
            let mut signature = entry.signature;
            if delta.abs() <= MAX_ENCODED_DELTA {
                self.train(signature, delta);
                signature = next_signature(signature, delta);
            }
            self.signatures[idx].signature = signature;
            self.signatures[idx].last_offset = offset;
            self.lookahead(page, offset, signature)
        } else {
            let carried = self.ghr_bootstrap(offset);
            self.signatures[idx] = SignatureEntry {
                valid: true,
                page,
                signature: carried.unwrap_or(0),
                last_offset: offset,
            };
            match carried {
                Some(signature) => self.lookahead(page, offset, signature),
                None => Vec::new(),
            }
        }
    }
}
