//! Timing-skid prefetcher.
//!
//! A PC-indexed stride predictor whose prefetches are held back in a delay
//! queue. For each PC it measures how long after the trigger the predicted
//! line is actually demanded, and releases later prefetches `lead` events
//! before that point.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{line_delta, train_stride, Prefetcher};
use crate::types::{ComponentId, LineAddress, PaeContext};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TskidParams {
    pub table_entries: usize,
    pub lead: u64,
    pub verification_expiry: u64,
    pub max_pending: usize,
    pub confidence_threshold: u8,
}

impl Default for TskidParams {
    fn default() -> Self {
        TskidParams {
            table_entries: 64,
            lead: 4,
            verification_expiry: 1024,
            max_pending: 256,
            confidence_threshold: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TargetEntry {
    pub pc: u64,
    pub last_line: LineAddress,
    pub delta: i64,
    pub confidence: u8,
    pub use_distance: u64,
    pub lru_stamp: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct PendingVerification {
    pc: u64,
    predicted: LineAddress,
    trigger_seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelayedPrefetch {
    pub line: LineAddress,
    pub release_seq: u64,
}

#[derive(Clone, Debug)]
pub struct Tskid {
    params: TskidParams,
    targets: Vec<TargetEntry>,
    pending: VecDeque<PendingVerification>,
    delay_queue: VecDeque<DelayedPrefetch>,
    tick: u64,
    max_line: u64,
}

impl Tskid {
    pub fn new(params: TskidParams, max_line: u64) -> Self {
        Tskid {
            targets: Vec::with_capacity(params.table_entries),
            pending: VecDeque::new(),
            delay_queue: VecDeque::new(),
            tick: 0,
            max_line,
            params,
        }
    }

    pub fn target(&self, pc: u64) -> Option<&TargetEntry> {
        self.targets.iter().find(|t| t.pc == pc)
    }

    pub fn delay_queue(&self) -> impl Iterator<Item = &DelayedPrefetch> {
        self.delay_queue.iter()
    }

    fn verify(&mut self, ctx: &PaeContext) {
        let expiry = self.params.verification_expiry;
        self.pending
            .retain(|p| ctx.seq.saturating_sub(p.trigger_seq) <= expiry);
        let mut i = 0;
        while i < self.pending.len() {
            let p = self.pending[i];
            if p.predicted == ctx.line {
                if let Some(t) = self.targets.iter_mut().find(|t| t.pc == p.pc) {
                    t.use_distance = ctx.seq - p.trigger_seq;
                }
                self.pending.remove(i);
            } else {
                i += 1;
            }
        }
    }

    /// Trains the PC's stride and returns the entry index when it is confident.
    fn train(&mut self, ctx: &PaeContext) -> Option<usize> {
        self.tick += 1;
        let Some(i) = self.targets.iter().position(|t| t.pc == ctx.pc) else {
            let fresh = TargetEntry {
                pc: ctx.pc,
                last_line: ctx.line,
                delta: 0,
                confidence: 0,
                use_distance: 0,
                lru_stamp: self.tick,
            };
            if self.targets.len() < self.params.table_entries.max(1) {
                self.targets.push(fresh);
            } else {
                let victim = self
                    .targets
                    .iter_mut()
                    .min_by_key(|t| t.lru_stamp)
                    .expect("table is full");
                *victim = fresh;
            }
            return None;
        };
        let t = &mut self.targets[i];
        let observed = line_delta(ctx.line, t.last_line);
        train_stride(&mut t.delta, &mut t.confidence, observed);
        t.last_line = ctx.line;
        t.lru_stamp = self.tick;
        (t.confidence >= self.params.confidence_threshold && t.delta != 0).then_some(i)
    }

    fn schedule(&mut self, ctx: &PaeContext, entry: usize) {
        let t = self.targets[entry];
        let Some(target) = ctx.line.offset(t.delta, self.max_line) else {
            return;
        };
        let release_seq = ctx.seq + t.use_distance.saturating_sub(self.params.lead);
        let pos = self
            .delay_queue
            .iter()
            .position(|d| d.release_seq > release_seq)
            .unwrap_or(self.delay_queue.len());
        self.delay_queue.insert(
            pos,
            DelayedPrefetch {
                line: target,
                release_seq,
            },
        );
        if self.pending.len() >= self.params.max_pending.max(1) {
            self.pending.pop_front();
        }
        self.pending.push_back(PendingVerification {
            pc: ctx.pc,
            predicted: target,
            trigger_seq: ctx.seq,
        });
    }
}

impl Prefetcher for Tskid {
    fn id(&self) -> ComponentId {
        ComponentId::Tskid
    }

    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<LineAddress> {
        self.verify(ctx);
        if let Some(entry) = self.train(ctx) {
            self.schedule(ctx, entry);
        }
        let mut out = Vec::new();
        while let Some(front) = self.delay_queue.front() {
            if front.release_seq > ctx.seq {
                break;
            }
            out.push(front.line);
            self.delay_queue.pop_front();
        }
        out
    }
}
