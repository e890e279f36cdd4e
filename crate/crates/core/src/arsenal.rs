//! The meta-prefetcher.
//!
//! Every component runs on every activation event. Its candidates go into its
//! own shadow filter rather than the prefetch queue; each later demand line is
//! probed against every filter and the component's score moves by
//! `+score_inc` on a hit and `-score_dec` on a miss. After `eval_cnt` events
//! the configured selection rule picks the component whose requests will be
//! issued for the next phase, and all counters, scores, and filters reset.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::bloom::{mix64, BloomFilter, BloomParams};
use crate::error::{Result, SimError};
use crate::prefetchers::{build_shadow, ComponentParams, Prefetcher};
use crate::types::{ComponentId, LineAddress, PaeContext};

pub const EVAL_COUNTER_BITS: u32 = 9;
pub const PREFETCH_COUNTER_BITS: u32 = 12;
pub const SCORE_BITS: u32 = 11;

const EVAL_MAX: u16 = (1 << EVAL_COUNTER_BITS) - 1;
const PREFETCH_MAX: u16 = (1 << PREFETCH_COUNTER_BITS) - 1;
pub const SCORE_MAX: u16 = (1 << SCORE_BITS) - 1;

/// Approximate or exact set of lines a component would have prefetched.
pub trait ShadowFilter: Send {
    fn insert(&mut self, line: LineAddress);
    fn contains(&self, line: LineAddress) -> bool;
    fn clear(&mut self);
}

impl ShadowFilter for BloomFilter {
    fn insert(&mut self, line: LineAddress) {
        BloomFilter::insert(self, line);
    }

    fn contains(&self, line: LineAddress) -> bool {
        self.query(line)
    }

    fn clear(&mut self) {
        BloomFilter::clear(self);
    }
}

/// Exact shadow set, for oracle comparisons.
#[derive(Clone, Debug, Default)]
pub struct ExactSet(HashSet<u64>);

impl ShadowFilter for ExactSet {
    fn insert(&mut self, line: LineAddress) {
        self.0.insert(line.0);
    }

    fn contains(&self, line: LineAddress) -> bool {
        self.0.contains(&line.0)
    }

    fn clear(&mut self) {
        self.0.clear();
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// T-SKID vs. MLOP, with the prefetch-attempt escape hatch.
    #[serde(rename = "test-case-1")]
    TestCase1,
    /// SPP vs. IP-stride vs. next-line, with the next-line score floor.
    #[default]
    #[serde(rename = "test-case-2")]
    TestCase2,
}

impl SelectionPolicy {
    pub fn roster(self) -> &'static [ComponentId] {
        match self {
            SelectionPolicy::TestCase1 => &[ComponentId::Tskid, ComponentId::Mlop],
            SelectionPolicy::TestCase2 => &[
                ComponentId::Spp,
                ComponentId::IpStride,
                ComponentId::NextLine,
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArsenalConfig {
    pub score_inc: u16,
    pub score_dec: u16,
    pub min_score: u16,
    pub next_line_min_score: u16,
    /// Activation events per evaluation phase; at most 512 (9-bit counters).
    pub eval_cnt: u16,
    pub tskid_selection_attempt: u32,
    pub bf_fpp: f64,
    pub bf_est_cap: u64,
    /// Master seed; each component's filter seed is derived from it.
    pub bloom_seed: u64,
    /// Resolve SPP/IP-stride score ties in favour of SPP.
    pub spp_wins_ties: bool,
    #[serde(skip)]
    pub selection_policy: SelectionPolicy,
}

impl Default for ArsenalConfig {
    fn default() -> Self {
        ArsenalConfig {
            score_inc: 4,
            score_dec: 1,
            min_score: 0,
            next_line_min_score: 1500,
            eval_cnt: 512,
            tskid_selection_attempt: 10000,
            bf_fpp: 0.01,
            bf_est_cap: 2000,
            bloom_seed: 0x5eed_fa75_e4a1,
            spp_wins_ties: true,
            selection_policy: SelectionPolicy::TestCase2,
        }
    }
}

impl ArsenalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_cnt == 0 || self.eval_cnt > EVAL_MAX + 1 {
            return Err(SimError::config(format!(
                "eval_cnt must be in 1..={} to fit a {EVAL_COUNTER_BITS}-bit counter",
                EVAL_MAX + 1
            )));
        }
        BloomParams::new(self.bf_est_cap, self.bf_fpp, 0)?;
        Ok(())
    }

    pub fn bloom_params(&self, component: ComponentId) -> Result<BloomParams> {
        BloomParams::new(
            self.bf_est_cap,
            self.bf_fpp,
            mix64(self.bloom_seed.wrapping_add(component.index())),
        )
    }
}

/// Per-component evaluation state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub component: Option<ComponentId>,
    pub eval_counter: u16,
    pub prefetch_counter: u16,
    pub score: u16,
}

/// Scoreboard values captured when a selection is made.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSnapshot {
    pub component: ComponentId,
    pub score: u16,
    /// Activation events seen in the phase.
    pub eval_counter: u16,
    pub prefetch_counter: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: Option<ComponentId>,
    pub phase_index: u64,
    pub decided_at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub phase_index: u64,
    pub decided_at: u64,
    pub chosen: Option<ComponentId>,
    pub components: Vec<ComponentSnapshot>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrefetchRequest {
    pub line: LineAddress,
    pub source: ComponentId,
    pub issued_at: u64,
}

/// Cumulative shadow activity of one component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowStats {
    pub candidates: u64,
    pub probe_hits: u64,
    pub probe_misses: u64,
    pub phases_selected: u64,
}

/// One activation event as seen by the meta-prefetcher, for offline checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaeLogEntry {
    pub seq: u64,
    pub line: LineAddress,
    /// Filter membership of the demanded line, in roster order.
    pub probes: Vec<bool>,
    /// Scores right after the demand was scored, in roster order.
    pub scores: Vec<u16>,
    /// Candidates emitted by each component, in roster order.
    pub candidates: Vec<Vec<LineAddress>>,
    /// A selection was made and the phase reset after this event.
    pub phase_end: bool,
}

/// Scores fed to [`select_test_case_1`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tc1Inputs {
    pub tskid_score: u16,
    pub mlop_score: u16,
    pub tskid_attempts: u32,
    pub mlop_attempts: u32,
}

/// T-SKID wins on a higher score or once its prefetch attempts pass the
/// threshold; otherwise MLOP wins on a higher score or equal attempts;
/// otherwise the previous choice stands.
pub fn select_test_case_1(
    inputs: Tc1Inputs,
    tskid_selection_attempt: u32,
    previous: Option<ComponentId>,
) -> Option<ComponentId> {
    if inputs.tskid_score > inputs.mlop_score || inputs.tskid_attempts > tskid_selection_attempt {
        Some(ComponentId::Tskid)
    } else if inputs.mlop_score > inputs.tskid_score
        || inputs.mlop_attempts == inputs.tskid_attempts
    {
        Some(ComponentId::Mlop)
    } else {
        previous
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tc2Inputs {
    pub spp: u16,
    pub ip_stride: u16,
    pub next_line: u16,
}

pub fn select_test_case_2(
    scores: Tc2Inputs,
    min_score: u16,
    next_line_min_score: u16,
    spp_wins_ties: bool,
) -> Option<ComponentId> {
    let (best, best_score) =
        if scores.spp > scores.ip_stride || (scores.spp == scores.ip_stride && spp_wins_ties) {
            (ComponentId::Spp, scores.spp)
        } else {
            (ComponentId::IpStride, scores.ip_stride)
        };
    if best_score >= scores.next_line {
        return (best_score > min_score).then_some(best);
    }
    // Next-line is strictly maximal.
    if scores.next_line > next_line_min_score {
        Some(ComponentId::NextLine)
    } else {
        (best_score > min_score).then_some(best)
    }
}

pub struct Arsenal<F: ShadowFilter = BloomFilter> {
    cfg: ArsenalConfig,
    components: Vec<Box<dyn Prefetcher>>,
    filters: Vec<F>,
    board: Vec<ScoreEntry>,
    shadow: Vec<ShadowStats>,
    selection: Selection,
    timeline: Vec<SelectionRecord>,
    log: Option<Vec<PaeLogEntry>>,
    phase_paes: u32,
}

impl Arsenal<BloomFilter> {
    /// Meta-prefetcher over the roster of `cfg.selection_policy`, backed by
    /// Bloom filters.
    pub fn new(cfg: ArsenalConfig, params: &ComponentParams, max_line: u64) -> Result<Self> {
        let components = cfg
            .selection_policy
            .roster()
            .iter()
            .map(|&id| build_shadow(id, params, max_line))
            .collect();
        let seeds_cfg = cfg.clone();
        Arsenal::with_filters(cfg, components, |id| {
            Ok(BloomFilter::new(seeds_cfg.bloom_params(id)?))
        })
    }
}

impl Arsenal<ExactSet> {
    pub fn exact(cfg: ArsenalConfig, params: &ComponentParams, max_line: u64) -> Result<Self> {
        let components = cfg
            .selection_policy
            .roster()
            .iter()
            .map(|&id| build_shadow(id, params, max_line))
            .collect();
        Arsenal::with_filters(cfg, components, |_| Ok(ExactSet::default()))
    }
}

impl<F: ShadowFilter> Arsenal<F> {
    /// `components` must match the roster of `cfg.selection_policy`, in order.
    pub fn with_filters(
        cfg: ArsenalConfig,
        components: Vec<Box<dyn Prefetcher>>,
        mut make_filter: impl FnMut(ComponentId) -> Result<F>,
    ) -> Result<Self> {
        cfg.validate()?;
        let ids: Vec<ComponentId> = components.iter().map(|c| c.id()).collect();
        if ids != cfg.selection_policy.roster() {
            return Err(SimError::config(format!(
                "selection policy {:?} needs components {:?}, got {:?}",
                cfg.selection_policy,
                cfg.selection_policy.roster(),
                ids
            )));
        }
        let filters = ids
            .iter()
            .map(|&id| make_filter(id))
            .collect::<Result<_>>()?;
        let board = ids
            .iter()
            .map(|&id| ScoreEntry {
                component: Some(id),
                ..ScoreEntry::default()
            })
            .collect();
        Ok(Arsenal {
            shadow: vec![ShadowStats::default(); ids.len()],
            cfg,
            components,
            filters,
            board,
            selection: Selection {
                chosen: None,
                phase_index: 0,
                decided_at: 0,
            },
            timeline: Vec::new(),
            log: None,
            phase_paes: 0,
        })
    }

    pub fn config(&self) -> &ArsenalConfig {
        &self.cfg
    }

    pub fn roster(&self) -> &'static [ComponentId] {
        self.cfg.selection_policy.roster()
    }

    pub fn scoreboard(&self) -> &[ScoreEntry] {
        &self.board
    }

    pub fn score_of(&self, id: ComponentId) -> Option<u16> {
        self.board
            .iter()
            .find(|e| e.component == Some(id))
            .map(|e| e.score)
    }

    pub fn selection(&self) -> Selection {
        self.selection
    }

    /// Overrides the live component until the next decision.
    pub fn set_selection(&mut self, chosen: Option<ComponentId>) {
        self.selection.chosen = chosen;
    }

    pub fn timeline(&self) -> &[SelectionRecord] {
        &self.timeline
    }

    pub fn shadow_stats(&self) -> impl Iterator<Item = (ComponentId, ShadowStats)> + '_ {
        self.roster()
            .iter()
            .copied()
            .zip(self.shadow.iter().copied())
    }

    pub fn component_mut(&mut self, id: ComponentId) -> Option<&mut dyn Prefetcher> {
        self.components
            .iter_mut()
            .find(|c| c.id() == id)
            .map(|c| &mut **c as &mut dyn Prefetcher)
    }

    pub fn enable_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn take_log(&mut self) -> Vec<PaeLogEntry> {
        self.log.take().unwrap_or_default()
    }

    /// Probes `line` against every filter and applies the score deltas.
    /// Returns the filter membership per component.
    pub fn score_demand(&mut self, line: LineAddress) -> Vec<bool> {
        let mut probes = Vec::with_capacity(self.filters.len());
        for (i, filter) in self.filters.iter().enumerate() {
            let hit = filter.contains(line);
            let entry = &mut self.board[i];
            if hit {
                entry.score = entry
                    .score
                    .saturating_add(self.cfg.score_inc)
                    .min(SCORE_MAX);
                self.shadow[i].probe_hits += 1;
            } else {
                entry.score = entry.score.saturating_sub(self.cfg.score_dec);
                self.shadow[i].probe_misses += 1;
            }
            probes.push(hit);
        }
        probes
    }

    pub fn on_pae(&mut self, ctx: &PaeContext) -> Vec<PrefetchRequest> {
        debug_assert!(ctx.outcome.is_pae());
        let probes = self.score_demand(ctx.line);
        let scores: Vec<u16> = self.board.iter().map(|e| e.score).collect();

        let mut requests = Vec::new();
        let mut logged = Vec::new();
        for i in 0..self.components.len() {
            let candidates = self.components[i].on_pae(ctx);
            for &line in &candidates {
                self.filters[i].insert(line);
            }
            let entry = &mut self.board[i];
            entry.eval_counter = (entry.eval_counter + 1).min(EVAL_MAX);
            let added = candidates.len().min(PREFETCH_MAX as usize) as u16;
            entry.prefetch_counter = entry
                .prefetch_counter
                .saturating_add(added)
                .min(PREFETCH_MAX);
            self.shadow[i].candidates += candidates.len() as u64;

            let id = self.components[i].id();
            if self.selection.chosen == Some(id) {
                requests.extend(candidates.iter().map(|&line| PrefetchRequest {
                    line,
                    source: id,
                    issued_at: ctx.seq,
                }));
            }
            if self.log.is_some() {
                logged.push(candidates);
            }
        }

        self.phase_paes += 1;
        let phase_end = self.phase_paes >= self.cfg.eval_cnt as u32;
        if phase_end {
            self.decide(ctx.seq);
            self.phase_reset();
        }
        if let Some(log) = self.log.as_mut() {
            log.push(PaeLogEntry {
                seq: ctx.seq,
                line: ctx.line,
                probes,
                scores,
                candidates: logged,
                phase_end,
            });
        }
        requests
    }

    fn snapshot(&self) -> Vec<ComponentSnapshot> {
        self.roster()
            .iter()
            .zip(&self.board)
            .map(|(&component, e)| ComponentSnapshot {
                component,
                score: e.score,
                eval_counter: self.phase_paes as u16,
                prefetch_counter: e.prefetch_counter,
            })
            .collect()
    }

    fn decide(&mut self, now: u64) {
        let score = |id| self.score_of(id).unwrap_or(0);
        let attempts = |id| {
            self.board
                .iter()
                .find(|e| e.component == Some(id))
                .map_or(0, |e| e.prefetch_counter as u32)
        };
        let chosen = match self.cfg.selection_policy {
            SelectionPolicy::TestCase1 => select_test_case_1(
                Tc1Inputs {
                    tskid_score: score(ComponentId::Tskid),
                    mlop_score: score(ComponentId::Mlop),
                    tskid_attempts: attempts(ComponentId::Tskid),
                    mlop_attempts: attempts(ComponentId::Mlop),
                },
                self.cfg.tskid_selection_attempt,
                self.selection.chosen,
            ),
            SelectionPolicy::TestCase2 => select_test_case_2(
                Tc2Inputs {
                    spp: score(ComponentId::Spp),
                    ip_stride: score(ComponentId::IpStride),
                    next_line: score(ComponentId::NextLine),
                },
                self.cfg.min_score,
                self.cfg.next_line_min_score,
                self.cfg.spp_wins_ties,
            ),
        };
        let phase_index = self.selection.phase_index + 1;
        self.timeline.push(SelectionRecord {
            phase_index,
            decided_at: now,
            chosen,
            components: self.snapshot(),
        });
        if let Some(i) = chosen.and_then(|c| self.roster().iter().position(|&r| r == c)) {
            self.shadow[i].phases_selected += 1;
        }
        self.selection = Selection {
            chosen,
            phase_index,
            decided_at: now,
        };
    }

    /// Clears counters, scores, and filters. Components see their final
    /// score first.
    pub fn phase_reset(&mut self) {
        for (component, entry) in self.components.iter_mut().zip(&self.board) {
            component.end_phase(entry.score);
        }
        for entry in &mut self.board {
            entry.eval_counter = 0;
            entry.prefetch_counter = 0;
            entry.score = 0;
        }
        for filter in &mut self.filters {
            filter.clear();
        }
        self.phase_paes = 0;
    }
}
