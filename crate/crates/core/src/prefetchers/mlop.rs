//! Multi-lookahead offset prefetcher.
//!
//! Access history is kept per 4 KiB zone as a bitmap plus a per-line
//! timestamp (in activation events). Offset `o` scores at lookahead level `l`
//! when line `x - o` was touched at least `l` events before `x`. At the end of
//! every round each level keeps its best-scoring offset.

use serde::{Deserialize, Serialize};

use super::Prefetcher;
use crate::types::{ComponentId, LineAddress, PaeContext};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlopParams {
    pub zones: usize,
    /// Lines per zone, at most 64.
    pub zone_lines: u64,
    pub levels: usize,
    pub max_offset: i64,
    pub round: u32,
    pub score_threshold: u32,
}

impl Default for MlopParams {
    fn default() -> Self {
        MlopParams {
            zones: 64,
            zone_lines: 64,
            levels: 8,
            max_offset: 16,
            round: 256,
            score_threshold: 16,
        }
    }
}

#[derive(Clone, Debug)]
struct Zone {
    tag: u64,
    bitmap: u64,
    stamps: Vec<u64>,
    lru_stamp: u64,
}

#[derive(Clone, Debug)]
pub struct Mlop {
    params: MlopParams,
    zones: Vec<Zone>,
    /// `levels x offsets`, offsets stored as `o + max_offset`.
    scores: Vec<u32>,
    selected: Vec<Option<i64>>,
    round_counter: u32,
    clock: u64,
    max_line: u64,
}

impl Mlop {
    pub fn new(mut params: MlopParams, max_line: u64) -> Self {
        params.zone_lines = params.zone_lines.clamp(1, 64);
        params.levels = params.levels.max(1);
        params.max_offset = params.max_offset.max(1);
        let width = (2 * params.max_offset + 1) as usize;
        Mlop {
            zones: Vec::with_capacity(params.zones),
            scores: vec![0; params.levels * width],
            selected: vec![None; params.levels],
            round_counter: 0,
            clock: 0,
            max_line,
            params,
        }
    }

    /// Selected offset per lookahead level (index 0 is level 1).
    pub fn selected_offsets(&self) -> &[Option<i64>] {
        &self.selected
    }

    pub fn score(&self, level: usize, offset: i64) -> u32 {
        self.scores[self.score_index(level, offset)]
    }

    fn width(&self) -> usize {
        (2 * self.params.max_offset + 1) as usize
    }

    fn score_index(&self, level: usize, offset: i64) -> usize {
        (level - 1) * self.width() + (offset + self.params.max_offset) as usize
    }

    /// Candidate offsets in tie-break order: 1, -1, 2, -2, ...
    fn offsets(&self) -> impl Iterator<Item = i64> {
        (1..=self.params.max_offset).flat_map(|m| [m, -m])
    }

    fn zone_index(&mut self, tag: u64) -> usize {
        if let Some(i) = self.zones.iter().position(|z| z.tag == tag) {
            return i;
        }
        let fresh = Zone {
            tag,
            bitmap: 0,
            stamps: vec![0; self.params.zone_lines as usize],
            lru_stamp: self.clock,
        };
        if self.zones.len() < self.params.zones.max(1) {
            self.zones.push(fresh);
            self.zones.len() - 1
        } else {
            let (i, _) = self
                .zones
                .iter()
                .enumerate()
                .min_by_key(|(_, z)| z.lru_stamp)
                .expect("zone table is full");
            self.zones[i] = fresh;
            i
        }
    }

    fn end_round(&mut self) {
        let mut chosen: Vec<Option<i64>> = Vec::with_capacity(self.params.levels);
        for level in 1..=self.params.levels {
            let mut best: Option<(i64, u32)> = None;
            for o in self.offsets() {
                let s = self.score(level, o);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((o, s));
                }
            }
            let pick = best
                .filter(|&(_, s)| s >= self.params.score_threshold)
                .map(|(o, _)| o)
                .filter(|o| !chosen.contains(&Some(*o)));
            chosen.push(pick);
        }
        self.selected = chosen;
        self.scores.iter_mut().for_each(|s| *s = 0);
        self.round_counter = 0;
    }
}

impl Prefetcher for Mlop {
    fn id(&self) -> ComponentId {
        ComponentId::Mlop
    }

    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<LineAddress> {
        self.clock += 1;
        let zone_lines = self.params.zone_lines;
        let tag = ctx.line.0 / zone_lines;
        let x = (ctx.line.0 % zone_lines) as i64;
        let zi = self.zone_index(tag);

        let (bitmap, ages): (u64, Vec<u64>) = {
            let z = &self.zones[zi];
            (z.bitmap, z.stamps.iter().map(|&s| self.clock - s).collect())
        };
        let offsets: Vec<i64> = self.offsets().collect();
        for o in offsets {
            let y = x - o;
            if !(0..zone_lines as i64).contains(&y) || bitmap & (1 << y) == 0 {
                continue;
            }
            let age = ages[y as usize];
            let top = (age.min(self.params.levels as u64)) as usize;
            for level in 1..=top {
                let i = self.score_index(level, o);
                self.scores[i] += 1;
            }
        }

        let z = &mut self.zones[zi];
        z.bitmap |= 1 << x;
        z.stamps[x as usize] = self.clock;
        z.lru_stamp = self.clock;

        self.round_counter += 1;
        if self.round_counter >= self.params.round.max(1) {
            self.end_round();
        }

        let base = tag * zone_lines;
        self.selected
            .iter()
            .flatten()
            .filter_map(|&o| {
                let y = x + o;
                (0..zone_lines as i64).contains(&y).then(|| base + y as u64)
            })
            .filter(|&l| l <= self.max_line)
            .map(LineAddress)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefetchers::test_util::{lines, pae};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mlop() -> Mlop {
        Mlop::new(MlopParams::default(), u64::MAX >> 6)
    }

    #[test]
    fn no_candidates_before_first_round() {
        let mut m = mlop();
        for i in 0..255 {
            assert!(m.on_pae(&pae(0, i, i)).is_empty());
        }
    }

    #[test]
    fn sequential_stream_selects_level_offsets() {
        let mut m = mlop();
        for i in 0..256 {
            m.on_pae(&pae(0, i, i));
        }
        let expected: Vec<Option<i64>> = (1..=8).map(Some).collect();
        assert_eq!(m.selected_offsets(), &expected[..]);
        let x = 64 * 10 + 20;
        let out = m.on_pae(&pae(0, x, 300));
        assert_eq!(lines(&out), (1..=8).map(|o| x + o).collect::<Vec<_>>());
    }

    #[test]
    fn emitted_lines_stay_in_zone() {
        let mut m = mlop();
        for i in 0..256 {
            m.on_pae(&pae(0, i, i));
        }
        let out = m.on_pae(&pae(0, 64 * 7 + 60, 300));
        assert_eq!(lines(&out), vec![64 * 7 + 61, 64 * 7 + 62, 64 * 7 + 63]);
    }

    #[test]
    fn random_single_touch_zones_select_nothing() {
        let mut m = mlop();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..4096 {
            let zone: u64 = rng.gen_range(0..1 << 30);
            m.on_pae(&pae(0, zone * 64 + rng.gen_range(0..64), i));
            for level in 1..=8 {
                for o in (-16..=16).filter(|&o| o != 0) {
                    assert!(m.score(level, o) < 16);
                }
            }
        }
        assert!(m.selected_offsets().iter().all(Option::is_none));
    }
}
