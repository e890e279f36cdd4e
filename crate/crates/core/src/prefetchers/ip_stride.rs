use serde::{Deserialize, Serialize};

use super::{line_delta, train_stride, Prefetcher};
use crate::types::{ComponentId, LineAddress, PaeContext};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpStrideParams {
    pub table_entries: usize,
    pub degree: u32,
    pub confidence_threshold: u8,
}

impl Default for IpStrideParams {
    fn default() -> Self {
        IpStrideParams {
            table_entries: 64,
            degree: 8,
            confidence_threshold: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IpStrideEntry {
    pub pc: u64,
    pub last_line: LineAddress,
    pub stride: i64,
    pub confidence: u8,
    pub lru_stamp: u64,
}

/// Per-PC stride prefetcher with an LRU-managed table.
#[derive(Clone, Debug)]
pub struct IpStride {
    params: IpStrideParams,
    table: Vec<IpStrideEntry>,
    tick: u64,
    max_line: u64,
}

impl IpStride {
    pub fn new(params: IpStrideParams, max_line: u64) -> Self {
        IpStride {
            table: Vec::with_capacity(params.table_entries),
            params,
            tick: 0,
            max_line,
        }
    }

    pub fn entry(&self, pc: u64) -> Option<&IpStrideEntry> {
        self.table.iter().find(|e| e.pc == pc)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Prefetcher for IpStride {
    fn id(&self) -> ComponentId {
        ComponentId::IpStride
    }

    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<LineAddress> {
        self.tick += 1;
        let Some(entry) = self.table.iter_mut().find(|e| e.pc == ctx.pc) else {
            let fresh = IpStrideEntry {
                pc: ctx.pc,
                last_line: ctx.line,
                stride: 0,
                confidence: 0,
                lru_stamp: self.tick,
            };
            if self.table.len() < self.params.table_entries.max(1) {
                self.table.push(fresh);
            } else {
                let victim = self
                    .table
                    .iter_mut()
                    .min_by_key(|e| e.lru_stamp)
                    .expect("table is full");
                *victim = fresh;
            }
            return Vec::new();
        };

        let observed = line_delta(ctx.line, entry.last_line);
        train_stride(&mut entry.stride, &mut entry.confidence, observed);
        entry.last_line = ctx.line;
        entry.lru_stamp = self.tick;

        if entry.confidence < self.params.confidence_threshold || entry.stride == 0 {
            return Vec::new();
        }
        let stride = entry.stride;
        (1..=self.params.degree as i64)
            .map_while(|i| {
                i.checked_mul(stride)
                    .and_then(|d| ctx.line.offset(d, self.max_line))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefetchers::test_util::{lines, pae};

    fn ip() -> IpStride {
        IpStride::new(IpStrideParams::default(), u64::MAX >> 6)
    }

    #[test]
    fn third_access_with_stable_stride_emits() {
        let mut p = ip();
        assert!(p.on_pae(&pae(0x400, 100, 0)).is_empty());
        assert!(p.on_pae(&pae(0x400, 110, 1)).is_empty());
        let out = p.on_pae(&pae(0x400, 120, 2));
        assert_eq!(
            lines(&out),
            (1..=8).map(|i| 120 + 10 * i).collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_access_and_zero_stride_emit_nothing() {
        let mut p = ip();
        assert!(p.on_pae(&pae(0x10, 5, 0)).is_empty());
        for s in 1..10 {
            assert!(p.on_pae(&pae(0x10, 5, s)).is_empty());
        }
        assert_eq!(p.entry(0x10).unwrap().stride, 0);
    }

    #[test]
    fn negative_stride_stops_at_zero() {
        let mut p = ip();
        p.on_pae(&pae(1, 30, 0));
        p.on_pae(&pae(1, 20, 1));
        assert_eq!(lines(&p.on_pae(&pae(1, 10, 2))), vec![0]);
    }

    #[test]
    fn lru_replacement_bounds_table() {
        let mut p = IpStride::new(
            IpStrideParams {
                table_entries: 4,
                ..IpStrideParams::default()
            },
            u64::MAX >> 6,
        );
        for pc in 0..4 {
            p.on_pae(&pae(pc, pc * 100, pc));
        }
        p.on_pae(&pae(0, 1, 10));
        p.on_pae(&pae(99, 1, 11));
        assert_eq!(p.len(), 4);
        assert!(p.entry(0).is_some());
        assert!(p.entry(1).is_none());
        assert!(p.entry(99).is_some());
    }
}
