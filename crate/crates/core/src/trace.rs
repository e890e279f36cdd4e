//! Trace files and synthetic access-pattern generation.
//!
//! Text format, one demand access per line:
//!
//! ```text
//! # comment
//! 0x400 0x1000 R
//! 0x404 0x1040 W
//! ```

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bloom::mix64;
use crate::error::{Result, SimError};
use crate::types::AccessEvent;

/// Bytes between consecutive touches of one element.
pub const WORD_BYTES: u64 = 4;

/// Address shift applied to each repetition of a phased segment list.
const REPETITION_SHIFT: u64 = 1 << 40;

pub fn parse_trace(reader: impl BufRead) -> Result<Vec<AccessEvent>> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let err = |message: String| SimError::Parse {
            line: lineno,
            message,
        };
        let fields: Vec<&str> = text.split_whitespace().collect();
        let [pc, addr, op] = fields[..] else {
            return Err(err(format!(
                "expected `PC ADDR R|W`, got {} fields",
                fields.len()
            )));
        };
        let is_write = match op {
            "R" | "r" => false,
            "W" | "w" => true,
            other => return Err(err(format!("unknown operation `{other}`"))),
        };
        events.push(AccessEvent {
            pc: parse_hex(pc).map_err(&err)?,
            addr: parse_hex(addr).map_err(&err)?,
            is_write,
            seq: events.len() as u64,
        });
    }
    Ok(events)
}

fn parse_hex(field: &str) -> std::result::Result<u64, String> {
    let digits = field
        .strip_prefix("0x")
        .or_else(|| field.strip_prefix("0X"))
        .ok_or_else(|| format!("`{field}` is not 0x-prefixed hex"))?;
    u64::from_str_radix(digits, 16).map_err(|e| format!("`{field}`: {e}"))
}

pub fn write_trace(events: &[AccessEvent], mut out: impl Write) -> Result<()> {
    for e in events {
        writeln!(
            out,
            "{:#x} {:#x} {}",
            e.pc,
            e.addr,
            if e.is_write { 'W' } else { 'R' }
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcStream {
    pub pc: u64,
    pub start: u64,
    /// Bytes added after each step.
    pub delta: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub pattern: PatternSpec,
    /// Accesses generated before moving to the next segment.
    pub length: u64,
}

fn default_line_size() -> u64 {
    64
}

fn default_pcs() -> Vec<u64> {
    vec![0x400]
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PatternKind {
    /// `addr += line_size` each step. With several PCs, each access draws
    /// its PC uniformly from the pool.
    Sequential {
        #[serde(default)]
        start: u64,
        #[serde(default = "default_line_size")]
        line_size: u64,
        #[serde(default = "default_pcs")]
        pcs: Vec<u64>,
        #[serde(default = "one")]
        touches: u32,
    },
    /// `addr += stride` each step from one PC.
    Stride {
        #[serde(default)]
        start: u64,
        stride: i64,
        #[serde(default = "default_pc")]
        pc: u64,
        #[serde(default = "one")]
        touches: u32,
    },
    /// Uniform draws from a fixed set of lines.
    RandomWorkingSet {
        #[serde(default)]
        base: u64,
        lines: u64,
        #[serde(default = "default_line_size")]
        line_size: u64,
        #[serde(default = "default_pcs")]
        pcs: Vec<u64>,
        #[serde(default = "one")]
        touches: u32,
    },
    /// Round-robin over streams, each with its own PC, start, and delta.
    PcDelta {
        streams: Vec<PcStream>,
        #[serde(default = "one")]
        touches: u32,
    },
    /// Segments in order, repeated until the requested length.
    Phased { segments: Vec<Segment> },
}

fn default_pc() -> u64 {
    0x400
}

/// A synthetic access pattern. Each step of a pattern touches `touches`
/// consecutive words of the same element before moving on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    #[serde(flatten)]
    pub kind: PatternKind,
    #[serde(default)]
    pub seed: u64,
}

impl PatternSpec {
    pub fn new(kind: PatternKind, seed: u64) -> Self {
        PatternSpec { kind, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let touches_ok = |t: u32| {
            if t == 0 {
                Err(SimError::config("touches must be at least 1"))
            } else {
                Ok(())
            }
        };
        let pool_ok = |pcs: &[u64]| {
            if pcs.is_empty() {
                Err(SimError::config("pc pool must not be empty"))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            PatternKind::Sequential {
                line_size,
                pcs,
                touches,
                ..
            } => {
                if *line_size == 0 {
                    return Err(SimError::config("line_size must be positive"));
                }
                pool_ok(pcs)?;
                touches_ok(*touches)
            }
            PatternKind::Stride {
                stride, touches, ..
            } => {
                if *stride == 0 {
                    return Err(SimError::config("stride must be non-zero"));
                }
                touches_ok(*touches)
            }
            PatternKind::RandomWorkingSet {
                lines,
                pcs,
                touches,
                line_size,
                ..
            } => {
                if *lines == 0 || *line_size == 0 {
                    return Err(SimError::config("working set needs at least one line"));
                }
                pool_ok(pcs)?;
                touches_ok(*touches)
            }
            PatternKind::PcDelta { streams, touches } => {
                if streams.is_empty() {
                    return Err(SimError::config("pc-delta needs at least one stream"));
                }
                touches_ok(*touches)
            }
            PatternKind::Phased { segments } => {
                if segments.is_empty() {
                    return Err(SimError::config("phased pattern needs segments"));
                }
                for s in segments {
                    if s.length == 0 {
                        return Err(SimError::config("phased segment lengths must be positive"));
                    }
                    s.pattern.validate()?;
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            PatternKind::Sequential { .. } => "sequential",
            PatternKind::Stride { .. } => "stride",
            PatternKind::RandomWorkingSet { .. } => "random-working-set",
            PatternKind::PcDelta { .. } => "pc-delta",
            PatternKind::Phased { .. } => "phased",
        }
        .to_string()
    }
}

/// Produces `length` accesses for `spec`. Deterministic in `(spec, length)`.
pub fn generate(spec: &PatternSpec, length: u64) -> Result<Vec<AccessEvent>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(length as usize);
    emit(spec, length, 0, &mut out);
    for (i, e) in out.iter_mut().enumerate() {
        e.seq = i as u64;
    }
    Ok(out)
}

fn push_touches(out: &mut Vec<AccessEvent>, budget: u64, pc: u64, addr: u64, touches: u32) {
    for t in 0..touches as u64 {
        if out.len() as u64 >= budget {
            return;
        }
        out.push(AccessEvent {
            pc,
            addr: addr.wrapping_add(t * WORD_BYTES),
            is_write: false,
            seq: 0,
        });
    }
}

/// Appends up to `length` accesses, with every address shifted by `shift`.
fn emit(spec: &PatternSpec, length: u64, shift: u64, out: &mut Vec<AccessEvent>) {
    let budget = out.len() as u64 + length;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.kind {
        PatternKind::Sequential {
            start,
            line_size,
            pcs,
            touches,
        } => {
            let mut addr = start.wrapping_add(shift);
            while (out.len() as u64) < budget {
                for t in 0..*touches as u64 {
                    if out.len() as u64 >= budget {
                        break;
                    }
                    let pc = pcs[rng.gen_range(0..pcs.len())];
                    out.push(AccessEvent {
                        pc,
                        addr: addr.wrapping_add(t * WORD_BYTES),
                        is_write: false,
                        seq: 0,
                    });
                }
                addr = addr.wrapping_add(*line_size);
            }
        }
        PatternKind::Stride {
            start,
            stride,
            pc,
            touches,
        } => {
            let mut addr = start.wrapping_add(shift);
            while (out.len() as u64) < budget {
                push_touches(out, budget, *pc, addr, *touches);
                addr = addr.wrapping_add_signed(*stride);
            }
        }
        PatternKind::RandomWorkingSet {
            base,
            lines,
            line_size,
            pcs,
            touches,
        } => {
            while (out.len() as u64) < budget {
                let line = rng.gen_range(0..*lines);
                let pc = pcs[rng.gen_range(0..pcs.len())];
                let addr = base.wrapping_add(shift).wrapping_add(line * line_size);
                push_touches(out, budget, pc, addr, *touches);
            }
        }
        PatternKind::PcDelta { streams, touches } => {
            let mut addrs: Vec<u64> = streams
                .iter()
                .map(|s| s.start.wrapping_add(shift))
                .collect();
            'outer: loop {
                for (s, addr) in streams.iter().zip(addrs.iter_mut()) {
                    if out.len() as u64 >= budget {
                        break 'outer;
                    }
                    push_touches(out, budget, s.pc, *addr, *touches);
                    *addr = addr.wrapping_add_signed(s.delta);
                }
            }
        }
        PatternKind::Phased { segments } => {
            let mut repetition = 0u64;
            while (out.len() as u64) < budget {
                for (i, seg) in segments.iter().enumerate() {
                    let remaining = budget - out.len() as u64;
                    if remaining == 0 {
                        break;
                    }
                    let sub = PatternSpec {
                        kind: seg.pattern.kind.clone(),
                        seed: mix64(spec.seed ^ seg.pattern.seed ^ (repetition << 32) ^ i as u64),
                    };
                    let shift = shift.wrapping_add(repetition.wrapping_mul(REPETITION_SHIFT));
                    emit(&sub, seg.length.min(remaining), shift, out);
                }
                repetition += 1;
            }
        }
    }
}

/// Where each segment of a phased trace starts, as `(first seq, segment index)`.
pub fn phased_boundaries(spec: &PatternSpec, length: u64) -> Vec<(u64, usize)> {
    let PatternKind::Phased { segments } = &spec.kind else {
        return vec![(0, 0)];
    };
    if segments.iter().all(|s| s.length == 0) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut at = 0;
    'outer: loop {
        for (i, s) in segments.iter().enumerate() {
            if at >= length {
                break 'outer;
            }
            out.push((at, i));
            at += s.length;
        }
    }
    out
}

/// Canned patterns used by the CLI and the test suites.
pub mod presets {
    use super::*;

    /// Word-granular sequential scan whose accesses come from a large random
    /// PC pool, so no single PC carries the stream.
    pub fn sequential(seed: u64) -> PatternSpec {
        PatternSpec::new(
            PatternKind::Sequential {
                start: 0x1000_0000,
                line_size: 64,
                pcs: (0..256).map(|i| 0x10_0000 + 4 * i).collect(),
                touches: 16,
            },
            seed,
        )
    }

    /// Eight PCs, each walking its own array with a stride longer than a page.
    pub fn per_pc_stride(seed: u64) -> PatternSpec {
        let streams = (0..8u64)
            .map(|i| {
                let lines = 65 + 64 * (i as i64 % 4) + i as i64;
                let delta = if i % 2 == 0 { lines * 64 } else { -lines * 64 };
                PcStream {
                    pc: 0x40_0000 + 0x10 * i,
                    start: (i + 1) << 34,
                    delta,
                }
            })
            .collect();
        PatternSpec::new(
            PatternKind::PcDelta {
                streams,
                touches: 4,
            },
            seed,
        )
    }

    pub fn random_working_set(seed: u64) -> PatternSpec {
        PatternSpec::new(
            PatternKind::RandomWorkingSet {
                base: 0x8000_0000,
                lines: 1 << 16,
                line_size: 64,
                pcs: (0..64).map(|i| 0x20_0000 + 4 * i).collect(),
                touches: 2,
            },
            seed,
        )
    }

    /// Single-PC stride walk.
    pub fn stride(stride: i64, seed: u64) -> PatternSpec {
        PatternSpec::new(
            PatternKind::Stride {
                start: 0x4000_0000,
                stride,
                pc: 0x400,
                touches: 1,
            },
            seed,
        )
    }

    /// Alternating per-PC stride and sequential segments.
    pub fn phased(stride_len: u64, sequential_len: u64, seed: u64) -> PatternSpec {
        PatternSpec::new(
            PatternKind::Phased {
                segments: vec![
                    Segment {
                        pattern: per_pc_stride(1),
                        length: stride_len,
                    },
                    Segment {
                        pattern: sequential(2),
                        length: sequential_len,
                    },
                ],
            },
            seed,
        )
    }

    /// Default phased preset: 40k-access stride segments, 100k-access
    /// sequential segments.
    pub fn phased_default(seed: u64) -> PatternSpec {
        phased(40_000, 100_000, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_records_and_comments() {
        let events = parse_trace(Cursor::new("0x400 0x1000 R\n")).unwrap();
        assert_eq!(
            events,
            vec![AccessEvent {
                pc: 0x400,
                addr: 0x1000,
                is_write: false,
                seq: 0
            }]
        );
        let events = parse_trace(Cursor::new("# comment\n\n0x1 0x2 W\n0x3 0x4 R\n")).unwrap();
        assert_eq!(events.len(), 2);
        assert!(events[0].is_write);
        assert_eq!(events[1].seq, 1);
        assert!(parse_trace(Cursor::new("")).unwrap().is_empty());
    }

    #[test]
    fn rejects_malformed_lines_with_line_number() {
        match parse_trace(Cursor::new("0x400 zzz R\n")) {
            Err(SimError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_trace(Cursor::new("# x\n0x1 0x2 R\n0x1 0x2\n")) {
            Err(SimError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_trace(Cursor::new("0x1 0x2 X\n")).is_err());
        assert!(parse_trace(Cursor::new("1 0x2 R\n")).is_err());
    }

    #[test]
    fn write_then_parse_round_trips() {
        let events = generate(&presets::random_working_set(4), 500).unwrap();
        let mut buf = Vec::new();
        write_trace(&events, &mut buf).unwrap();
        assert_eq!(parse_trace(Cursor::new(buf)).unwrap(), events);
    }

    fn lines_of(events: &[AccessEvent]) -> Vec<u64> {
        events.iter().map(|e| e.addr >> 6).collect()
    }

    #[test]
    fn sequential_and_stride_examples() {
        let seq = PatternSpec::new(
            PatternKind::Sequential {
                start: 0,
                line_size: 64,
                pcs: vec![0x400],
                touches: 1,
            },
            0,
        );
        assert_eq!(lines_of(&generate(&seq, 4).unwrap()), vec![0, 1, 2, 3]);
        let stride = PatternSpec::new(
            PatternKind::Stride {
                start: 0,
                stride: 0x100,
                pc: 0x400,
                touches: 1,
            },
            0,
        );
        let ev = generate(&stride, 3).unwrap();
        assert_eq!(lines_of(&ev), vec![0, 4, 8]);
        assert!(ev.iter().all(|e| e.pc == 0x400));
        assert_eq!(ev.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn touches_hit_consecutive_words() {
        let ev = generate(&presets::sequential(0), 32).unwrap();
        assert_eq!(ev[1].addr - ev[0].addr, WORD_BYTES);
        assert_eq!(ev[16].addr - ev[0].addr, 64);
    }

    #[test]
    fn generation_is_deterministic() {
        for spec in [
            presets::sequential(9),
            presets::random_working_set(9),
            presets::per_pc_stride(9),
            presets::phased(1000, 3000, 9),
        ] {
            assert_eq!(
                generate(&spec, 10_000).unwrap(),
                generate(&spec, 10_000).unwrap()
            );
        }
        assert_ne!(
            generate(&presets::random_working_set(1), 100).unwrap(),
            generate(&presets::random_working_set(2), 100).unwrap()
        );
    }

    #[test]
    fn phased_alternates_segments() {
        let spec = presets::phased(100, 200, 0);
        let ev = generate(&spec, 650).unwrap();
        assert_eq!(ev.len(), 650);
        assert!(ev[..100].iter().all(|e| e.pc >= 0x40_0000));
        assert!(ev[100..300].iter().all(|e| e.pc < 0x40_0000));
        assert!(ev[300..400].iter().all(|e| e.pc >= 0x40_0000));
        assert_eq!(
            phased_boundaries(&spec, 650),
            vec![(0, 0), (100, 1), (300, 0), (400, 1), (600, 0)]
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&presets::stride(0, 0), 1).is_err());
        let empty = PatternSpec::new(PatternKind::Phased { segments: vec![] }, 0);
        assert!(generate(&empty, 1).is_err());
        let zero_len = PatternSpec::new(
            PatternKind::Phased {
                segments: vec![Segment {
                    pattern: presets::sequential(0),
                    length: 0,
                }],
            },
            0,
        );
        assert!(generate(&zero_len, 1).is_err());
    }

    #[test]
    fn spec_serializes_with_stable_field_names() {
        let spec = presets::stride(256, 3);
        let text = toml::to_string(&spec).unwrap();
        assert!(text.contains("kind = \"stride\""));
        let back: PatternSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
