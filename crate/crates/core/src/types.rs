use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cache::OutcomeKind;
use crate::error::SimError;

/// One demand access from a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEvent {
    pub pc: u64,
    pub addr: u64,
    pub is_write: bool,
    /// Position in the demand stream; the simulator's clock.
    pub seq: u64,
}

/// A cache-line address (`addr >> log2(line_size)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LineAddress(pub u64);

impl LineAddress {
    pub fn from_addr(addr: u64, line_shift: u32) -> Self {
        LineAddress(addr >> line_shift)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// `self + delta`, or `None` when the result leaves `[0, max_line]`.
    pub fn offset(self, delta: i64, max_line: u64) -> Option<LineAddress> {
        let v = self.0.checked_add_signed(delta)?;
        (v <= max_line).then_some(LineAddress(v))
    }
}

impl fmt::Display for LineAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Identifies a component prefetcher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentId {
    NextLine,
    IpStride,
    Spp,
    Mlop,
    Tskid,
}

impl ComponentId {
    pub const ALL: [ComponentId; 5] = [
        ComponentId::NextLine,
        ComponentId::IpStride,
        ComponentId::Spp,
        ComponentId::Mlop,
        ComponentId::Tskid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComponentId::NextLine => "next-line",
            ComponentId::IpStride => "ip-stride",
            ComponentId::Spp => "spp",
            ComponentId::Mlop => "mlop",
            ComponentId::Tskid => "tskid",
        }
    }

    /// Stable small index, used to derive per-component filter seeds.
    pub fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComponentId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComponentId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| SimError::config(format!("unknown component `{s}`")))
    }
}

/// What a component sees when it is triggered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PaeContext {
    pub pc: u64,
    pub line: LineAddress,
    pub seq: u64,
    /// Never [`OutcomeKind::Hit`].
    pub outcome: OutcomeKind,
}
