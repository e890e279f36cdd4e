//! Component prefetchers.
//!
//! Every component sees only the stream of prefetch activation events and
//! returns candidate lines; none of them inspects cache contents.

mod ip_stride;
mod mlop;
mod next_line;
mod spp;
mod tskid;

use serde::{Deserialize, Serialize};

pub use ip_stride::{IpStride, IpStrideParams};
pub use mlop::{Mlop, MlopParams};
pub use next_line::{NextLine, NextLineParams};
pub use spp::{ChainStats, Spp, SppParams};
pub use tskid::{DelayedPrefetch, Tskid, TskidParams};

use crate::types::{ComponentId, LineAddress, PaeContext};

pub trait Prefetcher: Send {
    fn id(&self) -> ComponentId;

    /// Candidate lines for one activation event.
    fn on_pae(&mut self, ctx: &PaeContext) -> Vec<LineAddress>;

    /// Called at the end of an evaluation phase with the component's score.
    fn end_phase(&mut self, _score: u16) {}
}

/// Per-component tuning, one section per prefetcher in the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentParams {
    pub next_line: NextLineParams,
    pub ip_stride: IpStrideParams,
    pub spp: SppParams,
    pub mlop: MlopParams,
    pub tskid: TskidParams,
}

/// Builds a component for shadow evaluation under the meta-prefetcher.
pub fn build_shadow(
    id: ComponentId,
    params: &ComponentParams,
    max_line: u64,
) -> Box<dyn Prefetcher> {
    match id {
        ComponentId::NextLine => Box::new(NextLine::adaptive(params.next_line.clone(), max_line)),
        ComponentId::IpStride => Box::new(IpStride::new(params.ip_stride.clone(), max_line)),
        ComponentId::Spp => Box::new(Spp::new(params.spp.clone(), max_line)),
        ComponentId::Mlop => Box::new(Mlop::new(params.mlop.clone(), max_line)),
        ComponentId::Tskid => Box::new(Tskid::new(params.tskid.clone(), max_line)),
    }
}

/// Builds a component wired straight to the prefetch queue with fixed
/// aggressiveness.
pub fn build_standalone(
    id: ComponentId,
    params: &ComponentParams,
    max_line: u64,
) -> Box<dyn Prefetcher> {
    match id {
        ComponentId::NextLine => Box::new(NextLine::fixed(
            params.next_line.standalone_degree,
            max_line,
        )),
        other => build_shadow(other, params, max_line),
    }
}

/// Saturating 2-bit confidence update shared by the PC-indexed predictors.
///
/// A matching stride raises confidence; a mismatch lowers it, and once it hits
/// zero the new stride replaces the old one with confidence 1.
pub(crate) fn train_stride(stride: &mut i64, confidence: &mut u8, observed: i64) {
    if observed == *stride {
        *confidence = (*confidence + 1).min(3);
    } else {
        *confidence = confidence.saturating_sub(1);
        if *confidence == 0 {
            *stride = observed;
            *confidence = 1;
        }
    }
}

pub(crate) fn line_delta(to: LineAddress, from: LineAddress) -> i64 {
    to.0.wrapping_sub(from.0) as i64
}
