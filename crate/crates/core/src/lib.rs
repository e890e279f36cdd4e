//! Trace-driven single-core cache simulator with a sandboxed meta-prefetcher.
//!
//! Component prefetchers run in shadow mode on every prefetch activation event
//! (a demand miss or a prefetch hit). Their would-be prefetches are recorded
//! in per-component Bloom filters and scored against later demands; at the end
//! of each evaluation phase the best-scoring component is selected and its
//! requests become the only ones that reach the prefetch queue.

pub mod arsenal;
pub mod bloom;
pub mod cache;
mod error;
pub mod experiment;
pub mod metrics;
pub mod prefetchers;
pub mod trace;
mod types;

pub use error::{Result, SimError};
pub use types::{AccessEvent, ComponentId, LineAddress, PaeContext};
