//! Bloom filter sized from a projected capacity and a target false-positive
//! probability, hashed by seeded double hashing.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::types::LineAddress;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BloomParams {
    pub projected_capacity: u64,
    pub target_fpp: f64,
    pub bit_table_size: u64,
    pub hash_count: u32,
    pub seed: u64,
}

/// Optimal bit-table size `m` and hash count `k` for `n` elements at false
/// positive probability `p`:
/// `m = ceil(n ln(1/p) / ln(2)^2)`, `k = max(1, round(m/n ln 2))`.
pub fn derive_parameters(n: u64, p: f64) -> Result<(u64, u32)> {
    if n == 0 {
        return Err(SimError::config("bloom filter capacity must be at least 1"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(SimError::config(format!(
            "bloom filter false-positive probability {p} is outside (0, 1)"
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    let m = (n as f64 * (1.0 / p).ln() / (ln2 * ln2)).ceil() as u64;
    let k = ((m as f64 / n as f64) * ln2).round().max(1.0) as u32;
    Ok((m, k))
}

impl BloomParams {
    pub fn new(n: u64, p: f64, seed: u64) -> Result<Self> {
        let (m, k) = derive_parameters(n, p)?;
        Ok(BloomParams {
            projected_capacity: n,
            target_fpp: p,
            bit_table_size: m,
            hash_count: k,
            seed,
        })
    }

    pub fn bit_table_bytes(&self) -> u64 {
        self.bit_table_size.div_ceil(8)
    }
}

/// 64-bit finalizer from SplitMix64.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct BloomFilter {
    params: BloomParams,
    bits: Vec<u64>,
    inserted: u64,
}

impl BloomFilter {
    pub fn new(params: BloomParams) -> Self {
        let words = params.bit_table_size.div_ceil(64) as usize;
        BloomFilter {
            params,
            bits: vec![0; words],
            inserted: 0,
        }
    }

    pub fn with_capacity(n: u64, p: f64, seed: u64) -> Result<Self> {
        Ok(Self::new(BloomParams::new(n, p, seed)?))
    }

    pub fn params(&self) -> &BloomParams {
        &self.params
    }

    pub fn inserted_count(&self) -> u64 {
        self.inserted
    }

    /// Bit positions probed for `line`, in probe order.
    pub fn positions(&self, line: LineAddress) -> impl Iterator<Item = u64> {
        let seed = self.params.seed;
        let h1 = mix64(line.0 ^ seed);
        let h2 = mix64(
            line.0.wrapping_mul(0x9e37_79b9_7f4a_7c15)
                ^ seed.rotate_left(32)
                ^ 0xd6e8_feb8_6659_fd93,
        );
        let m = self.params.bit_table_size;
        (0..self.params.hash_count as u64).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % m)
    }

    pub fn insert(&mut self, line: LineAddress) {
        let positions: Vec<u64> = self.positions(line).collect();
        for bit in positions {
            self.bits[(bit / 64) as usize] |= 1 << (bit % 64);
        }
        self.inserted += 1;
    }

    pub fn query(&self, line: LineAddress) -> bool {
        self.positions(line)
            .all(|bit| self.bits[(bit / 64) as usize] & (1 << (bit % 64)) != 0)
    }

    pub fn clear(&mut self) {
        self.bits.iter_mut().for_each(|w| *w = 0);
        self.inserted = 0;
    }

    /// Number of set bits in the table.
    pub fn ones(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Raw bit table, for equality checks in tests.
    pub fn bit_words(&self) -> &[u64] {
        &self.bits
    }
}
