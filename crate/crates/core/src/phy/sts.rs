//! Scrambled timestamp sequence generator.
//!
//! A keyed counter-mode generator built on the split-mix finalizer. Each
//! 64-bit block is derived from (key, counter, block index), so a sequence
//! never repeats within a packet and two keys give unrelated sequences.

use serde::{Deserialize, Serialize};

use super::config::PacketConfig;
use super::spread;
use crate::error::{Error, Result};

/// Key material plus the per-packet counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StsSeed {
    pub key: u128,
    pub counter: u32,
}

impl StsSeed {
    pub fn new(key: u128, counter: u32) -> Self {
        StsSeed { key, counter }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn block(seed: StsSeed, index: u64) -> u64 {
    let lo = seed.key as u64;
    let hi = (seed.key >> 64) as u64;
    let ctr = (u64::from(seed.counter) << 32) ^ index;
    splitmix64(lo ^ splitmix64(hi ^ splitmix64(ctr)))
}

/// The ±1 polarity sequence of `n` STS pulses.
pub fn sts_symbols(seed: StsSeed, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let word = block(seed, (i / 64) as u64);
            if (word >> (i % 64)) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// STS chips for `config`, one pulse per spreading slot.
pub fn build_sts(seed: StsSeed, config: &PacketConfig) -> Result<Vec<f64>> {
    if !config.sts_mode.has_sts() {
        return Err(Error::Precondition("STS requested with STS mode off".into()));
    }
    Ok(spread(sts_symbols(seed, config.sts_length as usize)))
}
