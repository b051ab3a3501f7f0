//! Chip-rate baseband waveforms for every HRP packet field.
//!
//! One sample per chip; a code symbol occupies [`SPREADING_FACTOR`] chips with
//! the pulse in the first chip and zeros after it.

pub mod codes;
pub mod config;
pub mod fields;
pub mod packet;
pub mod sts;

pub use codes::{CodeTable, TernaryCode};
pub use config::{reference_config, Domains, PacketConfig, PhdProfile, SfdType, StsMode};
pub use fields::{build_phd, build_payload, build_sfd, build_sync, decode_bits, phd_bits, payload_bits};
pub use packet::{assemble_packet, AcqMark, BasebandSignal, Field, FieldSpan, PowerProfile};
pub use sts::{build_sts, StsSeed};

use crate::error::{Error, Result};

/// Chips per code symbol.
pub const SPREADING_FACTOR: usize = 4;

/// Looks up a preamble code in the built-in table.
pub fn preamble_code(index: u32) -> Result<TernaryCode> {
    let idx = u8::try_from(index).map_err(|_| Error::UnknownCode(index))?;
    CodeTable::builtin().get(idx).cloned()
}

/// Places one pulse per symbol at the start of each spreading slot.
pub fn spread(symbols: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let iter = symbols.into_iter();
    let mut out = Vec::with_capacity(iter.size_hint().0 * SPREADING_FACTOR);
    for s in iter {
        out.push(s);
        out.extend_from_slice(&[0.0; SPREADING_FACTOR - 1]);
    }
    out
}
