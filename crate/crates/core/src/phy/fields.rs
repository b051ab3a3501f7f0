//! Builders for the SYNC, SFD, PHD and payload fields.

use crc::{Crc, CRC_16_KERMIT, CRC_8_SMBUS};

use super::codes::CodeTable;
use super::config::PacketConfig;
use super::spread;
use super::sts::splitmix64;
use crate::error::{Error, Result};

const PHD_CRC: Crc<u8> = Crc::<u8>::new(&CRC_8_SMBUS);
const PAYLOAD_CRC: Crc<u16> = Crc::<u16>::new(&CRC_16_KERMIT);
const PN_SEED: u64 = 0x005E_ED0F_C0DE_u64;

/// Bits in the PHD: 10-bit length, 2-bit profile id, 4 reserved, CRC-8.
pub const PHD_BITS: usize = 24;
/// Largest payload the 10-bit length field can describe, CRC included.
pub const MAX_PAYLOAD_BYTES: usize = 1021;

/// SYNC chips: the preamble code repeated until `preamble_length` symbols.
pub fn build_sync(config: &PacketConfig, table: &CodeTable) -> Result<Vec<f64>> {
    config.check(table)?;
    let code = table.get(config.preamble_code)?;
    let n = config.preamble_length as usize;
    Ok(spread((0..n).map(|i| f64::from(code.symbols[i % code.len()]))))
}

/// SFD chips: each pattern element multiplies one full code period.
pub fn build_sfd(config: &PacketConfig, table: &CodeTable) -> Result<Vec<f64>> {
    let code = table.get(config.preamble_code)?;
    Ok(spread(config.sfd.pattern().iter().flat_map(|&p| {
        code.symbols.iter().map(move |&s| f64::from(p * s))
    })))
}

fn pn(index: usize) -> f64 {
    let word = splitmix64(PN_SEED ^ (index / 64) as u64);
    if (word >> (index % 64)) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

fn push_byte(bits: &mut Vec<bool>, byte: u8) {
    bits.extend((0..8).rev().map(|i| (byte >> i) & 1 == 1));
}

/// PHD bits describing a payload of `payload_len` bytes (before CRC).
pub fn phd_bits(config: &PacketConfig, payload_len: usize) -> Result<Vec<bool>> {
    if payload_len > MAX_PAYLOAD_BYTES {
        return Err(Error::InvalidConfig(format!("payload of {payload_len} bytes is too long")));
    }
    let coded_len = if payload_len == 0 { 0 } else { payload_len + 2 };
    let word = ((coded_len as u16) << 6) | (u16::from(config.phd.id()) << 4);
    let header = word.to_be_bytes();
    let mut bits = Vec::with_capacity(PHD_BITS);
    push_byte(&mut bits, header[0]);
    push_byte(&mut bits, header[1]);
    push_byte(&mut bits, PHD_CRC.checksum(&header));
    Ok(bits)
}

/// Parses PHD bits; returns (coded payload length in bytes, profile id).
pub fn parse_phd(bits: &[bool]) -> Option<(usize, u8)> {
    if bits.len() != PHD_BITS {
        return None;
    }
    let bytes = bits_to_bytes(bits);
    if PHD_CRC.checksum(&bytes[..2]) != bytes[2] {
        return None;
    }
    let word = u16::from_be_bytes([bytes[0], bytes[1]]);
    Some(((word >> 6) as usize, ((word >> 4) & 0b11) as u8))
}

/// Payload bits: the bytes followed by a CRC-16; empty payload, no bits.
pub fn payload_bits(payload: &[u8]) -> Vec<bool> {
    if payload.is_empty() {
        return Vec::new();
    }
    let mut bits = Vec::with_capacity((payload.len() + 2) * 8);
    for &b in payload {
        push_byte(&mut bits, b);
    }
    for b in PAYLOAD_CRC.checksum(payload).to_be_bytes() {
        push_byte(&mut bits, b);
    }
    bits
}

/// Recovers payload bytes from coded payload bits, checking the CRC.
pub fn parse_payload(bits: &[bool]) -> Option<Vec<u8>> {
    if bits.len() < 24 || !bits.len().is_multiple_of(8) {
        return None;
    }
    let bytes = bits_to_bytes(bits);
    let (data, crc) = bytes.split_at(bytes.len() - 2);
    (PAYLOAD_CRC.checksum(data).to_be_bytes() == crc).then(|| data.to_vec())
}

fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8).map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | u8::from(b))).collect()
}

/// Spreads each bit over `pulses_per_bit` pulses scrambled by a fixed PN sequence.
pub fn modulate_bits(bits: &[bool], pulses_per_bit: usize) -> Vec<f64> {
    spread(bits.iter().enumerate().flat_map(|(i, &b)| {
        let sign = if b { 1.0 } else { -1.0 };
        (0..pulses_per_bit).map(move |j| sign * pn(i * pulses_per_bit + j))
    }))
}

/// Soft integrate-and-dump over each bit's pulse slots.
pub fn decode_bits(chips: &[f64], pulses_per_bit: usize, nbits: usize) -> Vec<bool> {
    let sf = super::SPREADING_FACTOR;
    (0..nbits)
        .map(|i| {
            let acc: f64 = (0..pulses_per_bit)
                .map(|j| {
                    let p = i * pulses_per_bit + j;
                    chips.get(p * sf).copied().unwrap_or(0.0) * pn(p)
                })
                .sum();
            acc > 0.0
        })
        .collect()
}

pub fn build_phd(config: &PacketConfig, payload_len: usize) -> Result<Vec<f64>> {
    Ok(modulate_bits(&phd_bits(config, payload_len)?, config.phd.phd_pulses_per_bit()))
}

pub fn build_payload(config: &PacketConfig, payload: &[u8]) -> Vec<f64> {
    modulate_bits(&payload_bits(payload), config.phd.data_pulses_per_bit())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::config::{reference_config, SfdType};
    use crate::phy::SPREADING_FACTOR;

    fn short_table() -> CodeTable {
        let line = "1: +-+--+++-+---++-+-++0+-+0++--+-\n";
        CodeTable::parse(line).unwrap()
    }

    #[test]
    fn short_code_repeats_exactly_twice() {
        let table = short_table();
        let mut cfg = reference_config();
        cfg.preamble_code = 1;
        cfg.preamble_length = 62;
        cfg.pac = 2;
        let sync = build_sync(&cfg, &table).unwrap();
        assert_eq!(sync.len(), 62 * SPREADING_FACTOR);
        let period = 31 * SPREADING_FACTOR;
        assert_eq!(sync[..period], sync[period..]);
    }

    #[test]
    fn sync_autocorrelation_peaks_at_code_period() {
        let cfg = reference_config();
        let sync = build_sync(&cfg, CodeTable::builtin()).unwrap();
        let period = 127 * SPREADING_FACTOR;
        let lag_corr = |lag: usize| -> f64 {
            sync.iter().zip(&sync[lag..]).map(|(a, b)| a * b).sum::<f64>() / (sync.len() - lag) as f64
        };
        let at_period = lag_corr(period);
        for lag in (1..2 * period).filter(|l| l % period != 0) {
            assert!(lag_corr(lag).abs() < 0.5 * at_period, "lag {lag}");
        }
        assert!((lag_corr(2 * period) - at_period).abs() < 1e-12);
    }

    #[test]
    fn sync_rejects_partial_code_period() {
        let mut cfg = reference_config();
        cfg.preamble_length = 100;
        assert!(build_sync(&cfg, CodeTable::builtin()).is_err());
    }

    #[test]
    fn sfd_options_are_distinct() {
        let mut cfg = reference_config();
        let mut seen = Vec::new();
        for t in SfdType::ALL {
            cfg.sfd = t;
            let a = build_sfd(&cfg, CodeTable::builtin()).unwrap();
            assert_eq!(a, build_sfd(&cfg, CodeTable::builtin()).unwrap());
            assert!(!seen.contains(&a));
            seen.push(a);
        }
    }

    #[test]
    fn phd_roundtrip() {
        let cfg = reference_config();
        let bits = phd_bits(&cfg, 4).unwrap();
        assert_eq!(bits.len(), PHD_BITS);
        assert_eq!(parse_phd(&bits), Some((6, cfg.phd.id())));
        let mut bad = bits.clone();
        bad[3] = !bad[3];
        assert_eq!(parse_phd(&bad), None);
    }

    #[test]
    fn payload_roundtrip_and_crc() {
        let bits = payload_bits(&[1, 2, 3, 4]);
        assert_eq!(bits.len(), 48);
        assert_eq!(parse_payload(&bits), Some(vec![1, 2, 3, 4]));
        let mut bad = bits;
        bad[0] = !bad[0];
        assert_eq!(parse_payload(&bad), None);
    }

    #[test]
    fn empty_payload_has_zero_length_field() {
        let cfg = reference_config();
        assert!(build_payload(&cfg, &[]).is_empty());
        assert_eq!(build_phd(&cfg, 0).unwrap().len(), PHD_BITS * 64 * SPREADING_FACTOR);
    }

    #[test]
    fn modulation_decodes_cleanly() {
        let bits: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let chips = modulate_bits(&bits, 16);
        assert_eq!(decode_bits(&chips, 16, bits.len()), bits);
        let neg: Vec<f64> = chips.iter().map(|x| -x).collect();
        assert!(decode_bits(&neg, 16, bits.len()).iter().zip(&bits).all(|(a, b)| a != b));
    }
}
