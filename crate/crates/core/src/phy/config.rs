//! Packet configuration and the finite parameter domains a COTS chip exposes.

use serde::{Deserialize, Serialize};

use super::codes::CodeTable;
use super::SPREADING_FACTOR;
use crate::error::{Error, Result};

/// Start-of-frame delimiter variants. Each is a zero-sum ternary pattern of
/// preamble symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SfdType {
    Short8,
    Alt8,
    Long16,
    Long32,
}

impl SfdType {
    pub const ALL: [SfdType; 4] = [SfdType::Short8, SfdType::Alt8, SfdType::Long16, SfdType::Long32];

    pub fn pattern(self) -> &'static [i8] {
        match self {
            SfdType::Short8 => &[0, 1, 0, -1, 1, 0, 0, -1],
            SfdType::Alt8 => &[-1, -1, 1, 1, 1, 1, -1, -1],
            SfdType::Long16 => &[1, -1, 1, -1, -1, -1, -1, -1, -1, 1, 1, 1, -1, 1, 1, 1],
            SfdType::Long32 => &[
                -1, -1, -1, -1, -1, 1, -1, -1, 1, 1, -1, -1, -1, 1, -1, -1, 1, -1, 1, 1, 1, 1, 1,
                1, 1, -1, 1, -1, 1, -1, 1, 1,
            ],
        }
    }
}

/// Where (and whether) the scrambled timestamp sequence sits in the frame.
///
/// The declaration order is the order in which a sniffer should try them:
/// a mode that is a structural prefix of another comes after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StsMode {
    /// SYNC, SFD, PHD, payload, STS.
    AfterPayload,
    /// SYNC, SFD, PHD, payload.
    Off,
    /// SYNC, SFD, STS, PHD, payload.
    BeforePhd,
    /// SYNC, SFD, STS; no data fields.
    NoData,
}

impl StsMode {
    pub const ALL: [StsMode; 4] = [StsMode::AfterPayload, StsMode::Off, StsMode::BeforePhd, StsMode::NoData];

    pub fn has_sts(self) -> bool {
        self != StsMode::Off
    }

    pub fn has_data(self) -> bool {
        self != StsMode::NoData
    }
}

/// PHD-related parameters bundled together (data rate, PHD mode/rate, PDOA).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhdProfile {
    Std850k,
    Std6m8,
    Fast6m8,
    Pdoa850k,
}

impl PhdProfile {
    pub const ALL: [PhdProfile; 4] =
        [PhdProfile::Std850k, PhdProfile::Std6m8, PhdProfile::Fast6m8, PhdProfile::Pdoa850k];

    pub fn id(self) -> u8 {
        self as u8
    }

    /// Pulses per PHD bit.
    pub fn phd_pulses_per_bit(self) -> usize {
        match self {
            PhdProfile::Fast6m8 => 16,
            _ => 64,
        }
    }

    /// Pulses per payload bit.
    pub fn data_pulses_per_bit(self) -> usize {
        match self {
            PhdProfile::Std850k | PhdProfile::Pdoa850k => 128,
            PhdProfile::Std6m8 | PhdProfile::Fast6m8 => 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PacketConfig {
    pub channel: u8,
    pub preamble_code: u8,
    /// Total preamble length in code symbols; a whole number of code periods.
    pub preamble_length: u32,
    /// Preamble accumulation chunk, in preamble symbols (code periods).
    pub pac: u32,
    pub sfd: SfdType,
    pub sts_mode: StsMode,
    /// STS length in pulses.
    pub sts_length: u32,
    pub phd: PhdProfile,
}

impl PacketConfig {
    /// Number of code periods in the SYNC field for a given code length.
    pub fn repetitions(&self, code_len: usize) -> usize {
        self.preamble_length as usize / code_len
    }

    /// Structural validity against a code table (no domain membership check).
    pub fn check(&self, table: &CodeTable) -> Result<()> {
        let code = table.get(self.preamble_code)?;
        if self.preamble_length == 0 || !(self.preamble_length as usize).is_multiple_of(code.len()) {
            return Err(Error::InvalidConfig(format!(
                "preamble length {} is not a multiple of the code length {}",
                self.preamble_length,
                code.len()
            )));
        }
        if self.pac == 0 || !self.preamble_length.is_multiple_of(self.pac) {
            return Err(Error::InvalidConfig(format!(
                "pac {} does not divide preamble length {}",
                self.pac, self.preamble_length
            )));
        }
        if self.sts_mode.has_sts() && self.sts_length == 0 {
            return Err(Error::InvalidConfig("zero STS length".into()));
        }
        Ok(())
    }

    /// Structural validity plus membership of every field in `domains`.
    pub fn validate(&self, domains: &Domains, table: &CodeTable) -> Result<()> {
        self.check(table)?;
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what} outside its domain")));
        if !domains.channels.contains(&self.channel) {
            return bad("channel");
        }
        if !domains.preamble_codes.contains(&self.preamble_code) {
            return bad("preamble code");
        }
        if !domains.preamble_lengths.contains(&self.preamble_length) {
            return bad("preamble length");
        }
        if !domains.pacs.contains(&self.pac) {
            return bad("pac");
        }
        if !domains.sfd_types.contains(&self.sfd) {
            return bad("sfd type");
        }
        if !domains.sts_modes.contains(&self.sts_mode) {
            return bad("sts mode");
        }
        if !domains.sts_lengths.contains(&self.sts_length) {
            return bad("sts length");
        }
        if !domains.phd_profiles.contains(&self.phd) {
            return bad("phd profile");
        }
        Ok(())
    }

    /// True when both configurations put the same structure on the air:
    /// STS length is irrelevant with STS off, PHD profile without data fields.
    pub fn equivalent(&self, other: &PacketConfig) -> bool {
        let base = self.channel == other.channel
            && self.preamble_code == other.preamble_code
            && self.preamble_length == other.preamble_length
            && self.pac == other.pac
            && self.sfd == other.sfd
            && self.sts_mode == other.sts_mode;
        base && (!self.sts_mode.has_sts() || self.sts_length == other.sts_length)
            && (!self.sts_mode.has_data() || self.phd == other.phd)
    }

    pub fn sync_chips(&self) -> usize {
        self.preamble_length as usize * SPREADING_FACTOR
    }

    pub fn sfd_chips(&self, code_len: usize) -> usize {
        self.sfd.pattern().len() * code_len * SPREADING_FACTOR
    }

    pub fn sts_chips(&self) -> usize {
        if self.sts_mode.has_sts() {
            self.sts_length as usize * SPREADING_FACTOR
        } else {
            0
        }
    }

    pub fn pac_chips(&self, code_len: usize) -> usize {
        self.pac as usize * code_len * SPREADING_FACTOR
    }
}

/// The finite option lists for every configuration parameter.
///
/// List order is significant: it is the order the sniffer walks them in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Domains {
    pub channels: Vec<u8>,
    pub pacs: Vec<u32>,
    pub preamble_codes: Vec<u8>,
    pub preamble_lengths: Vec<u32>,
    pub sfd_types: Vec<SfdType>,
    pub sts_modes: Vec<StsMode>,
    /// Longest first, so a shorter guess never masks a longer true length.
    pub sts_lengths: Vec<u32>,
    pub phd_profiles: Vec<PhdProfile>,
}

pub const BUILTIN_CODE_LEN: u32 = 127;

impl Default for Domains {
    fn default() -> Self {
        Domains {
            channels: vec![5, 9],
            pacs: vec![4, 8, 16, 32],
            preamble_codes: (9..=24).collect(),
            preamble_lengths: [32, 64, 96, 128, 160, 192, 256, 512, 1024]
                .iter()
                .map(|r| r * BUILTIN_CODE_LEN)
                .collect(),
            sfd_types: SfdType::ALL.to_vec(),
            sts_modes: StsMode::ALL.to_vec(),
            sts_lengths: vec![4096, 2048, 1024, 512, 256, 128, 64],
            phd_profiles: PhdProfile::ALL.to_vec(),
        }
    }
}

impl Domains {
    /// Domains with a single option each, taken from `cfg`.
    pub fn singleton(cfg: &PacketConfig) -> Self {
        Domains {
            channels: vec![cfg.channel],
            pacs: vec![cfg.pac],
            preamble_codes: vec![cfg.preamble_code],
            preamble_lengths: vec![cfg.preamble_length],
            sfd_types: vec![cfg.sfd],
            sts_modes: vec![cfg.sts_mode],
            sts_lengths: vec![cfg.sts_length],
            phd_profiles: vec![cfg.phd],
        }
    }

    /// Every (channel, pac, code, length, sfd, mode, sts length, phd) tuple,
    /// including combinations whose pac does not divide the preamble length.
    pub fn enumerate(&self) -> impl Iterator<Item = PacketConfig> + '_ {
        let stage1 = self.channels.iter().flat_map(move |&c| self.pacs.iter().map(move |&p| (c, p)));
        stage1.flat_map(move |(channel, pac)| {
            self.preamble_codes.iter().flat_map(move |&code| {
                self.preamble_lengths.iter().flat_map(move |&len| {
                    self.sfd_types.iter().flat_map(move |&sfd| {
                        self.sts_modes.iter().flat_map(move |&mode| {
                            self.sts_lengths.iter().flat_map(move |&sl| {
                                self.phd_profiles.iter().map(move |&phd| PacketConfig {
                                    channel,
                                    preamble_code: code,
                                    preamble_length: len,
                                    pac,
                                    sfd,
                                    sts_mode: mode,
                                    sts_length: sl,
                                    phd,
                                })
                            })
                        })
                    })
                })
            })
        })
    }

    /// First option of every list.
    pub fn first(&self) -> PacketConfig {
        PacketConfig {
            channel: self.channels[0],
            preamble_code: self.preamble_codes[0],
            preamble_length: self.preamble_lengths[0],
            pac: self.pacs[0],
            sfd: self.sfd_types[0],
            sts_mode: self.sts_modes[0],
            sts_length: self.sts_lengths[0],
            phd: self.phd_profiles[0],
        }
    }
}

/// A representative DS-TWR configuration: 64-symbol preamble, STS before PHD.
pub fn reference_config() -> PacketConfig {
    PacketConfig {
        channel: 9,
        preamble_code: 9,
        preamble_length: 64 * BUILTIN_CODE_LEN,
        pac: 8,
        sfd: SfdType::Alt8,
        sts_mode: StsMode::BeforePhd,
        sts_length: 4096,
        phd: PhdProfile::Std850k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_in_default_domains() {
        reference_config().validate(&Domains::default(), CodeTable::builtin()).unwrap();
    }

    #[test]
    fn preamble_length_must_be_whole_code_periods() {
        let mut c = reference_config();
        c.preamble_length = 64 * 127 + 1;
        assert!(matches!(c.check(CodeTable::builtin()), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn pac_must_divide_preamble_length() {
        let mut c = reference_config();
        c.preamble_length = 96 * 127;
        c.pac = 64;
        assert!(c.check(CodeTable::builtin()).is_err());
    }

    #[test]
    fn out_of_domain_channel_rejected() {
        let mut c = reference_config();
        c.channel = 7;
        assert!(c.validate(&Domains::default(), CodeTable::builtin()).is_err());
    }

    #[test]
    fn every_default_preamble_length_admits_every_pac() {
        let d = Domains::default();
        for &len in &d.preamble_lengths {
            for &pac in &d.pacs {
                assert_eq!(len % pac, 0);
            }
        }
    }

    #[test]
    fn sfd_patterns_are_zero_sum_and_do_not_open_with_preamble_run() {
        for t in SfdType::ALL {
            let p = t.pattern();
            assert_eq!(p.iter().map(|&x| i32::from(x)).sum::<i32>(), 0, "{t:?}");
            assert!(p[..4].iter().any(|&x| x <= 0));
        }
    }

    #[test]
    fn equivalence_ignores_unused_fields() {
        let mut a = reference_config();
        a.sts_mode = StsMode::Off;
        let mut b = a;
        b.sts_length = 64;
        assert!(a.equivalent(&b));
        a.sts_mode = StsMode::NoData;
        b.sts_mode = StsMode::NoData;
        assert!(!a.equivalent(&b));
        b.sts_length = a.sts_length;
        b.phd = PhdProfile::Fast6m8;
        assert!(a.equivalent(&b));
    }
}
