//! Staged packet-configuration sniffing driven by receiver error codes.
//!
//! Stage 1 walks (channel, pac), stage 2 (code, preamble length), stage 3
//! the SFD type and stage 4 (STS mode, STS length, PHD profile). Each stage
//! walks its own option product in row-major order and tests exactly one
//! candidate per observed packet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{Domains, PacketConfig};
use crate::receiver::RxKind;

/// Size of the full configuration space.
pub fn search_space_size(d: &Domains) -> u64 {
    [
        d.channels.len(),
        d.pacs.len(),
        d.preamble_codes.len(),
        d.preamble_lengths.len(),
        d.sfd_types.len(),
        d.sts_modes.len(),
        d.sts_lengths.len(),
        d.phd_profiles.len(),
    ]
    .iter()
    .map(|&n| n as u64)
    .product()
}

/// Option count of each stage's parameter product.
pub fn stage_sizes(d: &Domains) -> [usize; 4] {
    [
        d.channels.len() * d.pacs.len(),
        d.preamble_codes.len() * d.preamble_lengths.len(),
        d.sfd_types.len(),
        d.sts_modes.len() * d.sts_lengths.len() * d.phd_profiles.len(),
    ]
}

/// Worst-case packets to sniff: the sum of the stage sizes.
pub fn staged_search_size(d: &Domains) -> u64 {
    stage_sizes(d).iter().map(|&n| n as u64).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    One,
    Two,
    Three,
    Four,
    Done,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
            Stage::Three => 3,
            Stage::Four => 4,
            Stage::Done => 5,
        }
    }

    fn index(self) -> usize {
        self.number() as usize - 1
    }
}

/// One line of the sniffer progress log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SniffLogEntry {
    pub packet: u64,
    pub stage: u8,
    pub cursor: usize,
    pub outcome: RxKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnifferState {
    pub domains: Domains,
    pub stage: Stage,
    pub cursor: usize,
    /// Parameters resolved so far; later-stage fields hold the first options.
    pub fixed: PacketConfig,
    pub packets_consumed: u64,
    pub sessions_observed: u64,
    /// Packets consumed in each stage.
    pub per_stage: [u64; 4],
}

impl SnifferState {
    pub fn new(domains: Domains) -> Result<Self> {
        if stage_sizes(&domains).contains(&0) {
            return Err(Error::Domain("every domain needs at least one option".into()));
        }
        let fixed = domains.first();
        Ok(SnifferState {
            domains,
            stage: Stage::One,
            cursor: 0,
            fixed,
            packets_consumed: 0,
            sessions_observed: 0,
            per_stage: [0; 4],
        })
    }

    pub fn is_done(&self) -> bool {
        self.stage == Stage::Done
    }

    /// The configuration to listen with for the next packet.
    pub fn candidate(&self) -> PacketConfig {
        let d = &self.domains;
        let mut c = self.fixed;
        let i = self.cursor;
        match self.stage {
            Stage::One => {
                c.channel = d.channels[i / d.pacs.len()];
                c.pac = d.pacs[i % d.pacs.len()];
            }
            Stage::Two => {
                c.preamble_code = d.preamble_codes[i / d.preamble_lengths.len()];
                c.preamble_length = d.preamble_lengths[i % d.preamble_lengths.len()];
            }
            Stage::Three => c.sfd = d.sfd_types[i],
            Stage::Four => {
                let inner = d.sts_lengths.len() * d.phd_profiles.len();
                c.sts_mode = d.sts_modes[i / inner];
                c.sts_length = d.sts_lengths[(i % inner) / d.phd_profiles.len()];
                c.phd = d.phd_profiles[i % d.phd_profiles.len()];
            }
            Stage::Done => {}
        }
        c
    }

    /// Consumes one observed packet's outcome for the current candidate.
    ///
    /// From stage 2 on, an outcome from an earlier pipeline step than the
    /// stage probes (e.g. a missed packet) is treated as no information and
    /// the cursor stays put.
    pub fn step(&mut self, outcome: RxKind) -> Result<Option<SniffLogEntry>> {
        if self.is_done() {
            return Err(Error::Precondition("sniffing already finished".into()));
        }
        let entry = SniffLogEntry {
            packet: self.packets_consumed,
            stage: self.stage.number(),
            cursor: self.cursor,
            outcome,
        };
        self.packets_consumed += 1;
        self.per_stage[self.stage.index()] += 1;
        let (stay, next) = match self.stage {
            Stage::One => (RxKind::NoDetection, Stage::Two),
            Stage::Two => (RxKind::SyncError, Stage::Three),
            Stage::Three => (RxKind::SfdError, Stage::Four),
            Stage::Four => (RxKind::StsPhdError, Stage::Done),
            Stage::Done => unreachable!(),
        };
        if outcome < stay {
            return Ok(Some(entry));
        }
        let resolved = match self.stage {
            Stage::Four => outcome == RxKind::Ok,
            _ => outcome != stay,
        };
        if resolved {
            self.fixed = self.candidate();
            self.stage = next;
            self.cursor = 0;
        } else {
            self.cursor += 1;
            if self.cursor >= stage_sizes(&self.domains)[self.stage.index()] {
                return Err(Error::SniffFailed { stage: self.stage.number() });
            }
        }
        Ok(Some(entry))
    }

    /// The sniffed configuration once stage 4 has resolved.
    pub fn result(&self) -> Option<PacketConfig> {
        self.is_done().then_some(self.fixed)
    }
}

/// Packets needed to sniff `victim` when each outcome follows `oracle`.
pub fn sniff_with_oracle(
    domains: &Domains,
    mut oracle: impl FnMut(&PacketConfig) -> Result<RxKind>,
) -> Result<SnifferState> {
    let mut s = SnifferState::new(domains.clone())?;
    while !s.is_done() {
        let kind = oracle(&s.candidate())?;
        s.step(kind)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::reference_config;

    #[test]
    fn default_space_sizes() {
        let d = Domains::default();
        assert_eq!(search_space_size(&d), 516_096);
        assert_eq!(d.enumerate().count() as u64, search_space_size(&d));
        assert_eq!(stage_sizes(&d), [8, 144, 4, 112]);
        assert_eq!(staged_search_size(&d), 268);
    }

    #[test]
    fn singleton_domains_have_size_one() {
        let d = Domains::singleton(&reference_config());
        assert_eq!(search_space_size(&d), 1);
        assert_eq!(staged_search_size(&d), 4);
    }

    #[test]
    fn stage_one_sync_error_freezes_channel_and_pac() {
        let mut s = SnifferState::new(Domains::default()).unwrap();
        s.step(RxKind::NoDetection).unwrap();
        assert_eq!((s.stage, s.cursor), (Stage::One, 1));
        let cand = s.candidate();
        s.step(RxKind::SyncError).unwrap();
        assert_eq!(s.stage, Stage::Two);
        assert_eq!((s.fixed.channel, s.fixed.pac), (cand.channel, cand.pac));
        s.step(RxKind::SyncError).unwrap();
        assert_eq!((s.stage, s.cursor), (Stage::Two, 1));
    }

    #[test]
    fn missed_packet_does_not_advance_later_stages() {
        let mut s = SnifferState::new(Domains::default()).unwrap();
        s.step(RxKind::SyncError).unwrap();
        s.step(RxKind::NoDetection).unwrap();
        assert_eq!((s.stage, s.cursor, s.packets_consumed), (Stage::Two, 0, 2));
    }

    #[test]
    fn exhausted_stage_fails() {
        let d = Domains::singleton(&reference_config());
        let mut s = SnifferState::new(d).unwrap();
        assert_eq!(s.step(RxKind::NoDetection), Err(Error::SniffFailed { stage: 1 }));
    }

    #[test]
    fn worst_case_equals_staged_size() {
        let d = Domains::default();
        let mut victim = d.first();
        victim.channel = *d.channels.last().unwrap();
        victim.pac = *d.pacs.last().unwrap();
        victim.preamble_code = *d.preamble_codes.last().unwrap();
        victim.preamble_length = *d.preamble_lengths.last().unwrap();
        victim.sfd = *d.sfd_types.last().unwrap();
        victim.sts_mode = *d.sts_modes.last().unwrap();
        victim.sts_length = *d.sts_lengths.last().unwrap();
        victim.phd = *d.phd_profiles.last().unwrap();
        let s = sniff_with_oracle(&d, |c| Ok(staged_oracle(&victim, c))).unwrap();
        assert_eq!(s.packets_consumed, staged_search_size(&d));
        assert_eq!(s.result(), Some(victim));
    }

    fn staged_oracle(v: &PacketConfig, c: &PacketConfig) -> RxKind {
        if (v.channel, v.pac) != (c.channel, c.pac) {
            RxKind::NoDetection
        } else if (v.preamble_code, v.preamble_length) != (c.preamble_code, c.preamble_length) {
            RxKind::SyncError
        } else if v.sfd != c.sfd {
            RxKind::SfdError
        } else if (v.sts_mode, v.sts_length, v.phd) != (c.sts_mode, c.sts_length, c.phd) {
            RxKind::StsPhdError
        } else {
            RxKind::Ok
        }
    }
}
