//! Jam planning: which packet and field to hit, and when to transmit.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::timing::{TimingEstimate, DEFAULT_T_DELTA_US, T_DELTA_SIGMA_US};
use crate::error::{Error, Result};
use crate::phy::packet::layout;
use crate::phy::{assemble_packet, BasebandSignal, CodeTable, Field, PacketConfig, PowerProfile, StsSeed};
use crate::ranging::PacketRole;
use crate::time::{chips_to_ps, Picos, PS_PER_US};

/// The victim field the amplified part of the jam packet lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JamAim {
    /// Amplified SYNC over the victim SYNC.
    Sync,
    /// Amplified STS over the victim STS.
    Sts,
    /// Amplified STS over the victim PHD.
    Phd,
    /// Amplified STS over the victim payload.
    Payload,
}

impl JamAim {
    pub const ALL: [JamAim; 4] = [JamAim::Sync, JamAim::Sts, JamAim::Phd, JamAim::Payload];

    pub fn name(self) -> &'static str {
        match self {
            JamAim::Sync => "sync",
            JamAim::Sts => "sts",
            JamAim::Phd => "phd",
            JamAim::Payload => "payload",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JamPlan {
    pub target_packet: PacketRole,
    pub jam_code: u8,
    /// Jam-to-victim power ratio of the amplified field.
    pub gain: f64,
    pub aim: JamAim,
    /// Victim config with the jam code; transmitted without PHD and payload.
    pub jam_config: PacketConfig,
}

impl JamPlan {
    /// Plan against `victim` using the table code least correlated with it.
    pub fn new(victim: &PacketConfig, table: &CodeTable, target: PacketRole, aim: JamAim, gain: f64) -> Result<Self> {
        let jam_code = table.least_correlated(victim.preamble_code)?;
        Self::with_code(victim, target, aim, gain, jam_code)
    }

    pub fn with_code(victim: &PacketConfig, target: PacketRole, aim: JamAim, gain: f64, jam_code: u8) -> Result<Self> {
        if jam_code == victim.preamble_code {
            return Err(Error::Domain("jam code must differ from the victim code".into()));
        }
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::Domain("jam gain must be positive".into()));
        }
        if aim != JamAim::Sync && !victim.sts_mode.has_sts() {
            return Err(Error::Domain("non-SYNC aims need an STS field in the jam packet".into()));
        }
        Ok(JamPlan { target_packet: target, jam_code, gain, aim, jam_config: PacketConfig { preamble_code: jam_code, ..*victim } })
    }

    pub fn profile(&self) -> Result<PowerProfile> {
        let amp = self.gain.sqrt();
        match self.aim {
            JamAim::Sync => PowerProfile::jam(amp),
            _ => PowerProfile::nominal().with(Field::Sts, amp),
        }
    }

    /// The jam waveform, scaled by `tx_amplitude` on top of the profile.
    pub fn build(&self, table: &CodeTable, seed: StsSeed, tx_amplitude: f64) -> Result<BasebandSignal> {
        let mut sig = assemble_packet(&self.jam_config, table, seed, &[], &self.profile()?, true)?;
        sig.samples.iter_mut().for_each(|s| *s *= tx_amplitude);
        Ok(sig)
    }

    /// Chips from the victim packet start to where the jam packet must start.
    pub fn aim_offset_chips(&self, victim: &PacketConfig, table: &CodeTable, payload_len: usize) -> Result<usize> {
        let code_len = table.get(victim.preamble_code)?.len();
        let start_of = |cfg: &PacketConfig, plen: usize, omit: bool, f: Field| {
            let mut at = 0;
            for (field, n) in layout(cfg, code_len, plen, omit) {
                if field == f {
                    return Some(at);
                }
                at += n;
            }
            None
        };
        let jam_sts = start_of(&self.jam_config, 0, true, Field::Sts);
        let target = match self.aim {
            JamAim::Sync => return Ok(0),
            JamAim::Sts => Field::Sts,
            JamAim::Phd => Field::Phd,
            JamAim::Payload => Field::Payload,
        };
        let victim_at = start_of(victim, payload_len, false, target)
            .ok_or_else(|| Error::Domain(format!("victim has no {target:?} field")))?;
        let jam_at = jam_sts.ok_or_else(|| Error::Domain("jam packet has no STS".into()))?;
        victim_at
            .checked_sub(jam_at)
            .ok_or_else(|| Error::Domain("target field starts before the jam STS can reach it".into()))
    }
}

/// Transmit-path latency model of the attacking hardware.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct JamHardware {
    /// Latency the attacker assumes when computing its delay.
    pub t_delta_us: f64,
    /// Mean of the real latency.
    pub actual_t_delta_us: f64,
    /// Standard deviation of the real latency; 0 makes it exact.
    pub t_delta_sigma_us: f64,
}

impl Default for JamHardware {
    fn default() -> Self {
        JamHardware { t_delta_us: DEFAULT_T_DELTA_US, actual_t_delta_us: DEFAULT_T_DELTA_US, t_delta_sigma_us: 0.0 }
    }
}

impl JamHardware {
    pub fn perturbed() -> Self {
        JamHardware { t_delta_sigma_us: T_DELTA_SIGMA_US, ..Default::default() }
    }

    /// Global emission time for a jam triggered by a poll received at
    /// `poll_rx`, aiming `t_measure_us` after it plus `aim_ps`.
    ///
    /// The commanded delay subtracts chunk, packet and assumed latency; the
    /// hardware adds back chunk, packet and its real latency.
    pub fn emission_time<R: Rng + ?Sized>(
        &self,
        poll_rx: Picos,
        t_measure_us: f64,
        est: &TimingEstimate,
        aim_ps: Picos,
        rng: &mut R,
    ) -> Result<Picos> {
        let commanded = super::timing::attack_delay_us(t_measure_us, est.t_chunk_us, est.t_packet_us, self.t_delta_us)?;
        let actual = if self.t_delta_sigma_us > 0.0 {
            Normal::new(self.actual_t_delta_us, self.t_delta_sigma_us)
                .map_err(|e| Error::Domain(e.to_string()))?
                .sample(rng)
        } else {
            self.actual_t_delta_us
        };
        let total_us = commanded + est.t_chunk_us + est.t_packet_us + actual;
        let t = poll_rx as f64 + total_us * PS_PER_US as f64 + aim_ps as f64;
        Ok(t.round().max(0.0) as Picos)
    }
}

/// Picoseconds spanned by `chips`.
pub fn chips_ps(chips: usize) -> Picos {
    chips_to_ps(chips as f64).round() as Picos
}

/// Tracks the poll anchor, correcting the period estimate on every poll and
/// forgetting the anchor after too many missed polls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorTracker {
    pub anchor: Option<Picos>,
    pub t3_us: f64,
    pub alpha: f64,
    pub max_missed: u32,
    pub missed: u32,
}

impl AnchorTracker {
    pub fn new(anchor: Picos, t3_us: f64) -> Self {
        AnchorTracker { anchor: Some(anchor), t3_us, alpha: 0.25, max_missed: 3, missed: 0 }
    }

    /// Predicted next poll time.
    pub fn predict(&self) -> Option<Picos> {
        self.anchor.map(|a| a + (self.t3_us * PS_PER_US as f64).round() as Picos)
    }

    /// Feeds a detected poll.
    pub fn observe(&mut self, poll_rx: Picos) {
        if let Some(a) = self.anchor.filter(|&a| poll_rx > a) {
            let gap_us = (poll_rx - a) as f64 / PS_PER_US as f64;
            let periods = (gap_us / self.t3_us).round().max(1.0);
            self.missed = periods as u32 - 1;
            if self.missed < self.max_missed {
                self.t3_us += self.alpha * (gap_us / periods - self.t3_us);
            }
        }
        self.anchor = Some(poll_rx);
        self.missed = 0;
    }

    /// Records that the predicted poll passed unseen.
    pub fn miss(&mut self) {
        self.missed += 1;
        if self.missed >= self.max_missed {
            self.anchor = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{reference_config, StsMode, SPREADING_FACTOR};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn est() -> TimingEstimate {
        TimingEstimate {
            t1_hat_us: 800.0,
            t2_hat_us: 1600.0,
            t3_hat_us: 167_000.0,
            anchor: 0,
            t_delta_us: 20.0,
            t_chunk_us: 8.0,
            t_packet_us: 130.0,
            attack_delay_us: 642.0,
        }
    }

    #[test]
    fn jam_code_differs_and_omits_data() {
        let v = reference_config();
        let t = CodeTable::builtin();
        let plan = JamPlan::new(&v, t, PacketRole::Response, JamAim::Sync, 8.0).unwrap();
        assert_ne!(plan.jam_code, v.preamble_code);
        let sig = plan.build(t, StsSeed::new(1, 0), 1.0).unwrap();
        assert!(sig.span(Field::Phd).is_none() && sig.span(Field::Payload).is_none());
        assert!(JamPlan::with_code(&v, PacketRole::Response, JamAim::Sync, 8.0, v.preamble_code).is_err());
    }

    #[test]
    fn gain_is_a_power_ratio() {
        let v = reference_config();
        let t = CodeTable::builtin();
        let plan = JamPlan::new(&v, t, PacketRole::Response, JamAim::Sync, 8.0).unwrap();
        let jam = plan.build(t, StsSeed::new(1, 0), 1.0).unwrap();
        let victim = assemble_packet(&v, t, StsSeed::new(2, 0), &[], &PowerProfile::nominal(), true).unwrap();
        let ratio = jam.field_power(Field::Sync).unwrap() / victim.field_power(Field::Sync).unwrap();
        assert!((ratio - 8.0).abs() < 1e-9);
    }

    #[test]
    fn aim_offsets_land_on_the_field() {
        let v = reference_config();
        let t = CodeTable::builtin();
        let sts = JamPlan::new(&v, t, PacketRole::Response, JamAim::Sts, 8.0).unwrap();
        assert_eq!(sts.aim_offset_chips(&v, t, 4).unwrap(), 0);
        let phd = JamPlan::new(&v, t, PacketRole::Response, JamAim::Phd, 8.0).unwrap();
        assert_eq!(phd.aim_offset_chips(&v, t, 4).unwrap(), 4096 * SPREADING_FACTOR);
        let off = PacketConfig { sts_mode: StsMode::Off, ..v };
        assert!(JamPlan::new(&off, t, PacketRole::Response, JamAim::Sts, 8.0).is_err());
    }

    #[test]
    fn exact_hardware_lands_on_measured_interval() {
        let hw = JamHardware::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = hw.emission_time(1_000, 800.0, &est(), 0, &mut rng).unwrap();
        assert_eq!(t, 1_000 + 800 * PS_PER_US);
        let misset = JamHardware { t_delta_us: 40.0, ..hw };
        let t = misset.emission_time(0, 800.0, &est(), 0, &mut rng).unwrap();
        assert_eq!(t, 780 * PS_PER_US);
    }

    #[test]
    fn perturbed_latency_spreads() {
        let hw = JamHardware::perturbed();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..2000)
            .map(|_| hw.emission_time(0, 800.0, &est(), 0, &mut rng).unwrap() as f64 / 1e6 - 800.0)
            .collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(mean.abs() < 0.3 && (sd - T_DELTA_SIGMA_US).abs() < 0.3);
    }

    #[test]
    fn anchor_tracking() {
        let period = 167_000.0;
        let mut a = AnchorTracker::new(0, period);
        a.observe(167_000 * PS_PER_US + 50_000);
        assert!(a.t3_us > period);
        a.miss();
        a.miss();
        assert!(a.anchor.is_some());
        a.miss();
        assert!(a.anchor.is_none());
        a.observe(10);
        assert_eq!(a.anchor, Some(10));
    }
}
