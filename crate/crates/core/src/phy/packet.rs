//! Whole-packet assembly with per-field power scaling.

use serde::{Deserialize, Serialize};

use super::codes::CodeTable;
use super::config::{PacketConfig, StsMode};
use super::fields::{build_payload, build_phd, build_sfd, build_sync, payload_bits, PHD_BITS};
use super::sts::{build_sts, StsSeed};
use super::SPREADING_FACTOR;
use crate::error::{Error, Result};
use crate::time::{chips_to_ps, Picos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Sync,
    Sfd,
    Sts,
    Phd,
    Payload,
    /// A superposition of several transmissions.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpan {
    pub field: Field,
    pub start: usize,
    pub end: usize,
}

impl FieldSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Marks the chip where a transmitter's preamble accumulation starts.
///
/// Stands in for the proprietary coupling between channel, PAC size and
/// presence detection on real chips: a receiver only detects presence when
/// a mark with its own channel and PAC is in the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcqMark {
    pub channel: u8,
    pub pac: u32,
    pub chip: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasebandSignal {
    pub samples: Vec<f64>,
    /// Global time of sample 0, in picoseconds.
    pub start_time: Picos,
    pub fields: Vec<FieldSpan>,
    /// Carrier channel.
    pub channel: u8,
    pub marks: Vec<AcqMark>,
}

impl BasebandSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Global time one past the last sample.
    pub fn end_time(&self) -> Picos {
        self.start_time + chips_to_ps(self.samples.len() as f64).round() as Picos
    }

    pub fn span(&self, field: Field) -> Option<FieldSpan> {
        self.fields.iter().copied().find(|s| s.field == field)
    }

    pub fn field_samples(&self, field: Field) -> Option<&[f64]> {
        self.span(field).map(|s| &self.samples[s.start..s.end])
    }

    /// Mean-square amplitude over a field.
    pub fn field_power(&self, field: Field) -> Option<f64> {
        self.field_samples(field).filter(|s| !s.is_empty()).map(mean_square)
    }

    /// Checks that the field spans are ordered, contiguous and cover the samples.
    pub fn check(&self) -> Result<()> {
        let mut at = 0;
        for s in &self.fields {
            if s.start != at || s.end < s.start {
                return Err(Error::Domain(format!("field {:?} is not contiguous", s.field)));
            }
            at = s.end;
        }
        if at != self.samples.len() {
            return Err(Error::Domain("field spans do not cover the samples".into()));
        }
        Ok(())
    }
}

pub fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// Per-field amplitude gains (1.0 is nominal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub sync: f64,
    pub sfd: f64,
    pub sts: f64,
    pub phd: f64,
    pub payload: f64,
}

impl Default for PowerProfile {
    fn default() -> Self {
        PowerProfile::nominal()
    }
}

impl PowerProfile {
    pub fn nominal() -> Self {
        PowerProfile { sync: 1.0, sfd: 1.0, sts: 1.0, phd: 1.0, payload: 1.0 }
    }

    /// Jam profile: only the SYNC field is amplified.
    pub fn jam(sync_gain: f64) -> Result<Self> {
        PowerProfile { sync: sync_gain, ..PowerProfile::nominal() }.validated()
    }

    pub fn with(mut self, field: Field, gain: f64) -> Result<Self> {
        match field {
            Field::Sync => self.sync = gain,
            Field::Sfd => self.sfd = gain,
            Field::Sts => self.sts = gain,
            Field::Phd => self.phd = gain,
            Field::Payload => self.payload = gain,
            Field::Mixed => return Err(Error::Domain("no gain for a mixed span".into())),
        }
        self.validated()
    }

    pub fn gain(&self, field: Field) -> f64 {
        match field {
            Field::Sync => self.sync,
            Field::Sfd => self.sfd,
            Field::Sts => self.sts,
            Field::Phd => self.phd,
            Field::Payload => self.payload,
            Field::Mixed => 1.0,
        }
    }

    pub fn validated(self) -> Result<Self> {
        let all = [self.sync, self.sfd, self.sts, self.phd, self.payload];
        if all.iter().all(|g| g.is_finite() && *g > 0.0) {
            Ok(self)
        } else {
            Err(Error::Domain("power gains must be positive".into()))
        }
    }
}

/// Field order and chip lengths for a configuration.
pub fn layout(
    config: &PacketConfig,
    code_len: usize,
    payload_len: usize,
    omit_phd_payload: bool,
) -> Vec<(Field, usize)> {
    let sf = SPREADING_FACTOR;
    let phd = PHD_BITS * config.phd.phd_pulses_per_bit() * sf;
    let coded = if payload_len == 0 { 0 } else { (payload_len + 2) * 8 };
    let payload = coded * config.phd.data_pulses_per_bit() * sf;
    let head = [(Field::Sync, config.sync_chips()), (Field::Sfd, config.sfd_chips(code_len))];
    let sts = (Field::Sts, config.sts_chips());
    let data = [(Field::Phd, phd), (Field::Payload, payload)];
    let mut out: Vec<(Field, usize)> = head.to_vec();
    match config.sts_mode {
        StsMode::Off => out.extend(data),
        StsMode::BeforePhd => {
            out.push(sts);
            out.extend(data);
        }
        StsMode::AfterPayload => {
            out.extend(data);
            out.push(sts);
        }
        StsMode::NoData => out.push(sts),
    }
    if omit_phd_payload {
        out.retain(|(f, _)| !matches!(f, Field::Phd | Field::Payload));
    }
    out
}

/// Packet duration in chips.
pub fn packet_chips(config: &PacketConfig, code_len: usize, payload_len: usize, omit: bool) -> usize {
    layout(config, code_len, payload_len, omit).iter().map(|(_, n)| n).sum()
}

/// Builds a complete packet starting at time 0.
pub fn assemble_packet(
    config: &PacketConfig,
    table: &CodeTable,
    seed: StsSeed,
    payload: &[u8],
    profile: &PowerProfile,
    omit_phd_payload: bool,
) -> Result<BasebandSignal> {
    config.check(table)?;
    profile.validated()?;
    let code_len = table.get(config.preamble_code)?.len();
    let plan = layout(config, code_len, payload.len(), omit_phd_payload);
    let mut samples = Vec::with_capacity(plan.iter().map(|(_, n)| n).sum());
    let mut fields = Vec::with_capacity(plan.len());
    for (field, expected) in plan {
        let chips = match field {
            Field::Sync => build_sync(config, table)?,
            Field::Sfd => build_sfd(config, table)?,
            Field::Sts => build_sts(seed, config)?,
            Field::Phd => build_phd(config, payload.len())?,
            Field::Payload => build_payload(config, payload),
            Field::Mixed => unreachable!("layouts never contain mixed spans"),
        };
        debug_assert_eq!(chips.len(), expected);
        let g = profile.gain(field);
        let start = samples.len();
        samples.extend(chips.iter().map(|c| c * g));
        fields.push(FieldSpan { field, start, end: samples.len() });
    }
    debug_assert_eq!(payload_bits(payload).len() % 8, 0);
    Ok(BasebandSignal {
        samples,
        start_time: 0,
        fields,
        channel: config.channel,
        marks: vec![AcqMark { channel: config.channel, pac: config.pac, chip: 0 }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::config::reference_config;

    fn build(cfg: &PacketConfig, profile: &PowerProfile, omit: bool) -> BasebandSignal {
        assemble_packet(cfg, CodeTable::builtin(), StsSeed::new(5, 0), &[1, 2, 3, 4], profile, omit)
            .unwrap()
    }

    #[test]
    fn fields_are_contiguous_and_sum_to_duration() {
        for mode in StsMode::ALL {
            let mut cfg = reference_config();
            cfg.sts_mode = mode;
            let p = build(&cfg, &PowerProfile::nominal(), false);
            p.check().unwrap();
            assert_eq!(p.len(), packet_chips(&cfg, 127, 4, false));
        }
    }

    #[test]
    fn sync_gain_scales_only_sync_power() {
        let cfg = reference_config();
        let a = build(&cfg, &PowerProfile::nominal(), false);
        let b = build(&cfg, &PowerProfile::jam(3.0).unwrap(), false);
        let ratio = b.field_power(Field::Sync).unwrap() / a.field_power(Field::Sync).unwrap();
        assert!((ratio - 9.0).abs() < 1e-9);
        for f in [Field::Sfd, Field::Sts, Field::Phd, Field::Payload] {
            assert_eq!(a.field_power(f), b.field_power(f), "{f:?}");
        }
    }

    #[test]
    fn omitting_data_leaves_three_fields() {
        let cfg = reference_config();
        let p = build(&cfg, &PowerProfile::nominal(), true);
        let fields: Vec<Field> = p.fields.iter().map(|s| s.field).collect();
        assert_eq!(fields, vec![Field::Sync, Field::Sfd, Field::Sts]);
        assert_eq!(p.len(), cfg.sync_chips() + cfg.sfd_chips(127) + cfg.sts_chips());
    }

    #[test]
    fn sync_is_weaker_than_sts_at_equal_gain() {
        let p = build(&reference_config(), &PowerProfile::nominal(), false);
        assert!(p.field_power(Field::Sync).unwrap() < p.field_power(Field::Sts).unwrap());
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let cfg = reference_config();
        assert_eq!(build(&cfg, &PowerProfile::nominal(), false), build(&cfg, &PowerProfile::nominal(), false));
    }

    #[test]
    fn non_positive_gain_rejected() {
        assert!(PowerProfile::jam(0.0).is_err());
        assert!(PowerProfile::nominal().with(Field::Sts, -1.0).is_err());
    }
}
