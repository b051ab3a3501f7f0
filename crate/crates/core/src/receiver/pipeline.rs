//! The field-by-field receive pipeline.

use serde::{Deserialize, Serialize};

use super::cir::{first_peak, ncc_cir_periodic, CirEstimate, PowerPrefix};
use crate::error::{Error, Result};
use crate::phy::fields::{decode_bits, parse_payload, parse_phd, PHD_BITS};
use crate::phy::sts::sts_symbols;
use crate::phy::{spread, BasebandSignal, CodeTable, PacketConfig, StsMode, StsSeed, SPREADING_FACTOR};
use crate::time::{Picos, CHIP_PS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct DetectionThresholds {
    pub presence: f64,
    pub legitimacy: f64,
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        DetectionThresholds { presence: 0.2, legitimacy: 0.4 }
    }
}

impl DetectionThresholds {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if unit(self.presence) && unit(self.legitimacy) && self.presence < self.legitimacy {
            Ok(())
        } else {
            Err(Error::Domain("thresholds must satisfy 0 < presence < legitimacy < 1".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct RxSettings {
    pub thresholds: DetectionThresholds,
    /// Matched SFD amplitude relative to the SYNC amplitude.
    pub sfd_threshold: f64,
    /// STS correlation peak over off-peak RMS, when the key is known.
    pub sts_quality_min: f64,
    /// Fraction of expected STS pulse energy present, when the key is unknown.
    pub sts_coverage_min: f64,
    /// Chips of lead-in before the expected packet start; lags are searched
    /// over twice this span.
    pub margin_chips: usize,
    /// Allowed STS peak offset from the SYNC-derived position.
    pub sts_lag_tolerance: usize,
    pub sts_search_chips: usize,
    /// Code periods at the end of SYNC that must still correlate.
    pub tail_periods: usize,
    /// Code periods past the expected SYNC end that must not look like preamble.
    pub post_sync_periods: usize,
}

impl Default for RxSettings {
    fn default() -> Self {
        RxSettings {
            thresholds: DetectionThresholds::default(),
            sfd_threshold: 0.6,
            sts_quality_min: 8.0,
            sts_coverage_min: 0.8,
            margin_chips: 64,
            sts_lag_tolerance: 2,
            sts_search_chips: 64,
            tail_periods: 32,
            post_sync_periods: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxSuccess {
    pub rx_timestamp: Picos,
    pub sync_cir: CirEstimate,
    pub sts_cir: Option<CirEstimate>,
    pub payload: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RxOutcome {
    NoDetection,
    SyncError { sync_peak: f64 },
    SfdError,
    StsPhdError,
    Ok(RxSuccess),
}

/// Outcome without payload data, as the sniffer and traces see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RxKind {
    NoDetection,
    SyncError,
    SfdError,
    StsPhdError,
    Ok,
}

/// Compact JSON form of an outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxRecord {
    pub outcome: RxKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rx_timestamp: Option<Picos>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sync_peak: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sts_peak: Option<f64>,
}

impl RxOutcome {
    pub fn kind(&self) -> RxKind {
        match self {
            RxOutcome::NoDetection => RxKind::NoDetection,
            RxOutcome::SyncError { .. } => RxKind::SyncError,
            RxOutcome::SfdError => RxKind::SfdError,
            RxOutcome::StsPhdError => RxKind::StsPhdError,
            RxOutcome::Ok(_) => RxKind::Ok,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, RxOutcome::Ok(_))
    }

    pub fn timestamp(&self) -> Option<Picos> {
        match self {
            RxOutcome::Ok(s) => Some(s.rx_timestamp),
            _ => None,
        }
    }

    pub fn record(&self) -> RxRecord {
        let (ts, sync, sts) = match self {
            RxOutcome::Ok(s) => (
                Some(s.rx_timestamp),
                Some(s.sync_cir.peak_value),
                s.sts_cir.as_ref().map(|c| c.peak_value),
            ),
            RxOutcome::SyncError { sync_peak } => (None, Some(*sync_peak), None),
            _ => (None, None, None),
        };
        RxRecord { outcome: self.kind(), rx_timestamp: ts, sync_peak: sync, sts_peak: sts }
    }
}

struct Window<'a> {
    x: &'a [f64],
    period: Vec<f64>,
    period_energy: f64,
}

impl Window<'_> {
    fn at(&self, i: usize) -> f64 {
        self.x.get(i).copied().unwrap_or(0.0)
    }

    /// Correlation with one code period starting at `start`, divided by the
    /// code energy, so a clean symbol of amplitude `a` despreads to `a`.
    fn despread(&self, start: usize) -> f64 {
        let r: f64 = self
            .period
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| self.at(start + j) * c)
            .sum();
        r / self.period_energy
    }
}

/// Runs the receive pipeline over a listening window.
///
/// `key` is the STS seed the receiver expects; without one (a passive
/// sniffer) the STS field is only checked for pulse energy.
pub fn receive_packet(
    waveform: &BasebandSignal,
    rx: &PacketConfig,
    table: &CodeTable,
    key: Option<StsSeed>,
    settings: &RxSettings,
) -> Result<RxOutcome> {
    settings.thresholds.validate()?;
    rx.check(table)?;
    let code = table.get(rx.preamble_code)?;
    let period = spread(code.symbols.iter().map(|&s| f64::from(s)));
    let p = period.len();
    let reps = rx.repetitions(code.len());
    let w = Window { x: &waveform.samples, period_energy: code.energy(), period };
    let th = settings.thresholds;
    let search = 2 * settings.margin_chips + 1;

    // Presence over one PAC chunk.
    let Some(mark) = waveform
        .marks
        .iter()
        .find(|m| m.channel == rx.channel && m.pac == rx.pac && m.chip < search)
    else {
        return Ok(RxOutcome::NoDetection);
    };
    let chunk = rx.pac as usize * p;
    let (mut cross, mut e0, mut e1) = (0.0, 0.0, 0.0);
    for i in mark.chip..mark.chip + chunk.saturating_sub(p) {
        let (a, b) = (w.at(i), w.at(i + p));
        cross += a * b;
        e0 += a * a;
        e1 += b * b;
    }
    let presence = if e0 > 0.0 && e1 > 0.0 { cross / (e0 * e1).sqrt() } else { 0.0 };
    if presence < th.presence {
        return Ok(RxOutcome::NoDetection);
    }

    // SYNC legitimacy.
    let sync_cir = ncc_cir_periodic(w.x, &w.period, reps, search)?;
    let Some(lag) = first_peak(&sync_cir, th.legitimacy) else {
        return Ok(RxOutcome::SyncError { sync_peak: sync_cir.peak_value });
    };
    let despread: Vec<f64> = (0..reps).map(|k| w.despread(lag + k * p)).collect();
    let a_sync = despread.iter().sum::<f64>() / reps as f64;
    let tail = settings.tail_periods.min(reps);
    let tail_start = lag + (reps - tail) * p;
    let tail_r: f64 = despread[reps - tail..].iter().sum::<f64>() * w.period_energy;
    let tail_end = (tail_start + tail * p).min(w.x.len());
    let tail_px: f64 = w.x[tail_start.min(tail_end)..tail_end].iter().map(|v| v * v).sum();
    let tail_ncc = if tail_px > 0.0 {
        tail_r.abs() / (tail_px * tail as f64 * w.period_energy).sqrt()
    } else {
        0.0
    };
    let sync_end = lag + reps * p;
    let continues = (0..settings.post_sync_periods).all(|k| w.despread(sync_end + k * p) >= 0.5 * a_sync);
    if a_sync <= 0.0 || tail_ncc < th.presence || continues {
        return Ok(RxOutcome::SyncError { sync_peak: sync_cir.peak_value });
    }

    // SFD pattern match.
    let pattern = rx.sfd.pattern();
    let num: f64 = pattern.iter().enumerate().map(|(k, &s)| f64::from(s) * w.despread(sync_end + k * p)).sum();
    let den: f64 = pattern.iter().map(|&s| f64::from(s * s)).sum();
    if num / den < settings.sfd_threshold * a_sync {
        return Ok(RxOutcome::SfdError);
    }

    // STS and PHD, sharing one error code.
    let mut cursor = sync_end + pattern.len() * p;
    let sts_chips = rx.sts_chips();
    let mut sts_at = None;
    if matches!(rx.sts_mode, StsMode::BeforePhd | StsMode::NoData) {
        sts_at = Some(cursor);
        cursor += sts_chips;
    }
    let mut payload = None;
    if rx.sts_mode.has_data() {
        let k_phd = rx.phd.phd_pulses_per_bit();
        let bits = decode_bits(w.x.get(cursor..).unwrap_or(&[]), k_phd, PHD_BITS);
        let Some((coded_len, profile)) = parse_phd(&bits) else {
            return Ok(RxOutcome::StsPhdError);
        };
        if profile != rx.phd.id() || (1..3).contains(&coded_len) {
            return Ok(RxOutcome::StsPhdError);
        }
        cursor += PHD_BITS * k_phd * SPREADING_FACTOR;
        let k_data = rx.phd.data_pulses_per_bit();
        if coded_len > 0 {
            let bits = decode_bits(w.x.get(cursor..).unwrap_or(&[]), k_data, coded_len * 8);
            let Some(data) = parse_payload(&bits) else {
                return Ok(RxOutcome::StsPhdError);
            };
            payload = Some(data);
        } else {
            payload = Some(Vec::new());
        }
        cursor += coded_len * 8 * k_data * SPREADING_FACTOR;
    }
    if rx.sts_mode == StsMode::AfterPayload {
        sts_at = Some(cursor);
    }
    let mut sts_cir = None;
    if let Some(at) = sts_at {
        let n = rx.sts_length as usize;
        match key {
            Some(seed) => {
                let check = sts_check(&w, at, &sts_symbols(seed, n), settings);
                let Some(cir) = check else {
                    return Ok(RxOutcome::StsPhdError);
                };
                sts_cir = Some(cir);
            }
            None => {
                let energy: f64 = (0..n).map(|i| w.at(at + i * SPREADING_FACTOR).powi(2)).sum();
                if energy < settings.sts_coverage_min * n as f64 * a_sync * a_sync {
                    return Ok(RxOutcome::StsPhdError);
                }
            }
        }
    }

    let rx_timestamp = waveform.start_time + (lag as f64 * CHIP_PS).round() as Picos;
    Ok(RxOutcome::Ok(RxSuccess { rx_timestamp, sync_cir, sts_cir, payload }))
}

/// Correlates the expected STS around `at`; returns its CIR when the peak
/// is sharp enough and where the SYNC timing put it.
/// Dot product with four running sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn sts_check(w: &Window<'_>, at: usize, symbols: &[f64], s: &RxSettings) -> Option<CirEstimate> {
    let span = s.sts_search_chips;
    let len = symbols.len() * SPREADING_FACTOR;
    let lo = at.saturating_sub(span);
    let hi = at + span + len;
    let seg: Vec<f64> = (lo..hi).map(|i| w.at(i)).collect();
    let power = PowerPrefix::new(&seg);
    // One decimated copy per chip phase, so each lag is a contiguous dot product.
    let phases: Vec<Vec<f64>> =
        (0..SPREADING_FACTOR).map(|p| seg.iter().skip(p).step_by(SPREADING_FACTOR).copied().collect()).collect();
    let n = symbols.len() as f64;
    let mut raw = Vec::with_capacity(2 * span + 1);
    let mut ncc = Vec::with_capacity(2 * span + 1);
    for k in 0..=at + span - lo {
        let d = &phases[k % SPREADING_FACTOR][k / SPREADING_FACTOR..];
        let r = dot(&d[..symbols.len()], symbols);
        let px = power.window(k, len);
        raw.push(r.abs());
        ncc.push(if px > 0.0 { (r.abs() / (px * n).sqrt()).min(1.0) } else { 0.0 });
    }
    let cir = CirEstimate::from_values(ncc);
    let (peak_idx, peak) = raw.iter().copied().enumerate().fold((0, 0.0), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    let off: Vec<f64> = raw
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(peak_idx) > s.sts_lag_tolerance)
        .map(|(_, v)| v * v)
        .collect();
    let rms = (off.iter().sum::<f64>() / off.len().max(1) as f64).sqrt();
    let quality = if rms > 0.0 { peak / rms } else { f64::INFINITY };
    let expected = at - lo;
    (peak > 0.0 && quality >= s.sts_quality_min && peak_idx.abs_diff(expected) <= s.sts_lag_tolerance)
        .then_some(cir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{superpose, ChannelParams, RxWindow};
    use crate::phy::{assemble_packet, reference_config, PhdProfile, PowerProfile, SfdType};

    const SEED: StsSeed = StsSeed { key: 0xABCD, counter: 1 };
    const ARRIVAL: Picos = 5_000_000;

    fn window_for(cfg: &PacketConfig, extra: &[crate::phy::BasebandSignal], noise: f64) -> BasebandSignal {
        let table = CodeTable::builtin();
        let mut tx = assemble_packet(cfg, table, SEED, &[1, 2, 3, 4], &PowerProfile::nominal(), false).unwrap();
        tx.start_time = ARRIVAL;
        let margin = RxSettings::default().margin_chips;
        let start = ARRIVAL - (margin as f64 * CHIP_PS).round() as Picos;
        let chips = tx.len() + 2 * margin + 40_000;
        let params = ChannelParams { noise_power_density: noise, rng_seed: 11, ..Default::default() };
        let mut all = vec![tx];
        all.extend_from_slice(extra);
        superpose(&all, &RxWindow { start, chips, channel: cfg.channel, receiver: 1 }, &params).unwrap()
    }

    fn rx(w: &BasebandSignal, cfg: &PacketConfig, key: Option<StsSeed>) -> RxOutcome {
        receive_packet(w, cfg, CodeTable::builtin(), key, &RxSettings::default()).unwrap()
    }

    #[test]
    fn clean_matched_reception_timestamps_arrival() {
        let cfg = reference_config();
        let w = window_for(&cfg, &[], 4e-4);
        let out = rx(&w, &cfg, Some(SEED));
        let ts = out.timestamp().expect("ok");
        assert!(ts.abs_diff(ARRIVAL) as f64 <= CHIP_PS);
        let RxOutcome::Ok(s) = out else { unreachable!() };
        assert_eq!(s.payload, Some(vec![1, 2, 3, 4]));
        assert!(s.sts_cir.unwrap().peak_value > 0.9);
    }

    #[test]
    fn wrong_key_fails_sts() {
        let cfg = reference_config();
        let w = window_for(&cfg, &[], 4e-4);
        assert_eq!(rx(&w, &cfg, Some(StsSeed::new(7, 1))).kind(), RxKind::StsPhdError);
        assert_eq!(rx(&w, &cfg, None).kind(), RxKind::Ok);
    }

    #[test]
    fn channel_or_pac_mismatch_is_no_detection() {
        let cfg = reference_config();
        let w = window_for(&cfg, &[], 0.0);
        let mut other = cfg;
        other.channel = 5;
        assert_eq!(rx(&w, &other, None).kind(), RxKind::NoDetection);
        other = cfg;
        other.pac = 16;
        assert_eq!(rx(&w, &other, None).kind(), RxKind::NoDetection);
    }

    #[test]
    fn per_field_error_codes() {
        let cfg = reference_config();
        let w = window_for(&cfg, &[], 4e-4);
        let cases: Vec<(PacketConfig, RxKind)> = vec![
            (PacketConfig { preamble_code: 12, ..cfg }, RxKind::SyncError),
            (PacketConfig { preamble_length: 32 * 127, ..cfg }, RxKind::SyncError),
            (PacketConfig { preamble_length: 96 * 127, ..cfg }, RxKind::SyncError),
            (PacketConfig { sfd: SfdType::Short8, ..cfg }, RxKind::SfdError),
            (PacketConfig { sfd: SfdType::Long32, ..cfg }, RxKind::SfdError),
            (PacketConfig { sts_mode: StsMode::Off, ..cfg }, RxKind::StsPhdError),
            (PacketConfig { sts_length: 2048, ..cfg }, RxKind::StsPhdError),
            (PacketConfig { phd: PhdProfile::Pdoa850k, ..cfg }, RxKind::StsPhdError),
        ];
        for (c, want) in cases {
            assert_eq!(rx(&w, &c, None).kind(), want, "{c:?}");
        }
    }

    #[test]
    fn aligned_sync_jam_at_gain_eight_breaks_sync() {
        let cfg = reference_config();
        let table = CodeTable::builtin();
        let jam_cfg = PacketConfig { preamble_code: table.least_correlated(cfg.preamble_code).unwrap(), ..cfg };
        let profile = PowerProfile::jam(8f64.sqrt()).unwrap();
        let mut jam = assemble_packet(&jam_cfg, table, StsSeed::new(99, 0), &[], &profile, true).unwrap();
        jam.start_time = ARRIVAL;
        let w = window_for(&cfg, &[jam], 4e-4);
        assert_eq!(rx(&w, &cfg, Some(SEED)).kind(), RxKind::SyncError);
    }

    #[test]
    fn thresholds_validate_ordering() {
        assert!(DetectionThresholds { presence: 0.5, legitimacy: 0.4 }.validate().is_err());
        assert!(DetectionThresholds::default().validate().is_ok());
    }

    #[test]
    fn outcome_record_serializes_with_tag() {
        let json = serde_json::to_string(&RxOutcome::SfdError.record()).unwrap();
        assert_eq!(json, r#"{"outcome":"sfd_error"}"#);
    }
}
