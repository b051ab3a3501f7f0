use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::{channel_for_snr, sync_power, ExperimentSpec, DEFAULT_SNR_DB};
use crate::attacker::{sniff_with_oracle, JamAim};
use crate::channel::NodePosition;
use crate::error::{Error, Result};
use crate::phy::{build_sync, reference_config, spread, CodeTable, Domains, PacketConfig};
use crate::ranging::{ClockModel, PacketRole, SessionStatus, TwrMode};
use crate::receiver::{jam_attenuation_factor, ncc_cir_periodic, predict_outcome, RxSettings};
use crate::sim::{run, AttackerSpec, PairSpec, Scenario, Trace, MESSAGE_BYTES};
use crate::time::SPEED_OF_LIGHT;

/// Distance between the victim pair's nodes in the attack experiments, m.
pub const RANGING_M: f64 = 5.0;
const STS_KEY: u128 = 0x005e_ed0f_5e55_10f5;
/// Symbol periods of SYNC correlated when measuring the CIR peak.
const CIR_PERIODS: usize = 16;
const CIR_MARGIN: usize = 64;

fn point_seed(seed: u64, point: usize) -> u64 {
    seed.wrapping_add((point as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn duration_for(sessions: usize) -> f64 {
    let s = crate::ranging::SessionSchedule::default();
    (1000.0 + (sessions as f64 - 0.5) * s.t3_ms * 1000.0) * 1e-6
}

/// One victim pair at `ranging_m` with an attacker `attack_m` from the
/// initiator, noise set for `snr_db` at the initiator.
pub fn attack_scenario(
    seed: u64,
    sessions: usize,
    ranging_m: f64,
    attack_m: f64,
    gain: f64,
    snr_db: f64,
) -> Result<Scenario> {
    let cfg = reference_config();
    let pair = PairSpec::new(0, cfg, STS_KEY, 0.0, ranging_m);
    let attacker = AttackerSpec::new(0, NodePosition::new(0.0, attack_m), gain);
    let mut sc = Scenario::new(seed, duration_for(sessions), vec![pair], vec![attacker]);
    sc.channel = channel_for_snr(&cfg, CodeTable::builtin(), ranging_m, snr_db)?;
    Ok(sc)
}

fn success(trace: &Trace, pair: u32) -> Result<f64> {
    trace.pair(pair).map(|s| s.success_rate).ok_or_else(|| Error::Precondition(format!("pair {pair} missing")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CirRow {
    pub gain: f64,
    pub predicted_factor: f64,
    pub measured_factor: f64,
    pub replicates: usize,
}

/// Drop of the SYNC CIR peak with a jam SYNC of power gain `g` on top.
///
/// Each replicate draws fresh noise and a random chip offset of the jam code.
pub fn cir_degradation(spec: &ExperimentSpec) -> Result<Vec<CirRow>> {
    let table = CodeTable::builtin();
    let victim_cfg = reference_config();
    let jam_code = table.least_correlated(victim_cfg.preamble_code)?;
    let jam_cfg = PacketConfig { preamble_code: jam_code, ..victim_cfg };
    let victim = build_sync(&victim_cfg, table)?;
    let jam = build_sync(&jam_cfg, table)?;
    let period = spread(table.get(victim_cfg.preamble_code)?.symbols.iter().map(|&s| f64::from(s)));
    let p = period.len();
    let pv = sync_power(&victim_cfg, table)?;
    let sigma = (pv / 10f64.powf(spec.snr_db / 10.0)).sqrt();
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let n = CIR_MARGIN + CIR_PERIODS * p + CIR_MARGIN;
    let peak = |rx: &[f64]| -> Result<f64> {
        Ok(ncc_cir_periodic(rx, &period, CIR_PERIODS, 2 * CIR_MARGIN)?.values[CIR_MARGIN])
    };
    spec.sweep
        .par_iter()
        .enumerate()
        .map(|(i, &g)| {
            let mut rng = ChaCha8Rng::seed_from_u64(point_seed(spec.seed, i));
            let amp = g.sqrt();
            let mut ratio = 0.0;
            for _ in 0..spec.replicates {
                let offset = rng.gen_range(0..p);
                let mut clean = vec![0.0; n];
                let mut jammed = vec![0.0; n];
                for k in 0..n - CIR_MARGIN {
                    let v = victim.get(k).copied().unwrap_or(0.0);
                    let j = jam.get(k + offset).copied().unwrap_or(0.0);
                    clean[k + CIR_MARGIN] = v + noise.sample(&mut rng);
                    jammed[k + CIR_MARGIN] = v + amp * j + noise.sample(&mut rng);
                }
                for k in 0..CIR_MARGIN {
                    clean[k] = noise.sample(&mut rng);
                    jammed[k] = noise.sample(&mut rng);
                }
                ratio += peak(&jammed)? / peak(&clean)?;
            }
            Ok(CirRow {
                gain: g,
                predicted_factor: jam_attenuation_factor(pv, g * pv)?,
                measured_factor: ratio / spec.replicates as f64,
                replicates: spec.replicates,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldRow {
    pub field: &'static str,
    pub gain: f64,
    pub sessions: usize,
    pub success_rate: f64,
}

/// Success rate per jammed field and gain with the exact attack delay.
pub fn field_sweep(spec: &ExperimentSpec) -> Result<Vec<FieldRow>> {
    let points: Vec<(JamAim, f64)> =
        JamAim::ALL.into_iter().flat_map(|a| spec.sweep.iter().map(move |&g| (a, g))).collect();
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(aim, gain))| {
            let mut sc = attack_scenario(point_seed(spec.seed, i), spec.sessions, RANGING_M, RANGING_M, gain, spec.snr_db)?;
            sc.attackers[0].aim = aim;
            let t = run(&sc)?;
            Ok(FieldRow { field: aim.name(), gain, sessions: spec.sessions, success_rate: success(&t, 0)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayRow {
    pub gain: f64,
    pub delay_us: f64,
    pub sessions: usize,
    pub success_rate: f64,
}

/// Success rate of a SYNC jam when the attacker waits `delay_us` after the
/// poll instead of the true response delay.
pub fn delay_sweep(spec: &ExperimentSpec) -> Result<Vec<DelayRow>> {
    let points: Vec<(f64, f64)> =
        spec.gains.iter().flat_map(|&g| spec.sweep.iter().map(move |&d| (g, d))).collect();
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(gain, delay))| {
            let mut sc = attack_scenario(point_seed(spec.seed, i), spec.sessions, RANGING_M, RANGING_M, gain, spec.snr_db)?;
            sc.attackers[0].t_measure_us = Some(delay);
            let t = run(&sc)?;
            Ok(DelayRow { gain, delay_us: delay, sessions: spec.sessions, success_rate: success(&t, 0)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SniffRow {
    pub trial: usize,
    pub packets_used: u64,
    pub stage1: u64,
    pub stage2: u64,
    pub stage3: u64,
    pub stage4: u64,
    /// At one sniffed packet per ranging session.
    pub seconds: f64,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, v: &[T]) -> T {
    v[rng.gen_range(0..v.len())]
}

/// A configuration drawn uniformly from `d`, one field at a time.
pub fn random_config(rng: &mut ChaCha8Rng, d: &Domains) -> PacketConfig {
    PacketConfig {
        channel: pick(rng, &d.channels),
        preamble_code: pick(rng, &d.preamble_codes),
        preamble_length: pick(rng, &d.preamble_lengths),
        pac: pick(rng, &d.pacs),
        sfd: pick(rng, &d.sfd_types),
        sts_mode: pick(rng, &d.sts_modes),
        sts_length: pick(rng, &d.sts_lengths),
        phd: pick(rng, &d.phd_profiles),
    }
}

/// Packets the staged sniffer needs against random victim configurations.
///
/// The sweep value is the ranging rate in sessions per second; outcomes
/// come from the receiver predictor.
pub fn sniff_time(spec: &ExperimentSpec) -> Result<Vec<SniffRow>> {
    let table = CodeTable::builtin();
    let domains = Domains::default();
    let settings = RxSettings::default();
    let rate = spec.sweep[0];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let victims: Vec<PacketConfig> = (0..spec.replicates).map(|_| random_config(&mut rng, &domains)).collect();
    victims
        .par_iter()
        .enumerate()
        .map(|(trial, victim)| {
            victim.validate(&domains, table)?;
            let s = sniff_with_oracle(&domains, |c| predict_outcome(victim, c, table, MESSAGE_BYTES, false, &settings))?;
            if !s.result().is_some_and(|r| r.equivalent(victim)) {
                return Err(Error::SniffFailed { stage: s.stage.number() });
            }
            Ok(SniffRow {
                trial,
                packets_used: s.packets_consumed,
                stage1: s.per_stage[0],
                stage2: s.per_stage[1],
                stage3: s.per_stage[2],
                stage4: s.per_stage[3],
                seconds: s.packets_consumed as f64 / rate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountermeasureRow {
    pub jitter_bound_us: f64,
    pub gain: f64,
    pub sessions: usize,
    pub success_rate: f64,
}

/// Success rate when the responder adds a random offset to its reply.
pub fn countermeasure(spec: &ExperimentSpec) -> Result<Vec<CountermeasureRow>> {
    let points: Vec<(f64, f64)> =
        spec.sweep.iter().flat_map(|&b| spec.gains.iter().map(move |&g| (b, g))).collect();
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(bound, gain))| {
            let mut sc = attack_scenario(point_seed(spec.seed, i), spec.sessions, RANGING_M, RANGING_M, gain, spec.snr_db)?;
            sc.schedule.random_jitter_bound_us = bound;
            let t = run(&sc)?;
            Ok(CountermeasureRow { jitter_bound_us: bound, gain, sessions: spec.sessions, success_rate: success(&t, 0)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRow {
    pub ranging_m: f64,
    pub attack_m: f64,
    pub gain: f64,
    pub sessions: usize,
    pub success_rate: f64,
}

/// Success rate against the ranging distance, attacker fixed at
/// [`RANGING_M`] from the initiator and noise set for the SNR at 1 m.
pub fn distance(spec: &ExperimentSpec) -> Result<Vec<DistanceRow>> {
    let points: Vec<(f64, f64)> =
        spec.gains.iter().flat_map(|&g| spec.sweep.iter().map(move |&d| (g, d))).collect();
    let noise = channel_for_snr(&reference_config(), CodeTable::builtin(), 1.0, spec.snr_db)?;
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(gain, d))| {
            let mut sc = attack_scenario(point_seed(spec.seed, i), spec.sessions, d, RANGING_M, gain, spec.snr_db)?;
            sc.channel = noise.clone();
            let t = run(&sc)?;
            Ok(DistanceRow { ranging_m: d, attack_m: RANGING_M, gain, sessions: spec.sessions, success_rate: success(&t, 0)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectiveRow {
    pub gain: f64,
    pub pair: u32,
    pub targeted: bool,
    pub polls: u64,
    pub completed: u64,
    pub success_rate: f64,
}

/// Two pairs on different channels and codes; only pair 0 is attacked.
pub fn selective(spec: &ExperimentSpec) -> Result<Vec<SelectiveRow>> {
    let table = CodeTable::builtin();
    let target = reference_config();
    let other = PacketConfig { channel: 5, preamble_code: 10, ..target };
    let rows: Vec<Vec<SelectiveRow>> = spec
        .sweep
        .par_iter()
        .enumerate()
        .map(|(i, &gain)| {
            let mut sc = attack_scenario(point_seed(spec.seed, i), spec.sessions, RANGING_M, RANGING_M, gain, spec.snr_db)?;
            let mut second = PairSpec::new(1, other, STS_KEY ^ 1, 0.0, RANGING_M);
            second.initiator.position.y = 2.0;
            second.responder.position.y = 2.0;
            second.phase_us = 1400.0;
            sc.pairs.push(second);
            sc.validate(table)?;
            let t = run(&sc)?;
            Ok(t.summary
                .pairs
                .iter()
                .map(|s| SelectiveRow {
                    gain,
                    pair: s.pair,
                    targeted: s.pair == 0,
                    polls: s.polls,
                    completed: s.completed,
                    success_rate: s.success_rate,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub mode: &'static str,
    pub drift_ppm: f64,
    pub sessions: usize,
    pub true_m: f64,
    pub mean_measured_m: f64,
    pub mean_error_m: f64,
    pub oracle_error_m: f64,
}

/// Closed-form ranging error with the initiator at `+ppm` and the responder
/// at `-ppm`, computed from ideal continuous times.
pub fn drift_oracle(mode: TwrMode, ppm: f64, d: f64, t1_s: f64, t2_s: f64) -> f64 {
    let (ei, er) = (ppm * 1e-6, -ppm * 1e-6);
    let tof = d / SPEED_OF_LIGHT;
    let round1 = (2.0 * tof + t1_s / (1.0 + er)) * (1.0 + ei);
    let reply1 = t1_s;
    match mode {
        TwrMode::Ss => SPEED_OF_LIGHT / 2.0 * (round1 - reply1) - d,
        TwrMode::Ds => {
            let reply2 = t2_s - round1;
            let round2 = (reply2 / (1.0 + ei) + 2.0 * tof) * (1.0 + er);
            SPEED_OF_LIGHT / 4.0 * (round1 - reply1 + round2 - reply2) - d
        }
    }
}

/// Ranging error under opposite clock drifts at the two nodes, no attacker.
pub fn drift(spec: &ExperimentSpec) -> Result<Vec<DriftRow>> {
    let points: Vec<(TwrMode, f64)> =
        [TwrMode::Ss, TwrMode::Ds].into_iter().flat_map(|m| spec.sweep.iter().map(move |&p| (m, p))).collect();
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(mode, ppm))| {
            let mut sc = attack_scenario(point_seed(spec.seed, i), spec.sessions, RANGING_M, RANGING_M, 1.0, spec.snr_db)?;
            sc.attackers.clear();
            sc.mode = mode;
            sc.pairs[0].initiator.clock = ClockModel { drift_ppm: ppm, offset_ps: 0 };
            sc.pairs[0].responder.clock = ClockModel { drift_ppm: -ppm, offset_ps: 0 };
            let t = run(&sc)?;
            let d: Vec<f64> = t.sessions().filter_map(|r| r.distance).collect();
            if d.is_empty() {
                return Err(Error::Precondition("no completed sessions".into()));
            }
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let s = sc.schedule;
            Ok(DriftRow {
                mode: match mode {
                    TwrMode::Ss => "ss",
                    TwrMode::Ds => "ds",
                },
                drift_ppm: ppm,
                sessions: d.len(),
                true_m: RANGING_M,
                mean_measured_m: mean,
                mean_error_m: mean - RANGING_M,
                oracle_error_m: drift_oracle(mode, ppm, RANGING_M, s.t1_us * 1e-6, s.t2_us * 1e-6),
            })
        })
        .collect()
}

/// Sessions of a trace that ended with a dropped response.
pub fn dropped_responses(t: &Trace) -> usize {
    t.sessions().filter(|r| r.status == SessionStatus::Dropped { at: PacketRole::Response }).count()
}


/// A sniff-only attacker next to a pair using a random configuration from
/// the default domains. Long enough for the staged worst case.
pub fn sniff_demo_scenario(seed: u64) -> Result<(Scenario, PacketConfig)> {
    let table = CodeTable::builtin();
    let domains = Domains::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let victim = random_config(&mut rng, &domains);
    victim.validate(&domains, table)?;
    let pair = PairSpec::new(0, victim, STS_KEY, 0.0, RANGING_M);
    let mut attacker = AttackerSpec::new(0, NodePosition::new(0.0, RANGING_M), 1.0);
    attacker.mode = crate::sim::AttackerMode::Sniff;
    let sessions = crate::attacker::staged_search_size(&domains) as usize + 10;
    let mut sc = Scenario::new(seed, duration_for(sessions), vec![pair], vec![attacker]);
    sc.channel = channel_for_snr(&victim, table, RANGING_M, DEFAULT_SNR_DB)?;
    Ok((sc, victim))
}
