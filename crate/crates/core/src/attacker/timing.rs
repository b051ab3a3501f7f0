//! Inter-packet interval measurement and attack-delay estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::packet::packet_chips;
use crate::phy::{CodeTable, PacketConfig, SPREADING_FACTOR};
use crate::ranging::PacketRole;
use crate::time::{chips_to_us, Picos, PS_PER_US};

/// Mean transmit-path latency of COTS hardware, microseconds.
pub const DEFAULT_T_DELTA_US: f64 = 20.0;
/// Its standard deviation, microseconds.
pub const T_DELTA_SIGMA_US: f64 = 2.74;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingEstimate {
    pub t1_hat_us: f64,
    pub t2_hat_us: f64,
    pub t3_hat_us: f64,
    /// Receive time of the latest poll.
    pub anchor: Picos,
    pub t_delta_us: f64,
    pub t_chunk_us: f64,
    pub t_packet_us: f64,
    pub attack_delay_us: f64,
}

/// Preamble detection time: one PAC chunk.
pub fn chunk_us(cfg: &PacketConfig, table: &CodeTable) -> Result<f64> {
    Ok(chips_to_us(cfg.pac_chips(table.get(cfg.preamble_code)?.len())))
}

/// Duration of the three-field jam packet built from `cfg`.
pub fn jam_packet_us(cfg: &PacketConfig, table: &CodeTable) -> Result<f64> {
    let code_len = table.get(cfg.preamble_code)?.len();
    Ok(chips_to_us(packet_chips(cfg, code_len, 0, true)))
}

/// `t_measure - t_chunk - t_packet - t_delta`, which must stay positive.
pub fn attack_delay_us(t_measure: f64, t_chunk: f64, t_packet: f64, t_delta: f64) -> Result<f64> {
    let d = t_measure - t_chunk - t_packet - t_delta;
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::ConfigTooTight { delay_us: d })
    }
}

pub fn compute_attack_delay(est: &TimingEstimate) -> Result<f64> {
    attack_delay_us(est.t1_hat_us, est.t_chunk_us, est.t_packet_us, est.t_delta_us)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Labels a run of receive times with protocol roles.
///
/// A gap longer than eight times the median gap starts a new session;
/// within a session packets are poll, response, final in order.
pub fn classify_roles(times: &[Picos]) -> Vec<PacketRole> {
    if times.is_empty() {
        return Vec::new();
    }
    let mut gaps: Vec<f64> = times.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let limit = if gaps.is_empty() { f64::INFINITY } else { 8.0 * median(&mut gaps) };
    let mut roles = Vec::with_capacity(times.len());
    let mut pos = 0;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 && (t - times[i - 1]) as f64 > limit {
            pos = 0;
        }
        roles.push(match pos {
            0 => PacketRole::Poll,
            1 => PacketRole::Response,
            _ => PacketRole::Final,
        });
        pos += 1;
    }
    roles
}

fn us(ps: Picos) -> f64 {
    ps as f64 / PS_PER_US as f64
}

/// Estimates the fixed protocol intervals from labelled receive times.
pub fn measure_intervals(
    obs: &[(PacketRole, Picos)],
    cfg: &PacketConfig,
    table: &CodeTable,
    t_delta_us: f64,
) -> Result<TimingEstimate> {
    let mut polls = Vec::new();
    let (mut t1, mut t2) = (Vec::new(), Vec::new());
    let mut last_poll: Option<Picos> = None;
    for &(role, t) in obs {
        match role {
            PacketRole::Poll => {
                polls.push(t);
                last_poll = Some(t);
            }
            PacketRole::Response => t1.extend(last_poll.map(|p| us(t - p))),
            PacketRole::Final => t2.extend(last_poll.map(|p| us(t - p))),
        }
    }
    if polls.len() < 2 || t1.len() < 2 {
        return Err(Error::Precondition("need at least two observed sessions".into()));
    }
    let limit = 2.0 * t_delta_us;
    for v in [&t1, &t2] {
        if let (Some(lo), Some(hi)) = (v.iter().copied().reduce(f64::min), v.iter().copied().reduce(f64::max)) {
            if hi - lo > limit {
                return Err(Error::UnstableTiming { spread_us: hi - lo, limit_us: limit });
            }
        }
    }
    let mut t3: Vec<f64> = polls.windows(2).map(|w| us(w[1] - w[0])).collect();
    let t1_hat = median(&mut t1);
    let t2_hat = if t2.is_empty() { f64::NAN } else { median(&mut t2) };
    let t_chunk = chunk_us(cfg, table)?;
    let t_packet = jam_packet_us(cfg, table)?;
    let mut est = TimingEstimate {
        t1_hat_us: t1_hat,
        t2_hat_us: t2_hat,
        t3_hat_us: median(&mut t3),
        anchor: *polls.last().expect("two polls"),
        t_delta_us,
        t_chunk_us: t_chunk,
        t_packet_us: t_packet,
        attack_delay_us: 0.0,
    };
    est.attack_delay_us = compute_attack_delay(&est)?;
    Ok(est)
}

/// Symbol duration in microseconds for a code of `code_len` symbols.
pub fn symbol_us(code_len: usize) -> f64 {
    chips_to_us(code_len * SPREADING_FACTOR)
}
