//! Two-way ranging arithmetic, session schedules and clock models.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{Picos, PS_PER_MS, PS_PER_US, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketRole {
    Poll,
    Response,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwrMode {
    Ss,
    Ds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SessionStatus {
    Completed,
    Dropped { at: PacketRole },
    /// All packets arrived but the computed distance was negative.
    Invalid { distance: f64 },
}

/// One ranging exchange. Timestamps are local clock readings in picoseconds:
/// poll send and response receive and final send on the initiator, the rest
/// on the responder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangingRecord {
    pub pair: u32,
    pub session: u32,
    /// Global time the poll left the initiator.
    pub start: Picos,
    pub t_sp: Option<i64>,
    pub t_rp: Option<i64>,
    pub t_sr: Option<i64>,
    pub t_rr: Option<i64>,
    pub t_sf: Option<i64>,
    pub t_rf: Option<i64>,
    pub distance: Option<f64>,
    #[serde(flatten)]
    pub status: SessionStatus,
}

impl RangingRecord {
    pub fn new(pair: u32, session: u32, start: Picos) -> Self {
        RangingRecord {
            pair,
            session,
            start,
            t_sp: None,
            t_rp: None,
            t_sr: None,
            t_rr: None,
            t_sf: None,
            t_rf: None,
            distance: None,
            status: SessionStatus::Dropped { at: PacketRole::Poll },
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == SessionStatus::Completed
    }

    /// Computes the distance for `mode` and sets the status accordingly.
    pub fn finish(&mut self, mode: TwrMode) -> Result<()> {
        let d = match mode {
            TwrMode::Ss => {
                let need = |x: Option<i64>| x.ok_or_else(|| Error::Precondition("missing timestamp".into()));
                distance_ss_twr(need(self.t_sp)?, need(self.t_rp)?, need(self.t_sr)?, need(self.t_rr)?)
            }
            TwrMode::Ds => distance_ds_twr(self)?,
        };
        if d < 0.0 {
            self.status = SessionStatus::Invalid { distance: d };
            self.distance = None;
        } else {
            self.status = SessionStatus::Completed;
            self.distance = Some(d);
        }
        Ok(())
    }
}

const M_PER_PS: f64 = SPEED_OF_LIGHT * 1e-12;

pub fn distance_ss_twr(t_sp: i64, t_rp: i64, t_sr: i64, t_rr: i64) -> f64 {
    let round = (t_rr - t_sp) as f64;
    let reply = (t_sr - t_rp) as f64;
    M_PER_PS / 2.0 * (round - reply)
}

pub fn distance_ds_twr(r: &RangingRecord) -> Result<f64> {
    let all = [r.t_sp, r.t_rp, r.t_sr, r.t_rr, r.t_sf, r.t_rf];
    let [Some(sp), Some(rp), Some(sr), Some(rr), Some(sf), Some(rf)] = all else {
        return Err(Error::Precondition("DS-TWR needs all six timestamps".into()));
    };
    let sum = (rr - sp) as f64 - (sr - rp) as f64 + (rf - sr) as f64 - (sf - rr) as f64;
    Ok(M_PER_PS / 4.0 * sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ClockModel {
    pub drift_ppm: f64,
    pub offset_ps: i64,
}

impl ClockModel {
    pub fn validate(&self) -> Result<()> {
        if self.drift_ppm.abs() <= 100.0 {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!("clock drift {} ppm exceeds 100", self.drift_ppm)))
        }
    }

    fn rate(&self) -> f64 {
        1.0 + self.drift_ppm * 1e-6
    }

    /// Local reading at global time `t`.
    pub fn local(&self, t: Picos) -> i64 {
        self.offset_ps + (t as f64 * self.rate()).round() as i64
    }

    /// Global time at which the local clock reads `local`.
    pub fn global(&self, local: i64) -> Picos {
        (((local - self.offset_ps) as f64) / self.rate()).round().max(0.0) as Picos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SessionSchedule {
    /// Poll to response, microseconds.
    pub t1_us: f64,
    /// Poll to final, microseconds.
    pub t2_us: f64,
    /// Poll to next poll, milliseconds.
    pub t3_ms: f64,
    /// Countermeasure jitter bound in microseconds; 0 disables it.
    pub random_jitter_bound_us: f64,
    /// Packet duration in microseconds, the minimum jitter magnitude.
    pub packet_duration_us: f64,
}

impl Default for SessionSchedule {
    fn default() -> Self {
        SessionSchedule {
            t1_us: 800.0,
            t2_us: 1600.0,
            t3_ms: 167.0,
            random_jitter_bound_us: 0.0,
            packet_duration_us: 0.0,
        }
    }
}

impl SessionSchedule {
    pub fn validate(&self) -> Result<()> {
        let t3_us = self.t3_ms * 1000.0;
        if !(self.t1_us > 0.0 && self.t1_us < self.t2_us && self.t2_us < t3_us) {
            return Err(Error::InvalidScenario("schedule needs 0 < t1 < t2 < t3".into()));
        }
        if self.jitter_enabled() && self.random_jitter_bound_us < self.packet_duration_us {
            return Err(Error::InvalidScenario("jitter bound must be at least the packet duration".into()));
        }
        Ok(())
    }

    pub fn jitter_enabled(&self) -> bool {
        self.random_jitter_bound_us > 0.0
    }

    pub fn t1_ps(&self) -> i64 {
        (self.t1_us * PS_PER_US as f64).round() as i64
    }

    pub fn t2_ps(&self) -> i64 {
        (self.t2_us * PS_PER_US as f64).round() as i64
    }

    pub fn t3_ps(&self) -> Picos {
        (self.t3_ms * PS_PER_MS as f64).round() as Picos
    }

    /// Draws a countermeasure offset in picoseconds, or 0 when disabled.
    ///
    /// Uniform over `[-bound, -t0] ∪ [t0, bound]`.
    pub fn draw_jitter_ps<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        if !self.jitter_enabled() {
            return 0;
        }
        let lo = self.packet_duration_us;
        let hi = self.random_jitter_bound_us;
        let mag = if hi > lo { rng.gen_range(lo..=hi) } else { hi };
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        (sign * mag * PS_PER_US as f64).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessDecision {
    Granted,
    Denied,
}

/// Grants access only while the newest completed ranging is fresh and close.
pub fn stale_data_policy(
    history: &[RangingRecord],
    now: Picos,
    expiry_s: f64,
    proximity_m: f64,
) -> Result<AccessDecision> {
    if !(expiry_s > 0.0) {
        return Err(Error::Precondition("expiry must be positive".into()));
    }
    let last = history.iter().filter(|r| r.is_completed()).max_by_key(|r| r.start);
    let Some(last) = last else {
        return Ok(AccessDecision::Denied);
    };
    let age_s = now.saturating_sub(last.start) as f64 * 1e-12;
    let near = last.distance.is_some_and(|d| d <= proximity_m);
    Ok(if age_s < expiry_s && near { AccessDecision::Granted } else { AccessDecision::Denied })
}
