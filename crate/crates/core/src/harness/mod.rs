//! Experiment suite: sweeps over simulated runs, reported as CSV.

mod experiments;

pub use experiments::*;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::phy::packet::mean_square;
use crate::phy::{build_sync, CodeTable, PacketConfig};

/// Default SNR at the victim receiver, dB.
pub const DEFAULT_SNR_DB: f64 = 25.0;
/// Sessions per point; 180 polls fill 30 s at the default period.
pub const DEFAULT_SESSIONS: usize = 180;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentName {
    CirDegradation,
    FieldSweep,
    DelaySweep,
    SniffTime,
    Countermeasure,
    Distance,
    Selective,
    Drift,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 8] = [
        ExperimentName::CirDegradation,
        ExperimentName::FieldSweep,
        ExperimentName::DelaySweep,
        ExperimentName::SniffTime,
        ExperimentName::Countermeasure,
        ExperimentName::Distance,
        ExperimentName::Selective,
        ExperimentName::Drift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::CirDegradation => "cir_degradation",
            ExperimentName::FieldSweep => "field_sweep",
            ExperimentName::DelaySweep => "delay_sweep",
            ExperimentName::SniffTime => "sniff_time",
            ExperimentName::Countermeasure => "countermeasure",
            ExperimentName::Distance => "distance",
            ExperimentName::Selective => "selective",
            ExperimentName::Drift => "drift",
        }
    }

    /// Values of the primary axis when none are given.
    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            ExperimentName::CirDegradation => vec![1.0, 3.0, 15.0],
            ExperimentName::FieldSweep => vec![1.0, 2.0, 4.0, 6.0, 8.0, 16.0, 32.0, 48.0, 63.0],
            ExperimentName::DelaySweep => (0..=25).map(|i| 700.0 + 8.0 * i as f64).collect(),
            ExperimentName::SniffTime => vec![6.0],
            ExperimentName::Countermeasure => vec![0.0, 200.0, 400.0],
            ExperimentName::Distance => vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            ExperimentName::Selective => vec![8.0],
            ExperimentName::Drift => vec![0.0, 5.0, 20.0],
        }
    }

    /// Values of the secondary gain axis when none are given.
    pub fn default_gains(self) -> Vec<f64> {
        match self {
            ExperimentName::DelaySweep => vec![8.0, 15.0],
            ExperimentName::Countermeasure => vec![8.0, 15.0, 32.0, 63.0],
            ExperimentName::Distance => vec![2.0],
            _ => vec![],
        }
    }

    pub fn default_sessions(self) -> usize {
        match self {
            ExperimentName::Countermeasure => 1000,
            ExperimentName::Drift => 10,
            _ => DEFAULT_SESSIONS,
        }
    }

    pub fn default_replicates(self) -> usize {
        match self {
            ExperimentName::CirDegradation => 64,
            ExperimentName::SniffTime => 1000,
            _ => 1,
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown experiment {s}")))
    }
}

/// One experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    /// Primary axis; see [`ExperimentName::default_sweep`].
    pub sweep: Vec<f64>,
    /// Secondary gain axis, where the experiment has one.
    pub gains: Vec<f64>,
    pub sessions: usize,
    /// Independent trials per point (noise draws, random configurations).
    pub replicates: usize,
    pub seed: u64,
    pub snr_db: f64,
}

impl ExperimentSpec {
    pub fn new(name: ExperimentName, seed: u64) -> Self {
        ExperimentSpec {
            name,
            sweep: name.default_sweep(),
            gains: name.default_gains(),
            sessions: name.default_sessions(),
            replicates: name.default_replicates(),
            seed,
            snr_db: DEFAULT_SNR_DB,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("{}: {m}", self.name)));
        if self.replicates < 1 || self.sessions < 1 {
            return bad("replicates and sessions must be at least 1");
        }
        if self.sweep.is_empty() {
            return bad("empty sweep");
        }
        if self.sweep.iter().chain(&self.gains).any(|v| !v.is_finite() || *v < 0.0) {
            return bad("sweep values must be finite and non-negative");
        }
        if !self.snr_db.is_finite() {
            return bad("snr must be finite");
        }
        let gains_ok = |g: &[f64]| g.iter().all(|&g| g > 0.0);
        match self.name {
            ExperimentName::CirDegradation | ExperimentName::FieldSweep | ExperimentName::Selective
                if !gains_ok(&self.sweep) =>
            {
                bad("gains must be positive")
            }
            ExperimentName::DelaySweep | ExperimentName::Countermeasure | ExperimentName::Distance
                if self.gains.is_empty() || !gains_ok(&self.gains) =>
            {
                bad("needs at least one positive gain")
            }
            ExperimentName::Distance | ExperimentName::SniffTime if self.sweep.iter().any(|v| *v <= 0.0) => {
                bad("values must be positive")
            }
            _ => Ok(()),
        }
    }

    /// Runs the experiment and renders its CSV.
    pub fn run(&self) -> Result<String> {
        self.validate()?;
        match self.name {
            ExperimentName::CirDegradation => to_csv(&cir_degradation(self)?),
            ExperimentName::FieldSweep => to_csv(&field_sweep(self)?),
            ExperimentName::DelaySweep => to_csv(&delay_sweep(self)?),
            ExperimentName::SniffTime => to_csv(&sniff_time(self)?),
            ExperimentName::Countermeasure => to_csv(&countermeasure(self)?),
            ExperimentName::Distance => to_csv(&distance(self)?),
            ExperimentName::Selective => to_csv(&selective(self)?),
            ExperimentName::Drift => to_csv(&drift(self)?),
        }
    }
}

/// Renders rows as CSV; the header is the row struct's field order.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Mean SYNC power per chip of a transmitter at 1 m.
pub fn sync_power(cfg: &PacketConfig, table: &CodeTable) -> Result<f64> {
    Ok(mean_square(&build_sync(cfg, table)?))
}

/// Channel whose noise gives `snr_db` for a `cfg` transmitter `distance_m` away.
pub fn channel_for_snr(cfg: &PacketConfig, table: &CodeTable, distance_m: f64, snr_db: f64) -> Result<ChannelParams> {
    let mut ch = ChannelParams::default();
    let signal = sync_power(cfg, table)? * ch.power_loss(distance_m);
    ch.noise_power_density = signal / 10f64.powf(snr_db / 10.0);
    Ok(ch)
}
