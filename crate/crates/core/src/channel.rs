//! Free-space propagation and superposition at a receiver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{AcqMark, BasebandSignal, Field, FieldSpan};
use crate::time::{Picos, CHIP_PS, SPEED_OF_LIGHT};

/// HRP channel numbers the isolation model knows about.
pub const KNOWN_CHANNELS: std::ops::RangeInclusive<u8> = 0..=15;
/// Amplitude leakage between two different channels.
pub const CHANNEL_ISOLATION: f64 = 1e-3;

/// An extra propagation path, relative to the direct one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_chips: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ChannelParams {
    pub path_loss_exponent: f64,
    /// Power ratio at the 1 m reference distance.
    pub reference_loss_at_1m: f64,
    /// Per-chip noise variance.
    pub noise_power_density: f64,
    pub propagation_speed: f64,
    pub rng_seed: u64,
    /// Optional multipath taps; empty means a single direct path.
    pub taps: Vec<Tap>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            path_loss_exponent: 2.0,
            reference_loss_at_1m: 1.0,
            noise_power_density: 0.0,
            propagation_speed: SPEED_OF_LIGHT,
            rng_seed: 0,
            taps: Vec::new(),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent >= 1.0) {
            return Err(Error::InvalidScenario("path loss exponent must be at least 1".into()));
        }
        if !(self.noise_power_density >= 0.0) {
            return Err(Error::InvalidScenario("noise power density must be non-negative".into()));
        }
        if self.propagation_speed != SPEED_OF_LIGHT {
            return Err(Error::InvalidScenario("propagation speed must be c".into()));
        }
        if !(self.reference_loss_at_1m > 0.0) {
            return Err(Error::InvalidScenario("reference loss must be positive".into()));
        }
        Ok(())
    }

    /// Received power ratio at `meters`; distances under 1 m use the reference loss.
    pub fn power_loss(&self, meters: f64) -> f64 {
        self.reference_loss_at_1m * meters.max(1.0).powf(-self.path_loss_exponent)
    }

    pub fn delay_ps(&self, meters: f64) -> Picos {
        (meters / self.propagation_speed * 1e12).round() as Picos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodePosition {
    pub x: f64,
    pub y: f64,
}

impl NodePosition {
    pub fn new(x: f64, y: f64) -> Self {
        NodePosition { x, y }
    }

    pub fn distance(&self, other: &NodePosition) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Delays and attenuates a signal travelling from `from` to `to`.
pub fn propagate(
    signal: &BasebandSignal,
    from: NodePosition,
    to: NodePosition,
    params: &ChannelParams,
) -> BasebandSignal {
    let d = from.distance(&to);
    let amp = params.power_loss(d).sqrt();
    let mut out = signal.clone();
    out.start_time += params.delay_ps(d);
    let extra = params.taps.iter().map(|t| t.delay_chips).max().unwrap_or(0);
    if extra > 0 {
        let mut samples = vec![0.0; signal.len() + extra];
        samples[..signal.len()].copy_from_slice(&signal.samples);
        for tap in &params.taps {
            for (i, &s) in signal.samples.iter().enumerate() {
                samples[i + tap.delay_chips] += tap.amplitude * s;
            }
        }
        out.samples = samples;
        if let Some(last) = out.fields.last_mut() {
            last.end += extra;
        }
    }
    out.samples.iter_mut().for_each(|s| *s *= amp);
    out
}

/// Amplitude factor applied to a signal sent on `tx` and received on `rx`.
pub fn cross_channel_isolation(tx: u8, rx: u8) -> Result<f64> {
    for ch in [tx, rx] {
        if !KNOWN_CHANNELS.contains(&ch) {
            return Err(Error::UnknownChannel(ch));
        }
    }
    Ok(if tx == rx { 1.0 } else { CHANNEL_ISOLATION })
}

/// A receiver's listening window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RxWindow {
    pub start: Picos,
    pub chips: usize,
    pub channel: u8,
    /// Identifies the listening node, so co-timed windows get distinct noise.
    pub receiver: u32,
}

fn noise_rng(seed: u64, window: &RxWindow) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&window.start.to_le_bytes());
    bytes[16..20].copy_from_slice(&window.receiver.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Sums the signals on the window's chip grid and adds receiver noise.
pub fn superpose(
    signals: &[BasebandSignal],
    window: &RxWindow,
    params: &ChannelParams,
) -> Result<BasebandSignal> {
    let mut samples = vec![0.0; window.chips];
    let mut marks = Vec::new();
    for sig in signals {
        let iso = cross_channel_isolation(sig.channel, window.channel)?;
        let offset_ps = sig.start_time as i128 - window.start as i128;
        let offset = (offset_ps as f64 / CHIP_PS).round() as i64;
        let lo = offset.max(0);
        let hi = (offset + sig.len() as i64).min(window.chips as i64);
        for i in lo..hi {
            samples[i as usize] += iso * sig.samples[(i - offset) as usize];
        }
        for m in &sig.marks {
            let at = offset + m.chip as i64;
            if (0..window.chips as i64).contains(&at) {
                marks.push(AcqMark { chip: at as usize, ..*m });
            }
        }
    }
    if params.noise_power_density > 0.0 {
        let normal = Normal::new(0.0, params.noise_power_density.sqrt())
            .map_err(|e| Error::Domain(e.to_string()))?;
        let mut rng = noise_rng(params.rng_seed, window);
        for s in &mut samples {
            *s += normal.sample(&mut rng);
        }
    }
    marks.sort_by_key(|m| m.chip);
    Ok(BasebandSignal {
        samples,
        start_time: window.start,
        fields: vec![FieldSpan { field: Field::Mixed, start: 0, end: window.chips }],
        channel: window.channel,
        marks,
    })
}
