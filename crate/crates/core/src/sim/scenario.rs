//! Scenario description, loaded from TOML.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attacker::{JamAim, JamHardware};
use crate::channel::{ChannelParams, NodePosition};
use crate::error::{Error, Result};
use crate::phy::{CodeTable, Domains, PacketConfig};
use crate::ranging::{ClockModel, PacketRole, SessionSchedule, TwrMode};
use crate::receiver::RxSettings;

pub const SCHEMA_VERSION: u32 = 1;

/// Serializes a 128-bit key as a hex string; accepts hex strings or small integers.
pub mod hex_u128 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#x}"))
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(i) => Ok(u128::from(i)),
            Raw::Str(s) => {
                let t = s.trim();
                let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
                    Some(h) => u128::from_str_radix(h, 16),
                    None => t.parse(),
                };
                parsed.map_err(|e| de::Error::custom(format!("bad key {s:?}: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct NodeSpec {
    pub position: NodePosition,
    pub clock: ClockModel,
}

/// One initiator/responder ranging pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairSpec {
    pub id: u32,
    pub config: PacketConfig,
    #[serde(with = "hex_u128")]
    pub sts_key: u128,
    /// Global time of the first poll, microseconds.
    #[serde(default = "default_phase")]
    pub phase_us: f64,
    pub initiator: NodeSpec,
    pub responder: NodeSpec,
}

impl PairSpec {
    /// Pair with the initiator at `(x, 0)` and the responder `distance_m` east of it.
    pub fn new(id: u32, config: PacketConfig, sts_key: u128, x: f64, distance_m: f64) -> Self {
        PairSpec {
            id,
            config,
            sts_key,
            phase_us: default_phase(),
            initiator: NodeSpec { position: NodePosition { x, y: 0.0 }, ..NodeSpec::default() },
            responder: NodeSpec { position: NodePosition { x: x + distance_m, y: 0.0 }, ..NodeSpec::default() },
        }
    }
}

fn default_phase() -> f64 {
    1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerMode {
    /// Sniff the configuration, measure intervals, then attack.
    Full,
    /// Start attacking with the victim configuration and nominal schedule.
    Attack,
    /// Only sniff.
    Sniff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttackerSpec {
    pub position: NodePosition,
    pub target_pair: u32,
    #[serde(default = "default_mode")]
    pub mode: AttackerMode,
    #[serde(default = "default_aim")]
    pub aim: JamAim,
    /// Power gain of the amplified jam field over a nominal transmitter.
    pub gain: f64,
    #[serde(default = "default_target")]
    pub target_packet: PacketRole,
    /// Jam code; defaults to the table code least correlated with the victim's.
    #[serde(default)]
    pub jam_code: Option<u8>,
    #[serde(default)]
    pub hardware: JamHardware,
    /// Overrides the measured poll-to-target interval, microseconds.
    #[serde(default)]
    pub t_measure_us: Option<f64>,
    /// Sessions to observe before estimating intervals.
    #[serde(default = "default_measure_sessions")]
    pub measure_sessions: usize,
    #[serde(default)]
    pub domains: Option<Domains>,
}

impl AttackerSpec {
    /// Attacker in `Attack` mode aimed at the response SYNC.
    pub fn new(target_pair: u32, position: NodePosition, gain: f64) -> Self {
        AttackerSpec {
            position,
            target_pair,
            mode: default_mode(),
            aim: default_aim(),
            gain,
            target_packet: default_target(),
            jam_code: None,
            hardware: JamHardware::default(),
            t_measure_us: None,
            measure_sessions: default_measure_sessions(),
            domains: None,
        }
    }
}

fn default_mode() -> AttackerMode {
    AttackerMode::Attack
}
fn default_aim() -> JamAim {
    JamAim::Sync
}
fn default_target() -> PacketRole {
    PacketRole::Response
}
fn default_measure_sessions() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub schema_version: u32,
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default = "default_twr")]
    pub mode: TwrMode,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub schedule: SessionSchedule,
    #[serde(default)]
    pub receiver: RxSettings,
    pub pairs: Vec<PairSpec>,
    #[serde(default)]
    pub attackers: Vec<AttackerSpec>,
}

fn default_twr() -> TwrMode {
    TwrMode::Ds
}

impl Scenario {
    /// Scenario with default channel, schedule and receiver settings.
    pub fn new(seed: u64, duration_s: f64, pairs: Vec<PairSpec>, attackers: Vec<AttackerSpec>) -> Self {
        Scenario {
            schema_version: SCHEMA_VERSION,
            duration_s,
            seed,
            mode: default_twr(),
            channel: ChannelParams::default(),
            schedule: SessionSchedule::default(),
            receiver: RxSettings::default(),
            pairs,
            attackers,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self, table: &CodeTable) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schemaVersion {}", self.schema_version));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration must be positive".into());
        }
        if self.pairs.is_empty() {
            return bad("at least one ranging pair is required".into());
        }
        self.channel.validate()?;
        self.schedule.validate()?;
        self.receiver.thresholds.validate()?;
        let mut ids = BTreeSet::new();
        for p in &self.pairs {
            if !ids.insert(p.id) {
                return bad(format!("duplicate pair id {}", p.id));
            }
            p.config.check(table)?;
            crate::channel::cross_channel_isolation(p.config.channel, p.config.channel)?;
            for n in [&p.initiator, &p.responder] {
                n.clock.validate()?;
                if !n.position.is_finite() {
                    return bad("node positions must be finite".into());
                }
            }
            if !(p.phase_us >= 0.0) {
                return bad("pair phase must be non-negative".into());
            }
        }
        for a in &self.attackers {
            if !ids.contains(&a.target_pair) {
                return bad(format!("attacker targets unknown pair {}", a.target_pair));
            }
            if !(a.gain > 0.0 && a.gain.is_finite()) {
                return bad("attacker gain must be positive".into());
            }
            if !a.position.is_finite() {
                return bad("attacker position must be finite".into());
            }
            if a.target_packet == PacketRole::Poll {
                return bad("the poll has no preceding trigger to time a jam from".into());
            }
            if a.measure_sessions < 2 {
                return bad("measureSessions must be at least 2".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
schemaVersion = 1
durationS = 1.0
seed = 7

[[pairs]]
id = 0
stsKey = "0x1234"
config = { channel = 9, preambleCode = 9, preambleLength = 8128, pac = 8, sfd = "alt8", stsMode = "before_phd", stsLength = 4096, phd = "std850k" }
initiator = { position = { x = 0.0, y = 0.0 } }
responder = { position = { x = 3.0, y = 0.0 } }

[[attackers]]
position = { x = 0.0, y = 3.0 }
targetPair = 0
gain = 8.0
"#;

    #[test]
    fn parses_and_validates() {
        let s = Scenario::from_toml(EXAMPLE).unwrap();
        s.validate(CodeTable::builtin()).unwrap();
        assert_eq!(s.pairs[0].sts_key, 0x1234);
        assert_eq!(s.attackers[0].mode, AttackerMode::Attack);
        let again = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejects_zero_duration_and_bad_version() {
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        s.duration_s = 0.0;
        assert!(matches!(s.validate(CodeTable::builtin()), Err(Error::InvalidScenario(_))));
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        s.schema_version = 2;
        assert!(s.validate(CodeTable::builtin()).is_err());
    }

    #[test]
    fn rejects_unknown_target() {
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        s.attackers[0].target_pair = 4;
        assert!(s.validate(CodeTable::builtin()).is_err());
    }
}
