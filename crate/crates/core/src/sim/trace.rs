//! Event log and summary metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attacker::{SniffLogEntry, TimingEstimate};
use crate::error::{Error, Result};
use crate::phy::PacketConfig;
use crate::ranging::{PacketRole, RangingRecord, SessionStatus};
use crate::receiver::{RxKind, RxRecord};
use crate::time::Picos;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Emit {
        t: Picos,
        node: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        pair: Option<u32>,
        #[serde(skip_serializing_if = "Option::is_none")]
        session: Option<u32>,
        #[serde(skip_serializing_if = "Option::is_none")]
        role: Option<PacketRole>,
        jam: bool,
        end: Picos,
    },
    Rx {
        t: Picos,
        node: u32,
        pair: u32,
        session: u32,
        role: PacketRole,
        /// Arrival of the triggering packet's first chip at this node.
        arrival: Picos,
        #[serde(flatten)]
        record: RxRecord,
    },
    Sniff {
        t: Picos,
        node: u32,
        #[serde(flatten)]
        entry: SniffLogEntry,
    },
    Sniffed {
        t: Picos,
        node: u32,
        config: PacketConfig,
        packets: u64,
    },
    Timing {
        t: Picos,
        node: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        estimate: Option<TimingEstimate>,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Session {
        t: Picos,
        #[serde(flatten)]
        record: RangingRecord,
    },
}

impl TraceEvent {
    pub fn time(&self) -> Picos {
        match self {
            TraceEvent::Emit { t, .. }
            | TraceEvent::Rx { t, .. }
            | TraceEvent::Sniff { t, .. }
            | TraceEvent::Sniffed { t, .. }
            | TraceEvent::Timing { t, .. }
            | TraceEvent::Session { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair: u32,
    /// Polls transmitted (N_p).
    pub polls: u64,
    /// Responses the initiator received successfully (N_r).
    pub responses: u64,
    /// `1 - N_r / N_p`.
    pub success_rate: f64,
    pub completed: u64,
    pub dropped: u64,
    pub invalid: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub events: u64,
    pub pairs: Vec<PairSummary>,
    pub jams: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub summary: Summary,
    /// Initiator node id per pair, needed to recompute the metrics.
    pub initiators: BTreeMap<u32, u32>,
}

/// Recomputes the summary from an event log.
pub fn summarize(events: &[TraceEvent], initiators: &BTreeMap<u32, u32>) -> Summary {
    let mut pairs: BTreeMap<u32, PairSummary> = initiators
        .keys()
        .map(|&p| {
            (p, PairSummary { pair: p, polls: 0, responses: 0, success_rate: 0.0, completed: 0, dropped: 0, invalid: 0, mean_distance: None })
        })
        .collect();
    let mut distances: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut jams = 0;
    for e in events {
        match e {
            TraceEvent::Emit { jam: true, .. } => jams += 1,
            TraceEvent::Emit { pair: Some(p), role: Some(PacketRole::Poll), .. } => {
                if let Some(s) = pairs.get_mut(p) {
                    s.polls += 1;
                }
            }
            TraceEvent::Rx { node, pair, role: PacketRole::Response, record, .. } => {
                if initiators.get(pair) == Some(node) && record.outcome == RxKind::Ok {
                    if let Some(s) = pairs.get_mut(pair) {
                        s.responses += 1;
                    }
                }
            }
            TraceEvent::Session { record, .. } => {
                if let Some(s) = pairs.get_mut(&record.pair) {
                    match record.status {
                        SessionStatus::Completed => {
                            s.completed += 1;
                            distances.entry(record.pair).or_default().extend(record.distance);
                        }
                        SessionStatus::Dropped { .. } => s.dropped += 1,
                        SessionStatus::Invalid { .. } => s.invalid += 1,
                    }
                }
            }
            _ => {}
        }
    }
    for (p, s) in pairs.iter_mut() {
        s.success_rate = if s.polls == 0 { 0.0 } else { 1.0 - s.responses as f64 / s.polls as f64 };
        s.mean_distance = distances.get(p).filter(|d| !d.is_empty()).map(|d| d.iter().sum::<f64>() / d.len() as f64);
    }
    Summary { events: events.len() as u64, pairs: pairs.into_values().collect(), jams }
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    initiators: BTreeMap<u32, u32>,
}

impl Trace {
    /// JSON-lines log: a header line, then one line per event.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Header { kind: "header".into(), initiators: self.initiators.clone() };
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines.next().ok_or_else(|| Error::Parse("empty trace".into()))?;
        let header: Header = serde_json::from_str(first).map_err(|e| Error::Parse(format!("header: {e}")))?;
        let events = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse(format!("line {}: {e}", i + 2))))
            .collect::<Result<Vec<TraceEvent>>>()?;
        let summary = summarize(&events, &header.initiators);
        Ok(Trace { events, summary, initiators: header.initiators })
    }

    /// Writes `<stem>.jsonl` and `<stem>.summary.json` into `dir`.
    pub fn write(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.jsonl")), self.to_jsonl())?;
        std::fs::write(dir.join(format!("{stem}.summary.json")), self.summary_json())?;
        Ok(())
    }

    pub fn pair(&self, id: u32) -> Option<&PairSummary> {
        self.summary.pairs.iter().find(|p| p.pair == id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &RangingRecord> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Session { record, .. } => Some(record),
            _ => None,
        })
    }
}
