//! Deterministic discrete-event simulation of ranging pairs and attackers.

pub mod engine;
pub mod scenario;
pub mod trace;

pub use engine::{ranging_packet_us, run, run_session, run_with_table, Engine, MESSAGE_BYTES};
pub use scenario::{AttackerMode, AttackerSpec, NodeSpec, PairSpec, Scenario, SCHEMA_VERSION};
pub use trace::{summarize, PairSummary, Summary, Trace, TraceEvent};
