//! Chip-resolution simulator of HRP ultra-wideband two-way ranging and of a
//! reactive jamming attack that targets the SYNC (preamble) field.
//!
//! The crate is organised bottom-up:
//!
//! * [`phy`] builds chip-rate waveforms for every packet field.
//! * [`channel`] propagates and superposes waveforms between positioned nodes.
//! * [`receiver`] runs the normalized cross-correlation receive pipeline and
//!   reports per-field error codes.
//! * [`ranging`] holds the SS/DS-TWR arithmetic, schedules and clock models.
//! * [`attacker`] implements staged configuration sniffing, interval
//!   measurement, attack-delay estimation and reactive jam scheduling.
//! * [`sim`] is the deterministic discrete-event engine tying it together.
//! * [`harness`] reproduces the experiment sweeps as CSV tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacker;
pub mod channel;
pub mod error;
pub mod harness;
pub mod phy;
pub mod ranging;
pub mod receiver;
pub mod sim;
pub mod time;

pub use error::{Error, Result};
