//! Receive pipeline: NCC channel impulse response estimation, dual-threshold
//! detection, field-by-field verification and first-path timestamping.

pub mod cir;
pub mod pipeline;
pub mod predict;

pub use cir::{first_peak, jam_attenuation_factor, ncc_cir, ncc_cir_periodic, ncc_cir_reference, CirEstimate};
pub use pipeline::{receive_packet, DetectionThresholds, RxKind, RxOutcome, RxRecord, RxSettings, RxSuccess};
pub use predict::predict_outcome;

pub use crate::channel::cross_channel_isolation;
