//! The reactive attacker: staged sniffing, interval measurement, attack
//! delay estimation and jam planning.

pub mod jam;
pub mod sniffer;
pub mod timing;

pub use jam::{AnchorTracker, JamAim, JamHardware, JamPlan};
pub use sniffer::{search_space_size, sniff_with_oracle, stage_sizes, staged_search_size, SniffLogEntry, SnifferState, Stage};
pub use timing::{
    attack_delay_us, classify_roles, compute_attack_delay, measure_intervals, TimingEstimate, DEFAULT_T_DELTA_US,
    T_DELTA_SIGMA_US,
};
