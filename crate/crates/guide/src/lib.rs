//! The chapters of `book/` as modules, so `cargo test --doc` runs every
//! listing against the current library.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/packets.md")]
pub mod packets {}
#[doc = include_str!("../../../book/src/ncc.md")]
pub mod ncc {}
#[doc = include_str!("../../../book/src/ranging.md")]
pub mod ranging {}
#[doc = include_str!("../../../book/src/sniffing.md")]
pub mod sniffing {}
#[doc = include_str!("../../../book/src/timing.md")]
pub mod timing {}
#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/countermeasure.md")]
pub mod countermeasure {}
