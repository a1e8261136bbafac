//! Chapters of the guide in `book/src`, compiled so that `cargo test --doc`
//! runs every Rust snippet in them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/state.md")]
pub mod state {}
#[doc = include_str!("../../../book/src/measurements.md")]
pub mod measurements {}
#[doc = include_str!("../../../book/src/propagation.md")]
pub mod propagation {}
#[doc = include_str!("../../../book/src/map-update.md")]
pub mod map_update {}
#[doc = include_str!("../../../book/src/selection.md")]
pub mod selection {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/running.md")]
pub mod running {}
