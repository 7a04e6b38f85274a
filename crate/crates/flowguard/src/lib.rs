//! Cycle-level simulation framework for in-situ control-flow error
//! detection hardware.
//!
//! The crate simulates small synthesizable designs cycle by cycle and
//! attaches two kinds of lightweight online monitors to their control
//! signals:
//!
//! * **Petri-net monitors** ([`petri`]) encode expected orderings of
//!   control events as token games; a control event arriving while its
//!   transition is disabled flags a control-flow violation.
//! * **State-sequence checkers** ([`seqcheck`]) learn the set of observed
//!   consecutive state pairs from a fault-free run and flag any pair never
//!   seen during learning.
//!
//! Faults are injected with the [`fault`] engine (single register bit
//! flips or input-burst perturbations), campaign results are aggregated
//! into detection matrices, and [`analysis`] turns those matrices into
//! detection-rate/latency metrics, hardware-area estimates, and
//! area-constrained detector subset selections.
//!
//! Four built-in reference designs live in [`designs`]: a convolution
//! layer, a streaming Gaussian blur, an AES-128 core, and a 4x4 mesh
//! NoC router scenario.

pub mod analysis;
pub mod config;
pub mod designs;
pub mod error;
pub mod fault;
pub mod petri;
pub mod seqcheck;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
