//! Core algorithms for scheduling in full-duplex (FD) NOMA small-cell networks.
//!
//! The crate models a TDD network of small-cell base stations (SBSs) that can
//! serve uplink and downlink traffic in half-duplex OMA, half-duplex NOMA, or
//! full-duplex mode, and implements the three cooperating decision layers:
//!
//! * drift-plus-penalty traffic/virtual queue bookkeeping ([`queues`]),
//! * a many-to-one user–SBS matching game with inter-cell interference
//!   learning for association and mode selection ([`matching`]),
//! * an iterative convex-concave power optimizer for the scheduled links
//!   ([`power`]).
//!
//! [`sim`] ties everything together into a per-subframe simulation loop with
//! packet-level accounting, and [`baselines`] provides reference schedulers
//! (round-robin HD-OMA, threshold-paired HD-NOMA and FD-OMA, and an
//! uncoordinated fixed-power variant of the matched scheme).
//!
//! The crate is `no_std`-compatible (requires `alloc`); all I/O, file formats
//! and the CLI live in the companion `fdnoma-sim` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(any(feature = "std", test))]
extern crate std;

pub mod baselines;
pub mod config;
pub mod math;
pub mod matching;
pub mod phy;
pub mod power;
pub mod queues;
pub mod rng;
pub mod sim;
pub mod topology;

pub use config::{ConfigError, ScenarioConfig};
pub use matching::{LearnedInterference, MatchingOutcome, PreferenceProfile};
pub use phy::{Assignment, InterferenceBreakdown, PowerAllocation, TransmissionMode};
pub use queues::{ArrivalProcess, QueueState};
pub use sim::{ExperimentReport, SubframeMetrics};
pub use topology::{LinkKind, NetworkTopology};
