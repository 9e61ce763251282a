//! Synthesis and analysis toolkit for coordinated LQR with a
//! diagonal-plus-rank-one feedback structure.
//!
//! A group of identical agents, each with dynamics `(A, B)` and a local
//! quadratic cost, is coordinated through a linear constraint on its
//! mass-weighted center. The optimal feedback splits into a decentralized
//! gain plus a rank-one coordination correction driven by the averaged
//! state. This crate computes that structure, quantifies what coordination
//! costs each agent, sweeps soft and frequency-weighted relaxations of the
//! constraint, and verifies everything against a brute-force aggregate
//! reduction and time-domain simulation.

pub mod coordsynth;
pub mod ensemblelab;
mod error;
pub mod freqcoord;
pub mod numkit;
pub mod softcoord;

pub use error::{Error, Result};
pub use numkit::{Mat, Tolerances, Vector};
