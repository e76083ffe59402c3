//! Core library for a deterministic sharded-verification ledger simulator.
//!
//! The library is organised bottom-up:
//!
//! - [`rational`] — exact rational arithmetic helpers (all protocol math is
//!   integer/rational; floating point never touches a consensus decision),
//! - [`rng`] — reproducible random streams derived from a run seed,
//! - [`ledger`] — hash-linked blocks, canonical serialization, chain validation,
//! - [`shard`] — payload partitioning, slave-device votes, per-cluster scoring,
//! - [`stake`] — deposits, escrow, reward splitting, penalties, conservation,
//! - [`oracle`] — committee selection, trust weights, claim aggregation,
//! - [`sim`] — the synchronous tick loop tying it all together, plus the
//!   event log and metrics derived from it.
//!
//! Everything here is deterministic: two runs with the same scenario produce
//! byte-identical event logs, metrics and chain dumps, regardless of whether
//! per-cluster evaluation is parallelised.

pub mod ledger;
pub mod oracle;
pub mod rational;
pub mod rng;
pub mod shard;
pub mod sim;
pub mod stake;

pub use rational::Rational;
