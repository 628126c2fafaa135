//! Round-based simulator and verification suite for distributed
//! deferred-acceptance matching under one-sided common preferences.
//!
//! The library has five parts:
//!
//! - [`instance`]: matching instances (bipartite client/provider graphs with
//!   preference orders, a common score function, and optional exact rational
//!   loads), generators and file serialization;
//! - [`engine`]: a synchronous message-passing executor with per-message bit
//!   accounting for CONGEST audits;
//! - [`tiebreak`]: conflict-graph construction and four distributed coloring
//!   routines that turn tied common preferences into strict per-provider
//!   orders;
//! - [`matching`]: the deferred-acceptance node programs (classic baseline,
//!   common-preference fast variant, fractional batch proposals) and the
//!   end-to-end three-phase mechanism;
//! - [`verify`]: ground-truth oracles (blocking-pair scans, exhaustive
//!   enumeration, serial dictatorship), incentive-compatibility harnesses,
//!   and fairness measurement.
//!
//! Every randomized routine takes an explicit seed; rerunning with equal
//! arguments reproduces results bit for bit. See the `examples/` directory
//! for one runnable walkthrough per capability.

pub mod engine;
pub mod instance;
pub mod matching;
pub mod rational;
pub mod tiebreak;
pub mod verify;

pub use instance::{ClientId, MatchingInstance, ProviderId};
pub use rational::Ratio;

/// Derives the seed of the `index`-th repetition of a seeded sweep.
/// A fixed odd-multiplier mix keeps the derived streams well separated.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut x = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}
