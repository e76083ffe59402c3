//! Reproducible randomness.
//!
//! All randomness in a run flows from a single `u64` seed. Each consumer
//! (a device voting on a transaction, an oracle submitting on a claim, the
//! committee draw for a claim, ...) gets its own independent stream, derived
//! by hashing the run seed together with a domain label and the identifiers
//! involved. Streams therefore do not depend on evaluation order, which is
//! what lets parallel and serial execution produce identical results.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest as _, Sha256};

use crate::rational::Rational;

/// Derives an independent random stream from the run seed, a domain label
/// and any number of identifying byte strings.
///
/// The seed material is length-prefixed before hashing so that distinct
/// `(domain, parts)` tuples can never collide by concatenation.
pub fn derive_rng(run_seed: u64, domain: &str, parts: &[&[u8]]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_be_bytes());
    hasher.update((domain.len() as u32).to_be_bytes());
    hasher.update(domain.as_bytes());
    for part in parts {
        hasher.update((part.len() as u32).to_be_bytes());
        hasher.update(part);
    }
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

/// Draws `true` with probability `p`, consuming exactly one `u64` from the
/// stream.
///
/// The comparison is exact up to a quantisation of 2^-64: the draw is `true`
/// iff the sampled word falls below `floor(p * 2^64)`. Values of `p` outside
/// `[0, 1]` are clamped.
pub fn draw_with_probability(rng: &mut impl RngCore, p: &Rational) -> bool {
    let word = rng.next_u64();
    if p.is_negative() || p.is_zero() {
        return false;
    }
    if *p >= Rational::one() {
        return true;
    }
    let two64 = BigInt::one() << 64u32;
    let threshold = (p.numer() * &two64) / p.denom();
    let threshold = threshold.to_u128().expect("p in (0,1) scales below 2^64");
    u128::from(word) < threshold
}
