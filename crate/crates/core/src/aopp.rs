//! Actively-odd-parity pairing (AOPP): pre-processing that trades raw key
//! length for a much lower bit-flip rate.
//!
//! Bob pairs one of his 0-bits with one of his 1-bits and announces the pair.
//! Alice keeps the pair only if her two bits also have odd parity; then both
//! keep the first bit. A kept bit is wrong only when both original bits were
//! wrong, so error rates fall roughly quadratically.
//!
//! Bit convention in Z windows: Alice's bit is 1 when she sent the signal,
//! Bob's bit is 0 when he sent the signal. A (vacuum, signal) or
//! (signal, vacuum) window is therefore always a matching bit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoy::N1Split;
use crate::error::{Error, Result};
use crate::model::{Source, TallyRecord};
use crate::stat::StatMode;

/// Sifted Z-window bits of both parties with simulation-truth annotations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawKeyPair {
    pub alice_bits: Vec<bool>,
    pub bob_bits: Vec<bool>,
    /// The bit came from a single photon sent by exactly one party.
    pub untagged_mask: Vec<bool>,
    /// The untagged bit would be wrong had it been measured in the
    /// conjugate basis. Meaningless where `untagged_mask` is false.
    pub phase_flip_mask: Vec<bool>,
}

impl RawKeyPair {
    pub fn len(&self) -> usize {
        self.bob_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bob_bits.is_empty()
    }

    pub fn violations(&self) -> Vec<String> {
        let n = self.bob_bits.len();
        let mut v = Vec::new();
        for (name, len) in [
            ("alice_bits", self.alice_bits.len()),
            ("untagged_mask", self.untagged_mask.len()),
            ("phase_flip_mask", self.phase_flip_mask.len()),
        ] {
            if len != n {
                v.push(format!("{name} has length {len}, bob_bits has {n}"));
            }
        }
        v
    }

    pub fn error_count(&self) -> usize {
        self.alice_bits
            .iter()
            .zip(&self.bob_bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn untagged_count(&self) -> usize {
        self.untagged_mask.iter().filter(|&&u| u).count()
    }
}

/// Outcome of error rejection, measured or estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoppResult {
    pub kept_pairs: f64,
    pub n_t_post: f64,
    pub e_t_post: f64,
    pub n1_post: f64,
    pub e1ph_post: f64,
}

/// Randomly matches Bob's 0-bits with his 1-bits.
///
/// Each pair is `(lower index, higher index)`; pairs are listed by their
/// lower index. Surplus bits of the majority value are dropped.
pub fn pair_bits(bob_bits: &[bool], seed: u64) -> Vec<(usize, usize)> {
    let mut zeros: Vec<usize> = Vec::new();
    let mut ones: Vec<usize> = Vec::new();
    for (i, &b) in bob_bits.iter().enumerate() {
        if b {
            ones.push(i);
        } else {
            zeros.push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    zeros.shuffle(&mut rng);
    ones.shuffle(&mut rng);
    let mut pairs: Vec<(usize, usize)> = zeros.iter().zip(&ones).map(|(&z, &o)| (z.min(o), z.max(o))).collect();
    pairs.sort_unstable();
    pairs
}

/// Runs the parity check on a pairing and returns the counts together with
/// the surviving keys.
pub fn apply_aopp(keys: &RawKeyPair, pairing: &[(usize, usize)]) -> Result<(AoppResult, RawKeyPair)> {
    let bad = keys.violations();
    if !bad.is_empty() {
        return Err(Error::Structural(bad.join("; ")));
    }
    let n = keys.len();
    let mut out = RawKeyPair::default();
    let mut both_untagged = 0usize;
    let mut phase_errors = 0usize;
    for &(i, j) in pairing {
        if i >= n || j >= n {
            return Err(Error::Structural(format!(
                "pair ({i}, {j}) indexes past the key length {n}"
            )));
        }
        if keys.alice_bits[i] == keys.alice_bits[j] {
            continue;
        }
        let untagged = keys.untagged_mask[i] && keys.untagged_mask[j];
        let flip = keys.phase_flip_mask[i] ^ keys.phase_flip_mask[j];
        out.alice_bits.push(keys.alice_bits[i]);
        out.bob_bits.push(keys.bob_bits[i]);
        out.untagged_mask.push(untagged);
        out.phase_flip_mask.push(untagged && flip);
        if untagged {
            both_untagged += 1;
            phase_errors += flip as usize;
        }
    }
    let kept = out.len();
    let result = AoppResult {
        kept_pairs: kept as f64,
        n_t_post: kept as f64,
        e_t_post: ratio(out.error_count(), kept),
        n1_post: both_untagged as f64,
        e1ph_post: ratio(phase_errors, both_untagged),
    };
    Ok((result, out))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Pre-AOPP statistics the estimator needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoppInput {
    /// Bob's 0-bits (he sent the signal).
    pub zeros: f64,
    /// Bob's 1-bits (he sent vacuum).
    pub ones: f64,
    /// Bit-flip rate among Bob's 0-bits.
    pub e_zeros: f64,
    /// Bit-flip rate among Bob's 1-bits.
    pub e_ones: f64,
    /// Untagged bits; `bob` ones sit among the 0-bits, `alice` ones among
    /// the 1-bits.
    pub n1_pre: N1Split,
    pub e1ph_pre: f64,
}

impl AoppInput {
    /// Reads the bit-value split and error rates off a tally.
    pub fn from_tally(tally: &TallyRecord, n1_pre: N1Split, e1ph_pre: f64) -> Self {
        let (v, y) = (Source::Vacuum, Source::Signal);
        let zeros = (tally.detected(v, y) + tally.detected(y, y)) as f64;
        let ones = (tally.detected(y, v) + tally.detected(v, v)) as f64;
        AoppInput {
            zeros,
            ones,
            e_zeros: if zeros > 0.0 {
                tally.detected(y, y) as f64 / zeros
            } else {
                0.0
            },
            e_ones: if ones > 0.0 {
                tally.detected(v, v) as f64 / ones
            } else {
                0.0
            },
            n1_pre,
            e1ph_pre,
        }
    }

    /// Summary form: `n_t` bits split evenly with a common error rate.
    pub fn balanced(n_t: f64, e_t: f64, n1_pre: f64, e1ph_pre: f64) -> Self {
        AoppInput {
            zeros: n_t / 2.0,
            ones: n_t / 2.0,
            e_zeros: e_t,
            e_ones: e_t,
            n1_pre: N1Split::even(n1_pre),
            e1ph_pre,
        }
    }

    pub fn n_t(&self) -> f64 {
        self.zeros + self.ones
    }

    /// Overall bit-flip rate before pairing.
    pub fn e_t(&self) -> f64 {
        let n = self.n_t();
        if n > 0.0 {
            (self.zeros * self.e_zeros + self.ones * self.e_ones) / n
        } else {
            0.0
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [
            ("e_zeros", self.e_zeros),
            ("e_ones", self.e_ones),
            ("e1ph_pre", self.e1ph_pre),
        ] {
            if !(0.0..=1.0).contains(&x) {
                v.push(format!("{name} must lie in [0,1] (got {x})"));
            }
        }
        if !(self.zeros >= 0.0 && self.ones >= 0.0) {
            v.push("bit counts must be non-negative".into());
        }
        if self.n1_pre.bob > self.zeros * (1.0 + 1e-12) || self.n1_pre.alice > self.ones * (1.0 + 1e-12) {
            v.push(format!(
                "untagged bits ({}, {}) exceed the bit counts ({}, {})",
                self.n1_pre.bob, self.n1_pre.alice, self.zeros, self.ones
            ));
        }
        v
    }
}

/// Predicts the post-AOPP quantities from pre-AOPP statistics.
///
/// Pair survival follows from the per-class error rates; an untagged pair
/// needs both members untagged, drawn without replacement from their
/// classes. In finite mode `n1_post` is lowered and the phase-flip rate
/// raised twice: once for sampling the untagged pairs out of the pre-AOPP
/// population, once for the parity combination itself.
pub fn estimate_after_aopp(input: &AoppInput, mode: StatMode) -> Result<AoppResult> {
    let bad = input.violations();
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let g = input.zeros.min(input.ones).floor();
    let (e0, e1) = (input.e_zeros, input.e_ones);
    let survive = (1.0 - e0) * (1.0 - e1) + e0 * e1;
    let kept = g * survive;
    let e_t_post = if survive > 0.0 { e0 * e1 / survive } else { 0.0 };

    let n1_mean = if g > 0.0 {
        g * (input.n1_pre.bob / input.zeros) * (input.n1_pre.alice / input.ones)
    } else {
        0.0
    };
    if !(n1_mean > 0.0) {
        return Ok(AoppResult {
            kept_pairs: kept,
            n_t_post: kept,
            e_t_post,
            n1_post: 0.0,
            e1ph_post: 0.5,
        });
    }

    let e = input.e1ph_pre;
    let (n1_post, e1ph_post) = match mode {
        StatMode::MeanValue => (n1_mean, 2.0 * e * (1.0 - e)),
        StatMode::Finite(_) => {
            let sample = 2.0 * n1_mean;
            let e_sub = (mode.upper(e * sample) / sample).min(0.5);
            let combined = 2.0 * e_sub * (1.0 - e_sub);
            let e_post = (mode.upper(combined * n1_mean) / n1_mean).min(0.5);
            (mode.lower(n1_mean), e_post)
        }
    };
    Ok(AoppResult {
        kept_pairs: kept,
        n_t_post: kept,
        e_t_post,
        n1_post: n1_post.min(kept),
        e1ph_post,
    })
}
