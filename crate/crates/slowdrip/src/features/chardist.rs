//! Unigram character distributions and the Jensen-Shannon distance.
//!
//! Attack-name prefixes are summarized as probability distributions over
//! characters — either of every character (`Overall`) or of just the first
//! character of each prefix (`Char0`), which in practice separates
//! generator families far more sharply. Distributions are compared with
//! the Jensen-Shannon *distance* (the square root of the divergence,
//! base-2 logs), a proper metric on [0, 1].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Which characters of each prefix are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionMode {
    /// Every character of every prefix.
    Overall,
    /// Only the first character of each prefix.
    Char0,
}

/// A probability distribution over characters.
///
/// `alphabet` is sorted and unique; `probs[i]` is the probability of
/// `alphabet[i]`; `support_count` is the number of items counted
/// (prefixes for `Char0`, characters for `Overall`; zero for analytic
/// distributions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharDistribution<T> {
    pub alphabet: Vec<char>,
    pub probs: Vec<T>,
    pub support_count: usize,
}

impl<T: Real> CharDistribution<T> {
    /// Probability of one character (zero when absent from the alphabet).
    pub fn prob(&self, c: char) -> T {
        match self.alphabet.binary_search(&c) {
            Ok(i) => self.probs[i],
            Err(_) => T::zero(),
        }
    }

    /// Checks structural invariants: matching lengths, sorted unique
    /// alphabet, non-negative probabilities summing to 1 within 1e-9.
    pub fn validate(&self) -> Result<()> {
        if self.alphabet.len() != self.probs.len() {
            return Err(Error::invalid(
                "distribution",
                format!(
                    "alphabet has {} entries but probs has {}",
                    self.alphabet.len(),
                    self.probs.len()
                ),
            ));
        }
        if self.alphabet.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("distribution", "alphabet not sorted/unique"));
        }
        if self.probs.iter().any(|p| *p < T::zero() || !p.is_finite()) {
            return Err(Error::invalid("distribution", "negative or non-finite probability"));
        }
        let sum = self.probs.iter().copied().sum::<T>().as_f64();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "distribution",
                format!("probabilities sum to {sum}, expected 1"),
            ));
        }
        Ok(())
    }
}

/// Builds a character distribution from a set of prefixes.
///
/// Empty prefixes are dropped first. The result's alphabet is the sorted
/// union of `alphabet` and every observed character, so callers may pass a
/// broader working alphabet (unseen characters get probability zero) or an
/// empty one to use exactly the observed characters.
///
/// Fails with [`Error::EmptySample`] when nothing remains to count.
pub fn char_distribution<T: Real>(
    prefixes: impl IntoIterator<Item = impl AsRef<str>>,
    mode: DistributionMode,
    alphabet: &[char],
) -> Result<CharDistribution<T>> {
    let mut counts: BTreeMap<char, u64> = alphabet.iter().map(|&c| (c, 0)).collect();
    let mut total = 0usize;
    for prefix in prefixes {
        let prefix = prefix.as_ref();
        match mode {
            DistributionMode::Char0 => {
                if let Some(c) = prefix.chars().next() {
                    *counts.entry(c).or_insert(0) += 1;
                    total += 1;
                }
            }
            DistributionMode::Overall => {
                for c in prefix.chars() {
                    *counts.entry(c).or_insert(0) += 1;
                    total += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptySample(
            "no non-empty prefixes to build a character distribution from".into(),
        ));
    }
    let denom = T::of_usize(total);
    let (alphabet, probs) = counts
        .into_iter()
        .map(|(c, n)| (c, T::of_usize(n as usize) / denom))
        .unzip();
    Ok(CharDistribution {
        alphabet,
        probs,
        support_count: total,
    })
}

/// The analytic uniform distribution over an alphabet.
pub fn uniform_distribution<T: Real>(alphabet: &[char]) -> CharDistribution<T> {
    let mut alphabet: Vec<char> = alphabet.to_vec();
    alphabet.sort_unstable();
    alphabet.dedup();
    let p = T::one() / T::of_usize(alphabet.len().max(1));
    let probs = vec![p; alphabet.len()];
    CharDistribution {
        alphabet,
        probs,
        support_count: 0,
    }
}

/// Jensen-Shannon distance between two distributions: the square root of
/// the base-2 Jensen-Shannon divergence, a metric with range [0, 1].
///
/// Alphabets are aligned by union with zero padding, and `0·log 0` is
/// taken as 0, so distributions over different alphabets compare directly.
pub fn js_distance<T: Real>(p: &CharDistribution<T>, q: &CharDistribution<T>) -> T {
    let half = T::of_f64(0.5);
    let mut acc = T::zero();
    let (mut i, mut j) = (0, 0);
    while i < p.alphabet.len() || j < q.alphabet.len() {
        let (pa, qa) = match (p.alphabet.get(i), q.alphabet.get(j)) {
            (Some(&a), Some(&b)) if a == b => {
                let v = (p.probs[i], q.probs[j]);
                i += 1;
                j += 1;
                v
            }
            (Some(&a), Some(&b)) if a < b => {
                let v = (p.probs[i], T::zero());
                i += 1;
                v
            }
            (Some(_), Some(_)) | (None, Some(_)) => {
                let v = (T::zero(), q.probs[j]);
                j += 1;
                v
            }
            (Some(_), None) => {
                let v = (p.probs[i], T::zero());
                i += 1;
                v
            }
            (None, None) => unreachable!(),
        };
        let m = half * (pa + qa);
        // Per-character contribution is a commutative two-term sum, so the
        // whole accumulation is bitwise symmetric in (p, q).
        let mut term = T::zero();
        if pa > T::zero() {
            term = term + pa * (pa / m).log2();
        }
        if qa > T::zero() {
            term = term + qa * (qa / m).log2();
        }
        acc = acc + half * term;
    }
    // Clamp the tiny negative / >1 excursions floating point can produce.
    acc.max(T::zero()).min(T::one()).sqrt()
}
