//! Generator-fingerprinting features of one attack.
//!
//! Each detected attack is summarized by a bounded feature vector capturing
//! *how* its query names were generated rather than what they attacked:
//!
//! * `label_ratio` — uniqueness of the labels left of the attacked domain;
//! * `overlap_ratio` — how much of the label inventory comes from a known
//!   subdomain-enumeration dictionary;
//! * `qtype_<n>` — fraction of events per tracked query type;
//! * `active_min` — fraction of the day's minutes with above-median
//!   NXDOMAIN traffic (attack length proxy);
//! * `lex_ratio` — tendency of successive names to ascend lexicographically;
//! * `unigram_dist_*` — Jensen-Shannon distances between the attack's
//!   first-character distribution and each reference archetype, the
//!   analytic uniform last.
//!
//! All values land in [0, 1], so the downstream Euclidean clustering needs
//! no standardization. Name-based features use distinct-qname semantics;
//! frequency-based features (qtype, active minutes) use raw events.

mod chardist;
mod diagnostics;

pub use chardist::{char_distribution, js_distance, uniform_distribution, CharDistribution, DistributionMode};
pub use diagnostics::{diagnostics, DiagnosticBundle, PrefixLengthPoint, QtypeMinutePoint};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archetype::ArchetypeSet;
use crate::detector::{quantile_sorted, AttackRecord};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::pdns::{parse_fqdn, ParsedName, SuffixSet};

/// Query types tracked by default: A, CNAME, PTR, TXT, AAAA, SRV.
pub const DEFAULT_TRACKED_QTYPES: [u16; 6] = [1, 5, 12, 16, 28, 33];

/// Minutes in a day; the `active_min` scale factor.
pub const MINUTES_PER_DAY: usize = 1440;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Feature-extraction tuning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureConfig {
    /// Query types receiving a fraction column, in column order.
    pub tracked_qtypes: Vec<u16>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            tracked_qtypes: DEFAULT_TRACKED_QTYPES.to_vec(),
        }
    }
}

/// The clustering representation of one attack. Field order here is the
/// canonical column order of [`FeatureVector::to_vec`] and the feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    pub label_ratio: T,
    pub overlap_ratio: T,
    /// One fraction per tracked query type.
    pub qtype_fracs: Vec<T>,
    /// Active minutes scaled by 1/1440.
    pub active_min: T,
    pub lex_ratio: T,
    /// Jensen-Shannon distance to each archetype distribution, uniform last.
    pub unigram_dists: Vec<T>,
}

impl<T: Real> FeatureVector<T> {
    /// Flattens into the canonical column order.
    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.label_ratio);
        v.push(self.overlap_ratio);
        v.extend_from_slice(&self.qtype_fracs);
        v.push(self.active_min);
        v.push(self.lex_ratio);
        v.extend_from_slice(&self.unigram_dists);
        v
    }

    /// Number of scalar entries.
    pub fn len(&self) -> usize {
        4 + self.qtype_fracs.len() + self.unigram_dists.len()
    }

    /// Always false: a vector has at least the four scalar features.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Column names matching [`FeatureVector::to_vec`] for a given tracked
    /// qtype set and archetype-distribution count (members + uniform).
    pub fn column_names(tracked_qtypes: &[u16], n_dists: usize) -> Vec<String> {
        let mut names = vec!["label_ratio".to_string(), "overlap_ratio".to_string()];
        names.extend(tracked_qtypes.iter().map(|q| format!("qtype_{q}")));
        names.push("active_min".to_string());
        names.push("lex_ratio".to_string());
        for i in 1..n_dists.max(1) {
            names.push(format!("unigram_dist_{i}"));
        }
        names.push("unigram_dist_uniform".to_string());
        names
    }

    /// Checks the vector contract: everything finite and in [0, 1], tracked
    /// qtype fractions summing to at most 1 (plus rounding slack).
    pub fn validate(&self) -> Result<()> {
        let all = self.to_vec();
        if all
            .iter()
            .any(|v| !v.is_finite() || *v < T::zero() || *v > T::one())
        {
            return Err(Error::invalid("features", "value outside [0,1]"));
        }
        let qtype_sum = self.qtype_fracs.iter().copied().sum::<T>().as_f64();
        if qtype_sum > 1.0 + 1e-9 {
            return Err(Error::invalid(
                "features",
                format!("qtype fractions sum to {qtype_sum}"),
            ));
        }
        Ok(())
    }
}

/// A subdomain-enumeration dictionary: lowercase labels, one per line.
#[derive(Debug, Clone)]
pub struct Dictionary {
    words: HashSet<String>,
}

impl Dictionary {
    /// Loads a dictionary file: one word per line, trimmed, lowercased;
    /// blank lines and `#` comments skipped. Empty dictionaries are a
    /// configuration error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        Self::from_words(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase),
        )
    }

    /// Builds a dictionary from an iterator of words.
    pub fn from_words(words: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        let words: HashSet<String> = words.into_iter().map(Into::into).collect();
        if words.is_empty() {
            return Err(Error::invalid("dictionary", "no words loaded"));
        }
        Ok(Dictionary { words })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Shared decomposition helpers
// ---------------------------------------------------------------------------

/// Parses each distinct qname of the attack once, in sorted qname order.
fn parse_unique(attack: &AttackRecord, suffixes: &SuffixSet) -> Result<Vec<ParsedName>> {
    let unique: BTreeSet<&str> = attack.events.iter().map(|e| e.qname.as_str()).collect();
    unique
        .into_iter()
        .map(|qname| parse_fqdn(qname, suffixes))
        .collect()
}

/// Distinct labels left of the SLD across unique qnames, plus the total
/// number of label occurrences.
pub fn label_inventory(
    attack: &AttackRecord,
    suffixes: &SuffixSet,
) -> Result<(BTreeSet<String>, usize)> {
    let mut distinct = BTreeSet::new();
    let mut occurrences = 0usize;
    for parsed in parse_unique(attack, suffixes)? {
        let depth = crate::pdns::label_depth(&parsed);
        for label in &parsed.labels[..depth] {
            distinct.insert(label.clone());
            occurrences += 1;
        }
    }
    Ok((distinct, occurrences))
}

/// The distinct non-empty prefixes (leftmost labels) of the attack.
pub fn attack_prefixes(attack: &AttackRecord, suffixes: &SuffixSet) -> Result<BTreeSet<String>> {
    Ok(parse_unique(attack, suffixes)?
        .into_iter()
        .filter(|p| !p.prefix.is_empty())
        .map(|p| p.prefix)
        .collect())
}

// ---------------------------------------------------------------------------
// Individual features
// ---------------------------------------------------------------------------

/// Share of distinct labels among all label occurrences left of the SLD,
/// in (0, 1]. An attack with no such labels (bare-domain queries only) has
/// no defined ratio; it records 1.0 with a warning.
pub fn label_ratio<T: Real>(attack: &AttackRecord, suffixes: &SuffixSet) -> Result<T> {
    let (distinct, occurrences) = label_inventory(attack, suffixes)?;
    if occurrences == 0 {
        log::warn!(
            "attack {} {}: no labels left of the SLD; label_ratio defaults to 1.0",
            attack.sld,
            attack.date
        );
        return Ok(T::one());
    }
    Ok(T::of_usize(distinct.len()) / T::of_usize(occurrences))
}

/// Fraction of the attack's distinct labels found in the dictionary.
/// With no labels at all the overlap records 0.0 with a warning.
pub fn overlap_ratio<T: Real>(
    attack: &AttackRecord,
    suffixes: &SuffixSet,
    dictionary: &Dictionary,
) -> Result<T> {
    let (distinct, _) = label_inventory(attack, suffixes)?;
    if distinct.is_empty() {
        log::warn!(
            "attack {} {}: no labels to intersect; overlap_ratio defaults to 0.0",
            attack.sld,
            attack.date
        );
        return Ok(T::zero());
    }
    let hits = distinct.iter().filter(|l| dictionary.contains(l)).count();
    Ok(T::of_usize(hits) / T::of_usize(distinct.len()))
}

/// Fraction of events per tracked query type. Untracked types contribute
/// to the denominator only, so the fractions sum to at most 1.
pub fn qtype_fractions<T: Real>(attack: &AttackRecord, tracked: &[u16]) -> Vec<T> {
    let mut counts: BTreeMap<u16, usize> = tracked.iter().map(|&q| (q, 0)).collect();
    for event in &attack.events {
        if let Some(c) = counts.get_mut(&event.qtype) {
            *c += 1;
        }
    }
    let total = T::of_usize(attack.events.len().max(1));
    tracked
        .iter()
        .map(|q| T::of_usize(counts[q]) / total)
        .collect()
}

/// Number of UTC minutes in which the attack-day NXDOMAIN count strictly
/// exceeds the median over all 1440 zero-filled minute buckets.
pub fn active_minutes(attack: &AttackRecord) -> u32 {
    let mut buckets = [0u32; MINUTES_PER_DAY];
    for event in &attack.events {
        if event.rcode == 3 && event.date() == attack.date {
            buckets[event.minute_of_day() as usize % MINUTES_PER_DAY] += 1;
        }
    }
    let mut sorted: Vec<f64> = buckets.iter().map(|&b| b as f64).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = quantile_sorted(&sorted, 0.5);
    buckets.iter().filter(|&&b| b as f64 > median).count() as u32
}

/// Approximate lexicographic-ordering tendency of the attack stream.
///
/// For every suffix (qname minus its leftmost label) the stream is sampled
/// down to the first event per second; within each suffix's sample series
/// the fraction of consecutive pairs in non-descending qname order
/// (bytewise, ties in order) is computed, and the unweighted mean over
/// suffixes with at least two samples is returned. When no suffix
/// qualifies the ratio is undefined and records 0.5 with a warning.
pub fn lex_ratio<T: Real>(attack: &AttackRecord, suffixes: &SuffixSet) -> Result<T> {
    // suffix of every distinct qname, parsed once
    let mut suffix_of: HashMap<&str, String> = HashMap::new();
    for event in &attack.events {
        if !suffix_of.contains_key(event.qname.as_str()) {
            let parsed = parse_fqdn(&event.qname, suffixes)?;
            suffix_of.insert(event.qname.as_str(), parsed.suffix);
        }
    }
    // first event per (suffix, second), in stream order
    let mut samples: BTreeMap<(&str, i64), &str> = BTreeMap::new();
    for event in &attack.events {
        let suffix = suffix_of[event.qname.as_str()].as_str();
        samples
            .entry((suffix, event.timestamp))
            .or_insert(event.qname.as_str());
    }
    // consecutive-pair order statistics per suffix (map order groups them)
    let mut ratios: Vec<T> = Vec::new();
    let mut current_suffix: Option<&str> = None;
    let mut last_qname = "";
    let mut ordered = 0usize;
    let mut pairs = 0usize;
    for (&(suffix, _), &qname) in &samples {
        if current_suffix == Some(suffix) {
            ordered += usize::from(qname >= last_qname);
            pairs += 1;
        } else {
            if pairs > 0 {
                ratios.push(T::of_usize(ordered) / T::of_usize(pairs));
            }
            current_suffix = Some(suffix);
            ordered = 0;
            pairs = 0;
        }
        last_qname = qname;
    }
    if pairs > 0 {
        ratios.push(T::of_usize(ordered) / T::of_usize(pairs));
    }
    if ratios.is_empty() {
        log::warn!(
            "attack {} {}: no suffix sampled twice; lex_ratio defaults to 0.5",
            attack.sld,
            attack.date
        );
        return Ok(T::of_f64(0.5));
    }
    Ok(ratios.iter().copied().sum::<T>() / T::of_usize(ratios.len()))
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Computes the full feature vector of one attack against a frozen
/// archetype set and dictionary.
///
/// An attack whose queries never carry a prefix exhibits no generator
/// signal; its unigram distances record the maximal 1.0 with a warning
/// (label and overlap ratios fall back as documented on their functions).
pub fn feature_vector<T: Real>(
    attack: &AttackRecord,
    suffixes: &SuffixSet,
    archetypes: &ArchetypeSet<T>,
    dictionary: &Dictionary,
    config: &FeatureConfig,
) -> Result<FeatureVector<T>> {
    if attack.events.is_empty() {
        return Err(Error::EmptySample(format!(
            "attack {} {} has no events",
            attack.sld, attack.date
        )));
    }
    let prefixes = attack_prefixes(attack, suffixes)?;
    let unigram_dists: Vec<T> = if prefixes.is_empty() {
        log::warn!(
            "attack {} {}: no prefixes; unigram distances default to 1.0",
            attack.sld,
            attack.date
        );
        archetypes.distributions().map(|_| T::one()).collect()
    } else {
        let dist = char_distribution::<T>(&prefixes, DistributionMode::Char0, &archetypes.alphabet)?;
        archetypes
            .distributions()
            .map(|d| js_distance(&dist, d))
            .collect()
    };
    let clamp = |v: T| v.max(T::zero()).min(T::one());
    let vector = FeatureVector {
        label_ratio: clamp(label_ratio(attack, suffixes)?),
        overlap_ratio: clamp(overlap_ratio(attack, suffixes, dictionary)?),
        qtype_fracs: qtype_fractions::<T>(attack, &config.tracked_qtypes)
            .into_iter()
            .map(clamp)
            .collect(),
        active_min: clamp(T::of_usize(active_minutes(attack) as usize) / T::of_usize(MINUTES_PER_DAY)),
        lex_ratio: clamp(lex_ratio(attack, suffixes)?),
        unigram_dists: unigram_dists.into_iter().map(clamp).collect(),
    };
    vector.validate()?;
    Ok(vector)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdns::PdnsEvent;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;

    const DAY: i64 = 1533081600; // 2018-08-01 UTC

    fn suffix_set() -> SuffixSet {
        SuffixSet::parse("com\nnet\norg\n")
    }

    fn attack_from(qnames: &[(&str, i64, u16, u8)]) -> AttackRecord {
        let events = qnames
            .iter()
            .map(|&(q, dt, qtype, rcode)| PdnsEvent::new(DAY + dt, q, qtype, rcode, "srcA").unwrap())
            .collect();
        AttackRecord {
            sld: "t.com".into(),
            date: NaiveDate::from_ymd_opt(2018, 8, 1).unwrap(),
            source: "srcA".into(),
            stage1_count: 0,
            stage2_delta: 0,
            events,
        }
    }

    fn nx(q: &str, dt: i64) -> (&str, i64, u16, u8) {
        (q, dt, 1, 3)
    }

    #[test]
    fn label_ratio_counts_occurrences_across_unique_qnames() {
        // labels left of SLD: [a, b] + [c] + [a] = 4 occurrences, 3 distinct
        let attack = attack_from(&[nx("a.b.t.com", 0), nx("c.t.com", 1), nx("a.t.com", 2)]);
        let r: f64 = label_ratio(&attack, &suffix_set()).unwrap();
        assert_eq!(r, 0.75);
    }

    #[test]
    fn label_ratio_poles() {
        let distinct = attack_from(&[nx("x.t.com", 0), nx("y.t.com", 1), nx("z.t.com", 2)]);
        assert_eq!(label_ratio::<f64>(&distinct, &suffix_set()).unwrap(), 1.0);

        // one label in 3 positions across unique names -> 1/3
        let repeated = attack_from(&[nx("w.t.com", 0), nx("w.w.t.com", 1)]);
        assert_abs_diff_eq!(
            label_ratio::<f64>(&repeated, &suffix_set()).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );

        // duplicates of the same qname do not add occurrences
        let dup = attack_from(&[nx("x.t.com", 0), nx("x.t.com", 5), nx("y.t.com", 1)]);
        assert_eq!(label_ratio::<f64>(&dup, &suffix_set()).unwrap(), 1.0);
    }

    #[test]
    fn label_ratio_without_labels_defaults_to_one() {
        let bare = attack_from(&[nx("t.com", 0)]);
        assert_eq!(label_ratio::<f64>(&bare, &suffix_set()).unwrap(), 1.0);
    }

    #[test]
    fn overlap_ratio_intersects_distinct_labels() {
        let dict = Dictionary::from_words(["www", "mail", "ftp"]).unwrap();
        let attack = attack_from(&[nx("www.t.com", 0), nx("mail.t.com", 1), nx("xyzzy.t.com", 2)]);
        let r: f64 = overlap_ratio(&attack, &suffix_set(), &dict).unwrap();
        assert_abs_diff_eq!(r, 2.0 / 3.0, epsilon = 1e-15);

        let all_hit = attack_from(&[nx("www.t.com", 0), nx("mail.www.t.com", 1)]);
        assert_eq!(overlap_ratio::<f64>(&all_hit, &suffix_set(), &dict).unwrap(), 1.0);
    }

    #[test]
    fn empty_dictionary_is_a_config_error() {
        assert!(Dictionary::from_words(Vec::<String>::new()).is_err());
    }

    #[test]
    fn qtype_fractions_track_the_configured_types() {
        let attack = attack_from(&[
            ("a.t.com", 0, 1, 3),
            ("b.t.com", 1, 1, 3),
            ("c.t.com", 2, 1, 3),
            ("d.t.com", 3, 28, 3),
        ]);
        let fracs: Vec<f64> = qtype_fractions(&attack, &DEFAULT_TRACKED_QTYPES);
        assert_eq!(fracs, [0.75, 0.0, 0.0, 0.0, 0.25, 0.0]);
    }

    #[test]
    fn untracked_types_dilute_the_fractions() {
        let attack = attack_from(&[
            ("a.t.com", 0, 1, 3),
            ("b.t.com", 1, 255, 3),
            ("c.t.com", 2, 255, 3),
            ("d.t.com", 3, 1, 3),
        ]);
        let fracs: Vec<f64> = qtype_fractions(&attack, &DEFAULT_TRACKED_QTYPES);
        assert_eq!(fracs.iter().sum::<f64>(), 0.5);
    }

    #[test]
    fn active_minutes_spike_and_constant_cases() {
        // 100 events inside one minute, nothing else: median 0, one active minute
        let spike: Vec<(String, i64)> = (0..100).map(|i| (format!("q{i}.t.com"), 600 + i % 60)).collect();
        let spike_attack = attack_from(
            &spike
                .iter()
                .map(|(q, dt)| (q.as_str(), *dt, 1u16, 3u8))
                .collect::<Vec<_>>(),
        );
        assert_eq!(active_minutes(&spike_attack), 1);

        // one event every minute of the day: median 1, nothing strictly above
        let constant: Vec<(String, i64)> =
            (0..1440).map(|m| (format!("q{m}.t.com"), m * 60)).collect();
        let constant_attack = attack_from(
            &constant
                .iter()
                .map(|(q, dt)| (q.as_str(), *dt, 1u16, 3u8))
                .collect::<Vec<_>>(),
        );
        assert_eq!(active_minutes(&constant_attack), 0);
    }

    #[test]
    fn active_minutes_ignores_resolved_and_foreign_day_events() {
        let attack = attack_from(&[
            ("a.t.com", 0, 1, 3),
            ("b.t.com", 1, 1, 0),          // resolved: not counted
            ("c.t.com", 86400 + 2, 1, 3),  // next day: not counted
        ]);
        assert_eq!(active_minutes(&attack), 1);
    }

    #[test]
    fn lex_ratio_poles_and_ties() {
        let asc = attack_from(&[nx("a.t.com", 0), nx("b.t.com", 1), nx("c.t.com", 2)]);
        assert_eq!(lex_ratio::<f64>(&asc, &suffix_set()).unwrap(), 1.0);

        let desc = attack_from(&[nx("c.t.com", 0), nx("b.t.com", 1), nx("a.t.com", 2)]);
        assert_eq!(lex_ratio::<f64>(&desc, &suffix_set()).unwrap(), 0.0);

        // same name resampled across seconds: ties count as in order
        let tie = attack_from(&[nx("a.t.com", 0), nx("a.t.com", 1)]);
        assert_eq!(lex_ratio::<f64>(&tie, &suffix_set()).unwrap(), 1.0);
    }

    #[test]
    fn lex_ratio_samples_first_event_per_suffix_second() {
        // second 0 carries (a, z): only 'a' (first observed) is sampled,
        // so the series is a -> b: ascending.
        let attack = attack_from(&[nx("a.t.com", 0), nx("z.t.com", 0), nx("b.t.com", 1)]);
        assert_eq!(lex_ratio::<f64>(&attack, &suffix_set()).unwrap(), 1.0);
    }

    #[test]
    fn lex_ratio_averages_over_suffixes_unweighted() {
        // suffix x.t.com ascends (ratio 1.0 over 3 pairs);
        // suffix y.t.com descends (ratio 0.0 over 1 pair); mean 0.5
        let attack = attack_from(&[
            nx("a.x.t.com", 0),
            nx("b.x.t.com", 1),
            nx("c.x.t.com", 2),
            nx("d.x.t.com", 3),
            nx("q.y.t.com", 0),
            nx("p.y.t.com", 1),
        ]);
        assert_eq!(lex_ratio::<f64>(&attack, &suffix_set()).unwrap(), 0.5);
    }

    #[test]
    fn lex_ratio_excludes_single_sample_suffixes() {
        // y.t.com has one sample: ignored, not averaged as 1.0 or 0.0
        let attack = attack_from(&[
            nx("b.x.t.com", 0),
            nx("a.x.t.com", 1),
            nx("solo.y.t.com", 5),
        ]);
        assert_eq!(lex_ratio::<f64>(&attack, &suffix_set()).unwrap(), 0.0);
    }

    #[test]
    fn lex_ratio_undefined_defaults_to_half() {
        let attack = attack_from(&[nx("only.t.com", 0)]);
        assert_eq!(lex_ratio::<f64>(&attack, &suffix_set()).unwrap(), 0.5);
    }

    #[test]
    fn column_names_match_vector_layout() {
        let names = FeatureVector::<f64>::column_names(&DEFAULT_TRACKED_QTYPES, 9);
        assert_eq!(names.len(), 19);
        assert_eq!(names[0], "label_ratio");
        assert_eq!(names[2], "qtype_1");
        assert_eq!(names[7], "qtype_33");
        assert_eq!(names[8], "active_min");
        assert_eq!(names[10], "unigram_dist_1");
        assert_eq!(names[18], "unigram_dist_uniform");
    }

    #[test]
    fn dictionary_load_normalizes() {
        let path = std::env::temp_dir().join(format!("slowdrip-dict-{}", std::process::id()));
        std::fs::write(&path, "# comment\nWWW\n  mail  \n\nftp\n").unwrap();
        let dict = Dictionary::load(&path).unwrap();
        assert_eq!(dict.len(), 3);
        assert!(dict.contains("www"));
        assert!(dict.contains("mail"));
        std::fs::remove_file(path).unwrap();
    }
}
