//! Two-stage slow-drip attack detector.
//!
//! Stage 1 flags, per source and day, the domains whose distinct
//! *unresolved* query-name count is an interquartile outlier across that
//! day's domain population. Stage 2 confirms a candidate only if its
//! distinct subdomain variety also jumped relative to the same source two
//! days earlier, judged by the same outlier rule applied to the signed
//! day-over-day deltas of every domain in the population. The intersection
//! of both stages becomes the attack set: stage 1 is cheap volume
//! screening, stage 2 rejects chronically noisy domains whose failure
//! volume is high every day.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{aggregate_day, AggregateMap, UnresolvedPolicy};
use crate::num::Real;
use crate::pdns::{PdnsEvent, SuffixSet};

/// Gap, in days, between the analyzed day and its variety baseline.
pub const BASELINE_GAP_DAYS: i64 = 2;

// ---------------------------------------------------------------------------
// Quartile statistics
// ---------------------------------------------------------------------------

/// Quartile summary of a sample, with the upper outlier threshold
/// `Q3 + 1.5·IQR` precomputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartileSummary<T> {
    pub q1: T,
    pub q3: T,
    pub iqr: T,
    pub threshold: T,
}

/// Linearly interpolated quantile of an ascending-sorted sample
/// (the "type 7" rule: index `h = (n-1)·p`, interpolate between the
/// neighbors of `h`).
pub fn quantile_sorted<T: Real>(sorted: &[T], p: f64) -> T {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = T::of_f64(h - h.floor());
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Computes Q1, Q3, IQR, and the outlier threshold over a sample of at
/// least [`DetectorConfig::DEFAULT_MIN_POPULATION`] values.
pub fn quartiles<T: Real>(values: &[T]) -> Result<QuartileSummary<T>> {
    if values.len() < DetectorConfig::DEFAULT_MIN_POPULATION {
        return Err(Error::InsufficientPopulation {
            need: DetectorConfig::DEFAULT_MIN_POPULATION,
            got: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(QuartileSummary {
        q1,
        q3,
        iqr,
        threshold: T::of_f64(1.5) * iqr + q3,
    })
}

// ---------------------------------------------------------------------------
// Detection stages
// ---------------------------------------------------------------------------

/// Stage 1: domains whose distinct unresolved-name count exceeds the
/// population's outlier threshold (strictly).
///
/// `counts` maps each domain in one (source, day) population to its
/// distinct unresolved qname count.
pub fn stage1_outliers(
    counts: &BTreeMap<String, u64>,
) -> Result<(BTreeSet<String>, QuartileSummary<f64>)> {
    let sample: Vec<f64> = counts.values().map(|&c| c as f64).collect();
    let summary = quartiles(&sample)?;
    let flagged = counts
        .iter()
        .filter(|(_, &c)| c as f64 > summary.threshold)
        .map(|(sld, _)| sld.clone())
        .collect();
    Ok((flagged, summary))
}

/// Stage 2: of the stage-1 candidates, keep those whose subdomain-variety
/// delta against the baseline day is itself an upper outlier among the
/// deltas of *all* domains present on the analyzed day.
///
/// Domains missing from the baseline contribute a baseline of zero, so
/// their delta is the full day-d variety. Deltas are signed; a domain
/// whose variety shrank pulls the quartiles down, it is never flagged.
///
/// Returns the confirmed set and every domain's delta.
pub fn stage2_outliers(
    candidates: &BTreeSet<String>,
    day: &BTreeMap<String, u64>,
    baseline: &BTreeMap<String, u64>,
) -> Result<(BTreeSet<String>, BTreeMap<String, i64>)> {
    let deltas: BTreeMap<String, i64> = day
        .iter()
        .map(|(sld, &count)| {
            let before = baseline.get(sld).copied().unwrap_or(0);
            (sld.clone(), count as i64 - before as i64)
        })
        .collect();
    let sample: Vec<f64> = deltas.values().map(|&d| d as f64).collect();
    let summary = quartiles(&sample)?;
    let confirmed = candidates
        .iter()
        .filter(|sld| {
            deltas
                .get(*sld)
                .is_some_and(|&d| d as f64 > summary.threshold)
        })
        .cloned()
        .collect();
    Ok((confirmed, deltas))
}

// ---------------------------------------------------------------------------
// Attack records
// ---------------------------------------------------------------------------

/// One detected attack: a (domain, day, source) triple with its detection
/// statistics and the day's raw events for that domain.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    pub sld: String,
    pub date: NaiveDate,
    pub source: String,
    /// Distinct unresolved qnames on the attack day (stage-1 signal).
    pub stage1_count: u64,
    /// Subdomain-variety delta against the baseline day (stage-2 signal).
    pub stage2_delta: i64,
    /// All of the day's events under the domain, canonically ordered.
    pub events: Vec<PdnsEvent>,
}

/// Detector tuning.
#[derive(Debug, Clone)]
pub struct DetectorConfig {
    /// What counts as "unresolved" for stage 1.
    pub policy: UnresolvedPolicy,
    /// Analyze this UTC date; default picks, per source, the date with the
    /// most aggregates (ties: earliest).
    pub target_date: Option<NaiveDate>,
    /// Smallest per-source population the quartile rule accepts.
    pub min_population: usize,
}

impl DetectorConfig {
    /// Quartiles over fewer than 4 values are meaningless.
    pub const DEFAULT_MIN_POPULATION: usize = 4;
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            policy: UnresolvedPolicy::default(),
            target_date: None,
            min_population: Self::DEFAULT_MIN_POPULATION,
        }
    }
}

fn population_counts(
    aggregates: &AggregateMap,
    source: &str,
    date: NaiveDate,
) -> (BTreeMap<String, u64>, BTreeMap<String, u64>) {
    let mut unresolved = BTreeMap::new();
    let mut variety = BTreeMap::new();
    for (key, agg) in aggregates {
        if key.source == source && key.date == date {
            unresolved.insert(key.sld.clone(), agg.unresolved_count() as u64);
            variety.insert(key.sld.clone(), agg.subdomain_count() as u64);
        }
    }
    (unresolved, variety)
}

/// Per source, the analyzed date: the configured one, or the date carrying
/// the most aggregates (ties broken toward the earlier date).
fn dominant_dates(aggregates: &AggregateMap, config: &DetectorConfig) -> BTreeMap<String, NaiveDate> {
    let mut per_source: BTreeMap<String, BTreeMap<NaiveDate, usize>> = BTreeMap::new();
    for key in aggregates.keys() {
        *per_source
            .entry(key.source.clone())
            .or_default()
            .entry(key.date)
            .or_default() += 1;
    }
    per_source
        .into_iter()
        .filter_map(|(source, by_date)| {
            if let Some(date) = config.target_date {
                return by_date.contains_key(&date).then_some((source, date));
            }
            let mut best: Option<(NaiveDate, usize)> = None;
            for (date, count) in by_date {
                if best.map_or(true, |(_, c)| count > c) {
                    best = Some((date, count));
                }
            }
            best.map(|(date, _)| (source, date))
        })
        .collect()
}

/// Runs both detection stages over a day of events plus the baseline day.
///
/// `day_events` should hold the traffic to analyze; `baseline_events` the
/// traffic from [`BASELINE_GAP_DAYS`] before it (extra days in either are
/// ignored). Thresholds are computed independently per source. Returns
/// attack records sorted by (source, date, sld).
///
/// Fails with [`Error::InsufficientPopulation`] when a source active on
/// the analyzed date has fewer distinct domains than `min_population`.
pub fn detect_attacks(
    day_events: Vec<PdnsEvent>,
    baseline_events: Vec<PdnsEvent>,
    suffixes: &SuffixSet,
    config: &DetectorConfig,
) -> Result<Vec<AttackRecord>> {
    let (mut day_aggs, _) = aggregate_day(day_events, suffixes, &config.policy);
    let (baseline_aggs, _) = aggregate_day(baseline_events, suffixes, &config.policy);

    let mut attacks = Vec::new();
    for (source, date) in dominant_dates(&day_aggs, config) {
        let (unresolved, variety) = population_counts(&day_aggs, &source, date);
        if unresolved.len() < config.min_population {
            return Err(Error::InsufficientPopulation {
                need: config.min_population,
                got: unresolved.len(),
            });
        }
        let baseline_date = date - chrono::Duration::days(BASELINE_GAP_DAYS);
        let (_, baseline_variety) = population_counts(&baseline_aggs, &source, baseline_date);

        let (candidates, stage1) = stage1_outliers(&unresolved)?;
        log::debug!(
            "source {source} {date}: population {}, stage-1 threshold {:.2}, {} candidate(s)",
            unresolved.len(),
            stage1.threshold,
            candidates.len()
        );
        let (confirmed, deltas) = stage2_outliers(&candidates, &variety, &baseline_variety)?;

        for sld in confirmed {
            let key = crate::ingest::AggregateKey {
                source: source.clone(),
                date,
                sld: sld.clone(),
            };
            let agg = day_aggs.remove(&key).expect("confirmed sld aggregated");
            attacks.push(AttackRecord {
                stage1_count: unresolved[&sld],
                stage2_delta: deltas[&sld],
                sld,
                date,
                source: source.clone(),
                events: agg.events,
            });
        }
    }
    attacks.sort_by(|a, b| {
        (&a.source, a.date, &a.sld).cmp(&(&b.source, b.date, &b.sld))
    });
    Ok(attacks)
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// One line of `attacks.jsonl`: the record minus its events, which live in
/// a sidecar TSV referenced by relative path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackIndexEntry {
    pub sld: String,
    pub date: NaiveDate,
    pub source: String,
    pub stage1_count: u64,
    pub stage2_delta: i64,
    pub events_file: String,
}

fn sanitize_component(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `attacks.jsonl` plus one event TSV per attack under
/// `dir/events/`. Layout and ordering are deterministic.
pub fn write_attacks(dir: impl AsRef<Path>, attacks: &[AttackRecord]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("events"))?;
    let mut index = fs::File::create(dir.join("attacks.jsonl"))?;
    for (i, attack) in attacks.iter().enumerate() {
        let events_file = format!(
            "events/{i:04}_{}_{}_{}.tsv",
            sanitize_component(&attack.source),
            attack.date,
            sanitize_component(&attack.sld)
        );
        let mut out = String::new();
        for e in &attack.events {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.timestamp, e.qname, e.qtype, e.rcode, e.source
            ));
        }
        fs::write(dir.join(&events_file), out)?;
        let entry = AttackIndexEntry {
            sld: attack.sld.clone(),
            date: attack.date,
            source: attack.source.clone(),
            stage1_count: attack.stage1_count,
            stage2_delta: attack.stage2_delta,
            events_file,
        };
        writeln!(index, "{}", serde_json::to_string(&entry)?)?;
    }
    Ok(())
}

/// Reads an attack set written by [`write_attacks`].
pub fn read_attacks(dir: impl AsRef<Path>) -> Result<Vec<AttackRecord>> {
    let dir = dir.as_ref();
    let index = BufReader::new(fs::File::open(dir.join("attacks.jsonl"))?);
    let mut attacks = Vec::new();
    for line in index.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: AttackIndexEntry = serde_json::from_str(&line)?;
        let (events, _) =
            crate::ingest::read_events(dir.join(&entry.events_file), crate::ingest::EventFormat::Tsv)?;
        attacks.push(AttackRecord {
            sld: entry.sld,
            date: entry.date,
            source: entry.source,
            stage1_count: entry.stage1_count,
            stage2_delta: entry.stage2_delta,
            events,
        });
    }
    Ok(attacks)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
