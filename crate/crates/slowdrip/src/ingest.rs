//! Bulk log ingestion and per-day aggregation.
//!
//! Readers accept two line-oriented encodings of the same record — TSV
//! (`ts  qname  qtype  rcode  source`) and JSONL — skip and count malformed
//! lines, and refuse files where malformed lines dominate. Aggregation
//! folds events into per `(source, date, SLD)` summaries keyed and ordered
//! deterministically, which is what the detector consumes.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdns::{parse_fqdn, PdnsEvent, SuffixSet};

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

/// Wire encoding of an event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    /// Five tab-separated columns: timestamp, qname, qtype, rcode, source.
    Tsv,
    /// One JSON object per line: `{"ts":..,"qname":..,"qtype":..,"rcode":..,"source":..}`.
    Jsonl,
}

impl EventFormat {
    /// Guesses the format from a file extension (`.tsv` / `.jsonl`).
    pub fn from_path(path: impl AsRef<Path>) -> Option<Self> {
        match path.as_ref().extension()?.to_str()? {
            "tsv" => Some(EventFormat::Tsv),
            "jsonl" => Some(EventFormat::Jsonl),
            _ => None,
        }
    }
}

/// Line accounting for one reader pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ReadStats {
    /// Lines that produced an event.
    pub parsed: usize,
    /// Non-empty lines that failed to parse.
    pub malformed: usize,
}

impl ReadStats {
    /// Folds another pass into this one (multi-file reads).
    pub fn merge(&mut self, other: ReadStats) {
        self.parsed += other.parsed;
        self.malformed += other.malformed;
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    ts: i64,
    qname: String,
    qtype: u16,
    rcode: u8,
    source: String,
}

/// Parses one log line in the given format.
pub fn parse_line(line: &str, format: EventFormat) -> Result<PdnsEvent> {
    match format {
        EventFormat::Tsv => {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::invalid(
                    "line",
                    format!("expected 5 tab-separated fields, got {}", fields.len()),
                ));
            }
            let ts: i64 = fields[0]
                .parse()
                .map_err(|e| Error::invalid("timestamp", format!("{e}: {:?}", fields[0])))?;
            let qtype: u16 = fields[2]
                .parse()
                .map_err(|e| Error::invalid("qtype", format!("{e}: {:?}", fields[2])))?;
            let rcode: u8 = fields[3]
                .parse()
                .map_err(|e| Error::invalid("rcode", format!("{e}: {:?}", fields[3])))?;
            PdnsEvent::new(ts, fields[1], qtype, rcode, fields[4])
        }
        EventFormat::Jsonl => {
            let raw: JsonRecord = serde_json::from_str(line)?;
            PdnsEvent::new(raw.ts, &raw.qname, raw.qtype, raw.rcode, raw.source)
        }
    }
}

/// Reads an event log, skipping malformed lines.
///
/// Empty lines are ignored. If malformed lines outnumber parsed ones
/// (more than half of all counted lines), the whole file is rejected with
/// [`Error::CorruptInput`] — a file that broken is a pipeline bug, not
/// noise. Per-line failures are logged at debug level.
pub fn read_events(path: impl AsRef<Path>, format: EventFormat) -> Result<(Vec<PdnsEvent>, ReadStats)> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    let mut stats = ReadStats::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, format) {
            Ok(event) => {
                events.push(event);
                stats.parsed += 1;
            }
            Err(err) => {
                log::debug!("{}:{}: skipping malformed line: {err}", path.display(), idx + 1);
                stats.malformed += 1;
            }
        }
    }
    if stats.malformed > stats.parsed {
        return Err(Error::CorruptInput {
            path: path.display().to_string(),
            malformed: stats.malformed,
            total: stats.parsed + stats.malformed,
        });
    }
    Ok((events, stats))
}

/// Renders one event as a log line (no trailing newline).
pub fn format_event(event: &PdnsEvent, format: EventFormat) -> String {
    match format {
        EventFormat::Tsv => format!(
            "{}\t{}\t{}\t{}\t{}",
            event.timestamp, event.qname, event.qtype, event.rcode, event.source
        ),
        EventFormat::Jsonl => serde_json::to_string(event).expect("event serializes"),
    }
}

/// Writes an event log in the given format. Output parses back through
/// [`read_events`] unchanged.
pub fn write_events(
    path: impl AsRef<Path>,
    events: &[PdnsEvent],
    format: EventFormat,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for event in events {
        writeln!(out, "{}", format_event(event, format))?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Unresolved policy
// ---------------------------------------------------------------------------

/// Which response codes count as "unresolved" for detection purposes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnresolvedPolicy {
    /// Any non-NOERROR response (the default).
    AnyFailure,
    /// Only the listed rcodes (e.g. just NXDOMAIN = 3).
    Rcodes(BTreeSet<u8>),
}

impl Default for UnresolvedPolicy {
    fn default() -> Self {
        UnresolvedPolicy::AnyFailure
    }
}

impl UnresolvedPolicy {
    /// Builds a narrowed policy from an rcode list.
    pub fn from_rcodes(rcodes: impl IntoIterator<Item = u8>) -> Self {
        UnresolvedPolicy::Rcodes(rcodes.into_iter().collect())
    }

    /// Whether an event counts as unresolved under this policy.
    pub fn matches(&self, event: &PdnsEvent) -> bool {
        match self {
            UnresolvedPolicy::AnyFailure => event.is_unresolved(),
            UnresolvedPolicy::Rcodes(set) => set.contains(&event.rcode),
        }
    }
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Identity of one aggregate: ordered so map iteration is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AggregateKey {
    pub source: String,
    pub date: NaiveDate,
    pub sld: String,
}

/// Per (source, day, SLD) rollup of an event stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainDayAggregate {
    pub sld: String,
    pub date: NaiveDate,
    pub source: String,
    /// Distinct qnames that counted as unresolved under the policy.
    pub unresolved_fqdns: BTreeSet<String>,
    /// Distinct qnames observed under the SLD, any rcode.
    pub qnames: BTreeSet<String>,
    /// The day's raw events for this SLD, in canonical order
    /// (timestamp, qname, qtype, rcode); duplicates preserved.
    pub events: Vec<PdnsEvent>,
}

impl DomainDayAggregate {
    fn new(key: &AggregateKey) -> Self {
        DomainDayAggregate {
            sld: key.sld.clone(),
            date: key.date,
            source: key.source.clone(),
            unresolved_fqdns: BTreeSet::new(),
            qnames: BTreeSet::new(),
            events: Vec::new(),
        }
    }

    /// Number of distinct unresolved qnames — the stage-1 detection signal.
    pub fn unresolved_count(&self) -> usize {
        self.unresolved_fqdns.len()
    }

    /// Number of distinct qnames, any rcode — the stage-2 variety signal.
    pub fn subdomain_count(&self) -> usize {
        self.qnames.len()
    }
}

/// Aggregation accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AggregateStats {
    /// Events folded into some aggregate.
    pub aggregated: usize,
    /// Events dropped because the qname has no registrable domain.
    pub skipped_unregistrable: usize,
}

/// Deterministically ordered aggregate map.
pub type AggregateMap = BTreeMap<AggregateKey, DomainDayAggregate>;

/// Folds events into per `(source, date, SLD)` aggregates.
///
/// The fold is commutative: any permutation of the input yields identical
/// aggregates, because name sets are ordered and each aggregate's event
/// list is canonically sorted after the fold. Events whose qname is a bare
/// public suffix carry no registrable domain and are dropped (counted in
/// the stats).
pub fn aggregate_day(
    events: impl IntoIterator<Item = PdnsEvent>,
    suffixes: &SuffixSet,
    policy: &UnresolvedPolicy,
) -> (AggregateMap, AggregateStats) {
    let mut map = AggregateMap::new();
    let mut stats = AggregateStats::default();
    for event in events {
        let sld = match parse_fqdn(&event.qname, suffixes) {
            Ok(parsed) => parsed.sld,
            Err(_) => {
                stats.skipped_unregistrable += 1;
                continue;
            }
        };
        let key = AggregateKey {
            source: event.source.clone(),
            date: event.date(),
            sld,
        };
        let agg = match map.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let agg = DomainDayAggregate::new(e.key());
                e.insert(agg)
            }
        };
        if policy.matches(&event) {
            agg.unresolved_fqdns.insert(event.qname.clone());
        }
        agg.qnames.insert(event.qname.clone());
        agg.events.push(event);
        stats.aggregated += 1;
    }
    for agg in map.values_mut() {
        agg.events.sort_by(|a, b| {
            (a.timestamp, &a.qname, a.qtype, a.rcode).cmp(&(b.timestamp, &b.qname, b.qtype, b.rcode))
        });
    }
    (map, stats)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
