//! Passive-DNS event model and query-name decomposition.
//!
//! Everything downstream — aggregation, detection, feature extraction —
//! operates on [`PdnsEvent`] records and on names decomposed against a
//! public-suffix rule set. Names are normalized once at ingest (lowercase,
//! no trailing dot) and treated as opaque byte strings afterwards, so
//! punycoded and unicode labels survive untouched.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest DNS RCODE assigned by IANA to a base (non-extended) code.
pub const MAX_RCODE: u8 = 23;

/// Longest name accepted, in bytes of presentation form.
pub const MAX_NAME_BYTES: usize = 253;

/// Most labels accepted in one name.
pub const MAX_LABELS: usize = 127;

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

/// One passive-DNS query/response observation.
///
/// `qname` is always normalized (see [`normalize_name`]); construct events
/// through [`PdnsEvent::new`] to keep that guarantee.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdnsEvent {
    /// Observation time, seconds since the Unix epoch, UTC.
    #[serde(rename = "ts")]
    pub timestamp: i64,
    /// Normalized query name.
    pub qname: String,
    /// Query type code (A = 1, CNAME = 5, PTR = 12, TXT = 16, AAAA = 28,
    /// SRV = 33, ...).
    pub qtype: u16,
    /// Response code (NOERROR = 0, NXDOMAIN = 3, ...).
    pub rcode: u8,
    /// Collection vantage point the observation came from.
    pub source: String,
}

impl PdnsEvent {
    /// Builds an event from raw fields, normalizing the name and validating
    /// ranges.
    pub fn new(
        timestamp: i64,
        raw_qname: &str,
        qtype: u16,
        rcode: u8,
        source: impl Into<String>,
    ) -> Result<Self> {
        if rcode > MAX_RCODE {
            return Err(Error::invalid(
                "rcode",
                format!("{rcode} exceeds maximum {MAX_RCODE}"),
            ));
        }
        Ok(PdnsEvent {
            timestamp,
            qname: normalize_name(raw_qname)?,
            qtype,
            rcode,
            source: source.into(),
        })
    }

    /// Whether the response failed to resolve (any non-NOERROR rcode).
    pub fn is_unresolved(&self) -> bool {
        self.rcode != 0
    }

    /// UTC calendar date of the observation.
    pub fn date(&self) -> NaiveDate {
        DateTime::from_timestamp(self.timestamp, 0)
            .map(|dt| dt.date_naive())
            .unwrap_or(NaiveDate::MIN)
    }

    /// Minute of the UTC day, `0..1440`.
    pub fn minute_of_day(&self) -> u32 {
        DateTime::from_timestamp(self.timestamp, 0)
            .map(|dt| dt.hour() * 60 + dt.minute())
            .unwrap_or(0)
    }

    /// Second of the UTC day, `0..86400`.
    pub fn second_of_day(&self) -> u32 {
        DateTime::from_timestamp(self.timestamp, 0)
            .map(|dt| dt.num_seconds_from_midnight())
            .unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Name normalization
// ---------------------------------------------------------------------------

/// Normalizes a raw query name: lowercases, strips one trailing dot, and
/// rejects structurally invalid names.
///
/// Rejected: empty names (including a bare `.`), names containing
/// whitespace, empty labels (`a..b`), names longer than [`MAX_NAME_BYTES`]
/// bytes or with more than [`MAX_LABELS`] labels.
pub fn normalize_name(raw: &str) -> Result<String> {
    let trimmed = raw.strip_suffix('.').unwrap_or(raw);
    if trimmed.is_empty() {
        return Err(Error::MalformedName(format!("empty name {raw:?}")));
    }
    if trimmed.chars().any(char::is_whitespace) {
        return Err(Error::MalformedName(format!(
            "whitespace in name {raw:?}"
        )));
    }
    let name = trimmed.to_lowercase();
    if name.len() > MAX_NAME_BYTES {
        return Err(Error::MalformedName(format!(
            "{} bytes exceeds {MAX_NAME_BYTES}: {raw:?}",
            name.len()
        )));
    }
    let mut labels = 0usize;
    for label in name.split('.') {
        if label.is_empty() {
            return Err(Error::MalformedName(format!("empty label in {raw:?}")));
        }
        labels += 1;
    }
    if labels > MAX_LABELS {
        return Err(Error::MalformedName(format!(
            "{labels} labels exceeds {MAX_LABELS}: {raw:?}"
        )));
    }
    Ok(name)
}

// ---------------------------------------------------------------------------
// Public-suffix rules
// ---------------------------------------------------------------------------

/// Public-suffix rule set in the publicsuffix.org data-file format.
///
/// Supports exact rules (`co.uk`), wildcards (`*.ck`), exceptions
/// (`!www.ck`), and the implicit default rule `*` (an unlisted TLD is a
/// public suffix). Immutable once constructed.
#[derive(Debug, Clone)]
pub struct SuffixSet {
    exact: HashSet<String>,
    wildcard: HashSet<String>,
    exception: HashSet<String>,
}

impl SuffixSet {
    /// Parses rules from the text of a public-suffix data file.
    ///
    /// Lines are trimmed; empty lines and `//` comments are skipped; a rule
    /// runs to the first whitespace, matching upstream's format.
    pub fn parse(text: &str) -> Self {
        let mut set = SuffixSet {
            exact: HashSet::new(),
            wildcard: HashSet::new(),
            exception: HashSet::new(),
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let rule = line.split_whitespace().next().unwrap_or("").to_lowercase();
            if rule.is_empty() {
                continue;
            }
            if let Some(rest) = rule.strip_prefix("!") {
                set.exception.insert(rest.to_string());
            } else if let Some(rest) = rule.strip_prefix("*.") {
                set.wildcard.insert(rest.to_string());
            } else {
                set.exact.insert(rule);
            }
        }
        set
    }

    /// Loads a rule set from a file on disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// Number of rules held (exact + wildcard + exception).
    pub fn len(&self) -> usize {
        self.exact.len() + self.wildcard.len() + self.exception.len()
    }

    /// True if no explicit rules were loaded (the implicit `*` still applies).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of labels in the effective public suffix of a name given as
    /// labels. Implements the standard matching algorithm: among all
    /// matching rules the exception (minus its leftmost label) prevails,
    /// otherwise the longest; an unlisted TLD matches the implicit `*`.
    fn suffix_label_count(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        let mut best = 1usize; // implicit default rule `*`
        let mut exception: Option<usize> = None;
        let mut tail = String::new();
        for k in 1..=n {
            // tail = last k labels joined
            tail.clear();
            for (i, label) in labels[n - k..].iter().enumerate() {
                if i > 0 {
                    tail.push('.');
                }
                tail.push_str(label);
            }
            if self.exception.contains(&tail) {
                exception = Some(k);
            }
            if self.exact.contains(&tail) && k > best {
                best = k;
            }
            // `*.tail` matches any single extra label, if the name has one
            if k < n && self.wildcard.contains(&tail) && k + 1 > best {
                best = k + 1;
            }
        }
        match exception {
            // An exception rule's public suffix drops the leftmost label.
            Some(k) => k - 1,
            None => best,
        }
    }
}

// ---------------------------------------------------------------------------
// FQDN decomposition
// ---------------------------------------------------------------------------

/// A query name decomposed against public-suffix rules.
///
/// For `a.b.example.co.uk`: labels `[a, b, example, co, uk]`, eTLD
/// `co.uk`, SLD `example.co.uk`, prefix `a`, suffix `b.example.co.uk`.
/// When the name *is* its SLD the prefix is empty and the suffix equals
/// the whole name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedName {
    /// Labels in left-to-right order; rejoining with `.` yields the qname.
    pub labels: Vec<String>,
    /// Effective TLD (public suffix).
    pub etld: String,
    /// Registrable domain: one label more than the eTLD.
    pub sld: String,
    /// Leftmost label, or empty when the name equals its SLD.
    pub prefix: String,
    /// The name minus its prefix label, or the whole name when the prefix
    /// is empty.
    pub suffix: String,
}

impl ParsedName {
    /// The full query name.
    pub fn qname(&self) -> String {
        self.labels.join(".")
    }
}

impl fmt::Display for ParsedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.qname())
    }
}

/// Decomposes a normalized qname against a suffix rule set.
///
/// Fails with [`Error::Unregistrable`] when the name is itself a public
/// suffix (no registrable domain exists), and with
/// [`Error::MalformedName`] when the name fails normalization.
pub fn parse_fqdn(qname: &str, suffixes: &SuffixSet) -> Result<ParsedName> {
    let name = normalize_name(qname)?;
    let labels: Vec<&str> = name.split('.').collect();
    let n = labels.len();
    let etld_len = suffixes.suffix_label_count(&labels);
    if n <= etld_len {
        return Err(Error::Unregistrable(name));
    }
    let etld = labels[n - etld_len..].join(".");
    let sld = labels[n - etld_len - 1..].join(".");
    let (prefix, suffix) = if n == etld_len + 1 {
        (String::new(), name.clone())
    } else {
        (labels[0].to_string(), labels[1..].join("."))
    };
    Ok(ParsedName {
        labels: labels.into_iter().map(str::to_string).collect(),
        etld,
        sld,
        prefix,
        suffix,
    })
}

/// Number of labels to the left of the SLD: `0` for a bare registrable
/// domain, `1` for `www.example.com`, and so on.
pub fn label_depth(parsed: &ParsedName) -> usize {
    let sld_labels = parsed.sld.split('.').count();
    parsed.labels.len() - sld_labels
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
