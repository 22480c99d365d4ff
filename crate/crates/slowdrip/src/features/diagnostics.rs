//! Per-attack diagnostic series for external plotting.
//!
//! These artifacts — minute-resolution traffic series, prefix lengths over
//! time, label depth, query-type timelines — are exported alongside the
//! feature vector for inspection and figures. They are never clustered.

use serde::{Deserialize, Serialize};

use crate::detector::AttackRecord;
use crate::error::Result;
use crate::features::MINUTES_PER_DAY;
use crate::pdns::{label_depth, parse_fqdn, SuffixSet};

/// Count of prefixes of one length observed in one second of the day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixLengthPoint {
    /// Second of the UTC day.
    pub second: u32,
    /// Prefix length in characters (0 for bare-domain queries).
    pub length: u32,
    pub count: u32,
}

/// Count of events of one query type in one minute of the day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QtypeMinutePoint {
    pub qtype: u16,
    /// Minute of the UTC day.
    pub minute: u32,
    pub count: u32,
}

/// Plot-ready series describing one attack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticBundle {
    /// All events per minute of the day (1440 entries).
    pub per_minute_events: Vec<u32>,
    /// NXDOMAIN events per minute of the day (1440 entries).
    pub per_minute_nxdomain: Vec<u32>,
    /// Deepest label stack observed left of the SLD.
    pub max_label_depth: usize,
    /// Sparse per-second histogram of prefix lengths, sorted by
    /// (second, length).
    pub prefix_lengths: Vec<PrefixLengthPoint>,
    /// Sparse qtype-by-minute matrix, sorted by (qtype, minute).
    pub qtype_timeline: Vec<QtypeMinutePoint>,
}

/// Builds the diagnostic bundle for one attack.
pub fn diagnostics(attack: &AttackRecord, suffixes: &SuffixSet) -> Result<DiagnosticBundle> {
    use std::collections::{BTreeMap, HashMap};

    let mut per_minute_events = vec![0u32; MINUTES_PER_DAY];
    let mut per_minute_nxdomain = vec![0u32; MINUTES_PER_DAY];
    let mut prefix_len_of: HashMap<&str, u32> = HashMap::new();
    let mut max_depth = 0usize;
    let mut length_counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    let mut qtype_counts: BTreeMap<(u16, u32), u32> = BTreeMap::new();

    for event in &attack.events {
        if event.date() != attack.date {
            continue;
        }
        let minute = event.minute_of_day() % MINUTES_PER_DAY as u32;
        per_minute_events[minute as usize] += 1;
        if event.rcode == 3 {
            per_minute_nxdomain[minute as usize] += 1;
        }
        let prefix_len = match prefix_len_of.get(event.qname.as_str()) {
            Some(&len) => len,
            None => {
                let parsed = parse_fqdn(&event.qname, suffixes)?;
                max_depth = max_depth.max(label_depth(&parsed));
                let len = parsed.prefix.chars().count() as u32;
                prefix_len_of.insert(event.qname.as_str(), len);
                len
            }
        };
        *length_counts.entry((event.second_of_day(), prefix_len)).or_insert(0) += 1;
        *qtype_counts.entry((event.qtype, minute)).or_insert(0) += 1;
    }

    Ok(DiagnosticBundle {
        per_minute_events,
        per_minute_nxdomain,
        max_label_depth: max_depth,
        prefix_lengths: length_counts
            .into_iter()
            .map(|((second, length), count)| PrefixLengthPoint { second, length, count })
            .collect(),
        qtype_timeline: qtype_counts
            .into_iter()
            .map(|((qtype, minute), count)| QtypeMinutePoint { qtype, minute, count })
            .collect(),
    })
}
