//! The attack-side generators: dictionary traversal, incremental
//! (shortlex) enumeration, pseudo-random labels, qtype assignment, and
//! transport interleaving.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::pdns::PdnsEvent;

use super::{GeneratorConfig, Order};

/// Timestamp of the `i`-th event of a constant-rate stream.
fn event_time(start: i64, i: usize, rate: f64) -> i64 {
    start + (i as f64 / rate) as i64
}

/// Number of events a window holds at the configured rate.
pub(super) fn window_events(start: i64, end: i64, rate: f64) -> usize {
    (((end - start) as f64) * rate).floor() as usize
}

// ---------------------------------------------------------------------------
// Dictionary generator
// ---------------------------------------------------------------------------

/// Multi-label odometer over a fixed word list. The rightmost label
/// advances fastest, so successive names at one depth are in ascending
/// byte order whenever the word list is sorted. Each depth keeps its own
/// position so a schedule can revisit a depth without repeating names.
struct DictOdometer<'a> {
    words: &'a [String],
    /// depth → next combination; `None` once the depth is exhausted.
    state: BTreeMap<u32, Option<Vec<usize>>>,
}

impl<'a> DictOdometer<'a> {
    fn new(words: &'a [String]) -> Self {
        DictOdometer { words, state: BTreeMap::new() }
    }

    /// Next prefix (labels joined by dots) at the given depth.
    fn next(&mut self, depth: u32) -> Result<String> {
        let m = self.words.len();
        let slot = self
            .state
            .entry(depth)
            .or_insert_with(|| Some(vec![0; depth as usize]));
        let Some(indices) = slot else {
            return Err(Error::DictionaryExhausted(format!(
                "all {m}^{depth} names at depth {depth} emitted"
            )));
        };
        let prefix = indices
            .iter()
            .map(|&i| self.words[i].as_str())
            .collect::<Vec<_>>()
            .join(".");
        // advance with carry from the rightmost slot
        let mut pos = indices.len();
        loop {
            if pos == 0 {
                *slot = None; // wrapped past the leftmost slot
                break;
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < m {
                break;
            }
            indices[pos] = 0;
        }
        Ok(prefix)
    }
}

/// Arranges the configured word list for traversal: sorted ascending,
/// sorted descending, or seeded-shuffled.
fn arranged_words(config: &GeneratorConfig, words: &[String]) -> Vec<String> {
    let mut words: Vec<String> = words.to_vec();
    words.sort();
    words.dedup();
    match config.order {
        Order::Ascending => {}
        Order::Descending => words.reverse(),
        Order::Shuffled => {
            // Fisher-Yates from the generator seed
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            for i in (1..words.len()).rev() {
                words.swap(i, rng.gen_range(0..=i));
            }
        }
    }
    words
}

/// Emits a dictionary-walk attack: every query name is made of dictionary
/// words, the label depth follows the configured schedule, and all queries
/// are unresolved (NXDOMAIN).
pub fn gen_dictionary(
    config: &GeneratorConfig,
    sld: &str,
    start: i64,
    end: i64,
    source: &str,
) -> Result<Vec<PdnsEvent>> {
    let words = config.dictionary_words()?;
    let words = arranged_words(config, &words);
    let mut odometer = DictOdometer::new(&words);
    let n = window_events(start, end, config.rate);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let ts = event_time(start, i, config.rate);
        let depth = config.depth_at((ts - start) as u64);
        let prefix = odometer.next(depth)?;
        events.push(PdnsEvent::new(ts, &format!("{prefix}.{sld}"), 1, 3, source)?);
    }
    Ok(events)
}

// ---------------------------------------------------------------------------
// Incremental generator
// ---------------------------------------------------------------------------

/// Shortlex counter over an alphabet: a, b, …, aa, ab, … — single labels
/// of growing length.
pub struct ShortlexCounter {
    alphabet: Vec<char>,
    digits: Vec<usize>,
}

impl ShortlexCounter {
    pub fn new(alphabet: &[char]) -> Self {
        assert!(!alphabet.is_empty(), "alphabet must be non-empty");
        let mut alphabet = alphabet.to_vec();
        alphabet.sort_unstable();
        alphabet.dedup();
        ShortlexCounter { alphabet, digits: Vec::new() }
    }

    /// The next label in shortlex order. Never exhausts.
    pub fn next_label(&mut self) -> String {
        if self.digits.is_empty() {
            self.digits.push(0);
        } else {
            let mut pos = self.digits.len();
            loop {
                if pos == 0 {
                    // wrapped: grow to the next length
                    self.digits = vec![0; self.digits.len() + 1];
                    break;
                }
                pos -= 1;
                self.digits[pos] += 1;
                if self.digits[pos] < self.alphabet.len() {
                    break;
                }
                self.digits[pos] = 0;
            }
        }
        self.digits.iter().map(|&d| self.alphabet[d]).collect()
    }
}

/// The first `count` labels of the shortlex enumeration.
pub fn incremental_prefixes(alphabet: &[char], count: usize) -> Vec<String> {
    let mut counter = ShortlexCounter::new(alphabet);
    (0..count).map(|_| counter.next_label()).collect()
}

/// Emits an incremental attack: single labels enumerated in base-|alphabet|
/// counting order under the target domain. The depth schedule does not
/// apply — this generator grows the label itself, not the label count.
pub fn gen_incremental(
    config: &GeneratorConfig,
    sld: &str,
    start: i64,
    end: i64,
    source: &str,
) -> Result<Vec<PdnsEvent>> {
    let alphabet: Vec<char> = config.alphabet.chars().collect();
    let mut counter = ShortlexCounter::new(&alphabet);
    let n = window_events(start, end, config.rate);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let ts = event_time(start, i, config.rate);
        let label = counter.next_label();
        events.push(PdnsEvent::new(ts, &format!("{label}.{sld}"), 1, 3, source)?);
    }
    Ok(events)
}

// ---------------------------------------------------------------------------
// Random generator
// ---------------------------------------------------------------------------

/// Emits a pseudo-random attack: one uniformly random label per query,
/// length uniform in the configured range, fully reproducible from the
/// generator seed.
pub fn gen_random(
    config: &GeneratorConfig,
    sld: &str,
    start: i64,
    end: i64,
    source: &str,
) -> Result<Vec<PdnsEvent>> {
    let alphabet: Vec<char> = config.alphabet.chars().collect();
    let (min_len, max_len) = config.length_range;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = window_events(start, end, config.rate);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let ts = event_time(start, i, config.rate);
        let len = rng.gen_range(min_len..=max_len);
        let label: String = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        events.push(PdnsEvent::new(ts, &format!("{label}.{sld}"), 1, 3, source)?);
    }
    Ok(events)
}

// ---------------------------------------------------------------------------
// Qtype assignment
// ---------------------------------------------------------------------------

/// Reassigns qtypes by weighted draw. With a transition timestamp set,
/// every event at or after it gets qtype 1 (A) instead — the observed
/// "six types, then one" attack behavior.
pub fn apply_qtype_mix(
    events: &mut [PdnsEvent],
    mix: &BTreeMap<u16, f64>,
    transition: Option<i64>,
    seed: u64,
) {
    let cumulative: Vec<(u16, f64)> = mix
        .iter()
        .scan(0.0, |acc, (&qtype, &w)| {
            *acc += w;
            Some((qtype, *acc))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for event in events.iter_mut() {
        let r: f64 = rng.gen_range(0.0..1.0);
        let drawn = cumulative
            .iter()
            .find(|&&(_, acc)| r < acc)
            .map(|&(qtype, _)| qtype)
            .unwrap_or_else(|| cumulative.last().expect("non-empty mix").0);
        event.qtype = match transition {
            Some(t) if event.timestamp >= t => 1,
            _ => drawn,
        };
    }
}

// ---------------------------------------------------------------------------
// Transport interleaving
// ---------------------------------------------------------------------------

/// Merges streams through simulated network paths. Each event is assigned
/// a path uniformly; each path carries a constant latency drawn once from
/// [0, jitter] seconds. Events are re-ordered by their perturbed
/// timestamps (stable, so zero jitter on sorted input is the identity).
pub fn interleave(
    streams: Vec<Vec<PdnsEvent>>,
    jitter_seconds: u32,
    paths: u32,
    seed: u64,
) -> Vec<PdnsEvent> {
    assert!(paths >= 1, "at least one path");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latencies: Vec<i64> = (0..paths)
        .map(|_| rng.gen_range(0..=jitter_seconds) as i64)
        .collect();
    let mut merged: Vec<PdnsEvent> = Vec::with_capacity(streams.iter().map(Vec::len).sum());
    for stream in streams {
        for mut event in stream {
            let path = rng.gen_range(0..paths as usize);
            event.timestamp += latencies[path];
            merged.push(event);
        }
    }
    merged.sort_by_key(|e| e.timestamp);
    merged
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
