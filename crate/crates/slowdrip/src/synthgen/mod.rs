//! Synthetic corpus generation with ground truth.
//!
//! Builds multi-day passive-DNS scenarios: benign background traffic plus
//! scripted attacks from the generator families the detection pipeline is
//! meant to tell apart (dictionary walks, incremental counters, random
//! labels, and composites). Events come out in the exact wire format the
//! ingest module consumes; the ground truth travels separately and never
//! leaks into the logs. Every stream is bit-exactly reproducible from its
//! configuration and seed.

mod background;
mod generators;

pub use background::{gen_background, BackgroundConfig, MAX_TYPOS_PER_DAY};
pub use generators::{
    apply_qtype_mix, gen_dictionary, gen_incremental, gen_random, incremental_prefixes,
    interleave, ShortlexCounter,
};

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdns::PdnsEvent;

/// Derives an independent stream seed from a master seed (splitmix-style
/// mixing), so sub-generators stay decoupled and reproducible.
pub(crate) fn subseed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Generator configuration
// ---------------------------------------------------------------------------

/// The generator families the pipeline should discriminate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Dictionary,
    Incremental,
    Random,
    Mixed,
}

/// Traversal order for list-driven generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    #[default]
    Ascending,
    Descending,
    Shuffled,
}

/// How a mixed attack runs its sub-generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Sub-generators take consecutive slices of the attack window.
    #[default]
    Sequential,
    /// Sub-generators run over the whole window, merged by timestamp.
    Concurrent,
}

/// One step of a label-depth schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthWindow {
    pub seconds: u64,
    pub depth: u32,
}

fn default_qtype_mix() -> BTreeMap<u16, f64> {
    BTreeMap::from([(1, 1.0)])
}

fn default_alphabet() -> String {
    "abcdefghijklmnopqrstuvwxyz".into()
}

fn default_length_range() -> (u32, u32) {
    (8, 16)
}

/// Configuration of one attack generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub family: Family,
    /// In-memory word list for the dictionary family.
    #[serde(default)]
    pub dictionary: Option<Vec<String>>,
    /// Word-list file (one word per line) used when `dictionary` is unset.
    #[serde(default)]
    pub dictionary_path: Option<String>,
    /// qtype → weight; weights must sum to 1.
    #[serde(default = "default_qtype_mix")]
    pub qtype_mix: BTreeMap<u16, f64>,
    /// Timestamp after which every query collapses to qtype 1.
    #[serde(default)]
    pub qtype_transition: Option<i64>,
    /// Label-depth schedule (dictionary family); empty means depth 1.
    #[serde(default)]
    pub depth_schedule: Vec<DepthWindow>,
    /// Events per second.
    pub rate: f64,
    #[serde(default)]
    pub order: Order,
    /// Alphabet for the incremental and random families.
    #[serde(default = "default_alphabet")]
    pub alphabet: String,
    /// Label length bounds for the random family, inclusive.
    #[serde(default = "default_length_range")]
    pub length_range: (u32, u32),
    pub seed: u64,
    /// Sub-generators of a mixed attack.
    #[serde(default)]
    pub parts: Vec<GeneratorConfig>,
    #[serde(default)]
    pub mix_mode: MixMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            family: Family::Random,
            dictionary: None,
            dictionary_path: None,
            qtype_mix: default_qtype_mix(),
            qtype_transition: None,
            depth_schedule: Vec::new(),
            rate: 10.0,
            order: Order::default(),
            alphabet: default_alphabet(),
            length_range: default_length_range(),
            seed: 0,
            parts: Vec::new(),
            mix_mode: MixMode::default(),
        }
    }
}

impl GeneratorConfig {
    /// Checks the configuration invariants (weights sum to 1, rate > 0,
    /// depths ≥ 1, sane alphabet and lengths, family prerequisites).
    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::invalid("rate", format!("{} (must be > 0)", self.rate)));
        }
        if self.qtype_mix.is_empty() {
            return Err(Error::invalid("qtype_mix", "no weights"));
        }
        let sum: f64 = self.qtype_mix.values().sum();
        if self.qtype_mix.values().any(|&w| !(w.is_finite() && w >= 0.0)) {
            return Err(Error::invalid("qtype_mix", "negative or non-finite weight"));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("qtype_mix", format!("weights sum to {sum}, not 1")));
        }
        for w in &self.depth_schedule {
            if w.depth < 1 {
                return Err(Error::invalid("depth_schedule", "depth must be ≥ 1"));
            }
            if w.seconds == 0 {
                return Err(Error::invalid("depth_schedule", "zero-length window"));
            }
        }
        if self.alphabet.is_empty() {
            return Err(Error::invalid("alphabet", "empty"));
        }
        if !self
            .alphabet
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
        {
            return Err(Error::invalid("alphabet", "only lowercase ASCII and digits"));
        }
        let (lo, hi) = self.length_range;
        if lo < 1 || lo > hi || hi > 63 {
            return Err(Error::invalid("length_range", format!("({lo}, {hi})")));
        }
        match self.family {
            Family::Dictionary => {
                let words = self.dictionary_words()?;
                for w in &words {
                    if w.is_empty() || w.len() > 63 || w.contains('.') || w.contains(char::is_whitespace)
                    {
                        return Err(Error::invalid("dictionary", format!("bad word {w:?}")));
                    }
                }
            }
            Family::Mixed => {
                if self.parts.is_empty() {
                    return Err(Error::invalid("parts", "mixed family needs sub-generators"));
                }
                for part in &self.parts {
                    part.validate()?;
                }
            }
            Family::Incremental | Family::Random => {}
        }
        Ok(())
    }

    /// The dictionary words, from memory or from the configured file.
    pub fn dictionary_words(&self) -> Result<Vec<String>> {
        if let Some(words) = &self.dictionary {
            if words.is_empty() {
                return Err(Error::invalid("dictionary", "empty word list"));
            }
            return Ok(words.clone());
        }
        if let Some(path) = &self.dictionary_path {
            return load_wordlist(path);
        }
        Err(Error::invalid(
            "dictionary",
            "dictionary family requires words or a word-list path",
        ))
    }

    /// Scheduled label depth at an offset (seconds) into the attack. Past
    /// the schedule's end the last entry holds; an empty schedule is depth 1.
    pub fn depth_at(&self, offset_secs: u64) -> u32 {
        let mut elapsed = 0u64;
        for w in &self.depth_schedule {
            elapsed += w.seconds;
            if offset_secs < elapsed {
                return w.depth;
            }
        }
        self.depth_schedule.last().map_or(1, |w| w.depth)
    }

    /// Human-readable family tag used in the ground truth.
    pub fn family_label(&self) -> String {
        match self.family {
            Family::Dictionary => "dictionary".into(),
            Family::Incremental => "incremental".into(),
            Family::Random => "random".into(),
            Family::Mixed => {
                let inner: Vec<String> = self.parts.iter().map(|p| p.family_label()).collect();
                format!("mixed({})", inner.join("+"))
            }
        }
    }
}

/// Loads a word list: one word per line, `#` comments and blanks skipped,
/// everything lowercased.
pub fn load_wordlist(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(&path)?;
    let words: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect();
    if words.is_empty() {
        return Err(Error::invalid(
            "dictionary",
            format!("{} has no words", path.as_ref().display()),
        ));
    }
    Ok(words)
}

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

/// One scripted attack inside a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Target second-level domain, e.g. `victim.com`.
    pub sld: String,
    /// Attack window as Unix timestamps, end exclusive.
    pub start: i64,
    pub end: i64,
    pub generator: GeneratorConfig,
}

/// Transport simulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterleaveConfig {
    pub jitter_seconds: u32,
    pub paths: u32,
}

impl Default for InterleaveConfig {
    fn default() -> Self {
        InterleaveConfig { jitter_seconds: 0, paths: 1 }
    }
}

fn default_baseline_days() -> u32 {
    2
}

fn default_source() -> String {
    "synth0".into()
}

/// A full synthetic scenario: several days of background traffic with
/// attacks placed on the analysis day(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    /// The day under analysis (UTC). Background also covers the preceding
    /// `baseline_days` days so detector baselines exist.
    pub date: NaiveDate,
    #[serde(default = "default_baseline_days")]
    pub baseline_days: u32,
    /// Sensor name stamped on every event.
    #[serde(default = "default_source")]
    pub source: String,
    #[serde(default)]
    pub background: BackgroundConfig,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub interleave: InterleaveConfig,
}

impl ScenarioConfig {
    /// The generated days, oldest first.
    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..=self.baseline_days)
            .map(|k| self.date - chrono::Days::new((self.baseline_days - k) as u64))
            .collect()
    }

    /// Validates the scenario: attack windows must sit inside the generated
    /// day range, each within a single UTC day.
    pub fn validate(&self) -> Result<()> {
        if self.interleave.paths < 1 {
            return Err(Error::invalid("interleave.paths", "must be ≥ 1"));
        }
        let dates = self.dates();
        let range_start = dates[0].and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
        let range_end = (self.date + chrono::Days::new(1))
            .and_hms_opt(0, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp();
        for (i, attack) in self.attacks.iter().enumerate() {
            if attack.sld.is_empty() || !attack.sld.contains('.') {
                return Err(Error::invalid(
                    "attack sld",
                    format!("attack {i}: {:?} is not a registrable domain", attack.sld),
                ));
            }
            if attack.start >= attack.end {
                return Err(Error::invalid("attack window", format!("attack {i}: start ≥ end")));
            }
            if attack.start < range_start || attack.end > range_end {
                return Err(Error::invalid(
                    "attack window",
                    format!("attack {i}: outside the scenario's {} day(s)", dates.len()),
                ));
            }
            let start_date = chrono::DateTime::from_timestamp(attack.start, 0).unwrap().date_naive();
            let end_date = chrono::DateTime::from_timestamp(attack.end - 1, 0).unwrap().date_naive();
            if start_date != end_date {
                return Err(Error::invalid(
                    "attack window",
                    format!("attack {i}: crosses a UTC day boundary"),
                ));
            }
            attack.generator.validate()?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// Ground truth for one generated attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthAttack {
    pub sld: String,
    pub source: String,
    pub family: String,
    pub date: NaiveDate,
    pub start: i64,
    pub end: i64,
    pub n_events: usize,
}

/// Ground truth for a whole scenario; stored beside the logs, never in them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub date: NaiveDate,
    pub background_domains: usize,
    pub attacks: Vec<TruthAttack>,
}

impl Truth {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

// ---------------------------------------------------------------------------
// Attack dispatch and scenario assembly
// ---------------------------------------------------------------------------

/// Runs one generator over an attack window. Mixed families recurse into
/// their parts; every other family applies its own qtype mix afterwards.
pub fn generate_attack(
    config: &GeneratorConfig,
    sld: &str,
    start: i64,
    end: i64,
    source: &str,
) -> Result<Vec<PdnsEvent>> {
    let mut events = match config.family {
        Family::Dictionary => gen_dictionary(config, sld, start, end, source)?,
        Family::Incremental => gen_incremental(config, sld, start, end, source)?,
        Family::Random => gen_random(config, sld, start, end, source)?,
        Family::Mixed => {
            let mut streams = Vec::with_capacity(config.parts.len());
            match config.mix_mode {
                MixMode::Sequential => {
                    let m = config.parts.len() as i64;
                    let span = end - start;
                    for (k, part) in config.parts.iter().enumerate() {
                        let s = start + span * k as i64 / m;
                        let e = start + span * (k as i64 + 1) / m;
                        streams.push(generate_attack(part, sld, s, e, source)?);
                    }
                }
                MixMode::Concurrent => {
                    for part in &config.parts {
                        streams.push(generate_attack(part, sld, start, end, source)?);
                    }
                }
            }
            let mut merged: Vec<PdnsEvent> = streams.into_iter().flatten().collect();
            merged.sort_by_key(|e| e.timestamp);
            return Ok(merged); // parts already carry their own qtype mixes
        }
    };
    apply_qtype_mix(
        &mut events,
        &config.qtype_mix,
        config.qtype_transition,
        subseed(config.seed, 0x71, 0),
    );
    Ok(events)
}

/// Generates the full scenario: background across all days, every scripted
/// attack, transport interleaving — plus the matching ground truth.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<(Vec<PdnsEvent>, Truth)> {
    config.validate()?;
    let dates = config.dates();
    let mut streams = vec![gen_background(
        &config.background,
        &dates,
        &config.source,
        subseed(config.seed, 0xB0, 0),
    )];
    let mut truth_attacks = Vec::with_capacity(config.attacks.len());
    for spec in &config.attacks {
        let events = generate_attack(&spec.generator, &spec.sld, spec.start, spec.end, &config.source)?;
        truth_attacks.push(TruthAttack {
            sld: spec.sld.clone(),
            source: config.source.clone(),
            family: spec.generator.family_label(),
            date: chrono::DateTime::from_timestamp(spec.start, 0)
                .expect("validated timestamp")
                .date_naive(),
            start: spec.start,
            end: spec.end,
            n_events: events.len(),
        });
        streams.push(events);
    }
    let merged = interleave(
        streams,
        config.interleave.jitter_seconds,
        config.interleave.paths,
        subseed(config.seed, 0x17, 0),
    );
    let truth = Truth {
        seed: config.seed,
        date: config.date,
        background_domains: config.background.domains,
        attacks: truth_attacks,
    };
    Ok((merged, truth))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
