//! Benign background traffic: per-domain daily volumes with a heavy tail,
//! a handful of stable resolved names, and a small bounded number of
//! typo-like unresolved queries per domain and day.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::pdns::PdnsEvent;

use super::subseed;

/// Background model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    /// Number of benign second-level domains.
    pub domains: usize,
    /// ln-space mean of each domain's daily event volume.
    pub log_normal_mu: f64,
    /// ln-space standard deviation of the daily volume.
    pub log_normal_sigma: f64,
    /// When set, unresolved names are a few *persistent* typos queried all
    /// day long (a popular-domain NXDOMAIN floor) instead of one-off typos.
    pub popular_mode: bool,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            domains: 1000,
            log_normal_mu: 3.5,
            log_normal_sigma: 1.0,
            popular_mode: false,
        }
    }
}

/// Largest unresolved-name count a benign domain produces per day. Kept
/// well under typical outlier thresholds so background alone never trips
/// stage 1: with typo counts uniform on [0, 8], the population's
/// Q3 + 1.5·IQR sits near 12, above every benign count.
pub const MAX_TYPOS_PER_DAY: u64 = 8;

const TLDS: [&str; 3] = ["com", "net", "org"];
const STEMS: [&str; 8] = ["shop", "news", "blog", "app", "data", "web", "corp", "media"];
const RESOLVED_LABELS: [&str; 10] =
    ["www", "mail", "api", "cdn", "ns1", "ns2", "smtp", "imap", "dev", "store"];

/// Daily event volume cap per domain, keeping the log-normal tail from
/// producing unbounded streams.
const MAX_DAILY_VOLUME: u64 = 3000;

/// Generates background traffic for every listed day.
///
/// Per domain: a base daily volume drawn once (log-normal), a stable set
/// of resolved names queried at that volume every day, and per-day typo
/// queries (NXDOMAIN) — at most [`MAX_TYPOS_PER_DAY`] distinct names. All
/// draws derive from `seed`, so the stream is reproducible bit-exactly.
pub fn gen_background(
    config: &BackgroundConfig,
    dates: &[NaiveDate],
    source: &str,
    seed: u64,
) -> Vec<PdnsEvent> {
    let mut events = Vec::new();
    for i in 0..config.domains {
        let mut domain_rng = ChaCha8Rng::seed_from_u64(subseed(seed, 1, i as u64));
        let sld = format!("{}{:05}.{}", STEMS[i % STEMS.len()], i, TLDS[i % TLDS.len()]);
        let volume = LogNormal::new(config.log_normal_mu, config.log_normal_sigma)
            .expect("valid log-normal parameters")
            .sample(&mut domain_rng)
            .round()
            .clamp(8.0, MAX_DAILY_VOLUME as f64) as u64;
        let resolved = &RESOLVED_LABELS[..3 + i % 8];

        for (day_index, date) in dates.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(
                seed,
                2 + day_index as u64,
                i as u64,
            ));
            let day_start = date
                .and_hms_opt(0, 0, 0)
                .expect("midnight exists")
                .and_utc()
                .timestamp();

            for _ in 0..volume {
                let ts = day_start + rng.gen_range(0..86_400);
                let label = resolved[rng.gen_range(0..resolved.len())];
                let qtype = match rng.gen_range(0.0..1.0f64) {
                    r if r < 0.7 => 1,
                    r if r < 0.9 => 28,
                    _ => 5,
                };
                events.push(
                    PdnsEvent::new(ts, &format!("{label}.{sld}"), qtype, 0, source)
                        .expect("generated name is valid"),
                );
            }

            if config.popular_mode {
                // few persistent typos, each queried all day long
                let n_typos = 2 + (i % 3) as u64;
                for t in 0..n_typos {
                    let typo = format!("{}typo{t}.{sld}", resolved[t as usize % resolved.len()]);
                    let phase = rng.gen_range(0..300);
                    let mut ts = day_start + phase;
                    while ts < day_start + 86_400 {
                        events.push(
                            PdnsEvent::new(ts, &typo, 1, 3, source)
                                .expect("generated name is valid"),
                        );
                        ts += 300;
                    }
                }
            } else {
                // one-off typos, a bounded handful per day
                let n_typos = rng.gen_range(0..=MAX_TYPOS_PER_DAY);
                for _ in 0..n_typos {
                    let ts = day_start + rng.gen_range(0..86_400);
                    let typo = format!(
                        "{}{:04}.{sld}",
                        resolved[rng.gen_range(0..resolved.len())],
                        rng.gen_range(0..10_000)
                    );
                    events.push(
                        PdnsEvent::new(ts, &typo, 1, 3, source).expect("generated name is valid"),
                    );
                }
            }
        }
    }
    events
}
