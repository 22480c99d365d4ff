//! Acceptance gate: ten go/no-go checks over the detector, the feature
//! extractors, both clusterers, the synthetic generators, and the CLI
//! pipeline. Each check prints exactly one PASS/FAIL line; the test
//! fails if any check does. Tolerances and runtime budgets are pinned as
//! constants beside the checks that use them.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use slowdrip::archetype::{dbscan, select_archetypes, ArchetypeParams, AttackId, DistanceMatrix};
use slowdrip::cluster::{
    adjusted_rand_index, cluster_report, drift_assign, hdbscan, FeatureCorpus,
};
use slowdrip::detector::{detect_attacks, quartiles, AttackRecord, DetectorConfig};
use slowdrip::features::{
    char_distribution, feature_vector, js_distance, lex_ratio, overlap_ratio,
    uniform_distribution, CharDistribution, Dictionary, DistributionMode, FeatureConfig,
    FeatureVector,
};
use slowdrip::synthgen::{
    generate_attack, generate_scenario, AttackSpec, BackgroundConfig, Family, GeneratorConfig,
    InterleaveConfig, Order, ScenarioConfig,
};
use slowdrip::{parse_fqdn, PdnsEvent, SuffixSet};

/// 2018-08-03T00:00:00Z — the analysis day used throughout.
const DAY: i64 = 1_533_254_400;
const DATE: &str = "2018-08-03";

// Tolerances and budgets, one row per criterion.
const C1_SLACK: f64 = 1e-9; // self-distance and triangle inequality slack
const C1_BUDGET: Duration = Duration::from_secs(5);
const C2_TOL: f64 = 1e-12; // quartile oracle agreement
const C3_MIN_RECALL: f64 = 0.95;
const C3_BUDGET: Duration = Duration::from_secs(120);
const C5_SORTED_MIN: f64 = 0.8;
const C5_SHUFFLED_TOL: f64 = 0.05;
const C5_DESCENDING_MAX: f64 = 0.2;
const C6_MAX_DIST: f64 = 0.05;
const C7_DICT_MIN: f64 = 0.99;
const C7_RANDOM_MAX: f64 = 0.05;
const C8_MIN_ARI: f64 = 0.8;
const C8_MIN_NOISE_FRAC: f64 = 0.9;
const C8_BUDGET: Duration = Duration::from_secs(60);
const C9_MIN_REASSIGNED: f64 = 0.8;
const C9_MIN_NOVEL_UNASSIGNED: f64 = 0.6;

macro_rules! check {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err(format!($($arg)+));
        }
    };
}

#[test]
fn acceptance_criteria() {
    type Check = (u32, &'static str, fn() -> Result<(), String>);
    let checks: [Check; 10] = [
        (1, "Jensen-Shannon distance is a bounded metric", c01_js_metric),
        (2, "quartiles match an independent interpolation oracle", c02_quartile_oracle),
        (3, "detection recall/precision on a seeded scenario", c03_detection),
        (4, "DBSCAN matches a brute-force reference", c04_dbscan_equivalence),
        (5, "lexicographic ordering calibration", c05_lex_calibration),
        (6, "incremental enumerator is near-uniform at scale", c06_uniformity),
        (7, "dictionary fingerprint separates families", c07_dictionary_fingerprint),
        (8, "end-to-end clustering recovers the families", c08_end_to_end_clustering),
        (9, "drift assignment is stable across batches", c09_drift_stability),
        (10, "pipeline re-runs are byte-identical", c10_determinism),
    ];
    let mut failures = Vec::new();
    for (n, name, body) in checks {
        let started = Instant::now();
        let result = body();
        let elapsed = started.elapsed();
        match &result {
            Ok(()) => println!("criterion {n:2} PASS [{elapsed:>7.1?}] {name}"),
            Err(msg) => println!("criterion {n:2} FAIL [{elapsed:>7.1?}] {name}: {msg}"),
        }
        if let Err(msg) = result {
            failures.push(format!("criterion {n} ({name}): {msg}"));
        }
    }
    assert!(
        failures.is_empty(),
        "{} acceptance criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}

// ---------------------------------------------------------------------------
// 1. J-S metric suite
// ---------------------------------------------------------------------------

fn c01_js_metric() -> Result<(), String> {
    let started = Instant::now();
    let alphabet = js_alphabet();
    assert_eq!(alphabet.len(), 66);
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    for trial in 0..1_000 {
        let p = random_distribution(&mut rng, &alphabet);
        let q = random_distribution(&mut rng, &alphabet);
        let r = random_distribution(&mut rng, &alphabet);

        let pq: f64 = js_distance(&p, &q);
        let qp: f64 = js_distance(&q, &p);
        check!(pq == qp, "trial {trial}: asymmetric ({pq} vs {qp})");
        check!((0.0..=1.0).contains(&pq), "trial {trial}: out of range ({pq})");

        let pp: f64 = js_distance(&p, &p);
        check!(pp <= C1_SLACK, "trial {trial}: self-distance {pp}");

        let pr: f64 = js_distance(&p, &r);
        let qr: f64 = js_distance(&q, &r);
        check!(
            pr <= pq + qr + C1_SLACK,
            "trial {trial}: triangle violated ({pr} > {pq} + {qr})"
        );
    }
    let elapsed = started.elapsed();
    check!(elapsed <= C1_BUDGET, "took {elapsed:?}, budget {C1_BUDGET:?}");
    Ok(())
}

fn js_alphabet() -> Vec<char> {
    let mut alphabet: Vec<char> = ('a'..='z').chain('A'..='Z').chain('0'..='9').collect();
    alphabet.extend(['-', '_', '.', '~']);
    alphabet.sort_unstable();
    alphabet
}

/// A random point in the probability simplex over `alphabet`, with a
/// random subset of the support zeroed out so the 0·log 0 edges get
/// exercised.
fn random_distribution(rng: &mut ChaCha8Rng, alphabet: &[char]) -> CharDistribution<f64> {
    loop {
        let mut probs: Vec<f64> = (0..alphabet.len())
            .map(|_| {
                if rng.gen_bool(0.3) {
                    0.0
                } else {
                    -(1.0 - rng.gen::<f64>()).ln()
                }
            })
            .collect();
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            continue; // everything zeroed; resample
        }
        for p in &mut probs {
            *p /= total;
        }
        return CharDistribution { alphabet: alphabet.to_vec(), probs, support_count: 0 };
    }
}

// ---------------------------------------------------------------------------
// 2. Quartile/threshold oracle
// ---------------------------------------------------------------------------

fn c02_quartile_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for trial in 0..10_000 {
        let n = rng.gen_range(4..=60);
        // alternate integer-valued multisets (heavy duplication, the
        // detector's actual regime) and continuous samples
        let values: Vec<f64> = if trial % 2 == 0 {
            (0..n).map(|_| rng.gen_range(0..30) as f64).collect()
        } else {
            (0..n).map(|_| rng.gen::<f64>() * 100.0).collect()
        };

        let summary = quartiles(&values).map_err(|e| format!("trial {trial}: {e}"))?;
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q1 = oracle_quantile(&sorted, 0.25);
        let q3 = oracle_quantile(&sorted, 0.75);

        check!((summary.q1 - q1).abs() <= C2_TOL, "trial {trial}: q1 {} vs oracle {q1}", summary.q1);
        check!((summary.q3 - q3).abs() <= C2_TOL, "trial {trial}: q3 {} vs oracle {q3}", summary.q3);
        check!(
            (summary.iqr - (q3 - q1)).abs() <= C2_TOL,
            "trial {trial}: iqr {} vs oracle {}",
            summary.iqr,
            q3 - q1
        );
        check!(
            (summary.threshold - (q3 + 1.5 * (q3 - q1))).abs() <= C2_TOL,
            "trial {trial}: threshold {} vs oracle {}",
            summary.threshold,
            q3 + 1.5 * (q3 - q1)
        );
    }
    Ok(())
}

/// Independent linear-interpolation quantile: index h = (n−1)·p, value
/// interpolated between the two bracketing order statistics.
fn oracle_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

// ---------------------------------------------------------------------------
// 3. Detection recall/precision
// ---------------------------------------------------------------------------

fn c03_detection() -> Result<(), String> {
    let started = Instant::now();
    let words = big_wordlist();
    let date: NaiveDate = DATE.parse().unwrap();

    // 20 attacks, three generator families round-robin, each producing 360
    // distinct unresolved names — more than five times the stage-1
    // threshold (≈12) of the 10,000-domain background population.
    let attacks: Vec<AttackSpec> = (0..20)
        .map(|i| {
            let start = DAY + 30_000 + i as i64 * 1_500;
            let generator = match i % 3 {
                0 => GeneratorConfig {
                    family: Family::Dictionary,
                    dictionary: Some(words[..2_000].to_vec()),
                    rate: 0.4,
                    seed: 500 + i as u64,
                    ..GeneratorConfig::default()
                },
                1 => GeneratorConfig {
                    family: Family::Incremental,
                    rate: 0.4,
                    seed: 500 + i as u64,
                    ..GeneratorConfig::default()
                },
                _ => GeneratorConfig {
                    family: Family::Random,
                    alphabet: "0123456789abcdef".into(),
                    length_range: (12, 16),
                    rate: 0.4,
                    seed: 500 + i as u64,
                    ..GeneratorConfig::default()
                },
            };
            AttackSpec { sld: format!("target{i:02}.com"), start, end: start + 900, generator }
        })
        .collect();

    let scenario = ScenarioConfig {
        seed: 303,
        date,
        baseline_days: 2,
        source: "sensor1".into(),
        background: BackgroundConfig {
            domains: 10_000,
            log_normal_mu: 3.1,
            log_normal_sigma: 0.9,
            popular_mode: false,
        },
        attacks,
        interleave: InterleaveConfig { jitter_seconds: 2, paths: 3 },
    };
    let (events, truth) = generate_scenario(&scenario).map_err(|e| e.to_string())?;
    let n_events = events.len();
    check!(
        (500_000..=3_000_000).contains(&n_events),
        "scenario produced {n_events} events, expected on the order of 10^6"
    );

    let found = run_detector(events, date)?;
    let truth_slds: Vec<&str> = truth.attacks.iter().map(|a| a.sld.as_str()).collect();
    let hits = found.iter().filter(|a| truth_slds.contains(&a.sld.as_str())).count();
    let false_positives = found.len() - hits;
    let recall = hits as f64 / truth.attacks.len() as f64;

    check!(
        recall >= C3_MIN_RECALL,
        "recall {recall:.3} < {C3_MIN_RECALL} ({hits}/{} found)",
        truth.attacks.len()
    );
    check!(false_positives == 0, "{false_positives} false positives");
    let elapsed = started.elapsed();
    check!(
        elapsed <= C3_BUDGET,
        "took {elapsed:?} for {n_events} events, budget {C3_BUDGET:?}"
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// 4. DBSCAN equivalence
// ---------------------------------------------------------------------------

fn c04_dbscan_equivalence() -> Result<(), String> {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let n = 50;
        let ids: Vec<AttackId> = (0..n)
            .map(|i| AttackId {
                sld: format!("d{i}.com"),
                date: DATE.parse().unwrap(),
                source: "s".into(),
            })
            .collect();
        let mut entries = vec![0.0f64; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = rng.gen::<f64>();
                entries[i * n + j] = d;
                entries[j * n + i] = d;
            }
        }
        let matrix = DistanceMatrix::from_fn(ids, |i, j| entries[i * n + j]);
        let eps = [0.2, 0.25, 0.3][seed as usize % 3];
        let min_points = [3, 4, 5][seed as usize % 3];

        let fast = dbscan(&matrix, eps, min_points);
        let slow = dbscan_reference(&matrix, eps, min_points);
        check!(
            canonical(&fast) == canonical(&slow),
            "seed {seed} (eps {eps}, min_points {min_points}): labels diverge\n fast: {fast:?}\n slow: {slow:?}"
        );
    }
    Ok(())
}

/// Textbook quadratic DBSCAN on a precomputed matrix: core points have at
/// least `min_points` neighbors within `eps` inclusive (counting
/// themselves), clusters are the connected components of core points, and
/// border points join their nearest core (lowest index on ties).
fn dbscan_reference(matrix: &DistanceMatrix<f64>, eps: f64, min_points: usize) -> Vec<i64> {
    let n = matrix.len();
    let within = |i: usize, j: usize| matrix.get(i, j) <= eps;
    let is_core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| within(i, j)).count() >= min_points)
        .collect();

    let mut labels = vec![-1i64; n];
    let mut next = 0i64;
    for start in 0..n {
        if !is_core[start] || labels[start] != -1 {
            continue;
        }
        let mut stack = vec![start];
        labels[start] = next;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if is_core[v] && labels[v] == -1 && within(u, v) {
                    labels[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if is_core[i] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if is_core[j] && within(i, j) {
                let d = matrix.get(i, j);
                let better = match best {
                    None => true,
                    Some((bd, bj)) => d < bd || (d == bd && j < bj),
                };
                if better {
                    best = Some((d, j));
                }
            }
        }
        if let Some((_, j)) = best {
            labels[i] = labels[j];
        }
    }
    labels
}

// ---------------------------------------------------------------------------
// 5. Lexicographic calibration
// ---------------------------------------------------------------------------

fn c05_lex_calibration() -> Result<(), String> {
    let suffixes = load_suffixes();
    let date: NaiveDate = DATE.parse().unwrap();
    let words: Vec<String> = (0..2_500).map(|i| format!("w{i:04}")).collect();

    let attack = |sld: &str, offset: i64, order: Order, seed: u64| AttackSpec {
        sld: sld.into(),
        start: DAY + offset,
        end: DAY + offset + 2_000,
        generator: GeneratorConfig {
            family: Family::Dictionary,
            dictionary: Some(words.clone()),
            rate: 0.8,
            order,
            seed,
            ..GeneratorConfig::default()
        },
    };
    let scenario = ScenarioConfig {
        seed: 505,
        date,
        baseline_days: 2,
        source: "sensor1".into(),
        background: BackgroundConfig { domains: 60, ..BackgroundConfig::default() },
        attacks: vec![
            attack("asc.com", 10_000, Order::Ascending, 901),
            attack("shuf.com", 14_000, Order::Shuffled, 902),
            attack("desc.com", 18_000, Order::Descending, 903),
        ],
        interleave: InterleaveConfig { jitter_seconds: 2, paths: 5 },
    };
    let (events, _) = generate_scenario(&scenario).map_err(|e| e.to_string())?;
    let found = run_detector(events, date)?;

    let ratio_of = |sld: &str| -> Result<f64, String> {
        let record = found
            .iter()
            .find(|a| a.sld == sld)
            .ok_or_else(|| format!("attack {sld} not detected"))?;
        lex_ratio(record, &suffixes).map_err(|e| e.to_string())
    };
    let ascending = ratio_of("asc.com")?;
    let shuffled = ratio_of("shuf.com")?;
    let descending = ratio_of("desc.com")?;

    check!(
        ascending >= C5_SORTED_MIN,
        "sorted walk through 5 jittered paths: lex_ratio {ascending:.3} < {C5_SORTED_MIN}"
    );
    check!(
        (shuffled - 0.5).abs() <= C5_SHUFFLED_TOL,
        "shuffled walk: lex_ratio {shuffled:.3} outside 0.5 ± {C5_SHUFFLED_TOL}"
    );
    check!(
        descending <= C5_DESCENDING_MAX,
        "descending walk: lex_ratio {descending:.3} > {C5_DESCENDING_MAX}"
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// 6. Uniformity calibration
// ---------------------------------------------------------------------------

fn c06_uniformity() -> Result<(), String> {
    let suffixes = load_suffixes();
    let alphabet: Vec<char> = "abcdefghijklmnopqr".chars().collect();
    let generator = GeneratorConfig {
        family: Family::Incremental,
        alphabet: alphabet.iter().collect(),
        rate: 2.0,
        seed: 606,
        ..GeneratorConfig::default()
    };
    // 2 events/s over 50,000 s = exactly 10^5 generated names
    let events = generate_attack(&generator, "victim.com", DAY, DAY + 50_000, "sensor1")
        .map_err(|e| e.to_string())?;
    check!(events.len() == 100_000, "generated {} events, wanted 100000", events.len());

    let prefixes: Vec<String> = events
        .iter()
        .map(|e| parse_fqdn(&e.qname, &suffixes).map(|p| p.prefix))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let observed: CharDistribution<f64> =
        char_distribution(&prefixes, DistributionMode::Overall, &alphabet)
            .map_err(|e| e.to_string())?;
    let uniform = uniform_distribution(&alphabet);
    let dist = js_distance(&observed, &uniform);
    check!(
        dist <= C6_MAX_DIST,
        "J-S distance to uniform {dist:.4} > {C6_MAX_DIST} at 10^5 prefixes"
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// 7. Dictionary fingerprint
// ---------------------------------------------------------------------------

fn c07_dictionary_fingerprint() -> Result<(), String> {
    let suffixes = load_suffixes();
    let words = big_wordlist();
    check!(words.len() == 420_000, "wordlist has {} entries", words.len());
    let big = Dictionary::from_words(words.iter().cloned()).map_err(|e| e.to_string())?;
    let source = &words[..2_000];
    let source_dict = Dictionary::from_words(source.to_vec()).map_err(|e| e.to_string())?;

    for seed in 0..5u64 {
        let generator = GeneratorConfig {
            family: Family::Dictionary,
            dictionary: Some(source.to_vec()),
            rate: 0.8,
            seed: 700 + seed,
            ..GeneratorConfig::default()
        };
        let events = generate_attack(&generator, "dict.com", DAY, DAY + 900, "s1")
            .map_err(|e| e.to_string())?;
        let record = attack_record("dict.com", events);
        let overlap: f64 =
            overlap_ratio(&record, &suffixes, &source_dict).map_err(|e| e.to_string())?;
        check!(
            overlap >= C7_DICT_MIN,
            "dictionary attack (seed {seed}) vs source list: overlap {overlap:.4} < {C7_DICT_MIN}"
        );
    }

    for seed in 0..5u64 {
        let generator = GeneratorConfig {
            family: Family::Random,
            alphabet: "0123456789abcdef".into(),
            length_range: (12, 16),
            rate: 0.8,
            seed: 710 + seed,
            ..GeneratorConfig::default()
        };
        let events = generate_attack(&generator, "rand.com", DAY, DAY + 900, "s1")
            .map_err(|e| e.to_string())?;
        let record = attack_record("rand.com", events);
        let overlap: f64 = overlap_ratio(&record, &suffixes, &big).map_err(|e| e.to_string())?;
        check!(
            overlap <= C7_RANDOM_MAX,
            "random attack (seed {seed}) vs 420k-word list: overlap {overlap:.4} > {C7_RANDOM_MAX}"
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 8. End-to-end clustering
// ---------------------------------------------------------------------------

/// Five generator families with distinct configurations; returns the
/// specs and a `sld → family index` map.
fn five_family_attacks(
    words: &[String],
    n_per_family: usize,
    day: i64,
    seed_base: u64,
) -> (Vec<AttackSpec>, BTreeMap<String, i64>) {
    let mut specs = Vec::new();
    let mut families = BTreeMap::new();
    let mut slot = 0i64;
    for family_idx in 0..5i64 {
        for k in 0..n_per_family {
            let seed = seed_base + slot as u64;
            let generator = match family_idx {
                0 => GeneratorConfig {
                    family: Family::Dictionary,
                    dictionary: Some(words[..3_000].to_vec()),
                    rate: 0.4,
                    seed,
                    ..GeneratorConfig::default()
                },
                1 => GeneratorConfig {
                    family: Family::Dictionary,
                    dictionary: Some(words[3_000..8_000].to_vec()),
                    order: Order::Shuffled,
                    qtype_mix: BTreeMap::from([(16, 0.5), (5, 0.5)]),
                    rate: 0.4,
                    seed,
                    ..GeneratorConfig::default()
                },
                2 => GeneratorConfig {
                    family: Family::Incremental,
                    alphabet: "abcdefghi".into(),
                    rate: 0.4,
                    seed,
                    ..GeneratorConfig::default()
                },
                3 => GeneratorConfig {
                    family: Family::Random,
                    alphabet: "0123456789abcdef".into(),
                    length_range: (12, 16),
                    qtype_mix: BTreeMap::from([(1, 0.7), (28, 0.3)]),
                    rate: 0.4,
                    seed,
                    ..GeneratorConfig::default()
                },
                _ => GeneratorConfig {
                    family: Family::Random,
                    alphabet: "jklmnopqrstuvwxyz".into(),
                    length_range: (5, 7),
                    qtype_mix: BTreeMap::from([(12, 1.0)]),
                    rate: 0.4,
                    seed,
                    ..GeneratorConfig::default()
                },
            };
            let sld = format!("fam{family_idx}-{k:02}.com");
            let start = day + 2_000 + slot * 620;
            specs.push(AttackSpec { sld: sld.clone(), start, end: start + 900, generator });
            families.insert(sld, family_idx);
            slot += 1;
        }
    }
    (specs, families)
}

fn c08_end_to_end_clustering() -> Result<(), String> {
    let started = Instant::now();
    let suffixes = load_suffixes();
    let words = big_wordlist();
    let date: NaiveDate = DATE.parse().unwrap();

    let (attacks, families) = five_family_attacks(&words, 20, DAY, 800);
    let scenario = ScenarioConfig {
        seed: 808,
        date,
        baseline_days: 2,
        source: "sensor1".into(),
        background: BackgroundConfig { domains: 600, ..BackgroundConfig::default() },
        attacks,
        interleave: InterleaveConfig { jitter_seconds: 2, paths: 3 },
    };
    let (events, _) = generate_scenario(&scenario).map_err(|e| e.to_string())?;
    let found = run_detector(events, date)?;
    check!(found.len() == 100, "expected the 100 planted attacks, detected {}", found.len());

    let corpus = featurize(&found, &suffixes, &words)?;
    let report = cluster_report(&corpus, 10, None).map_err(|e| e.to_string())?;
    check!(
        report.clusters.len() >= 5,
        "recovered {} clusters, wanted ≥ 5",
        report.clusters.len()
    );

    let truth: Vec<i64> = corpus.ids.iter().map(|id| families[&id.sld]).collect();
    let ari = adjusted_rand_index(&report.labels, &truth);
    check!(ari >= C8_MIN_ARI, "ARI vs truth {ari:.3} < {C8_MIN_ARI}");

    // a corpus with no family structure stays unclustered
    let mut rng = ChaCha8Rng::seed_from_u64(4_242);
    let noise: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..corpus.columns.len()).map(|_| rng.gen()).collect())
        .collect();
    let labels = hdbscan(&noise, 10, 10).map_err(|e| e.to_string())?;
    let noise_frac = labels.iter().filter(|&&l| l == -1).count() as f64 / labels.len() as f64;
    check!(
        noise_frac >= C8_MIN_NOISE_FRAC,
        "only {:.0}% of a structure-free corpus labeled noise",
        noise_frac * 100.0
    );

    let elapsed = started.elapsed();
    check!(elapsed <= C8_BUDGET, "took {elapsed:?}, budget {C8_BUDGET:?}");
    Ok(())
}

// ---------------------------------------------------------------------------
// 9. Drift stability
// ---------------------------------------------------------------------------

fn c09_drift_stability() -> Result<(), String> {
    let suffixes = load_suffixes();
    let words = big_wordlist();
    let base_date: NaiveDate = DATE.parse().unwrap();

    let dict_gen = |seed: u64| GeneratorConfig {
        family: Family::Dictionary,
        dictionary: Some(words[..3_000].to_vec()),
        rate: 0.4,
        seed,
        ..GeneratorConfig::default()
    };
    let incr_gen = |seed: u64| GeneratorConfig {
        family: Family::Incremental,
        alphabet: "abcdefghi".into(),
        rate: 0.4,
        seed,
        ..GeneratorConfig::default()
    };
    let rand_gen = |seed: u64| GeneratorConfig {
        family: Family::Random,
        alphabet: "0123456789abcdef".into(),
        length_range: (12, 16),
        rate: 0.4,
        seed,
        ..GeneratorConfig::default()
    };
    // the novel family: short letter labels, AAAA-only — unlike anything
    // in the baseline
    let novel_gen = |seed: u64| GeneratorConfig {
        family: Family::Random,
        alphabet: "stuvwxyz".into(),
        length_range: (4, 6),
        qtype_mix: BTreeMap::from([(28, 1.0)]),
        rate: 0.4,
        seed,
        ..GeneratorConfig::default()
    };

    // --- baseline batch: 20 dictionary + 20 incremental + 20 random hex
    let mut specs = Vec::new();
    let mut family_of = BTreeMap::new();
    for k in 0..60 {
        let (tag, generator): (&str, GeneratorConfig) = match k / 20 {
            0 => ("dict", dict_gen(900 + k as u64)),
            1 => ("incr", incr_gen(900 + k as u64)),
            _ => ("rand", rand_gen(900 + k as u64)),
        };
        let sld = format!("base-{tag}{:02}.com", k % 20);
        let start = DAY + 2_000 + k as i64 * 1_000;
        specs.push(AttackSpec { sld: sld.clone(), start, end: start + 900, generator });
        family_of.insert(sld, tag);
    }
    let baseline_scenario = ScenarioConfig {
        seed: 909,
        date: base_date,
        baseline_days: 2,
        source: "sensor1".into(),
        background: BackgroundConfig { domains: 600, ..BackgroundConfig::default() },
        attacks: specs,
        interleave: InterleaveConfig { jitter_seconds: 2, paths: 3 },
    };
    let (events, _) = generate_scenario(&baseline_scenario).map_err(|e| e.to_string())?;
    let baseline_attacks = run_detector(events, base_date)?;
    check!(baseline_attacks.len() == 60, "baseline: detected {}", baseline_attacks.len());

    // freeze archetypes on the baseline corpus; featurize both batches
    // against them
    let params = ArchetypeParams { eps: Some(0.2), min_points: 5, ..ArchetypeParams::default() };
    let archetypes =
        select_archetypes::<f64>(&baseline_attacks, &suffixes, &params).map_err(|e| e.to_string())?;
    let dictionary = Dictionary::from_words(words.iter().cloned()).map_err(|e| e.to_string())?;
    let config = FeatureConfig::default();
    let corpus_of = |attacks: &[AttackRecord]| -> Result<FeatureCorpus<f64>, String> {
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        for attack in attacks {
            let fv = feature_vector::<f64>(attack, &suffixes, &archetypes, &dictionary, &config)
                .map_err(|e| e.to_string())?;
            ids.push(AttackId::from(attack));
            vectors.push(fv.to_vec());
        }
        let columns =
            FeatureVector::<f64>::column_names(&config.tracked_qtypes, archetypes.n_distributions());
        FeatureCorpus::new(ids, columns, vectors).map_err(|e| e.to_string())
    };
    let baseline = corpus_of(&baseline_attacks)?;
    let baseline_report = cluster_report(&baseline, 10, None).map_err(|e| e.to_string())?;
    check!(
        baseline_report.clusters.len() == 3,
        "baseline formed {} clusters, wanted 3",
        baseline_report.clusters.len()
    );

    // majority family per baseline cluster
    let mut cluster_of_family: BTreeMap<&str, i64> = BTreeMap::new();
    for (id, &label) in baseline.ids.iter().zip(&baseline_report.labels) {
        if label >= 0 {
            cluster_of_family.entry(family_of[&id.sld]).or_insert(label);
        }
    }

    // --- fresh batch a week later: 10 dictionary + 10 incremental + 10 novel
    let new_date = base_date + chrono::Days::new(7);
    let new_day = DAY + 7 * 86_400;
    let mut specs = Vec::new();
    let mut new_family_of = BTreeMap::new();
    for k in 0..30 {
        let (tag, generator): (&str, GeneratorConfig) = match k / 10 {
            0 => ("dict", dict_gen(950 + k as u64)),
            1 => ("incr", incr_gen(950 + k as u64)),
            _ => ("novel", novel_gen(950 + k as u64)),
        };
        let sld = format!("new-{tag}{:02}.com", k % 10);
        let start = new_day + 2_000 + k as i64 * 1_500;
        specs.push(AttackSpec { sld: sld.clone(), start, end: start + 900, generator });
        new_family_of.insert(sld, tag);
    }
    let new_scenario = ScenarioConfig {
        seed: 910,
        date: new_date,
        baseline_days: 2,
        source: "sensor1".into(),
        background: BackgroundConfig { domains: 600, ..BackgroundConfig::default() },
        attacks: specs,
        interleave: InterleaveConfig { jitter_seconds: 2, paths: 3 },
    };
    let (events, _) = generate_scenario(&new_scenario).map_err(|e| e.to_string())?;
    let new_attacks = run_detector(events, new_date)?;
    check!(new_attacks.len() == 30, "new batch: detected {}", new_attacks.len());
    let new_corpus = corpus_of(&new_attacks)?;

    let drift = drift_assign(&baseline, &baseline_report.labels, &new_corpus, 10, None)
        .map_err(|e| e.to_string())?;

    let mut baseline_family_total = 0usize;
    let mut baseline_family_hits = 0usize;
    let mut novel_total = 0usize;
    let mut novel_unassigned = 0usize;
    for (id, &assigned) in new_corpus.ids.iter().zip(&drift.assignments) {
        let family = new_family_of[&id.sld];
        if family == "novel" {
            novel_total += 1;
            if assigned == -1 {
                novel_unassigned += 1;
            }
        } else {
            baseline_family_total += 1;
            if assigned == cluster_of_family[family] {
                baseline_family_hits += 1;
            }
        }
    }
    let reassigned = baseline_family_hits as f64 / baseline_family_total as f64;
    let unassigned = novel_unassigned as f64 / novel_total as f64;
    check!(
        reassigned >= C9_MIN_REASSIGNED,
        "only {baseline_family_hits}/{baseline_family_total} baseline-family attacks returned to their cluster"
    );
    check!(
        unassigned >= C9_MIN_NOVEL_UNASSIGNED,
        "only {novel_unassigned}/{novel_total} novel-family attacks left unassigned"
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// 10. Determinism
// ---------------------------------------------------------------------------

fn c10_determinism() -> Result<(), String> {
    let dir = std::env::temp_dir().join(format!("slowdrip-accept-{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
    }
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;

    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let mut scenario = format!(
        "seed = 77\ndate = \"{DATE}\"\nbaseline_days = 2\nsource = \"sensor1\"\n\n\
         [background]\ndomains = 250\n\n[interleave]\njitter_seconds = 2\npaths = 3\n"
    );
    for i in 0..12 {
        let start = DAY + 36_000 + i as i64 * 1_200;
        let generator = match i / 4 {
            0 => format!(
                "{{ family = \"dictionary\", dictionary_path = {:?}, rate = 0.4, seed = {} }}",
                data.join("wordlist.txt").to_str().unwrap(),
                100 + i
            ),
            1 => format!("{{ family = \"incremental\", rate = 0.4, seed = {} }}", 100 + i),
            _ => format!(
                "{{ family = \"random\", alphabet = \"0123456789abcdef\", \
                 length_range = [12, 16], rate = 0.4, seed = {} }}",
                100 + i
            ),
        };
        scenario.push_str(&format!(
            "\n[[attacks]]\nsld = \"vic{i}.com\"\nstart = {start}\nend = {}\ngenerator = {generator}\n",
            start + 900
        ));
    }
    fs::write(dir.join("scenario.toml"), scenario).map_err(|e| e.to_string())?;
    let config = format!(
        "suffix_list = {:?}\ndictionary = {:?}\neps = 0.2\nmin_points = 3\nmin_cluster_size = 4\n",
        data.join("public_suffix_list.dat").to_str().unwrap(),
        data.join("wordlist.txt").to_str().unwrap(),
    );
    fs::write(dir.join("config.toml"), config).map_err(|e| e.to_string())?;

    for run in ["a", "b"] {
        let root = dir.join(run);
        let p = |s: &str| root.join(s).to_str().unwrap().to_string();
        let cfg = dir.join("config.toml");
        let steps: Vec<Vec<String>> = vec![
            vec![
                "synth".into(),
                dir.join("scenario.toml").to_str().unwrap().into(),
                "--out".into(),
                p("run"),
            ],
            vec![
                "detect".into(),
                p(&format!("run/events_{DATE}.tsv")),
                p("run/events_2018-08-01.tsv"),
                "--out".into(),
                p("det"),
            ],
            vec!["archetypes".into(), "build".into(), "--attacks".into(), p("det"), "--out".into(), p("arch")],
            vec![
                "featurize".into(),
                "--attacks".into(),
                p("det"),
                "--archetypes".into(),
                p("arch/archetypes.json"),
                "--out".into(),
                p("feat"),
            ],
            vec!["cluster".into(), p("feat/features.csv"), "--out".into(), p("clus")],
        ];
        for step in steps {
            let out = Command::new(env!("CARGO_BIN_EXE_slowdrip"))
                .arg("--config")
                .arg(&cfg)
                .args(&step)
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!(
                    "run {run}, step {:?} failed: {}",
                    step[0],
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
        }
    }

    let artifacts = [
        format!("run/events_{DATE}.tsv"),
        "run/truth.json".into(),
        "det/attacks.jsonl".into(),
        "arch/archetypes.json".into(),
        "feat/features.csv".into(),
        "clus/clusters.json".into(),
        "clus/report.md".into(),
        "clus/umap_input.csv".into(),
        "clus/feature_corr.csv".into(),
    ];
    for artifact in &artifacts {
        let a = fs::read(dir.join("a").join(artifact)).map_err(|e| format!("{artifact}: {e}"))?;
        let b = fs::read(dir.join("b").join(artifact)).map_err(|e| format!("{artifact}: {e}"))?;
        check!(a == b, "{artifact} differs between identical runs");
    }
    fs::remove_dir_all(&dir).ok();
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn load_suffixes() -> SuffixSet {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/public_suffix_list.dat");
    SuffixSet::load(&path).expect("suffix list loads")
}

/// Splits a scenario's events into the analysis day and the day two days
/// earlier, then runs the detector.
fn run_detector(events: Vec<PdnsEvent>, date: NaiveDate) -> Result<Vec<AttackRecord>, String> {
    let suffixes = load_suffixes();
    let baseline_date = date - chrono::Days::new(2);
    let mut day = Vec::new();
    let mut baseline = Vec::new();
    for event in events {
        let d = event.date();
        if d == date {
            day.push(event);
        } else if d == baseline_date {
            baseline.push(event);
        }
    }
    let config = DetectorConfig { target_date: Some(date), ..DetectorConfig::default() };
    detect_attacks(day, baseline, &suffixes, &config).map_err(|e| e.to_string())
}

/// Wraps raw generator output in an attack record (detection bookkeeping
/// fields are irrelevant to the feature extractors).
fn attack_record(sld: &str, events: Vec<PdnsEvent>) -> AttackRecord {
    AttackRecord {
        sld: sld.into(),
        date: events[0].date(),
        source: events[0].source.clone(),
        stage1_count: 0,
        stage2_delta: 0,
        events,
    }
}

/// Builds archetypes (fixed radius — deterministic generators make
/// same-family attacks exact char0 duplicates, so the k-distance elbow has
/// no shape here) and extracts the full feature corpus.
fn featurize(
    attacks: &[AttackRecord],
    suffixes: &SuffixSet,
    words: &[String],
) -> Result<FeatureCorpus<f64>, String> {
    let params = ArchetypeParams { eps: Some(0.2), min_points: 5, ..ArchetypeParams::default() };
    let archetypes =
        select_archetypes::<f64>(attacks, suffixes, &params).map_err(|e| e.to_string())?;
    let dictionary = Dictionary::from_words(words.iter().cloned()).map_err(|e| e.to_string())?;
    let config = FeatureConfig::default();
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for attack in attacks {
        let fv = feature_vector::<f64>(attack, suffixes, &archetypes, &dictionary, &config)
            .map_err(|e| e.to_string())?;
        ids.push(AttackId::from(attack));
        vectors.push(fv.to_vec());
    }
    let columns =
        FeatureVector::<f64>::column_names(&config.tracked_qtypes, archetypes.n_distributions());
    FeatureCorpus::new(ids, columns, vectors).map_err(|e| e.to_string())
}

/// 420,000 synthetic dictionary words: `{stem}{connector}{number}`,
/// deterministic and sorted construction order.
fn big_wordlist() -> Vec<String> {
    const STEMS: [&str; 50] = [
        "account", "admin", "api", "app", "auth", "backup", "beta", "blog", "cache", "cdn",
        "chat", "cloud", "corp", "data", "demo", "dev", "dns", "docs", "edge", "files",
        "forum", "ftp", "gateway", "git", "help", "host", "imap", "intranet", "lab", "login",
        "mail", "media", "mobile", "monitor", "news", "ns", "office", "panel", "portal", "proxy",
        "relay", "search", "secure", "shop", "smtp", "stage", "static", "test", "vpn", "web",
    ];
    const CONNECTORS: [&str; 6] = ["", "-", "0", "x", "-eu-", "-us-"];
    let mut words = Vec::with_capacity(420_000);
    for stem in STEMS {
        for connector in CONNECTORS {
            for n in 0..1_400 {
                words.push(format!("{stem}{connector}{n}"));
            }
        }
    }
    words
}

/// Renumbers cluster labels by first appearance so two labelings compare
/// structurally; −1 stays −1.
fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = BTreeMap::new();
    let mut next = 0i64;
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                *map.entry(l).or_insert_with(|| {
                    let v = next;
                    next += 1;
                    v
                })
            }
        })
        .collect()
}
