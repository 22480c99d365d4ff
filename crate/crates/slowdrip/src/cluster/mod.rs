//! Family clustering over attack feature vectors, reporting, and drift
//! re-evaluation against a persisted baseline.

mod hdbscan;

pub use hdbscan::hdbscan;

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::archetype::AttackId;
use crate::detector::quantile_sorted;
use crate::error::{Error, Result};
use crate::num::Real;

// ---------------------------------------------------------------------------
// Feature corpus (vectors + identities), CSV-backed
// ---------------------------------------------------------------------------

/// A featurized corpus: one identified vector per attack.
///
/// The CSV form has three identity columns (`sld`, `date`, `source`)
/// followed by one column per feature; numbers round-trip exactly because
/// they are written in shortest-representation form. Identity fields must
/// not contain commas (DNS names and sensor names never do).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCorpus<T> {
    pub ids: Vec<AttackId>,
    pub columns: Vec<String>,
    pub vectors: Vec<Vec<T>>,
}

impl<T: Real> FeatureCorpus<T> {
    pub fn new(ids: Vec<AttackId>, columns: Vec<String>, vectors: Vec<Vec<T>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::invalid("corpus", "ids and vectors disagree in length"));
        }
        if let Some(bad) = vectors.iter().find(|v| v.len() != columns.len()) {
            return Err(Error::invalid(
                "corpus",
                format!("vector of length {} under {} columns", bad.len(), columns.len()),
            ));
        }
        Ok(FeatureCorpus { ids, columns, vectors })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Renders the corpus as CSV (header always present).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("sld,date,source");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (id, vector) in self.ids.iter().zip(&self.vectors) {
            out.push_str(&format!("{},{},{}", id.sld, id.date, id.source));
            for v in vector {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Parses CSV produced by [`FeatureCorpus::to_csv_string`]. Leading
    /// `#` comment lines (provenance headers) are skipped.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("feature csv", "missing header"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[..3] != ["sld", "date", "source"] {
            return Err(Error::invalid(
                "feature csv",
                "header must start with sld,date,source",
            ));
        }
        let columns: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 + columns.len() {
                return Err(Error::invalid(
                    "feature csv",
                    format!("line {}: {} fields, expected {}", lineno + 2, fields.len(), 3 + columns.len()),
                ));
            }
            let date = chrono::NaiveDate::from_str(fields[1])
                .map_err(|e| Error::invalid("feature csv", format!("line {}: {e}", lineno + 2)))?;
            ids.push(AttackId {
                sld: fields[0].to_string(),
                date,
                source: fields[2].to_string(),
            });
            let vector: Vec<T> = fields[3..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map(T::of_f64)
                        .map_err(|e| Error::invalid("feature csv", format!("line {}: {e}", lineno + 2)))
                })
                .collect::<Result<_>>()?;
            vectors.push(vector);
        }
        FeatureCorpus::new(ids, columns, vectors)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// Cluster report
// ---------------------------------------------------------------------------

/// A feature singled out because its cluster mean sits far from the corpus
/// mean, in corpus standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantFeature {
    pub name: String,
    pub z: f64,
    pub cluster_mean: f64,
    pub corpus_mean: f64,
}

/// One discovered cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: i64,
    pub size: usize,
    /// Distinct attack dates among the members.
    pub day_span: usize,
    /// Up to five most frequent member domains.
    pub sample_domains: Vec<String>,
    /// Top features by |z|, most deviant first.
    pub dominant_features: Vec<DominantFeature>,
}

/// Full clustering outcome over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Per-attack label aligned with the corpus order; −1 = unclustered.
    pub labels: Vec<i64>,
    /// Clusters ordered largest first.
    pub clusters: Vec<ClusterSummary>,
    pub n_points: usize,
    pub n_clustered: usize,
    /// Fraction of the corpus inside some cluster.
    pub coverage: f64,
}

/// How many dominant features each cluster row carries.
const DOMINANT_FEATURES_PER_CLUSTER: usize = 3;

/// Most frequent sample domains listed per cluster.
const SAMPLE_DOMAINS_PER_CLUSTER: usize = 5;

/// Clusters the corpus and summarizes each cluster in Table-2 shape
/// (size, day span, sample domains, dominant features by |z|).
///
/// `min_samples` falls back to `min_cluster_size` when `None`.
pub fn cluster_report<T: Real>(
    corpus: &FeatureCorpus<T>,
    min_cluster_size: usize,
    min_samples: Option<usize>,
) -> Result<ClusterReport> {
    let labels = hdbscan(
        &corpus.vectors,
        min_cluster_size,
        min_samples.unwrap_or(min_cluster_size),
    )?;
    let report = summarize(corpus, &labels);
    Ok(report)
}

/// Builds a [`ClusterReport`] from externally computed labels.
pub fn summarize<T: Real>(corpus: &FeatureCorpus<T>, labels: &[i64]) -> ClusterReport {
    assert_eq!(labels.len(), corpus.len(), "labels must align with the corpus");
    let n = corpus.len();
    let n_cols = corpus.columns.len();

    // corpus-wide mean and population standard deviation per column
    let mut corpus_mean = vec![0.0f64; n_cols];
    for v in &corpus.vectors {
        for (m, x) in corpus_mean.iter_mut().zip(v) {
            *m += x.as_f64();
        }
    }
    for m in &mut corpus_mean {
        *m /= n.max(1) as f64;
    }
    let mut corpus_var = vec![0.0f64; n_cols];
    for v in &corpus.vectors {
        for ((var, x), m) in corpus_var.iter_mut().zip(v).zip(&corpus_mean) {
            let d = x.as_f64() - m;
            *var += d * d;
        }
    }
    for var in &mut corpus_var {
        *var /= n.max(1) as f64;
    }

    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        if label >= 0 {
            members.entry(label).or_default().push(i);
        }
    }

    let mut clusters: Vec<ClusterSummary> = members
        .iter()
        .map(|(&id, idx)| {
            let size = idx.len();
            let mut dates: Vec<_> = idx.iter().map(|&i| corpus.ids[i].date).collect();
            dates.sort_unstable();
            dates.dedup();

            let mut sld_counts: BTreeMap<&str, usize> = BTreeMap::new();
            for &i in idx {
                *sld_counts.entry(corpus.ids[i].sld.as_str()).or_default() += 1;
            }
            let mut by_freq: Vec<(&str, usize)> = sld_counts.into_iter().collect();
            by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            let sample_domains = by_freq
                .iter()
                .take(SAMPLE_DOMAINS_PER_CLUSTER)
                .map(|(s, _)| s.to_string())
                .collect();

            let mut dominant: Vec<DominantFeature> = (0..n_cols)
                .map(|c| {
                    let cluster_mean = idx
                        .iter()
                        .map(|&i| corpus.vectors[i][c].as_f64())
                        .sum::<f64>()
                        / size as f64;
                    let z = if corpus_var[c] > 0.0 {
                        (cluster_mean - corpus_mean[c]) / corpus_var[c].sqrt()
                    } else {
                        0.0
                    };
                    DominantFeature {
                        name: corpus.columns[c].clone(),
                        z,
                        cluster_mean,
                        corpus_mean: corpus_mean[c],
                    }
                })
                .collect();
            dominant.sort_by(|a, b| {
                b.z.abs()
                    .partial_cmp(&a.z.abs())
                    .expect("finite z")
                    .then(a.name.cmp(&b.name))
            });
            dominant.truncate(DOMINANT_FEATURES_PER_CLUSTER);

            ClusterSummary {
                id,
                size,
                day_span: dates.len(),
                sample_domains,
                dominant_features: dominant,
            }
        })
        .collect();
    clusters.sort_by(|a, b| b.size.cmp(&a.size).then(a.id.cmp(&b.id)));

    let n_clustered = labels.iter().filter(|&&l| l >= 0).count();
    ClusterReport {
        labels: labels.to_vec(),
        clusters,
        n_points: n,
        n_clustered,
        coverage: if n == 0 { 0.0 } else { n_clustered as f64 / n as f64 },
    }
}

/// Renders the report as a human-readable markdown table.
pub fn render_markdown(report: &ClusterReport) -> String {
    let mut out = String::new();
    out.push_str("# Attack cluster report\n\n");
    out.push_str(&format!(
        "{} attacks; {} clusters; {} clustered ({:.1}% coverage).\n\n",
        report.n_points,
        report.clusters.len(),
        report.n_clustered,
        report.coverage * 100.0
    ));
    out.push_str("| No. | Size | Days | Sample attack domains | Dominant features |\n");
    out.push_str("|----:|-----:|-----:|-----------------------|-------------------|\n");
    for c in &report.clusters {
        let feats = c
            .dominant_features
            .iter()
            .map(|f| format!("{} (z={:+.2}, {:.3} vs {:.3})", f.name, f.z, f.cluster_mean, f.corpus_mean))
            .collect::<Vec<_>>()
            .join("; ");
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            c.id,
            c.size,
            c.day_span,
            c.sample_domains.join(", "),
            feats
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Drift evaluation
// ---------------------------------------------------------------------------

/// Drift of a new batch against a persisted baseline clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// Per-new-attack baseline cluster id, or −1 when no baseline cluster
    /// claims the point.
    pub assignments: Vec<i64>,
    pub n_assigned: usize,
    /// Labels from re-clustering baseline ∪ new afresh (baseline points
    /// first, in their original order).
    pub union_labels: Vec<i64>,
    /// Agreement between the baseline labels and the union clustering
    /// restricted to baseline points (adjusted Rand index).
    pub baseline_agreement: f64,
}

/// Assigns each new vector to the baseline cluster of its nearest cluster
/// medoid, provided the distance is within that cluster's 90th-percentile
/// intra-cluster radius; otherwise −1. Also re-clusters the union of
/// baseline and new vectors from scratch for comparison.
pub fn drift_assign<T: Real>(
    baseline: &FeatureCorpus<T>,
    baseline_labels: &[i64],
    new: &FeatureCorpus<T>,
    min_cluster_size: usize,
    min_samples: Option<usize>,
) -> Result<DriftReport> {
    if baseline.is_empty() {
        return Err(Error::MissingBaseline("baseline corpus is empty".into()));
    }
    if baseline_labels.len() != baseline.len() {
        return Err(Error::IncompatibleState(
            "baseline labels do not align with the baseline corpus".into(),
        ));
    }
    if new.columns != baseline.columns {
        return Err(Error::IncompatibleState(
            "new corpus features differ from the baseline's".into(),
        ));
    }

    let dist = |a: &[T], b: &[T]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                let d = (x - y).as_f64();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };

    // medoid + 90th-percentile radius per baseline cluster
    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &label) in baseline_labels.iter().enumerate() {
        if label >= 0 {
            members.entry(label).or_default().push(i);
        }
    }
    let anchors: Vec<(i64, usize, f64)> = members
        .iter()
        .map(|(&id, idx)| {
            let medoid = idx
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let sa: f64 = idx.iter().map(|&j| dist(&baseline.vectors[a], &baseline.vectors[j])).sum();
                    let sb: f64 = idx.iter().map(|&j| dist(&baseline.vectors[b], &baseline.vectors[j])).sum();
                    sa.partial_cmp(&sb).expect("finite distance").then(a.cmp(&b))
                })
                .expect("non-empty cluster");
            let mut radii: Vec<f64> = idx
                .iter()
                .map(|&j| dist(&baseline.vectors[medoid], &baseline.vectors[j]))
                .collect();
            radii.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));
            let radius = quantile_sorted(&radii, 0.9);
            (id, medoid, radius)
        })
        .collect();

    let assignments: Vec<i64> = new
        .vectors
        .iter()
        .map(|v| {
            anchors
                .iter()
                .map(|&(id, medoid, radius)| (dist(v, &baseline.vectors[medoid]), id, radius))
                .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distance").then(a.1.cmp(&b.1)))
                .filter(|&(d, _, radius)| d <= radius)
                .map(|(_, id, _)| id)
                .unwrap_or(-1)
        })
        .collect();
    let n_assigned = assignments.iter().filter(|&&a| a >= 0).count();

    let union_vectors: Vec<Vec<T>> = baseline
        .vectors
        .iter()
        .chain(new.vectors.iter())
        .cloned()
        .collect();
    let union_labels = hdbscan(
        &union_vectors,
        min_cluster_size,
        min_samples.unwrap_or(min_cluster_size),
    )?;
    let baseline_agreement =
        adjusted_rand_index(baseline_labels, &union_labels[..baseline.len()]);

    Ok(DriftReport {
        assignments,
        n_assigned,
        union_labels,
        baseline_agreement,
    })
}

// ---------------------------------------------------------------------------
// Agreement and correlation helpers
// ---------------------------------------------------------------------------

/// Adjusted Rand index between two labelings of the same points. Labels
/// are compared verbatim (−1 acts as one more class). Degenerate cases
/// where the expected index equals the maximum index return 1.0.
pub fn adjusted_rand_index(a: &[i64], b: &[i64]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must align");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let comb2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut cont: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut rows: BTreeMap<i64, usize> = BTreeMap::new();
    let mut cols: BTreeMap<i64, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cont.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let sum_cont: f64 = cont.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    let expected = sum_rows * sum_cols / total;
    let max_index = (sum_rows + sum_cols) / 2.0;
    if max_index == expected {
        return 1.0;
    }
    (sum_cont - expected) / (max_index - expected)
}

/// Pearson correlation matrix between feature columns, exported for
/// inspection. Zero-variance columns correlate 0 with everything (their
/// diagonal stays 1).
pub fn feature_correlation<T: Real>(corpus: &FeatureCorpus<T>) -> Vec<Vec<f64>> {
    let n = corpus.len();
    let n_cols = corpus.columns.len();
    let mut mean = vec![0.0f64; n_cols];
    for v in &corpus.vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x.as_f64();
        }
    }
    for m in &mut mean {
        *m /= n.max(1) as f64;
    }
    let col = |c: usize| corpus.vectors.iter().map(move |v| v[c].as_f64());
    let mut out = vec![vec![0.0f64; n_cols]; n_cols];
    for i in 0..n_cols {
        out[i][i] = 1.0;
        for j in (i + 1)..n_cols {
            let cov: f64 = col(i)
                .zip(col(j))
                .map(|(x, y)| (x - mean[i]) * (y - mean[j]))
                .sum();
            let var_i: f64 = col(i).map(|x| (x - mean[i]) * (x - mean[i])).sum();
            let var_j: f64 = col(j).map(|y| (y - mean[j]) * (y - mean[j])).sum();
            let r = if var_i > 0.0 && var_j > 0.0 {
                cov / (var_i * var_j).sqrt()
            } else {
                0.0
            };
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
