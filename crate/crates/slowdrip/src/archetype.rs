//! Archetype discovery: reference character distributions for the unigram
//! features.
//!
//! The first-character distributions of attack prefixes fall into a small
//! number of shapes (dictionary words, digit-led counters, uniform
//! random, ...). Clustering a corpus of attacks by pairwise
//! Jensen-Shannon distance with DBSCAN and taking each sizable cluster's
//! medoid yields a set of *archetype* distributions; every later attack
//! is then fingerprinted by its distance to each archetype plus the
//! analytic uniform. The set is frozen on disk so feature vectors stay
//! comparable across runs and months.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::AttackRecord;
use crate::error::{Error, Result};
use crate::features::{
    attack_prefixes, char_distribution, js_distance, uniform_distribution, CharDistribution,
    DistributionMode,
};
use crate::num::Real;
use crate::pdns::SuffixSet;

/// Most data-derived archetypes kept, before the uniform is appended.
pub const MAX_ARCHETYPES: usize = 8;

// ---------------------------------------------------------------------------
// Attack identity
// ---------------------------------------------------------------------------

/// Identity of one attack in a corpus. Field order defines the ordering
/// used for every tie-break in this module.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttackId {
    pub sld: String,
    pub date: NaiveDate,
    pub source: String,
}

impl From<&AttackRecord> for AttackId {
    fn from(a: &AttackRecord) -> Self {
        AttackId {
            sld: a.sld.clone(),
            date: a.date,
            source: a.source.clone(),
        }
    }
}

impl fmt::Display for AttackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.date, self.sld, self.source)
    }
}

// ---------------------------------------------------------------------------
// Distance matrix
// ---------------------------------------------------------------------------

/// Symmetric pairwise distance matrix over an ordered set of attacks.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    pub ids: Vec<AttackId>,
    d: Vec<T>, // row-major n×n
}

impl<T: Real> DistanceMatrix<T> {
    /// Builds a matrix by evaluating `dist(i, j)` for `i < j`; the
    /// diagonal is exactly zero and symmetry holds by construction.
    pub fn from_fn(ids: Vec<AttackId>, mut dist: impl FnMut(usize, usize) -> T) -> Self {
        let n = ids.len();
        let mut d = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = dist(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistanceMatrix { ids, d }
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Distance between points `i` and `j`.
    pub fn get(&self, i: usize, j: usize) -> T {
        self.d[i * self.len() + j]
    }

    /// Checks symmetry, zero diagonal, and the [0, 1] range.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            if self.get(i, i) != T::zero() {
                return Err(Error::invalid("distance matrix", "non-zero diagonal"));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if v != self.get(j, i) {
                    return Err(Error::invalid("distance matrix", "asymmetric entry"));
                }
                if !(T::zero()..=T::one()).contains(&v) || !v.is_finite() {
                    return Err(Error::invalid("distance matrix", "entry outside [0,1]"));
                }
            }
        }
        Ok(())
    }
}

/// Computes the first-character (or overall) distribution of each attack
/// and the full pairwise Jensen-Shannon distance matrix.
///
/// Returns the matrix together with the per-attack distributions, all over
/// the corpus-wide working alphabet (sorted union of observed characters).
pub fn pairwise_js<T: Real>(
    attacks: &[AttackRecord],
    suffixes: &SuffixSet,
    mode: DistributionMode,
) -> Result<(DistanceMatrix<T>, Vec<CharDistribution<T>>)> {
    if attacks.len() < 2 {
        return Err(Error::InsufficientCorpus {
            need: 2,
            got: attacks.len(),
        });
    }
    let prefix_sets: Vec<BTreeSet<String>> = attacks
        .iter()
        .map(|a| attack_prefixes(a, suffixes))
        .collect::<Result<_>>()?;
    let alphabet: Vec<char> = {
        let mut set = BTreeSet::new();
        for prefixes in &prefix_sets {
            for p in prefixes {
                match mode {
                    DistributionMode::Char0 => {
                        set.extend(p.chars().next());
                    }
                    DistributionMode::Overall => set.extend(p.chars()),
                }
            }
        }
        set.into_iter().collect()
    };
    let dists: Vec<CharDistribution<T>> = prefix_sets
        .iter()
        .map(|prefixes| char_distribution(prefixes, mode, &alphabet))
        .collect::<Result<_>>()?;
    let ids = attacks.iter().map(AttackId::from).collect();
    let matrix = DistanceMatrix::from_fn(ids, |i, j| js_distance(&dists[i], &dists[j]));
    Ok((matrix, dists))
}

// ---------------------------------------------------------------------------
// DBSCAN over a precomputed matrix
// ---------------------------------------------------------------------------

/// Density-based clustering over a distance matrix. Returns one label per
/// point; `-1` marks outliers.
///
/// A point is *core* when at least `min_points` points (itself included)
/// lie within `eps` (inclusive). Clusters are the maximal sets of
/// density-connected core points; non-core points within `eps` of a core
/// point join the cluster of their nearest core neighbor (lowest index on
/// ties), which keeps labels independent of input order.
pub fn dbscan<T: Real>(matrix: &DistanceMatrix<T>, eps: T, min_points: usize) -> Vec<i64> {
    assert!(eps > T::zero(), "eps must be positive");
    assert!(min_points >= 2, "min_points must be at least 2");
    let n = matrix.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| matrix.get(i, j) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_points).collect();

    let mut labels = vec![-1i64; n];
    let mut next_cluster = 0i64;
    for seed in 0..n {
        if !core[seed] || labels[seed] != -1 {
            continue;
        }
        // flood fill across density-connected core points
        labels[seed] = next_cluster;
        let mut queue = vec![seed];
        while let Some(p) = queue.pop() {
            for &q in &neighbors[p] {
                if core[q] && labels[q] == -1 {
                    labels[q] = next_cluster;
                    queue.push(q);
                }
            }
        }
        next_cluster += 1;
    }
    // border points: nearest core neighbor within eps
    for p in 0..n {
        if core[p] {
            continue;
        }
        let mut best: Option<(T, usize)> = None;
        for &q in &neighbors[p] {
            if core[q] {
                let d = matrix.get(p, q);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, q));
                }
            }
        }
        if let Some((_, q)) = best {
            labels[p] = labels[q];
        }
    }
    labels
}

/// The member of a cluster minimizing the summed distance to the rest;
/// ties resolve to the smallest [`AttackId`].
pub fn medoid<T: Real>(members: &[usize], matrix: &DistanceMatrix<T>) -> usize {
    assert!(!members.is_empty(), "medoid of an empty cluster");
    let mut best = members[0];
    let mut best_sum = T::infinity();
    for &i in members {
        let sum: T = members.iter().map(|&j| matrix.get(i, j)).sum();
        let better = sum < best_sum
            || (sum == best_sum && matrix.ids[i] < matrix.ids[best]);
        if better {
            best = i;
            best_sum = sum;
        }
    }
    best
}

/// Picks `eps` from the sorted k-distance curve (distance of each point to
/// its `k`-th nearest other point) by the maximum-deviation elbow: the
/// curve point farthest from the chord joining its endpoints.
///
/// The returned radius is always positive. Exact-duplicate distributions
/// put zeros at the bottom of the curve; when the elbow lands on one, the
/// smallest positive curve value (the first step past the duplicate
/// plateau) is returned instead, or the smallest positive float when the
/// whole corpus is one duplicate clump.
pub fn kdistance_eps<T: Real>(matrix: &DistanceMatrix<T>, k: usize) -> T {
    let n = matrix.len();
    assert!(k >= 1 && k < n, "k must be in 1..n");
    let mut kdist: Vec<T> = (0..n)
        .map(|i| {
            let mut row: Vec<T> = (0..n).filter(|&j| j != i).map(|j| matrix.get(i, j)).collect();
            row.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));
            row[k - 1]
        })
        .collect();
    kdist.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));
    let positive_floor = |v: T| {
        if v > T::zero() {
            v
        } else {
            kdist
                .iter()
                .copied()
                .find(|&d| d > T::zero())
                .unwrap_or_else(T::min_positive_value)
        }
    };

    let first = kdist[0].as_f64();
    let last = kdist[n - 1].as_f64();
    if last <= first {
        return positive_floor(kdist[n - 1]); // flat curve: any value works
    }
    // distance from each curve point to the chord (0, first)-(n-1, last)
    let dx = (n - 1) as f64;
    let dy = last - first;
    let norm = (dx * dx + dy * dy).sqrt();
    let mut best_idx = 0;
    let mut best_dev = f64::MIN;
    for (i, v) in kdist.iter().enumerate() {
        let dev = (dy * i as f64 - dx * (v.as_f64() - first)).abs() / norm;
        if dev > best_dev {
            best_dev = dev;
            best_idx = i;
        }
    }
    positive_floor(kdist[best_idx])
}

// ---------------------------------------------------------------------------
// Archetype selection and persistence
// ---------------------------------------------------------------------------

/// Selection parameters.
#[derive(Debug, Clone)]
pub struct ArchetypeParams {
    /// Which distribution to cluster on.
    pub mode: DistributionMode,
    /// DBSCAN radius; `None` picks it from the k-distance elbow.
    pub eps: Option<f64>,
    /// DBSCAN density threshold (neighborhood size including self).
    pub min_points: usize,
    /// Smallest cluster eligible to contribute an archetype.
    pub min_cluster_size: usize,
}

impl Default for ArchetypeParams {
    fn default() -> Self {
        ArchetypeParams {
            mode: DistributionMode::Char0,
            eps: None,
            min_points: 5,
            min_cluster_size: 10,
        }
    }
}

/// One archetype: the medoid attack of a qualifying cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeMember<T> {
    pub id: AttackId,
    /// Size of the cluster the medoid represents.
    pub cluster_size: usize,
    pub distribution: CharDistribution<T>,
}

/// A frozen set of reference distributions: up to [`MAX_ARCHETYPES`]
/// cluster medoids plus the analytic uniform over the working alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSet<T> {
    /// File-format version.
    pub version: u32,
    pub mode: DistributionMode,
    /// Working alphabet: sorted union of characters observed in the corpus.
    pub alphabet: Vec<char>,
    /// Medoid archetypes, largest cluster first.
    pub members: Vec<ArchetypeMember<T>>,
    /// Analytic uniform distribution over `alphabet`.
    pub uniform: CharDistribution<T>,
    /// SHA-256 over the sorted corpus attack ids.
    pub corpus_fingerprint: String,
    /// Latest attack date in the corpus (stands in for a creation stamp so
    /// outputs stay reproducible).
    pub created: NaiveDate,
    /// Selection provenance.
    pub eps: f64,
    pub min_points: usize,
    pub min_cluster_size: usize,
    /// Pairwise J-S distances among all kept distributions (uniform last).
    pub separation: Vec<Vec<f64>>,
}

impl<T: Real> ArchetypeSet<T> {
    pub const VERSION: u32 = 1;

    /// All reference distributions in feature order: members, then uniform.
    pub fn distributions(&self) -> impl Iterator<Item = &CharDistribution<T>> {
        self.members
            .iter()
            .map(|m| &m.distribution)
            .chain(std::iter::once(&self.uniform))
    }

    /// Member count plus one for the uniform.
    pub fn n_distributions(&self) -> usize {
        self.members.len() + 1
    }

    /// Structural checks applied after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.version != Self::VERSION {
            return Err(Error::IncompatibleState(format!(
                "archetype file version {} (supported: {})",
                self.version,
                Self::VERSION
            )));
        }
        for d in self.distributions() {
            d.validate()?;
        }
        if self.separation.len() != self.n_distributions() {
            return Err(Error::IncompatibleState(
                "separation matrix does not match distribution count".into(),
            ));
        }
        Ok(())
    }
}

impl<T: Real + Serialize + DeserializeOwned> ArchetypeSet<T> {
    /// Writes the set as pretty JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    /// Loads and validates a set written by [`ArchetypeSet::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let set: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        set.validate()?;
        Ok(set)
    }
}

/// Fingerprint of a corpus: SHA-256 over its sorted attack ids.
pub fn corpus_fingerprint(attacks: &[AttackRecord]) -> String {
    let mut ids: Vec<String> = attacks.iter().map(|a| AttackId::from(a).to_string()).collect();
    ids.sort();
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update(id.as_bytes());
        hasher.update(b"\n");
    }
    format!("{:x}", hasher.finalize())
}

/// Clusters the corpus and selects archetype medoids.
///
/// Clusters with at least `min_cluster_size` members are ranked by size
/// (largest first, ties toward the smaller minimum member id) and the
/// medoid of each of the top [`MAX_ARCHETYPES`] becomes an archetype.
/// Fewer qualifying clusters than [`MAX_ARCHETYPES`] is allowed with a
/// warning (degenerate corpus); zero is an error suggesting eps re-tuning.
pub fn select_archetypes<T: Real>(
    attacks: &[AttackRecord],
    suffixes: &SuffixSet,
    params: &ArchetypeParams,
) -> Result<ArchetypeSet<T>> {
    let (matrix, dists) = pairwise_js::<T>(attacks, suffixes, params.mode)?;
    let eps = match params.eps {
        Some(e) if e > 0.0 => e,
        Some(e) => {
            return Err(Error::invalid("eps", format!("{e} is not positive")));
        }
        None => {
            let k = params.min_points.saturating_sub(1).max(1);
            kdistance_eps(&matrix, k.min(matrix.len() - 1)).as_f64()
        }
    };
    let labels = dbscan(&matrix, T::of_f64(eps), params.min_points);

    let mut clusters: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        if label >= 0 {
            clusters.entry(label).or_default().push(i);
        }
    }
    let mut qualifying: Vec<Vec<usize>> = clusters
        .into_values()
        .filter(|members| members.len() >= params.min_cluster_size)
        .collect();
    if qualifying.is_empty() {
        return Err(Error::ArchetypeSelection(format!(
            "no cluster reached min_cluster_size={} at eps={eps:.4} \
             (largest had {}); re-tune eps or lower min_cluster_size",
            params.min_cluster_size,
            labels
                .iter()
                .filter(|&&l| l >= 0)
                .fold(BTreeMap::<i64, usize>::new(), |mut m, &l| {
                    *m.entry(l).or_default() += 1;
                    m
                })
                .values()
                .max()
                .copied()
                .unwrap_or(0)
        )));
    }
    qualifying.sort_by_key(|members| {
        (
            usize::MAX - members.len(),
            members.iter().map(|&i| &matrix.ids[i]).min().cloned(),
        )
    });
    qualifying.truncate(MAX_ARCHETYPES);
    if qualifying.len() < MAX_ARCHETYPES {
        log::warn!(
            "degenerate corpus: only {} qualifying cluster(s), expected up to {}",
            qualifying.len(),
            MAX_ARCHETYPES
        );
    }

    let members: Vec<ArchetypeMember<T>> = qualifying
        .iter()
        .map(|cluster| {
            let m = medoid(cluster, &matrix);
            ArchetypeMember {
                id: matrix.ids[m].clone(),
                cluster_size: cluster.len(),
                distribution: dists[m].clone(),
            }
        })
        .collect();

    let alphabet = dists[0].alphabet.clone();
    let uniform = uniform_distribution::<T>(&alphabet);
    let all: Vec<&CharDistribution<T>> = members
        .iter()
        .map(|m| &m.distribution)
        .chain(std::iter::once(&uniform))
        .collect();
    let separation: Vec<Vec<f64>> = all
        .iter()
        .map(|a| all.iter().map(|b| js_distance(a, b).as_f64()).collect())
        .collect();

    let set = ArchetypeSet {
        version: ArchetypeSet::<T>::VERSION,
        mode: params.mode,
        alphabet,
        members,
        uniform,
        corpus_fingerprint: corpus_fingerprint(attacks),
        created: attacks.iter().map(|a| a.date).max().expect("non-empty corpus"),
        eps,
        min_points: params.min_points,
        min_cluster_size: params.min_cluster_size,
        separation,
    };
    set.validate()?;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
