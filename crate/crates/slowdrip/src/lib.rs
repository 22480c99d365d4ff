//! Passive-DNS analytics for random-subdomain ("slow drip") DDoS attacks.
//!
//! The crate takes bulk passive-DNS query logs and answers three questions:
//!
//! 1. **Which domains were attacked, and when?** A two-stage statistical
//!    detector ([`detector`]) flags (domain, day, source) triples whose
//!    unresolved-query volume is an interquartile outlier *and* whose
//!    subdomain variety jumped relative to two days earlier.
//! 2. **What generated the query names?** A compact feature vector
//!    ([`features`]) fingerprints the generator behind an attack:
//!    label shape, dictionary overlap, query-type mix, temporal footprint,
//!    lexicographic ordering, and unigram-distribution distances to a set
//!    of reference archetypes ([`archetype`]).
//! 3. **Which attacks share a generator?** Density-based clustering over
//!    the feature vectors ([`cluster`]) groups attacks into families and
//!    tracks drift of new batches against a frozen baseline.
//!
//! A synthetic scenario generator ([`synthgen`]) produces ground-truth
//! labeled logs for calibration and end-to-end testing.
//!
//! Numeric kernels are generic over the floating-point scalar through the
//! [`num::Real`] trait; `f64` aliases for the common instantiations are
//! exported at the crate root.

pub mod archetype;
pub mod cluster;
pub mod detector;
pub mod error;
pub mod features;
pub mod ingest;
pub mod num;
pub mod pdns;
pub mod synthgen;

pub use error::{Error, Result};
pub use pdns::{label_depth, normalize_name, parse_fqdn, ParsedName, PdnsEvent, SuffixSet};

/// Default scalar used by the concrete pipeline (detector, CLI, persistence).
pub type Scalar = f64;

/// Quartile summary over `f64` samples.
pub type QuartileSummary = detector::QuartileSummary<Scalar>;

/// Character distribution over `f64` probabilities.
pub type CharDistribution = features::CharDistribution<Scalar>;

/// Attack feature vector over `f64` values.
pub type FeatureVector = features::FeatureVector<Scalar>;

/// Pairwise distance matrix over `f64` distances.
pub type DistanceMatrix = archetype::DistanceMatrix<Scalar>;

/// Frozen archetype set over `f64` distributions.
pub type ArchetypeSet = archetype::ArchetypeSet<Scalar>;
