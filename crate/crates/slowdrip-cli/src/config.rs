//! Pipeline configuration: one declarative TOML document, overridden by
//! command-line flags (flags win), hashed into every output's provenance.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "SLOWDRIP_CONFIG";

/// The only supported quantile rule (linear interpolation on the sorted
/// sample). The field exists so configs are explicit about it.
pub const QUANTILE_METHOD: &str = "linear";

fn default_quantile_method() -> String {
    QUANTILE_METHOD.to_string()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_tracked_qtypes() -> Vec<u16> {
    slowdrip::features::DEFAULT_TRACKED_QTYPES.to_vec()
}

fn default_min_cluster_size() -> usize {
    10
}

fn default_min_points() -> usize {
    5
}

fn default_min_population() -> usize {
    slowdrip::detector::DetectorConfig::DEFAULT_MIN_POPULATION
}

/// Everything the pipeline commands need, in one reproducible document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Public-suffix rule file used for all name decomposition.
    pub suffix_list: Option<PathBuf>,
    /// Subdomain-enumeration dictionary for the overlap feature.
    pub dictionary: Option<PathBuf>,
    /// Frozen archetype set consumed by `featurize`.
    pub archetypes: Option<PathBuf>,
    /// Directory artifacts land in.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Scenario seed for `synth` (overrides the scenario file's own seed
    /// only when set on the command line).
    #[serde(default)]
    pub seed: u64,
    /// Rcodes that count as "unresolved"; unset means any non-zero rcode.
    #[serde(default)]
    pub rcodes: Option<Vec<u8>>,
    /// Quantile rule; only "linear" is supported.
    #[serde(default = "default_quantile_method")]
    pub quantile_method: String,
    /// Query types receiving feature columns, in column order.
    #[serde(default = "default_tracked_qtypes")]
    pub tracked_qtypes: Vec<u16>,
    /// Smallest cluster size for archetype selection and HDBSCAN.
    #[serde(default = "default_min_cluster_size")]
    pub min_cluster_size: usize,
    /// DBSCAN radius for archetype selection; unset uses the k-distance
    /// elbow.
    #[serde(default)]
    pub eps: Option<f64>,
    /// DBSCAN density threshold for archetype selection.
    #[serde(default = "default_min_points")]
    pub min_points: usize,
    /// Smallest per-source population the detector's quartile rule accepts.
    #[serde(default = "default_min_population")]
    pub min_population: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            suffix_list: None,
            dictionary: None,
            archetypes: None,
            output_dir: default_output_dir(),
            seed: 0,
            rcodes: None,
            quantile_method: default_quantile_method(),
            tracked_qtypes: default_tracked_qtypes(),
            min_cluster_size: default_min_cluster_size(),
            eps: None,
            min_points: default_min_points(),
            min_population: default_min_population(),
        }
    }
}

impl PipelineConfig {
    /// Loads the config from `path`, from `$SLOWDRIP_CONFIG`, or falls back
    /// to defaults when neither names a file.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let path = match path {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
        };
        let config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => PipelineConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    /// Range checks on the parameters themselves; file existence is
    /// checked by the command that consumes each path.
    pub fn validate(&self) -> Result<()> {
        if self.quantile_method != QUANTILE_METHOD {
            bail!(
                "quantile_method {:?} is not supported (only {:?})",
                self.quantile_method,
                QUANTILE_METHOD
            );
        }
        if self.min_cluster_size < 2 {
            bail!("min_cluster_size must be at least 2");
        }
        if self.min_points < 2 {
            bail!("min_points must be at least 2");
        }
        if let Some(eps) = self.eps {
            if !(eps.is_finite() && eps > 0.0) {
                bail!("eps must be a positive number, got {eps}");
            }
        }
        if self.tracked_qtypes.is_empty() {
            bail!("tracked_qtypes must not be empty");
        }
        // Referenced files must exist up front. The archetype file is the
        // exception: the featurize command checks it at the point of use
        // so it can name the command that creates it.
        for (name, path) in [("suffix_list", &self.suffix_list), ("dictionary", &self.dictionary)] {
            if let Some(p) = path {
                if !p.exists() {
                    bail!("{name} file {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    /// SHA-256 over the analytic parameters of the effective
    /// (post-override) config. File paths are pinned to empty before
    /// hashing: they are machine-local locators, and hashing a path says
    /// nothing about the file behind it — artifacts that need input
    /// identity record it directly (the archetype set embeds its corpus
    /// fingerprint). This keeps re-runs of the same analysis
    /// byte-identical regardless of where inputs and outputs live.
    pub fn sha256(&self) -> String {
        let mut canonical = self.clone();
        canonical.suffix_list = None;
        canonical.dictionary = None;
        canonical.archetypes = None;
        canonical.output_dir = PathBuf::new();
        let text = toml::to_string(&canonical).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Stamped into every artifact a command writes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        Provenance {
            tool: "slowdrip".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: config.sha256(),
        }
    }

    /// One-line `#` comment form for CSV/TSV artifacts.
    pub fn comment_line(&self) -> String {
        format!(
            "# {} v{} {} config_sha256={}",
            self.tool, self.version, self.command, self.config_sha256
        )
    }

    /// HTML comment form for markdown artifacts.
    pub fn markdown_comment(&self) -> String {
        format!(
            "<!-- {} v{} {} config_sha256={} -->",
            self.tool, self.version, self.command, self.config_sha256
        )
    }

    /// Writes the run-level `provenance.json` covering artifacts whose
    /// formats cannot carry a header themselves.
    pub fn write_sidecar(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("provenance.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
