//! `slowdrip` — passive-DNS random-subdomain attack analytics.
//!
//! Subcommands cover the full pipeline: synthesize labeled traffic,
//! detect attacks in daily logs, freeze generator archetypes, extract
//! feature vectors, cluster attacks into families, and track drift of new
//! batches against a frozen baseline. Every command is deterministic
//! given identical inputs, config, and seed, and every artifact carries
//! the tool version and a hash of the effective configuration.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use slowdrip::archetype::{select_archetypes, ArchetypeParams, AttackId};
use slowdrip::cluster::{
    cluster_report, drift_assign, feature_correlation, render_markdown, ClusterReport,
    DriftReport, FeatureCorpus,
};
use slowdrip::detector::{
    detect_attacks, read_attacks, write_attacks, AttackRecord, DetectorConfig,
};
use slowdrip::features::{diagnostics, feature_vector, Dictionary, FeatureConfig, FeatureVector};
use slowdrip::ingest::{read_events, write_events, EventFormat, UnresolvedPolicy};
use slowdrip::synthgen::{generate_scenario, ScenarioConfig};
use slowdrip::{ArchetypeSet, SuffixSet};

use config::{PipelineConfig, Provenance, CONFIG_ENV};

#[derive(Parser)]
#[command(
    name = "slowdrip",
    version,
    about = "Detects and fingerprints random-subdomain DDoS attacks in passive-DNS logs"
)]
struct Cli {
    /// Configuration file (TOML); falls back to $SLOWDRIP_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled scenario: per-day event logs plus
    /// ground truth.
    Synth(SynthArgs),
    /// Detect attacks on one day of traffic against a baseline day.
    Detect(DetectArgs),
    /// Build or inspect the frozen archetype set.
    Archetypes {
        #[command(subcommand)]
        action: ArchetypesAction,
    },
    /// Extract feature vectors and plot diagnostics from detected attacks.
    Featurize(FeaturizeArgs),
    /// Cluster a feature corpus into generator families.
    Cluster(ClusterArgs),
    /// Assign a new feature batch against a frozen baseline corpus.
    Drift(DriftArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario description (TOML).
    scenario: PathBuf,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Event log of the day under analysis (.tsv or .jsonl).
    day: PathBuf,
    /// Event log of the baseline day, two days earlier.
    baseline: PathBuf,
    /// Analyze this UTC date instead of the dominant one.
    #[arg(long)]
    date: Option<NaiveDate>,
    /// Rcodes that count as unresolved (e.g. `--rcodes 3`); default is any
    /// non-zero rcode.
    #[arg(long, value_delimiter = ',')]
    rcodes: Option<Vec<u8>>,
    /// Smallest per-source population the quartile rule accepts.
    #[arg(long)]
    min_population: Option<usize>,
    /// Suffix-list file.
    #[arg(long, value_name = "FILE")]
    suffixes: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ArchetypesAction {
    /// Cluster attack character distributions and freeze the medoids.
    Build(ArchetypesBuildArgs),
    /// Print a frozen archetype set.
    Show {
        /// Archetype file (JSON).
        file: PathBuf,
    },
}

#[derive(Args)]
struct ArchetypesBuildArgs {
    /// Attack directory written by `detect`.
    #[arg(long, value_name = "DIR")]
    attacks: PathBuf,
    /// DBSCAN radius; defaults to the k-distance elbow.
    #[arg(long)]
    eps: Option<f64>,
    /// DBSCAN density threshold.
    #[arg(long)]
    min_points: Option<usize>,
    /// Smallest cluster eligible to contribute an archetype.
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// Suffix-list file.
    #[arg(long, value_name = "FILE")]
    suffixes: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Attack directory written by `detect`.
    #[arg(long, value_name = "DIR")]
    attacks: PathBuf,
    /// Frozen archetype set (JSON).
    #[arg(long, value_name = "FILE")]
    archetypes: Option<PathBuf>,
    /// Subdomain-enumeration dictionary (one label per line).
    #[arg(long, value_name = "FILE")]
    dictionary: Option<PathBuf>,
    /// Query types receiving feature columns (e.g. `--qtypes 1,5,28`).
    #[arg(long, value_delimiter = ',')]
    qtypes: Option<Vec<u16>>,
    /// Suffix-list file.
    #[arg(long, value_name = "FILE")]
    suffixes: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Feature corpus CSV written by `featurize`.
    features: PathBuf,
    /// Smallest reported cluster.
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// Density-estimate neighborhood; defaults to min_cluster_size.
    #[arg(long)]
    min_samples: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DriftArgs {
    /// Baseline feature corpus CSV.
    baseline: PathBuf,
    /// New-batch feature corpus CSV.
    new: PathBuf,
    /// Smallest cluster size for both clusterings.
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// Density-estimate neighborhood; defaults to min_cluster_size.
    #[arg(long)]
    min_samples: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {}", render_chain(&err));
        std::process::exit(exit_code(&err));
    }
}

/// Joins the error chain with `: `, skipping causes already embedded in
/// their parent's message (the wrapper errors display their sources).
fn render_chain(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

/// 2 when the cause is an insufficient sample (population or corpus too
/// small for the statistics), 1 for everything else.
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<slowdrip::Error>() {
            if e.is_insufficient() {
                return 2;
            }
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(args) => cmd_synth(config, args),
        Command::Detect(args) => cmd_detect(config, args),
        Command::Archetypes { action } => match action {
            ArchetypesAction::Build(args) => cmd_archetypes_build(config, args),
            ArchetypesAction::Show { file } => cmd_archetypes_show(&file),
        },
        Command::Featurize(args) => cmd_featurize(config, args),
        Command::Cluster(args) => cmd_cluster(config, args),
        Command::Drift(args) => cmd_drift(config, args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_suffixes(config: &PipelineConfig) -> Result<SuffixSet> {
    let path = config.suffix_list.as_ref().with_context(|| {
        format!(
            "no suffix list configured; pass --suffixes or set suffix_list \
             in the config file (see --config / ${CONFIG_ENV})"
        )
    })?;
    SuffixSet::load(path).with_context(|| format!("loading suffix list {}", path.display()))
}

fn event_format(path: &Path) -> Result<EventFormat> {
    EventFormat::from_path(path).with_context(|| {
        format!(
            "{}: unknown event format; expected a .tsv or .jsonl file",
            path.display()
        )
    })
}

fn sanitize_component(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(mut config: PipelineConfig, args: SynthArgs) -> Result<()> {
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let text = fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading scenario {}", args.scenario.display()))?;
    let mut scenario: ScenarioConfig = toml::from_str(&text)
        .with_context(|| format!("parsing scenario {}", args.scenario.display()))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }

    let (events, truth) = generate_scenario(&scenario)?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;

    // one TSV per simulated (or jitter-spilled) day
    let mut dates: Vec<NaiveDate> = events.iter().map(|e| e.date()).collect();
    dates.sort_unstable();
    dates.dedup();
    for date in dates {
        let day_events: Vec<_> = events.iter().filter(|e| e.date() == date).cloned().collect();
        let path = out.join(format!("events_{date}.tsv"));
        write_events(&path, &day_events, EventFormat::Tsv)?;
        println!("wrote {} ({} events)", path.display(), day_events.len());
    }
    let truth_path = out.join("truth.json");
    truth.save(&truth_path)?;
    println!(
        "wrote {} ({} attacks over {} background domains)",
        truth_path.display(),
        truth.attacks.len(),
        truth.background_domains
    );
    Provenance::new("synth", &config).write_sidecar(out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

fn cmd_detect(mut config: PipelineConfig, args: DetectArgs) -> Result<()> {
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(suffixes) = args.suffixes {
        config.suffix_list = Some(suffixes);
    }
    if let Some(rcodes) = args.rcodes {
        config.rcodes = Some(rcodes);
    }
    if let Some(population) = args.min_population {
        config.min_population = population;
    }
    config.validate()?;
    let suffixes = load_suffixes(&config)?;

    let (day_events, day_stats) = read_events(&args.day, event_format(&args.day)?)
        .with_context(|| format!("reading day log {}", args.day.display()))?;
    let (baseline_events, baseline_stats) =
        read_events(&args.baseline, event_format(&args.baseline)?)
            .with_context(|| format!("reading baseline log {}", args.baseline.display()))?;
    if day_stats.malformed > 0 || baseline_stats.malformed > 0 {
        log::warn!(
            "skipped malformed lines: {} (day), {} (baseline)",
            day_stats.malformed,
            baseline_stats.malformed
        );
    }

    let detector = DetectorConfig {
        policy: match &config.rcodes {
            Some(rcodes) => UnresolvedPolicy::from_rcodes(rcodes.iter().copied()),
            None => UnresolvedPolicy::default(),
        },
        target_date: args.date,
        min_population: config.min_population,
    };
    let attacks = detect_attacks(day_events, baseline_events, &suffixes, &detector)?;

    let out = &config.output_dir;
    write_attacks(out, &attacks)?;
    println!("wrote {} ({} attacks)", out.join("attacks.jsonl").display(), attacks.len());
    for attack in &attacks {
        println!(
            "  {} {} source={} unresolved={} delta={}",
            attack.date, attack.sld, attack.source, attack.stage1_count, attack.stage2_delta
        );
    }
    Provenance::new("detect", &config).write_sidecar(out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// archetypes
// ---------------------------------------------------------------------------

fn cmd_archetypes_build(mut config: PipelineConfig, args: ArchetypesBuildArgs) -> Result<()> {
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(suffixes) = args.suffixes {
        config.suffix_list = Some(suffixes);
    }
    if let Some(eps) = args.eps {
        config.eps = Some(eps);
    }
    if let Some(min_points) = args.min_points {
        config.min_points = min_points;
    }
    if let Some(mcs) = args.min_cluster_size {
        config.min_cluster_size = mcs;
    }
    config.validate()?;
    let suffixes = load_suffixes(&config)?;

    let attacks = read_attacks(&args.attacks)
        .with_context(|| format!("reading attacks from {}", args.attacks.display()))?;
    let params = ArchetypeParams {
        eps: config.eps,
        min_points: config.min_points,
        min_cluster_size: config.min_cluster_size,
        ..ArchetypeParams::default()
    };
    let set = select_archetypes::<f64>(&attacks, &suffixes, &params)?;

    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    let path = out.join("archetypes.json");
    set.save(&path)?;
    println!(
        "wrote {} ({} archetypes from {} attacks, eps {:.4})",
        path.display(),
        set.members.len(),
        attacks.len(),
        set.eps
    );
    Provenance::new("archetypes build", &config).write_sidecar(out)?;
    Ok(())
}

fn cmd_archetypes_show(file: &Path) -> Result<()> {
    let set = ArchetypeSet::load(file)
        .with_context(|| format!("loading archetype set {}", file.display()))?;
    println!("archetype set {}", file.display());
    println!("  version        {}", set.version);
    println!("  created        {}", set.created);
    println!("  corpus         sha256:{}", set.corpus_fingerprint);
    println!(
        "  selection      eps {:.6}, min_points {}, min_cluster_size {}",
        set.eps, set.min_points, set.min_cluster_size
    );
    println!("  alphabet       {}", set.alphabet.iter().collect::<String>());
    println!("  distributions  {} medoids + uniform", set.members.len());
    for (i, member) in set.members.iter().enumerate() {
        println!(
            "    [{}] {} (cluster of {})",
            i + 1,
            member.id,
            member.cluster_size
        );
    }
    println!("  separation (Jensen-Shannon distance, uniform last):");
    for row in &set.separation {
        let cells: Vec<String> = row.iter().map(|d| format!("{d:.3}")).collect();
        println!("    {}", cells.join(" "));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------

fn cmd_featurize(mut config: PipelineConfig, args: FeaturizeArgs) -> Result<()> {
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(suffixes) = args.suffixes {
        config.suffix_list = Some(suffixes);
    }
    if let Some(archetypes) = args.archetypes {
        config.archetypes = Some(archetypes);
    }
    if let Some(dictionary) = args.dictionary {
        config.dictionary = Some(dictionary);
    }
    if let Some(qtypes) = args.qtypes {
        config.tracked_qtypes = qtypes;
    }
    config.validate()?;
    let suffixes = load_suffixes(&config)?;

    let archetype_path = config
        .archetypes
        .clone()
        .unwrap_or_else(|| config.output_dir.join("archetypes.json"));
    if !archetype_path.exists() {
        bail!(
            "archetype set {} not found; run `slowdrip archetypes build --attacks <dir>` \
             first or point --archetypes at an existing set",
            archetype_path.display()
        );
    }
    let archetypes: ArchetypeSet = ArchetypeSet::load(&archetype_path)
        .with_context(|| format!("loading archetype set {}", archetype_path.display()))?;

    let dictionary_path = config.dictionary.as_ref().with_context(|| {
        "no dictionary configured; pass --dictionary or set dictionary in the config file"
            .to_string()
    })?;
    let dictionary = Dictionary::load(dictionary_path)
        .with_context(|| format!("loading dictionary {}", dictionary_path.display()))?;

    let attacks = read_attacks(&args.attacks)
        .with_context(|| format!("reading attacks from {}", args.attacks.display()))?;
    let feature_config = FeatureConfig {
        tracked_qtypes: config.tracked_qtypes.clone(),
    };
    let provenance = Provenance::new("featurize", &config);
    let out = &config.output_dir;
    let diag_dir = out.join("diagnostics");
    fs::create_dir_all(&diag_dir)?;

    let mut ids = Vec::with_capacity(attacks.len());
    let mut vectors = Vec::with_capacity(attacks.len());
    for (i, attack) in attacks.iter().enumerate() {
        let fv = feature_vector::<f64>(attack, &suffixes, &archetypes, &dictionary, &feature_config)?;
        fv.validate()?;
        ids.push(AttackId::from(attack));
        vectors.push(fv.to_vec());
        write_diagnostics(&diag_dir, i, attack, &suffixes, &provenance)?;
    }
    let columns = FeatureVector::<f64>::column_names(
        &feature_config.tracked_qtypes,
        archetypes.n_distributions(),
    );
    let corpus = FeatureCorpus::new(ids, columns, vectors)?;

    let csv_path = out.join("features.csv");
    write_text(
        &csv_path,
        &format!("{}\n{}", provenance.comment_line(), corpus.to_csv_string()),
    )?;
    println!("featurized {} attacks × {} columns", corpus.len(), corpus.columns.len());
    provenance.write_sidecar(out)?;
    Ok(())
}

fn write_diagnostics(
    dir: &Path,
    index: usize,
    attack: &AttackRecord,
    suffixes: &SuffixSet,
    provenance: &Provenance,
) -> Result<()> {
    let bundle = diagnostics(attack, suffixes)?;
    let name = format!(
        "{index:04}_{}_{}_{}.json",
        sanitize_component(&attack.source),
        attack.date,
        sanitize_component(&attack.sld)
    );
    let payload = serde_json::json!({
        "provenance": provenance,
        "sld": attack.sld,
        "date": attack.date,
        "source": attack.source,
        "diagnostics": bundle,
    });
    fs::write(dir.join(&name), serde_json::to_string_pretty(&payload)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// cluster
// ---------------------------------------------------------------------------

fn cmd_cluster(mut config: PipelineConfig, args: ClusterArgs) -> Result<()> {
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(mcs) = args.min_cluster_size {
        config.min_cluster_size = mcs;
    }
    config.validate()?;

    let corpus = FeatureCorpus::<f64>::read_csv(&args.features)
        .with_context(|| format!("reading feature corpus {}", args.features.display()))?;
    let report = cluster_report(&corpus, config.min_cluster_size, args.min_samples)?;

    let provenance = Provenance::new("cluster", &config);
    let out = &config.output_dir;
    fs::create_dir_all(out)?;

    let clusters_path = out.join("clusters.json");
    let payload = serde_json::json!({
        "provenance": provenance,
        "ids": corpus.ids,
        "report": report,
    });
    write_text(&clusters_path, &serde_json::to_string_pretty(&payload)?)?;

    let report_path = out.join("report.md");
    write_text(
        &report_path,
        &format!("{}\n\n{}", provenance.markdown_comment(), render_markdown(&report)),
    )?;

    write_text(
        &out.join("umap_input.csv"),
        &umap_input_csv(&corpus, &report, &provenance),
    )?;
    write_text(
        &out.join("feature_corr.csv"),
        &feature_corr_csv(&corpus, &provenance),
    )?;

    println!(
        "{} attacks → {} clusters, {} clustered ({:.1}% coverage)",
        report.n_points,
        report.clusters.len(),
        report.n_clustered,
        report.coverage * 100.0
    );
    provenance.write_sidecar(out)?;
    Ok(())
}

/// Feature matrix with assigned labels, ready for external projection
/// tools (UMAP and friends).
fn umap_input_csv(corpus: &FeatureCorpus<f64>, report: &ClusterReport, p: &Provenance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", p.comment_line());
    out.push_str("sld,date,source,cluster");
    for c in &corpus.columns {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for ((id, vector), label) in corpus.ids.iter().zip(&corpus.vectors).zip(&report.labels) {
        let _ = write!(out, "{},{},{},{label}", id.sld, id.date, id.source);
        for v in vector {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Pearson correlation matrix of the feature columns.
fn feature_corr_csv(corpus: &FeatureCorpus<f64>, p: &Provenance) -> String {
    let corr = feature_correlation(corpus);
    let mut out = String::new();
    let _ = writeln!(out, "{}", p.comment_line());
    out.push_str("feature");
    for c in &corpus.columns {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (name, row) in corpus.columns.iter().zip(&corr) {
        let _ = write!(out, "{name}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// drift
// ---------------------------------------------------------------------------

fn cmd_drift(mut config: PipelineConfig, args: DriftArgs) -> Result<()> {
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(mcs) = args.min_cluster_size {
        config.min_cluster_size = mcs;
    }
    config.validate()?;

    let baseline = FeatureCorpus::<f64>::read_csv(&args.baseline)
        .with_context(|| format!("reading baseline corpus {}", args.baseline.display()))?;
    let new = FeatureCorpus::<f64>::read_csv(&args.new)
        .with_context(|| format!("reading new corpus {}", args.new.display()))?;

    let baseline_report = cluster_report(&baseline, config.min_cluster_size, args.min_samples)?;
    let drift: DriftReport = drift_assign(
        &baseline,
        &baseline_report.labels,
        &new,
        config.min_cluster_size,
        args.min_samples,
    )?;

    let provenance = Provenance::new("drift", &config);
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    let assignments: Vec<serde_json::Value> = new
        .ids
        .iter()
        .zip(&drift.assignments)
        .map(|(id, &cluster)| {
            serde_json::json!({
                "sld": id.sld,
                "date": id.date,
                "source": id.source,
                "cluster": cluster,
            })
        })
        .collect();
    let payload = serde_json::json!({
        "provenance": provenance,
        "baseline": { "ids": baseline.ids, "labels": baseline_report.labels },
        "assignments": assignments,
        "n_assigned": drift.n_assigned,
        "union_labels": drift.union_labels,
        "baseline_agreement": drift.baseline_agreement,
    });
    write_text(&out.join("drift.json"), &serde_json::to_string_pretty(&payload)?)?;

    println!(
        "{} of {} new attacks assigned to baseline clusters; baseline agreement {:.3}",
        drift.n_assigned,
        new.len(),
        drift.baseline_agreement
    );
    provenance.write_sidecar(out)?;
    Ok(())
}
