//! Command-line front end and label-review service for `pondwatch`.

pub mod server;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pondwatch::autolabel::AutoLabelConfig;
use pondwatch::eval::{metrics_csv, summarize, GroupSummary};
use pondwatch::pipeline::{
    autolabel_region, read_pair, recompute_metrics, render_heatmaps, run_experiment,
    synth_generate, write_region, write_synthetic_region, ExperimentConfig, RegionMeta, RegionSpec,
    RegionStore, SynthConfig,
};
use pondwatch::raster::{
    read_labels, read_labels_with_revision, read_raster, write_labels_as, BiTemporalPair,
    LabelKind, LabelRaster,
};
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(
    name = "pondwatch",
    version,
    about = "Bi-temporal mining-pond change detection"
)]
pub struct Cli {
    /// Log at debug level
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a pair of band stacks and store them as a region
    Ingest(IngestArgs),
    /// Generate synthetic regions with truth and autolabel layers
    Synth(SynthArgs),
    /// Label pond states and changes of a region by index thresholds
    Autolabel(AutolabelArgs),
    /// Run an experiment sweep
    Run(ExperimentArgs),
    /// Recompute metrics from saved predictions
    Eval(ExperimentArgs),
    /// Rebuild misclassification heatmaps from saved predictions
    Heatmap(ExperimentArgs),
    /// Serve regions to the label-correction UI
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// First-date raster header
    #[arg(long)]
    pub t1: PathBuf,
    /// Second-date raster header
    #[arg(long)]
    pub t2: PathBuf,
    /// Region id (letters, digits, '-' and '_')
    #[arg(long)]
    pub id: String,
    /// Region root; the region lands in <out>/<id>
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "t1")]
    pub t1_date: String,
    #[arg(long, default_value = "t2")]
    pub t2_date: String,
    /// Change-map truth to store alongside
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write autolabel layers for review
    #[arg(long)]
    pub autolabel: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Region root
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the first region; region i uses seed + i
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    /// JSON SynthConfig; omitted fields take their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "synth")]
    pub prefix: String,
    /// Skip writing autolabel layers
    #[arg(long)]
    pub no_labels: bool,
}

#[derive(Debug, Args)]
pub struct AutolabelArgs {
    /// Region directory
    pub region: PathBuf,
    /// JSON AutoLabelConfig
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON ExperimentConfig
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides output_dir
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the base trial seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Region root
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Autolabel(a) => autolabel(a),
        Command::Run(a) => run_sweep(a),
        Command::Eval(a) => eval(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Serve(a) => serve(a),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn autolabel_config(path: Option<&Path>) -> Result<AutoLabelConfig> {
    let cfg = match path {
        Some(p) => read_json(p)?,
        None => AutoLabelConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn ingest(a: IngestArgs) -> Result<ExitCode> {
    let t1 = read_raster(&a.t1).with_context(|| format!("reading {}", a.t1.display()))?;
    let t2 = read_raster(&a.t2).with_context(|| format!("reading {}", a.t2.display()))?;
    let pair = BiTemporalPair::new(t1, t2, a.t1_date, a.t2_date)?;
    let meta = RegionMeta {
        id: a.id.clone(),
        width: pair.t1.width(),
        height: pair.t1.height(),
        t1_date: pair.t1_date.clone(),
        t2_date: pair.t2_date.clone(),
        synthetic: false,
    };
    let dir = a.out.join(&a.id);
    write_region(&dir, &meta, &pair)?;
    if let Some(truth) = &a.truth {
        let labels = read_labels(truth)?;
        if labels.kind != LabelKind::Change
            || labels.width != meta.width
            || labels.height != meta.height
        {
            bail!(
                "{} is not a {}x{} change map",
                truth.display(),
                meta.width,
                meta.height
            );
        }
        write_labels_as(&labels, dir.join("truth_change.json"), None)?;
    }
    if a.autolabel {
        write_autolabels(&dir, &pair, &AutoLabelConfig::default())?;
    }
    println!(
        "ingested {} ({}x{}, {} bands) into {}",
        a.id,
        meta.width,
        meta.height,
        pair.t1.band_count(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let base: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    let labels = (!a.no_labels).then(AutoLabelConfig::default);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut regions = Vec::new();
    for i in 0..a.count {
        let id = format!("{}-{i:03}", a.prefix);
        let cfg = SynthConfig {
            seed: a.seed + i as u64,
            ..base.clone()
        };
        let scene = synth_generate(&cfg).with_context(|| format!("generating {id}"))?;
        write_synthetic_region(&a.out.join(&id), &id, &scene, labels.as_ref())?;
        println!("{id}: {} ponds, seed {}", scene.ponds.len(), cfg.seed);
        regions.push(RegionSpec {
            dir: PathBuf::from(&id),
            id,
            truth: None,
        });
    }
    let root = fs::canonicalize(&a.out)?;
    let experiment = ExperimentConfig {
        regions,
        output_dir: root.join("results"),
        ..ExperimentConfig::default()
    };
    let path = a.out.join("experiment.json");
    fs::write(&path, serde_json::to_string_pretty(&experiment)?)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

/// Writes the three editable layers; an existing layer keeps its revision history.
fn write_autolabels(dir: &Path, pair: &BiTemporalPair, cfg: &AutoLabelConfig) -> Result<()> {
    let (s1, s2, change) = autolabel_region(pair, cfg)?;
    for (stem, labels) in [
        ("labels_t1", &s1),
        ("labels_t2", &s2),
        ("labels_change", &change),
    ] {
        let path = dir.join(format!("{stem}.json"));
        let revision = if path.is_file() {
            read_labels_with_revision(&path)?.1.unwrap_or(0) + 1
        } else {
            0
        };
        write_labels_as(labels, &path, Some(revision))?;
    }
    Ok(())
}

fn class_fractions(labels: &LabelRaster) -> String {
    let names = labels.kind.class_names();
    let n = labels.values.len() as f64;
    names
        .iter()
        .enumerate()
        .map(|(code, name)| {
            let count = labels
                .values
                .iter()
                .filter(|&&v| v as usize == code)
                .count();
            format!("{name} {:.1}%", 100.0 * count as f64 / n)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn autolabel(a: AutolabelArgs) -> Result<ExitCode> {
    let cfg = autolabel_config(a.config.as_deref())?;
    let pair = read_pair(&a.region)?;
    write_autolabels(&a.region, &pair, &cfg)?;
    let (change, _) = read_labels_with_revision(a.region.join("labels_change.json"))?;
    println!("{}: {}", a.region.display(), class_fractions(&change));
    Ok(ExitCode::SUCCESS)
}

fn experiment_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(out) = &a.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = a.seed {
        cfg.trials.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_groups(groups: &[GroupSummary]) {
    println!(
        "{:<8} {:<15} {:>5} {:>4} {:>8} {:>8} {:>8} {:>8}",
        "bands", "method", "n", "runs", "kappa", "best", "jaccard", "f1"
    );
    for g in groups {
        println!(
            "{:<8} {:<15} {:>5} {:>4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            g.band_mode,
            g.method,
            g.labels_per_class,
            g.n,
            g.kappa.mean,
            g.kappa.best_trial_of_region_average,
            g.jaccard_macro.mean,
            g.f1_macro.mean
        );
    }
}

fn run_sweep(a: ExperimentArgs) -> Result<ExitCode> {
    let cfg = experiment_config(&a)?;
    let outcome = run_experiment(&cfg)?;
    print_groups(&summarize(&outcome.reports));
    println!("results in {}", cfg.output_dir.display());
    if outcome.failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for f in &outcome.failures {
        eprintln!(
            "failed: {} {} n={} trial {}: {}",
            f.region, f.method, f.labels_per_class, f.trial, f.error
        );
    }
    eprintln!("{} cell(s) failed", outcome.failures.len());
    Ok(ExitCode::FAILURE)
}

fn eval(a: ExperimentArgs) -> Result<ExitCode> {
    let cfg = experiment_config(&a)?;
    let reports = recompute_metrics(&cfg)?;
    if reports.is_empty() {
        bail!("no saved predictions under {}", cfg.output_dir.display());
    }
    let path = cfg.output_dir.join("metrics_recomputed.csv");
    fs::write(&path, metrics_csv(&reports))
        .with_context(|| format!("writing {}", path.display()))?;
    print_groups(&summarize(&reports));
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn heatmap(a: ExperimentArgs) -> Result<ExitCode> {
    let cfg = experiment_config(&a)?;
    let n = render_heatmaps(&cfg)?;
    if n == 0 {
        bail!("no saved predictions under {}", cfg.output_dir.display());
    }
    println!(
        "wrote {n} heatmap(s) under {}",
        cfg.output_dir.join("heatmaps").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn serve(a: ServeArgs) -> Result<ExitCode> {
    let store = RegionStore::new(&a.out);
    let regions = store
        .list()
        .with_context(|| format!("listing regions in {}", a.out.display()))?;
    log::info!("{} region(s) found", regions.len());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(store, a.addr))?;
    Ok(ExitCode::SUCCESS)
}
