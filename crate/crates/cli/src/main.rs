//! `gag`: ingest event logs, generate synthetic streams, train offline,
//! run the streaming protocol and print reports.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gag_core::harness::{
    chronological_split, entity_extent, generate, ingest_events, load_dataset, manifest_path,
    read_reports, run_stream, train_offline, write_log, write_manifest, write_reports, ChunkReport,
    EventFormat, RunConfig, SynthConfig,
};
use gag_core::model::checkpoint;
use log::info;

#[derive(Parser)]
#[command(
    name = "gag",
    version,
    about = "Streaming session-based recommendation"
)]
struct Cli {
    /// Worker threads for evaluation and gradient computation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a raw event log into a corpus file.
    Ingest(IngestArgs),
    /// Write a seeded synthetic event log with preference drift.
    Synth(SynthArgs),
    /// Offline training only; writes a checkpoint.
    Train(TrainArgs),
    /// Offline phase plus streaming evaluation; writes reports and a manifest.
    Run(RunArgs),
    /// Pretty-print report files as a table.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Event log (optionally gzip-compressed).
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "triples")]
    format: EventFormat,
    #[arg(long, default_value_t = 8.0)]
    gap_hours: f64,
    #[arg(long, default_value_t = 10_000)]
    top_items: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    successors: Option<usize>,
    #[arg(long)]
    follow_prob: Option<f64>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    drift_at: Option<f64>,
    #[arg(long)]
    novel_rate: Option<f64>,
    #[arg(long)]
    novel_pool: Option<usize>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Flags mirroring the configuration file; a flag overrides the file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` file, or a run manifest to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Event log or corpus file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    gap_hours: Option<f64>,
    #[arg(long)]
    top_items: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    num_layers: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    offline_epochs: Option<usize>,
    #[arg(long)]
    online_epochs: Option<usize>,
    #[arg(long)]
    reservoir_divisor: Option<usize>,
    #[arg(long)]
    window_divisor: Option<usize>,
    /// wasserstein | kl | tv
    #[arg(long)]
    distance: Option<String>,
    /// full | static | ran_uni | fix_new | wass_uni
    #[arg(long)]
    variant: Option<String>,
    /// gag | pop | spop
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated cutoffs, e.g. `5,10,20`.
    #[arg(long)]
    ks: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other configuration key, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint destination; a `.json` sidecar is written next to it.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Start from this checkpoint instead of training offline.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report file (JSON lines); the manifest goes next to it.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> gag_core::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let mut set = |key: &str, value: Option<String>| match value {
            Some(v) => config.set(key, &v),
            None => Ok(()),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set("dataset", path(&self.dataset))?;
        set("format", self.format.clone())?;
        set("session_gap_hours", self.gap_hours.map(|v| v.to_string()))?;
        set("top_n_items", self.top_items.map(|v| v.to_string()))?;
        set("embed_dim", self.embed_dim.map(|v| v.to_string()))?;
        set("num_layers", self.num_layers.map(|v| v.to_string()))?;
        set("learning_rate", self.learning_rate.map(|v| v.to_string()))?;
        set("batch_size", self.batch_size.map(|v| v.to_string()))?;
        set("offline_epochs", self.offline_epochs.map(|v| v.to_string()))?;
        set("online_epochs", self.online_epochs.map(|v| v.to_string()))?;
        set(
            "reservoir_capacity_divisor",
            self.reservoir_divisor.map(|v| v.to_string()),
        )?;
        set("window_divisor", self.window_divisor.map(|v| v.to_string()))?;
        set("distance_kind", self.distance.clone())?;
        set("variant", self.variant.clone())?;
        set("method", self.method.clone())?;
        set("ks", self.ks.clone())?;
        set("rng_seed", self.seed.map(|v| v.to_string()))?;
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| gag_core::Error::config(kv.as_str(), "expected KEY=VALUE"))?;
            config.set(k, v)?;
        }
        if config.dataset.as_os_str().is_empty() {
            return Err(gag_core::Error::config("dataset", "no dataset given"));
        }
        config.validate()?;
        Ok(config)
    }
}

fn cmd_ingest(args: &IngestArgs) -> anyhow::Result<()> {
    let gap = (args.gap_hours * 3600.0).round() as i64;
    let corpus = ingest_events(&args.input, gap, args.top_items, args.format)?;
    corpus.save(&args.output)?;
    println!(
        "{} sessions, {} events, {} items, {} users -> {}",
        corpus.len(),
        corpus.num_events(),
        corpus.num_items(),
        corpus.num_users(),
        args.output.display()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut cfg = SynthConfig::default();
    macro_rules! take {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { cfg.$field = v; })* };
    }
    take!(
        users,
        items,
        sessions,
        groups,
        successors,
        follow_prob,
        min_len,
        max_len,
        drift_at,
        novel_rate,
        novel_pool,
        train_frac,
        seed
    );
    let log = generate(&cfg)?;
    let mut out = BufWriter::new(
        fs::File::create(&args.output)
            .with_context(|| format!("creating {}", args.output.display()))?,
    );
    write_log(&log, &mut out)?;
    out.flush()?;
    println!(
        "{} sessions ({} with novel items), {} events -> {}",
        log.sessions.len(),
        log.novel_sessions.len(),
        log.events.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let config = args.config.resolve()?;
    let (corpus, _) = load_dataset(&config)?;
    let split = chronological_split(&corpus.sessions, config.train_frac, config.num_chunks)?;
    let (items, users) = entity_extent(&split.train);
    let (model, losses) = train_offline(&config, &split.train, items, users)?;
    checkpoint::save(&model, &args.output)?;
    println!(
        "trained on {} sessions, {} epochs, final loss {:.5} -> {}",
        split.train.len(),
        losses.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        args.output.display()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let mut config = args.config.resolve()?;
    if let Some(path) = &args.checkpoint {
        config.checkpoint = Some(path.clone());
    }
    if let Some(path) = &args.output {
        config.output = path.clone();
    }
    let out = run_stream(&config)?;
    write_reports(&config.output, &out.reports)?;
    let manifest = manifest_path(&config.output);
    write_manifest(&manifest, &out.manifest)?;
    info!("manifest written to {}", manifest.display());
    print_table(&config.output, &out.reports, &config.ks);
    Ok(())
}

fn print_table(source: &Path, reports: &[ChunkReport], ks: &[usize]) {
    println!("{}", source.display());
    let mut header = format!("{:>5} {:>8} {:>8}", "chunk", "sessions", "events");
    for k in ks {
        header += &format!(" {:>9} {:>9}", format!("R@{k}"), format!("MRR@{k}"));
    }
    println!("{header}");
    for r in reports {
        let mut line = format!(
            "{:>5} {:>8} {:>8}",
            r.chunk_index, r.session_count, r.event_count
        );
        for k in ks {
            let recall = r.recall.get(k).copied().unwrap_or(f64::NAN);
            let mrr = r.mrr.get(k).copied().unwrap_or(f64::NAN);
            line += &format!(" {recall:>9.4} {mrr:>9.4}");
        }
        println!("{line}");
    }
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    for path in &args.files {
        let reports = read_reports(path)?;
        let ks: Vec<usize> = reports
            .first()
            .map(|r| r.recall.keys().copied().collect())
            .unwrap_or_default();
        print_table(path, &reports, &ks);
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<gag_core::Error>())
        .map_or(2, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
        {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
