use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use super::baselines::{Pop, SPop};
use super::config::{Method, RunConfig};
use super::corpus::{ingest_events, Corpus};
use super::metrics::{evaluate_chunk, ChunkReport};
use super::split::{chronological_split, StreamSplit};
use crate::error::{Error, Result};
use crate::model::{checkpoint, prefix_examples, GagModel};
use crate::reservoir::{build_update_set, online_update, KnownEntities, Reservoir, UpdateOutcome};
use crate::session_graph::Session;

// Independent random streams derived from the run seed.
const STREAM_OFFLINE: u64 = 1;
const STREAM_RESERVOIR: u64 = 2;
const STREAM_SAMPLING: u64 = 3;
const STREAM_ONLINE: u64 = 4;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Git blob hash (`git hash-object`) of a byte string.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// `(max item id + 1, max user id + 1)` over `sessions`.
pub fn entity_extent<'a>(sessions: impl IntoIterator<Item = &'a Session>) -> (usize, usize) {
    sessions.into_iter().fold((0, 0), |(mi, mu), s| {
        let top = s.items.iter().copied().max().map_or(0, |i| i + 1);
        (mi.max(top), mu.max(s.user_id + 1))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sessions: usize,
    pub events: usize,
    pub items: usize,
    pub users: usize,
}

impl CorpusStats {
    pub fn of(corpus: &Corpus) -> Self {
        CorpusStats {
            sessions: corpus.len(),
            events: corpus.num_events(),
            items: corpus.num_items(),
            users: corpus.num_users(),
        }
    }
}

/// What happened while processing one chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkLog {
    pub chunk_index: usize,
    pub wall_time_secs: f64,
    pub catalog_items: usize,
    pub catalog_users: usize,
    pub update_set_size: usize,
    pub forced_count: usize,
    pub window_size: usize,
    pub online_loss: Option<f64>,
    /// Optimizer steps taken so far, for the model-based methods.
    pub adam_steps: u64,
    pub reservoir_len: usize,
    pub reservoir_arrivals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub config: RunConfig,
    pub rng_seed: u64,
    pub input_hash: Option<String>,
    pub corpus: CorpusStats,
    pub train_sessions: usize,
    pub chunk_sessions: Vec<usize>,
    pub reservoir_capacity: usize,
    pub offline_losses: Vec<f64>,
    pub chunks: Vec<ChunkLog>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reports: Vec<ChunkReport>,
    pub manifest: Manifest,
    /// Final model, for the graph-network method.
    pub model: Option<GagModel>,
}

/// Trains a fresh model on the offline portion. Stops early once an epoch
/// improves the mean loss by less than `plateau_tolerance` (relative).
pub fn train_offline(
    config: &RunConfig,
    train: &[Session],
    num_items: usize,
    num_users: usize,
) -> Result<(GagModel, Vec<f64>)> {
    let mut model = GagModel::init(config.model_config(), num_items.max(1), num_users.max(1))?;
    let losses = continue_offline(&mut model, config, train)?;
    Ok((model, losses))
}

fn continue_offline(
    model: &mut GagModel,
    config: &RunConfig,
    train: &[Session],
) -> Result<Vec<f64>> {
    let examples: Vec<_> = train.iter().flat_map(prefix_examples).collect();
    let mut rng = stream_rng(config.rng_seed, STREAM_OFFLINE);
    let mut losses: Vec<f64> = Vec::new();
    for epoch in 0..config.offline_epochs {
        let loss = model.train_epoch(&examples, &mut rng)?;
        info!("offline epoch {}: mean loss {loss:.5}", epoch + 1);
        let plateau = losses
            .last()
            .is_some_and(|&prev| prev - loss < config.plateau_tolerance * prev.abs());
        losses.push(loss);
        if plateau {
            break;
        }
    }
    Ok(losses)
}

/// Loads `config.dataset`, either a corpus file or a raw event log.
/// Returns the corpus and the git blob hash of the file.
pub fn load_dataset(config: &RunConfig) -> Result<(Corpus, String)> {
    let path: &Path = &config.dataset;
    let bytes = fs::read(path)?;
    let hash = git_blob_hash(&bytes);
    let corpus = if bytes.starts_with(b"{\"format\":\"gag-corpus") {
        Corpus::read(&bytes[..])?
    } else {
        ingest_events(
            path,
            config.session_gap_secs(),
            config.top_n_items,
            config.format,
        )?
    };
    Ok((corpus, hash))
}

/// Full prequential protocol driven by `config.dataset`.
pub fn run_stream(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let (corpus, hash) = load_dataset(config)?;
    let mut out = run_on_corpus(config, &corpus)?;
    out.manifest.input_hash = Some(hash);
    Ok(out)
}

/// Offline phase on the training portion, then for each chunk: evaluate,
/// build the update set, update online, advance the reservoir.
pub fn run_on_corpus(config: &RunConfig, corpus: &Corpus) -> Result<RunOutput> {
    config.validate()?;
    let split = chronological_split(&corpus.sessions, config.train_frac, config.num_chunks)?;
    let mut manifest = Manifest {
        tool: format!("gag-core {}", env!("CARGO_PKG_VERSION")),
        config: config.clone(),
        rng_seed: config.rng_seed,
        input_hash: None,
        corpus: CorpusStats::of(corpus),
        train_sessions: split.train.len(),
        chunk_sessions: split.chunks.iter().map(Vec::len).collect(),
        reservoir_capacity: (split.train.len() / config.reservoir_capacity_divisor).max(1),
        offline_losses: Vec::new(),
        chunks: Vec::new(),
    };
    let (reports, model) = match config.method {
        Method::Gag => {
            let (reports, model) = run_gag(config, &split, &mut manifest)?;
            (reports, Some(model))
        }
        Method::Pop | Method::Spop => (run_popularity(config, &split, &mut manifest)?, None),
    };
    Ok(RunOutput {
        reports,
        manifest,
        model,
    })
}

fn run_gag(
    config: &RunConfig,
    split: &StreamSplit,
    manifest: &mut Manifest,
) -> Result<(Vec<ChunkReport>, GagModel)> {
    let (train_items, train_users) = entity_extent(&split.train);
    let mut model = match &config.checkpoint {
        Some(path) => {
            let mut model = checkpoint::load(path)?;
            model.grow_catalog(
                model.num_items().max(train_items),
                model.num_users().max(train_users),
            )?;
            model
        }
        None => {
            let (model, losses) = train_offline(config, &split.train, train_items, train_users)?;
            manifest.offline_losses = losses;
            model
        }
    };

    let mut known = KnownEntities::new();
    known.observe_all(&split.train);
    let mut reservoir = Reservoir::new(manifest.reservoir_capacity)?;
    let mut reservoir_rng = stream_rng(config.rng_seed, STREAM_RESERVOIR);
    let mut sampling_rng = stream_rng(config.rng_seed, STREAM_SAMPLING);
    let mut online_rng = stream_rng(config.rng_seed, STREAM_ONLINE);
    reservoir.advance(&split.train, &mut reservoir_rng);
    let policy = config.variant.policy(config.distance_kind);

    let mut reports = Vec::with_capacity(split.chunks.len());
    for (c, chunk) in split.chunks.iter().enumerate() {
        let started = Instant::now();
        let (items, users) = entity_extent(chunk);
        model.grow_catalog(model.num_items().max(items), model.num_users().max(users))?;
        let report = evaluate_chunk(&model, chunk, &config.ks, c + 1)?;

        let mut log = ChunkLog {
            chunk_index: c + 1,
            wall_time_secs: 0.0,
            catalog_items: model.num_items(),
            catalog_users: model.num_users(),
            update_set_size: 0,
            forced_count: 0,
            window_size: 0,
            online_loss: None,
            adam_steps: 0,
            reservoir_len: 0,
            reservoir_arrivals: 0,
        };
        if let Some(policy) = policy {
            let window = (chunk.len() / config.window_divisor).max(1);
            let update = build_update_set(
                &reservoir,
                chunk,
                &model,
                window,
                &known,
                policy,
                &mut sampling_rng,
            )?;
            log.update_set_size = update.sessions.len();
            log.forced_count = update.forced_count;
            log.window_size = update.window_size;
            if let UpdateOutcome::Trained { final_loss, .. } =
                online_update(&mut model, &update, config.online_epochs, &mut online_rng)?
            {
                log.online_loss = final_loss.is_finite().then_some(final_loss);
            }
        }
        reservoir.advance(chunk, &mut reservoir_rng);
        known.observe_all(chunk);

        log.adam_steps = model.adam.step;
        log.reservoir_len = reservoir.len();
        log.reservoir_arrivals = reservoir.arrival_counter();
        log.wall_time_secs = started.elapsed().as_secs_f64();
        info!(
            "chunk {}: recall@{:?} = {:?}",
            c + 1,
            config.ks,
            report.recall.values().collect::<Vec<_>>()
        );
        manifest.chunks.push(log);
        reports.push(ChunkReport {
            wall_time: started.elapsed(),
            ..report
        });
    }
    Ok((reports, model))
}

fn run_popularity(
    config: &RunConfig,
    split: &StreamSplit,
    manifest: &mut Manifest,
) -> Result<Vec<ChunkReport>> {
    let (train_items, _) = entity_extent(&split.train);
    let mut pop = Pop::fit(&split.train, train_items);
    let mut reports = Vec::with_capacity(split.chunks.len());
    for (c, chunk) in split.chunks.iter().enumerate() {
        let started = Instant::now();
        pop.grow(entity_extent(chunk).0);
        let report = match config.method {
            Method::Pop => evaluate_chunk(&pop, chunk, &config.ks, c + 1)?,
            _ => evaluate_chunk(&SPop { pop: &pop }, chunk, &config.ks, c + 1)?,
        };
        if config.pop_online {
            pop.observe(chunk);
        }
        manifest.chunks.push(ChunkLog {
            chunk_index: c + 1,
            wall_time_secs: started.elapsed().as_secs_f64(),
            catalog_items: pop.num_items(),
            catalog_users: 0,
            update_set_size: 0,
            forced_count: 0,
            window_size: 0,
            online_loss: None,
            adam_steps: 0,
            reservoir_len: 0,
            reservoir_arrivals: 0,
        });
        reports.push(ChunkReport {
            wall_time: started.elapsed(),
            ..report
        });
    }
    Ok(reports)
}

/// One JSON object per line.
pub fn write_reports(path: &Path, reports: &[ChunkReport]) -> Result<()> {
    let mut buf = Vec::new();
    for r in reports {
        serde_json::to_writer(&mut buf, r)?;
        buf.write_all(b"\n")?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<ChunkReport>> {
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Manifest path next to a report file: `<report>.manifest.json`.
pub fn manifest_path(report: &Path) -> std::path::PathBuf {
    let mut s = report.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git() {
        // `printf 'hello\n' | git hash-object --stdin`
        assert_eq!(
            git_blob_hash(b"hello\n"),
            "ce013625030ba8dba906f756967f9e9ca394464a"
        );
        assert_eq!(
            git_blob_hash(b""),
            "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
        );
    }

    #[test]
    fn extent_of_sessions() {
        let s = [Session::new(2, vec![0, 7], 0), Session::new(0, vec![3], 1)];
        assert_eq!(entity_extent(&s), (8, 3));
        assert_eq!(entity_extent(&[]), (0, 0));
    }
}
