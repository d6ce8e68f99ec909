//! Data preparation, evaluation and the streaming protocol.

pub mod baselines;
pub mod config;
pub mod corpus;
pub mod events;
pub mod metrics;
pub mod split;
pub mod stream;
pub mod synth;

pub use baselines::{Pop, SPop};
pub use config::{Method, RunConfig, Variant};
pub use corpus::{corpus_from_log, ingest_events, sessionize, Corpus, RawSession};
pub use events::{read_event_file, read_events, Event, EventFormat, EventLog};
pub use metrics::{evaluate_chunk, ChunkReport, RankAccumulator, Recommender};
pub use split::{chronological_split, StreamSplit};
pub use stream::{
    entity_extent, git_blob_hash, load_dataset, manifest_path, read_reports, run_on_corpus,
    run_stream, train_offline, write_manifest, write_reports, ChunkLog, CorpusStats, Manifest,
    RunOutput,
};
pub use synth::write_log;
pub use synth::{generate, SynthConfig, SynthLog};
