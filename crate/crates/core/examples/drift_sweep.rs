//! Compares streaming arms on synthetic drifting streams.
//!
//! `cargo run --release -p gag-core --example drift_sweep -- [seeds] [embed_dim] [variant:distance,...] [online_epochs]`

use std::time::Instant;

use gag_core::harness::{
    corpus_from_log, generate, run_on_corpus, EventLog, RunConfig, SynthConfig, Variant,
};
use gag_core::reservoir::DistanceKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).map_or(Ok(3), |s| s.parse())?;
    let embed_dim: usize = args.get(2).map_or(Ok(32), |s| s.parse())?;
    let online_epochs: usize = args.get(4).map_or(Ok(1), |s| s.parse())?;
    let arms: Vec<(Variant, DistanceKind)> = match args.get(3) {
        Some(list) => list
            .split(',')
            .map(|a| {
                let (v, d) = a.split_once(':').unwrap_or((a, "wasserstein"));
                Ok((v.parse()?, d.parse()?))
            })
            .collect::<Result<_, gag_core::Error>>()?,
        None => vec![
            (Variant::Full, DistanceKind::Wasserstein),
            (Variant::Static, DistanceKind::Wasserstein),
            (Variant::RanUni, DistanceKind::Wasserstein),
        ],
    };
    for seed in 0..seeds {
        let log = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })?;
        let corpus = corpus_from_log(&EventLog::from_events(log.events)?, 8 * 3600, 10_000)?;
        let mut line = format!("seed {seed}:");
        for &(variant, distance_kind) in &arms {
            let started = Instant::now();
            let config = RunConfig {
                embed_dim,
                variant,
                distance_kind,
                online_epochs,
                rng_seed: seed,
                ..RunConfig::default()
            };
            let out = run_on_corpus(&config, &corpus)?;
            let r20: Vec<f64> = out.reports.iter().map(|r| r.recall[&20]).collect();
            let tail = (r20[3] + r20[4]) / 2.0;
            line += &format!(
                "  {variant}/{distance_kind}: tail {tail:.4} chunks {:?} ({:.1}s)",
                r20.iter()
                    .map(|x| (x * 1000.0).round() / 1000.0)
                    .collect::<Vec<_>>(),
                started.elapsed().as_secs_f64()
            );
        }
        println!("{line}");
    }
    Ok(())
}
