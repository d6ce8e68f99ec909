use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{target_rank, GagModel};
use crate::session_graph::{Session, SessionGraph};

/// Anything that can rank the catalog for a user's click prefix.
pub trait Recommender: Sync {
    /// 1-based rank of `target` among all catalog items.
    fn rank(&self, user: usize, prefix: &[usize], target: usize) -> Result<usize>;
}

impl Recommender for GagModel {
    fn rank(&self, user: usize, prefix: &[usize], target: usize) -> Result<usize> {
        let graph = SessionGraph::from_items(user, prefix, self.num_items())?;
        let pred = self.forward(&graph)?.prediction;
        if target >= pred.len() {
            return Err(Error::CatalogViolation {
                kind: "item",
                id: target,
                size: pred.len(),
            });
        }
        Ok(target_rank(&pred, target))
    }
}

/// Recall@K and MRR@K for one test chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkReport {
    pub chunk_index: usize,
    pub session_count: usize,
    pub event_count: usize,
    pub recall: BTreeMap<usize, f64>,
    pub mrr: BTreeMap<usize, f64>,
    /// Kept out of the report lines so identical runs produce identical files;
    /// the manifest records it instead.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Accumulates hit and reciprocal-rank sums for a fixed set of cutoffs.
#[derive(Debug, Clone)]
pub struct RankAccumulator {
    ks: Vec<usize>,
    hits: Vec<u64>,
    rr: Vec<f64>,
    events: usize,
}

impl RankAccumulator {
    pub fn new(ks: &[usize]) -> Self {
        RankAccumulator {
            ks: ks.to_vec(),
            hits: vec![0; ks.len()],
            rr: vec![0.0; ks.len()],
            events: 0,
        }
    }

    pub fn add(&mut self, rank: usize) {
        self.events += 1;
        for (i, &k) in self.ks.iter().enumerate() {
            if rank <= k {
                self.hits[i] += 1;
                self.rr[i] += 1.0 / rank as f64;
            }
        }
    }

    pub fn events(&self) -> usize {
        self.events
    }

    pub fn recall(&self) -> BTreeMap<usize, f64> {
        self.ks
            .iter()
            .zip(&self.hits)
            .map(|(&k, &h)| (k, h as f64 / self.events.max(1) as f64))
            .collect()
    }

    pub fn mrr(&self) -> BTreeMap<usize, f64> {
        self.ks
            .iter()
            .zip(&self.rr)
            .map(|(&k, &r)| (k, r / self.events.max(1) as f64))
            .collect()
    }
}

/// Scores every prefix of every session: a session of length `l` yields
/// `l - 1` prediction events.
pub fn evaluate_chunk<R: Recommender + ?Sized>(
    recommender: &R,
    chunk: &[Session],
    ks: &[usize],
    chunk_index: usize,
) -> Result<ChunkReport> {
    if chunk.is_empty() {
        return Err(Error::Data(format!("test chunk {chunk_index} is empty")));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::config(
            "ks",
            "cutoffs must be positive and non-empty",
        ));
    }
    let started = Instant::now();
    let ranks: Vec<Vec<usize>> = chunk
        .par_iter()
        .map(|s| {
            (1..s.items.len())
                .map(|p| recommender.rank(s.user_id, &s.items[..p], s.items[p]))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut acc = RankAccumulator::new(ks);
    for r in ranks.iter().flatten() {
        acc.add(*r);
    }
    Ok(ChunkReport {
        chunk_index,
        session_count: chunk.len(),
        event_count: acc.events(),
        recall: acc.recall(),
        mrr: acc.mrr(),
        wall_time: started.elapsed(),
    })
}
