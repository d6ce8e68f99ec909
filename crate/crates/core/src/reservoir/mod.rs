//! Bounded reservoir of past sessions and the distance-weighted online
//! update built on top of it.

mod distance;
mod sampling;
mod update;

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session_graph::Session;

pub use distance::{distribution_distance, wasserstein_1d, DistanceKind};
pub use sampling::weighted_sample_without_replacement;
pub use update::{
    build_update_set, online_update, session_distances, KnownEntities, SamplingRule, UpdateOutcome,
    UpdatePolicy, UpdateSet,
};

/// Uniform sample of the session stream with a fixed capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    capacity: usize,
    entries: Vec<Session>,
    arrival_counter: u64,
}

impl Reservoir {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("reservoir_capacity", "must be at least 1"));
        }
        Ok(Reservoir {
            capacity,
            entries: Vec::with_capacity(capacity),
            arrival_counter: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[Session] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of sessions ever offered.
    pub fn arrival_counter(&self) -> u64 {
        self.arrival_counter
    }

    /// Offers one session. Below capacity it is always kept; afterwards the
    /// `t`-th session replaces a uniformly chosen entry with probability
    /// `capacity / t`. Returns whether the session was stored.
    pub fn maybe_store<R: Rng + ?Sized>(&mut self, session: &Session, rng: &mut R) -> bool {
        self.arrival_counter += 1;
        if self.entries.len() < self.capacity {
            self.entries.push(session.clone());
            return true;
        }
        if rng.gen_range(0..self.arrival_counter) < self.capacity as u64 {
            let slot = rng.gen_range(0..self.capacity);
            self.entries[slot] = session.clone();
            true
        } else {
            false
        }
    }

    /// Offers every session in arrival order.
    pub fn advance<R: Rng + ?Sized>(&mut self, sessions: &[Session], rng: &mut R) {
        for s in sessions {
            self.maybe_store(s, rng);
        }
    }

    /// Writes a JSON-lines snapshot: a header with capacity and counter,
    /// then one session per line.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(
            &mut out,
            &SnapshotHeader {
                capacity: self.capacity,
                arrival_counter: self.arrival_counter,
            },
        )?;
        out.write_all(b"\n")?;
        for s in &self.entries {
            serde_json::to_writer(
                &mut out,
                &SnapshotEntry {
                    user_id: s.user_id,
                    items: s.items.clone(),
                    arrival_index: s.arrival_index,
                },
            )?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Data("empty reservoir snapshot".into()))?;
        let header: SnapshotHeader = serde_json::from_str(&header?).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let mut reservoir = Reservoir::new(header.capacity)?;
        reservoir.arrival_counter = header.arrival_counter;
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: SnapshotEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            reservoir
                .entries
                .push(Session::new(e.user_id, e.items, e.arrival_index));
        }
        if reservoir.entries.len() > reservoir.capacity
            || (reservoir.entries.len() as u64) > reservoir.arrival_counter
        {
            return Err(Error::Data(
                "reservoir snapshot violates its capacity".into(),
            ));
        }
        Ok(reservoir)
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    capacity: usize,
    arrival_counter: u64,
}

#[derive(Serialize, Deserialize)]
struct SnapshotEntry {
    user_id: usize,
    items: Vec<usize>,
    arrival_index: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn session(i: u64) -> Session {
        Session::new(0, vec![i as usize, i as usize + 1], i)
    }

    #[test]
    fn fill_phase_always_stores() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = Reservoir::new(5).unwrap();
        r.advance(&[session(0), session(1), session(2)], &mut rng);
        assert!(r.maybe_store(&session(3), &mut rng));
        assert_eq!(r.len(), 4);
        assert_eq!(r.arrival_counter(), 4);
    }

    #[test]
    fn store_probability_is_capacity_over_t() {
        // t = 400 after the increment, capacity 100: p = 0.25
        let trials = 40_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut base = Reservoir::new(100).unwrap();
        base.advance(&(0..399).map(session).collect::<Vec<_>>(), &mut rng);
        let mut stored = 0;
        for _ in 0..trials {
            let mut r = base.clone();
            if r.maybe_store(&session(399), &mut rng) {
                stored += 1;
            }
        }
        let rate = stored as f64 / trials as f64;
        let sigma = (0.25f64 * 0.75 / trials as f64).sqrt();
        assert!((rate - 0.25).abs() < 4.0 * sigma, "rate {rate}");
    }

    #[test]
    fn boundary_session_is_stored() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut r = Reservoir::new(100).unwrap();
        r.advance(&(0..99).map(session).collect::<Vec<_>>(), &mut rng);
        assert!(r.maybe_store(&session(99), &mut rng));
        assert_eq!(r.arrival_counter(), 100);
    }

    #[test]
    fn capacity_bound_and_counter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = Reservoir::new(3).unwrap();
        r.advance(&[session(0), session(1)], &mut rng);
        assert_eq!((r.len(), r.arrival_counter()), (2, 2));

        let mut r = Reservoir::new(1).unwrap();
        r.advance(&[session(0)], &mut rng);
        r.advance(&(0..1000).map(session).collect::<Vec<_>>(), &mut rng);
        assert_eq!(r.len(), 1);
        assert_eq!(r.arrival_counter(), 1001);
    }

    #[test]
    fn zero_capacity_is_rejected() {
        assert!(Reservoir::new(0).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut r = Reservoir::new(4).unwrap();
        r.advance(&(0..10).map(session).collect::<Vec<_>>(), &mut rng);
        let mut buf = Vec::new();
        r.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"capacity\":4,\"arrival_counter\":10}\n"));
        assert_eq!(text.lines().count(), 5);
        let back = Reservoir::read_snapshot(&buf[..]).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn snapshot_rejects_garbage() {
        let err =
            Reservoir::read_snapshot(&b"{\"capacity\":2,\"arrival_counter\":3}\nnot json\n"[..])
                .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
