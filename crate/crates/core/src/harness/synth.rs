//! Seeded synthetic event logs with drifting preferences and cold-start items.
//!
//! Items are partitioned into groups. Every user prefers one group before
//! the drift point and a different one afterwards. Within a session each
//! click follows a per-item successor table (the table is redrawn at the
//! drift point) with probability `follow_prob`, otherwise it jumps to a
//! random item of the user's current group. A fixed fraction of the
//! sessions after the train/test boundary receive one item from a reserve
//! pool that never occurs before that boundary.
//!
//! Sessions are spaced further apart than any sensible session gap and
//! clicks inside a session one minute apart, so ingesting the log with an
//! 8-hour gap reproduces the generated sessions exactly.

use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{MAX_SESSION_LEN, MIN_SESSION_LEN};
use super::events::Event;
use crate::error::{Error, Result};

pub const SYNTH_START_TIME: i64 = 1_500_000_000;
pub const SYNTH_SESSION_SPACING: i64 = 9 * 3600;
pub const SYNTH_CLICK_SPACING: i64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub sessions: usize,
    pub groups: usize,
    pub successors: usize,
    pub follow_prob: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Fraction of the stream after which preferences change.
    pub drift_at: f64,
    /// Fraction of post-boundary sessions that contain a reserve item.
    pub novel_rate: f64,
    pub novel_pool: usize,
    /// Train/test boundary used for novel-item injection.
    pub train_frac: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 50,
            items: 200,
            sessions: 2000,
            groups: 5,
            successors: 2,
            follow_prob: 0.8,
            min_len: 3,
            max_len: 8,
            drift_at: 0.7,
            novel_rate: 0.05,
            novel_pool: 20,
            train_frac: 0.6,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("users", self.users),
            ("items", self.items),
            ("sessions", self.sessions),
            ("groups", self.groups),
            ("successors", self.successors),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if self.groups > self.items {
            return Err(Error::config("groups", "cannot exceed the number of items"));
        }
        if self.min_len < MIN_SESSION_LEN
            || self.max_len > MAX_SESSION_LEN
            || self.min_len > self.max_len
        {
            return Err(Error::config(
                "min_len",
                format!("session lengths must satisfy {MIN_SESSION_LEN} <= min_len <= max_len <= {MAX_SESSION_LEN}"),
            ));
        }
        for (name, v) in [
            ("follow_prob", self.follow_prob),
            ("drift_at", self.drift_at),
            ("novel_rate", self.novel_rate),
            ("train_frac", self.train_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, "must lie in [0, 1]"));
            }
        }
        if self.novel_rate > 0.0 && self.novel_pool == 0 {
            return Err(Error::config(
                "novel_pool",
                "must be positive when novel_rate > 0",
            ));
        }
        Ok(())
    }

    /// Index of the first session after the train/test boundary.
    pub fn boundary(&self) -> usize {
        ((self.sessions as f64) * self.train_frac + 1e-9).floor() as usize
    }

    pub fn drift_index(&self) -> usize {
        ((self.sessions as f64) * self.drift_at + 1e-9).floor() as usize
    }
}

/// Generated log plus bookkeeping about what was injected.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLog {
    pub events: Vec<Event>,
    /// Item-name sequence per session, in stream order.
    pub sessions: Vec<(String, Vec<String>)>,
    pub novel_sessions: Vec<usize>,
}

struct Phase {
    user_group: Vec<usize>,
    successors: Vec<Vec<usize>>,
}

fn group_members(items: usize, groups: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); groups];
    for i in 0..items {
        members[i % groups].push(i);
    }
    members
}

fn draw_phase(
    cfg: &SynthConfig,
    members: &[Vec<usize>],
    rng: &mut ChaCha8Rng,
    avoid: Option<&[usize]>,
) -> Phase {
    let user_group = (0..cfg.users)
        .map(|u| loop {
            let g = rng.gen_range(0..cfg.groups);
            if cfg.groups == 1 || avoid.is_none_or(|a| a[u] != g) {
                break g;
            }
        })
        .collect();
    let successors = (0..cfg.items)
        .map(|i| {
            let group = &members[i % cfg.groups];
            (0..cfg.successors)
                .map(|_| *group.choose(rng).unwrap())
                .collect()
        })
        .collect();
    Phase {
        user_group,
        successors,
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthLog> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let members = group_members(cfg.items, cfg.groups);
    let before = draw_phase(cfg, &members, &mut rng, None);
    let after = draw_phase(cfg, &members, &mut rng, Some(&before.user_group));

    let boundary = cfg.boundary();
    let drift = cfg.drift_index();
    let post = cfg.sessions - boundary;
    let n_novel = ((post as f64) * cfg.novel_rate).round() as usize;
    let mut novel_sessions: Vec<usize> = index::sample(&mut rng, post, n_novel.min(post))
        .into_iter()
        .map(|i| boundary + i)
        .collect();
    novel_sessions.sort_unstable();

    let mut events = Vec::new();
    let mut sessions = Vec::with_capacity(cfg.sessions);
    let mut novel_iter = novel_sessions.iter().peekable();
    for s in 0..cfg.sessions {
        let phase = if s < drift { &before } else { &after };
        let user = rng.gen_range(0..cfg.users);
        let group = &members[phase.user_group[user]];
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut clicks: Vec<String> = Vec::with_capacity(len);
        let mut current = *group.choose(&mut rng).unwrap();
        clicks.push(format!("i{current}"));
        while clicks.len() < len {
            current = if rng.gen_bool(cfg.follow_prob) {
                *phase.successors[current].choose(&mut rng).unwrap()
            } else {
                *group.choose(&mut rng).unwrap()
            };
            clicks.push(format!("i{current}"));
        }
        if novel_iter.next_if_eq(&&s).is_some() {
            let pos = rng.gen_range(0..len);
            clicks[pos] = format!("n{}", rng.gen_range(0..cfg.novel_pool));
        }
        let start = SYNTH_START_TIME + s as i64 * SYNTH_SESSION_SPACING;
        let user_name = format!("u{user}");
        for (k, item) in clicks.iter().enumerate() {
            events.push(Event {
                user: user_name.clone(),
                item: item.clone(),
                timestamp: start + k as i64 * SYNTH_CLICK_SPACING,
            });
        }
        sessions.push((user_name, clicks));
    }
    Ok(SynthLog {
        events,
        sessions,
        novel_sessions,
    })
}

/// Writes the log as `user\titem\ttimestamp` with a header line.
pub fn write_log<W: Write>(log: &SynthLog, mut out: W) -> Result<()> {
    writeln!(out, "user\titem\ttimestamp")?;
    for e in &log.events {
        writeln!(out, "{}\t{}\t{}", e.user, e.item, e.timestamp)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::corpus::corpus_from_log;
    use crate::harness::events::EventLog;
    use std::collections::HashSet;

    fn small() -> SynthConfig {
        SynthConfig {
            sessions: 400,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_log() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 1, ..small() };
        assert_ne!(
            generate(&small()).unwrap().events,
            generate(&other).unwrap().events
        );
    }

    #[test]
    fn ingest_reproduces_sessions() {
        let log = generate(&small()).unwrap();
        let corpus = corpus_from_log(
            &EventLog::from_events(log.events.clone()).unwrap(),
            8 * 3600,
            10_000,
        )
        .unwrap();
        assert_eq!(corpus.len(), 400);
        for (s, (user, clicks)) in corpus.sessions.iter().zip(&log.sessions) {
            assert_eq!(&corpus.user_vocab[s.user_id], user);
            let names: Vec<&String> = s.items.iter().map(|&i| &corpus.item_vocab[i]).collect();
            assert_eq!(names, clicks.iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn transitions_change_after_drift() {
        let cfg = SynthConfig {
            sessions: 3000,
            novel_rate: 0.0,
            ..SynthConfig::default()
        };
        let log = generate(&cfg).unwrap();
        let pairs = |range: std::ops::Range<usize>| -> HashSet<(String, String)> {
            log.sessions[range]
                .iter()
                .flat_map(|(_, c)| {
                    c.windows(2)
                        .map(|w| (w[0].clone(), w[1].clone()))
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let pre = pairs(0..cfg.drift_index());
        let post = pairs(cfg.drift_index()..cfg.sessions);
        let shared = pre.intersection(&post).count() as f64;
        assert!(shared / (post.len() as f64) < 0.8);
    }

    #[test]
    fn invalid_lengths_are_rejected() {
        let cfg = SynthConfig {
            min_len: 1,
            ..SynthConfig::default()
        };
        assert!(generate(&cfg).is_err());
    }
}
