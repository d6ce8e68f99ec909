use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::events::{read_event_file, EventFormat, EventLog};
use crate::error::{Error, Result};
use crate::session_graph::Session;

pub const MIN_SESSION_LEN: usize = 2;
pub const MAX_SESSION_LEN: usize = 20;

/// A session before vocabulary assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSession {
    pub user: String,
    pub items: Vec<String>,
    pub start_time: i64,
    pub end_time: i64,
}

/// Chronologically ordered sessions with dense id vocabularies.
///
/// Ids are handed out in order of first appearance along the session
/// stream, so every entity first seen in a prefix of the stream has a
/// smaller id than any entity first seen later.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub sessions: Vec<Session>,
    pub item_vocab: Vec<String>,
    pub user_vocab: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CorpusHeader {
    format: String,
    sessions: usize,
    items: Vec<String>,
    users: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SessionRecord {
    user: usize,
    items: Vec<usize>,
    end_time: i64,
}

const CORPUS_FORMAT: &str = "gag-corpus-v1";

impl Corpus {
    /// Orders raw sessions by end time (then start time, then user) and
    /// assigns dense ids.
    pub fn from_raw(mut raw: Vec<RawSession>) -> Self {
        raw.sort_by(|a, b| {
            (a.end_time, a.start_time, &a.user).cmp(&(b.end_time, b.start_time, &b.user))
        });
        let mut items: HashMap<String, usize> = HashMap::new();
        let mut users: HashMap<String, usize> = HashMap::new();
        let mut item_vocab = Vec::new();
        let mut user_vocab = Vec::new();
        let intern = |map: &mut HashMap<String, usize>, vocab: &mut Vec<String>, key: &str| {
            *map.entry(key.to_string()).or_insert_with(|| {
                vocab.push(key.to_string());
                vocab.len() - 1
            })
        };
        let sessions = raw
            .iter()
            .enumerate()
            .map(|(idx, r)| {
                let user_id = intern(&mut users, &mut user_vocab, &r.user);
                let item_ids = r
                    .items
                    .iter()
                    .map(|i| intern(&mut items, &mut item_vocab, i))
                    .collect();
                Session {
                    user_id,
                    items: item_ids,
                    arrival_index: idx as u64,
                    chunk_tag: None,
                    end_time: r.end_time,
                }
            })
            .collect();
        Corpus {
            sessions,
            item_vocab,
            user_vocab,
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn num_items(&self) -> usize {
        self.item_vocab.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_vocab.len()
    }

    pub fn num_events(&self) -> usize {
        self.sessions.iter().map(Session::len).sum()
    }

    /// JSON-lines: a header with the vocabularies, then one session per line.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(
            &mut out,
            &CorpusHeader {
                format: CORPUS_FORMAT.into(),
                sessions: self.sessions.len(),
                items: self.item_vocab.clone(),
                users: self.user_vocab.clone(),
            },
        )?;
        out.write_all(b"\n")?;
        for s in &self.sessions {
            serde_json::to_writer(
                &mut out,
                &SessionRecord {
                    user: s.user_id,
                    items: s.items.clone(),
                    end_time: s.end_time,
                },
            )?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header: CorpusHeader = serde_json::from_str(
            &lines
                .next()
                .ok_or_else(|| Error::Data("empty corpus file".into()))??,
        )
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format != CORPUS_FORMAT {
            return Err(Error::Data(format!(
                "unknown corpus format `{}`",
                header.format
            )));
        }
        let mut sessions = Vec::with_capacity(header.sessions);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: SessionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 2,
                message: e.to_string(),
            })?;
            if r.user >= header.users.len() || r.items.iter().any(|&i| i >= header.items.len()) {
                return Err(Error::Parse {
                    line: idx + 2,
                    message: "id outside vocabulary".into(),
                });
            }
            sessions.push(Session {
                user_id: r.user,
                items: r.items,
                arrival_index: sessions.len() as u64,
                chunk_tag: None,
                end_time: r.end_time,
            });
        }
        if sessions.len() != header.sessions {
            return Err(Error::Data(format!(
                "corpus header announces {} sessions, found {}",
                header.sessions,
                sessions.len()
            )));
        }
        Ok(Corpus {
            sessions,
            item_vocab: header.items,
            user_vocab: header.users,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Corpus::read(std::io::BufReader::new(fs::File::open(path)?))
    }
}

/// Keeps the `top_n` most frequent items (ties by name), splits each
/// user's clicks wherever consecutive events are more than `session_gap`
/// seconds apart, and drops sessions outside `[2, 20]` clicks.
pub fn sessionize(log: &EventLog, session_gap: i64, top_n_items: usize) -> Vec<RawSession> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for e in &log.events {
        *counts.entry(e.item.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.truncate(top_n_items);
    let keep: std::collections::HashSet<&str> = ranked.into_iter().map(|(i, _)| i).collect();

    let mut sessions = Vec::new();
    let mut current: Option<RawSession> = None;
    let flush = |s: Option<RawSession>, out: &mut Vec<RawSession>| {
        if let Some(s) = s {
            if (MIN_SESSION_LEN..=MAX_SESSION_LEN).contains(&s.items.len()) {
                out.push(s);
            }
        }
    };
    for e in log.events.iter().filter(|e| keep.contains(e.item.as_str())) {
        let continues = current
            .as_ref()
            .is_some_and(|s| s.user == e.user && e.timestamp - s.end_time <= session_gap);
        if continues {
            let s = current.as_mut().unwrap();
            s.items.push(e.item.clone());
            s.end_time = e.timestamp;
        } else {
            flush(current.take(), &mut sessions);
            current = Some(RawSession {
                user: e.user.clone(),
                items: vec![e.item.clone()],
                start_time: e.timestamp,
                end_time: e.timestamp,
            });
        }
    }
    flush(current, &mut sessions);
    sessions
}

/// Reads an event log and turns it into a corpus.
pub fn ingest_events(
    path: &Path,
    session_gap: i64,
    top_n_items: usize,
    format: EventFormat,
) -> Result<Corpus> {
    let log = read_event_file(path, format)?;
    corpus_from_log(&log, session_gap, top_n_items)
}

pub fn corpus_from_log(log: &EventLog, session_gap: i64, top_n_items: usize) -> Result<Corpus> {
    let corpus = Corpus::from_raw(sessionize(log, session_gap, top_n_items));
    if corpus.is_empty() {
        return Err(Error::Data("no sessions after preprocessing".into()));
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::events::Event;

    const HOUR: i64 = 3600;

    fn ev(user: &str, item: &str, t: i64) -> Event {
        Event {
            user: user.into(),
            item: item.into(),
            timestamp: t,
        }
    }

    #[test]
    fn gap_rule_and_length_filter() {
        let log = EventLog::from_events(vec![
            ev("u", "a", 0),
            ev("u", "b", HOUR),
            ev("u", "c", 10 * HOUR),
        ])
        .unwrap();
        let s = sessionize(&log, 8 * HOUR, 100);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].items, vec!["a", "b"]);
    }

    #[test]
    fn exact_gap_stays_in_session() {
        let log = EventLog::from_events(vec![ev("u", "a", 0), ev("u", "b", 8 * HOUR)]).unwrap();
        assert_eq!(sessionize(&log, 8 * HOUR, 100).len(), 1);
    }

    #[test]
    fn long_sessions_are_dropped() {
        let events = (0..25).map(|k| ev("u", "a", k * 60)).collect();
        let log = EventLog::from_events(events).unwrap();
        assert!(sessionize(&log, 8 * HOUR, 100).is_empty());
        let events = (0..20).map(|k| ev("u", "a", k * 60)).collect();
        let log = EventLog::from_events(events).unwrap();
        assert_eq!(sessionize(&log, 8 * HOUR, 100).len(), 1);
    }

    #[test]
    fn rare_items_are_removed_before_splitting() {
        let log = EventLog::from_events(vec![
            ev("u", "a", 0),
            ev("u", "rare", 60),
            ev("u", "a", 120),
            ev("v", "b", 0),
            ev("v", "b", 60),
        ])
        .unwrap();
        let s = sessionize(&log, 8 * HOUR, 2);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|x| !x.items.contains(&"rare".to_string())));
    }

    #[test]
    fn corpus_orders_by_end_time_and_ids_follow_first_appearance() {
        let raw = vec![
            RawSession {
                user: "late".into(),
                items: vec!["z".into(), "y".into()],
                start_time: 0,
                end_time: 100,
            },
            RawSession {
                user: "early".into(),
                items: vec!["x".into(), "z".into()],
                start_time: 10,
                end_time: 20,
            },
        ];
        let c = Corpus::from_raw(raw);
        assert_eq!(c.user_vocab, vec!["early", "late"]);
        assert_eq!(c.item_vocab, vec!["x", "z", "y"]);
        assert_eq!(c.sessions[1].items, vec![1, 2]);
        assert_eq!(c.sessions[1].arrival_index, 1);
    }

    #[test]
    fn corpus_file_round_trip() {
        let log = EventLog::from_events(vec![
            ev("u", "a", 0),
            ev("u", "b", 60),
            ev("v", "b", 30),
            ev("v", "c", 90),
        ])
        .unwrap();
        let c = corpus_from_log(&log, 8 * HOUR, 10).unwrap();
        let mut buf = Vec::new();
        c.write(&mut buf).unwrap();
        assert_eq!(Corpus::read(&buf[..]).unwrap(), c);
    }

    #[test]
    fn empty_log_is_an_error() {
        let log = EventLog::from_events(vec![ev("u", "a", 0)]).unwrap();
        let err = corpus_from_log(&log, 8 * HOUR, 10).unwrap_err();
        assert!(err.to_string().contains("no sessions"));
    }
}
