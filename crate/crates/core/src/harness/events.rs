//! Event-log reading.
//!
//! The native format is one interaction per line with three fields,
//! `user<sep>item<sep>unix_timestamp`, where the separator is a tab when the
//! line contains one and a comma otherwise. A first line whose timestamp
//! field is not an integer is treated as a header and skipped. Files ending
//! in `.gz` (or starting with the gzip magic bytes) are decompressed.
//!
//! The raw LastFM-1K and Gowalla dumps are also understood, so published
//! datasets can be ingested without conversion.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use chrono::DateTime;
use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFormat {
    /// `user, item, unix-seconds`
    #[default]
    Triples,
    /// `userid \t ISO-time \t artist-id \t artist-name \t track-id \t track-name`;
    /// the artist is the item.
    Lastfm,
    /// `user \t ISO-time \t latitude \t longitude \t location-id`
    Gowalla,
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triples" | "tsv" | "csv" => Ok(EventFormat::Triples),
            "lastfm" => Ok(EventFormat::Lastfm),
            "gowalla" => Ok(EventFormat::Gowalla),
            other => Err(Error::config(
                "format",
                format!("unknown event format `{other}`"),
            )),
        }
    }
}

/// Events sorted by user, then ascending timestamp (file order on ties).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn from_events(mut events: Vec<Event>) -> Result<Self> {
        if let Some(e) = events.iter().find(|e| e.timestamp < 0) {
            return Err(Error::Data(format!(
                "negative timestamp {} for user {}",
                e.timestamp, e.user
            )));
        }
        events.sort_by(|a, b| a.user.cmp(&b.user).then(a.timestamp.cmp(&b.timestamp)));
        Ok(EventLog { events })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Opens a possibly gzip-compressed file.
pub fn open_maybe_gzip(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    drop(file);
    let file = File::open(path)?;
    let gz = path.extension().is_some_and(|e| e == "gz") || (n == 2 && magic == [0x1f, 0x8b]);
    Ok(if gz {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    })
}

fn parse_iso(s: &str, line: usize) -> Result<i64> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.timestamp())
        .map_err(|e| Error::Parse {
            line,
            message: format!("bad timestamp `{s}`: {e}"),
        })
}

fn parse_line(raw: &str, line: usize, format: EventFormat) -> Result<Event> {
    let malformed = |what: &str| Error::Parse {
        line,
        message: format!("{what}: `{raw}`"),
    };
    match format {
        EventFormat::Triples => {
            let sep = if raw.contains('\t') { '\t' } else { ',' };
            let fields: Vec<&str> = raw.split(sep).map(str::trim).collect();
            if fields.len() != 3 {
                return Err(malformed("expected 3 fields"));
            }
            let timestamp = fields[2]
                .parse::<i64>()
                .map_err(|_| malformed("timestamp is not an integer"))?;
            if timestamp < 0 {
                return Err(malformed("negative timestamp"));
            }
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(malformed("empty user or item"));
            }
            Ok(Event {
                user: fields[0].to_string(),
                item: fields[1].to_string(),
                timestamp,
            })
        }
        EventFormat::Lastfm => {
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() < 4 {
                return Err(malformed("expected at least 4 tab-separated fields"));
            }
            let item = if fields[2].trim().is_empty() {
                fields[3].trim()
            } else {
                fields[2].trim()
            };
            if item.is_empty() {
                return Err(malformed("missing artist"));
            }
            Ok(Event {
                user: fields[0].trim().to_string(),
                item: item.to_string(),
                timestamp: parse_iso(fields[1], line)?,
            })
        }
        EventFormat::Gowalla => {
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 5 {
                return Err(malformed("expected 5 tab-separated fields"));
            }
            Ok(Event {
                user: fields[0].trim().to_string(),
                item: fields[4].trim().to_string(),
                timestamp: parse_iso(fields[1], line)?,
            })
        }
    }
}

fn is_header(raw: &str, format: EventFormat) -> bool {
    match format {
        EventFormat::Triples => {
            let sep = if raw.contains('\t') { '\t' } else { ',' };
            raw.split(sep)
                .nth(2)
                .is_none_or(|ts| ts.trim().parse::<i64>().is_err())
        }
        EventFormat::Lastfm | EventFormat::Gowalla => raw
            .split('\t')
            .nth(1)
            .is_none_or(|ts| DateTime::parse_from_rfc3339(ts.trim()).is_err()),
    }
}

pub fn read_events<R: BufRead>(input: R, format: EventFormat) -> Result<EventLog> {
    let mut events = Vec::new();
    let mut first = true;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let raw = line.trim_end_matches(['\r', '\n']);
        if raw.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && is_header(raw, format) {
            continue;
        }
        events.push(parse_line(raw, idx + 1, format)?);
    }
    EventLog::from_events(events)
}

pub fn read_event_file(path: &Path, format: EventFormat) -> Result<EventLog> {
    read_events(open_maybe_gzip(path)?, format)
}
