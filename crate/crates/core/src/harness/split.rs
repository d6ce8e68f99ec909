use crate::error::{Error, Result};
use crate::session_graph::{ChunkTag, Session};

/// Offline training portion plus the test chunks, all in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSplit {
    pub train: Vec<Session>,
    pub chunks: Vec<Vec<Session>>,
}

/// First `floor(train_frac * N)` sessions train; the rest is cut into
/// `num_chunks` contiguous chunks of `floor(rest / num_chunks)`, with the
/// leftover appended to the last chunk.
pub fn chronological_split(
    sessions: &[Session],
    train_frac: f64,
    num_chunks: usize,
) -> Result<StreamSplit> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::config(
            "train_frac",
            "must lie strictly between 0 and 1",
        ));
    }
    if num_chunks == 0 {
        return Err(Error::config("num_chunks", "must be at least 1"));
    }
    let n = sessions.len();
    // the epsilon absorbs representation error such as 0.6 * 5 = 3.0000000000000004
    let n_train = ((n as f64) * train_frac + 1e-9).floor() as usize;
    let rest = n - n_train;
    if rest < num_chunks {
        return Err(Error::Data(format!(
            "{rest} candidate sessions cannot fill {num_chunks} test chunks"
        )));
    }
    let size = rest / num_chunks;
    let tag = |sessions: &[Session], t: ChunkTag| -> Vec<Session> {
        sessions
            .iter()
            .cloned()
            .map(|mut s| {
                s.chunk_tag = Some(t);
                s
            })
            .collect()
    };
    let train = tag(&sessions[..n_train], ChunkTag::Train);
    let chunks = (0..num_chunks)
        .map(|c| {
            let start = n_train + c * size;
            let end = if c + 1 == num_chunks { n } else { start + size };
            tag(&sessions[start..end], ChunkTag::Test(c + 1))
        })
        .collect();
    Ok(StreamSplit { train, chunks })
}
