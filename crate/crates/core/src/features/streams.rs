use super::vocab::{NONE, SIL, UNSPEC, WAIT};
use crate::corpus::FRAME_MS;

/// Simulated ASR latency applied to both word onset and word identity.
pub const ASR_DELAY_MS: f64 = 100.0;

/// A token with its time span in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedToken {
    pub id: usize,
    pub start_ms: f64,
    pub end_ms: f64,
}

/// First frame whose start is at or after `ms`.
fn frame_at_or_after(ms: f64) -> usize {
    (ms / FRAME_MS).ceil().max(0.0) as usize
}

/// Per-frame linguistic ids for the user: SIL until the first event, UNSPEC
/// from 100 ms after a word starts, the word's id from 100 ms after it ends,
/// held until the next UNSPEC onset. When a word's id and the next word's
/// onset land on the same frame the UNSPEC wins.
pub fn user_linguistic_stream(words: &[TimedToken], n_frames: usize) -> Vec<usize> {
    let mut order: Vec<&TimedToken> = words.iter().collect();
    order.sort_by(|a, b| a.start_ms.total_cmp(&b.start_ms));
    // (frame, sequence, value): within a frame later events win, so a word's
    // own id follows its onset and the next onset follows that id
    let mut events: Vec<(usize, usize, usize)> = Vec::with_capacity(words.len() * 2);
    for (k, w) in order.iter().enumerate() {
        events.push((frame_at_or_after(w.start_ms + ASR_DELAY_MS), 2 * k, UNSPEC));
        events.push((frame_at_or_after(w.end_ms + ASR_DELAY_MS), 2 * k + 1, w.id));
    }
    events.sort_by_key(|&(f, o, _)| (f, o));
    let mut out = vec![SIL; n_frames];
    let mut current = SIL;
    let mut next = 0;
    for (f, slot) in out.iter_mut().enumerate() {
        while next < events.len() && events[next].0 <= f {
            current = events[next].2;
            next += 1;
        }
        *slot = current;
    }
    out
}

/// Encoder input for one system response.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTokens {
    pub ids: Vec<usize>,
    /// Start frame relative to the response start; `None` for WAIT and NONE.
    pub start_frames: Vec<Option<usize>>,
}

impl SystemTokens {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("system response has no words")]
pub struct EmptyResponse;

/// `WAIT, w1, [SIL], w2, ..., NONE`, with SIL for inter-word gaps longer
/// than one frame. Word frames are relative to `origin_ms`.
pub fn system_token_stream(words: &[TimedToken], origin_ms: f64) -> Result<SystemTokens, EmptyResponse> {
    if words.is_empty() {
        return Err(EmptyResponse);
    }
    let rel = |ms: f64| ((ms - origin_ms) / FRAME_MS).floor().max(0.0) as usize;
    let mut ids = vec![WAIT];
    let mut start_frames = vec![None];
    for (k, w) in words.iter().enumerate() {
        if k > 0 {
            let prev_end = words[k - 1].end_ms;
            if w.start_ms - prev_end > FRAME_MS {
                ids.push(SIL);
                start_frames.push(Some(frame_at_or_after(prev_end - origin_ms)));
            }
        }
        ids.push(w.id);
        start_frames.push(Some(rel(w.start_ms)));
    }
    ids.push(NONE);
    start_frames.push(None);
    Ok(SystemTokens { ids, start_frames })
}
