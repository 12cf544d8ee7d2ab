use log::warn;
use serde::Serialize;

use super::format::Conversation;
use super::{
    frame_of, CorpusError, Ipu, Speaker, SpeechActivity, Turn, TurnPair, WordAnnotation, FRAME_MS, MIN_PAUSE_MS,
};
use crate::substrate::RngStream;

/// Rasterises word annotations onto the 50 ms grid. A frame is active iff
/// some word of that speaker overlaps it, even partially. The grid covers at
/// least `min_frames` frames and always reaches the last word end.
pub fn activity_from_words(words: &[WordAnnotation], min_frames: usize) -> Result<SpeechActivity, CorpusError> {
    for speaker in [Speaker::A, Speaker::B] {
        let mut own: Vec<(usize, &WordAnnotation)> =
            words.iter().enumerate().filter(|(_, w)| w.speaker == speaker).collect();
        own.sort_by(|x, y| x.1.start_ms.total_cmp(&y.1.start_ms));
        let mut prev_end = f64::NEG_INFINITY;
        for (index, w) in own {
            if !(w.start_ms < w.end_ms) {
                return Err(CorpusError::EmptyWord {
                    speaker,
                    index,
                    start_ms: w.start_ms,
                    end_ms: w.end_ms,
                });
            }
            if w.start_ms < prev_end {
                return Err(CorpusError::OverlappingWords {
                    speaker,
                    index,
                    start_ms: w.start_ms,
                    end_ms: w.end_ms,
                });
            }
            prev_end = w.end_ms;
        }
    }
    let last_end = words.iter().map(|w| w.end_ms).fold(0.0, f64::max);
    let n = min_frames.max((last_end / FRAME_MS).ceil() as usize);
    let mut act = SpeechActivity {
        a: vec![false; n],
        b: vec![false; n],
    };
    for w in words {
        let first = frame_of(w.start_ms);
        let last = ((w.end_ms / FRAME_MS).ceil() as usize).saturating_sub(1);
        let track = match w.speaker {
            Speaker::A => &mut act.a,
            Speaker::B => &mut act.b,
        };
        for f in first..=last.min(n - 1) {
            track[f] = true;
        }
    }
    Ok(act)
}

/// Maximal runs of speech, merged across pauses shorter than `min_pause_ms`.
pub fn extract_ipus(activity: &[bool], speaker: Speaker, min_pause_ms: f64) -> Vec<Ipu> {
    let min_gap = (min_pause_ms / FRAME_MS).ceil() as usize;
    let mut ipus: Vec<Ipu> = Vec::new();
    let mut f = 0;
    while f < activity.len() {
        if !activity[f] {
            f += 1;
            continue;
        }
        let start = f;
        while f < activity.len() && activity[f] {
            f += 1;
        }
        let end = f - 1;
        match ipus.last_mut() {
            Some(prev) if start - prev.end_frame - 1 < min_gap => prev.end_frame = end,
            _ => ipus.push(Ipu {
                speaker,
                start_frame: start,
                end_frame: end,
            }),
        }
    }
    ipus
}

/// Groups each speaker's IPUs into turns: consecutive IPUs stay in one turn
/// unless the other speaker has an active frame in the silence between
/// them. Turns are returned ordered by start frame (speaker A first on ties).
pub fn extract_turns(ipus_a: &[Ipu], ipus_b: &[Ipu], activity: &SpeechActivity) -> Vec<Turn> {
    let mut turns = Vec::new();
    for (speaker, ipus) in [(Speaker::A, ipus_a), (Speaker::B, ipus_b)] {
        let other = activity.of(speaker.other());
        // prefix[k] = active frames of the other speaker before frame k
        let mut prefix = Vec::with_capacity(other.len() + 1);
        prefix.push(0usize);
        for &v in other {
            prefix.push(prefix.last().unwrap() + usize::from(v));
        }
        let other_active_between = |lo: usize, hi: usize| -> bool {
            // frames lo..hi exclusive of hi
            let hi = hi.min(other.len());
            lo < hi && prefix[hi] - prefix[lo] > 0
        };
        let mut current: Option<Turn> = None;
        for ipu in ipus {
            current = match current.take() {
                Some(mut t) => {
                    let gap_lo = t.end_frame() + 1;
                    if other_active_between(gap_lo, ipu.start_frame) {
                        turns.push(t);
                        Some(Turn {
                            speaker,
                            ipus: vec![*ipu],
                        })
                    } else {
                        t.ipus.push(*ipu);
                        Some(t)
                    }
                }
                None => Some(Turn {
                    speaker,
                    ipus: vec![*ipu],
                }),
            };
        }
        if let Some(t) = current {
            turns.push(t);
        }
    }
    turns.sort_by_key(|t| (t.start_frame(), t.speaker));
    turns
}

/// Every pair of adjacent turns (by start frame) with different speakers.
/// Labels are the system's voice activity shifted left by one frame, over
/// frames from the user turn start to `r_end`.
pub fn extract_turn_pairs(turns: &[Turn], activity: &SpeechActivity) -> Vec<TurnPair> {
    let mut pairs = Vec::new();
    for w in turns.windows(2) {
        let (user, system) = (&w[0], &w[1]);
        if user.speaker == system.speaker {
            continue;
        }
        let sys_track = activity.of(system.speaker);
        let r_start_bound = user.final_ipu().start_frame;
        let r_end = system.start_frame() as i64 - 1;
        let first = user.start_frame() as i64;
        let labels = if r_end >= first {
            (first..=r_end)
                .map(|f| u8::from(sys_track.get(f as usize + 1).copied().unwrap_or(false)))
                .collect()
        } else {
            Vec::new()
        };
        pairs.push(TurnPair {
            user_turn: user.clone(),
            system_turn: system.clone(),
            r_start_bound,
            r_end,
            labels,
            da_label: None,
        });
    }
    pairs
}

/// Uniform draw of R_START from span R; `None` (with a warning) when R is empty.
pub fn sample_r_start(pair: &TurnPair, rng: &mut RngStream) -> Option<usize> {
    if pair.r_is_empty() {
        warn!(
            "skipping pair with empty span R (user final IPU starts at {}, system starts at {})",
            pair.r_start_bound,
            pair.system_start_frame()
        );
        return None;
    }
    Some(rng.between(pair.r_start_bound, pair.r_end as usize))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SegmentReport {
    pub pairs: usize,
    /// Pairs whose span R is empty (system starts at or before the user's
    /// final IPU); they are excluded from training and evaluation.
    pub empty_span: usize,
    pub unlabelled: usize,
}

/// Full pipeline for one conversation. Dialogue-act tags attach to the pair
/// whose system turn starts in the tagged frame for that speaker.
pub fn segment_conversation(conv: &Conversation) -> Result<(SpeechActivity, Vec<TurnPair>, SegmentReport), CorpusError> {
    let activity = activity_from_words(&conv.words, conv.n_frames())?;
    let ipus_a = extract_ipus(&activity.a, Speaker::A, MIN_PAUSE_MS);
    let ipus_b = extract_ipus(&activity.b, Speaker::B, MIN_PAUSE_MS);
    let turns = extract_turns(&ipus_a, &ipus_b, &activity);
    let mut pairs = extract_turn_pairs(&turns, &activity);
    let mut report = SegmentReport::default();
    for p in &mut pairs {
        p.da_label = conv
            .acts
            .iter()
            .find(|t| t.speaker == p.system_turn.speaker && frame_of(t.start_ms) == p.system_start_frame())
            .map(|t| t.act.clone());
        report.pairs += 1;
        if p.r_is_empty() {
            report.empty_span += 1;
        }
        if p.da_label.is_none() {
            report.unlabelled += 1;
        }
    }
    Ok((activity, pairs, report))
}
