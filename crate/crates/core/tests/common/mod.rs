//! Independent reference implementations used by several test targets.
#![allow(dead_code)]

use rtnet::corpus::{Speaker, SpeechActivity};
use rtnet::substrate::RngStream;

/// Pause (in frames) below which two runs of speech belong to one IPU.
pub const MIN_GAP: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefTurn {
    pub speaker: Speaker,
    pub ipus: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefPair {
    pub user: RefTurn,
    pub system: RefTurn,
    pub r_start_bound: usize,
    pub r_end: i64,
    pub labels: Vec<u8>,
}

/// IPUs by filling every silence that is shorter than the minimum pause and
/// enclosed by speech, then reading off maximal runs.
pub fn ref_ipus(track: &[bool]) -> Vec<(usize, usize)> {
    let n = track.len();
    let mut filled = track.to_vec();
    for f in 0..n {
        if track[f] {
            continue;
        }
        let left = (0..f).rev().find(|&g| track[g]);
        let right = (f + 1..n).find(|&g| track[g]);
        if let (Some(l), Some(r)) = (left, right) {
            if r - l - 1 < MIN_GAP {
                filled[f] = true;
            }
        }
    }
    let mut out = Vec::new();
    let mut start = None;
    for f in 0..=n {
        let on = f < n && filled[f];
        match (on, start) {
            (true, None) => start = Some(f),
            (false, Some(s)) => {
                out.push((s, f - 1));
                start = None;
            }
            _ => {}
        }
    }
    out
}

fn speaker_track(act: &SpeechActivity, s: Speaker) -> &[bool] {
    match s {
        Speaker::A => &act.a,
        Speaker::B => &act.b,
    }
}

/// Turns: an IPU continues the previous turn of its speaker unless the
/// other speaker says anything in between.
pub fn ref_turns(act: &SpeechActivity) -> Vec<RefTurn> {
    let mut turns = Vec::new();
    for s in [Speaker::A, Speaker::B] {
        let other = speaker_track(act, s.other());
        let mut cur: Option<RefTurn> = None;
        for (a, b) in ref_ipus(speaker_track(act, s)) {
            if let Some(t) = cur.as_mut() {
                let prev_end = t.ipus.last().unwrap().1;
                let interrupted = (prev_end + 1..a).any(|f| other[f]);
                if !interrupted {
                    t.ipus.push((a, b));
                    continue;
                }
                turns.push(cur.take().unwrap());
            }
            cur = Some(RefTurn {
                speaker: s,
                ipus: vec![(a, b)],
            });
        }
        turns.extend(cur);
    }
    turns.sort_by_key(|t| (t.ipus[0].0, t.speaker.index()));
    turns
}

pub fn ref_pairs(act: &SpeechActivity) -> Vec<RefPair> {
    let turns = ref_turns(act);
    let mut out = Vec::new();
    for k in 1..turns.len() {
        let (u, s) = (&turns[k - 1], &turns[k]);
        if u.speaker == s.speaker {
            continue;
        }
        let r_end = s.ipus[0].0 as i64 - 1;
        let track = speaker_track(act, s.speaker);
        let mut labels = Vec::new();
        let mut f = u.ipus[0].0 as i64;
        while f <= r_end {
            let next = (f + 1) as usize;
            labels.push(u8::from(next < track.len() && track[next]));
            f += 1;
        }
        out.push(RefPair {
            user: u.clone(),
            system: s.clone(),
            r_start_bound: u.ipus.last().unwrap().0,
            r_end,
            labels,
        });
    }
    out
}

/// Random two-speaker activity: alternating bursts with random pauses and
/// occasional overlaps.
pub fn random_activity(rng: &mut RngStream) -> SpeechActivity {
    let n = rng.between(1, 160);
    let mut a = vec![false; n];
    let mut b = vec![false; n];
    for track in [&mut a, &mut b] {
        let density = rng.uniform();
        let mut f = 0;
        while f < n {
            let on = rng.uniform() < density;
            let len = rng.between(1, 12);
            for g in f..(f + len).min(n) {
                track[g] = on;
            }
            f += len;
        }
    }
    SpeechActivity { a, b }
}

/// BCE of a constant prediction `y` averaged per pair, computed frame by
/// frame.
pub fn brute_constant_bce(y: f64, spans: &[usize]) -> f64 {
    let mut total = 0.0;
    for &n in spans {
        let mut s = 0.0;
        for k in 0..n {
            s += if k + 1 == n { -y.ln() } else { -(1.0 - y).ln() };
        }
        total += s / n as f64;
    }
    total / spans.len() as f64
}
