//! Synthetic oracle conversations. Each conversation holds one user turn
//! (speaker A) followed by one system turn (speaker B) whose offset is
//! drawn from the Gaussian of a randomly chosen dialogue act.
//!
//! Acoustic layout per frame: dim 0 is speech energy, dim 1 is a ramp
//! `(k+1)/10` over the final 10 frames of the user's turn-final IPU, and
//! the remaining dims are noise, with dim `2 + act % (d_a - 2)` raised by
//! 0.5 during system speech. Silent frames are exactly zero, which is also
//! the silence template.

use serde::{Deserialize, Serialize};

use super::format::{ActTag, Conversation, Corpus, CorpusMeta, FrameMatrix};
use super::{CorpusError, Speaker, WordAnnotation, FRAME_MS};
use crate::substrate::rng::streams;
use crate::substrate::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActSpec {
    pub name: String,
    pub mean_ms: f64,
    pub std_ms: f64,
}

impl ActSpec {
    /// Ground-truth offset draw: Gaussian, clamped at -1000 ms, rounded to
    /// whole frames.
    pub fn sample_offset_frames(&self, rng: &mut RngStream) -> i64 {
        let ms = (self.mean_ms + self.std_ms * rng.normal()).max(-1000.0);
        (ms / FRAME_MS).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub pairs: usize,
    pub acts: Vec<ActSpec>,
    pub acoustic_dim: usize,
    /// Size of the act-independent word pool.
    pub vocab_size: usize,
    /// Words per act-specific pool.
    pub act_vocab: usize,
    /// Probability that a system word is drawn from its act's pool.
    pub cue_prob: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pairs: 2000,
            acts: vec![
                ActSpec {
                    name: "early".into(),
                    mean_ms: -100.0,
                    std_ms: 150.0,
                },
                ActSpec {
                    name: "late".into(),
                    mean_ms: 400.0,
                    std_ms: 150.0,
                },
            ],
            acoustic_dim: 6,
            vocab_size: 40,
            act_vocab: 6,
            cue_prob: 0.9,
            noise_std: 0.1,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidConfig(m));
        if self.acts.len() < 2 {
            return bad(format!("acts: need at least 2, got {}", self.acts.len()));
        }
        for (i, a) in self.acts.iter().enumerate() {
            if !(a.std_ms >= 0.0) || !a.mean_ms.is_finite() || !a.std_ms.is_finite() {
                return bad(format!("acts[{i}] ({}): mean/std must be finite with std >= 0", a.name));
            }
            if a.name.is_empty() || a.name.contains(char::is_whitespace) {
                return bad(format!("acts[{i}]: name must be non-empty without whitespace"));
            }
            if self.acts[..i].iter().any(|b| b.name == a.name) {
                return bad(format!("acts[{i}]: duplicate name {}", a.name));
            }
        }
        if self.pairs == 0 {
            return bad("pairs: must be positive".into());
        }
        if self.acoustic_dim < 3 {
            return bad(format!("acoustic_dim: need at least 3, got {}", self.acoustic_dim));
        }
        if self.vocab_size == 0 || self.act_vocab == 0 {
            return bad("vocab_size/act_vocab: must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.cue_prob) {
            return bad(format!("cue_prob: {} not in [0, 1]", self.cue_prob));
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise_std: {} must be >= 0", self.noise_std));
        }
        Ok(())
    }

    pub fn act_index(&self, name: &str) -> Option<usize> {
        self.acts.iter().position(|a| a.name == name)
    }
}

const LEAD_FRAMES: (usize, usize) = (4, 8);
const TRAIL_FRAMES: usize = 10;
const FINAL_IPU_FRAMES: (usize, usize) = (21, 29);
const OTHER_IPU_FRAMES: (usize, usize) = (8, 20);
const IPU_GAP_FRAMES: (usize, usize) = (5, 9);
const RAMP_FRAMES: usize = 10;

/// Lays words over frames `start..start+len` with sub-threshold gaps.
fn fill_ipu(
    rng: &mut RngStream,
    start: usize,
    len: usize,
    max_gap: usize,
    mut token: impl FnMut(&mut RngStream) -> String,
    speaker: Speaker,
    out: &mut Vec<WordAnnotation>,
) {
    let end = start + len;
    let mut f = start;
    while f < end {
        let dur = rng.between(2, 5).min(end - f);
        out.push(WordAnnotation {
            token: token(rng),
            start_ms: f as f64 * FRAME_MS,
            end_ms: (f + dur) as f64 * FRAME_MS,
            speaker,
        });
        f += dur;
        if f < end {
            let gap = rng.between(0, max_gap);
            // keep at least one frame for the next word
            f += gap.min(end - f - 1);
        }
    }
}

fn speech_frame(rng: &mut RngStream, row: &mut [f32], noise: f64) {
    row[0] = (1.0 + noise * rng.normal()) as f32;
    for v in row[2..].iter_mut() {
        *v = (noise * rng.normal()) as f32;
    }
}

pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let mut rng = RngStream::new(cfg.seed, streams::SYNTH);
    let d = cfg.acoustic_dim;
    let mut conversations = Vec::with_capacity(cfg.pairs);
    for n in 0..cfg.pairs {
        let mut words = Vec::new();
        let common = |r: &mut RngStream| format!("w{}", r.between(0, cfg.vocab_size - 1));

        let mut f = rng.between(LEAD_FRAMES.0, LEAD_FRAMES.1);
        let n_ipus = rng.between(1, 2);
        let mut final_ipu = (0, 0);
        for k in 0..n_ipus {
            let last = k + 1 == n_ipus;
            let len = if last {
                rng.between(FINAL_IPU_FRAMES.0, FINAL_IPU_FRAMES.1)
            } else {
                rng.between(OTHER_IPU_FRAMES.0, OTHER_IPU_FRAMES.1)
            };
            fill_ipu(&mut rng, f, len, 2, common, Speaker::A, &mut words);
            if last {
                final_ipu = (f, f + len - 1);
                f += len;
            } else {
                f += len + rng.between(IPU_GAP_FRAMES.0, IPU_GAP_FRAMES.1);
            }
        }
        let user_end = final_ipu.1;

        let act_idx = rng.between(0, cfg.acts.len() - 1);
        let act = &cfg.acts[act_idx];
        let offset = act.sample_offset_frames(&mut rng);
        let sys_start = (user_end as i64 + 1 + offset) as usize;
        let n_words = rng.between(1, 4);
        let mut sys_words = Vec::new();
        let mut g = sys_start;
        for k in 0..n_words {
            let dur = rng.between(2, 5);
            let token = if rng.uniform() < cfg.cue_prob {
                format!("{}_{}", act.name, rng.between(0, cfg.act_vocab - 1))
            } else {
                common(&mut rng)
            };
            sys_words.push(WordAnnotation {
                token,
                start_ms: g as f64 * FRAME_MS,
                end_ms: (g + dur) as f64 * FRAME_MS,
                speaker: Speaker::B,
            });
            g += dur;
            if k + 1 < n_words {
                g += rng.between(0, 3);
            }
        }
        let sys_end = g - 1;
        words.extend(sys_words);
        let n_frames = sys_end.max(user_end) + 1 + TRAIL_FRAMES;

        let mut acoustic = [FrameMatrix::zeros(n_frames, d), FrameMatrix::zeros(n_frames, d)];
        for w in &words {
            let track = &mut acoustic[w.speaker.index()];
            let (s, e) = ((w.start_ms / FRAME_MS) as usize, (w.end_ms / FRAME_MS) as usize);
            for fr in s..e {
                speech_frame(&mut rng, track.row_mut(fr), cfg.noise_std);
                if w.speaker == Speaker::B {
                    track.row_mut(fr)[2 + act_idx % (d - 2)] += 0.5;
                }
            }
        }
        for k in 0..RAMP_FRAMES {
            let fr = user_end + 1 - RAMP_FRAMES + k;
            acoustic[0].row_mut(fr)[1] = (k + 1) as f32 / RAMP_FRAMES as f32;
        }
        conversations.push(Conversation {
            id: format!("syn{n:05}"),
            words,
            acts: vec![ActTag {
                speaker: Speaker::B,
                start_ms: sys_start as f64 * FRAME_MS,
                act: act.name.clone(),
            }],
            acoustic,
        });
    }
    Ok(Corpus {
        meta: CorpusMeta {
            acoustic_dim: d,
            silence_template: vec![0.0; d],
            synth: Some(cfg.clone()),
        },
        conversations,
    })
}
