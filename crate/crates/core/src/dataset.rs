//! Turn pairs turned into model inputs: user frame features, labels, span
//! R in sequence-relative frames, and the encoded-response input.

use serde::{Deserialize, Serialize};

use crate::corpus::{segment_conversation, Conversation, Corpus, CorpusError, FrameMatrix, Speaker, TurnPair, FRAME_MS};
use crate::encoder::ResponseInput;
use crate::features::{system_token_stream, user_linguistic_stream, TimedToken, VocabMap};
use crate::inference::UserInput;
use crate::substrate::{Real, Seq};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Frames of user context before the turn-final IPU; `None` keeps the
    /// whole user turn.
    #[serde(default)]
    pub context_frames: Option<usize>,
    /// Artificial silence appended after the user's last speech frame when
    /// sampling offsets.
    #[serde(default = "default_pad")]
    pub pad_frames: usize,
    /// Share of conversations (taken from the end) held out for testing.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_pad() -> usize {
    80
}

fn default_test_fraction() -> f64 {
    0.2
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            context_frames: None,
            pad_frames: default_pad(),
            test_fraction: default_test_fraction(),
        }
    }
}

/// One turn pair ready for the model. All frame indices are relative to the
/// first user frame fed to the inference network.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample<F = f32> {
    pub id: String,
    pub act: Option<String>,
    /// Frames `0..=r_end` as recorded.
    pub train_user: UserInput<F>,
    /// Frames `0..=user_end + pad`, real up to `user_end`, silence after.
    pub sample_user: UserInput<F>,
    /// Next-frame system activity for frames `0..=r_end`.
    pub labels: Vec<u8>,
    pub r_start_bound: usize,
    pub r_end: usize,
    pub user_end: usize,
    pub offset_frames: i64,
    pub response: ResponseInput<F>,
}

impl<F: Real> PairExample<F> {
    pub fn r_len(&self) -> usize {
        self.r_end + 1 - self.r_start_bound
    }

    pub fn offset_ms(&self) -> f64 {
        self.offset_frames as f64 * FRAME_MS
    }

    pub fn cast<G: Real>(&self) -> PairExample<G> {
        PairExample {
            id: self.id.clone(),
            act: self.act.clone(),
            train_user: self.train_user.cast(),
            sample_user: self.sample_user.cast(),
            labels: self.labels.clone(),
            r_start_bound: self.r_start_bound,
            r_end: self.r_end,
            user_end: self.user_end,
            offset_frames: self.offset_frames,
            response: self.response.cast(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetReport {
    pub conversations: usize,
    pub pairs: usize,
    pub excluded_empty_span: usize,
    pub unlabelled: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
}

pub struct Dataset {
    pub vocab: VocabMap,
    pub train: Vec<PairExample>,
    pub test: Vec<PairExample>,
    pub report: DatasetReport,
}

/// Index of the first test conversation.
pub fn split_point(n: usize, test_fraction: f64) -> usize {
    let n_test = (n as f64 * test_fraction.clamp(0.0, 1.0)).round() as usize;
    n - n_test.min(n)
}

pub fn build_vocab(conversations: &[Conversation]) -> VocabMap {
    VocabMap::from_counts(conversations.iter().flat_map(|c| c.words.iter().map(|w| w.token.as_str())))
}

fn frame_row<'a>(m: &'a FrameMatrix, f: usize, silence: &'a [f32]) -> &'a [f32] {
    if f < m.rows {
        m.row(f)
    } else {
        silence
    }
}

fn timed(conv: &Conversation, speaker: Speaker, vocab: &VocabMap, keep: impl Fn(f64) -> bool) -> Vec<TimedToken> {
    conv.words_of(speaker)
        .into_iter()
        .filter(|w| keep(w.start_ms))
        .map(|w| TimedToken {
            id: vocab.id(&w.token),
            start_ms: w.start_ms,
            end_ms: w.end_ms,
        })
        .collect()
}

fn example(
    conv: &Conversation,
    index: usize,
    pair: &TurnPair,
    vocab: &VocabMap,
    silence: &[f32],
    cfg: &DatasetConfig,
) -> PairExample {
    let user = pair.user_turn.speaker;
    let system = pair.system_turn.speaker;
    let turn_start = pair.user_turn.start_frame();
    let seq_start = match cfg.context_frames {
        Some(c) => turn_start.max(pair.r_start_bound.saturating_sub(c)),
        None => turn_start,
    };
    let user_end = pair.user_end_frame();
    let r_end = pair.r_end as usize;
    let last = r_end.max(user_end + cfg.pad_frames);
    let words = timed(conv, user, vocab, |s| s < (user_end + 1) as f64 * FRAME_MS);
    let stream = user_linguistic_stream(&words, last + 1);
    let ua = &conv.acoustic[user.index()];
    let da = silence.len();
    let build = |end: usize, real_until: usize| -> UserInput<f32> {
        let mut acoustic = Seq::zeros(end + 1 - seq_start, da);
        for f in seq_start..=end {
            let src = if f <= real_until { frame_row(ua, f, silence) } else { silence };
            acoustic.row_mut(f - seq_start).copy_from_slice(src);
        }
        UserInput {
            acoustic,
            ids: stream[seq_start..=end].iter().map(|&i| i as u32).collect(),
        }
    };
    let train_user = build(r_end, usize::MAX);
    let sample_user = build(user_end + cfg.pad_frames, user_end);
    let labels = pair.labels[seq_start - turn_start..].to_vec();

    let (s0, s1) = (pair.system_start_frame(), pair.system_turn.end_frame());
    let sa = &conv.acoustic[system.index()];
    let mut acoustic = Seq::zeros(s1 + 1 - s0, da);
    for f in s0..=s1 {
        acoustic.row_mut(f - s0).copy_from_slice(frame_row(sa, f, silence));
    }
    let sys_words = timed(conv, system, vocab, |s| {
        let f = (s / FRAME_MS).floor() as usize;
        (s0..=s1).contains(&f)
    });
    let tokens = system_token_stream(&sys_words, s0 as f64 * FRAME_MS).expect("a turn holds at least one word");
    let n_sys = acoustic.len();
    PairExample {
        id: format!("{}#{index}", conv.id),
        act: pair.da_label.clone(),
        train_user,
        sample_user,
        labels,
        r_start_bound: pair.r_start_bound - seq_start,
        r_end: r_end - seq_start,
        user_end: user_end - seq_start,
        offset_frames: pair.offset_frames(),
        response: ResponseInput {
            ids: tokens.ids.iter().map(|&i| i as u32).collect(),
            start_frames: tokens.start_frames.iter().map(|f| f.map(|f| f.min(n_sys - 1))).collect(),
            acoustic,
        },
    }
}

/// Examples for every usable pair of one conversation.
pub fn conversation_examples(
    conv: &Conversation,
    vocab: &VocabMap,
    silence: &[f32],
    cfg: &DatasetConfig,
    report: &mut DatasetReport,
) -> Result<Vec<PairExample>, CorpusError> {
    let (_, pairs, seg) = segment_conversation(conv)?;
    report.conversations += 1;
    report.pairs += seg.pairs;
    report.excluded_empty_span += seg.empty_span;
    report.unlabelled += seg.unlabelled;
    Ok(pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.r_is_empty())
        .map(|(k, p)| example(conv, k, p, vocab, silence, cfg))
        .collect())
}

/// Splits by conversation, builds the vocabulary from the training side and
/// converts every usable pair.
pub fn build_dataset(corpus: &Corpus, cfg: &DatasetConfig) -> Result<Dataset, CorpusError> {
    let split = split_point(corpus.conversations.len(), cfg.test_fraction);
    let vocab = build_vocab(&corpus.conversations[..split]);
    build_dataset_with_vocab(corpus, cfg, vocab)
}

pub fn build_dataset_with_vocab(corpus: &Corpus, cfg: &DatasetConfig, vocab: VocabMap) -> Result<Dataset, CorpusError> {
    let split = split_point(corpus.conversations.len(), cfg.test_fraction);
    let mut report = DatasetReport::default();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let silence = &corpus.meta.silence_template;
    for (i, conv) in corpus.conversations.iter().enumerate() {
        let ex = conversation_examples(conv, &vocab, silence, cfg, &mut report)?;
        if i < split {
            train.extend(ex);
        } else {
            test.extend(ex);
        }
    }
    report.train_pairs = train.len();
    report.test_pairs = test.len();
    Ok(Dataset {
        vocab,
        train,
        test,
        report,
    })
}
