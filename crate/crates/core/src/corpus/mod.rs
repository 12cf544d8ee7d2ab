//! Word annotations to turn pairs: frame-level speech activity, IPUs,
//! turns, turn pairs and their training spans, plus a synthetic
//! conversation generator and the on-disk corpus format.

pub mod format;
pub mod segment;
pub mod synth;

use serde::{Deserialize, Serialize};

pub use format::{read_corpus, write_corpus, ActTag, Conversation, Corpus, CorpusMeta, FrameMatrix};
pub use segment::{
    activity_from_words, extract_ipus, extract_turn_pairs, extract_turns, sample_r_start, segment_conversation,
    SegmentReport,
};
pub use synth::{generate_synthetic_corpus, ActSpec, SynthConfig};

/// Frame step of every frame-level stream, in milliseconds.
pub const FRAME_MS: f64 = 50.0;

/// Minimum silence separating two IPUs of one speaker.
pub const MIN_PAUSE_MS: f64 = 200.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CorpusError {
    #[error("speaker {speaker:?}: word {index} ({start_ms}..{end_ms} ms) overlaps the previous word")]
    OverlappingWords {
        speaker: Speaker,
        index: usize,
        start_ms: f64,
        end_ms: f64,
    },
    #[error("speaker {speaker:?}: word {index} has start {start_ms} ms not before end {end_ms} ms")]
    EmptyWord {
        speaker: Speaker,
        index: usize,
        start_ms: f64,
        end_ms: f64,
    },
    #[error("invalid synthetic corpus config: {0}")]
    InvalidConfig(String),
    #[error("corpus format: {0}")]
    Format(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Speaker::A => 0,
            Speaker::B => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordAnnotation {
    pub token: String,
    pub start_ms: f64,
    pub end_ms: f64,
    pub speaker: Speaker,
}

/// Per-speaker voice activity on the 50 ms frame grid; both vectors have
/// the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechActivity {
    pub a: Vec<bool>,
    pub b: Vec<bool>,
}

impl SpeechActivity {
    pub fn of(&self, speaker: Speaker) -> &[bool] {
        match speaker {
            Speaker::A => &self.a,
            Speaker::B => &self.b,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.a.len()
    }
}

/// Interpausal unit: frames `start_frame..=end_frame` of one speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ipu {
    pub speaker: Speaker,
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub ipus: Vec<Ipu>,
}

impl Turn {
    pub fn start_frame(&self) -> usize {
        self.ipus[0].start_frame
    }

    pub fn end_frame(&self) -> usize {
        self.ipus[self.ipus.len() - 1].end_frame
    }

    pub fn final_ipu(&self) -> &Ipu {
        &self.ipus[self.ipus.len() - 1]
    }
}

/// Two adjacent turns by different speakers. Frame indices are absolute
/// within the conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnPair {
    pub user_turn: Turn,
    pub system_turn: Turn,
    /// First frame of the user's turn-final IPU (lower bound of span R).
    pub r_start_bound: usize,
    /// Frame immediately before the system turn starts (end of span R).
    /// Negative when the system starts at frame 0.
    pub r_end: i64,
    /// Next-frame system voice activity for frames `user_turn.start_frame()..=r_end`.
    pub labels: Vec<u8>,
    pub da_label: Option<String>,
}

impl TurnPair {
    pub fn user_end_frame(&self) -> usize {
        self.user_turn.end_frame()
    }

    pub fn system_start_frame(&self) -> usize {
        self.system_turn.start_frame()
    }

    /// Number of frames in span R (0 when degenerate).
    pub fn r_len(&self) -> usize {
        let len = self.r_end - self.r_start_bound as i64 + 1;
        len.max(0) as usize
    }

    pub fn r_is_empty(&self) -> bool {
        self.r_len() == 0
    }

    /// Offset in frames: system start minus the frame after the user's last
    /// speech frame. Zero for back-to-back speech, negative for overlap.
    pub fn offset_frames(&self) -> i64 {
        self.system_start_frame() as i64 - (self.user_end_frame() as i64 + 1)
    }

    pub fn offset_ms(&self) -> f64 {
        self.offset_frames() as f64 * FRAME_MS
    }
}

/// Frame index of the frame containing time `ms`.
#[inline]
pub fn frame_of(ms: f64) -> usize {
    (ms / FRAME_MS).floor().max(0.0) as usize
}
