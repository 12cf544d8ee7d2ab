//! JSON-lines corpus with a binary acoustic sidecar. See `docs/corpus-format.md`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::SynthConfig;
use super::{CorpusError, Speaker, WordAnnotation, FRAME_MS};

pub const FORMAT_NAME: &str = "rtnet-corpus";
pub const FORMAT_VERSION: u32 = 1;
pub const SIDECAR_MAGIC: &[u8; 8] = b"RTNACST\0";

/// Row-major `rows × cols` matrix of per-frame acoustic features.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl FrameMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Dialogue-act tag for the turn of `speaker` starting at `start_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActTag {
    pub speaker: Speaker,
    pub start_ms: f64,
    pub act: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub id: String,
    pub words: Vec<WordAnnotation>,
    pub acts: Vec<ActTag>,
    /// Acoustic frames of speaker A and B, indexed by `Speaker::index`.
    pub acoustic: [FrameMatrix; 2],
}

impl Conversation {
    /// Frames covered by the acoustic matrices and every word.
    pub fn n_frames(&self) -> usize {
        let last_end = self.words.iter().map(|w| w.end_ms).fold(0.0, f64::max);
        let words = (last_end / FRAME_MS).ceil() as usize;
        words.max(self.acoustic[0].rows).max(self.acoustic[1].rows)
    }

    pub fn words_of(&self, speaker: Speaker) -> Vec<&WordAnnotation> {
        let mut w: Vec<&WordAnnotation> = self.words.iter().filter(|w| w.speaker == speaker).collect();
        w.sort_by(|x, y| x.start_ms.total_cmp(&y.start_ms));
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub acoustic_dim: usize,
    /// Acoustic vector used to pad user features with artificial silence.
    pub silence_template: Vec<f32>,
    /// Generator settings (and thereby the ground-truth per-act offset
    /// distributions) for synthetic corpora.
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub meta: CorpusMeta,
    pub conversations: Vec<Conversation>,
}

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    kind: String,
    format: String,
    version: u32,
    frame_ms: f64,
    acoustic_dim: usize,
    sidecar: String,
    silence_template: Vec<f32>,
    synth: Option<SynthConfig>,
}

#[derive(Serialize, Deserialize)]
struct SpeakerWords {
    #[serde(rename = "A")]
    a: Vec<(String, f64, f64)>,
    #[serde(rename = "B")]
    b: Vec<(String, f64, f64)>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct MatrixRef {
    offset: u64,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct SpeakerMatrices {
    #[serde(rename = "A")]
    a: MatrixRef,
    #[serde(rename = "B")]
    b: MatrixRef,
}

#[derive(Serialize, Deserialize)]
struct ConversationRecord {
    kind: String,
    id: String,
    words: SpeakerWords,
    #[serde(default)]
    acts: Vec<ActTag>,
    acoustic: SpeakerMatrices,
}

/// Sidecar path for a corpus file: `<path>.acoustic.bin`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".acoustic.bin");
    path.with_file_name(name)
}

fn fmt_err(line: usize, msg: impl std::fmt::Display) -> CorpusError {
    CorpusError::Format(format!("line {line}: {msg}"))
}

fn write_matrix<W: Write>(w: &mut W, pos: &mut u64, m: &FrameMatrix) -> Result<MatrixRef, CorpusError> {
    let r = MatrixRef {
        offset: *pos,
        rows: m.rows,
        cols: m.cols,
    };
    let rows = u32::try_from(m.rows).map_err(|_| CorpusError::Format("matrix too large".into()))?;
    let cols = u32::try_from(m.cols).map_err(|_| CorpusError::Format("matrix too large".into()))?;
    let mut buf = Vec::with_capacity(8 + m.data.len() * 4);
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    for v in &m.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    *pos += buf.len() as u64;
    Ok(r)
}

fn read_matrix<R: Read + Seek>(r: &mut R, at: MatrixRef) -> Result<FrameMatrix, CorpusError> {
    r.seek(SeekFrom::Start(at.offset))?;
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    let rows = u32::from_le_bytes([head[0], head[1], head[2], head[3]]) as usize;
    let cols = u32::from_le_bytes([head[4], head[5], head[6], head[7]]) as usize;
    if rows != at.rows || cols != at.cols {
        return Err(CorpusError::Format(format!(
            "sidecar block at {} is {rows}x{cols}, record says {}x{}",
            at.offset, at.rows, at.cols
        )));
    }
    let mut raw = vec![0u8; rows * cols * 4];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(FrameMatrix { rows, cols, data })
}

/// Writes `path` (JSON lines) and its sidecar next to it.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let side = sidecar_path(path);
    let mut sw = BufWriter::new(File::create(&side)?);
    sw.write_all(SIDECAR_MAGIC)?;
    sw.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let mut pos = 12u64;
    let mut jw = BufWriter::new(File::create(path)?);
    let meta = MetaRecord {
        kind: "meta".into(),
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        frame_ms: FRAME_MS,
        acoustic_dim: corpus.meta.acoustic_dim,
        sidecar: side
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        silence_template: corpus.meta.silence_template.clone(),
        synth: corpus.meta.synth.clone(),
    };
    serde_json::to_writer(&mut jw, &meta).map_err(|e| CorpusError::Format(e.to_string()))?;
    jw.write_all(b"\n")?;
    for conv in &corpus.conversations {
        let words_of = |s: Speaker| -> Vec<(String, f64, f64)> {
            conv.words
                .iter()
                .filter(|w| w.speaker == s)
                .map(|w| (w.token.clone(), w.start_ms, w.end_ms))
                .collect()
        };
        let rec = ConversationRecord {
            kind: "conversation".into(),
            id: conv.id.clone(),
            words: SpeakerWords {
                a: words_of(Speaker::A),
                b: words_of(Speaker::B),
            },
            acts: conv.acts.clone(),
            acoustic: SpeakerMatrices {
                a: write_matrix(&mut sw, &mut pos, &conv.acoustic[0])?,
                b: write_matrix(&mut sw, &mut pos, &conv.acoustic[1])?,
            },
        };
        serde_json::to_writer(&mut jw, &rec).map_err(|e| CorpusError::Format(e.to_string()))?;
        jw.write_all(b"\n")?;
    }
    jw.flush()?;
    sw.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| CorpusError::Format("empty corpus file".into()))?;
    let meta: MetaRecord = serde_json::from_str(&first?).map_err(|e| fmt_err(1, e))?;
    if meta.kind != "meta" || meta.format != FORMAT_NAME {
        return Err(fmt_err(1, "first record must be the rtnet-corpus meta record"));
    }
    if meta.version != FORMAT_VERSION {
        return Err(fmt_err(1, format!("unsupported version {}", meta.version)));
    }
    if meta.frame_ms != FRAME_MS {
        return Err(fmt_err(1, format!("frame step {} ms, expected {FRAME_MS}", meta.frame_ms)));
    }
    if meta.silence_template.len() != meta.acoustic_dim {
        return Err(fmt_err(1, "silence template width differs from acoustic_dim"));
    }
    let side_path = path.with_file_name(&meta.sidecar);
    let mut side = BufReader::new(File::open(&side_path)?);
    let mut head = [0u8; 12];
    side.read_exact(&mut head)?;
    if &head[..8] != SIDECAR_MAGIC || head[8..12] != FORMAT_VERSION.to_le_bytes() {
        return Err(CorpusError::Format(format!("{}: bad sidecar header", side_path.display())));
    }
    let mut conversations = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ConversationRecord = serde_json::from_str(&line).map_err(|e| fmt_err(i + 1, e))?;
        if rec.kind != "conversation" {
            return Err(fmt_err(i + 1, format!("unexpected record kind {:?}", rec.kind)));
        }
        let mut words = Vec::with_capacity(rec.words.a.len() + rec.words.b.len());
        for (speaker, list) in [(Speaker::A, rec.words.a), (Speaker::B, rec.words.b)] {
            words.extend(list.into_iter().map(|(token, start_ms, end_ms)| WordAnnotation {
                token,
                start_ms,
                end_ms,
                speaker,
            }));
        }
        let acoustic = [
            read_matrix(&mut side, rec.acoustic.a)?,
            read_matrix(&mut side, rec.acoustic.b)?,
        ];
        for m in &acoustic {
            if m.cols != meta.acoustic_dim {
                return Err(fmt_err(i + 1, format!("acoustic width {} != {}", m.cols, meta.acoustic_dim)));
            }
        }
        conversations.push(Conversation {
            id: rec.id,
            words,
            acts: rec.acts,
            acoustic,
        });
    }
    Ok(Corpus {
        meta: CorpusMeta {
            acoustic_dim: meta.acoustic_dim,
            silence_template: meta.silence_template,
            synth: meta.synth,
        },
        conversations,
    })
}
