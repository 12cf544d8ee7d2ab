//! System-response encoder: acoustic, linguistic and master Bi-LSTMs whose
//! first, second and last master outputs are concatenated for the
//! reduction layer.

use serde::{Deserialize, Serialize};

use crate::features::{NONE, WAIT};
use crate::substrate::{BiLstm, BiLstmTrace, Embedding, NnError, ParamStore, Real, RngStream, Seq, Slot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    #[default]
    Full,
    AcousticOnly,
    LinguisticOnly,
    None,
}

impl EncoderMode {
    fn acoustic(self) -> bool {
        matches!(self, EncoderMode::Full | EncoderMode::AcousticOnly)
    }

    fn linguistic(self) -> bool {
        matches!(self, EncoderMode::Full | EncoderMode::LinguisticOnly)
    }
}

impl std::str::FromStr for EncoderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Self::Full),
            "acoustic" | "acoustic_only" => Ok(Self::AcousticOnly),
            "linguistic" | "linguistic_only" => Ok(Self::LinguisticOnly),
            "none" => Ok(Self::None),
            _ => Err(format!("unknown encoder mode {s:?} (full, acoustic, linguistic, none)")),
        }
    }
}

/// Encoder input for one response: token ids, per-token start frames
/// (`None` for WAIT/NONE) and the response's acoustic frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseInput<F> {
    pub ids: Vec<u32>,
    pub start_frames: Vec<Option<usize>>,
    pub acoustic: Seq<F>,
}

impl<F: Real> ResponseInput<F> {
    pub fn cast<G: Real>(&self) -> ResponseInput<G> {
        ResponseInput {
            ids: self.ids.clone(),
            start_frames: self.start_frames.clone(),
            acoustic: self.acoustic.cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub acoustic: BiLstm,
    /// Two trainable stand-ins for the acoustic state of WAIT and NONE.
    pub wait_none: Slot,
    pub linguistic: BiLstm,
    pub master: BiLstm,
}

/// Forward state of one encoding.
#[derive(Debug, Clone)]
pub struct EncoderTrace<F> {
    acoustic: Option<BiLstmTrace<F>>,
    ling_in: Option<Seq<F>>,
    linguistic: Option<BiLstmTrace<F>>,
    master_in: Seq<F>,
    master: BiLstmTrace<F>,
    /// `[h_0; h_1; h_I]`.
    pub concat: Vec<F>,
}

impl<F: Real> EncoderTrace<F> {
    /// Master outputs `h_0 .. h_I`, one row per token.
    pub fn master_outputs(&self) -> &Seq<F> {
        &self.master.out
    }
}

impl Encoder {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        acoustic_dim: usize,
        emb_dim: usize,
        acoustic_hidden: usize,
        linguistic_hidden: usize,
        master_hidden: usize,
        rng: &mut RngStream,
    ) -> Self {
        let acoustic = BiLstm::new(store, "enc.acoustic", acoustic_dim, acoustic_hidden, rng);
        let wait_none = store.add_uniform("enc.wait_none", vec![2, 2 * acoustic_hidden], 0.05, rng);
        let linguistic = BiLstm::new(store, "enc.linguistic", emb_dim, linguistic_hidden, rng);
        let master = BiLstm::new(
            store,
            "enc.master",
            2 * acoustic_hidden + 2 * linguistic_hidden,
            master_hidden,
            rng,
        );
        Self {
            acoustic,
            wait_none,
            linguistic,
            master,
        }
    }

    pub fn concat_dim(&self) -> usize {
        3 * self.master.out_dim()
    }

    fn check(&self, input: &ResponseInput<impl Real>) -> Result<(), NnError> {
        if input.ids.len() < 3 {
            return Err(NnError::Dimension {
                context: "response tokens (WAIT, words.., NONE)",
                expected: 3,
                actual: input.ids.len(),
            });
        }
        if input.ids.len() != input.start_frames.len() {
            return Err(NnError::Dimension {
                context: "token start frames",
                expected: input.ids.len(),
                actual: input.start_frames.len(),
            });
        }
        for (&id, sf) in input.ids.iter().zip(&input.start_frames) {
            let special = id as usize == WAIT || id as usize == NONE;
            match sf {
                None if !special => {
                    return Err(NnError::Dimension {
                        context: "token without start frame",
                        expected: 0,
                        actual: id as usize,
                    })
                }
                Some(f) if *f >= input.acoustic.len() => {
                    return Err(NnError::Dimension {
                        context: "token start frame beyond response frames",
                        expected: input.acoustic.len(),
                        actual: *f,
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn forward<F: Real>(
        &self,
        params: &[F],
        emb: &Embedding,
        input: &ResponseInput<F>,
        mode: EncoderMode,
    ) -> Result<EncoderTrace<F>, NnError> {
        self.check(input)?;
        let n = input.ids.len();
        let ah = self.acoustic.out_dim();
        let lh = self.linguistic.out_dim();
        let acoustic = if mode.acoustic() {
            Some(self.acoustic.forward(params, &input.acoustic)?)
        } else {
            None
        };
        let (ling_in, linguistic) = if mode.linguistic() {
            let mut xs = Seq::zeros(n, emb.dim);
            for (t, &id) in input.ids.iter().enumerate() {
                xs.row_mut(t).copy_from_slice(emb.row(params, id));
            }
            let tr = self.linguistic.forward(params, &xs)?;
            (Some(xs), Some(tr))
        } else {
            (None, None)
        };
        let wn = self.wait_none.of(params);
        let mut master_in = Seq::zeros(n, ah + lh);
        for t in 0..n {
            let row = master_in.row_mut(t);
            if let Some(ac) = &acoustic {
                let sel = match input.start_frames[t] {
                    Some(f) => ac.out.row(f),
                    None if input.ids[t] as usize == WAIT => &wn[..ah],
                    None => &wn[ah..],
                };
                row[..ah].copy_from_slice(sel);
            }
            if let Some(li) = &linguistic {
                row[ah..].copy_from_slice(li.out.row(t));
            }
        }
        let master = self.master.forward(params, &master_in)?;
        let mut concat = Vec::with_capacity(self.concat_dim());
        for t in [0, 1, n - 1] {
            concat.extend_from_slice(master.out.row(t));
        }
        Ok(EncoderTrace {
            acoustic,
            ling_in,
            linguistic,
            master_in,
            master,
            concat,
        })
    }

    /// Accumulates parameter (and embedding) gradients given `d_concat`.
    pub fn backward<F: Real>(
        &self,
        params: &[F],
        grads: &mut [F],
        emb: &Embedding,
        input: &ResponseInput<F>,
        trace: &EncoderTrace<F>,
        d_concat: &[F],
    ) {
        let n = input.ids.len();
        let mh = self.master.out_dim();
        let ah = self.acoustic.out_dim();
        let mut d_master = Seq::zeros(n, mh);
        for (k, t) in [0, 1, n - 1].into_iter().enumerate() {
            for (d, g) in d_master.row_mut(t).iter_mut().zip(&d_concat[k * mh..(k + 1) * mh]) {
                *d += *g;
            }
        }
        let d_in = self
            .master
            .backward(params, grads, &trace.master_in, &trace.master, &d_master);
        if let Some(ac) = &trace.acoustic {
            let mut d_ac = Seq::zeros(input.acoustic.len(), ah);
            for t in 0..n {
                let d = &d_in.row(t)[..ah];
                match input.start_frames[t] {
                    Some(f) => {
                        for (a, b) in d_ac.row_mut(f).iter_mut().zip(d) {
                            *a += *b;
                        }
                    }
                    None => {
                        let off = if input.ids[t] as usize == WAIT { 0 } else { ah };
                        let gw = &mut self.wait_none.of_mut(grads)[off..off + ah];
                        for (a, b) in gw.iter_mut().zip(d) {
                            *a += *b;
                        }
                    }
                }
            }
            self.acoustic.backward(params, grads, &input.acoustic, ac, &d_ac);
        }
        if let (Some(li), Some(xs)) = (&trace.linguistic, &trace.ling_in) {
            let lh = self.linguistic.out_dim();
            let mut d_li = Seq::zeros(n, lh);
            for t in 0..n {
                d_li.row_mut(t).copy_from_slice(&d_in.row(t)[ah..]);
            }
            let d_emb = self.linguistic.backward(params, grads, xs, li, &d_li);
            for (t, &id) in input.ids.iter().enumerate() {
                emb.accumulate(grads, id, d_emb.row(t));
            }
        }
    }
}
