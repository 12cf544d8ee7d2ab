//! Frame-level trigger network, autoregressive offset sampling and the
//! fixed-probability baseline.

use serde::{Deserialize, Serialize};

use crate::substrate::loss::bce_term;
use crate::substrate::{
    check_dim, sigmoid, Activation, Affine, Embedding, LstmCell, LstmTrace, NnError, ParamStore, Real, RngStream, Seq,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserFeatureMode {
    #[default]
    Both,
    Acoustic,
    Linguistic,
}

impl std::str::FromStr for UserFeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "both" => Ok(Self::Both),
            "acoustic" => Ok(Self::Acoustic),
            "linguistic" => Ok(Self::Linguistic),
            _ => Err(format!("unknown user feature mode {s:?} (both, acoustic, linguistic)")),
        }
    }
}

/// Per-frame user features: acoustic rows and linguistic embedding ids.
#[derive(Debug, Clone, PartialEq)]
pub struct UserInput<F> {
    pub acoustic: Seq<F>,
    pub ids: Vec<u32>,
}

impl<F: Real> UserInput<F> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn cast<G: Real>(&self) -> UserInput<G> {
        UserInput {
            acoustic: self.acoustic.cast(),
            ids: self.ids.clone(),
        }
    }
}

/// `[h_n; c_n] = LSTM([x_n; h_z])`, `y_n = σ(w·h_n + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceNet {
    pub lstm: LstmCell,
    pub head: Affine,
    pub acoustic_dim: usize,
    pub emb_dim: usize,
    pub mode: UserFeatureMode,
}

#[derive(Debug, Clone)]
pub struct InferenceTrace<F> {
    xs: Seq<F>,
    lstm: LstmTrace<F>,
    pub logits: Vec<F>,
}

impl InferenceNet {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        acoustic_dim: usize,
        emb_dim: usize,
        hz_dim: usize,
        hidden: usize,
        mode: UserFeatureMode,
        rng: &mut RngStream,
    ) -> Self {
        let lstm = LstmCell::new(store, "inf.lstm", acoustic_dim + emb_dim, hz_dim, hidden, rng);
        let head = Affine::new(store, "inf.head", hidden, 1, Activation::None, rng);
        Self {
            lstm,
            head,
            acoustic_dim,
            emb_dim,
            mode,
        }
    }

    fn input_row<F: Real>(&self, params: &[F], emb: &Embedding, user: &UserInput<F>, t: usize, row: &mut [F]) {
        let da = self.acoustic_dim;
        if self.mode != UserFeatureMode::Linguistic {
            row[..da].copy_from_slice(user.acoustic.row(t));
        }
        if self.mode != UserFeatureMode::Acoustic {
            row[da..].copy_from_slice(emb.row(params, user.ids[t]));
        }
    }

    fn check_user<F: Real>(&self, user: &UserInput<F>, len: usize) -> Result<(), NnError> {
        check_dim("user acoustic width", self.acoustic_dim, user.acoustic.dim())?;
        check_dim("user stream lengths", user.acoustic.len(), user.ids.len())?;
        if len == 0 {
            return Err(NnError::EmptySequence("inference input"));
        }
        if len > user.len() {
            return Err(NnError::Dimension {
                context: "inference frames",
                expected: user.len(),
                actual: len,
            });
        }
        Ok(())
    }

    #[inline]
    fn logit<F: Real>(&self, params: &[F], h: &[F]) -> F {
        crate::substrate::linalg::dot(self.head.w.of(params), h) + self.head.b.of(params)[0]
    }

    /// Logits for the first `len` frames.
    pub fn forward<F: Real>(
        &self,
        params: &[F],
        emb: &Embedding,
        user: &UserInput<F>,
        h_z: &[F],
        len: usize,
    ) -> Result<InferenceTrace<F>, NnError> {
        self.check_user(user, len)?;
        let mut xs = Seq::zeros(len, self.acoustic_dim + self.emb_dim);
        for t in 0..len {
            self.input_row(params, emb, user, t, xs.row_mut(t));
        }
        let lstm = self.lstm.run(params, &xs, Some(h_z))?;
        let logits = (0..len).map(|t| self.logit(params, lstm.h.row(t))).collect();
        Ok(InferenceTrace { xs, lstm, logits })
    }

    /// Accumulates parameter gradients, embedding gradients and `d_hz`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<F: Real>(
        &self,
        params: &[F],
        grads: &mut [F],
        emb: &Embedding,
        user: &UserInput<F>,
        h_z: &[F],
        trace: &InferenceTrace<F>,
        d_logits: &[F],
        d_hz: &mut [F],
    ) {
        let len = trace.logits.len();
        let hsz = self.lstm.hidden;
        let w = self.head.w.of(params).to_vec();
        let mut dh = Seq::zeros(len, hsz);
        {
            let gw = self.head.w.of_mut(grads);
            for t in 0..len {
                let d = d_logits[t];
                if d == F::zero() {
                    continue;
                }
                let h = trace.lstm.h.row(t);
                for k in 0..hsz {
                    gw[k] += d * h[k];
                }
            }
        }
        let db: F = d_logits.iter().copied().sum();
        self.head.b.of_mut(grads)[0] += db;
        for t in 0..len {
            let d = d_logits[t];
            if d == F::zero() {
                continue;
            }
            for (o, &wk) in dh.row_mut(t).iter_mut().zip(&w) {
                *o = d * wk;
            }
        }
        let use_ling = self.mode != UserFeatureMode::Acoustic;
        let mut dxs = use_ling.then(|| Seq::zeros(len, self.acoustic_dim + self.emb_dim));
        self.lstm.backward(
            params,
            grads,
            &trace.xs,
            Some(h_z),
            &trace.lstm,
            &dh,
            dxs.as_mut(),
            Some(d_hz),
        );
        if let Some(dxs) = dxs {
            for t in 0..len {
                emb.accumulate(grads, user.ids[t], &dxs.row(t)[self.acoustic_dim..]);
            }
        }
    }

    /// Trigger probabilities over all frames of `user`; frames before
    /// `r_start` are fixed to 0.
    pub fn trigger_probabilities<F: Real>(
        &self,
        params: &[F],
        emb: &Embedding,
        user: &UserInput<F>,
        h_z: &[F],
        r_start: usize,
    ) -> Result<Vec<f64>, NnError> {
        let tr = self.forward(params, emb, user, h_z, user.len())?;
        Ok(tr
            .logits
            .iter()
            .enumerate()
            .map(|(t, &z)| if t < r_start { 0.0 } else { sigmoid(z).as_f64() })
            .collect())
    }

    /// Runs the network frame by frame, drawing a Bernoulli trial from
    /// `r_start` on, and stops at the first trigger.
    pub fn sample_trigger<F: Real>(
        &self,
        params: &[F],
        emb: &Embedding,
        user: &UserInput<F>,
        h_z: &[F],
        r_start: usize,
        rng: &mut RngStream,
    ) -> Result<Trigger, NnError> {
        self.check_user(user, user.len())?;
        let mut state = self.lstm.start(params, Some(h_z))?;
        let mut x = vec![F::zero(); self.acoustic_dim + self.emb_dim];
        let mut err = None;
        let trig = sample_trigger_frame(
            |t| {
                self.input_row(params, emb, user, t, &mut x);
                if let Err(e) = self.lstm.step(params, &mut state, &x) {
                    err = Some(e);
                    return 0.0;
                }
                if t < r_start {
                    return 0.0;
                }
                sigmoid(self.logit(params, &state.h)).as_f64()
            },
            r_start,
            user.len(),
            rng,
        );
        match err {
            Some(e) => Err(e),
            None => Ok(trig),
        }
    }
}

/// Per-pair mean BCE over frames `r_start..=r_end` of `logits`, and the
/// matching logit gradients `(p - t) / n` (zero outside the span).
pub fn span_bce<F: Real>(logits: &[F], labels: &[u8], r_start: usize, r_end: usize) -> (f64, Vec<F>) {
    let n = r_end + 1 - r_start;
    let inv = F::of(1.0 / n as f64);
    let mut d = vec![F::zero(); logits.len()];
    let mut total = 0.0;
    for t in r_start..=r_end {
        let p = sigmoid(logits[t]);
        let target = labels[t] != 0;
        total += bce_term(p, target).0.as_f64();
        let tv = if target { F::one() } else { F::zero() };
        d[t] = (p - tv) * inv;
    }
    (total / n as f64, d)
}

/// Outcome of one sampling run: the frame at which the trigger fired and
/// whether it was forced at the final frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Trigger {
    pub frame: usize,
    pub censored: bool,
}

/// Bernoulli trials `u < p(t)` for `t ≥ r_start`. `prob` is called once per
/// frame in order from 0 (earlier frames are evaluated but never tried) so
/// recurrent callers can advance their state. If nothing fires by the last
/// frame the trigger is forced there and flagged as censored.
pub fn sample_trigger_frame(mut prob: impl FnMut(usize) -> f64, r_start: usize, n_frames: usize, rng: &mut RngStream) -> Trigger {
    assert!(n_frames > 0, "sampling window is empty");
    let r_start = r_start.min(n_frames - 1);
    for t in 0..n_frames {
        let p = prob(t);
        if t < r_start {
            continue;
        }
        if rng.uniform() < p {
            return Trigger {
                frame: t,
                censored: false,
            };
        }
    }
    Trigger {
        frame: n_frames - 1,
        censored: true,
    }
}

/// Best constant trigger probability and its BCE. `spans` holds the length
/// of span R (frames, with R_START at the turn-final IPU start) for each
/// pair; each pair contributes one positive frame.
pub fn fixed_probability_baseline(spans: &[usize]) -> (f64, f64) {
    assert!(!spans.is_empty() && spans.iter().all(|&n| n > 0), "spans must be nonempty");
    let y = mean_reciprocal(spans);
    (y, constant_bce(y, spans))
}

/// `mean(1/n)`, computed as one exact fraction when it fits in 128 bits so
/// that the result is the correctly rounded value.
fn mean_reciprocal(spans: &[usize]) -> f64 {
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let exact = (|| {
        let mut lcm: u128 = 1;
        for &n in spans {
            let n = n as u128;
            lcm = lcm.checked_mul(n / gcd(lcm, n))?;
        }
        let mut num: u128 = 0;
        for &n in spans {
            num = num.checked_add(lcm / n as u128)?;
        }
        let den = lcm.checked_mul(spans.len() as u128)?;
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        // both sides must convert to f64 without rounding
        (num < 1 << 53 && den < 1 << 53).then(|| num as f64 / den as f64)
    })();
    exact.unwrap_or_else(|| spans.iter().map(|&n| 1.0 / n as f64).sum::<f64>() / spans.len() as f64)
}

/// Per-pair mean BCE of predicting `y` on every frame, averaged over pairs.
pub fn constant_bce(y: f64, spans: &[usize]) -> f64 {
    let pos = bce_term(y, true).0;
    let neg = bce_term(y, false).0;
    spans
        .iter()
        .map(|&n| (pos + (n as f64 - 1.0) * neg) / n as f64)
        .sum::<f64>()
        / spans.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(mode: UserFeatureMode) -> (ParamStore<f64>, Embedding, InferenceNet) {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(21, 1);
        let emb = Embedding::new(&mut store, "emb", 6, 2, 0.5, &mut rng);
        let n = InferenceNet::new(&mut store, 3, 2, 4, 5, mode, &mut rng);
        (store, emb, n)
    }

    fn user(len: usize) -> UserInput<f64> {
        UserInput {
            acoustic: Seq::new(3, (0..len * 3).map(|v| (v as f64 * 0.7).cos()).collect()).unwrap(),
            ids: (0..len).map(|t| (t % 6) as u32).collect(),
        }
    }

    #[test]
    fn zero_weights_give_one_half() {
        let (mut store, emb, n) = net(UserFeatureMode::Both);
        store.values_mut().iter_mut().for_each(|v| *v = 0.0);
        let p = n
            .trigger_probabilities(store.values(), &emb, &user(6), &[0.3; 4], 2)
            .unwrap();
        assert_eq!(&p[..2], &[0.0, 0.0]);
        assert!(p[2..].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn step_sampling_matches_batch_forward() {
        let (store, emb, n) = net(UserFeatureMode::Both);
        let u = user(7);
        let hz = [0.1, -0.2, 0.3, 0.0];
        let p = n.trigger_probabilities(store.values(), &emb, &u, &hz, 0).unwrap();
        // replay the sampler with a probability recorder
        let mut state = n.lstm.start(store.values(), Some(&hz[..])).unwrap();
        let mut x = vec![0.0; 5];
        for t in 0..7 {
            n.input_row(store.values(), &emb, &u, t, &mut x);
            n.lstm.step(store.values(), &mut state, &x).unwrap();
            let q = sigmoid(n.logit(store.values(), &state.h));
            assert!((q - p[t]).abs() < 1e-14);
        }
    }

    #[test]
    fn feature_modes_mask_inputs() {
        let (store, emb, n) = net(UserFeatureMode::Acoustic);
        let u = user(4);
        let mut v = u.clone();
        v.ids = vec![5, 4, 3, 2];
        let hz = [0.0; 4];
        let a = n.trigger_probabilities(store.values(), &emb, &u, &hz, 0).unwrap();
        let b = n.trigger_probabilities(store.values(), &emb, &v, &hz, 0).unwrap();
        assert_eq!(a, b);
        let (store, emb, n) = net(UserFeatureMode::Both);
        let a = n.trigger_probabilities(store.values(), &emb, &u, &hz, 0).unwrap();
        let b = n.trigger_probabilities(store.values(), &emb, &v, &hz, 0).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn forced_probabilities() {
        let mut rng = RngStream::new(1, 9);
        let t = sample_trigger_frame(|_| 1.0, 4, 20, &mut rng);
        assert_eq!(t, Trigger { frame: 4, censored: false });
        let t = sample_trigger_frame(|_| 0.0, 4, 20, &mut rng);
        assert_eq!(t, Trigger { frame: 19, censored: true });
        let mut calls = Vec::new();
        sample_trigger_frame(|t| { calls.push(t); 1.0 }, 3, 10, &mut rng);
        assert_eq!(calls, vec![0, 1, 2, 3]);
    }

    #[test]
    fn span_bce_matches_masked_bce() {
        let logits = [0.3f64, -1.0, 2.0, 0.5];
        let labels = [0u8, 0, 0, 1];
        let (l, d) = span_bce(&logits, &labels, 1, 3);
        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let o = crate::substrate::bce_masked(&probs, &labels, &[0, 1, 1, 1]).unwrap();
        assert!((l - o.loss).abs() < 1e-12);
        assert_eq!(d[0], 0.0);
        assert!((d[3] - (probs[3] - 1.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn baseline_closed_forms() {
        assert_eq!(fixed_probability_baseline(&[10]).0, 0.1);
        assert_eq!(fixed_probability_baseline(&[10, 20]).0, 0.075);
    }
}
