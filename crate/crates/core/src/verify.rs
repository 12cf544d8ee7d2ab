//! Finite-difference checks of every trainable block in 64-bit mode.

use std::ops::Range;

use crate::dataset::PairExample;
use crate::encoder::{Encoder, EncoderMode, ResponseInput};
use crate::features::{NONE, SIL, WAIT};
use crate::inference::UserInput;
use crate::model::{ModelConfig, RtnetModel, Variant};
use crate::substrate::rng::streams;
use crate::substrate::{
    gradient_check, Activation, Affine, BiLstm, Embedding, GradCheckReport, GradCheckTarget, LstmCell, ParamStore,
    RngStream, Seq,
};
use crate::train::training_step_loss;
use crate::vae::Vae;

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
const PROBES: usize = 16;

type Eval = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>)>;

/// Parameters followed by any differentiable inputs, flattened.
struct FlatTarget {
    name: String,
    segments: Vec<(String, Range<usize>)>,
    point: Vec<f64>,
    eval: Eval,
}

impl GradCheckTarget for FlatTarget {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn segments(&self) -> Vec<(String, Range<usize>)> {
        self.segments.clone()
    }
    fn point(&self) -> Vec<f64> {
        self.point.clone()
    }
    fn loss(&self, x: &[f64]) -> f64 {
        (self.eval)(x).0
    }
    fn loss_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.eval)(x)
    }
}

fn param_segments(store: &ParamStore<f64>) -> Vec<(String, Range<usize>)> {
    store.specs().iter().map(|s| (s.name.clone(), s.slot.range())).collect()
}

fn randn(rng: &mut RngStream, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

fn project(r: &[f64], y: &[f64]) -> f64 {
    r.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn affine_target(rng: &mut RngStream, act: Activation) -> FlatTarget {
    let mut store = ParamStore::new();
    let layer = Affine::new(&mut store, "affine", 4, 3, act, rng);
    let np = store.len();
    let x = randn(rng, 4, 1.0);
    let r = randn(rng, 3, 1.0);
    let mut point = store.values().to_vec();
    point.extend_from_slice(&x);
    let mut segments = param_segments(&store);
    segments.push(("x".into(), np..np + 4));
    FlatTarget {
        name: format!("affine ({act:?})").to_lowercase(),
        segments,
        point,
        eval: Box::new(move |v| {
            let (p, x) = v.split_at(np);
            let y = layer.forward(p, x).unwrap();
            let mut g = vec![0.0; v.len()];
            let (gp, gx) = g.split_at_mut(np);
            layer.backward(p, gp, x, &y, &r, Some(gx));
            (project(&r, &y), g)
        }),
    }
}

fn embedding_target(rng: &mut RngStream) -> FlatTarget {
    let mut store = ParamStore::new();
    let emb = Embedding::new(&mut store, "embedding", 5, 3, 0.8, rng);
    let ids = [0u32, 3, 3, 1, 4, 0];
    let r: Vec<Vec<f64>> = ids.iter().map(|_| randn(rng, 3, 1.0)).collect();
    FlatTarget {
        name: "embedding".into(),
        segments: param_segments(&store),
        point: store.values().to_vec(),
        eval: Box::new(move |p| {
            let mut g = vec![0.0; p.len()];
            let mut loss = 0.0;
            for (t, &id) in ids.iter().enumerate() {
                let e = emb.row(p, id);
                let th: Vec<f64> = e.iter().map(|v| v.tanh()).collect();
                loss += project(&r[t], &th);
                let d: Vec<f64> = (0..3).map(|k| r[t][k] * (1.0 - th[k] * th[k])).collect();
                emb.accumulate(&mut g, id, &d);
            }
            (loss, g)
        }),
    }
}

/// LSTM over `steps` inputs from a nonzero initial state, optionally with a
/// static input. One step is the plain cell update.
fn lstm_target(rng: &mut RngStream, steps: usize, cond: usize) -> FlatTarget {
    let (input, hidden) = (3, 4);
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "lstm", input, cond, hidden, rng);
    let np = store.len();
    let nx = steps * input;
    let mut point = store.values().to_vec();
    point.extend(randn(rng, nx, 1.0));
    point.extend(randn(rng, cond, 1.0));
    point.extend(randn(rng, hidden, 0.5));
    point.extend(randn(rng, hidden, 0.5));
    let r = Seq::new(hidden, randn(rng, steps * hidden, 1.0)).unwrap();
    let mut segments = param_segments(&store);
    let mut at = np;
    for (name, n) in [("x", nx), ("static", cond), ("h0", hidden), ("c0", hidden)] {
        if n > 0 {
            segments.push((name.into(), at..at + n));
        }
        at += n;
    }
    FlatTarget {
        name: if steps == 1 {
            "lstm step".into()
        } else {
            format!("lstm sequence ({steps} steps, static input)")
        },
        segments,
        point,
        eval: Box::new(move |v| {
            let p = &v[..np];
            let xs = Seq::new(input, v[np..np + nx].to_vec()).unwrap();
            let s = &v[np + nx..np + nx + cond];
            let h0 = &v[np + nx + cond..np + nx + cond + hidden];
            let c0 = &v[np + nx + cond + hidden..];
            let cond_in = (cond > 0).then_some(s);
            let tr = cell.run_from(p, &xs, cond_in, h0, c0).unwrap();
            let loss = project(r.data(), tr.h.data());
            let mut g = vec![0.0; v.len()];
            let (gp, rest) = g.split_at_mut(np);
            let mut dxs = Seq::zeros(steps, input);
            let mut ds = vec![0.0; cond];
            let (dh0, dc0) = cell.backward(p, gp, &xs, cond_in, &tr, &r, Some(&mut dxs), Some(&mut ds));
            rest[..nx].copy_from_slice(dxs.data());
            rest[nx..nx + cond].copy_from_slice(&ds);
            rest[nx + cond..nx + cond + hidden].copy_from_slice(&dh0);
            rest[nx + cond + hidden..].copy_from_slice(&dc0);
            (loss, g)
        }),
    }
}

fn bilstm_target(rng: &mut RngStream) -> FlatTarget {
    let mut store = ParamStore::new();
    let layer = BiLstm::new(&mut store, "bilstm", 3, 3, rng);
    let np = store.len();
    let len = 4;
    let mut point = store.values().to_vec();
    point.extend(randn(rng, len * 3, 1.0));
    let r = Seq::new(6, randn(rng, len * 6, 1.0)).unwrap();
    let mut segments = param_segments(&store);
    segments.push(("x".into(), np..np + len * 3));
    FlatTarget {
        name: "bilstm".into(),
        segments,
        point,
        eval: Box::new(move |v| {
            let (p, x) = v.split_at(np);
            let xs = Seq::new(3, x.to_vec()).unwrap();
            let tr = layer.forward(p, &xs).unwrap();
            let mut g = vec![0.0; v.len()];
            let dxs = layer.backward(p, &mut g[..np], &xs, &tr, &r);
            g[np..].copy_from_slice(dxs.data());
            (project(r.data(), tr.out.data()), g)
        }),
    }
}

fn response(rng: &mut RngStream, words: usize, frames: usize, acoustic_dim: usize, vocab: usize) -> ResponseInput<f64> {
    let mut ids = vec![WAIT as u32];
    let mut start_frames = vec![None];
    for k in 0..words {
        if k == 1 {
            ids.push(SIL as u32);
            start_frames.push(Some(1));
        }
        ids.push(rng.between(4, vocab - 1) as u32);
        start_frames.push(Some((k * 2).min(frames - 1)));
    }
    ids.push(NONE as u32);
    start_frames.push(None);
    ResponseInput {
        ids,
        start_frames,
        acoustic: Seq::new(acoustic_dim, randn(rng, frames * acoustic_dim, 1.0)).unwrap(),
    }
}

fn encoder_target(rng: &mut RngStream) -> FlatTarget {
    let mut store = ParamStore::new();
    let emb = Embedding::new(&mut store, "emb", 8, 2, 0.5, rng);
    let enc = Encoder::new(&mut store, 3, 2, 2, 2, 3, rng);
    let resp = response(rng, 3, 6, 3, 8);
    let r = randn(rng, enc.concat_dim(), 1.0);
    FlatTarget {
        name: "encoder stack".into(),
        segments: param_segments(&store),
        point: store.values().to_vec(),
        eval: Box::new(move |p| {
            let tr = enc.forward(p, &emb, &resp, EncoderMode::Full).unwrap();
            let mut g = vec![0.0; p.len()];
            enc.backward(p, &mut g, &emb, &resp, &tr, &r);
            (project(&r, &tr.concat), g)
        }),
    }
}

fn vae_target(rng: &mut RngStream) -> FlatTarget {
    let mut store = ParamStore::new();
    let vae = Vae::new(&mut store, 5, 6, 3, 4, rng);
    let np = store.len();
    let mut point = store.values().to_vec();
    point.extend(randn(rng, 5, 1.0));
    let eps = randn(rng, 3, 1.0);
    let r = randn(rng, 4, 1.0);
    let w_kl = 0.7;
    let mut segments = param_segments(&store);
    segments.push(("concat".into(), np..np + 5));
    FlatTarget {
        name: "vae heads (fixed noise, with kl)".into(),
        segments,
        point,
        eval: Box::new(move |v| {
            let (p, x) = v.split_at(np);
            let tr = vae.forward(p, x, Some(&eps)).unwrap();
            let loss = project(&r, &tr.h_z) + w_kl * vae.kl(&tr);
            let mut g = vec![0.0; v.len()];
            let (gp, gx) = g.split_at_mut(np);
            vae.backward(p, gp, x, &tr, &r, w_kl, gx);
            (loss, g)
        }),
    }
}

fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        acoustic_dim: 3,
        vocab_rows: 9,
        emb_dim: 2,
        acoustic_hidden: 2,
        linguistic_hidden: 2,
        master_hidden: 3,
        hz_dim: 3,
        reduce_dim: 4,
        latent_dim: 2,
        inference_hidden: 3,
        encoder_mode: EncoderMode::Full,
        user_features: Default::default(),
    }
}

fn pair(rng: &mut RngStream) -> PairExample<f64> {
    let len = 9;
    let user = UserInput {
        acoustic: Seq::new(3, randn(rng, len * 3, 1.0)).unwrap(),
        ids: (0..len).map(|_| rng.between(0, 8) as u32).collect(),
    };
    let mut labels = vec![0u8; len];
    labels[len - 1] = 1;
    PairExample {
        id: "gradcheck".into(),
        act: None,
        train_user: user.clone(),
        sample_user: user,
        labels,
        r_start_bound: 3,
        r_end: len - 1,
        user_end: 6,
        offset_frames: 2,
        response: response(rng, 2, 5, 3, 9),
    }
}

fn model_target(rng: &mut RngStream, variant: Variant) -> FlatTarget {
    let seed = rng.between(0, 1 << 30) as u64;
    let model = RtnetModel::<f64>::new(tiny_config(variant), seed).unwrap();
    let pairs = [pair(rng), pair(rng)];
    let noise: Vec<Option<Vec<f64>>> = (0..pairs.len())
        .map(|_| Some(randn(rng, model.latent_dim(), 1.0)).filter(|e| !e.is_empty()))
        .collect();
    let w_kl = 0.3;
    let name = match variant {
        Variant::Rtnet => "inference net + encoder (rtnet batch loss)",
        Variant::RtnetVae => "inference net + vae (rtnet-vae batch loss)",
    };
    let segments = param_segments(&model.params);
    let point = model.params.values().to_vec();
    FlatTarget {
        name: name.into(),
        segments,
        point,
        eval: Box::new(move |p| {
            let mut m = model.clone();
            m.params.values_mut().copy_from_slice(p);
            let mut g = vec![0.0; p.len()];
            let batch: Vec<_> = pairs.iter().collect();
            let l = training_step_loss(&m, &batch, &[4, 6], &noise, w_kl, Some(&mut g)).unwrap();
            (l.loss, g)
        }),
    }
}

/// Checks every block and returns one report per block.
pub fn gradcheck_suite(seed: u64) -> Vec<GradCheckReport> {
    let mut rng = RngStream::new(seed, streams::GRADCHECK);
    let targets = vec![
        affine_target(&mut rng, Activation::Sigmoid),
        affine_target(&mut rng, Activation::None),
        embedding_target(&mut rng),
        lstm_target(&mut rng, 1, 0),
        lstm_target(&mut rng, 5, 2),
        bilstm_target(&mut rng),
        encoder_target(&mut rng),
        vae_target(&mut rng),
        model_target(&mut rng, Variant::Rtnet),
        model_target(&mut rng, Variant::RtnetVae),
    ];
    targets
        .iter()
        .map(|t| gradient_check(t, EPS, TOLERANCE, PROBES))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_block_passes() {
        for r in gradcheck_suite(1) {
            assert!(r.passed(), "{}: {:?}", r.target, r.entries);
        }
    }
}
