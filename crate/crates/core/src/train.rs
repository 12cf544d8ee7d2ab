//! Minibatch training: uniform R_START per pair, BCE averaged over every
//! frame in the batch, weighted KL for the VAE variant, Adam updates.
//! A frame then enters the loss as often as it is tried when sampling from
//! a uniform R_START.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::PairExample;
use crate::model::RtnetModel;
use crate::substrate::rng::streams;
use crate::substrate::{Adam, AdamConfig, NnError, Real, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Weight of the KL term; ignored by the non-VAE variant.
    #[serde(default)]
    pub w_kl: f64,
    /// Loss log granularity in iterations.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

fn default_log_every() -> u64 {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mut adam = AdamConfig::new(2e-3);
        adam.l2 = 1e-5;
        adam.schedule = vec![(1500, 0.5)];
        Self {
            iterations: 3000,
            batch_size: 32,
            adam,
            w_kl: 0.0,
            log_every: default_log_every(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &str, why: &str| Err(TrainError::Config(format!("train.{field}: {why}")));
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.w_kl >= 0.0 && self.w_kl.is_finite()) {
            return bad("w_kl", "must be a finite value >= 0");
        }
        if !(self.adam.learning_rate > 0.0) {
            return bad("adam.learning_rate", "must be positive");
        }
        if !(self.adam.l2 >= 0.0) {
            return bad("adam.l2", "must be >= 0");
        }
        if self.log_every == 0 {
            return bad("log_every", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training set is empty")]
    NoPairs,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("loss became non-finite at iteration {0}")]
    Diverged(u64),
}

/// Batch losses: `loss = bce + w_kl * kl`; `bce` is a mean over all frames in
/// the batch, `kl` a mean over pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLoss {
    pub bce: f64,
    pub kl: f64,
    pub loss: f64,
}

/// Loss of a batch with the given R_START per pair and optional latent noise.
/// When `grads` is given it receives the gradient of the batch loss.
pub fn training_step_loss<F: Real>(
    model: &RtnetModel<F>,
    batch: &[&PairExample<F>],
    r_starts: &[usize],
    noise: &[Option<Vec<F>>],
    w_kl: f64,
    mut grads: Option<&mut [F]>,
) -> Result<StepLoss, NnError> {
    assert!(!batch.is_empty(), "batch is empty");
    assert_eq!(batch.len(), r_starts.len());
    assert_eq!(batch.len(), noise.len());
    let w_kl = if model.is_vae() { w_kl } else { 0.0 };
    let n = batch.len() as f64;
    let span = |ex: &PairExample<F>, r: usize| (ex.r_end + 1).saturating_sub(r) as f64;
    let frames: f64 = batch.iter().zip(r_starts).map(|(ex, &r)| span(ex, r)).sum();
    let (mut bce, mut kl) = (0.0, 0.0);
    for ((ex, &r), eps) in batch.iter().zip(r_starts).zip(noise) {
        let m = span(ex, r);
        let scale = m * n / frames;
        let l = model.pair_loss_scaled(ex, r, eps.as_deref(), w_kl, scale, grads.as_deref_mut())?;
        bce += l.bce * m;
        kl += l.kl;
    }
    if let Some(g) = grads {
        let s = F::of(1.0 / n);
        g.iter_mut().for_each(|v| *v *= s);
    }
    let (bce, kl) = (bce / frames, kl / n);
    Ok(StepLoss {
        bce,
        kl,
        loss: bce + w_kl * kl,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub iteration: u64,
    pub learning_rate: f64,
    pub bce: f64,
    pub kl: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainLog {
    /// Losses averaged over each logging window.
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn to_tsv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("iteration\tlearning_rate\tbce\tkl\tloss\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{:e}\t{:.6}\t{:.6}\t{:.6}\n",
                r.iteration, r.learning_rate, r.bce, r.kl, r.loss
            ));
        }
        out
    }
}

/// Draws batches without replacement from a reshuffled ordering each epoch.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: RngStream,
}

impl Batcher {
    fn new(n: usize, rng: RngStream) -> Self {
        let mut b = Self {
            order: (0..n).collect(),
            pos: n,
            rng,
        };
        b.reshuffle();
        b
    }

    fn reshuffle(&mut self) {
        self.order.sort_unstable();
        self.rng.shuffle(&mut self.order);
        self.pos = 0;
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.reshuffle();
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

/// Trains `model` in place. Batch order, R_START and latent noise come from
/// separate streams of `seed`, so runs with equal inputs are bit-identical.
pub fn train(
    model: &mut RtnetModel<f32>,
    pairs: &[PairExample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::NoPairs);
    }
    let mut batcher = Batcher::new(pairs.len(), RngStream::new(seed, streams::BATCH));
    let mut r_rng = RngStream::new(seed, streams::R_START);
    let mut z_rng = RngStream::new(seed, streams::VAE_NOISE);
    let mut opt = Adam::new(cfg.adam.clone(), model.params.len());
    let latent = model.latent_dim();
    let mut log = TrainLog::default();
    let mut window = (0.0, 0.0, 0.0, 0u64);
    for it in 1..=cfg.iterations {
        let idx = batcher.next(cfg.batch_size);
        let batch: Vec<&PairExample> = idx.iter().map(|&i| &pairs[i]).collect();
        let r_starts: Vec<usize> = batch.iter().map(|ex| r_rng.between(ex.r_start_bound, ex.r_end)).collect();
        let noise: Vec<Option<Vec<f32>>> = batch
            .iter()
            .map(|_| model.is_vae().then(|| (0..latent).map(|_| z_rng.normal() as f32).collect()))
            .collect();
        let lr = opt.learning_rate();
        let mut grads = model.params.zero_grads();
        let l = training_step_loss(model, &batch, &r_starts, &noise, cfg.w_kl, Some(&mut grads))?;
        if !l.loss.is_finite() {
            return Err(TrainError::Diverged(it));
        }
        opt.step(model.params.values_mut(), &grads);
        window.0 += l.bce;
        window.1 += l.kl;
        window.2 += l.loss;
        window.3 += 1;
        if it % cfg.log_every == 0 || it == cfg.iterations {
            let n = window.3 as f64;
            log.records.push(LogRecord {
                iteration: it,
                learning_rate: lr,
                bce: window.0 / n,
                kl: window.1 / n,
                loss: window.2 / n,
            });
            log::debug!("iter {it}: bce {:.4} kl {:.4}", window.0 / n, window.1 / n);
            window = (0.0, 0.0, 0.0, 0);
        }
    }
    Ok(log)
}
