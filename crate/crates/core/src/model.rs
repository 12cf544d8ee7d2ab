//! RTNet and RTNet-VAE: encoder → bottleneck → inference network, with
//! loss/gradient evaluation per turn pair and checkpoint persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetConfig, PairExample};
use crate::encoder::{Encoder, EncoderMode, EncoderTrace, ResponseInput};
use crate::features::VocabMap;
use crate::inference::{span_bce, InferenceNet, Trigger, UserFeatureMode, UserInput};
use crate::substrate::checkpoint::{Checkpoint, CheckpointError};
use crate::substrate::rng::streams;
use crate::substrate::{Activation, Affine, Embedding, NnError, ParamStore, Real, RngStream};
use crate::vae::{Vae, VaeTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Rtnet,
    RtnetVae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub variant: Variant,
    pub acoustic_dim: usize,
    pub vocab_rows: usize,
    pub emb_dim: usize,
    pub acoustic_hidden: usize,
    pub linguistic_hidden: usize,
    pub master_hidden: usize,
    /// Width of h_z.
    pub hz_dim: usize,
    /// Width of the VAE's reduce layer.
    pub reduce_dim: usize,
    pub latent_dim: usize,
    pub inference_hidden: usize,
    #[serde(default)]
    pub encoder_mode: EncoderMode,
    #[serde(default)]
    pub user_features: UserFeatureMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("acoustic_dim", self.acoustic_dim),
            ("emb_dim", self.emb_dim),
            ("acoustic_hidden", self.acoustic_hidden),
            ("linguistic_hidden", self.linguistic_hidden),
            ("master_hidden", self.master_hidden),
            ("hz_dim", self.hz_dim),
            ("inference_hidden", self.inference_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_rows < crate::features::SPECIALS {
            return Err(ModelError::Config("vocab_rows must cover the special tokens".into()));
        }
        if self.variant == Variant::RtnetVae && (self.reduce_dim == 0 || self.latent_dim == 0) {
            return Err(ModelError::Config("reduce_dim and latent_dim must be positive for rtnet-vae".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bottleneck {
    Reduce(Affine),
    Vae(Vae),
}

#[derive(Debug, Clone)]
pub struct RtnetModel<F> {
    pub config: ModelConfig,
    pub params: ParamStore<F>,
    pub emb: Embedding,
    pub encoder: Encoder,
    pub bottleneck: Bottleneck,
    pub inference: InferenceNet,
}

enum BottleneckTrace<F> {
    Reduce(Vec<F>),
    Vae(VaeTrace<F>),
}

struct Encoded<F> {
    h_z: Vec<F>,
    encoder: Option<(EncoderTrace<F>, BottleneckTrace<F>)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss {
    pub bce: f64,
    pub kl: f64,
}

impl<F: Real> RtnetModel<F> {
    /// Fresh model with parameters drawn from the INIT stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = RngStream::new(seed, streams::INIT);
        let mut store = ParamStore::new();
        let c = &config;
        let emb = Embedding::new(&mut store, "emb", c.vocab_rows, c.emb_dim, 0.05, &mut rng);
        let encoder = Encoder::new(
            &mut store,
            c.acoustic_dim,
            c.emb_dim,
            c.acoustic_hidden,
            c.linguistic_hidden,
            c.master_hidden,
            &mut rng,
        );
        let bottleneck = match c.variant {
            Variant::Rtnet => Bottleneck::Reduce(Affine::new(
                &mut store,
                "reduce",
                encoder.concat_dim(),
                c.hz_dim,
                Activation::Relu,
                &mut rng,
            )),
            Variant::RtnetVae => Bottleneck::Vae(Vae::new(
                &mut store,
                encoder.concat_dim(),
                c.reduce_dim,
                c.latent_dim,
                c.hz_dim,
                &mut rng,
            )),
        };
        let inference = InferenceNet::new(
            &mut store,
            c.acoustic_dim,
            c.emb_dim,
            c.hz_dim,
            c.inference_hidden,
            c.user_features,
            &mut rng,
        );
        Ok(Self {
            config,
            params: store,
            emb,
            encoder,
            bottleneck,
            inference,
        })
    }

    pub fn is_vae(&self) -> bool {
        matches!(self.bottleneck, Bottleneck::Vae(_))
    }

    pub fn latent_dim(&self) -> usize {
        match &self.bottleneck {
            Bottleneck::Vae(v) => v.latent_dim(),
            Bottleneck::Reduce(_) => 0,
        }
    }

    fn encode(&self, resp: &ResponseInput<F>, eps: Option<&[F]>) -> Result<Encoded<F>, NnError> {
        if self.config.encoder_mode == EncoderMode::None {
            return Ok(Encoded {
                h_z: vec![F::zero(); self.config.hz_dim],
                encoder: None,
            });
        }
        let p = self.params.values();
        let tr = self.encoder.forward(p, &self.emb, resp, self.config.encoder_mode)?;
        let (h_z, bt) = match &self.bottleneck {
            Bottleneck::Reduce(a) => {
                let h = a.forward(p, &tr.concat)?;
                (h.clone(), BottleneckTrace::Reduce(h))
            }
            Bottleneck::Vae(v) => {
                let t = v.forward(p, &tr.concat, eps)?;
                (t.h_z.clone(), BottleneckTrace::Vae(t))
            }
        };
        Ok(Encoded {
            h_z,
            encoder: Some((tr, bt)),
        })
    }

    /// Deterministic response encoding (no latent noise).
    pub fn response_encoding(&self, resp: &ResponseInput<F>) -> Result<Vec<F>, NnError> {
        Ok(self.encode(resp, None)?.h_z)
    }

    /// Latent mean μ of a response; `None` for non-VAE models or when the
    /// encoder is disabled.
    pub fn latent_mean(&self, resp: &ResponseInput<F>) -> Result<Option<Vec<F>>, NnError> {
        Ok(match self.encode(resp, None)?.encoder {
            Some((_, BottleneckTrace::Vae(t))) => Some(t.latent.mu),
            _ => None,
        })
    }

    /// `h_z` from a latent vector chosen by the caller (VAE models only).
    pub fn decode_latent(&self, z: &[F]) -> Result<Vec<F>, ModelError> {
        match &self.bottleneck {
            Bottleneck::Vae(v) => Ok(v.decode(self.params.values(), z)?),
            Bottleneck::Reduce(_) => Err(ModelError::Config("model has no latent space (variant rtnet)".into())),
        }
    }

    /// Loss of one pair with span R starting at `r_start`; when `grads` is
    /// given the gradient of `bce + w_kl·kl` is accumulated into it.
    pub fn pair_loss(
        &self,
        ex: &PairExample<F>,
        r_start: usize,
        eps: Option<&[F]>,
        w_kl: f64,
        grads: Option<&mut [F]>,
    ) -> Result<PairLoss, NnError> {
        self.pair_loss_scaled(ex, r_start, eps, w_kl, 1.0, grads)
    }

    /// As [`pair_loss`](Self::pair_loss), but the BCE gradient is multiplied
    /// by `bce_scale` before it is accumulated. Reported losses are unscaled.
    pub fn pair_loss_scaled(
        &self,
        ex: &PairExample<F>,
        r_start: usize,
        eps: Option<&[F]>,
        w_kl: f64,
        bce_scale: f64,
        grads: Option<&mut [F]>,
    ) -> Result<PairLoss, NnError> {
        if r_start > ex.r_end {
            return Err(NnError::Dimension {
                context: "R_START beyond span end",
                expected: ex.r_end,
                actual: r_start,
            });
        }
        let p = self.params.values();
        let enc = self.encode(&ex.response, eps)?;
        let len = ex.r_end + 1;
        let tr = self.inference.forward(p, &self.emb, &ex.train_user, &enc.h_z, len)?;
        let (bce, mut d_logits) = span_bce(&tr.logits, &ex.labels, r_start, ex.r_end);
        if bce_scale != 1.0 {
            let s = F::of(bce_scale);
            d_logits.iter_mut().for_each(|v| *v *= s);
        }
        let kl = match &enc.encoder {
            Some((_, BottleneckTrace::Vae(t))) => match &self.bottleneck {
                Bottleneck::Vae(v) => v.kl(t).as_f64(),
                Bottleneck::Reduce(_) => unreachable!(),
            },
            _ => 0.0,
        };
        if let Some(grads) = grads {
            let mut d_hz = vec![F::zero(); self.config.hz_dim];
            self.inference
                .backward(p, grads, &self.emb, &ex.train_user, &enc.h_z, &tr, &d_logits, &mut d_hz);
            if let Some((etr, bt)) = &enc.encoder {
                let mut d_concat = vec![F::zero(); etr.concat.len()];
                match (&self.bottleneck, bt) {
                    (Bottleneck::Reduce(a), BottleneckTrace::Reduce(h)) => {
                        a.backward(p, grads, &etr.concat, h, &d_hz, Some(&mut d_concat));
                    }
                    (Bottleneck::Vae(v), BottleneckTrace::Vae(t)) => {
                        v.backward(p, grads, &etr.concat, t, &d_hz, F::of(w_kl), &mut d_concat);
                    }
                    _ => unreachable!(),
                }
                self.encoder
                    .backward(p, grads, &self.emb, &ex.response, etr, &d_concat);
            }
        }
        Ok(PairLoss { bce, kl })
    }

    /// Trigger probabilities over `user`, zero before `r_start`.
    pub fn trigger_probabilities(&self, user: &UserInput<F>, h_z: &[F], r_start: usize) -> Result<Vec<f64>, NnError> {
        self.inference
            .trigger_probabilities(self.params.values(), &self.emb, user, h_z, r_start)
    }

    pub fn sample_trigger(
        &self,
        user: &UserInput<F>,
        h_z: &[F],
        r_start: usize,
        rng: &mut RngStream,
    ) -> Result<Trigger, NnError> {
        self.inference
            .sample_trigger(self.params.values(), &self.emb, user, h_z, r_start, rng)
    }
}

/// Everything stored next to the tensors in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    pub vocab: VocabMap,
    pub silence_template: Vec<f32>,
    pub seed: u64,
    /// Full configuration of the run that produced the checkpoint.
    pub run: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: RtnetModel<f32>,
    pub meta: CheckpointMeta,
}

impl TrainedModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::to_string(&self.meta).expect("metadata serializes");
        Checkpoint::from_params(meta, &self.model.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        let meta: CheckpointMeta = serde_json::from_str(&ck.meta).map_err(|e| ModelError::Meta(e.to_string()))?;
        let mut model = RtnetModel::new(meta.model.clone(), meta.seed)?;
        ck.load_into(&mut model.params)?;
        Ok(Self { model, meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let f = std::fs::File::create(path).map_err(CheckpointError::from)?;
        self.to_checkpoint().write_to(std::io::BufWriter::new(f))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let f = std::fs::File::open(path).map_err(CheckpointError::from)?;
        Self::from_checkpoint(&Checkpoint::read_from(std::io::BufReader::new(f))?)
    }
}
