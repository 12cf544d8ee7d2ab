//! Test-set losses, the MAE protocol, offset sampling and reporting.

pub mod histogram;

use std::collections::BTreeMap;

use serde::Serialize;

pub use histogram::{
    distribution_distance, histograms_csv, ks_two_sample, offset_region_cutoffs, Distance, HistogramError,
    OffsetHistogram, RegionCutoffs, BIN_MS, RANGE_MS,
};

use crate::corpus::FRAME_MS;
use crate::dataset::PairExample;
use crate::inference::{fixed_probability_baseline, sample_trigger_frame, Trigger};
use crate::model::{ModelError, RtnetModel};
use crate::substrate::rng::streams;
use crate::substrate::{NnError, RngStream};
use crate::vae::{ActGaussian, LatentMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub bce: f64,
    pub kl: f64,
    pub pairs: usize,
}

/// Mean per-pair losses with R_START at the turn-final IPU start and no
/// latent noise. Pure and repeatable.
pub fn evaluate_losses(model: &RtnetModel<f32>, pairs: &[PairExample]) -> Result<LossReport, NnError> {
    assert!(!pairs.is_empty(), "no test pairs");
    let (mut bce, mut kl) = (0.0, 0.0);
    for ex in pairs {
        let l = model.pair_loss(ex, ex.r_start_bound, None, 0.0, None)?;
        bce += l.bce;
        kl += l.kl;
    }
    let n = pairs.len() as f64;
    Ok(LossReport {
        bce: bce / n,
        kl: kl / n,
        pairs: pairs.len(),
    })
}

/// Where sampling starts its Bernoulli trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RStart {
    /// First frame of the user's turn-final IPU.
    Bound,
    /// Uniform over span R, as in training.
    Uniform,
}

impl std::str::FromStr for RStart {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bound" => Ok(Self::Bound),
            "uniform" => Ok(Self::Uniform),
            _ => Err(format!("unknown R_START policy {s:?} (expected bound or uniform)")),
        }
    }
}

impl RStart {
    pub fn draw(self, ex: &PairExample, rng: &mut RngStream) -> usize {
        match self {
            RStart::Bound => ex.r_start_bound,
            RStart::Uniform => rng.between(ex.r_start_bound, ex.r_end),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetSample {
    pub pair_id: String,
    pub act: Option<String>,
    pub offset_ms: f64,
    pub censored: bool,
}

/// Offset of a trigger: system speech starts the frame after the trigger.
pub fn trigger_offset_ms(ex: &PairExample, trig: Trigger) -> f64 {
    (trig.frame as f64 - ex.user_end as f64) * FRAME_MS
}

fn sample_record(ex: &PairExample, trig: Trigger) -> OffsetSample {
    OffsetSample {
        pair_id: ex.id.clone(),
        act: ex.act.clone(),
        offset_ms: trigger_offset_ms(ex, trig),
        censored: trig.censored,
    }
}

/// One offset for `ex` from the model, conditioned on `h_z`.
pub fn sample_response_offset(
    model: &RtnetModel<f32>,
    ex: &PairExample,
    h_z: &[f32],
    r_start: RStart,
    rng: &mut RngStream,
) -> Result<OffsetSample, NnError> {
    let r = r_start.draw(ex, rng);
    let trig = model.sample_trigger(&ex.sample_user, h_z, r, rng)?;
    Ok(sample_record(ex, trig))
}

/// One offset per pair and run, each from the stream `(seed, run, pair)` and
/// conditioned on the pair's own response.
pub fn sample_offsets(
    model: &RtnetModel<f32>,
    pairs: &[PairExample],
    r_start: RStart,
    seed: u64,
    runs: u32,
) -> Result<Vec<OffsetSample>, NnError> {
    let mut out = Vec::with_capacity(pairs.len() * runs as usize);
    let encodings = pairs
        .iter()
        .map(|ex| model.response_encoding(&ex.response))
        .collect::<Result<Vec<_>, _>>()?;
    for run in 0..runs {
        for (i, (ex, h_z)) in pairs.iter().zip(&encodings).enumerate() {
            let mut rng = RngStream::for_pair(seed, run, i as u32);
            out.push(sample_response_offset(model, ex, h_z, r_start, &mut rng)?);
        }
    }
    Ok(out)
}

/// `n` offsets with every pair conditioned on the same `h_z`; sample `k`
/// uses pair `k mod |pairs|` and stream `(seed, 0, k)`.
pub fn sample_with_encoding(
    model: &RtnetModel<f32>,
    pairs: &[PairExample],
    h_z: &[f32],
    r_start: RStart,
    seed: u64,
    n: usize,
) -> Result<Vec<OffsetSample>, NnError> {
    assert!(!pairs.is_empty(), "no pairs to sample from");
    (0..n)
        .map(|k| {
            let mut rng = RngStream::for_pair(seed, 0, k as u32);
            sample_response_offset(model, &pairs[k % pairs.len()], h_z, r_start, &mut rng)
        })
        .collect()
}

/// `n` offsets from latent vectors drawn from `gaussian` (VAE models only).
/// Latent draws use the LATENT stream of `seed`; sample `k` otherwise
/// follows [`sample_with_encoding`].
pub fn sample_from_latent(
    model: &RtnetModel<f32>,
    pairs: &[PairExample],
    gaussian: &ActGaussian,
    mode: LatentMode,
    r_start: RStart,
    seed: u64,
    n: usize,
) -> Result<Vec<OffsetSample>, ModelError> {
    assert!(!pairs.is_empty(), "no pairs to sample from");
    if gaussian.mu.len() != model.latent_dim() {
        return Err(ModelError::Config(format!(
            "latent width {} does not match the model's {}",
            gaussian.mu.len(),
            model.latent_dim()
        )));
    }
    let mut z_rng = RngStream::new(seed, streams::LATENT);
    let fixed = match mode {
        LatentMode::Mean => Some(model.decode_latent(&to_f32(&gaussian.mu))?),
        LatentMode::Sample => None,
    };
    (0..n)
        .map(|k| {
            let h_z = match &fixed {
                Some(h) => h.clone(),
                None => model.decode_latent(&to_f32(&gaussian.draw(mode, &mut z_rng)))?,
            };
            let mut rng = RngStream::for_pair(seed, 0, k as u32);
            Ok(sample_response_offset(model, &pairs[k % pairs.len()], &h_z, r_start, &mut rng)?)
        })
        .collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaeReport {
    /// Mean over runs of the per-run mean absolute error, in seconds.
    pub mae_s: f64,
    pub per_run_s: Vec<f64>,
    pub samples: usize,
    /// Censored samples, counted at their forced offset.
    pub censored: usize,
}

/// MAE protocol with a caller-supplied sampler: `runs` passes over the pairs
/// with uniform R_START, each pair using stream `(seed, run, pair)`.
pub fn evaluate_mae_with(
    pairs: &[PairExample],
    runs: u32,
    seed: u64,
    mut sampler: impl FnMut(usize, &PairExample, usize, &mut RngStream) -> Result<Trigger, NnError>,
) -> Result<MaeReport, NnError> {
    assert!(!pairs.is_empty() && runs > 0, "nothing to evaluate");
    let mut per_run = Vec::with_capacity(runs as usize);
    let mut censored = 0;
    for run in 0..runs {
        let mut err = 0.0;
        for (i, ex) in pairs.iter().enumerate() {
            let mut rng = RngStream::for_pair(seed, run, i as u32);
            let r = RStart::Uniform.draw(ex, &mut rng);
            let trig = sampler(i, ex, r, &mut rng)?;
            censored += trig.censored as usize;
            err += (trigger_offset_ms(ex, trig) - ex.offset_ms()).abs() / 1000.0;
        }
        per_run.push(err / pairs.len() as f64);
    }
    Ok(MaeReport {
        mae_s: per_run.iter().sum::<f64>() / runs as f64,
        per_run_s: per_run,
        samples: pairs.len() * runs as usize,
        censored,
    })
}

pub fn evaluate_mae(model: &RtnetModel<f32>, pairs: &[PairExample], runs: u32, seed: u64) -> Result<MaeReport, NnError> {
    let encodings = pairs
        .iter()
        .map(|ex| model.response_encoding(&ex.response))
        .collect::<Result<Vec<_>, _>>()?;
    evaluate_mae_with(pairs, runs, seed, |i, ex, r, rng| {
        model.sample_trigger(&ex.sample_user, &encodings[i], r, rng)
    })
}

/// MAE of a model that fires with the same probability on every frame.
pub fn constant_probability_mae(pairs: &[PairExample], p: f64, runs: u32, seed: u64) -> Result<MaeReport, NnError> {
    evaluate_mae_with(pairs, runs, seed, |_, ex, r, rng| {
        Ok(sample_trigger_frame(|_| p, r, ex.sample_user.len(), rng))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineReport {
    pub y_fixed: f64,
    pub bce: f64,
}

/// Best constant probability for `pairs`, with R_START at the turn-final
/// IPU start.
pub fn baseline(pairs: &[PairExample]) -> BaselineReport {
    let spans: Vec<usize> = pairs.iter().map(|p| p.r_len()).collect();
    let (y_fixed, bce) = fixed_probability_baseline(&spans);
    BaselineReport { y_fixed, bce }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActSummary {
    pub act: String,
    pub samples: usize,
    pub censored: usize,
    pub mean_ms: f64,
    pub mode_ms: f64,
    pub histogram: Vec<(f64, u64)>,
}

/// Samples grouped by act (unlabelled samples under `"-"`).
pub fn group_by_act(samples: &[OffsetSample]) -> BTreeMap<String, Vec<&OffsetSample>> {
    let mut out: BTreeMap<String, Vec<&OffsetSample>> = BTreeMap::new();
    for s in samples {
        out.entry(s.act.clone().unwrap_or_else(|| "-".into())).or_default().push(s);
    }
    out
}

pub fn offsets_of(samples: &[&OffsetSample]) -> Vec<f64> {
    samples.iter().map(|s| s.offset_ms).collect()
}

pub fn act_summaries(samples: &[OffsetSample]) -> Result<Vec<ActSummary>, HistogramError> {
    group_by_act(samples)
        .into_iter()
        .map(|(act, group)| {
            let offsets = offsets_of(&group);
            let h = OffsetHistogram::with_defaults(&offsets)?;
            Ok(ActSummary {
                act,
                samples: group.len(),
                censored: group.iter().filter(|s| s.censored).count(),
                mean_ms: offsets.iter().sum::<f64>() / offsets.len() as f64,
                mode_ms: h.mode_ms(),
                histogram: h
                    .centers()
                    .into_iter()
                    .zip(h.counts.iter().copied())
                    .filter(|&(_, c)| c > 0)
                    .collect(),
            })
        })
        .collect()
}

/// Tab-separated offset dump: pair id, act, offset in ms, censored flag.
pub fn offset_dump(samples: &[OffsetSample], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str("pair_id\tact\toffset_ms\tcensored\n");
    for s in samples {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            s.pair_id,
            s.act.as_deref().unwrap_or("-"),
            s.offset_ms,
            s.censored as u8
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub runs: u32,
    pub losses: LossReport,
    pub mae: MaeReport,
    pub baseline: BaselineReport,
    pub baseline_mae: MaeReport,
    /// Offsets sampled with R_START drawn uniformly from the turn-final IPU.
    pub per_act: Vec<ActSummary>,
    pub cutoffs: Option<RegionCutoffs>,
    pub reference_cutoffs: Option<RegionCutoffs>,
}

/// Full report for a test set, plus the samples behind the per-act tables.
pub fn evaluate(
    model: &RtnetModel<f32>,
    pairs: &[PairExample],
    runs: u32,
    seed: u64,
) -> Result<(EvaluationReport, Vec<OffsetSample>), NnError> {
    let losses = evaluate_losses(model, pairs)?;
    let mae = evaluate_mae(model, pairs, runs, seed)?;
    let base = baseline(pairs);
    let baseline_mae = constant_probability_mae(pairs, base.y_fixed, runs, seed)?;
    let samples = sample_offsets(model, pairs, RStart::Uniform, seed, runs)?;
    let offsets: Vec<f64> = samples.iter().map(|s| s.offset_ms).collect();
    let truth: Vec<f64> = pairs.iter().map(|p| p.offset_ms()).collect();
    let report = EvaluationReport {
        seed,
        runs,
        losses,
        mae,
        baseline: base,
        baseline_mae,
        per_act: act_summaries(&samples).expect("samples are nonempty"),
        cutoffs: offset_region_cutoffs(&offsets).ok(),
        reference_cutoffs: offset_region_cutoffs(&truth).ok(),
    };
    Ok((report, samples))
}
