//! Variational bottleneck between the encoder and the inference network,
//! and per-dialogue-act Gaussians over its latent space.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use serde::Serialize;

use crate::substrate::loss::{kl_backward, kl_loss};
use crate::substrate::{Activation, Affine, NnError, ParamStore, Real, RngStream};

/// Scale applied to the initial `expand` weights.
pub const EXPAND_INIT_SCALE: f64 = 0.1;
/// Offset added to the initial `μ` biases.
pub const MU_BIAS_INIT: f64 = 1.0;

/// `h_reduce → (μ, σ̂) → z = μ + exp(σ̂/2) ⊙ ε → h_z`, every layer ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub reduce: Affine,
    pub mu: Affine,
    pub sigma: Affine,
    pub expand: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample<F> {
    pub mu: Vec<F>,
    pub sigma_hat: Vec<F>,
    pub sigma: Vec<F>,
    pub z: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct VaeTrace<F> {
    pub h_reduce: Vec<F>,
    pub latent: LatentSample<F>,
    pub eps: Vec<F>,
    pub h_z: Vec<F>,
}

impl Vae {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        in_dim: usize,
        reduce_dim: usize,
        latent_dim: usize,
        hz_dim: usize,
        rng: &mut RngStream,
    ) -> Self {
        let vae = Self {
            reduce: Affine::new(store, "vae.reduce", in_dim, reduce_dim, Activation::Relu, rng),
            mu: Affine::new(store, "vae.mu", reduce_dim, latent_dim, Activation::Relu, rng),
            sigma: Affine::new(store, "vae.sigma_hat", reduce_dim, latent_dim, Activation::Relu, rng),
            expand: Affine::new(store, "vae.expand", latent_dim, hz_dim, Activation::Relu, rng),
        };
        // Start with z barely reaching h_z and every unit of μ active. With
        // σ ≥ 1 the injected noise otherwise teaches the decoder to ignore z
        // and the μ units die before the encoder carries any act signal.
        let params = store.values_mut();
        vae.expand.w.of_mut(params).iter_mut().for_each(|v| *v *= F::of(EXPAND_INIT_SCALE));
        vae.mu.b.of_mut(params).iter_mut().for_each(|v| *v += F::of(MU_BIAS_INIT));
        vae
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.out_dim
    }

    /// `eps = None` means ε = 0, so `z = μ`.
    pub fn forward<F: Real>(&self, params: &[F], concat: &[F], eps: Option<&[F]>) -> Result<VaeTrace<F>, NnError> {
        let h_reduce = self.reduce.forward(params, concat)?;
        let mu = self.mu.forward(params, &h_reduce)?;
        let sigma_hat = self.sigma.forward(params, &h_reduce)?;
        let sigma: Vec<F> = sigma_hat.iter().map(|&s| (s * F::of(0.5)).exp()).collect();
        let eps = match eps {
            Some(e) => {
                crate::substrate::check_dim("vae noise", mu.len(), e.len())?;
                e.to_vec()
            }
            None => vec![F::zero(); mu.len()],
        };
        let z: Vec<F> = (0..mu.len()).map(|k| mu[k] + sigma[k] * eps[k]).collect();
        let h_z = self.expand.forward(params, &z)?;
        Ok(VaeTrace {
            h_reduce,
            latent: LatentSample {
                mu,
                sigma_hat,
                sigma,
                z,
            },
            eps,
            h_z,
        })
    }

    /// `h_z` for a latent vector chosen directly, bypassing the encoder.
    pub fn decode<F: Real>(&self, params: &[F], z: &[F]) -> Result<Vec<F>, NnError> {
        self.expand.forward(params, z)
    }

    pub fn kl<F: Real>(&self, trace: &VaeTrace<F>) -> F {
        kl_loss(&trace.latent.mu, &trace.latent.sigma_hat).expect("mu and sigma_hat share a width")
    }

    /// Backward through `h_z` and the weighted KL term; accumulates into
    /// `d_concat`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<F: Real>(
        &self,
        params: &[F],
        grads: &mut [F],
        concat: &[F],
        trace: &VaeTrace<F>,
        d_hz: &[F],
        w_kl: F,
        d_concat: &mut [F],
    ) {
        let l = &trace.latent;
        let n = l.mu.len();
        let mut dz = vec![F::zero(); n];
        self.expand.backward(params, grads, &l.z, &trace.h_z, d_hz, Some(&mut dz));
        let mut d_mu = dz.clone();
        let mut d_sh: Vec<F> = (0..n).map(|k| dz[k] * trace.eps[k] * l.sigma[k] * F::of(0.5)).collect();
        kl_backward(&l.mu, &l.sigma_hat, w_kl, &mut d_mu, &mut d_sh);
        let mut d_red = vec![F::zero(); trace.h_reduce.len()];
        self.mu.backward(params, grads, &trace.h_reduce, &l.mu, &d_mu, Some(&mut d_red));
        self.sigma
            .backward(params, grads, &trace.h_reduce, &l.sigma_hat, &d_sh, Some(&mut d_red));
        self.reduce
            .backward(params, grads, concat, &trace.h_reduce, &d_red, Some(d_concat));
    }
}

/// Stand-alone VAE pass drawing ε from `rng` when `sample` is set.
pub fn vae_forward<F: Real>(
    vae: &Vae,
    params: &[F],
    concat: &[F],
    rng: &mut RngStream,
    sample: bool,
) -> Result<(Vec<F>, LatentSample<F>), NnError> {
    let eps: Option<Vec<F>> = sample.then(|| (0..vae.latent_dim()).map(|_| F::of(rng.normal())).collect());
    let t = vae.forward(params, concat, eps.as_deref())?;
    Ok((t.h_z, t.latent))
}

/// Elementwise Gaussian over latent vectors for one dialogue act.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActGaussian {
    pub n: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    Mean,
    Sample,
}

impl std::str::FromStr for LatentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(Self::Mean),
            "sample" => Ok(Self::Sample),
            _ => Err(format!("unknown latent mode {s:?} (expected mean or sample)")),
        }
    }
}

impl ActGaussian {
    pub fn draw(&self, mode: LatentMode, rng: &mut RngStream) -> Vec<f64> {
        match mode {
            LatentMode::Mean => self.mu.clone(),
            LatentMode::Sample => self.mu.iter().zip(&self.sigma).map(|(m, s)| m + s * rng.normal()).collect(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LatentError {
    #[error("unknown dialogue act {0:?}")]
    UnknownAct(String),
    #[error("interpolation weight {0} outside [0, 1]")]
    Alpha(f64),
    #[error("latent vectors have inconsistent widths")]
    Width,
    #[error("latent spec line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LatentSpec {
    pub acts: BTreeMap<String, ActGaussian>,
}

/// Per-act mean and maximum-likelihood (population) standard deviation.
/// Acts with fewer than two samples are skipped with a warning.
pub fn fit_latent_spec(samples: &[(String, Vec<f64>)]) -> Result<LatentSpec, LatentError> {
    let mut groups: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    let width = samples.first().map_or(0, |s| s.1.len());
    for (act, z) in samples {
        if z.len() != width {
            return Err(LatentError::Width);
        }
        groups.entry(act.as_str()).or_default().push(z);
    }
    let mut acts = BTreeMap::new();
    for (act, zs) in groups {
        if zs.len() < 2 {
            warn!("dialogue act {act:?} has {} latent sample(s); skipped", zs.len());
            continue;
        }
        let n = zs.len() as f64;
        let mu: Vec<f64> = (0..width).map(|k| zs.iter().map(|z| z[k]).sum::<f64>() / n).collect();
        let sigma = (0..width)
            .map(|k| (zs.iter().map(|z| (z[k] - mu[k]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        acts.insert(act.to_string(), ActGaussian { n: zs.len(), mu, sigma });
    }
    Ok(LatentSpec { acts })
}

impl LatentSpec {
    pub fn get(&self, act: &str) -> Result<&ActGaussian, LatentError> {
        self.acts.get(act).ok_or_else(|| LatentError::UnknownAct(act.to_string()))
    }

    pub fn latent_vector(&self, act: &str, mode: LatentMode, rng: &mut RngStream) -> Result<Vec<f64>, LatentError> {
        Ok(self.get(act)?.draw(mode, rng))
    }

    /// `(1-α)·a + α·b` for both the means and the standard deviations.
    pub fn interpolate(&self, a: &str, b: &str, alpha: f64) -> Result<ActGaussian, LatentError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(LatentError::Alpha(alpha));
        }
        let (ga, gb) = (self.get(a)?, self.get(b)?);
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| (1.0 - alpha) * p + alpha * q).collect() };
        Ok(ActGaussian {
            n: 0,
            mu: mix(&ga.mu, &gb.mu),
            sigma: mix(&ga.sigma, &gb.sigma),
        })
    }

    /// Text form: `#` comment lines, then `act \t n \t μ1,μ2,.. \t σ1,σ2,..`.
    pub fn to_text(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            for line in c.lines() {
                let _ = writeln!(s, "# {line}");
            }
        }
        s.push_str("# act\tn\tmu\tsigma\n");
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        for (act, g) in &self.acts {
            let _ = writeln!(s, "{act}\t{}\t{}\t{}", g.n, join(&g.mu), join(&g.sigma));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, LatentError> {
        let mut acts = BTreeMap::new();
        let mut width = None;
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| LatentError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(err("expected 4 tab-separated fields"));
            }
            let parse = |s: &str| -> Result<Vec<f64>, LatentError> {
                s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| err("bad number"))).collect()
            };
            let mu = parse(f[2])?;
            let sigma = parse(f[3])?;
            if mu.len() != sigma.len() || *width.get_or_insert(mu.len()) != mu.len() {
                return Err(err("inconsistent vector widths"));
            }
            if sigma.iter().any(|s| !(*s >= 0.0)) {
                return Err(err("negative standard deviation"));
            }
            let n = f[1].parse().map_err(|_| err("bad count"))?;
            if acts.insert(f[0].to_string(), ActGaussian { n, mu, sigma }).is_some() {
                return Err(err("duplicate act"));
            }
        }
        Ok(Self { acts })
    }

    pub fn dim(&self) -> usize {
        self.acts.values().next().map_or(0, |g| g.mu.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vae() -> (ParamStore<f64>, Vae) {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(4, 1);
        let v = Vae::new(&mut store, 6, 5, 3, 4, &mut rng);
        (store, v)
    }

    #[test]
    fn no_sampling_means_z_is_mu() {
        let (store, v) = vae();
        let x = [0.3, -0.2, 0.9, 0.1, 0.5, -0.7];
        let mut rng = RngStream::new(1, 5);
        let (_, l) = vae_forward(&v, store.values(), &x, &mut rng, false).unwrap();
        assert_eq!(l.z, l.mu);
        let (_, l2) = vae_forward(&v, store.values(), &x, &mut rng, false).unwrap();
        assert_eq!(l, l2);
        assert!(l.sigma.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn unit_sigma_noise_statistics() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngStream::new(4, 1);
        let v = Vae::new(&mut store, 2, 2, 2, 2, &mut rng);
        // zero sigma head: sigma_hat = relu(0) = 0, sigma = 1
        let off = v.sigma.w.offset;
        store.values_mut()[off..off + v.sigma.w.len].iter_mut().for_each(|x| *x = 0.0);
        let off = v.sigma.b.offset;
        store.values_mut()[off..off + v.sigma.b.len].iter_mut().for_each(|x| *x = 0.0);
        let mut draw = RngStream::new(8, 5);
        let n = 10_000;
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for _ in 0..n {
            let (_, l) = vae_forward(&v, store.values(), &[0.4, 0.1], &mut draw, true).unwrap();
            for k in 0..2 {
                let d = l.z[k] - l.mu[k];
                sums[k] += d;
                sq[k] += d * d;
            }
        }
        for k in 0..2 {
            let mean = sums[k] / n as f64;
            let std = (sq[k] / n as f64 - mean * mean).sqrt();
            assert!((std - 1.0).abs() < 0.05, "std {std}");
        }
        let mut a = RngStream::new(3, 5);
        let mut b = RngStream::new(3, 5);
        assert_eq!(
            vae_forward(&v, store.values(), &[0.4, 0.1], &mut a, true).unwrap().1,
            vae_forward(&v, store.values(), &[0.4, 0.1], &mut b, true).unwrap().1
        );
    }

    #[test]
    fn fit_hand_cases() {
        let s = vec![("x".to_string(), vec![0.0, 0.0]), ("x".to_string(), vec![2.0, 2.0])];
        let spec = fit_latent_spec(&s).unwrap();
        assert_eq!(spec.get("x").unwrap().mu, vec![1.0, 1.0]);
        assert_eq!(spec.get("x").unwrap().sigma, vec![1.0, 1.0]);
        let same = vec![("y".to_string(), vec![0.5]); 5];
        assert_eq!(fit_latent_spec(&same).unwrap().get("y").unwrap().sigma, vec![0.0]);
        let lonely = vec![("z".to_string(), vec![0.5])];
        assert!(fit_latent_spec(&lonely).unwrap().acts.is_empty());
    }

    #[test]
    fn fit_recovers_known_gaussian() {
        let mut rng = RngStream::new(12, 7);
        let samples: Vec<(String, Vec<f64>)> = (0..1000)
            .map(|_| ("a".to_string(), vec![3.0 + 0.5 * rng.normal(), -2.0 + 2.0 * rng.normal()]))
            .collect();
        let g = fit_latent_spec(&samples).unwrap().acts["a"].clone();
        assert!((g.mu[0] - 3.0).abs() < 0.15 && (g.mu[1] + 2.0).abs() < 0.1 * 2.0);
        assert!((g.sigma[0] / 0.5 - 1.0).abs() < 0.05);
        assert!((g.sigma[1] / 2.0 - 1.0).abs() < 0.05);
    }

    fn two_acts() -> LatentSpec {
        let mut acts = BTreeMap::new();
        acts.insert("a".into(), ActGaussian { n: 2, mu: vec![0.0, 0.0], sigma: vec![1.0, 1.0] });
        acts.insert("b".into(), ActGaussian { n: 2, mu: vec![2.0, 4.0], sigma: vec![3.0, 1.0] });
        LatentSpec { acts }
    }

    #[test]
    fn interpolation() {
        let spec = two_acts();
        assert_eq!(spec.interpolate("a", "b", 0.0).unwrap().mu, vec![0.0, 0.0]);
        let mid = spec.interpolate("a", "b", 0.5).unwrap();
        assert_eq!(mid.mu, vec![1.0, 2.0]);
        assert_eq!(mid.sigma, vec![2.0, 1.0]);
        assert_eq!(spec.interpolate("a", "q", 0.5), Err(LatentError::UnknownAct("q".into())));
        assert!(spec.interpolate("a", "b", 1.5).is_err());
        let mut rng = RngStream::new(1, 7);
        assert_eq!(spec.latent_vector("b", LatentMode::Mean, &mut rng).unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn text_round_trip() {
        let mut spec = two_acts();
        spec.acts.get_mut("a").unwrap().mu[0] = 0.1 + 0.2;
        let t = spec.to_text(&["seed: 9".into()]);
        assert_eq!(LatentSpec::from_text(&t).unwrap(), spec);
        assert!(LatentSpec::from_text("a\t2\t1,2\t1\n").is_err());
    }
}
