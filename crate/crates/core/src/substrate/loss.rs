use super::{check_dim, NnError, Real};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BceOutcome {
    /// Mean over masked-in frames.
    pub loss: f64,
    pub frames: usize,
    /// Set when some probability had to be clamped.
    pub clamped: bool,
}

/// Binary cross entropy averaged over the frames whose mask is set.
pub fn bce_masked(probs: &[f64], targets: &[u8], mask: &[u8]) -> Result<BceOutcome, NnError> {
    check_dim("bce targets", probs.len(), targets.len())?;
    check_dim("bce mask", probs.len(), mask.len())?;
    let mut total = 0.0;
    let mut frames = 0usize;
    let mut clamped = false;
    for ((&p, &t), &m) in probs.iter().zip(targets).zip(mask) {
        if m == 0 {
            continue;
        }
        let (term, c) = bce_term(p, t != 0);
        clamped |= c;
        total += term;
        frames += 1;
    }
    if frames == 0 {
        return Err(NnError::EmptyMask("bce"));
    }
    Ok(BceOutcome {
        loss: total / frames as f64,
        frames,
        clamped,
    })
}

/// `-[t log p + (1-t) log(1-p)]` with clamping; returns whether `p` was clamped.
#[inline]
pub fn bce_term<F: Real>(p: F, target: bool) -> (F, bool) {
    let lo = F::of(PROB_CLAMP);
    let hi = F::one() - lo;
    let clamped = !(p >= lo && p <= hi);
    let pc = if p.is_nan() { lo } else { p.max(lo).min(hi) };
    let v = if target { -pc.ln() } else { -(F::one() - pc).ln() };
    (v, clamped)
}

/// KL divergence to the standard normal, averaged over latent dimensions:
/// `-(1 / 2N) Σ (1 + σ̂ - μ² - exp σ̂)` where `σ̂` is the log-variance.
pub fn kl_loss<F: Real>(mu: &[F], sigma_hat: &[F]) -> Result<F, NnError> {
    check_dim("kl widths", mu.len(), sigma_hat.len())?;
    if mu.is_empty() {
        return Ok(F::zero());
    }
    let n = F::of(mu.len() as f64);
    let s: F = mu
        .iter()
        .zip(sigma_hat)
        .map(|(&m, &s)| F::one() + s - m * m - s.exp())
        .sum();
    Ok(-s / (F::of(2.0) * n))
}

/// Gradients of [`kl_loss`] scaled by `weight`, accumulated into `d_mu` and
/// `d_sigma_hat`.
pub fn kl_backward<F: Real>(mu: &[F], sigma_hat: &[F], weight: F, d_mu: &mut [F], d_sigma_hat: &mut [F]) {
    let n = F::of(mu.len() as f64);
    let scale = weight / (F::of(2.0) * n);
    for k in 0..mu.len() {
        d_mu[k] += scale * F::of(2.0) * mu[k];
        d_sigma_hat[k] += scale * (sigma_hat[k].exp() - F::one());
    }
}
