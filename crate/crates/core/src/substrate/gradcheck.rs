//! Central finite-difference verification of analytic gradients (`f64` only).

use std::ops::Range;

use serde::Serialize;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero compare on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// A scalar function of a flat coordinate vector with an analytic gradient.
pub trait GradCheckTarget {
    fn name(&self) -> String;
    /// Named blocks of the coordinate vector; reported separately.
    fn segments(&self) -> Vec<(String, Range<usize>)>;
    fn point(&self) -> Vec<f64>;
    fn loss(&self, x: &[f64]) -> f64;
    fn loss_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub target: String,
    pub eps: f64,
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients against `(f(x+ε) - f(x-ε)) / 2ε`. At most
/// `max_per_segment` evenly spaced coordinates of each segment are probed.
pub fn gradient_check(target: &dyn GradCheckTarget, eps: f64, tolerance: f64, max_per_segment: usize) -> GradCheckReport {
    let x0 = target.point();
    let (_, grad) = target.loss_and_grad(&x0);
    assert_eq!(grad.len(), x0.len(), "gradient length");
    let mut x = x0.clone();
    let mut entries = Vec::new();
    for (name, range) in target.segments() {
        let n = range.len();
        let picks: Vec<usize> = if n <= max_per_segment {
            range.clone().collect()
        } else {
            (0..max_per_segment)
                .map(|k| range.start + k * n / max_per_segment)
                .collect()
        };
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for &i in &picks {
            x[i] = x0[i] + eps;
            let up = target.loss(&x);
            x[i] = x0[i] - eps;
            let down = target.loss(&x);
            x[i] = x0[i];
            let numeric = (up - down) / (2.0 * eps);
            max_rel = max_rel.max(relative_error(grad[i], numeric));
            max_abs = max_abs.max((grad[i] - numeric).abs());
        }
        entries.push(GradCheckEntry {
            name,
            checked: picks.len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel < tolerance && max_rel.is_finite(),
        });
    }
    GradCheckReport {
        target: target.name(),
        eps,
        tolerance,
        entries,
    }
}
