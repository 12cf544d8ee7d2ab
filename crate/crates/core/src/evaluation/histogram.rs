//! Offset histograms, distribution distances and offset-region cutoffs.

use serde::Serialize;
use thiserror::Error;

pub const BIN_MS: f64 = 50.0;
/// Default histogram edges: 50 ms bins centred on −2000, −1950, …, +4000 ms,
/// so offsets on the frame grid sit in the middle of their bin.
pub const RANGE_MS: (f64, f64) = (-2025.0, 4025.0);

#[derive(Debug, Error, PartialEq)]
pub enum HistogramError {
    #[error("no offsets given")]
    Empty,
    #[error("invalid binning: width {bin} over [{lo}, {hi})")]
    Binning { bin: f64, lo: f64, hi: f64 },
    #[error("histograms have different bins")]
    Mismatch,
    #[error("need at least {0} offsets")]
    TooFew(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffsetHistogram {
    pub bin_ms: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub normalized: bool,
}

impl OffsetHistogram {
    /// Counts offsets per bin; values outside the range go to the first or
    /// last bin.
    pub fn new(offsets: &[f64], bin_ms: f64, range: (f64, f64)) -> Result<Self, HistogramError> {
        if offsets.is_empty() {
            return Err(HistogramError::Empty);
        }
        let (lo, hi) = range;
        let n = ((hi - lo) / bin_ms).round();
        if !(bin_ms > 0.0 && hi > lo && n >= 1.0 && (lo + n * bin_ms - hi).abs() < 1e-9 * bin_ms.max(1.0)) {
            return Err(HistogramError::Binning { bin: bin_ms, lo, hi });
        }
        let n = n as usize;
        let edges: Vec<f64> = (0..=n).map(|k| lo + k as f64 * bin_ms).collect();
        let mut counts = vec![0u64; n];
        for &x in offsets {
            let k = ((x - lo) / bin_ms).floor();
            let k = if k < 0.0 { 0 } else { (k as usize).min(n - 1) };
            counts[k] += 1;
        }
        Ok(Self {
            bin_ms,
            edges,
            counts,
            normalized: false,
        })
    }

    pub fn with_defaults(offsets: &[f64]) -> Result<Self, HistogramError> {
        Self::new(offsets, BIN_MS, RANGE_MS)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bin masses summing to one.
    pub fn density(&self) -> Vec<f64> {
        let t = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Centre of the fullest bin (lowest on ties).
    pub fn mode_ms(&self) -> f64 {
        let mut best = 0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = k;
            }
        }
        self.centers()[best]
    }

    fn same_bins(&self, other: &Self) -> bool {
        self.edges == other.edges
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distance {
    pub ks: f64,
    pub emd_ms: f64,
}

/// KS statistic and earth mover's distance between two histograms with the
/// same bins.
pub fn distribution_distance(a: &OffsetHistogram, b: &OffsetHistogram) -> Result<Distance, HistogramError> {
    if !a.same_bins(b) {
        return Err(HistogramError::Mismatch);
    }
    let (da, db) = (a.density(), b.density());
    let (mut ca, mut cb) = (0.0, 0.0);
    let (mut ks, mut emd) = (0.0f64, 0.0);
    for k in 0..da.len() {
        ca += da[k];
        cb += db[k];
        let gap = (ca - cb).abs();
        ks = ks.max(gap);
        emd += gap * a.bin_ms;
    }
    Ok(Distance { ks, emd_ms: emd })
}

/// Two-sample Kolmogorov–Smirnov statistic on raw samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, HistogramError> {
    if a.is_empty() || b.is_empty() {
        return Err(HistogramError::Empty);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionCutoffs {
    pub mode_ms: f64,
    pub early_cutoff_ms: f64,
    pub late_cutoff_ms: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Splits offsets at the histogram mode and returns the median of each side.
/// A side with no samples gets the mode as its cutoff.
pub fn offset_region_cutoffs(offsets: &[f64]) -> Result<RegionCutoffs, HistogramError> {
    if offsets.len() < 3 {
        return Err(HistogramError::TooFew(3));
    }
    let mode = OffsetHistogram::with_defaults(offsets)?.mode_ms();
    let mut sorted = offsets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let below: Vec<f64> = sorted.iter().copied().filter(|&x| x < mode).collect();
    let above: Vec<f64> = sorted.iter().copied().filter(|&x| x > mode).collect();
    Ok(RegionCutoffs {
        mode_ms: mode,
        early_cutoff_ms: if below.is_empty() { mode } else { median(&below) },
        late_cutoff_ms: if above.is_empty() { mode } else { median(&above) },
    })
}

/// CSV with one row per bin: centre, then one count column per histogram.
pub fn histograms_csv(columns: &[(String, &OffsetHistogram)], comments: &[String]) -> Result<String, HistogramError> {
    let Some((_, first)) = columns.first() else {
        return Err(HistogramError::Empty);
    };
    if columns.iter().any(|(_, h)| !h.same_bins(first)) {
        return Err(HistogramError::Mismatch);
    }
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str("bin_center_ms");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (k, c) in first.centers().iter().enumerate() {
        out.push_str(&format!("{c}"));
        for (_, h) in columns {
            out.push_str(&format!(",{}", h.counts[k]));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_samples_have_zero_distance() {
        let x = [0.0, 50.0, 100.0, 100.0, -300.0];
        let h = OffsetHistogram::with_defaults(&x).unwrap();
        let d = distribution_distance(&h, &h).unwrap();
        assert_eq!(d, Distance { ks: 0.0, emd_ms: 0.0 });
        assert_eq!(ks_two_sample(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn point_masses() {
        let a = OffsetHistogram::with_defaults(&[0.0]).unwrap();
        let b = OffsetHistogram::with_defaults(&[100.0]).unwrap();
        let d = distribution_distance(&a, &b).unwrap();
        assert_eq!(d.ks, 1.0);
        assert!((d.emd_ms - 100.0).abs() < 1e-9);
        assert_eq!(ks_two_sample(&[0.0], &[100.0]).unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_values_clamp_to_edge_bins() {
        let h = OffsetHistogram::with_defaults(&[-5000.0, 9000.0, 0.0]).unwrap();
        assert_eq!(h.counts.len(), 121);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[120], 1);
        assert_eq!(h.centers()[40], 0.0);
        assert_eq!(h.counts[40], 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(OffsetHistogram::with_defaults(&[]), Err(HistogramError::Empty));
        assert!(ks_two_sample(&[], &[1.0]).is_err());
        assert!(offset_region_cutoffs(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn bad_binning_is_rejected() {
        assert!(OffsetHistogram::new(&[0.0], 0.0, (0.0, 1.0)).is_err());
        assert!(OffsetHistogram::new(&[0.0], 30.0, (0.0, 100.0)).is_err());
    }

    #[test]
    fn symmetric_cutoffs() {
        let mut x = vec![0.0; 9];
        for k in 1..=6 {
            for _ in 0..(7 - k) {
                x.push(50.0 * k as f64);
                x.push(-50.0 * k as f64);
            }
        }
        let c = offset_region_cutoffs(&x).unwrap();
        assert_eq!(c.mode_ms, 0.0);
        assert!((c.early_cutoff_ms + c.late_cutoff_ms).abs() <= BIN_MS);
    }

    #[test]
    fn cutoffs_of_a_small_list() {
        let x = [
            -200.0, -100.0, -100.0, -50.0, 0.0, 100.0, 100.0, 100.0, 150.0, 200.0, 250.0, 300.0, 400.0, 400.0, 500.0,
            650.0, 800.0, 1000.0, 1200.0, -400.0,
        ];
        let c = offset_region_cutoffs(&x).unwrap();
        assert_eq!(c.mode_ms, 100.0);
        // below: -400 -200 -100 -100 -50 0 -> (-100 + -100)/2
        assert_eq!(c.early_cutoff_ms, -100.0);
        // above: 150 200 250 300 400 400 500 650 800 1000 1200 -> 400
        assert_eq!(c.late_cutoff_ms, 400.0);
    }

    fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
        let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn ks_matches_brute_force(
            a in proptest::collection::vec(-20i32..20, 10),
            b in proptest::collection::vec(-20i32..20, 10),
        ) {
            let a: Vec<f64> = a.into_iter().map(|v| v as f64 * 50.0).collect();
            let b: Vec<f64> = b.into_iter().map(|v| v as f64 * 50.0).collect();
            let ks = ks_two_sample(&a, &b).unwrap();
            prop_assert!((ks - brute_ks(&a, &b)).abs() < 1e-12);
            // on the frame grid the binned statistic agrees with the raw one
            let ha = OffsetHistogram::with_defaults(&a).unwrap();
            let hb = OffsetHistogram::with_defaults(&b).unwrap();
            prop_assert!((distribution_distance(&ha, &hb).unwrap().ks - ks).abs() < 1e-12);
        }

        #[test]
        fn counts_sum_to_samples(x in proptest::collection::vec(-6000.0f64..9000.0, 1..200)) {
            let h = OffsetHistogram::with_defaults(&x).unwrap();
            prop_assert_eq!(h.total(), x.len() as u64);
            prop_assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
            let c = offset_region_cutoffs(&x);
            if let Ok(c) = c {
                prop_assert!(c.early_cutoff_ms <= c.mode_ms && c.mode_ms <= c.late_cutoff_ms);
            }
        }
    }
}
