//! Slice kernels used by the layers. Reductions use eight independent
//! accumulators so the compiler can vectorise them; the summation order is
//! fixed, which keeps results bit-reproducible.

use super::Real;

#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let aa = &a[c * 8..c * 8 + 8];
        let bb = &b[c * 8..c * 8 + 8];
        for k in 0..8 {
            acc[k] += aa[k] * bb[k];
        }
    }
    let mut tail = F::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `out[r] += W[r, col_lo..col_hi] · x` for a row-major `rows × stride` matrix.
#[inline]
pub fn matvec_cols_acc<F: Real>(w: &[F], stride: usize, col_lo: usize, x: &[F], out: &mut [F]) {
    let width = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * stride + col_lo..r * stride + col_lo + width];
        *o += dot(row, x);
    }
}

/// `dx += W[:, col_lo..col_lo+dx.len()]ᵀ · dy`
#[inline]
pub fn matvec_t_cols_acc<F: Real>(w: &[F], stride: usize, col_lo: usize, dy: &[F], dx: &mut [F]) {
    let width = dx.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == F::zero() {
            continue;
        }
        let row = &w[r * stride + col_lo..r * stride + col_lo + width];
        axpy(d, row, dx);
    }
}

/// `dW[:, col_lo..col_lo+x.len()] += dy · xᵀ`
#[inline]
pub fn outer_cols_acc<F: Real>(dw: &mut [F], stride: usize, col_lo: usize, dy: &[F], x: &[F]) {
    let width = x.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == F::zero() {
            continue;
        }
        let row = &mut dw[r * stride + col_lo..r * stride + col_lo + width];
        axpy(d, x, row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_for_odd_lengths() {
        for n in [0usize, 1, 7, 8, 9, 23] {
            let a: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 1.0).collect();
            let b: Vec<f64> = (0..n).map(|i| 2.0 - i as f64 * 0.25).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn column_block_products() {
        // 2x3 matrix, use columns 1..3
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 2];
        matvec_cols_acc(&w, 3, 1, &[1.0, -1.0], &mut out);
        assert_eq!(out, [-1.0, -1.0]);
        let mut dx = [0.0; 2];
        matvec_t_cols_acc(&w, 3, 1, &[1.0, 2.0], &mut dx);
        assert_eq!(dx, [12.0, 15.0]);
        let mut dw = [0.0; 6];
        outer_cols_acc(&mut dw, 3, 1, &[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(dw, [0.0, 3.0, 4.0, 0.0, 6.0, 8.0]);
    }
}
