use serde::{Deserialize, Serialize};

use super::linalg::{matvec_cols_acc, matvec_t_cols_acc, outer_cols_acc};
use super::{check_dim, sigmoid, NnError, ParamStore, Real, RngStream, Slot, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

impl Activation {
    #[inline]
    pub fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Relu => x.max(F::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::None => x,
        }
    }

    /// Derivative expressed through the activated output `y`.
    #[inline]
    pub fn derivative_from_output<F: Real>(self, y: F) -> F {
        match self {
            Activation::Relu => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => y * (F::one() - y),
            Activation::None => F::one(),
        }
    }
}

/// `y = act(W x + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Slot,
    pub b: Slot,
    pub in_dim: usize,
    pub out_dim: usize,
    pub act: Activation,
}

impl Affine {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        rng: &mut RngStream,
    ) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let w = store.add_uniform(format!("{name}.w"), vec![out_dim, in_dim], bound, rng);
        let b = store.add_uniform(format!("{name}.b"), vec![out_dim], bound, rng);
        Self {
            w,
            b,
            in_dim,
            out_dim,
            act,
        }
    }

    pub fn forward<F: Real>(&self, params: &[F], x: &[F]) -> Result<Vec<F>, NnError> {
        check_dim("affine input", self.in_dim, x.len())?;
        let mut y = self.b.of(params).to_vec();
        matvec_cols_acc(self.w.of(params), self.in_dim, 0, x, &mut y);
        for v in &mut y {
            *v = self.act.apply(*v);
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and, when requested,
    /// the input gradient into `dx`. `y` is the activated forward output.
    pub fn backward<F: Real>(
        &self,
        params: &[F],
        grads: &mut [F],
        x: &[F],
        y: &[F],
        dy: &[F],
        dx: Option<&mut [F]>,
    ) {
        let dz: Vec<F> = dy
            .iter()
            .zip(y)
            .map(|(&d, &o)| d * self.act.derivative_from_output(o))
            .collect();
        outer_cols_acc(self.w.of_mut(grads), self.in_dim, 0, &dz, x);
        for (gb, d) in self.b.of_mut(grads).iter_mut().zip(&dz) {
            *gb += *d;
        }
        if let Some(dx) = dx {
            matvec_t_cols_acc(self.w.of(params), self.in_dim, 0, &dz, dx);
        }
    }
}

/// Stand-alone dense layer evaluation on explicit tensors.
pub fn affine_activation<F: Real>(
    x: &[F],
    w: &Tensor<F>,
    b: &Tensor<F>,
    kind: Activation,
) -> Result<Vec<F>, NnError> {
    let shape = w.shape();
    if shape.len() != 2 {
        return Err(NnError::Shape {
            shape: shape.to_vec(),
            len: w.len(),
        });
    }
    let (rows, cols) = (shape[0], shape[1]);
    check_dim("affine input", cols, x.len())?;
    check_dim("affine bias", rows, b.len())?;
    let mut y = b.data().to_vec();
    matvec_cols_acc(w.data(), cols, 0, x, &mut y);
    Ok(y.into_iter().map(|v| kind.apply(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_relu() {
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(vec![2]);
        let y = affine_activation(&[-1.0f64, 2.0], &w, &b, Activation::Relu).unwrap();
        assert_eq!(y, vec![0.0, 2.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let w = Tensor::<f64>::zeros(vec![3, 4]);
        let b = Tensor::zeros(vec![3]);
        let y = affine_activation(&[0.3, -0.1, 2.0, 5.0], &w, &b, Activation::Sigmoid).unwrap();
        assert_eq!(y, vec![0.5; 3]);
    }

    #[test]
    fn random_three_by_two_matches_scalar_oracle() {
        let mut rng = RngStream::new(5, 0);
        let w: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let x: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
        let wt = Tensor::new(vec![3, 2], w.clone()).unwrap();
        let bt = Tensor::new(vec![3], b.clone()).unwrap();
        for kind in [Activation::None, Activation::Relu, Activation::Sigmoid] {
            let y = affine_activation(&x, &wt, &bt, kind).unwrap();
            for r in 0..3 {
                let z = w[r * 2] * x[0] + w[r * 2 + 1] * x[1] + b[r];
                let expect = match kind {
                    Activation::None => z,
                    Activation::Relu => {
                        if z > 0.0 {
                            z
                        } else {
                            0.0
                        }
                    }
                    Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                };
                assert!((y[r] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let w = Tensor::<f64>::zeros(vec![3, 2]);
        let b = Tensor::zeros(vec![3]);
        assert!(matches!(
            affine_activation(&[1.0, 2.0, 3.0], &w, &b, Activation::None),
            Err(NnError::Dimension { .. })
        ));
        let b2 = Tensor::zeros(vec![2]);
        assert!(affine_activation(&[1.0, 2.0], &w, &b2, Activation::None).is_err());
    }
}
