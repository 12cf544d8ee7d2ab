//! Numeric core: tensors, parameter storage, recurrent cells, dense layers,
//! losses, the Adam optimizer and a finite-difference gradient checker.
//!
//! Every block is generic over [`Real`] so the same code trains in `f32` and
//! is verified in `f64`. Parameters live in one flat buffer per model
//! ([`ParamStore`]); layers only remember which [`Slot`] of that buffer they
//! own, and gradients are a second flat buffer with the same layout.

pub mod affine;
pub mod checkpoint;
pub mod embedding;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod rng;
pub mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use affine::{affine_activation, Activation, Affine};
pub use embedding::Embedding;
pub use gradcheck::{gradient_check, GradCheckEntry, GradCheckReport, GradCheckTarget};
pub use loss::{bce_masked, BceOutcome, PROB_CLAMP};
pub use lstm::{bilstm_sequence, lstm_step, BiLstm, BiLstmTrace, LstmCell, LstmTrace};
pub use optim::{Adam, AdamConfig};
pub use rng::RngStream;
pub use tensor::{ParamSpec, ParamStore, Seq, Slot, Tensor};

/// Floating point type the network blocks are written against.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Errors raised by the numeric blocks when their contracts are violated.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{0}: empty sequence")]
    EmptySequence(&'static str),
    #[error("{0}: no frames selected by the mask")]
    EmptyMask(&'static str),
    #[error("tensor shape {shape:?} does not hold {len} values")]
    Shape { shape: Vec<usize>, len: usize },
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<(), NnError> {
    if expected == actual {
        Ok(())
    } else {
        Err(NnError::Dimension {
            context,
            expected,
            actual,
        })
    }
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}
