//! Neural-network kernels and the probabilistic-tablature network.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and inference and in `f64` for finite-difference checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub mod adam;
pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{load_weights, read_weights, save_weights, write_weights, WeightsError, MAGIC};
pub use network::{
    backward, forward, forward_batch, forward_trace, ModelWeights, NamedTensor, NetworkSpec,
    ProbabilisticTablature, INPUT_LEN, LATENT_LEN, OUTPUT_LEN,
};

pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
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
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("input length {found}, expected {expected}")]
    InputLength { expected: usize, found: usize },
    #[error("{context}: shape {found:?}, expected {expected:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: String },
}
