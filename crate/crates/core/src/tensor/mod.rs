//! Reverse-mode differentiation over dense `[batch × channels × time]` arrays.
//!
//! A [`Graph`] is a tape: every op appends a node holding its output value,
//! so node order is a topological order and backward is a reverse sweep.
//! Parameters live outside the graph as [`Tensor`]s and are copied in as
//! leaves for each forward pass.

mod conv;
pub mod gradcheck;
mod graph;
mod norm;
mod spiking;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{ArrayD, IxDyn, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use conv::{conv1d_backward, conv1d_forward};
pub use graph::{array3, Gradients, Graph, Var};
pub use norm::LN_EPSILON;
pub use spiking::{lif_closed_form_first_spike, LifParams};

/// Scalar type the engine runs in: `f32` for training, `f64` for checks.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Real> {
    pub value: ArrayD<S>,
    pub requires_grad: bool,
    /// Same shape as `value` when present.
    pub grad: Option<ArrayD<S>>,
}

impl<S: Real> Tensor<S> {
    pub fn new(value: ArrayD<S>, requires_grad: bool) -> Self {
        Self {
            value,
            requires_grad,
            grad: None,
        }
    }

    pub fn zeros(shape: &[usize], requires_grad: bool) -> Self {
        Self::new(ArrayD::zeros(IxDyn(shape)), requires_grad)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the stored gradient.
    pub fn accumulate_grad(&mut self, g: &ArrayD<S>) {
        debug_assert_eq!(g.shape(), self.value.shape());
        match &mut self.grad {
            Some(acc) => *acc += g,
            None => self.grad = Some(g.clone()),
        }
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor {
            value: self.value.mapv(|v| T::of(v.to_f64().unwrap_or(f64::NAN))),
            requires_grad: self.requires_grad,
            grad: self
                .grad
                .as_ref()
                .map(|g| g.mapv(|v| T::of(v.to_f64().unwrap_or(f64::NAN)))),
        }
    }
}
