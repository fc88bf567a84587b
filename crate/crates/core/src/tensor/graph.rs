use super::kernels;
use super::Array;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Square,
    Neg,
}

impl Unary {
    pub fn name(self) -> &'static str {
        match self {
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Softplus => "softplus",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Square => "square",
            Unary::Neg => "neg",
        }
    }

    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => kernels::sigmoid(x),
            Unary::Softplus => kernels::softplus(x),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Square => x * x,
            Unary::Neg => -x,
        }
    }

    /// Derivative given the input `x` and the output `y`.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Unary::Tanh => T::one() - y * y,
            Unary::Sigmoid => y * (T::one() - y),
            Unary::Softplus => kernels::sigmoid(x),
            Unary::Exp => y,
            Unary::Log => T::one() / x,
            Unary::Square => x + x,
            Unary::Neg => -T::one(),
        }
    }
}

pub(crate) fn finite<T: Scalar>(op: &'static str, a: Array<T>) -> Result<Array<T>> {
    if a.is_finite() {
        Ok(a)
    } else {
        Err(Error::NonFinite { op })
    }
}

/// A computation context for the network code.
///
/// [`Eager`] evaluates immediately and keeps nothing; [`super::Tape`] records
/// every node so that [`super::Tape::backward`] can produce adjoints. Every
/// operation rejects non-finite results with [`Error::NonFinite`].
pub trait Graph<T: Scalar> {
    type Var: Clone;

    /// Registers a value (a leaf on a tape).
    fn input(&mut self, a: Array<T>) -> Self::Var;
    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Array<T>;

    fn matmul(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn sub(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn mul(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn div(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    /// Adds a column vector to every column of `a`.
    fn add_col(&mut self, a: &Self::Var, bias: &Self::Var) -> Result<Self::Var>;
    /// `scale·a + shift`.
    fn affine(&mut self, a: &Self::Var, scale: T, shift: T) -> Result<Self::Var>;
    fn concat_rows(&mut self, parts: &[&Self::Var]) -> Result<Self::Var>;
    fn unary(&mut self, op: Unary, a: &Self::Var) -> Result<Self::Var>;
    /// Sum of all entries, as a 1×1 value.
    fn sum(&mut self, a: &Self::Var) -> Result<Self::Var>;

    fn constant(&mut self, a: Array<T>) -> Self::Var {
        self.input(a)
    }

    fn tanh(&mut self, a: &Self::Var) -> Result<Self::Var> {
        self.unary(Unary::Tanh, a)
    }

    fn sigmoid(&mut self, a: &Self::Var) -> Result<Self::Var> {
        self.unary(Unary::Sigmoid, a)
    }

    fn softplus(&mut self, a: &Self::Var) -> Result<Self::Var> {
        self.unary(Unary::Softplus, a)
    }

    fn exp(&mut self, a: &Self::Var) -> Result<Self::Var> {
        self.unary(Unary::Exp, a)
    }

    fn log(&mut self, a: &Self::Var) -> Result<Self::Var> {
        self.unary(Unary::Log, a)
    }

    fn square(&mut self, a: &Self::Var) -> Result<Self::Var> {
        self.unary(Unary::Square, a)
    }

    fn neg(&mut self, a: &Self::Var) -> Result<Self::Var> {
        self.unary(Unary::Neg, a)
    }
}

/// Immediate evaluation without gradient bookkeeping.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl<T: Scalar> Graph<T> for Eager {
    type Var = Array<T>;

    fn input(&mut self, a: Array<T>) -> Array<T> {
        a
    }

    fn value<'a>(&'a self, v: &'a Array<T>) -> &'a Array<T> {
        v
    }

    fn matmul(&mut self, a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
        finite("matmul", kernels::matmul(a, b)?)
    }

    fn add(&mut self, a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
        finite("add", kernels::zip("add", a, b, |x, y| x + y)?)
    }

    fn sub(&mut self, a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
        finite("sub", kernels::zip("sub", a, b, |x, y| x - y)?)
    }

    fn mul(&mut self, a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
        finite("mul", kernels::zip("mul", a, b, |x, y| x * y)?)
    }

    fn div(&mut self, a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
        finite("div", kernels::zip("div", a, b, |x, y| x / y)?)
    }

    fn add_col(&mut self, a: &Array<T>, bias: &Array<T>) -> Result<Array<T>> {
        finite("add_col", kernels::add_col(a, bias)?)
    }

    fn affine(&mut self, a: &Array<T>, scale: T, shift: T) -> Result<Array<T>> {
        finite("affine", a.map(|x| scale * x + shift))
    }

    fn concat_rows(&mut self, parts: &[&Array<T>]) -> Result<Array<T>> {
        kernels::concat_rows(parts)
    }

    fn unary(&mut self, op: Unary, a: &Array<T>) -> Result<Array<T>> {
        finite(op.name(), a.map(|x| op.apply(x)))
    }

    fn sum(&mut self, a: &Array<T>) -> Result<Array<T>> {
        finite("sum", Array::scalar(a.sum()))
    }
}
