use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type that model code is written against.
///
/// Implemented by `f64`, by the reverse-mode [`Var`](super::Var) and by
/// forward jets over any `Real`, so a single generic function can be
/// evaluated plainly, differentiated with respect to its inputs, or
/// differentiated with respect to parameters through input derivatives.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Lifts a constant.
    fn cst(v: f64) -> Self;
    /// Primal value.
    fn value(self) -> f64;

    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Differentiable everywhere except at zero.
    fn abs(self) -> Self;
    /// Piecewise constant; not a registered primitive for differentiation.
    fn floor(self) -> Self;

    fn sq(self) -> Self {
        self * self
    }

    /// Logistic function, written through `tanh` so it stays a composition of
    /// registered primitives.
    fn sigmoid(self) -> Self {
        (self * 0.5).tanh() * 0.5 + 0.5
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn floor(self) -> Self {
        f64::floor(self)
    }
}

/// Sum of a slice of scalars.
pub fn sum<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::cst(0.0), |acc, &x| acc + x)
}

/// Arithmetic mean; zero for an empty slice.
pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::cst(0.0);
    }
    sum(xs) / xs.len() as f64
}
