//! Differentiation engine.
//!
//! Two pieces compose: a reverse-mode [`Tape`] for gradients with respect to
//! many parameters, and forward [`Jet`]s for first and pure second input
//! derivatives. Model code is written once against [`Real`] and evaluated
//! with `f64`, `Var`, `Jet<f64, N>` or `Jet<Var, N>`.

mod jet;
mod real;
mod reverse;

pub use jet::Jet;
pub use real::{mean, sum, Real};
pub use reverse::{Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("operation `{0}` is not a registered differentiable primitive")]
    UnsupportedPrimitive(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A scalar function of a vector, generic over the scalar type.
pub trait ScalarFn {
    fn eval<T: Real>(&self, x: &[T]) -> T;
}

impl<F: ScalarFn + ?Sized> ScalarFn for &F {
    fn eval<T: Real>(&self, x: &[T]) -> T {
        (**self).eval(x)
    }
}

/// Value and gradient of `f` at `theta` by one reverse sweep.
pub fn value_and_grad<F: ScalarFn>(f: &F, theta: &[f64]) -> Result<(f64, Vec<f64>), AutodiffError> {
    let tape = Tape::with_capacity(theta.len() * 4);
    let vars = tape.vars(theta);
    let out = f.eval(&vars);
    let adj = tape.adjoints(out)?;
    // Leaves are the first nodes on the tape, in order.
    Ok((out.value(), adj[..theta.len()].to_vec()))
}

/// Gradient of a scalar loss with respect to its parameter vector.
pub fn grad_params<F: ScalarFn>(loss_fn: &F, theta: &[f64]) -> Result<Vec<f64>, AutodiffError> {
    value_and_grad(loss_fn, theta).map(|(_, g)| g)
}

/// `(f, ∂f/∂x_axis, ∂²f/∂x_axis²)` at `x`.
pub fn input_jet<F: ScalarFn>(f: &F, x: &[f64], axis: usize) -> Result<(f64, f64, f64), AutodiffError> {
    if axis >= x.len() {
        return Err(AutodiffError::DimensionMismatch {
            expected: x.len(),
            got: axis + 1,
        });
    }
    jet::take_unsupported();
    let xs: Vec<Jet<f64, 1>> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == axis {
                Jet::seed(v, 0)
            } else {
                Jet::constant(v)
            }
        })
        .collect();
    let y = f.eval(&xs);
    if let Some(name) = jet::take_unsupported() {
        return Err(AutodiffError::UnsupportedPrimitive(name));
    }
    Ok((y.v, y.d[0], y.dd[0]))
}

/// Sum of pure second derivatives over all coordinates, one jet pass per axis.
pub fn laplacian<F: ScalarFn>(f: &F, x: &[f64]) -> Result<f64, AutodiffError> {
    let mut s = 0.0;
    for axis in 0..x.len() {
        s += input_jet(f, x, axis)?.2;
    }
    Ok(s)
}

/// Outcome of comparing engine derivatives with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Set when evaluation touched a point where a primitive has a kink.
    pub non_differentiable_point: bool,
    pub passed: bool,
}

/// Relative error with an absolute floor so that tiny derivatives compare
/// on an absolute scale.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Checks reverse-mode input gradients of `f` against central differences.
pub fn check_gradient<F: ScalarFn>(f: &F, x: &[f64], tolerance: f64) -> GradientReport {
    let tape = Tape::new();
    let vars = tape.vars(x);
    let out = f.eval(&vars);
    let kink = tape.hit_kink();
    let analytic = match tape.adjoints(out) {
        Ok(adj) => adj[..x.len()].to_vec(),
        Err(_) => vec![f64::NAN; x.len()],
    };
    let mut numeric = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f.eval(&xp);
        xp[i] = x[i] - h;
        let fm = f.eval(&xp);
        xp[i] = x[i];
        numeric.push((fp - fm) / (2.0 * h));
    }
    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, |m: f64, e| if e.is_nan() { f64::INFINITY } else { m.max(e) });
    GradientReport {
        passed: !kink && max_rel_error <= tolerance,
        analytic,
        numeric,
        max_rel_error,
        tolerance,
        non_differentiable_point: kink,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct SumSq;
    impl ScalarFn for SumSq {
        fn eval<T: Real>(&self, x: &[T]) -> T {
            sum(&x.iter().map(|&v| v * v).collect::<Vec<_>>())
        }
    }

    struct Const;
    impl ScalarFn for Const {
        fn eval<T: Real>(&self, _x: &[T]) -> T {
            T::cst(3.5)
        }
    }

    struct Abs;
    impl ScalarFn for Abs {
        fn eval<T: Real>(&self, x: &[T]) -> T {
            x[0].abs()
        }
    }

    struct Sin;
    impl ScalarFn for Sin {
        fn eval<T: Real>(&self, x: &[T]) -> T {
            x[0].sin()
        }
    }

    struct Saddle;
    impl ScalarFn for Saddle {
        fn eval<T: Real>(&self, x: &[T]) -> T {
            x[0] * x[0] - x[1] * x[1]
        }
    }

    struct Floor;
    impl ScalarFn for Floor {
        fn eval<T: Real>(&self, x: &[T]) -> T {
            x[0].floor()
        }
    }

    #[test]
    fn quadratic_gradient() {
        assert_eq!(grad_params(&SumSq, &[1.0, -2.0]).unwrap(), vec![2.0, -4.0]);
        assert_eq!(grad_params(&Const, &[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn laplacians() {
        assert_eq!(laplacian(&SumSq, &[0.3, -1.2]).unwrap(), 4.0);
        assert_eq!(laplacian(&Saddle, &[0.3, -1.2]).unwrap(), 0.0);
    }

    #[test]
    fn unsupported_is_reported() {
        assert_eq!(
            grad_params(&Floor, &[1.5]),
            Err(AutodiffError::UnsupportedPrimitive("floor"))
        );
        assert_eq!(
            input_jet(&Floor, &[1.5], 0),
            Err(AutodiffError::UnsupportedPrimitive("floor"))
        );
    }

    #[test]
    fn gradient_check_flags_kink() {
        assert!(check_gradient(&Sin, &[1.0], 1e-6).passed);
        let r = check_gradient(&Abs, &[0.0], 1e-6);
        assert!(!r.passed);
        assert!(r.non_differentiable_point);
    }
}
