//! Second-order forward jets.
//!
//! A [`Jet`] carries a value, `N` directional first derivatives and the
//! matching `N` pure second derivatives (the Hessian diagonal along the
//! seeded directions). That is exactly what time derivatives and Laplacians
//! need. The component type is any [`Real`], so `Jet<Var, N>` records the
//! whole jet computation on a tape and input derivatives can be
//! differentiated again with respect to parameters.

use std::cell::Cell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Real;

thread_local! {
    static UNSUPPORTED: Cell<Option<&'static str>> = const { Cell::new(None) };
}

/// Clears the per-thread record of unsupported primitives hit by jets.
pub(crate) fn take_unsupported() -> Option<&'static str> {
    UNSUPPORTED.with(|u| u.take())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T, const N: usize> {
    pub v: T,
    pub d: [T; N],
    pub dd: [T; N],
}

impl<T: Real, const N: usize> Jet<T, N> {
    pub fn constant(v: T) -> Self {
        let z = T::cst(0.0);
        Jet {
            v,
            d: [z; N],
            dd: [z; N],
        }
    }

    /// Independent variable seeded along direction `axis`.
    pub fn seed(v: T, axis: usize) -> Self {
        let mut j = Self::constant(v);
        j.d[axis] = T::cst(1.0);
        j
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at the primal.
    #[inline]
    pub fn chain(self, f: T, f1: T, f2: T) -> Self {
        let mut out = Self::constant(f);
        for k in 0..N {
            out.d[k] = f1 * self.d[k];
            out.dd[k] = f2 * self.d[k] * self.d[k] + f1 * self.dd[k];
        }
        out
    }

    /// Sum of the second derivatives over the first `n` directions.
    pub fn laplacian(&self, n: usize) -> T {
        let n = n.min(N);
        if n == 0 {
            return T::cst(0.0);
        }
        let mut s = self.dd[0];
        for k in 1..n {
            s = s + self.dd[k];
        }
        s
    }
}

impl<T: Real, const N: usize> Add for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, r: Self) -> Self {
        let mut o = self;
        o.v = self.v + r.v;
        for k in 0..N {
            o.d[k] = self.d[k] + r.d[k];
            o.dd[k] = self.dd[k] + r.dd[k];
        }
        o
    }
}

impl<T: Real, const N: usize> Sub for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, r: Self) -> Self {
        let mut o = self;
        o.v = self.v - r.v;
        for k in 0..N {
            o.d[k] = self.d[k] - r.d[k];
            o.dd[k] = self.dd[k] - r.dd[k];
        }
        o
    }
}

impl<T: Real, const N: usize> Mul for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, r: Self) -> Self {
        let mut o = self;
        o.v = self.v * r.v;
        for k in 0..N {
            o.d[k] = self.d[k] * r.v + self.v * r.d[k];
            o.dd[k] = self.dd[k] * r.v + self.d[k] * r.d[k] * 2.0 + self.v * r.dd[k];
        }
        o
    }
}

impl<T: Real, const N: usize> Div for Jet<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, r: Self) -> Self {
        let q = self.v / r.v;
        let mut o = Self::constant(q);
        for k in 0..N {
            let dq = (self.d[k] - q * r.d[k]) / r.v;
            o.d[k] = dq;
            o.dd[k] = (self.dd[k] - dq * r.d[k] * 2.0 - q * r.dd[k]) / r.v;
        }
        o
    }
}

impl<T: Real, const N: usize> Neg for Jet<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut o = self;
        o.v = -self.v;
        for k in 0..N {
            o.d[k] = -self.d[k];
            o.dd[k] = -self.dd[k];
        }
        o
    }
}

impl<T: Real, const N: usize> Add<f64> for Jet<T, N> {
    type Output = Self;
    fn add(self, k: f64) -> Self {
        Jet {
            v: self.v + k,
            ..self
        }
    }
}

impl<T: Real, const N: usize> Sub<f64> for Jet<T, N> {
    type Output = Self;
    fn sub(self, k: f64) -> Self {
        Jet {
            v: self.v - k,
            ..self
        }
    }
}

impl<T: Real, const N: usize> Mul<f64> for Jet<T, N> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        let mut o = self;
        o.v = self.v * s;
        for k in 0..N {
            o.d[k] = self.d[k] * s;
            o.dd[k] = self.dd[k] * s;
        }
        o
    }
}

impl<T: Real, const N: usize> Div<f64> for Jet<T, N> {
    type Output = Self;
    fn div(self, s: f64) -> Self {
        let mut o = self;
        o.v = self.v / s;
        for k in 0..N {
            o.d[k] = self.d[k] / s;
            o.dd[k] = self.dd[k] / s;
        }
        o
    }
}

impl<T: Real, const N: usize> Real for Jet<T, N> {
    fn cst(v: f64) -> Self {
        Self::constant(T::cst(v))
    }

    fn value(self) -> f64 {
        self.v.value()
    }

    fn tanh(self) -> Self {
        let t = self.v.tanh();
        let s = T::cst(1.0) - t * t;
        self.chain(t, s, t * s * -2.0)
    }

    fn sin(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(s, c, -s)
    }

    fn cos(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(c, -s, -c)
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    fn ln(self) -> Self {
        let inv = T::cst(1.0) / self.v;
        self.chain(self.v.ln(), inv, -(inv * inv))
    }

    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let f1 = T::cst(0.5) / s;
        self.chain(s, f1, -(f1 / self.v) * 0.5)
    }

    fn powi(self, n: i32) -> Self {
        let f = self.v.powi(n);
        let nf = n as f64;
        let f1 = if n == 0 {
            T::cst(0.0)
        } else {
            self.v.powi(n - 1) * nf
        };
        let f2 = if n == 0 || n == 1 {
            T::cst(0.0)
        } else {
            self.v.powi(n - 2) * (nf * (nf - 1.0))
        };
        self.chain(f, f1, f2)
    }

    fn abs(self) -> Self {
        let a = self.v.abs();
        let sign = if self.v.value() > 0.0 {
            1.0
        } else if self.v.value() < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.chain(a, T::cst(sign), T::cst(0.0))
    }

    fn floor(self) -> Self {
        UNSUPPORTED.with(|u| {
            if u.get().is_none() {
                u.set(Some("floor"));
            }
        });
        Self::constant(self.v.floor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_and_tanh() {
        let x = Jet::<f64, 1>::seed(2.0, 0);
        let y = x * x * x;
        assert_eq!((y.v, y.d[0], y.dd[0]), (8.0, 12.0, 12.0));
        let t = Jet::<f64, 1>::seed(0.0, 0).tanh();
        assert_eq!((t.v, t.d[0], t.dd[0]), (0.0, 1.0, 0.0));
    }

    #[test]
    fn quotient_rule() {
        let x = Jet::<f64, 1>::seed(0.7, 0);
        let y = Jet::<f64, 1>::cst(1.0) / (x * x + 1.0);
        let den = 0.7f64 * 0.7 + 1.0;
        assert!((y.d[0] - (-2.0 * 0.7 / (den * den))).abs() < 1e-15);
        let exact = (6.0 * 0.49 - 2.0) / den.powi(3);
        assert!((y.dd[0] - exact).abs() < 1e-14);
    }

    #[test]
    fn floor_is_flagged() {
        take_unsupported();
        let _ = Jet::<f64, 1>::seed(1.5, 0).floor();
        assert_eq!(take_unsupported(), Some("floor"));
        assert_eq!(take_unsupported(), None);
    }
}
