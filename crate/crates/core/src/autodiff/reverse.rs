//! Reverse-mode differentiation on a recorded tape.
//!
//! A [`Tape`] stores every operation applied to its [`Var`]s together with
//! the local partial derivatives. Calling [`Tape::adjoints`] sweeps the tape
//! backwards once and yields the derivative of one output with respect to
//! every recorded node. Constants never touch the tape: a `Var` created with
//! [`Var::constant`] carries no tape reference, so `Real::cst` works without
//! one in scope.

use std::cell::{Cell, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::{AutodiffError, Real};

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddC(f64),
    MulC(f64),
    DivC(f64),
    RSubC(f64),
    RDivC(f64),
    Tanh,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Powi(i32),
    Abs,
    Unsupported(&'static str),
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    a: usize,
    b: usize,
    da: f64,
    db: f64,
    val: f64,
}

/// Operation record for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    unsupported: Cell<Option<&'static str>>,
    kink: Cell<bool>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
            ..Self::default()
        }
    }

    /// Registers an independent variable.
    pub fn var(&self, v: f64) -> Var<'_> {
        let idx = self.push(Node {
            op: Op::Leaf,
            a: NONE,
            b: NONE,
            da: 0.0,
            db: 0.0,
            val: v,
        });
        Var {
            tape: Some(self),
            idx,
            val: v,
        }
    }

    pub fn vars(&self, vs: &[f64]) -> Vec<Var<'_>> {
        vs.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Forgets every recorded node and flag.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.unsupported.set(None);
        self.kink.set(false);
    }

    /// True once `abs` was evaluated exactly at its kink.
    pub fn hit_kink(&self) -> bool {
        self.kink.get()
    }

    /// Name of the first unregistered primitive applied on this tape.
    pub fn unsupported(&self) -> Option<&'static str> {
        self.unsupported.get()
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    fn unary(&self, a: &Var<'_>, op: Op, val: f64, da: f64) -> usize {
        self.push(Node {
            op,
            a: a.idx,
            b: NONE,
            da,
            db: 0.0,
            val,
        })
    }

    /// Derivative of `output` with respect to every node recorded before it.
    ///
    /// Index the result with [`Var::index`].
    pub fn adjoints(&self, output: Var<'_>) -> Result<Vec<f64>, AutodiffError> {
        if let Some(name) = self.unsupported.get() {
            return Err(AutodiffError::UnsupportedPrimitive(name));
        }
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if output.tape.is_none() {
            return Ok(adj);
        }
        adj[output.idx] = 1.0;
        for i in (0..=output.idx).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = &nodes[i];
            if n.a != NONE {
                adj[n.a] += g * n.da;
            }
            if n.b != NONE {
                adj[n.b] += g * n.db;
            }
        }
        Ok(adj)
    }

    /// Value recorded at node `idx`.
    pub fn recorded_value(&self, idx: usize) -> Option<f64> {
        self.nodes.borrow().get(idx).map(|n| n.val)
    }

    /// Re-evaluates the recorded operation sequence with new leaf values,
    /// given in the order the leaves were created. Returns every node value.
    pub fn replay(&self, leaves: &[f64]) -> Result<Vec<f64>, AutodiffError> {
        let nodes = self.nodes.borrow();
        let mut vals = Vec::with_capacity(nodes.len());
        let mut next_leaf = 0usize;
        for n in nodes.iter() {
            let a = if n.a != NONE { vals[n.a] } else { 0.0 };
            let b = if n.b != NONE { vals[n.b] } else { 0.0 };
            let v = match n.op {
                Op::Leaf => {
                    let v = *leaves
                        .get(next_leaf)
                        .ok_or(AutodiffError::DimensionMismatch {
                            expected: next_leaf + 1,
                            got: leaves.len(),
                        })?;
                    next_leaf += 1;
                    v
                }
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Neg => -a,
                Op::AddC(k) => a + k,
                Op::MulC(k) => a * k,
                Op::DivC(k) => a / k,
                Op::RSubC(k) => k - a,
                Op::RDivC(k) => k / a,
                Op::Tanh => a.tanh(),
                Op::Sin => a.sin(),
                Op::Cos => a.cos(),
                Op::Exp => a.exp(),
                Op::Ln => a.ln(),
                Op::Sqrt => a.sqrt(),
                Op::Powi(k) => a.powi(k),
                Op::Abs => a.abs(),
                Op::Unsupported(name) => return Err(AutodiffError::UnsupportedPrimitive(name)),
            };
            vals.push(v);
        }
        if next_leaf != leaves.len() {
            return Err(AutodiffError::DimensionMismatch {
                expected: next_leaf,
                got: leaves.len(),
            });
        }
        Ok(vals)
    }
}

/// Differentiable scalar recorded on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: usize,
    val: f64,
}

impl<'t> Var<'t> {
    /// A constant that is not recorded anywhere.
    pub fn constant(v: f64) -> Self {
        Var {
            tape: None,
            idx: NONE,
            val: v,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    /// Position on the tape, for indexing [`Tape::adjoints`].
    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.idx)
    }

    fn map(self, op: Op, val: f64, da: f64) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(t) => Var {
                tape: Some(t),
                idx: t.unary(&self, op, val, da),
                val,
            },
        }
    }

    fn binary(self, rhs: Self, op: Op, val: f64, da: f64, db: f64) -> Self {
        match (self.tape, rhs.tape) {
            (None, None) => Var::constant(val),
            (Some(t), None) => {
                let unary = match op {
                    Op::Add => Op::AddC(rhs.val),
                    Op::Sub => Op::AddC(-rhs.val),
                    Op::Mul => Op::MulC(rhs.val),
                    Op::Div => Op::DivC(rhs.val),
                    _ => unreachable!(),
                };
                Var {
                    tape: Some(t),
                    idx: t.unary(&self, unary, val, da),
                    val,
                }
            }
            (None, Some(t)) => {
                let unary = match op {
                    Op::Add => Op::AddC(self.val),
                    Op::Sub => Op::RSubC(self.val),
                    Op::Mul => Op::MulC(self.val),
                    Op::Div => Op::RDivC(self.val),
                    _ => unreachable!(),
                };
                Var {
                    tape: Some(t),
                    idx: t.unary(&rhs, unary, val, db),
                    val,
                }
            }
            (Some(t), Some(u)) => {
                debug_assert!(std::ptr::eq(t, u), "variables from different tapes");
                let idx = t.push(Node {
                    op,
                    a: self.idx,
                    b: rhs.idx,
                    da,
                    db,
                    val,
                });
                Var {
                    tape: Some(t),
                    idx,
                    val,
                }
            }
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Add, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Sub, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Mul, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.binary(rhs, Op::Div, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(Op::Neg, -self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, k: f64) -> Self {
        self.map(Op::AddC(k), self.val + k, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, k: f64) -> Self {
        self.map(Op::AddC(-k), self.val - k, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        self.map(Op::MulC(k), self.val * k, k)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, k: f64) -> Self {
        self.map(Op::DivC(k), self.val / k, 1.0 / k)
    }
}

impl<'t> Real for Var<'t> {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }

    fn value(self) -> f64 {
        self.val
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.map(Op::Tanh, t, 1.0 - t * t)
    }

    fn sin(self) -> Self {
        self.map(Op::Sin, self.val.sin(), self.val.cos())
    }

    fn cos(self) -> Self {
        self.map(Op::Cos, self.val.cos(), -self.val.sin())
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.map(Op::Exp, e, e)
    }

    fn ln(self) -> Self {
        self.map(Op::Ln, self.val.ln(), 1.0 / self.val)
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.map(Op::Sqrt, s, 0.5 / s)
    }

    fn powi(self, n: i32) -> Self {
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.val.powi(n - 1)
        };
        self.map(Op::Powi(n), self.val.powi(n), d)
    }

    fn abs(self) -> Self {
        if self.val == 0.0 {
            if let Some(t) = self.tape {
                t.kink.set(true);
            }
        }
        let sign = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.map(Op::Abs, self.val.abs(), sign)
    }

    fn floor(self) -> Self {
        if let Some(t) = self.tape {
            if t.unsupported.get().is_none() {
                t.unsupported.set(Some("floor"));
            }
        }
        self.map(Op::Unsupported("floor"), self.val.floor(), 0.0)
    }
}
