//! Shared oracles for the integration tests.
#![allow(dead_code)]

use pitpinn::autodiff::{input_jet, Jet, Real, ScalarFn, Tape};
use pitpinn::network::{batched, HardConstraintHead};
use pitpinn::{NetworkConfig, NetworkParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative error with a small absolute floor, so that derivatives that
/// vanish up to rounding do not blow up the ratio.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Worst errors found by [`check_random_network`].
#[derive(Debug, Default, Clone, Copy)]
pub struct GradErrors {
    pub params: f64,
    pub batched_params: f64,
    pub first: f64,
    pub second: f64,
}

impl GradErrors {
    pub fn max(self, o: GradErrors) -> GradErrors {
        GradErrors {
            params: self.params.max(o.params),
            batched_params: self.batched_params.max(o.batched_params),
            first: self.first.max(o.first),
            second: self.second.max(o.second),
        }
    }
}

pub fn random_small_network(seed: u64) -> (NetworkParams, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = NetworkConfig {
        dim: rng.random_range(1..=3),
        m_f: rng.random_range(1..=4),
        width: rng.random_range(2..=16),
        depth: rng.random_range(1..=3),
        fourier: rng.random_bool(0.7),
        modified_mlp: rng.random_bool(0.7),
        hard_constraints: rng.random_bool(0.8),
        ..NetworkConfig::default()
    };
    let p = NetworkParams::init(seed, cfg, HardConstraintHead::default()).unwrap();
    let x: Vec<f64> = (0..=cfg.dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    (p, x)
}

/// `φ + c + ∂²φ/∂x₀²` as a function of the parameters at a fixed point.
struct Objective<'a> {
    net: &'a NetworkParams,
    x: &'a [f64],
}

impl ScalarFn for Objective<'_> {
    fn eval<T: Real>(&self, theta: &[T]) -> T {
        let th: Vec<Jet<T, 1>> = theta.iter().map(|&w| Jet::constant(w)).collect();
        let xs: Vec<Jet<T, 1>> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == 0 { Jet::seed(T::cst(v), 0) } else { Jet::constant(T::cst(v)) })
            .collect();
        let o = self.net.forward_with(&th, &xs).unwrap();
        o.phi.v + o.c.v + o.phi.dd[0]
    }
}

struct Output<'a> {
    net: &'a NetworkParams,
    which: usize,
}

impl ScalarFn for Output<'_> {
    fn eval<T: Real>(&self, x: &[T]) -> T {
        let o = self.net.forward(x).unwrap();
        if self.which == 0 {
            o.phi
        } else {
            o.c
        }
    }
}

/// Compares reverse-mode, batched and jet derivatives of a random small
/// network with central finite differences.
pub fn check_random_network(seed: u64) -> GradErrors {
    let (net, x) = random_small_network(seed);
    let mut err = GradErrors::default();
    let floor = 1e-6;

    // Reverse mode through nested jets.
    let obj = Objective { net: &net, x: &x };
    let tape = Tape::new();
    let vars = tape.vars(&net.theta);
    let out = obj.eval(&vars);
    let grad = tape.adjoints(out).unwrap();
    let mut th = net.theta.clone();
    let h = 1e-5;
    for k in 0..th.len() {
        let w = th[k];
        th[k] = w + h;
        let fp = obj.eval(&th);
        th[k] = w - h;
        let fm = obj.eval(&th);
        th[k] = w;
        err.params = err.params.max(rel(grad[k], (fp - fm) / (2.0 * h), floor));
    }

    // Batched jets with a random adjoint on every output channel.
    let dirs: Vec<usize> = (0..x.len()).collect();
    let fwd = batched::forward(&net, &x, &dirs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let adj: Vec<f64> = (0..fwd.out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut g = vec![0.0; net.num_params()];
    fwd.backward(&net, &adj, &mut g);
    let dot = |p: &NetworkParams| -> f64 {
        let f = batched::forward(p, &x, &dirs);
        f.out.iter().zip(&adj).map(|(a, b)| a * b).sum()
    };
    let mut q = net.clone();
    for k in 0..q.theta.len() {
        let w = q.theta[k];
        q.theta[k] = w + h;
        let fp = dot(&q);
        q.theta[k] = w - h;
        let fm = dot(&q);
        q.theta[k] = w;
        err.batched_params = err.batched_params.max(rel(g[k], (fp - fm) / (2.0 * h), floor));
    }

    // Input derivatives of both emitted fields along every coordinate.
    for which in 0..2 {
        let f = Output { net: &net, which };
        for axis in 0..x.len() {
            let (v, d1, d2) = input_jet(&f, &x, axis).unwrap();
            let at = |dx: f64| {
                let mut y = x.clone();
                y[axis] += dx;
                f.eval(&y)
            };
            let h1 = 1e-5;
            let fd1 = (at(h1) - at(-h1)) / (2.0 * h1);
            let h2 = 1e-3;
            let fd2 = (at(h2) - 2.0 * v + at(-h2)) / (h2 * h2);
            err.first = err.first.max(rel(d1, fd1, floor));
            err.second = err.second.max(rel(d2, fd2, 1e-4));
        }
    }
    err
}
