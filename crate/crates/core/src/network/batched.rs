//! Batched jet evaluation of the backbone with a hand-written reverse pass.
//!
//! A batch of `P` points is propagated together with `nd` seeded input
//! directions. Every activation is stored channel-major as a
//! `rows × (K·P)` matrix with `K = 1 + 2·nd`: channel 0 holds values,
//! channels `1..=nd` first derivatives and `nd+1..=2nd` pure second
//! derivatives. Affine maps act identically on all channels (the bias only
//! on the value channel), so each layer is a single GEMM.
//!
//! [`Forward::backward`] takes adjoints for every channel of the two raw
//! outputs and accumulates the parameter gradient.

use super::{Affine, NetworkParams};

/// `C = A·B + beta·C` with `A: m×k`, `B: k×n`, all row-major.
fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths cover the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, beta, c.as_mut_ptr(), n as isize,
            1,
        );
    }
}

/// `C += A·Bᵀ` with `A: m×k`, `B: n×k`.
fn gemm_nt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: as above; B is read transposed through its strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, 1.0, c.as_mut_ptr(), n as isize,
            1,
        );
    }
}

/// `C = Aᵀ·B` with `A: k×m`, `B: k×n`.
fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: as above; A is read transposed through its strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, 0.0, c.as_mut_ptr(), n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    p: usize,
    nd: usize,
}

impl Shape {
    fn k(&self) -> usize {
        1 + 2 * self.nd
    }
    fn cols(&self) -> usize {
        self.k() * self.p
    }
}

fn affine_forward(theta: &[f64], a: &Affine, x: &[f64], sh: Shape) -> Vec<f64> {
    let cols = sh.cols();
    let mut y = vec![0.0; a.out * cols];
    gemm_nn(a.out, a.inp, cols, &theta[a.w..a.b], x, 0.0, &mut y);
    for o in 0..a.out {
        let b = theta[a.b + o];
        for v in &mut y[o * cols..o * cols + sh.p] {
            *v += b;
        }
    }
    y
}

/// Accumulates weight and bias gradients of `y = W x + b` given `ybar`;
/// optionally returns `xbar`.
fn affine_backward(
    theta: &[f64],
    a: &Affine,
    x: &[f64],
    ybar: &[f64],
    sh: Shape,
    grad: &mut [f64],
    want_x: bool,
) -> Option<Vec<f64>> {
    let cols = sh.cols();
    gemm_nt_acc(a.out, cols, a.inp, ybar, x, &mut grad[a.w..a.b]);
    for o in 0..a.out {
        grad[a.b + o] += ybar[o * cols..o * cols + sh.p].iter().sum::<f64>();
    }
    want_x.then(|| {
        let mut xbar = vec![0.0; a.inp * cols];
        gemm_tn(a.inp, a.out, cols, &theta[a.w..a.b], ybar, &mut xbar);
        xbar
    })
}

fn tanh_forward(y: &[f64], rows: usize, sh: Shape) -> Vec<f64> {
    let (p, nd, cols) = (sh.p, sh.nd, sh.cols());
    let mut a = vec![0.0; y.len()];
    for r in 0..rows {
        let yr = &y[r * cols..(r + 1) * cols];
        let ar = &mut a[r * cols..(r + 1) * cols];
        for i in 0..p {
            let t = yr[i].tanh();
            let s = 1.0 - t * t;
            ar[i] = t;
            for j in 0..nd {
                let d = yr[(1 + j) * p + i];
                let dd = yr[(1 + nd + j) * p + i];
                ar[(1 + j) * p + i] = s * d;
                ar[(1 + nd + j) * p + i] = s * dd - 2.0 * t * s * d * d;
            }
        }
    }
    a
}

/// Reverse of [`tanh_forward`]; `a` supplies the stored `tanh` values.
fn tanh_backward(y: &[f64], a: &[f64], abar: &[f64], rows: usize, sh: Shape) -> Vec<f64> {
    let (p, nd, cols) = (sh.p, sh.nd, sh.cols());
    let mut ybar = vec![0.0; y.len()];
    for r in 0..rows {
        let o = r * cols;
        for i in 0..p {
            let t = a[o + i];
            let s = 1.0 - t * t;
            let ts = t * s;
            let dts = s * (s - 2.0 * t * t);
            let mut gv = abar[o + i] * s;
            for j in 0..nd {
                let id = o + (1 + j) * p + i;
                let idd = o + (1 + nd + j) * p + i;
                let (d, dd) = (y[id], y[idd]);
                let (bd, bdd) = (abar[id], abar[idd]);
                gv += -2.0 * ts * (bd * d + bdd * dd) - 2.0 * d * d * dts * bdd;
                ybar[id] = bd * s - 4.0 * ts * d * bdd;
                ybar[idd] = bdd * s;
            }
            ybar[o + i] = gv;
        }
    }
    ybar
}

/// `z = v + a ⊙ (u − v)` on jets.
fn gate_forward(a: &[f64], u: &[f64], v: &[f64], rows: usize, sh: Shape) -> Vec<f64> {
    let (p, nd, cols) = (sh.p, sh.nd, sh.cols());
    let mut z = vec![0.0; a.len()];
    for r in 0..rows {
        let o = r * cols;
        for i in 0..p {
            let av = a[o + i];
            let dv = u[o + i] - v[o + i];
            z[o + i] = v[o + i] + av * dv;
            for j in 0..nd {
                let id = o + (1 + j) * p + i;
                let idd = o + (1 + nd + j) * p + i;
                let dd_ = u[id] - v[id];
                let ddd = u[idd] - v[idd];
                z[id] = v[id] + a[id] * dv + av * dd_;
                z[idd] = v[idd] + a[idd] * dv + 2.0 * a[id] * dd_ + av * ddd;
            }
        }
    }
    z
}

/// Reverse of [`gate_forward`]: returns `abar` and accumulates into `ubar`, `vbar`.
#[allow(clippy::too_many_arguments)]
fn gate_backward(
    a: &[f64],
    u: &[f64],
    v: &[f64],
    zbar: &[f64],
    ubar: &mut [f64],
    vbar: &mut [f64],
    rows: usize,
    sh: Shape,
) -> Vec<f64> {
    let (p, nd, cols) = (sh.p, sh.nd, sh.cols());
    let mut abar = vec![0.0; a.len()];
    for r in 0..rows {
        let o = r * cols;
        for i in 0..p {
            let av = a[o + i];
            let dv = u[o + i] - v[o + i];
            let pv = zbar[o + i];
            let mut ga = pv * dv;
            let mut gd = pv * av;
            for j in 0..nd {
                let id = o + (1 + j) * p + i;
                let idd = o + (1 + nd + j) * p + i;
                let d1 = u[id] - v[id];
                let d2 = u[idd] - v[idd];
                let (pd, pdd) = (zbar[id], zbar[idd]);
                ga += pd * d1 + pdd * d2;
                gd += pd * a[id] + pdd * a[idd];
                abar[id] = pd * dv + 2.0 * pdd * d1;
                abar[idd] = pdd * dv;
                let gdd = pd * av + 2.0 * pdd * a[id];
                let gddd = pdd * av;
                ubar[id] += gdd;
                vbar[id] += pd - gdd;
                ubar[idd] += gddd;
                vbar[idd] += pdd - gddd;
            }
            abar[o + i] = ga;
            ubar[o + i] += gd;
            vbar[o + i] += pv - gd;
        }
    }
    abar
}

/// First-layer features with their input derivatives.
fn input_jets(params: &NetworkParams, coords: &[f64], dirs: &[usize], sh: Shape) -> Vec<f64> {
    let cfg = &params.config;
    let d = cfg.dim;
    let stride = d + 1;
    let (p, nd, cols) = (sh.p, sh.nd, sh.cols());
    let rows = cfg.input_width();
    let mut x = vec![0.0; rows * cols];
    if !cfg.fourier {
        for r in 0..rows {
            for i in 0..p {
                x[r * cols + i] = coords[i * stride + r];
            }
            for (j, &q) in dirs.iter().enumerate() {
                if q == r {
                    x[r * cols + (1 + j) * p..r * cols + (2 + j) * p].fill(1.0);
                }
            }
        }
        return x;
    }
    let emb = &params.embedding;
    let m = emb.m_f;
    for f in 0..m {
        let bx = &emb.b_x[f * d..(f + 1) * d];
        let bt = emb.b_t[f];
        let (rc, rs, rtc, rts) = (f * cols, (m + f) * cols, (2 * m + f) * cols, (3 * m + f) * cols);
        for i in 0..p {
            let xi = &coords[i * stride..(i + 1) * stride];
            let mut arg = 0.0;
            for a in 0..d {
                arg += bx[a] * xi[a];
            }
            let (s, c) = arg.sin_cos();
            let (st, ct) = (xi[d] * bt).sin_cos();
            x[rc + i] = c;
            x[rs + i] = s;
            x[rtc + i] = ct;
            x[rts + i] = st;
            for (j, &q) in dirs.iter().enumerate() {
                let (id, idd) = ((1 + j) * p + i, (1 + nd + j) * p + i);
                if q < d {
                    let b = bx[q];
                    x[rc + id] = -s * b;
                    x[rc + idd] = -c * b * b;
                    x[rs + id] = c * b;
                    x[rs + idd] = -s * b * b;
                } else {
                    x[rtc + id] = -st * bt;
                    x[rtc + idd] = -ct * bt * bt;
                    x[rts + id] = ct * bt;
                    x[rts + idd] = -st * bt * bt;
                }
            }
        }
    }
    x
}

struct Layer {
    y: Vec<f64>,
    a: Vec<f64>,
    /// Gated output; empty for the plain MLP, where it equals `a`.
    z: Vec<f64>,
}

/// Result of a batched jet forward pass, retaining what the reverse pass needs.
pub struct Forward {
    sh: Shape,
    x0: Vec<f64>,
    gates: Option<(Layer, Layer)>,
    layers: Vec<Layer>,
    /// Raw outputs, `2 × K·P`, row 0 = ĉ_L and row 1 = φ̂.
    pub out: Vec<f64>,
}

impl Forward {
    pub fn points(&self) -> usize {
        self.sh.p
    }

    pub fn dirs(&self) -> usize {
        self.sh.nd
    }

    /// Raw output `o` (0 = ĉ_L, 1 = φ̂), channel `ch`, point `i`.
    #[inline]
    pub fn raw(&self, o: usize, ch: usize, i: usize) -> f64 {
        self.out[o * self.sh.cols() + ch * self.sh.p + i]
    }

    /// Index into an output-adjoint buffer laid out like `out`.
    #[inline]
    pub fn index(&self, o: usize, ch: usize, i: usize) -> usize {
        o * self.sh.cols() + ch * self.sh.p + i
    }

    fn layer_output(&self, l: usize) -> &[f64] {
        let layer = &self.layers[l];
        if self.gates.is_some() {
            &layer.z
        } else {
            &layer.a
        }
    }

    /// Accumulates `∂(Σ out_adj · out)/∂θ` into `grad`.
    pub fn backward(&self, params: &NetworkParams, out_adj: &[f64], grad: &mut [f64]) {
        let sh = self.sh;
        let theta = &params.theta;
        let lay = &params.layout;
        let w = params.config.width;
        let depth = self.layers.len();
        let mut zbar = affine_backward(theta, &lay.output, self.layer_output(depth - 1), out_adj, sh, grad, true)
            .expect("requested");
        let mut gate_bars = self.gates.as_ref().map(|_| (vec![0.0; w * sh.cols()], vec![0.0; w * sh.cols()]));
        for l in (0..depth).rev() {
            let layer = &self.layers[l];
            let abar = match (&self.gates, &mut gate_bars) {
                (Some((u, v)), Some((ub, vb))) => gate_backward(&layer.a, &u.a, &v.a, &zbar, ub, vb, w, sh),
                _ => zbar,
            };
            let ybar = tanh_backward(&layer.y, &layer.a, &abar, w, sh);
            let input = if l == 0 { &self.x0 } else { self.layer_output(l - 1) };
            zbar = affine_backward(theta, &lay.hidden[l], input, &ybar, sh, grad, l > 0).unwrap_or_default();
        }
        if let (Some((u, v)), Some((ub, vb)), Some(au), Some(av)) = (&self.gates, &gate_bars, lay.gate_u, lay.gate_v) {
            let yb = tanh_backward(&u.y, &u.a, ub, w, sh);
            affine_backward(theta, &au, &self.x0, &yb, sh, grad, false);
            let yb = tanh_backward(&v.y, &v.a, vb, w, sh);
            affine_backward(theta, &av, &self.x0, &yb, sh, grad, false);
        }
    }
}

/// Propagates a batch of points with `dirs` seeded coordinate directions.
///
/// `coords` holds `P` points of `dim + 1` values (x…, t); each entry of
/// `dirs` is a coordinate index whose first and second derivatives are
/// carried.
pub fn forward(params: &NetworkParams, coords: &[f64], dirs: &[usize]) -> Forward {
    let stride = params.config.dim + 1;
    assert_eq!(coords.len() % stride, 0, "coordinate buffer is not a whole number of points");
    let sh = Shape {
        p: coords.len() / stride,
        nd: dirs.len(),
    };
    let theta = &params.theta;
    let lay = &params.layout;
    let w = params.config.width;
    let x0 = input_jets(params, coords, dirs, sh);
    let gates = match (lay.gate_u, lay.gate_v) {
        (Some(au), Some(av)) => {
            let mk = |a: &Affine| {
                let y = affine_forward(theta, a, &x0, sh);
                let a = tanh_forward(&y, w, sh);
                Layer { y, a, z: Vec::new() }
            };
            Some((mk(&au), mk(&av)))
        }
        _ => None,
    };
    let mut layers: Vec<Layer> = Vec::with_capacity(lay.hidden.len());
    for (l, aff) in lay.hidden.iter().enumerate() {
        let input = match layers.last() {
            None => &x0,
            Some(prev) if gates.is_some() => &prev.z,
            Some(prev) => &prev.a,
        };
        let y = affine_forward(theta, aff, input, sh);
        let a = tanh_forward(&y, w, sh);
        let z = match &gates {
            Some((u, v)) => gate_forward(&a, &u.a, &v.a, w, sh),
            None => Vec::new(),
        };
        debug_assert_eq!(l, layers.len());
        layers.push(Layer { y, a, z });
    }
    let last = layers.last().expect("depth >= 1");
    let top = if gates.is_some() { &last.z } else { &last.a };
    let out = affine_forward(theta, &lay.output, top, sh);
    Forward {
        sh,
        x0,
        gates,
        layers,
        out,
    }
}

/// Plain `(φ, c)` at many points, in chunks.
pub fn eval_points(params: &NetworkParams, coords: &[f64]) -> Vec<(f64, f64)> {
    let stride = params.config.dim + 1;
    let chunk = 512 * stride;
    let mut res = Vec::with_capacity(coords.len() / stride);
    for block in coords.chunks(chunk) {
        let f = forward(params, block, &[]);
        for i in 0..f.points() {
            let o = params.head_output([f.raw(0, 0, i), f.raw(1, 0, i)]);
            res.push((o.phi, o.c));
        }
    }
    res
}
