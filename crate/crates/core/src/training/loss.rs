//! Loss terms and their parameter gradients.
//!
//! Points are processed in fixed-size chunks. For each chunk the backbone
//! runs once through [`batched::forward`]; the output head, the residuals
//! and the squared errors are then recorded per point on a small tape over
//! jet-valued raw outputs, which yields adjoints for every raw output
//! channel. A single reverse pass through the backbone per loss term turns
//! those into parameter gradients. Chunk results are summed in chunk order,
//! so the result does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::autodiff::{Jet, Real, Tape, Var};
use crate::network::{batched, NetworkParams};
use crate::physics::{interp_h, residual_ac, residual_ch, BcKind, NondimParams};
use crate::sampling::CollocationSet;

use super::TrainError;

/// Loss term indices.
pub const AC: usize = 0;
pub const CH: usize = 1;
pub const BC: usize = 2;
pub const IC: usize = 3;
pub const TERM_NAMES: [&str; 4] = ["ac", "ch", "bc", "ic"];

/// Maximum number of seeded directions (three space axes and time).
const MAX_DIRS: usize = 4;
type J<'t> = Jet<Var<'t>, MAX_DIRS>;

/// Loss values (always all four) and the requested gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct TermEval {
    pub loss: [f64; 4],
    pub grad: [Option<Vec<f64>>; 4],
}

#[derive(Clone, Copy)]
enum Set {
    General,
    Boundary,
    Initial,
}

struct Task {
    set: Set,
    start: usize,
    end: usize,
}

struct ChunkOut {
    loss: [f64; 4],
    grad: [Option<Vec<f64>>; 4],
}

/// Raw-output jets of point `i` as tape leaves, plus the leaf index of each
/// `(output, channel)` pair.
fn leaf_jets<'t>(tape: &'t Tape, f: &batched::Forward, i: usize) -> ([J<'t>; 2], Vec<(usize, usize, usize)>) {
    let nd = f.dirs();
    let mut leaves = Vec::with_capacity(2 * (1 + 2 * nd));
    let mut mk = |o: usize| {
        let v = tape.var(f.raw(o, 0, i));
        leaves.push((o, 0, v.index().expect("leaf")));
        let mut j = J::constant(v);
        for k in 0..nd {
            let d = tape.var(f.raw(o, 1 + k, i));
            leaves.push((o, 1 + k, d.index().expect("leaf")));
            j.d[k] = d;
        }
        for k in 0..nd {
            let dd = tape.var(f.raw(o, 1 + nd + k, i));
            leaves.push((o, 1 + nd + k, dd.index().expect("leaf")));
            j.dd[k] = dd;
        }
        j
    };
    let a = mk(0);
    let b = mk(1);
    ([a, b], leaves)
}

fn scatter(adj: &[f64], leaves: &[(usize, usize, usize)], f: &batched::Forward, i: usize, scale: f64, dst: &mut [f64]) {
    for &(o, ch, leaf) in leaves {
        dst[f.index(o, ch, i)] += scale * adj[leaf];
    }
}

fn process(
    params: &NetworkParams,
    colloc: &CollocationSet,
    nondim: &NondimParams,
    task: &Task,
    counts: [usize; 3],
    want: [bool; 4],
) -> ChunkOut {
    let d = params.config.dim;
    let stride = d + 1;
    let n = task.end - task.start;
    let mut coords = Vec::with_capacity(n * stride);
    let dirs: Vec<usize> = match task.set {
        Set::General => {
            for p in &colloc.general[task.start..task.end] {
                coords.extend_from_slice(p);
            }
            (0..=d).collect()
        }
        Set::Boundary => {
            for p in &colloc.boundary[task.start..task.end] {
                coords.extend_from_slice(&p.coords);
            }
            (0..d).collect()
        }
        Set::Initial => {
            for p in &colloc.initial[task.start..task.end] {
                coords.extend_from_slice(&p.x);
                coords.push(0.0);
            }
            Vec::new()
        }
    };
    let f = batched::forward(params, &coords, &dirs);
    let mut loss = [0.0; 4];
    let terms: &[usize] = match task.set {
        Set::General => &[AC, CH],
        Set::Boundary => &[BC],
        Set::Initial => &[IC],
    };
    let mut adj_bufs: [Option<Vec<f64>>; 4] = Default::default();
    for &t in terms {
        if want[t] {
            adj_bufs[t] = Some(vec![0.0; f.out.len()]);
        }
    }
    let mut tape = Tape::with_capacity(2048);
    for i in 0..n {
        tape.clear();
        let (raw, leaves) = leaf_jets(&tape, &f, i);
        let out = params.head_output(raw);
        let mut push = |term: usize, value: Var<'_>, count: usize, tape: &Tape| {
            // `value` is a per-point squared error; the loss is its mean.
            loss[term] += value.value() / count as f64;
            if let Some(buf) = adj_bufs[term].as_mut() {
                let adj = tape.adjoints(value).expect("registered primitives only");
                scatter(&adj, &leaves, &f, i, 1.0 / count as f64, buf);
            }
        };
        match task.set {
            Set::General => {
                let phi_t = out.phi.d[d];
                let c_t = out.c.d[d];
                let lap_phi = out.phi.laplacian(d);
                let lap_c = out.c.laplacian(d);
                let lap_h = interp_h(out.phi).laplacian(d);
                let r_ac = residual_ac(phi_t, out.phi.v, out.c.v, lap_phi, nondim);
                let r_ch = residual_ch(c_t, lap_c, lap_h, nondim);
                push(AC, r_ac * r_ac, counts[0], &tape);
                push(CH, r_ch * r_ch, counts[0], &tape);
            }
            Set::Boundary => {
                let bp = &colloc.boundary[task.start + i];
                let e = match bp.condition {
                    BcKind::Dirichlet { phi, c } => {
                        let ep = out.phi.v - phi;
                        let ec = out.c.v - c;
                        (ep * ep + ec * ec) * 0.5
                    }
                    BcKind::Flux { axis } => {
                        let gp = out.phi.d[axis];
                        let gc = out.c.d[axis];
                        (gp * gp + gc * gc) * 0.5
                    }
                };
                push(BC, e, counts[1], &tape);
            }
            Set::Initial => {
                let ip = &colloc.initial[task.start + i];
                let ep = out.phi.v - ip.phi;
                let ec = out.c.v - ip.c;
                push(IC, (ep * ep + ec * ec) * 0.5, counts[2], &tape);
            }
        }
    }
    let mut grad: [Option<Vec<f64>>; 4] = Default::default();
    for t in 0..4 {
        if let Some(buf) = &adj_bufs[t] {
            let mut g = vec![0.0; params.num_params()];
            f.backward(params, buf, &mut g);
            grad[t] = Some(g);
        }
    }
    ChunkOut { loss, grad }
}

/// Evaluates all four loss terms and the gradients flagged in `want_grad`.
///
/// AC and CH are mean squared residuals over the general points. BC is the
/// mean over boundary points of the squared error averaged over φ and c
/// (value error on Dirichlet points, normal derivative on flux points). IC
/// is the same for initial points against the equilibrium profile.
pub fn evaluate_terms(
    params: &NetworkParams,
    colloc: &CollocationSet,
    nondim: &NondimParams,
    want_grad: [bool; 4],
    chunk: usize,
) -> Result<TermEval, TrainError> {
    if colloc.general.is_empty() || colloc.boundary.is_empty() || colloc.initial.is_empty() {
        return Err(TrainError::EmptySet);
    }
    if params.config.dim + 1 > MAX_DIRS {
        return Err(TrainError::InvalidConfig("at most three spatial dimensions".into()));
    }
    let chunk = chunk.max(1);
    let counts = [colloc.general.len(), colloc.boundary.len(), colloc.initial.len()];
    let mut tasks = Vec::new();
    for (set, n) in [(Set::General, counts[0]), (Set::Boundary, counts[1]), (Set::Initial, counts[2])] {
        let mut s = 0;
        while s < n {
            let e = (s + chunk).min(n);
            tasks.push(Task { set, start: s, end: e });
            s = e;
        }
    }
    let mut loss = [0.0; 4];
    let mut grad: [Option<Vec<f64>>; 4] = Default::default();
    for t in 0..4 {
        if want_grad[t] {
            grad[t] = Some(vec![0.0; params.num_params()]);
        }
    }
    // Bounded groups keep peak memory flat; order inside and across groups is fixed.
    let group = 2 * rayon::current_num_threads().max(1);
    for block in tasks.chunks(group) {
        let outs: Vec<ChunkOut> = block
            .par_iter()
            .map(|task| process(params, colloc, nondim, task, counts, want_grad))
            .collect();
        for out in outs {
            for t in 0..4 {
                loss[t] += out.loss[t];
                if let (Some(acc), Some(g)) = (grad[t].as_mut(), out.grad[t].as_ref()) {
                    for (a, b) in acc.iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
        }
    }
    Ok(TermEval { loss, grad })
}

/// Reference evaluation of the same losses on one tape, point by point,
/// through the generic network path. Slow; used to validate the batched
/// path and for single-loss ablation checks. Returns the loss values and the
/// gradient of `Σ weights[j]·L_j`.
pub fn reference_weighted_loss(
    params: &NetworkParams,
    colloc: &CollocationSet,
    nondim: &NondimParams,
    weights: [f64; 4],
) -> Result<([f64; 4], Vec<f64>), TrainError> {
    let d = params.config.dim;
    let tape = Tape::new();
    let th = tape.vars(&params.theta);
    let theta: Vec<J<'_>> = th.iter().map(|&w| J::constant(w)).collect();
    let eval = |coords: &[f64], dirs: &[usize]| -> Result<_, TrainError> {
        let x: Vec<J<'_>> = coords
            .iter()
            .enumerate()
            .map(|(a, &v)| match dirs.iter().position(|&q| q == a) {
                Some(j) => J::seed(Var::constant(v), j),
                None => J::constant(Var::constant(v)),
            })
            .collect();
        let z = params.input_features(&x)?;
        Ok(params.head_output(params.backbone(&theta, &z)?))
    };
    let mut parts = [Var::constant(0.0); 4];
    let all: Vec<usize> = (0..=d).collect();
    let ng = colloc.general.len() as f64;
    for p in &colloc.general {
        let out = eval(p, &all)?;
        let r_ac = residual_ac(out.phi.d[d], out.phi.v, out.c.v, out.phi.laplacian(d), nondim);
        let r_ch = residual_ch(out.c.d[d], out.c.laplacian(d), interp_h(out.phi).laplacian(d), nondim);
        parts[AC] = parts[AC] + r_ac * r_ac / ng;
        parts[CH] = parts[CH] + r_ch * r_ch / ng;
    }
    let spatial: Vec<usize> = (0..d).collect();
    let nb = colloc.boundary.len() as f64;
    for b in &colloc.boundary {
        let out = eval(&b.coords, &spatial)?;
        let e = match b.condition {
            BcKind::Dirichlet { phi, c } => ((out.phi.v - phi).sq() + (out.c.v - c).sq()) * 0.5,
            BcKind::Flux { axis } => (out.phi.d[axis].sq() + out.c.d[axis].sq()) * 0.5,
        };
        parts[BC] = parts[BC] + e / nb;
    }
    let ni = colloc.initial.len() as f64;
    for ip in &colloc.initial {
        let mut x = ip.x.clone();
        x.push(0.0);
        let out = eval(&x, &[])?;
        let e = ((out.phi.v - ip.phi).sq() + (out.c.v - ip.c).sq()) * 0.5;
        parts[IC] = parts[IC] + e / ni;
    }
    let mut total = Var::constant(0.0);
    for t in 0..4 {
        total = total + parts[t] * weights[t];
    }
    let adj = tape.adjoints(total).map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    let grad = th.iter().map(|v| adj[v.index().expect("leaf")]).collect();
    Ok((parts.map(|p| p.value()), grad))
}
