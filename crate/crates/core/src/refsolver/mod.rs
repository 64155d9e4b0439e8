//! Finite-difference reference solver for the coupled non-dimensional
//! Allen-Cahn / Cahn-Hilliard system.
//!
//! Nodes sit on a uniform grid that includes the domain boundary. Flux-free
//! boundaries use mirrored ghost nodes; Dirichlet nodes are held at their
//! target values. Each step is backward Euler in both fields, solved by
//! Newton's method on the interleaved unknowns `(c_k, φ_k)`; the linear
//! systems use ILU(0)-preconditioned BiCGSTAB. Step sizes follow an
//! adaptive rule: grow by 1.5 after an easy solve, halve after a failure.

mod linear;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

pub use linear::{bicgstab, Csr, Ilu0, LinearStats};

use crate::autodiff::Jet;
use crate::metrics::{uniform_axes, FieldSnapshot};
use crate::physics::{interp_h, interp_h_prime, residual_ac, residual_ch, BcKind, Face, NondimParams, Scenario};

#[derive(Debug, Error)]
pub enum RefSolverError {
    #[error("grid spacing {spacing} exceeds {limit} (a quarter interface thickness)")]
    GridTooCoarse { spacing: f64, limit: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid output times: {0}")]
    InvalidTimes(String),
    #[error("time step {dt} fell below {dt_min} at t = {time}")]
    TimeStepUnderflow { time: f64, dt: f64, dt_min: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform node grid, first axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<Vec<f64>>,
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self, RefSolverError> {
        if axes.is_empty() || axes.len() > 3 || axes.iter().any(Vec::is_empty) {
            return Err(RefSolverError::InvalidProblem("one to three non-empty axes required".into()));
        }
        let mut spacing = Vec::with_capacity(axes.len());
        for ax in &axes {
            if ax.len() < 2 {
                spacing.push(1.0);
                continue;
            }
            let h = (ax[ax.len() - 1] - ax[0]) / (ax.len() - 1) as f64;
            let uniform = h > 0.0 && ax.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
            if !uniform {
                return Err(RefSolverError::InvalidProblem("axes must be uniform and increasing".into()));
            }
            spacing.push(h);
        }
        let dims: Vec<usize> = axes.iter().map(Vec::len).collect();
        let mut strides = vec![1; dims.len()];
        for a in 1..dims.len() {
            strides[a] = strides[a - 1] * dims[a - 1];
        }
        Ok(Grid {
            axes,
            dims,
            spacing,
            strides,
        })
    }

    /// Grid over the scenario box with spacing close to `h`. The spacing
    /// must resolve the interface with at least four cells.
    pub fn for_scenario(scenario: &Scenario, h: f64) -> Result<Self, RefSolverError> {
        let grid = Grid::new(uniform_axes(scenario, h))?;
        let limit = scenario.ell_nd() / 4.0;
        let worst = grid.spacing.iter().cloned().fold(0.0, f64::max);
        if worst > limit * (1.0 + 1e-9) {
            return Err(RefSolverError::GridTooCoarse { spacing: worst, limit });
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| (k / self.strides[a]) % self.dims[a]).collect()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.axes[a][i])
            .collect()
    }

    /// Faces the node lies on.
    pub fn faces_of(&self, k: usize) -> Vec<Face> {
        let mi = self.multi_index(k);
        let mut out = Vec::new();
        for a in 0..self.dim() {
            if self.dims[a] < 2 {
                continue;
            }
            if mi[a] == 0 {
                out.push(Face::new(a, false));
            }
            if mi[a] + 1 == self.dims[a] {
                out.push(Face::new(a, true));
            }
        }
        out
    }

    /// Laplacian stencil at node `k` as merged `(node, weight)` pairs, with
    /// mirrored ghosts on the boundary.
    pub fn stencil(&self, k: usize) -> Vec<(usize, f64)> {
        let mi = self.multi_index(k);
        let mut st: Vec<(usize, f64)> = vec![(k, 0.0)];
        let mut add = |m: usize, w: f64| match st.iter_mut().find(|e| e.0 == m) {
            Some(e) => e.1 += w,
            None => st.push((m, w)),
        };
        for a in 0..self.dim() {
            let n = self.dims[a];
            if n < 2 {
                continue;
            }
            let w = 1.0 / (self.spacing[a] * self.spacing[a]);
            let i = mi[a];
            let lo = if i == 0 { 1 } else { i - 1 };
            let hi = if i + 1 == n { n - 2 } else { i + 1 };
            add(k - i * self.strides[a] + lo * self.strides[a], w);
            add(k - i * self.strides[a] + hi * self.strides[a], w);
            add(k, -2.0 * w);
        }
        st
    }

    /// Trapezoid quadrature weights (boundary nodes count half per axis).
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                self.multi_index(k)
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| {
                        if self.dims[a] < 2 {
                            1.0
                        } else if i == 0 || i + 1 == self.dims[a] {
                            0.5 * self.spacing[a]
                        } else {
                            self.spacing[a]
                        }
                    })
                    .product()
            })
            .collect()
    }

    pub fn integrate(&self, field: &[f64]) -> f64 {
        self.trapezoid_weights().iter().zip(field).map(|(w, v)| w * v).sum()
    }
}

/// Discrete Laplacian of `field` at `node`: the central second difference
/// summed over axes, with flux-free mirrored ghosts on the boundary.
pub fn fd_laplacian(field: &[f64], grid: &Grid, node: usize) -> f64 {
    grid.stencil(node).iter().map(|&(m, w)| w * field[m]).sum()
}

/// Role of a node in the discrete system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Free,
    Fixed { phi: f64, c: f64 },
}

/// A discrete initial-boundary value problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub nodes: Vec<Node>,
    pub phi0: Vec<f64>,
    pub c0: Vec<f64>,
    pub nondim: NondimParams,
}

impl Problem {
    pub fn new(
        grid: Grid,
        nodes: Vec<Node>,
        mut phi0: Vec<f64>,
        mut c0: Vec<f64>,
        nondim: NondimParams,
    ) -> Result<Self, RefSolverError> {
        let n = grid.len();
        if nodes.len() != n || phi0.len() != n || c0.len() != n {
            return Err(RefSolverError::InvalidProblem(format!("expected {n} values per array")));
        }
        for (k, node) in nodes.iter().enumerate() {
            if let Node::Fixed { phi, c } = *node {
                phi0[k] = phi;
                c0[k] = c;
            }
        }
        if phi0.iter().chain(&c0).any(|v| !v.is_finite()) {
            return Err(RefSolverError::InvalidProblem("non-finite initial value".into()));
        }
        Ok(Problem {
            grid,
            nodes,
            phi0,
            c0,
            nondim,
        })
    }

    /// Initial profiles and boundary roles of a scenario on spacing `h`.
    /// A node on several faces is fixed if any of them is Dirichlet there.
    pub fn from_scenario(scenario: &Scenario, h: f64) -> Result<Self, RefSolverError> {
        scenario
            .validate()
            .map_err(|e| RefSolverError::InvalidProblem(e.to_string()))?;
        let grid = Grid::for_scenario(scenario, h)?;
        let n = grid.len();
        let mut nodes = Vec::with_capacity(n);
        let mut phi0 = Vec::with_capacity(n);
        let mut c0 = Vec::with_capacity(n);
        for k in 0..n {
            let x = grid.coords(k);
            phi0.push(scenario.initial_phi_at(&x));
            c0.push(scenario.initial_c_at(&x));
            let fixed = grid.faces_of(k).into_iter().find_map(|f| match scenario.condition_at(f, &x) {
                BcKind::Dirichlet { phi, c } => Some(Node::Fixed { phi, c }),
                BcKind::Flux { .. } => None,
            });
            nodes.push(fixed.unwrap_or(Node::Free));
        }
        Problem::new(grid, nodes, phi0, c0, scenario.nondim())
    }

    pub fn initial_state(&self) -> State {
        State {
            time: 0.0,
            phi: self.phi0.clone(),
            c: self.c0.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub time: f64,
    pub phi: Vec<f64>,
    pub c: Vec<f64>,
}

impl State {
    pub fn snapshot(&self, grid: &Grid) -> FieldSnapshot {
        FieldSnapshot {
            time: self.time,
            axes: grid.axes.clone(),
            phi: self.phi.clone(),
            c: self.c.clone(),
        }
    }
}

/// Newton and linear-solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Convergence when the largest update magnitude drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub linear_rtol: f64,
    pub linear_max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 30,
            linear_rtol: 1e-10,
            linear_max_iter: 1000,
        }
    }
}

/// Why a step was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum Divergence {
    NonFinite,
    IterationCap,
    LinearSolve(f64),
    Injected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub newton_iterations: usize,
    pub linear_iterations: usize,
}

/// Residual and Jacobian assembly for a fixed problem.
pub struct Stepper<'p> {
    problem: &'p Problem,
    stencils: Vec<Vec<(usize, f64)>>,
    jac: Csr,
    /// Per node: positions of the stencil entries in the c row (c and φ
    /// columns), the φ row (φ columns), and the φ row's c-diagonal entry.
    slots: Vec<Slots>,
    pub options: NewtonOptions,
}

struct Slots {
    cc: Vec<usize>,
    cp: Vec<usize>,
    pp: Vec<usize>,
    pc: usize,
}

impl<'p> Stepper<'p> {
    pub fn new(problem: &'p Problem, options: NewtonOptions) -> Self {
        let g = &problem.grid;
        let n = g.len();
        let stencils: Vec<Vec<(usize, f64)>> = (0..n).map(|k| g.stencil(k)).collect();
        let mut rows = Vec::with_capacity(2 * n);
        for st in &stencils {
            rows.push(st.iter().flat_map(|&(m, _)| [2 * m, 2 * m + 1]).collect());
            let k = st[0].0;
            let mut r: Vec<usize> = st.iter().map(|&(m, _)| 2 * m + 1).collect();
            r.push(2 * k);
            rows.push(r);
        }
        let jac = Csr::from_pattern(&rows);
        let slots = stencils
            .iter()
            .enumerate()
            .map(|(k, st)| Slots {
                cc: st.iter().map(|&(m, _)| jac.find(2 * k, 2 * m).expect("pattern")).collect(),
                cp: st.iter().map(|&(m, _)| jac.find(2 * k, 2 * m + 1).expect("pattern")).collect(),
                pp: st.iter().map(|&(m, _)| jac.find(2 * k + 1, 2 * m + 1).expect("pattern")).collect(),
                pc: jac.find(2 * k + 1, 2 * k).expect("pattern"),
            })
            .collect();
        Stepper {
            problem,
            stencils,
            jac,
            slots,
            options,
        }
    }

    fn lap(&self, k: usize, f: &[f64]) -> f64 {
        self.stencils[k].iter().map(|&(m, w)| w * f[m]).sum()
    }

    /// Backward-Euler residuals of both equations at every node, interleaved.
    pub fn residual(&self, old: &State, c: &[f64], phi: &[f64], dt: f64) -> Vec<f64> {
        let p = &self.problem.nondim;
        let h: Vec<f64> = phi.iter().map(|&v| interp_h(v)).collect();
        let mut f = vec![0.0; 2 * c.len()];
        f.par_chunks_mut(2).enumerate().for_each(|(k, fk)| {
            if let Node::Fixed { .. } = self.problem.nodes[k] {
                return;
            }
            fk[0] = residual_ch((c[k] - old.c[k]) / dt, self.lap(k, c), self.lap(k, &h), p);
            fk[1] = residual_ac((phi[k] - old.phi[k]) / dt, phi[k], c[k], self.lap(k, phi), p);
        });
        f
    }

    fn assemble(&mut self, c: &[f64], phi: &[f64], old: &State, dt: f64) {
        let p = self.problem.nondim.clone();
        let dc = p.delta_c();
        self.jac.vals.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..c.len() {
            let s = &self.slots[k];
            if let Node::Fixed { .. } = self.problem.nodes[k] {
                self.jac.vals[s.cc[0]] = 1.0;
                self.jac.vals[s.pp[0]] = 1.0;
                continue;
            }
            // Local derivatives of the AC residual in (φ_k, c_k) from a jet.
            let jp = Jet::<f64, 2>::seed(phi[k], 0);
            let jc = Jet::<f64, 2>::seed(c[k], 1);
            let r = residual_ac((jp - old.phi[k]) / dt, jp, jc, Jet::constant(0.0), &p);
            for (e, &(m, w)) in self.stencils[k].iter().enumerate() {
                let diag = if m == k { 1.0 } else { 0.0 };
                self.jac.vals[s.cc[e]] += diag / dt - p.n_ch * w;
                self.jac.vals[s.cp[e]] += p.n_ch * dc * w * interp_h_prime(phi[m]);
                self.jac.vals[s.pp[e]] += diag * r.d[0] - p.n_ac3 * w;
            }
            self.jac.vals[s.pc] = r.d[1];
        }
    }

    /// One backward-Euler step of size `dt` from `old`.
    pub fn step(&mut self, old: &State, dt: f64) -> Result<(State, StepStats), Divergence> {
        let n = old.c.len();
        let mut c = old.c.clone();
        let mut phi = old.phi.clone();
        let mut linear_iterations = 0;
        for it in 0..self.options.max_iter {
            let f = self.residual(old, &c, &phi, dt);
            self.assemble(&c, &phi, old, dt);
            // Jacobi row scaling keeps the stiff AC rows comparable to CH rows.
            let mut rhs = f;
            for r in 0..2 * n {
                let d = self.jac.vals[self.jac.find(r, r).expect("diagonal")];
                let s = if d != 0.0 { 1.0 / d } else { 1.0 };
                for q in self.jac.row_ptr[r]..self.jac.row_ptr[r + 1] {
                    self.jac.vals[q] *= s;
                }
                rhs[r] = -rhs[r] * s;
            }
            let pre = Ilu0::new(&self.jac).ok_or(Divergence::NonFinite)?;
            let mut du = vec![0.0; 2 * n];
            let st = bicgstab(
                &self.jac,
                &pre,
                &rhs,
                &mut du,
                self.options.linear_rtol,
                self.options.linear_max_iter,
            );
            linear_iterations += st.iterations;
            if !st.converged && !(st.relative_residual < 1e-8) {
                return Err(Divergence::LinearSolve(st.relative_residual));
            }
            let mut big = 0.0f64;
            for k in 0..n {
                c[k] += du[2 * k];
                phi[k] += du[2 * k + 1];
                big = big.max(du[2 * k].abs()).max(du[2 * k + 1].abs());
            }
            if !big.is_finite() {
                return Err(Divergence::NonFinite);
            }
            if big < self.options.tol {
                return Ok((
                    State {
                        time: old.time + dt,
                        phi,
                        c,
                    },
                    StepStats {
                        newton_iterations: it + 1,
                        linear_iterations,
                    },
                ));
            }
        }
        Err(Divergence::IterationCap)
    }
}

/// Convenience wrapper around [`Stepper::step`] with default options.
pub fn step_coupled(problem: &Problem, state: &State, dt: f64) -> Result<(State, StepStats), Divergence> {
    Stepper::new(problem, NewtonOptions::default()).step(state, dt)
}

/// What the controller did with the step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtChange {
    Grow,
    Keep,
    Shrink,
}

/// Adaptive step size: ×1.5 after a solve with fewer than five Newton
/// iterations (unless that would pass `dt_max`), ÷2 after a failure.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeStepController {
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl TimeStepController {
    pub const GROWTH: f64 = 1.5;
    pub const SHRINK: f64 = 0.5;
    pub const ITERATION_THRESHOLD: usize = 5;

    pub fn new(dt: f64, dt_min: f64, dt_max: f64) -> Self {
        Self { dt, dt_min, dt_max }
    }

    pub fn on_converged(&mut self, iterations: usize) -> DtChange {
        if iterations < Self::ITERATION_THRESHOLD && self.dt * Self::GROWTH <= self.dt_max {
            self.dt *= Self::GROWTH;
            DtChange::Grow
        } else {
            DtChange::Keep
        }
    }

    /// Halves dt; fails when the result would fall below `dt_min`, leaving
    /// dt unchanged.
    pub fn on_diverged(&mut self, time: f64) -> Result<DtChange, RefSolverError> {
        let next = self.dt * Self::SHRINK;
        if next < self.dt_min {
            return Err(RefSolverError::TimeStepUnderflow {
                time,
                dt: next,
                dt_min: self.dt_min,
            });
        }
        self.dt = next;
        Ok(DtChange::Shrink)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptions {
    /// Target grid spacing.
    pub h: f64,
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton: NewtonOptions,
    /// 1-based attempt numbers forced to fail, for testing the controller.
    pub inject_divergence: Vec<usize>,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            h: 0.005,
            dt0: 1e-4,
            dt_min: 1e-8,
            dt_max: 1e-2,
            newton: NewtonOptions::default(),
            inject_divergence: Vec::new(),
        }
    }
}

/// One attempted step.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub attempt: usize,
    /// Time at the start of the attempt.
    pub time: f64,
    pub dt: f64,
    pub converged: bool,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub change: DtChange,
    pub next_dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub snapshots: Vec<FieldSnapshot>,
    pub log: Vec<LogEntry>,
}

impl ReferenceRun {
    /// The step size of every attempt, in order.
    pub fn dt_trace(&self) -> Vec<f64> {
        self.log.iter().map(|e| e.dt).collect()
    }

    pub fn log_text(&self) -> String {
        let mut s = String::from("attempt,time,dt,converged,newton_iterations,linear_iterations,change,next_dt\n");
        for e in &self.log {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{},{},{},{:?},{:?}",
                e.attempt, e.time, e.dt, e.converged, e.newton_iterations, e.linear_iterations, e.change, e.next_dt
            );
        }
        s
    }

    pub fn write_log(&self, path: &Path) -> Result<(), RefSolverError> {
        std::fs::write(path, self.log_text())?;
        Ok(())
    }
}

/// Solves a scenario on spacing `options.h` and returns snapshots at
/// `output_times`.
pub fn solve_reference(
    scenario: &Scenario,
    output_times: &[f64],
    options: &ReferenceOptions,
) -> Result<ReferenceRun, RefSolverError> {
    let problem = Problem::from_scenario(scenario, options.h)?;
    solve_problem(&problem, scenario.t_end, output_times, options)
}

/// Adaptive time loop. Snapshots at the requested times are linear
/// interpolations between the accepted steps that bracket them.
pub fn solve_problem(
    problem: &Problem,
    t_end: f64,
    output_times: &[f64],
    options: &ReferenceOptions,
) -> Result<ReferenceRun, RefSolverError> {
    let tol = 1e-12;
    if output_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(RefSolverError::InvalidTimes("output times must be sorted".into()));
    }
    if output_times.iter().any(|&t| !(t >= -tol && t <= t_end + tol)) {
        return Err(RefSolverError::InvalidTimes(format!("output times must lie in [0, {t_end}]")));
    }
    if !(options.dt0 > 0.0 && options.dt0 >= options.dt_min) {
        return Err(RefSolverError::InvalidProblem("dt0 must be positive and at least dt_min".into()));
    }
    let grid = &problem.grid;
    let mut stepper = Stepper::new(problem, options.newton);
    let mut ctl = TimeStepController::new(options.dt0, options.dt_min, options.dt_max);
    let mut prev = problem.initial_state();
    let mut cur = prev.clone();
    let mut snapshots = Vec::with_capacity(output_times.len());
    let mut log = Vec::new();
    let mut next = 0;
    let mut attempt = 0;
    loop {
        while next < output_times.len() && output_times[next] <= cur.time + tol {
            let t = output_times[next];
            let snap = if cur.time == prev.time {
                let mut s = cur.snapshot(grid);
                s.time = t;
                s
            } else {
                FieldSnapshot::lerp(&prev.snapshot(grid), &cur.snapshot(grid), t)
            };
            snapshots.push(snap);
            next += 1;
        }
        if next == output_times.len() {
            break;
        }
        attempt += 1;
        let dt = ctl.dt;
        let result = if options.inject_divergence.contains(&attempt) {
            Err(Divergence::Injected)
        } else {
            stepper.step(&cur, dt)
        };
        match result {
            Ok((state, stats)) => {
                let change = ctl.on_converged(stats.newton_iterations);
                log.push(LogEntry {
                    attempt,
                    time: cur.time,
                    dt,
                    converged: true,
                    newton_iterations: stats.newton_iterations,
                    linear_iterations: stats.linear_iterations,
                    change,
                    next_dt: ctl.dt,
                });
                prev = std::mem::replace(&mut cur, state);
            }
            Err(_) => {
                let change = ctl.on_diverged(cur.time)?;
                log.push(LogEntry {
                    attempt,
                    time: cur.time,
                    dt,
                    converged: false,
                    newton_iterations: 0,
                    linear_iterations: 0,
                    change,
                    next_dt: ctl.dt,
                });
            }
        }
    }
    Ok(ReferenceRun { snapshots, log })
}
