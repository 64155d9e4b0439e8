use pitpinn::physics::{initial_c, initial_phi, PhysicalParams, DEFAULT_L_C};
use pitpinn::refsolver::{
    fd_laplacian, solve_problem, solve_reference, Grid, NewtonOptions, Node, Problem, RefSolverError, ReferenceOptions,
    State, Stepper, TimeStepController,
};
use pitpinn::{NondimParams, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// 1D bar on [0, 1] with liquid left of `x0`.
fn bar(n: usize, x0: f64, left_liquid_dirichlet: bool) -> Problem {
    let grid = Grid::new(vec![axis(0.0, 1.0, n)]).unwrap();
    let p = PhysicalParams::default();
    let phi: Vec<f64> = grid.axes[0].iter().map(|x| initial_phi(x0 - x, &p, DEFAULT_L_C)).collect();
    let c: Vec<f64> = grid.axes[0].iter().map(|x| initial_c(x0 - x, &p, DEFAULT_L_C)).collect();
    let mut nodes = vec![Node::Free; n];
    if left_liquid_dirichlet {
        nodes[0] = Node::Fixed { phi: 0.0, c: 0.0 };
    }
    Problem::new(grid, nodes, phi, c, NondimParams::default()).unwrap()
}

/// Location of the φ = 0.5 crossing by linear interpolation.
fn front(xs: &[f64], phi: &[f64]) -> f64 {
    for i in 0..phi.len() - 1 {
        if (phi[i] - 0.5) * (phi[i + 1] - 0.5) <= 0.0 && phi[i] != phi[i + 1] {
            return xs[i] + (0.5 - phi[i]) / (phi[i + 1] - phi[i]) * (xs[i + 1] - xs[i]);
        }
    }
    f64::NAN
}

#[test]
fn laplacian_of_constants_and_quadratics() {
    let g = Grid::new(vec![axis(0.0, 1.0, 11), axis(0.0, 0.5, 6)]).unwrap();
    let ones = vec![3.7; g.len()];
    for k in 0..g.len() {
        assert!(fd_laplacian(&ones, &g, k).abs() < 1e-10);
    }
    let sq: Vec<f64> = (0..g.len()).map(|k| g.coords(k)[0].powi(2)).collect();
    let k = g.index(&[4, 3]);
    assert!((fd_laplacian(&sq, &g, k) - 2.0).abs() < 1e-9);
}

#[test]
fn laplacian_matches_hand_stencil() {
    let (nx, ny) = (7, 5);
    let g = Grid::new(vec![axis(-0.5, 0.5, nx), axis(0.0, 0.4, ny)]).unwrap();
    let (hx, hy) = (1.0 / 6.0, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f: Vec<f64> = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
    let at = |i: isize, j: isize| {
        // Mirror ghosts: index −1 reflects to 1, index n reflects to n − 2.
        let i = if i < 0 { -i } else if i >= nx as isize { 2 * (nx as isize - 1) - i } else { i };
        let j = if j < 0 { -j } else if j >= ny as isize { 2 * (ny as isize - 1) - j } else { j };
        f[j as usize * nx + i as usize]
    };
    for _ in 0..30 {
        let i = rng.random_range(0..nx) as isize;
        let j = rng.random_range(0..ny) as isize;
        let want = (at(i - 1, j) - 2.0 * at(i, j) + at(i + 1, j)) / (hx * hx)
            + (at(i, j - 1) - 2.0 * at(i, j) + at(i, j + 1)) / (hy * hy);
        let got = fd_laplacian(&f, &g, g.index(&[i as usize, j as usize]));
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
}

fn uniform_problem(phi: f64, c: f64) -> Problem {
    let g = Grid::new(vec![axis(0.0, 0.2, 21), axis(0.0, 0.1, 11)]).unwrap();
    let n = g.len();
    Problem::new(g, vec![Node::Free; n], vec![phi; n], vec![c; n], NondimParams::default()).unwrap()
}

#[test]
fn uniform_equilibria_are_stationary() {
    for (phi, c) in [(1.0, 1.0), (0.0, 0.036)] {
        let p = uniform_problem(phi, c);
        let mut st = Stepper::new(&p, NewtonOptions::default());
        let mut s = p.initial_state();
        for _ in 0..100 {
            s = st.step(&s, 1e-3).unwrap().0;
        }
        assert!(s.phi.iter().all(|v| (v - phi).abs() <= 1e-12));
        assert!(s.c.iter().all(|v| (v - c).abs() <= 1e-12));
    }
}

#[test]
fn flux_free_bar_conserves_solute_and_corrodes() {
    let p = bar(101, 0.3, false);
    let mut st = Stepper::new(&p, NewtonOptions::default());
    let mut ctl = TimeStepController::new(1e-4, 1e-8, 1e-2);
    let mut s = p.initial_state();
    let x0 = front(&p.grid.axes[0], &s.phi);
    let mut mass = p.grid.integrate(&s.c);
    for _ in 0..100 {
        let (next, stats) = st.step(&s, ctl.dt).unwrap();
        ctl.on_converged(stats.newton_iterations);
        let m = p.grid.integrate(&next.c);
        assert!(((m - mass) / mass).abs() <= 1e-8, "{m} vs {mass}");
        mass = m;
        s = next;
    }
    let x1 = front(&p.grid.axes[0], &s.phi);
    assert!(x1 > x0, "front should advance into the solid: {x0} -> {x1}");
}

#[test]
fn dirichlet_sink_removes_solute() {
    let p = bar(101, 0.1, true);
    let run = solve_problem(&p, 0.2, &[0.0, 0.2], &ReferenceOptions::default()).unwrap();
    let m0 = p.grid.integrate(&run.snapshots[0].c);
    let m1 = p.grid.integrate(&run.snapshots[1].c);
    assert!(m1 < m0);
    let x0 = front(&p.grid.axes[0], &run.snapshots[0].phi);
    let x1 = front(&p.grid.axes[0], &run.snapshots[1].phi);
    assert!(x1 > x0 + 0.01, "{x0} -> {x1}");
}

#[test]
fn refinement_moves_front_less_than_coarse_spacing() {
    let opts = ReferenceOptions::default();
    let coarse = bar(101, 0.1, true);
    let fine = bar(201, 0.1, true);
    let a = solve_problem(&coarse, 0.5, &[0.5], &opts).unwrap();
    let b = solve_problem(&fine, 0.5, &[0.5], &opts).unwrap();
    let xa = front(&coarse.grid.axes[0], &a.snapshots[0].phi);
    let xb = front(&fine.grid.axes[0], &b.snapshots[0].phi);
    assert!((xa - xb).abs() < 0.01, "{xa} vs {xb}");
}

#[test]
fn zero_horizon_returns_initial_state() {
    let p = bar(51, 0.3, false);
    let run = solve_problem(&p, 0.0, &[0.0], &ReferenceOptions::default()).unwrap();
    assert_eq!(run.snapshots.len(), 1);
    assert_eq!(run.snapshots[0].phi, p.phi0);
    assert_eq!(run.snapshots[0].c, p.c0);
    assert!(run.log.is_empty());
}

#[test]
fn injected_divergence_halves_once() {
    let p = bar(51, 0.3, false);
    let opts = ReferenceOptions {
        inject_divergence: vec![1],
        ..ReferenceOptions::default()
    };
    let run = solve_problem(&p, 0.01, &[0.01], &opts).unwrap();
    let trace = run.dt_trace();
    assert_eq!(trace[0], 1e-4);
    assert_eq!(trace[1], 5e-5);
    assert!(!run.log[0].converged && run.log[1].converged);
    assert_eq!(run.log.iter().filter(|e| !e.converged).count(), 1);
}

#[test]
fn repeated_divergence_underflows() {
    let p = bar(51, 0.3, false);
    let opts = ReferenceOptions {
        inject_divergence: (1..=100).collect(),
        ..ReferenceOptions::default()
    };
    let err = solve_problem(&p, 0.1, &[0.1], &opts).unwrap_err();
    assert!(matches!(err, RefSolverError::TimeStepUnderflow { .. }));
}

#[test]
fn unsorted_times_are_rejected() {
    let p = bar(51, 0.3, false);
    assert!(solve_problem(&p, 1.0, &[0.5, 0.25], &ReferenceOptions::default()).is_err());
    assert!(solve_problem(&p, 1.0, &[2.0], &ReferenceOptions::default()).is_err());
}

#[test]
fn two_pits_coalesce_on_a_coarse_grid() {
    let s = Scenario::builtin("2d-2pit").unwrap();
    let opts = ReferenceOptions {
        h: 0.02,
        ..ReferenceOptions::default()
    };
    let run = solve_reference(&s, &[0.0, 0.5, 1.0], &opts).unwrap();
    assert_eq!(run.snapshots[0].liquid_components(0.5), 2);
    assert_eq!(run.snapshots[2].liquid_components(0.5), 1);
    // Liquid grows monotonically.
    let f: Vec<f64> = run.snapshots.iter().map(|s| s.liquid_fraction(0.5)).collect();
    assert!(f[0] < f[1] && f[1] < f[2]);
    for snap in &run.snapshots {
        assert!(snap.phi.iter().chain(&snap.c).all(|v| (-0.01..=1.01).contains(v)));
    }
    let trace = run.dt_trace();
    for w in trace.windows(2) {
        let r = w[1] / w[0];
        assert!([1.5, 0.5, 1.0].iter().any(|f| (r - f).abs() < 1e-12), "ratio {r}");
    }
    assert!(run.log_text().lines().count() == run.log.len() + 1);
}

#[test]
fn scenario_nodes_carry_boundary_roles() {
    let s = Scenario::builtin("2d-2pit").unwrap();
    let p = Problem::from_scenario(&s, 0.025).unwrap();
    let top = p.grid.index(&[20, p.grid.dims[1] - 1]);
    assert_eq!(p.nodes[top], Node::Fixed { phi: 1.0, c: 1.0 });
    // Bottom node at a pit centre sits in the pit mouth.
    let mouth = p.grid.index(&[14, 0]);
    assert!((p.grid.coords(mouth)[0] + 0.15).abs() < 1e-12);
    assert_eq!(p.nodes[mouth], Node::Fixed { phi: 0.0, c: 0.0 });
    let side = p.grid.index(&[0, 5]);
    assert_eq!(p.nodes[side], Node::Free);
    let _ = State {
        time: 0.0,
        phi: p.phi0.clone(),
        c: p.c0.clone(),
    };
}
