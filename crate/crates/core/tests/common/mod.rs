//! Oracles shared by the integration tests. Everything here is computed
//! independently of the library's own numerics where that matters: dense
//! matrices, quadrature, brute-force norms.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use adaptive_hierarchy::fem::{solve_fom, FomStepper};
use adaptive_hierarchy::{
    AdaptiveState, FomOperators, HierarchyConfig, KernelConfig, MeshSpec, ParameterBox,
    ParameterPoint, QoiVector, TimeGrid,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ops(n_cells: usize) -> FomOperators {
    FomOperators::assemble(MeshSpec::new(n_cells).unwrap())
}

pub fn desk_grid() -> TimeGrid {
    TimeGrid::new(1.0, 256).unwrap()
}

pub fn sub_box() -> ParameterBox {
    ParameterBox::new([0.1, 1.0], [10.0, 10.0]).unwrap()
}

pub fn random_points(b: &ParameterBox, n: usize, seed: u64) -> Vec<ParameterPoint> {
    let mut r = rng(seed);
    let (lo, hi) = (b.lower(), b.upper());
    (0..n)
        .map(|_| {
            ParameterPoint::new(
                lo[0] + r.random::<f64>() * (hi[0] - lo[0]),
                lo[1] + r.random::<f64>() * (hi[1] - lo[1]),
            )
        })
        .collect()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| r.random::<f64>() * 2.0 - 1.0)
}

/// Fresh desk-scale hierarchy with the given box and settings.
pub fn desk_state(param_box: ParameterBox, config: HierarchyConfig) -> AdaptiveState {
    AdaptiveState::new(
        Arc::new(ops(256)),
        desk_grid(),
        param_box,
        config,
        KernelConfig::default(),
    )
    .unwrap()
}

/// Plain L²([0, T]) distance with the rectangle rule, written out.
pub fn l2_time_distance(a: &QoiVector, b: &QoiVector) -> f64 {
    assert_eq!(a.values.len(), b.values.len());
    let s: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    (a.dt * s).sqrt()
}

pub fn fom_output(ops: &FomOperators, mu: &ParameterPoint, grid: &TimeGrid) -> QoiVector {
    solve_fom(ops, mu, grid, &ops.zero_state()).unwrap().1
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Dual norm `sqrt(rᵀ H⁻¹ r)` with a dense Cholesky of H.
pub fn dense_dual_norm(h: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let chol = h.clone().cholesky().expect("H is SPD");
    r.dot(&chol.solve(r)).sqrt()
}

// manufactured solution u = e^{-t} sin(πx) of
// u_t − u_xx/pe + u_x + da·u = f on (0, 1), u(0, t) = 0

fn exact(x: f64, t: f64) -> f64 {
    (-t).exp() * (PI * x).sin()
}

fn source(x: f64, t: f64, mu: &ParameterPoint) -> f64 {
    let e = (-t).exp();
    e * ((PI * PI / mu.pe + mu.da - 1.0) * (PI * x).sin() + PI * (PI * x).cos())
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// `∫ f φ_i` for the free nodes, plus the outflow flux `u_x(1, t)/pe` that the
/// natural boundary condition would otherwise drop.
fn manufactured_load(n: usize, t: f64, mu: &ParameterPoint) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut load = vec![0.0; n];
    for e in 0..n {
        let (xl, xr) = (e as f64 * h, (e + 1) as f64 * h);
        for (xi, w) in GAUSS3 {
            let x = 0.5 * (xl + xr) + 0.5 * h * xi;
            let fw = source(x, t, mu) * w * 0.5 * h;
            let phi_r = (x - xl) / h;
            // node e is free unless it is the inflow node
            if e > 0 {
                load[e - 1] += fw * (1.0 - phi_r);
            }
            load[e] += fw * phi_r;
        }
    }
    load[n - 1] += -PI * (-t).exp() / mu.pe;
    load
}

/// `‖u_h(t) − u(t)‖_{L²(0,1)}` by 3-point Gauss per cell.
fn l2_space_error(nodal: &[f64], t: f64) -> f64 {
    let n = nodal.len();
    let h = 1.0 / n as f64;
    let mut s = 0.0;
    for e in 0..n {
        let left = if e == 0 { 0.0 } else { nodal[e - 1] };
        let right = nodal[e];
        let xl = e as f64 * h;
        for (xi, w) in GAUSS3 {
            let x = xl + 0.5 * h * (1.0 + xi);
            let phi_r = (x - xl) / h;
            let uh = left * (1.0 - phi_r) + right * phi_r;
            let d = uh - exact(x, t);
            s += d * d * w * 0.5 * h;
        }
    }
    s.sqrt()
}

/// `L²(0, T; L²(0, 1))` error of the implicit Euler P1 solution of the
/// manufactured problem, rectangle rule in time.
pub fn manufactured_error(n_cells: usize, n_steps: usize, t_end: f64) -> f64 {
    let mu = ParameterPoint::new(1.0, 1.0);
    let ops = FomOperators::assemble_with_inflow(MeshSpec::new(n_cells).unwrap(), 0.0);
    let dt = t_end / n_steps as f64;
    let stepper = FomStepper::new(&ops, &mu, dt).unwrap();
    let h = 1.0 / n_cells as f64;
    let mut c: Vec<f64> = (1..=n_cells).map(|i| exact(i as f64 * h, 0.0)).collect();
    let mut sum = 0.0;
    for step in 1..=n_steps {
        let t = step as f64 * dt;
        c = stepper.step(&c, &manufactured_load(n_cells, t, &mu));
        let e = l2_space_error(&c, t);
        sum += dt * e * e;
    }
    sum.sqrt()
}

/// Least-squares slope of `log e` against `log(1/h)`.
pub fn observed_order(sizes: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -cov / var
}
