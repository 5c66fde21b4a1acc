//! Full-order model: 1D linear advection-diffusion-reaction with P1 finite
//! elements in space and implicit Euler in time.
//!
//! The model problem on `(0, 1)` is
//!
//! ```text
//! ∂ₜc − (1/Pe) ∂ₓₓc + ∂ₓc + Da·c = 0,   c(0, t) = g,   ∂ₓc(1, t) = 0,   c(·, 0) = c₀
//! ```
//!
//! with the breakthrough curve `c(1, t)` as output. The inflow node is
//! eliminated, so the free degrees of freedom are the nodes `1..=n_cells` and
//! the output functional selects the last one. Eliminating the inflow value
//! produces one load contribution per affine term, so the load is affine in
//! `(1/Pe, 1, Da)` just like the operator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::banded::{Tridiagonal, TridiagonalLu};
use crate::error::{Error, Result};

/// A point `(Da, Pe)` of the parameter domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub da: f64,
    pub pe: f64,
}

impl ParameterPoint {
    pub fn new(da: f64, pe: f64) -> Self {
        Self { da, pe }
    }
}

/// Axis-aligned parameter box `[Da_min, Da_max] x [Pe_min, Pe_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    lower: [f64; 2],
    upper: [f64; 2],
}

impl ParameterBox {
    /// `lower` and `upper` are `(Da, Pe)` pairs. `Da_min = 0` is accepted,
    /// `Pe_min` must be strictly positive.
    pub fn new(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        if !lower.iter().chain(upper.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidBox("bounds must be finite".into()));
        }
        if lower[0] >= upper[0] || lower[1] >= upper[1] {
            return Err(Error::InvalidBox(format!(
                "lower {lower:?} must be below upper {upper:?} componentwise"
            )));
        }
        if lower[0] < 0.0 {
            return Err(Error::InvalidBox("Da_min must be nonnegative".into()));
        }
        if lower[1] <= 0.0 {
            return Err(Error::InvalidBox("Pe_min must be positive".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> [f64; 2] {
        self.lower
    }

    pub fn upper(&self) -> [f64; 2] {
        self.upper
    }

    pub fn contains(&self, mu: &ParameterPoint) -> bool {
        (self.lower[0]..=self.upper[0]).contains(&mu.da)
            && (self.lower[1]..=self.upper[1]).contains(&mu.pe)
    }

    pub fn check(&self, mu: &ParameterPoint) -> Result<()> {
        if self.contains(mu) {
            Ok(())
        } else {
            Err(Error::OutOfBox {
                da: mu.da,
                pe: mu.pe,
            })
        }
    }

    /// The four corners, in the order (lo, lo), (hi, lo), (lo, hi), (hi, hi).
    pub fn corners(&self) -> [ParameterPoint; 4] {
        let [dl, pl] = self.lower;
        let [du, pu] = self.upper;
        [
            ParameterPoint::new(dl, pl),
            ParameterPoint::new(du, pl),
            ParameterPoint::new(dl, pu),
            ParameterPoint::new(du, pu),
        ]
    }
}

impl Default for ParameterBox {
    fn default() -> Self {
        Self {
            lower: [0.1, 1.0],
            upper: [10.0, 100.0],
        }
    }
}

/// Uniform mesh of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshSpec {
    n_cells: usize,
}

impl MeshSpec {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }
}

/// Uniform implicit-Euler time grid on `[0, T]` with `N_T` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidTimeGrid(format!(
                "final time must be positive, got {t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidTimeGrid("need at least one step".into()));
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }
}

/// Extreme generalized eigenvalue bounds used by the coercivity lower bound.
///
/// `gamma_diff ≤ inf vᵀKv / vᵀHv` and `gamma_react ≤ inf vᵀRv / vᵀHv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityConstants {
    pub gamma_diff: f64,
    pub gamma_react: f64,
}

impl CoercivityConstants {
    /// With `H = M + K`, `λ(K, H) = θ / (1 + θ)` for `θ` an eigenvalue of the
    /// pencil `(K, M)`, so both constants follow from the extreme eigenvalues
    /// of that pencil. These are bracketed by bisection on the inertia of
    /// `K − σM` and the conservative bracket end is used.
    pub fn compute(diff: &Tridiagonal, mass: &Tridiagonal) -> Self {
        let n = diff.dim();
        let mut hi = 1.0;
        while diff.pencil_count_below(mass, hi) < n {
            hi *= 2.0;
        }

        // smallest eigenvalue: lower end of bracket
        let (mut lo, mut up) = (0.0, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + up);
            if diff.pencil_count_below(mass, mid) >= 1 {
                up = mid;
            } else {
                lo = mid;
            }
            if up - lo <= 1e-15 * up {
                break;
            }
        }
        let theta_min = lo;

        // largest eigenvalue: upper end of bracket
        let (mut lo, mut up) = (0.0, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + up);
            if diff.pencil_count_below(mass, mid) >= n {
                up = mid;
            } else {
                lo = mid;
            }
            if up - lo <= 1e-15 * up {
                break;
            }
        }
        let theta_max = up;

        Self {
            gamma_diff: theta_min / (1.0 + theta_min),
            gamma_react: 1.0 / (1.0 + theta_max),
        }
    }

    /// `α_LB(μ) = γ_K / Pe + Da · γ_R`; the advection part is counted as zero.
    pub fn lower_bound(&self, mu: &ParameterPoint) -> f64 {
        self.gamma_diff / mu.pe + mu.da * self.gamma_react
    }
}

/// Parameter-independent components of the affine full-order model.
///
/// `A(μ) = (1/Pe)·K + B + Da·R` and `b(μ) = (1/Pe)·b_K + b_B + Da·b_R`.
#[derive(Debug, Clone)]
pub struct FomOperators {
    pub mass: Tridiagonal,
    pub diff: Tridiagonal,
    pub adv: Tridiagonal,
    /// Reaction mass; numerically identical to `mass`.
    pub react: Tridiagonal,
    pub load_diff: Vec<f64>,
    pub load_adv: Vec<f64>,
    pub load_react: Vec<f64>,
    pub output: Vec<f64>,
    /// `H = M + K`, the discrete H¹ inner product.
    pub ip: Tridiagonal,
    pub coercivity: CoercivityConstants,
    mesh: MeshSpec,
    inflow: f64,
}

impl FomOperators {
    /// Assembles the operators with unit inflow concentration.
    pub fn assemble(mesh: MeshSpec) -> Self {
        Self::assemble_with_inflow(mesh, 1.0)
    }

    pub fn assemble_with_inflow(mesh: MeshSpec, inflow: f64) -> Self {
        let n = mesh.n_cells();
        let h = mesh.h();
        let mut mass = Tridiagonal::zeros(n);
        let mut diff = Tridiagonal::zeros(n);
        let mut adv = Tridiagonal::zeros(n);

        let m_loc = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        let k_loc = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
        // ∫ φ_j' φ_i over one element
        let b_loc = [[-0.5, 0.5], [-0.5, 0.5]];

        let mut load_diff = vec![0.0; n];
        let mut load_adv = vec![0.0; n];
        let mut load_react = vec![0.0; n];

        for e in 0..n {
            let nodes = [e, e + 1];
            for a in 0..2 {
                let Some(row) = nodes[a].checked_sub(1) else {
                    continue;
                };
                for b in 0..2 {
                    match nodes[b].checked_sub(1) {
                        Some(col) => {
                            mass.add_entry(row, col, m_loc[a][b]);
                            diff.add_entry(row, col, k_loc[a][b]);
                            adv.add_entry(row, col, b_loc[a][b]);
                        }
                        None => {
                            // inflow node: move the known value to the right-hand side
                            load_diff[row] -= k_loc[a][b] * inflow;
                            load_adv[row] -= b_loc[a][b] * inflow;
                            load_react[row] -= m_loc[a][b] * inflow;
                        }
                    }
                }
            }
        }

        let mut output = vec![0.0; n];
        output[n - 1] = 1.0;
        let ip = Tridiagonal::combine(&[(1.0, &mass), (1.0, &diff)]);
        let coercivity = CoercivityConstants::compute(&diff, &mass);

        Self {
            react: mass.clone(),
            mass,
            diff,
            adv,
            load_diff,
            load_adv,
            load_react,
            output,
            ip,
            coercivity,
            mesh,
            inflow,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.dim()
    }

    pub fn mesh(&self) -> MeshSpec {
        self.mesh
    }

    pub fn inflow(&self) -> f64 {
        self.inflow
    }

    /// Coefficients `(1/Pe, 1, Da)` of the affine decomposition.
    pub fn affine_coefficients(mu: &ParameterPoint) -> [f64; 3] {
        [1.0 / mu.pe, 1.0, mu.da]
    }

    pub fn system_operator(&self, mu: &ParameterPoint) -> Tridiagonal {
        let [cd, ca, cr] = Self::affine_coefficients(mu);
        Tridiagonal::combine(&[(cd, &self.diff), (ca, &self.adv), (cr, &self.react)])
    }

    pub fn load(&self, mu: &ParameterPoint) -> Vec<f64> {
        let [cd, ca, cr] = Self::affine_coefficients(mu);
        (0..self.n_dofs())
            .map(|i| cd * self.load_diff[i] + ca * self.load_adv[i] + cr * self.load_react[i])
            .collect()
    }

    /// Zero initial condition.
    pub fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.n_dofs()]
    }
}

/// Coefficient vectors of `c_h(t_n)` for `n = 0..=N_T`, one column per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    coeffs: DMatrix<f64>,
}

impl Trajectory {
    pub fn from_columns(coeffs: DMatrix<f64>) -> Self {
        Self { coeffs }
    }

    pub fn n_steps(&self) -> usize {
        self.coeffs.ncols() - 1
    }

    pub fn n_dofs(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn state(&self, n: usize) -> &[f64] {
        let start = n * self.coeffs.nrows();
        &self.coeffs.as_slice()[start..start + self.coeffs.nrows()]
    }

    /// Snapshot matrix `n_dofs x (N_T + 1)`.
    pub fn snapshots(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn into_snapshots(self) -> DMatrix<f64> {
        self.coeffs
    }
}

/// Output time series `f(μ; t_1), …, f(μ; t_{N_T})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoiVector {
    pub values: Vec<f64>,
    pub dt: f64,
}

impl QoiVector {
    pub fn new(values: Vec<f64>, dt: f64) -> Self {
        Self { values, dt }
    }

    pub fn zeros(n: usize, dt: f64) -> Self {
        Self::new(vec![0.0; n], dt)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        qoi_norm(self)
    }

    /// `self - other`, keeping `self.dt`.
    pub fn difference(&self, other: &QoiVector) -> QoiVector {
        assert_eq!(self.len(), other.len(), "QoI lengths differ");
        QoiVector::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            self.dt,
        )
    }

    pub fn distance(&self, other: &QoiVector) -> f64 {
        self.difference(other).norm()
    }
}

/// Rectangle-rule L²([0, T]) norm on the implicit Euler grid.
pub fn qoi_norm(q: &QoiVector) -> f64 {
    (q.dt * q.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// One implicit Euler step operator `(M + dt·A(μ))⁻¹`, factorized once.
pub struct FomStepper<'a> {
    ops: &'a FomOperators,
    lu: TridiagonalLu,
    dt: f64,
}

impl<'a> FomStepper<'a> {
    pub fn new(ops: &'a FomOperators, mu: &ParameterPoint, dt: f64) -> Result<Self> {
        let a = ops.system_operator(mu);
        let lu = Tridiagonal::combine(&[(1.0, &ops.mass), (dt, &a)]).factorize()?;
        Ok(Self { ops, lu, dt })
    }

    /// Solves `(M + dt·A) cⁿ = M cⁿ⁻¹ + dt·load`.
    pub fn step(&self, prev: &[f64], load: &[f64]) -> Vec<f64> {
        let mut rhs = self.ops.mass.mul_vec(prev);
        for (r, l) in rhs.iter_mut().zip(load) {
            *r += self.dt * l;
        }
        self.lu.solve_in_place(&mut rhs);
        rhs
    }
}

/// Runs the full-order model, returning the state trajectory and the output.
pub fn solve_fom(
    ops: &FomOperators,
    mu: &ParameterPoint,
    grid: &TimeGrid,
    c0: &[f64],
) -> Result<(Trajectory, QoiVector)> {
    let n = ops.n_dofs();
    if c0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: c0.len(),
        });
    }
    let dt = grid.dt();
    let stepper = FomStepper::new(ops, mu, dt)?;
    let load = ops.load(mu);

    let n_t = grid.n_steps();
    let mut coeffs = DMatrix::zeros(n, n_t + 1);
    coeffs.column_mut(0).copy_from_slice(c0);
    let mut values = Vec::with_capacity(n_t);
    let mut prev = c0.to_vec();
    for step in 1..=n_t {
        let next = stepper.step(&prev, &load);
        values.push(dot(&ops.output, &next));
        coeffs.column_mut(step).copy_from_slice(&next);
        prev = next;
    }
    Ok((Trajectory::from_columns(coeffs), QoiVector::new(values, dt)))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
