//! Reduced basis model: Galerkin projection of the affine full-order model,
//! online implicit Euler, and a residual-based output error bound.
//!
//! The residual of the reconstructed reduced step `n` is
//!
//! ```text
//! rⁿ = b(μ) − M Φ (aⁿ − aⁿ⁻¹)/dt − A(μ) Φ aⁿ
//! ```
//!
//! which is a linear combination of the `4r + 3` vectors `MΦ, KΦ, BΦ, RΦ,
//! b_K, b_B, b_R`. Their Riesz representers in `H` are computed offline and
//! collected in a Gramian, so `‖rⁿ‖²_{H⁻¹}` is a quadratic form in the reduced
//! coefficients. The bound is
//!
//! ```text
//! Δ(μ) = C_s · sqrt( dt Σₙ ‖rⁿ‖²_{H⁻¹} / α_LB(μ)² + ‖c₀ − Πc₀‖²_H / α_LB(μ) )
//! ```

use nalgebra::{DMatrix, DVector};

use crate::banded::Tridiagonal;
use crate::error::{Error, Result};
use crate::fem::{
    CoercivityConstants, FomOperators, ParameterPoint, QoiVector, TimeGrid, Trajectory,
};
use crate::pod::{self, Truncation};

/// Number of affine operator components (M, K, B, R).
const N_OPERATOR_BLOCKS: usize = 4;
/// Number of affine load components.
const N_LOAD_TERMS: usize = 3;

/// Relative size of the projection error below which enrichment is declared
/// impossible.
pub const STAGNATION_RTOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ReducedModel {
    basis: DMatrix<f64>,
    pub red_mass: DMatrix<f64>,
    pub red_diff: DMatrix<f64>,
    pub red_adv: DMatrix<f64>,
    pub red_react: DMatrix<f64>,
    /// Projected load components, ordered `(b_K, b_B, b_R)`.
    pub red_load: [DVector<f64>; 3],
    pub red_output: DVector<f64>,
    pub red_init: DVector<f64>,
    /// Gramian of the Riesz representers, blocks ordered `M, K, B, R, b_K, b_B, b_R`.
    pub riesz_gram: DMatrix<f64>,
    /// `C_s = ‖s‖_{H⁻¹}`.
    pub output_dual_norm: f64,
    /// `‖c₀ − Πc₀‖_H`.
    pub init_error: f64,
    coercivity: CoercivityConstants,
}

/// Reduced trajectory (one column per time, `r x (N_T + 1)`) and its output.
#[derive(Debug, Clone)]
pub struct RbSolution {
    pub coeffs: DMatrix<f64>,
    pub qoi: QoiVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBound {
    pub delta_rb: f64,
    /// `‖rⁿ‖_{H⁻¹}` for `n = 1..=N_T`.
    pub residual_norms: Vec<f64>,
}

/// Settings of the snapshot compression used by [`ReducedModel::enrich`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnrichmentSettings {
    /// Relative energy tolerance of the POD of the projection errors.
    pub tolerance: f64,
    pub max_new_modes: usize,
    /// Trajectories with more snapshots than this are compressed with HAPOD.
    pub hapod_threshold: usize,
    pub hapod_chunks: usize,
    pub hapod_omega: f64,
}

impl Default for EnrichmentSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_new_modes: 25,
            hapod_threshold: 512,
            hapod_chunks: 8,
            hapod_omega: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Enrichment {
    Enriched {
        model: ReducedModel,
        added: usize,
    },
    /// The trajectory is already represented by the current space.
    Stagnated,
}

/// `α_LB(μ)` from the precomputed generalized eigenvalue bounds.
pub fn coercivity_lb(constants: &CoercivityConstants, mu: &ParameterPoint) -> f64 {
    constants.lower_bound(mu)
}

impl ReducedModel {
    /// Model on the zero space.
    pub fn empty(ops: &FomOperators, c0: &[f64]) -> Result<Self> {
        Self::project(ops, DMatrix::zeros(ops.n_dofs(), 0), c0)
    }

    /// Galerkin projection onto the span of the H-orthonormal columns of `basis`.
    pub fn project(ops: &FomOperators, basis: DMatrix<f64>, c0: &[f64]) -> Result<Self> {
        let n = ops.n_dofs();
        if basis.nrows() != n {
            return Err(Error::Dimension {
                expected: n,
                got: basis.nrows(),
            });
        }
        if c0.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: c0.len(),
            });
        }
        let r = basis.ncols();
        let h_basis = ops.ip.mul_mat(&basis);
        let ortho_err = (basis.transpose() * &h_basis - DMatrix::identity(r, r)).amax();
        if r > 0 && ortho_err > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "basis is not H-orthonormal (deviation {ortho_err:.2e})"
            )));
        }

        let applied: [DMatrix<f64>; N_OPERATOR_BLOCKS] = [
            ops.mass.mul_mat(&basis),
            ops.diff.mul_mat(&basis),
            ops.adv.mul_mat(&basis),
            ops.react.mul_mat(&basis),
        ];
        let bt = basis.transpose();
        let [red_mass, red_diff, red_adv, red_react] = [
            &bt * &applied[0],
            &bt * &applied[1],
            &bt * &applied[2],
            &bt * &applied[3],
        ];
        let loads = [&ops.load_diff, &ops.load_adv, &ops.load_react];
        let red_load = loads.map(|l| &bt * DVector::from_column_slice(l));
        let red_output = &bt * DVector::from_column_slice(&ops.output);
        let c0v = DVector::from_column_slice(c0);
        let hc0 = DVector::from_vec(ops.ip.mul_vec(c0));
        let red_init = &bt * &hc0;
        let init_residual = &c0v - &basis * &red_init;
        let init_error = ops
            .ip
            .bilinear(init_residual.as_slice(), init_residual.as_slice())
            .max(0.0)
            .sqrt();

        let width = N_OPERATOR_BLOCKS * r + N_LOAD_TERMS;
        let mut components = DMatrix::zeros(n, width);
        for (block, a) in applied.iter().enumerate() {
            components.columns_mut(block * r, r).copy_from(a);
        }
        for (k, l) in loads.iter().enumerate() {
            components
                .column_mut(N_OPERATOR_BLOCKS * r + k)
                .copy_from_slice(l);
        }
        let h_lu = ops.ip.factorize()?;
        let representers = h_lu.solve_mat(&components);
        let mut riesz_gram = components.transpose() * &representers;
        symmetrize(&mut riesz_gram);

        let output_dual_norm = crate::fem::dot(&ops.output, &h_lu.solve(&ops.output))
            .max(0.0)
            .sqrt();

        Ok(Self {
            basis,
            red_mass,
            red_diff,
            red_adv,
            red_react,
            red_load,
            red_output,
            red_init,
            riesz_gram,
            output_dual_norm,
            init_error,
            coercivity: ops.coercivity,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn coercivity(&self) -> &CoercivityConstants {
        &self.coercivity
    }

    pub fn coercivity_lb(&self, mu: &ParameterPoint) -> f64 {
        coercivity_lb(&self.coercivity, mu)
    }

    pub fn system_operator(&self, mu: &ParameterPoint) -> DMatrix<f64> {
        let [cd, ca, cr] = FomOperators::affine_coefficients(mu);
        &self.red_diff * cd + &self.red_adv * ca + &self.red_react * cr
    }

    pub fn load(&self, mu: &ParameterPoint) -> DVector<f64> {
        let [cd, ca, cr] = FomOperators::affine_coefficients(mu);
        &self.red_load[0] * cd + &self.red_load[1] * ca + &self.red_load[2] * cr
    }

    /// Online implicit Euler on the reduced system. Touches only `r`-sized data.
    pub fn solve(&self, mu: &ParameterPoint, grid: &TimeGrid) -> Result<RbSolution> {
        let r = self.dim();
        let n_t = grid.n_steps();
        let dt = grid.dt();
        let mut coeffs = DMatrix::zeros(r, n_t + 1);
        if r == 0 {
            return Ok(RbSolution {
                coeffs,
                qoi: QoiVector::zeros(n_t, dt),
            });
        }
        let system = &self.red_mass + self.system_operator(mu) * dt;
        let lu = system.lu();
        if !lu.is_invertible() {
            return Err(Error::DegenerateBasis);
        }
        let load_dt = self.load(mu) * dt;
        coeffs.column_mut(0).copy_from(&self.red_init);
        let mut values = Vec::with_capacity(n_t);
        let mut prev = self.red_init.clone();
        for step in 1..=n_t {
            let rhs = &self.red_mass * &prev + &load_dt;
            let next = lu.solve(&rhs).ok_or(Error::DegenerateBasis)?;
            values.push(self.red_output.dot(&next));
            coeffs.column_mut(step).copy_from(&next);
            prev = next;
        }
        Ok(RbSolution {
            coeffs,
            qoi: QoiVector::new(values, dt),
        })
    }

    /// A posteriori bound on `‖f_h(μ) − f_rb(μ)‖_{L²(0,T)}`.
    pub fn estimate(
        &self,
        mu: &ParameterPoint,
        solution: &RbSolution,
        grid: &TimeGrid,
    ) -> Result<ErrorBound> {
        let alpha = self.coercivity_lb(mu);
        if !(alpha > 0.0) {
            return Err(Error::NonCoercive {
                alpha,
                da: mu.da,
                pe: mu.pe,
            });
        }
        let r = self.dim();
        let n_t = grid.n_steps();
        if solution.coeffs.nrows() != r || solution.coeffs.ncols() != n_t + 1 {
            return Err(Error::Dimension {
                expected: r * (n_t + 1),
                got: solution.coeffs.len(),
            });
        }
        let dt = grid.dt();
        let [cd, ca, cr] = FomOperators::affine_coefficients(mu);
        let width = N_OPERATOR_BLOCKS * r + N_LOAD_TERMS;
        let mut weights = DVector::zeros(width);
        for k in 0..N_LOAD_TERMS {
            weights[N_OPERATOR_BLOCKS * r + k] = [cd, ca, cr][k];
        }

        let mut residual_norms = Vec::with_capacity(n_t);
        let mut sum_sq = 0.0;
        for step in 1..=n_t {
            let cur = solution.coeffs.column(step);
            let prev = solution.coeffs.column(step - 1);
            for j in 0..r {
                weights[j] = -(cur[j] - prev[j]) / dt;
                weights[r + j] = -cd * cur[j];
                weights[2 * r + j] = -ca * cur[j];
                weights[3 * r + j] = -cr * cur[j];
            }
            let norm_sq = weights.dot(&(&self.riesz_gram * &weights)).max(0.0);
            sum_sq += norm_sq;
            residual_norms.push(norm_sq.sqrt());
        }
        let delta_rb = self.output_dual_norm
            * (dt * sum_sq / (alpha * alpha) + self.init_error * self.init_error / alpha).sqrt();
        Ok(ErrorBound {
            delta_rb,
            residual_norms,
        })
    }

    /// Extends the basis by the dominant modes of the H-orthogonal projection
    /// error of `trajectory` and reprojects.
    pub fn enrich(
        &self,
        ops: &FomOperators,
        trajectory: &Trajectory,
        c0: &[f64],
        settings: &EnrichmentSettings,
    ) -> Result<Enrichment> {
        let snapshots = trajectory.snapshots();
        let errors = projection_errors(snapshots, &self.basis, &ops.ip);
        let err_sq = h_frobenius_sq(&errors, &ops.ip);
        let total_sq = h_frobenius_sq(snapshots, &ops.ip);
        if err_sq <= STAGNATION_RTOL * STAGNATION_RTOL * total_sq {
            return Ok(Enrichment::Stagnated);
        }

        let m = errors.ncols();
        let new = if m > settings.hapod_threshold {
            let chunk_len = m.div_ceil(settings.hapod_chunks.max(1));
            let chunks: Vec<DMatrix<f64>> = (0..m)
                .step_by(chunk_len)
                .map(|start| errors.columns(start, chunk_len.min(m - start)).into_owned())
                .collect();
            // same relative accuracy as the direct POD, stated per snapshot
            let eps_star = settings.tolerance * (err_sq / m as f64).sqrt();
            pod::hapod(&chunks, &ops.ip, eps_star, settings.hapod_omega)?
        } else {
            pod::pod(&errors, &ops.ip, Truncation::Energy(settings.tolerance))
        }
        .truncate(settings.max_new_modes);
        if new.rank() == 0 {
            return Ok(Enrichment::Stagnated);
        }

        let r = self.dim();
        let mut union = DMatrix::zeros(self.basis.nrows(), r + new.rank());
        union.columns_mut(0, r).copy_from(&self.basis);
        union.columns_mut(r, new.rank()).copy_from(&new.modes);
        let (basis, _) = pod::orthonormalize(&union, &ops.ip);
        let added = basis.ncols().saturating_sub(r);
        if added == 0 {
            return Ok(Enrichment::Stagnated);
        }
        let model = Self::project(ops, basis, c0)?;
        Ok(Enrichment::Enriched { model, added })
    }

    /// Lifts reduced coefficients back to the full space.
    pub fn reconstruct(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.basis * coeffs
    }
}

/// `S − Φ ΦᵀH S`
pub fn projection_errors(
    snapshots: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    ip: &Tridiagonal,
) -> DMatrix<f64> {
    if basis.ncols() == 0 {
        return snapshots.clone();
    }
    let coeffs = basis.transpose() * ip.mul_mat(snapshots);
    snapshots - basis * coeffs
}

fn h_frobenius_sq(m: &DMatrix<f64>, ip: &Tridiagonal) -> f64 {
    m.component_mul(&ip.mul_mat(m)).sum().max(0.0)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}
