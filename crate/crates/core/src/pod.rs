//! Proper orthogonal decomposition with respect to an SPD inner product.
//!
//! [`pod`] uses the method of snapshots: it diagonalizes the `m x m` Gramian
//! `SᵀHS` and never forms an `n_dofs x n_dofs` matrix. [`hapod`] is the
//! incremental hierarchical variant that walks a chain of snapshot chunks.

use nalgebra::{DMatrix, DVector};

use crate::banded::Tridiagonal;
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are discarded.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Modes whose H-norm falls below this after re-orthogonalization are dropped.
pub const ORTHO_DROP: f64 = 1e-10;

/// Residual passes after the first Gramian POD.
const MAX_DEFLATIONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Keep at most this many modes.
    Rank(usize),
    /// Smallest `r` with `Σ_{i>r} σᵢ² ≤ τ² Σᵢ σᵢ²`.
    Energy(f64),
    /// Smallest `r` with `Σ_{i>r} σᵢ² ≤ m ε²`, i.e. a mean-square projection
    /// error of at most `ε²` per snapshot.
    MeanSquare(f64),
}

/// H-orthonormal POD modes (columns) with their singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub modes: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl PodBasis {
    pub fn empty(n_dofs: usize) -> Self {
        Self {
            modes: DMatrix::zeros(n_dofs, 0),
            singular_values: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n_dofs(&self) -> usize {
        self.modes.nrows()
    }

    /// Keeps the leading `r` modes.
    pub fn truncate(mut self, r: usize) -> Self {
        let r = r.min(self.rank());
        self.modes = self.modes.columns(0, r).into_owned();
        self.singular_values.truncate(r);
        self
    }
}

/// Sum of squared H-norms of `S − Φ ΦᵀH S`, assuming H-orthonormal `Φ`.
pub fn projection_error_sq(
    snapshots: &DMatrix<f64>,
    modes: &DMatrix<f64>,
    ip: &Tridiagonal,
) -> f64 {
    let hs = ip.mul_mat(snapshots);
    let coeffs = modes.transpose() * &hs;
    let residual = snapshots - modes * coeffs;
    let hr = ip.mul_mat(&residual);
    residual.component_mul(&hr).sum().max(0.0)
}

pub fn pod(snapshots: &DMatrix<f64>, ip: &Tridiagonal, truncation: Truncation) -> PodBasis {
    let m = snapshots.ncols();
    let budget = match truncation {
        Truncation::Rank(_) => None,
        Truncation::Energy(tau) => Some(Budget::Relative(tau * tau)),
        Truncation::MeanSquare(eps) => Some(Budget::Absolute(m as f64 * eps * eps)),
    };
    let max_rank = match truncation {
        Truncation::Rank(r) => r,
        _ => usize::MAX,
    };
    snapshot_pod(snapshots, ip, budget, max_rank)
}

#[derive(Clone, Copy)]
enum Budget {
    /// fraction of the total energy
    Relative(f64),
    /// absolute squared error
    Absolute(f64),
}

/// Gramian POD followed by up to [`MAX_DEFLATIONS`] passes over the residual.
///
/// Eigenvalues of `SᵀHS` below `m ε λ_max` are rounding noise, so one pass
/// cannot resolve a budget finer than that. When the measured projection
/// error still exceeds the budget, the residual `S − ΦΦᵀHS` is decomposed with
/// its own Gramian and the new modes are appended.
fn snapshot_pod(
    snapshots: &DMatrix<f64>,
    ip: &Tridiagonal,
    budget: Option<Budget>,
    max_rank: usize,
) -> PodBasis {
    let mut basis = gram_pod(snapshots, ip, budget, max_rank);
    let Some(budget) = budget else {
        return basis;
    };
    let total = {
        let hs = ip.mul_mat(snapshots);
        snapshots.component_mul(&hs).sum()
    };
    let allowed = match budget {
        Budget::Relative(frac) => frac * total,
        Budget::Absolute(abs) => abs,
    };
    let floor = RANK_CUTOFF * RANK_CUTOFF * total;
    for _ in 0..MAX_DEFLATIONS {
        let r = basis.rank();
        if r == 0 || r >= max_rank {
            break;
        }
        let err = projection_error_sq(snapshots, &basis.modes, ip);
        if err <= allowed || err <= floor {
            break;
        }
        let coeffs = basis.modes.transpose() * ip.mul_mat(snapshots);
        let residual = snapshots - &basis.modes * coeffs;
        let extra = gram_pod(&residual, ip, Some(Budget::Absolute(allowed)), max_rank - r);
        if extra.rank() == 0 {
            break;
        }
        let mut union = DMatrix::zeros(basis.n_dofs(), r + extra.rank());
        union.columns_mut(0, r).copy_from(&basis.modes);
        union.columns_mut(r, extra.rank()).copy_from(&extra.modes);
        let values: Vec<f64> = basis
            .singular_values
            .iter()
            .chain(&extra.singular_values)
            .copied()
            .collect();
        let (modes, keep) = orthonormalize(&union, ip);
        if modes.ncols() == r {
            break;
        }
        basis = PodBasis {
            modes,
            singular_values: keep.iter().map(|&k| values[k]).collect(),
        };
        fix_signs(&mut basis.modes);
    }
    basis
}

fn gram_pod(
    snapshots: &DMatrix<f64>,
    ip: &Tridiagonal,
    budget: Option<Budget>,
    max_rank: usize,
) -> PodBasis {
    let n = snapshots.nrows();
    assert_eq!(ip.dim(), n, "inner product dimension mismatch");
    if snapshots.ncols() == 0 {
        return PodBasis::empty(n);
    }

    let hs = ip.mul_mat(snapshots);
    let mut gram = snapshots.transpose() * &hs;
    symmetrize(&mut gram);
    let eig = gram.symmetric_eigen();

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    // descending, ties broken by index
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = lambdas.iter().sum();
    let sigma_max = lambdas.first().copied().unwrap_or(0.0).sqrt();
    if sigma_max == 0.0 {
        return PodBasis::empty(n);
    }

    // the Gramian squares the condition number: eigenvalues within its
    // rounding level carry no information
    let noise = lambdas.len() as f64 * f64::EPSILON * lambdas[0];
    let numerical_rank = lambdas
        .iter()
        .take_while(|&&l| l.sqrt() >= RANK_CUTOFF * sigma_max && l > noise)
        .count();

    let allowed_tail = match budget {
        None => f64::NEG_INFINITY,
        Some(Budget::Relative(frac)) => frac * total,
        Some(Budget::Absolute(abs)) => abs,
    };
    let mut r = numerical_rank.min(max_rank);
    if budget.is_some() {
        // smallest r whose discarded tail fits the budget
        let mut tail: f64 = lambdas[r..].iter().sum();
        while r > 0 && tail + lambdas[r - 1] <= allowed_tail {
            tail += lambdas[r - 1];
            r -= 1;
        }
    }

    let mut modes = DMatrix::zeros(n, r);
    for (k, &idx) in order.iter().take(r).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let sigma = lambdas[k].sqrt();
        let mode = snapshots * v / sigma;
        modes.column_mut(k).copy_from(&mode);
    }
    let singular_values: Vec<f64> = lambdas[..r].iter().map(|l| l.sqrt()).collect();

    let (modes, keep) = orthonormalize(&modes, ip);
    let singular_values = keep.iter().map(|&k| singular_values[k]).collect();
    let mut basis = PodBasis {
        modes,
        singular_values,
    };
    fix_signs(&mut basis.modes);
    basis
}

/// Incremental HAPOD over a chain of snapshot chunks.
///
/// The chain is a tree of depth `L = chunks.len()`: node `k` compresses the
/// output of node `k − 1` together with chunk `k`. A non-root node covering
/// `n_k` snapshots may discard a squared error of `ω² ε*² n_k / (L − 1)`, the
/// root `(1 − ω²) ε*²` per snapshot overall, which keeps the mean-square
/// projection error of the concatenated snapshots below `ε*²`.
pub fn hapod(
    chunks: &[DMatrix<f64>],
    ip: &Tridiagonal,
    eps_star: f64,
    omega: f64,
) -> Result<PodBasis> {
    if !(eps_star > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps_star must be positive, got {eps_star}"
        )));
    }
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "omega must lie in (0, 1), got {omega}"
        )));
    }
    let n = ip.dim();
    if let Some(bad) = chunks.iter().find(|c| c.nrows() != n) {
        return Err(Error::Dimension {
            expected: n,
            got: bad.nrows(),
        });
    }
    let total: usize = chunks.iter().map(|c| c.ncols()).sum();
    let eps_sq = eps_star * eps_star;
    if chunks.len() <= 1 {
        let single = chunks
            .first()
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(n, 0));
        return Ok(snapshot_pod(
            &single,
            ip,
            Some(Budget::Absolute(eps_sq * total as f64)),
            usize::MAX,
        ));
    }

    let inner_levels = (chunks.len() - 1) as f64;
    let mut current = PodBasis::empty(n);
    let mut covered = 0;
    for (k, chunk) in chunks.iter().enumerate() {
        let r = current.rank();
        let mut input = DMatrix::zeros(n, r + chunk.ncols());
        for (j, s) in current.singular_values.iter().enumerate() {
            input
                .column_mut(j)
                .copy_from(&(current.modes.column(j) * *s));
        }
        input.columns_mut(r, chunk.ncols()).copy_from(chunk);
        covered += chunk.ncols();
        let budget = if k + 1 < chunks.len() {
            omega * omega * eps_sq * covered as f64 / inner_levels
        } else {
            (1.0 - omega * omega) * eps_sq * total as f64
        };
        current = snapshot_pod(&input, ip, Some(Budget::Absolute(budget)), usize::MAX);
    }
    Ok(current)
}

/// Modified Gram-Schmidt in the H inner product with one reorthogonalization
/// pass. Returns the orthonormal columns and the indices of the input columns
/// that survived.
pub fn orthonormalize(vectors: &DMatrix<f64>, ip: &Tridiagonal) -> (DMatrix<f64>, Vec<usize>) {
    let n = vectors.nrows();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vectors.ncols());
    let mut hout: Vec<DVector<f64>> = Vec::with_capacity(vectors.ncols());
    let mut kept = Vec::new();
    for j in 0..vectors.ncols() {
        let mut v: DVector<f64> = vectors.column(j).into_owned();
        let norm0 = h_norm(&v, ip);
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for (q, hq) in out.iter().zip(&hout) {
                let c = hq.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = h_norm(&v, ip);
        if norm < ORTHO_DROP * norm0.max(1.0) || norm < ORTHO_DROP {
            continue;
        }
        v /= norm;
        hout.push(DVector::from_vec(ip.mul_vec(v.as_slice())));
        out.push(v);
        kept.push(j);
    }
    let mut m = DMatrix::zeros(n, out.len());
    for (k, v) in out.iter().enumerate() {
        m.column_mut(k).copy_from(v);
    }
    (m, kept)
}

fn h_norm(v: &DVector<f64>, ip: &Tridiagonal) -> f64 {
    ip.bilinear(v.as_slice(), v.as_slice()).max(0.0).sqrt()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// First entry of non-negligible magnitude made positive.
fn fix_signs(modes: &mut DMatrix<f64>) {
    for mut col in modes.column_iter_mut() {
        let scale = col.amax();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12 * scale).copied() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_identity_err(modes: &DMatrix<f64>, ip: &Tridiagonal) -> f64 {
        let g = modes.transpose() * ip.mul_mat(modes);
        (g - DMatrix::identity(modes.ncols(), modes.ncols())).amax()
    }

    fn spd(n: usize) -> Tridiagonal {
        Tridiagonal::from_diagonals(vec![-0.4; n - 1], vec![2.0; n], vec![-0.4; n - 1]).unwrap()
    }

    #[test]
    fn rank_one_snapshot() {
        let ip = spd(6);
        let v = DMatrix::from_column_slice(6, 1, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.5]);
        let norm = ip.bilinear(v.as_slice(), v.as_slice()).sqrt();
        let basis = pod(&v, &ip, Truncation::Rank(5));
        assert_eq!(basis.rank(), 1);
        assert!((basis.singular_values[0] - norm).abs() < 1e-12);
        for i in 0..6 {
            assert!((basis.modes[(i, 0)] - v[(i, 0)] / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_orthonormal_set() {
        let ip = spd(5);
        let raw = DMatrix::from_fn(5, 3, |i, j| {
            ((i + 1) * (j + 2)) as f64 + if i == j { 3.0 } else { 0.0 }
        });
        let (q, _) = orthonormalize(&raw, &ip);
        let mut twice = DMatrix::zeros(5, 6);
        twice.columns_mut(0, 3).copy_from(&q);
        twice.columns_mut(3, 3).copy_from(&q);
        let basis = pod(&twice, &ip, Truncation::Energy(1e-12));
        assert_eq!(basis.rank(), 3);
        for s in &basis.singular_values {
            assert!((s - 2f64.sqrt()).abs() < 1e-12);
        }
        // the modes span the same space
        let coeffs = basis.modes.transpose() * ip.mul_mat(&q);
        assert!(projection_error_sq(&q, &basis.modes, &ip) < 1e-20);
        assert!((coeffs.norm_squared() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_snapshots_give_empty_basis() {
        let ip = Tridiagonal::identity(4);
        let basis = pod(&DMatrix::zeros(4, 3), &ip, Truncation::Energy(1e-3));
        assert_eq!(basis.rank(), 0);
        assert_eq!(basis.n_dofs(), 4);
    }

    #[test]
    fn outputs_are_orthonormal_and_sorted() {
        let ip = spd(12);
        let s = DMatrix::from_fn(12, 9, |i, j| {
            ((i * 13 + j * 7) % 11) as f64 - 5.0 + (i as f64 * 0.3).sin()
        });
        let basis = pod(&s, &ip, Truncation::Rank(9));
        assert!(gram_identity_err(&basis.modes, &ip) < 1e-10);
        assert!(basis.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn energy_truncation_respects_tolerance() {
        let ip = Tridiagonal::identity(10);
        let s = DMatrix::from_fn(10, 6, |i, j| {
            ((i + 1) as f64).powi(j as i32 % 3) / (1.0 + j as f64).powi(3)
        });
        let total = s.norm_squared();
        for tau in [1e-1, 1e-2, 1e-4] {
            let basis = pod(&s, &ip, Truncation::Energy(tau));
            let err = projection_error_sq(&s, &basis.modes, &ip);
            assert!(err <= tau * tau * total * (1.0 + 1e-10) + 1e-14);
            if basis.rank() > 0 {
                let smaller = basis.clone().truncate(basis.rank() - 1);
                assert!(projection_error_sq(&s, &smaller.modes, &ip) > tau * tau * total);
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let ip = spd(8);
        let s = DMatrix::from_fn(8, 5, |i, j| {
            (i as f64 - j as f64).cos() + 0.1 * (i * j) as f64
        });
        let a = pod(&s, &ip, Truncation::Energy(1e-8));
        let b = pod(&s, &ip, Truncation::Energy(1e-8));
        assert_eq!(a, b);
    }

    #[test]
    fn hapod_validates_arguments() {
        let ip = Tridiagonal::identity(3);
        assert!(hapod(&[], &ip, 0.0, 0.5).is_err());
        assert!(hapod(&[], &ip, 1e-3, 1.0).is_err());
        assert_eq!(hapod(&[], &ip, 1e-3, 0.5).unwrap().rank(), 0);
    }

    #[test]
    fn hapod_exact_low_rank() {
        let ip = spd(7);
        let a: Vec<f64> = (0..7).map(|i| (i as f64).sin() + 1.0).collect();
        let b: Vec<f64> = (0..7).map(|i| (i as f64 * 0.5).cos()).collect();
        let chunk =
            |w: &[(f64, f64)]| DMatrix::from_fn(7, w.len(), |i, j| w[j].0 * a[i] + w[j].1 * b[i]);
        let c1 = chunk(&[(1.0, 0.0), (0.5, 2.0), (-1.0, 1.0)]);
        let c2 = chunk(&[(3.0, -1.0), (0.0, 1.0)]);
        let basis = hapod(&[c1.clone(), c2.clone()], &ip, 1e-8, 0.5).unwrap();
        assert!(basis.rank() <= 2);
        let mut all = DMatrix::zeros(7, 5);
        all.columns_mut(0, 3).copy_from(&c1);
        all.columns_mut(3, 2).copy_from(&c2);
        assert!(projection_error_sq(&all, &basis.modes, &ip).sqrt() < 1e-10);
    }

    #[test]
    fn hapod_single_chunk_matches_pod() {
        let ip = spd(15);
        let s = DMatrix::from_fn(15, 10, |i, j| (-(i as f64 - j as f64).powi(2) / 8.0).exp());
        let h = hapod(&[s.clone()], &ip, 1e-4, 0.5).unwrap();
        let direct = pod(&s, &ip, Truncation::Rank(h.rank()));
        assert_eq!(h.rank(), direct.rank());
        for k in 0..h.rank() {
            let diff = (h.modes.column(k) - direct.modes.column(k)).amax();
            assert!(diff < 1e-8, "mode {k} differs by {diff}");
        }
    }
}
