//! Vectorial greedy kernel surrogate `μ ↦ (f(μ; t₁), …, f(μ; t_{N_T}))`.
//!
//! Centers are picked one at a time from the training set. Each pick adds a
//! Newton basis function, i.e. a column of the `LDLᵀ` factor of the kernel
//! matrix restricted to the centers, so the factor, the residuals and the
//! power function are all updated in `O(n_train · (n_centers + N_T))` per step.

mod greedy;
pub mod io;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{ParameterBox, ParameterPoint, QoiVector};

pub use greedy::{greedy_rules, FGreedy, GreedyRule, GreedyRuleFactory, PGreedy};

/// The greedy loop stops once the squared power function at the selected
/// candidate drops below this.
pub const POWER_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DataSource {
    Fom,
    Rb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingEntry {
    pub mu: ParameterPoint,
    pub qoi: QoiVector,
    pub source: DataSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Added,
    Replaced,
    /// An FOM entry at the same point was kept over new RB data.
    Kept,
}

/// Ordered training pairs with unique parameter points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    entries: Vec<TrainingEntry>,
}

impl TrainingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        mu: ParameterPoint,
        qoi: QoiVector,
        source: DataSource,
    ) -> InsertOutcome {
        match self.entries.iter_mut().find(|e| e.mu == mu) {
            Some(existing) if existing.source == DataSource::Fom && source == DataSource::Rb => {
                InsertOutcome::Kept
            }
            Some(existing) => {
                existing.qoi = qoi;
                existing.source = source;
                InsertOutcome::Replaced
            }
            None => {
                self.entries.push(TrainingEntry { mu, qoi, source });
                InsertOutcome::Added
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TrainingEntry] {
        &self.entries
    }

    pub fn count(&self, source: DataSource) -> usize {
        self.entries.iter().filter(|e| e.source == source).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Gaussian width in normalized parameter coordinates.
    pub shape: f64,
    pub max_centers: usize,
    /// Stopping tolerance relative to the largest training target norm.
    pub greedy_tol: f64,
    /// Nugget added to the kernel diagonal on the training set.
    pub nugget: f64,
    /// Name of the greedy selection rule, see [`greedy_rules`].
    pub selection: String,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            shape: 0.5,
            max_centers: 200,
            greedy_tol: 1e-5,
            nugget: 0.0,
            selection: "f_greedy".to_string(),
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0 && self.shape.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel shape must be positive, got {}",
                self.shape
            )));
        }
        if self.max_centers == 0 {
            return Err(Error::InvalidArgument(
                "max_centers must be positive".into(),
            ));
        }
        if !(self.greedy_tol >= 0.0) {
            return Err(Error::InvalidArgument(
                "greedy_tol must be nonnegative".into(),
            ));
        }
        if !(self.nugget >= 0.0) {
            return Err(Error::InvalidArgument("nugget must be nonnegative".into()));
        }
        greedy_rules().get(&self.selection)?;
        Ok(())
    }
}

/// Gaussian kernel on box-normalized parameters, `Pe` on a log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    shape: f64,
    param_box: ParameterBox,
}

impl GaussianKernel {
    pub fn new(shape: f64, param_box: ParameterBox) -> Self {
        Self { shape, param_box }
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn param_box(&self) -> &ParameterBox {
        &self.param_box
    }

    /// Maps the box onto `[0, 1]²`.
    pub fn normalize(&self, mu: &ParameterPoint) -> [f64; 2] {
        let [dl, pl] = self.param_box.lower();
        let [du, pu] = self.param_box.upper();
        [
            (mu.da - dl) / (du - dl),
            (mu.pe.ln() - pl.ln()) / (pu.ln() - pl.ln()),
        ]
    }

    pub fn eval(&self, a: &ParameterPoint, b: &ParameterPoint) -> f64 {
        let za = self.normalize(a);
        let zb = self.normalize(b);
        let d2 = (za[0] - zb[0]).powi(2) + (za[1] - zb[1]).powi(2);
        (-d2 / (2.0 * self.shape * self.shape)).exp()
    }
}

/// Free-function form of [`GaussianKernel::eval`].
pub fn kernel(
    a: &ParameterPoint,
    b: &ParameterPoint,
    config: &KernelConfig,
    param_box: &ParameterBox,
) -> f64 {
    GaussianKernel::new(config.shape, *param_box).eval(a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub centers: Vec<ParameterPoint>,
    /// Unit lower-triangular `L` with `L D Lᵀ = K(centers, centers) + λI`,
    /// `D = diag(pivots)`. Row `m` holds the unnormalized Newton basis
    /// function values at center `m`, scaled by the pivots.
    pub newton_factor: DMatrix<f64>,
    /// Squared power function at each center just before it was selected.
    pub pivots: Vec<f64>,
    /// `n_centers x N_T` coefficients in the standard kernel basis.
    pub coeff_block: DMatrix<f64>,
    pub config: KernelConfig,
    pub param_box: ParameterBox,
    pub dt: f64,
    /// Largest training residual norm before each greedy step and after the last.
    pub residual_history: Vec<f64>,
    /// Native-space distance `‖s_M − s_m‖` between the final surrogate and the
    /// one after `m` steps, for `m = 0..=M`.
    pub native_residual_history: Vec<f64>,
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`. Products are subtracted
/// exactly, so the power function cancels to zero at the centers instead of
/// stalling at `sqrt(ε)`.
#[derive(Debug, Clone, Copy)]
struct Compensated {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Compensated {
    fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn sub_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let (s, e) = two_sum(self.hi, -p);
        let (hi, lo) = two_sum(s, e + self.lo - p_err);
        self.hi = hi;
        self.lo = lo;
    }

    /// `self -= x · b`
    fn sub_scaled(&mut self, x: Compensated, b: f64) {
        self.sub_product(x.hi, b);
        self.sub_product(x.lo, b);
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

impl KernelModel {
    /// The zero model with no centers.
    pub fn empty(config: KernelConfig, param_box: ParameterBox, n_outputs: usize, dt: f64) -> Self {
        Self {
            centers: Vec::new(),
            newton_factor: DMatrix::zeros(0, 0),
            pivots: Vec::new(),
            coeff_block: DMatrix::zeros(0, n_outputs),
            config,
            param_box,
            dt,
            residual_history: Vec::new(),
            native_residual_history: Vec::new(),
        }
    }

    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.coeff_block.ncols()
    }

    pub fn kernel(&self) -> GaussianKernel {
        GaussianKernel::new(self.config.shape, self.param_box)
    }

    fn cross_vector(&self, mu: &ParameterPoint) -> DVector<f64> {
        let k = self.kernel();
        DVector::from_iterator(
            self.centers.len(),
            self.centers.iter().map(|c| k.eval(mu, c)),
        )
    }

    pub fn predict(&self, mu: &ParameterPoint) -> QoiVector {
        let cross = self.cross_vector(mu);
        let values = self.coeff_block.tr_mul(&cross);
        QoiVector::new(values.as_slice().to_vec(), self.dt)
    }

    /// `P(μ)` with `P² = k(μ, μ) − Σ_m w_m(μ)² / p_m`, clamped at zero.
    pub fn power_function(&self, mu: &ParameterPoint) -> f64 {
        let k = self.kernel();
        let mut power = Compensated::new(k.eval(mu, mu));
        let mut newton: Vec<Compensated> = Vec::with_capacity(self.n_centers());
        for (m, c) in self.centers.iter().enumerate() {
            let w = newton_value(k.eval(mu, c), &newton, &self.newton_factor, m);
            power.sub_scaled(w, w.value() / self.pivots[m]);
            newton.push(w);
        }
        power.value().max(0.0).sqrt()
    }
}

/// `w_m(x) = k(x, c_m) − Σ_{l<m} w_l(x) L[m, l]`
fn newton_value(k: f64, previous: &[Compensated], factor: &DMatrix<f64>, m: usize) -> Compensated {
    let mut num = Compensated::new(k);
    for (l, w) in previous.iter().enumerate().take(m) {
        num.sub_scaled(*w, factor[(m, l)]);
    }
    num
}

/// Greedy fit on the full training set.
pub fn fit(
    data: &TrainingSet,
    config: &KernelConfig,
    param_box: &ParameterBox,
) -> Result<KernelModel> {
    config.validate()?;
    let entries = data.entries();
    let Some(first) = entries.first() else {
        return Err(Error::CannotFit("training set is empty".into()));
    };
    let n_out = first.qoi.len();
    let dt = first.qoi.dt;
    if let Some(bad) = entries.iter().find(|e| e.qoi.len() != n_out) {
        return Err(Error::Dimension {
            expected: n_out,
            got: bad.qoi.len(),
        });
    }
    let rule = greedy_rules().get(&config.selection)?();
    let kern = GaussianKernel::new(config.shape, *param_box);
    let n = entries.len();
    let max_centers = config.max_centers.min(n);

    // residual rows start as the targets
    let mut residual = DMatrix::from_fn(n, n_out, |i, t| entries[i].qoi.values[t]);
    let row_norm_sq = |res: &DMatrix<f64>, i: usize| dt * res.row(i).norm_squared();
    let mut power: Vec<Compensated> = entries
        .iter()
        .map(|e| Compensated::new(kern.eval(&e.mu, &e.mu) + config.nugget))
        .collect();
    let mut power_sq: Vec<f64> = power.iter().map(Compensated::value).collect();
    // unnormalized Newton basis values at all training points, one row per point
    let mut newton: Vec<Vec<Compensated>> = vec![Vec::with_capacity(max_centers); n];
    let mut factor = DMatrix::<f64>::zeros(max_centers, max_centers);
    let mut pivots = Vec::with_capacity(max_centers);
    let mut beta = DMatrix::<f64>::zeros(max_centers, n_out);
    let mut selected: Vec<usize> = Vec::new();
    let mut available = vec![true; n];

    let mut res_norms: Vec<f64> = (0..n).map(|i| row_norm_sq(&residual, i)).collect();
    let max_target = res_norms.iter().cloned().fold(0.0, f64::max).sqrt();
    let stop = config.greedy_tol * max_target;
    let mut history = Vec::new();

    loop {
        let max_res = res_norms.iter().cloned().fold(0.0, f64::max).sqrt();
        history.push(max_res);
        if max_res <= stop || selected.len() >= max_centers {
            break;
        }
        let Some(pick) = rule.select(&res_norms, &power_sq, &available) else {
            break;
        };
        let pivot = power[pick].value();
        if pivot < POWER_GUARD {
            break;
        }
        let m = selected.len();
        let center = entries[pick].mu;
        for l in 0..m {
            factor[(m, l)] = newton[pick][l].value() / pivots[l];
        }
        factor[(m, m)] = 1.0;
        pivots.push(pivot);
        let coeff: DVector<f64> = residual.row(pick).transpose() / pivot;
        beta.row_mut(m).copy_from(&coeff.transpose());
        for i in 0..n {
            let mut k = kern.eval(&entries[i].mu, &center);
            if i == pick {
                k += config.nugget;
            }
            let w = newton_value(k, &newton[i], &factor, m);
            newton[i].push(w);
            let v = w.value();
            if v != 0.0 {
                for t in 0..n_out {
                    residual[(i, t)] -= v * coeff[t];
                }
            }
            power[i].sub_scaled(w, v / pivot);
            power_sq[i] = power[i].value().max(0.0);
            res_norms[i] = row_norm_sq(&residual, i);
        }
        available[pick] = false;
        selected.push(pick);
    }

    let m = selected.len();
    let factor = factor.view((0, 0), (m, m)).into_owned();
    let beta = beta.rows(0, m).into_owned();
    let mut tail = 0.0;
    let mut native = vec![0.0; m + 1];
    for l in (0..m).rev() {
        tail += pivots[l] * dt * beta.row(l).norm_squared();
        native[l] = tail.sqrt();
    }
    // f(x) = k(x, X)ᵀ L⁻ᵀ β
    let mut coeff_block = beta;
    if m > 0
        && !factor
            .transpose()
            .solve_upper_triangular_mut(&mut coeff_block)
    {
        return Err(Error::CannotFit("singular Newton factor".into()));
    }

    Ok(KernelModel {
        centers: selected.iter().map(|&i| entries[i].mu).collect(),
        newton_factor: factor,
        pivots,
        coeff_block,
        config: config.clone(),
        param_box: *param_box,
        dt,
        residual_history: history,
        native_residual_history: native,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx() -> ParameterBox {
        ParameterBox::new([0.0, 1.0], [1.0, 100.0]).unwrap()
    }

    #[test]
    fn kernel_basics() {
        let c = KernelConfig::default();
        let a = ParameterPoint::new(0.3, 5.0);
        let b = ParameterPoint::new(0.9, 40.0);
        assert_eq!(kernel(&a, &a, &c, &bx()), 1.0);
        assert_eq!(kernel(&a, &b, &c, &bx()), kernel(&b, &a, &c, &bx()));
        // z-distance 2γ along Da
        let p = ParameterPoint::new(0.0, 10.0);
        let q = ParameterPoint::new(2.0 * c.shape, 10.0);
        assert!((kernel(&p, &q, &c, &bx()) - 0.1353352832366127).abs() < 1e-15);
    }

    #[test]
    fn pe_is_log_scaled() {
        let k = GaussianKernel::new(0.5, bx());
        assert!((k.normalize(&ParameterPoint::new(0.5, 10.0))[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn training_set_prefers_fom() {
        let mut set = TrainingSet::new();
        let mu = ParameterPoint::new(0.1, 2.0);
        let q = |v: f64| QoiVector::new(vec![v; 3], 0.1);
        assert_eq!(set.insert(mu, q(1.0), DataSource::Rb), InsertOutcome::Added);
        assert_eq!(
            set.insert(mu, q(2.0), DataSource::Fom),
            InsertOutcome::Replaced
        );
        assert_eq!(set.insert(mu, q(3.0), DataSource::Rb), InsertOutcome::Kept);
        assert_eq!(set.len(), 1);
        assert_eq!(set.entries()[0].qoi.values[0], 2.0);
        assert_eq!(set.entries()[0].source, DataSource::Fom);
    }

    #[test]
    fn empty_set_cannot_fit() {
        let err = fit(&TrainingSet::new(), &KernelConfig::default(), &bx()).unwrap_err();
        assert!(matches!(err, Error::CannotFit(_)));
    }

    #[test]
    fn empty_model_predicts_zero() {
        let m = KernelModel::empty(KernelConfig::default(), bx(), 4, 0.25);
        let mu = ParameterPoint::new(0.5, 3.0);
        assert_eq!(m.predict(&mu).values, vec![0.0; 4]);
        assert_eq!(m.power_function(&mu), 1.0);
    }

    #[test]
    fn single_pair_is_interpolated() {
        let mut set = TrainingSet::new();
        let mu = ParameterPoint::new(0.4, 7.0);
        set.insert(
            mu,
            QoiVector::new(vec![1.0, -2.0, 0.5], 0.5),
            DataSource::Fom,
        );
        let model = fit(&set, &KernelConfig::default(), &bx()).unwrap();
        assert_eq!(model.n_centers(), 1);
        let p = model.predict(&mu);
        for (a, b) in p.values.iter().zip([1.0, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(model.power_function(&mu) < 1e-8);
    }

    #[test]
    fn unknown_rule_is_rejected() {
        let cfg = KernelConfig {
            selection: "nope".into(),
            ..KernelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::UnknownStrategy { .. })));
    }
}
