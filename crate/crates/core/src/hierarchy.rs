//! Adaptive FOM / RB / ML controller.
//!
//! Each query is routed to the cheapest model that is trusted: the kernel
//! surrogate if the trust policy accepts it, the reduced model if its error
//! bound is below the tolerance, the full-order model otherwise. Full-order
//! solves enrich the reduced basis, and every RB or FOM answer is collected as
//! training data for the surrogate.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{solve_fom, FomOperators, ParameterBox, ParameterPoint, QoiVector, TimeGrid};
use crate::kernel::{fit, DataSource, InsertOutcome, KernelConfig, KernelModel, TrainingSet};
use crate::pod::{self, Truncation};
use crate::rb::{Enrichment, EnrichmentSettings, ErrorBound, RbSolution, ReducedModel};
use crate::trust::{trust_policies, TrustOutcome, TrustPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "ML")]
    Ml,
    #[serde(rename = "RB")]
    Rb,
    #[serde(rename = "FOM")]
    Fom,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Ml, ModelKind::Rb, ModelKind::Fom];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Ml => "ML",
            ModelKind::Rb => "RB",
            ModelKind::Fom => "FOM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyConfig {
    /// RB tolerance `ε` on the output error bound.
    pub rom_tol: f64,
    pub retrain_every: usize,
    pub trust_threshold: usize,
    /// Name of the trust policy, see [`trust_policies`].
    pub trust_mode: String,
    /// Certificate-based trust accepts the surrogate if the certificate is at
    /// most `validation_slack · ε`.
    pub validation_slack: f64,
    pub enrichment_tol: f64,
    pub max_new_modes: usize,
    pub hapod_threshold: usize,
    pub hapod_chunks: usize,
    pub hapod_omega: f64,
    /// Seed the reduced basis and training set with FOM solves at the four
    /// box corners before the first query.
    pub warm_start_corners: bool,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        let e = EnrichmentSettings::default();
        Self {
            rom_tol: 1e-2,
            retrain_every: 10,
            trust_threshold: 50,
            trust_mode: "size_threshold".into(),
            validation_slack: 1.0,
            enrichment_tol: e.tolerance,
            max_new_modes: e.max_new_modes,
            hapod_threshold: e.hapod_threshold,
            hapod_chunks: e.hapod_chunks,
            hapod_omega: e.hapod_omega,
            warm_start_corners: false,
        }
    }
}

impl HierarchyConfig {
    pub fn enrichment(&self) -> EnrichmentSettings {
        EnrichmentSettings {
            tolerance: self.enrichment_tol,
            max_new_modes: self.max_new_modes,
            hapod_threshold: self.hapod_threshold,
            hapod_chunks: self.hapod_chunks,
            hapod_omega: self.hapod_omega,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.rom_tol > 0.0) {
            return bad("rom_tol must be positive");
        }
        if self.retrain_every == 0 {
            return bad("retrain_every must be positive");
        }
        if self.trust_threshold == 0 {
            return bad("trust_threshold must be positive");
        }
        if !(self.validation_slack > 0.0) {
            return bad("validation_slack must be positive");
        }
        if !(self.enrichment_tol > 0.0) {
            return bad("enrichment_tol must be positive");
        }
        if self.max_new_modes == 0 {
            return bad("max_new_modes must be positive");
        }
        if self.hapod_chunks == 0 {
            return bad("hapod_chunks must be positive");
        }
        if !(self.hapod_omega > 0.0 && self.hapod_omega < 1.0) {
            return bad("hapod_omega must lie in (0, 1)");
        }
        trust_policies().get(&self.trust_mode)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub index: usize,
    pub mu: ParameterPoint,
    pub model_used: ModelKind,
    /// Seconds.
    pub wall_time: f64,
    pub delta_rb: Option<f64>,
    pub ml_certificate: Option<f64>,
    pub rb_dim_after: usize,
    pub train_size_after: usize,
}

/// `Δ_rb(μ) + ‖f_rb(μ) − f_ml(μ)‖`, an upper bound on `‖f_h(μ) − f_ml(μ)‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlCertificate {
    pub value: f64,
    pub delta_rb: f64,
    pub rb_ml_distance: f64,
}

/// Work counters. Timing-free, so they also document which branch ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveCounters {
    pub fom_solves: usize,
    pub rb_solves: usize,
    pub enrichments: usize,
    pub stagnations: usize,
    pub fits: usize,
    pub ml_predictions: usize,
}

pub struct AdaptiveState {
    ops: Arc<FomOperators>,
    grid: TimeGrid,
    c0: Vec<f64>,
    param_box: ParameterBox,
    config: HierarchyConfig,
    kernel_config: KernelConfig,
    rom: ReducedModel,
    ml: KernelModel,
    ml_fitted: bool,
    training: TrainingSet,
    size_at_last_fit: usize,
    trust: Box<dyn TrustPolicy>,
    counters: SolveCounters,
    n_queries: usize,
}

impl fmt::Debug for AdaptiveState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdaptiveState")
            .field("n_dofs", &self.ops.n_dofs())
            .field("rb_dim", &self.rom.dim())
            .field("train_size", &self.training.len())
            .field("trust", &self.trust.name())
            .field("counters", &self.counters)
            .finish()
    }
}

impl AdaptiveState {
    /// Fresh state: empty basis, empty training set, `f_ml = 0`. Starts from
    /// the zero initial condition.
    pub fn new(
        ops: Arc<FomOperators>,
        grid: TimeGrid,
        param_box: ParameterBox,
        config: HierarchyConfig,
        kernel_config: KernelConfig,
    ) -> Result<Self> {
        config.validate()?;
        kernel_config.validate()?;
        let trust = trust_policies().get(&config.trust_mode)?(&config);
        let c0 = ops.zero_state();
        let rom = ReducedModel::empty(&ops, &c0)?;
        let ml = KernelModel::empty(kernel_config.clone(), param_box, grid.n_steps(), grid.dt());
        let mut state = Self {
            ops,
            grid,
            c0,
            param_box,
            config,
            kernel_config,
            rom,
            ml,
            ml_fitted: false,
            training: TrainingSet::new(),
            size_at_last_fit: 0,
            trust,
            counters: SolveCounters::default(),
            n_queries: 0,
        };
        if state.config.warm_start_corners {
            state.warm_start_corners()?;
        }
        Ok(state)
    }

    /// FOM solves at the four box corners, one POD of all their snapshots as
    /// the initial basis, and the four FOM outputs as training data.
    fn warm_start_corners(&mut self) -> Result<()> {
        let corners = self.param_box.corners();
        let mut chunks = Vec::with_capacity(4);
        let mut training = self.training.clone();
        for mu in corners {
            let (traj, qoi) = solve_fom(&self.ops, &mu, &self.grid, &self.c0)?;
            self.counters.fom_solves += 1;
            training.insert(mu, qoi, DataSource::Fom);
            chunks.push(traj.into_snapshots());
        }
        let settings = self.config.enrichment();
        let basis = if chunks.iter().map(|c| c.ncols()).sum::<usize>() > settings.hapod_threshold {
            let total_sq: f64 = chunks
                .iter()
                .map(|c| c.component_mul(&self.ops.ip.mul_mat(c)).sum())
                .sum();
            let m: usize = chunks.iter().map(|c| c.ncols()).sum();
            let eps = settings.tolerance * (total_sq / m as f64).sqrt();
            pod::hapod(&chunks, &self.ops.ip, eps, settings.hapod_omega)?
        } else {
            let m: usize = chunks.iter().map(|c| c.ncols()).sum();
            let mut all = nalgebra::DMatrix::zeros(self.ops.n_dofs(), m);
            let mut offset = 0;
            for c in &chunks {
                all.columns_mut(offset, c.ncols()).copy_from(c);
                offset += c.ncols();
            }
            pod::pod(&all, &self.ops.ip, Truncation::Energy(settings.tolerance))
        };
        let basis = basis.truncate(4 * settings.max_new_modes);
        self.rom = ReducedModel::project(&self.ops, basis.modes, &self.c0)?;
        self.training = training;
        self.counters.enrichments += 1;
        Ok(())
    }

    pub fn ops(&self) -> &FomOperators {
        &self.ops
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn param_box(&self) -> &ParameterBox {
        &self.param_box
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.c0
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.config
    }

    pub fn reduced_model(&self) -> &ReducedModel {
        &self.rom
    }

    pub fn kernel_model(&self) -> &KernelModel {
        &self.ml
    }

    pub fn ml_fitted(&self) -> bool {
        self.ml_fitted
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.training
    }

    pub fn counters(&self) -> SolveCounters {
        self.counters
    }

    pub fn trust_policy(&self) -> &dyn TrustPolicy {
        self.trust.as_ref()
    }

    /// Replaces the reduced model, e.g. with a precomputed basis.
    pub fn set_reduced_model(&mut self, rom: ReducedModel) {
        self.rom = rom;
    }

    /// RB output and its error bound at `mu`.
    pub fn evaluate_rb(&self, mu: &ParameterPoint) -> Result<(RbSolution, ErrorBound)> {
        let sol = self.rom.solve(mu, &self.grid)?;
        let bound = self.rom.estimate(mu, &sol, &self.grid)?;
        Ok((sol, bound))
    }

    /// Computes the ML certificate. Uses only reduced and kernel quantities.
    pub fn certify(&self, mu: &ParameterPoint) -> Result<MlCertificate> {
        Ok(self.certify_with_rb(mu)?.0)
    }

    pub(crate) fn certify_with_rb(
        &self,
        mu: &ParameterPoint,
    ) -> Result<(MlCertificate, RbSolution, ErrorBound)> {
        let (sol, bound) = self.evaluate_rb(mu)?;
        let ml = self.ml.predict(mu);
        let rb_ml_distance = sol.qoi.distance(&ml);
        let cert = MlCertificate {
            value: bound.delta_rb + rb_ml_distance,
            delta_rb: bound.delta_rb,
            rb_ml_distance,
        };
        Ok((cert, sol, bound))
    }

    pub fn trust(&self, mu: &ParameterPoint) -> Result<bool> {
        Ok(self.trust.assess(self, mu)?.trusted)
    }

    pub fn predict_ml(&self, mu: &ParameterPoint) -> QoiVector {
        self.ml.predict(mu)
    }

    /// Fits a new surrogate if the training set grew by `retrain_every`
    /// unique points since the last fit. On failure the previous model stays.
    pub fn maybe_retrain(&mut self) -> Result<bool> {
        match self.retrain_due(&self.training)? {
            Some(model) => {
                self.install_model(model);
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn retrain_due(&self, training: &TrainingSet) -> Result<Option<KernelModel>> {
        if training.len() >= self.size_at_last_fit + self.config.retrain_every {
            Ok(Some(fit(training, &self.kernel_config, &self.param_box)?))
        } else {
            Ok(None)
        }
    }

    fn install_model(&mut self, model: KernelModel) {
        self.ml = model;
        self.ml_fitted = true;
        self.size_at_last_fit = self.training.len();
        self.counters.fits += 1;
    }

    /// Answers one query. State changes only if the whole query succeeds.
    pub fn query(&mut self, mu: &ParameterPoint) -> Result<(QoiVector, QueryRecord)> {
        self.param_box.check(mu)?;
        let start = Instant::now();
        let index = self.n_queries;

        let TrustOutcome {
            trusted,
            certificate,
            rb,
        } = self.trust.assess(self, mu)?;
        let ml_certificate = certificate.map(|c| c.value);
        let mut counters = self.counters;
        if rb.is_some() {
            counters.rb_solves += 1;
        }

        if trusted {
            let answer = self.ml.predict(mu);
            counters.ml_predictions += 1;
            self.counters = counters;
            self.n_queries += 1;
            let record = QueryRecord {
                index,
                mu: *mu,
                model_used: ModelKind::Ml,
                wall_time: start.elapsed().as_secs_f64(),
                delta_rb: certificate.map(|c| c.delta_rb),
                ml_certificate,
                rb_dim_after: self.rom.dim(),
                train_size_after: self.training.len(),
            };
            return Ok((answer, record));
        }

        let (sol, bound) = match rb {
            Some(pair) => pair,
            None => {
                counters.rb_solves += 1;
                self.evaluate_rb(mu)?
            }
        };

        let mut training = self.training.clone();
        let (answer, kind, new_rom) = if bound.delta_rb <= self.config.rom_tol {
            training.insert(*mu, sol.qoi.clone(), DataSource::Rb);
            (sol.qoi, ModelKind::Rb, None)
        } else {
            let (traj, fom_qoi) = solve_fom(&self.ops, mu, &self.grid, &self.c0)?;
            counters.fom_solves += 1;
            let new_rom = match self.rom.enrich(
                &self.ops,
                &traj,
                &self.c0,
                &self.config.enrichment(),
            )? {
                Enrichment::Enriched { model, .. } => {
                    counters.enrichments += 1;
                    Some(model)
                }
                Enrichment::Stagnated => {
                    counters.stagnations += 1;
                    log::warn!(
                        "no enrichment possible at (da = {}, pe = {}) with bound {:.3e} > {:.3e}; returning FOM output",
                        mu.da,
                        mu.pe,
                        bound.delta_rb,
                        self.config.rom_tol
                    );
                    None
                }
            };
            if training.insert(*mu, fom_qoi.clone(), DataSource::Fom) == InsertOutcome::Kept {
                unreachable!("FOM data always replaces");
            }
            (fom_qoi, ModelKind::Fom, new_rom)
        };

        let new_ml = self.retrain_due(&training)?;

        // commit
        if let Some(rom) = new_rom {
            self.rom = rom;
        }
        self.training = training;
        self.counters = counters;
        if let Some(model) = new_ml {
            self.install_model(model);
        }
        self.n_queries += 1;

        let record = QueryRecord {
            index,
            mu: *mu,
            model_used: kind,
            wall_time: start.elapsed().as_secs_f64(),
            delta_rb: Some(bound.delta_rb),
            ml_certificate,
            rb_dim_after: self.rom.dim(),
            train_size_after: self.training.len(),
        };
        Ok((answer, record))
    }
}
