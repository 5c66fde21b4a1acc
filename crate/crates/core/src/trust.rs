//! Trust policies deciding when the kernel surrogate may answer a query.

use std::sync::OnceLock;

use crate::error::Result;
use crate::fem::ParameterPoint;
use crate::hierarchy::{AdaptiveState, HierarchyConfig, MlCertificate};
use crate::rb::{ErrorBound, RbSolution};
use crate::registry::Registry;

/// Result of a trust assessment. RB data computed along the way is handed
/// back so the controller does not solve twice.
#[derive(Debug, Clone)]
pub struct TrustOutcome {
    pub trusted: bool,
    pub certificate: Option<MlCertificate>,
    pub rb: Option<(RbSolution, ErrorBound)>,
}

impl TrustOutcome {
    fn plain(trusted: bool) -> Self {
        Self {
            trusted,
            certificate: None,
            rb: None,
        }
    }
}

pub trait TrustPolicy: Send + Sync {
    fn name(&self) -> &'static str;

    fn assess(&self, state: &AdaptiveState, mu: &ParameterPoint) -> Result<TrustOutcome>;
}

pub type TrustPolicyFactory = fn(&HierarchyConfig) -> Box<dyn TrustPolicy>;

/// Trusts a fitted surrogate once the training set reaches a fixed size.
#[derive(Debug, Clone, Copy)]
pub struct SizeThreshold {
    pub threshold: usize,
}

impl TrustPolicy for SizeThreshold {
    fn name(&self) -> &'static str {
        "size_threshold"
    }

    fn assess(&self, state: &AdaptiveState, _mu: &ParameterPoint) -> Result<TrustOutcome> {
        Ok(TrustOutcome::plain(
            state.ml_fitted() && state.training_set().len() >= self.threshold,
        ))
    }
}

/// Trusts the surrogate when its certificate is at most `slack · ε`. Costs
/// one RB solve per query.
#[derive(Debug, Clone, Copy)]
pub struct AlwaysValidate {
    pub slack: f64,
    pub rom_tol: f64,
}

impl TrustPolicy for AlwaysValidate {
    fn name(&self) -> &'static str {
        "always_validate"
    }

    fn assess(&self, state: &AdaptiveState, mu: &ParameterPoint) -> Result<TrustOutcome> {
        if !state.ml_fitted() {
            return Ok(TrustOutcome::plain(false));
        }
        let (cert, sol, bound) = state.certify_with_rb(mu)?;
        Ok(TrustOutcome {
            trusted: cert.value <= self.slack * self.rom_tol,
            certificate: Some(cert),
            rb: Some((sol, bound)),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Never;

impl TrustPolicy for Never {
    fn name(&self) -> &'static str {
        "never"
    }

    fn assess(&self, _state: &AdaptiveState, _mu: &ParameterPoint) -> Result<TrustOutcome> {
        Ok(TrustOutcome::plain(false))
    }
}

fn size_threshold(c: &HierarchyConfig) -> Box<dyn TrustPolicy> {
    Box::new(SizeThreshold {
        threshold: c.trust_threshold,
    })
}

fn always_validate(c: &HierarchyConfig) -> Box<dyn TrustPolicy> {
    Box::new(AlwaysValidate {
        slack: c.validation_slack,
        rom_tol: c.rom_tol,
    })
}

fn never(_: &HierarchyConfig) -> Box<dyn TrustPolicy> {
    Box::new(Never)
}

pub fn trust_policies() -> &'static Registry<TrustPolicyFactory> {
    static POLICIES: OnceLock<Registry<TrustPolicyFactory>> = OnceLock::new();
    POLICIES.get_or_init(|| {
        Registry::new("trust mode")
            .with("size_threshold", size_threshold as TrustPolicyFactory)
            .with("always_validate", always_validate as TrustPolicyFactory)
            .with("never", never as TrustPolicyFactory)
    })
}
