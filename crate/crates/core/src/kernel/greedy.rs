use std::sync::OnceLock;

use crate::registry::Registry;

/// Picks the next center among the available training points.
pub trait GreedyRule: Send + Sync {
    fn name(&self) -> &'static str;

    /// `residual_sq[i]` is the squared L²-in-time residual norm at point `i`,
    /// `power_sq[i]` the squared power function. Ties go to the lowest index.
    fn select(&self, residual_sq: &[f64], power_sq: &[f64], available: &[bool]) -> Option<usize>;
}

pub type GreedyRuleFactory = fn() -> Box<dyn GreedyRule>;

/// Largest residual.
#[derive(Debug, Default, Clone, Copy)]
pub struct FGreedy;

/// Largest power function.
#[derive(Debug, Default, Clone, Copy)]
pub struct PGreedy;

fn argmax(scores: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

impl GreedyRule for FGreedy {
    fn name(&self) -> &'static str {
        "f_greedy"
    }

    fn select(&self, residual_sq: &[f64], _power_sq: &[f64], available: &[bool]) -> Option<usize> {
        argmax(
            residual_sq
                .iter()
                .enumerate()
                .filter(|(i, _)| available[*i])
                .map(|(i, &r)| (i, r)),
        )
    }
}

impl GreedyRule for PGreedy {
    fn name(&self) -> &'static str {
        "p_greedy"
    }

    fn select(&self, _residual_sq: &[f64], power_sq: &[f64], available: &[bool]) -> Option<usize> {
        argmax(
            power_sq
                .iter()
                .enumerate()
                .filter(|(i, _)| available[*i])
                .map(|(i, &p)| (i, p)),
        )
    }
}

fn f_greedy() -> Box<dyn GreedyRule> {
    Box::new(FGreedy)
}

fn p_greedy() -> Box<dyn GreedyRule> {
    Box::new(PGreedy)
}

pub fn greedy_rules() -> &'static Registry<GreedyRuleFactory> {
    static RULES: OnceLock<Registry<GreedyRuleFactory>> = OnceLock::new();
    RULES.get_or_init(|| {
        Registry::new("greedy rule")
            .with("f_greedy", f_greedy as GreedyRuleFactory)
            .with("p_greedy", p_greedy as GreedyRuleFactory)
    })
}
