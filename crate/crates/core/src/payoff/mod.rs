//! Certified-concave payoffs: the expression language, the built-in market
//! presets, and interiority certificates.

mod expr;
mod interiority;
mod preset;

use thiserror::Error;

pub use expr::{ConcaveExpr, ExprError, PiecewiseLinear, PolyhedralRep, PsdMatrix, UtilityAtom};
pub use interiority::{
    check_interiority, preset_certificate, resolve_certificate, verify_certificate, InteriorityCertificate,
};
pub use preset::compile_preset;

use crate::scenario::{ModelSpec, Preset, ScenarioTree};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PayoffError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("preset mismatch: {0}")]
    Preset(String),
    #[error("no automatic certificate; supply one in config")]
    NoCertificate,
    #[error("interiority check failed at leaf {leaf}: payoff {value} < −c = {bound}")]
    Interiority { leaf: String, value: String, bound: f64 },
}

/// Leaf payoffs of a model, indexed by leaf position, together with their
/// horizon functions.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub dim: usize,
    pub d: usize,
    pub payoffs: Vec<ConcaveExpr>,
    pub horizons: Vec<ConcaveExpr>,
    /// Upper bound `C` on every payoff.
    pub bound: f64,
}

impl CompiledModel {
    pub fn new(model: &ModelSpec, tree: &ScenarioTree) -> Result<Self, PayoffError> {
        let payoffs = tree
            .leaves()
            .iter()
            .map(|&l| match model.preset {
                Preset::CustomExpr => model
                    .payoffs
                    .get(&tree.node(l).id)
                    .cloned()
                    .ok_or_else(|| PayoffError::Preset(format!("no payoff for leaf {}", tree.node(l).id))),
                _ => compile_preset(model, tree, l),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let horizons = payoffs.iter().map(|p| p.horizon()).collect::<Result<Vec<_>, _>>()?;
        let bound = model
            .upper_bound()
            .ok_or_else(|| PayoffError::Preset("payoff is not bounded above".into()))?;
        Ok(Self { dim: model.d * tree.depth(), d: model.d, payoffs, horizons, bound })
    }
}
