use nalgebra::DMatrix;

use super::{ConcaveExpr, PayoffError, PsdMatrix};
use crate::scenario::{ModelSpec, NodeId, Preset, ScenarioTree};

/// Payoff `Ψ(ω_leaf, ·)` over `z ∈ R^{dT}`, with `z[t·d + j]` the holding of
/// asset `j` over period `t`.
pub fn compile_preset(model: &ModelSpec, tree: &ScenarioTree, leaf: NodeId) -> Result<ConcaveExpr, PayoffError> {
    if !tree.node(leaf).is_terminal() {
        return Err(PayoffError::Preset(format!("node {} is not a leaf", tree.node(leaf).id)));
    }
    let d = model.d;
    let t_max = tree.depth();
    let prices = tree.price_path(leaf);
    if prices.iter().any(|s| s.len() != d) {
        return Err(PayoffError::Preset(format!("price dimension differs from d = {d}")));
    }
    let n = d * t_max;
    let mut gains = vec![0.0; n];
    for t in 0..t_max {
        for j in 0..d {
            gains[t * d + j] = prices[t + 1][j] - prices[t][j];
        }
    }
    let utility = || {
        model
            .utility
            .clone()
            .ok_or_else(|| PayoffError::Preset("utility is required".into()))
    };
    let wealth = match model.preset {
        Preset::Frictionless => ConcaveExpr::affine(gains, model.capital),
        Preset::ProportionalTc => {
            let mut terms = vec![ConcaveExpr::affine(gains, model.capital)];
            for t in 0..t_max {
                for j in 0..d {
                    let weight = model.kappa * prices[t][j];
                    if weight == 0.0 {
                        continue;
                    }
                    let mut a = vec![0.0; n];
                    a[t * d + j] = 1.0;
                    if t > 0 {
                        a[(t - 1) * d + j] = -1.0;
                    }
                    terms.push(ConcaveExpr::scale(weight, ConcaveExpr::neg_abs_affine(a, 0.0))?);
                }
            }
            ConcaveExpr::Sum(terms)
        }
        Preset::Liquidation => {
            if d != 1 {
                return Err(PayoffError::Preset("liquidation requires d = 1".into()));
            }
            let x = model.capital;
            let eta = model.eta;
            // Sold amounts D_t = H_{t-1} − H_t (t = 0..T) with H_{-1} = X, H_T = 0
            // are D = X·e_0 + A·z.
            let a = DMatrix::from_fn(t_max + 1, t_max, |r, c| {
                if r == c {
                    -1.0
                } else if r == c + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            let mut lin = gains;
            lin[0] += 2.0 * eta * x;
            let affine = ConcaveExpr::affine(lin, x * prices[0][0] - eta * x * x);
            if eta == 0.0 {
                affine
            } else {
                let q = PsdMatrix::new(a.transpose() * a * eta)?;
                ConcaveExpr::Sum(vec![affine, ConcaveExpr::NegQuadratic(q)])
            }
        }
        Preset::CustomExpr => {
            return Err(PayoffError::Preset("custom_expr payoffs come from the configuration".into()))
        }
    };
    Ok(ConcaveExpr::compose(utility()?, wealth))
}
