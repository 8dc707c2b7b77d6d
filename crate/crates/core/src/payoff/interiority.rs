use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{CompiledModel, ConcaveExpr, PayoffError};
use crate::ext::Finite;
use crate::scenario::{ModelSpec, Preset, ScenarioTree};
use crate::seed;

/// A ball `‖z − center‖ ≤ radius` on which every leaf payoff is `≥ −lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorityCertificate {
    pub center: Vec<f64>,
    pub radius: f64,
    pub lower: f64,
}

impl InteriorityCertificate {
    /// The period-`t` block of the center.
    pub fn block(&self, t: usize, d: usize) -> &[f64] {
        &self.center[t * d..(t + 1) * d]
    }
}

const SAMPLES: usize = 1000;

/// Closed-form certificate for the built-in presets, with the radius at 90%
/// of the strict bound.
pub fn preset_certificate(model: &ModelSpec, tree: &ScenarioTree) -> Result<InteriorityCertificate, PayoffError> {
    let d = model.d;
    let t_max = tree.depth();
    let tf = t_max as f64;
    let s0 = &tree.node(tree.root()).prices;
    let utility = model.utility.as_ref().ok_or_else(|| PayoffError::Preset("utility is required".into()))?;
    let (center, radius, wealth_floor) = match model.preset {
        Preset::Frictionless | Preset::ProportionalTc => {
            let smax = s0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let rho = model.capital / (2.0 * d as f64 * tf * smax);
            let center: Vec<f64> = (0..t_max)
                .flat_map(|t| std::iter::repeat((t_max - t) as f64 * rho).take(d))
                .collect();
            let ssum: f64 = s0.iter().sum();
            if model.preset == Preset::Frictionless {
                let eps = 0.9 * rho / 3.0;
                (center, eps, model.capital - (tf * rho + eps) * ssum)
            } else {
                let k = model.kappa;
                let eps = 0.9 * rho * (1.0f64 / 3.0).min(tf * (1.0 - k) / (1.0 + k));
                (center, eps, model.capital - (1.0 + k) * (tf * rho + eps) * ssum)
            }
        }
        Preset::Liquidation => {
            let x = model.capital;
            let center = (0..t_max).map(|t| x * (1.0 - (t + 1) as f64 / (tf + 1.0))).collect();
            let eps = 0.9 * x / (3.0 * (tf + 1.0));
            // Every sold amount lies in (0, m] on the ball.
            let m = 5.0 * x / (3.0 * (tf + 1.0));
            (center, eps, (tf + 1.0) * m * (model.price_floor - model.eta * m))
        }
        Preset::CustomExpr => return Err(PayoffError::NoCertificate),
    };
    let lower = match utility.eval(Finite(wealth_floor)) {
        Finite(u) => (-u).max(1e-9),
        _ => {
            return Err(PayoffError::Interiority {
                leaf: "*".into(),
                value: "−∞".into(),
                bound: f64::INFINITY,
            })
        }
    };
    Ok(InteriorityCertificate { center, radius, lower })
}

/// Checks the certificate on pseudorandom points of the closed ball.
pub fn verify_certificate<R: Rng>(
    cert: &InteriorityCertificate,
    payoffs: &[ConcaveExpr],
    leaf_ids: &[String],
    samples: usize,
    rng: &mut R,
) -> Result<(), PayoffError> {
    let n = cert.center.len();
    let mut z = vec![0.0; n];
    for k in 0..samples {
        if k == 0 {
            z.copy_from_slice(&cert.center);
        } else {
            let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let r = cert.radius * rng.gen::<f64>().powf(1.0 / n as f64);
            for i in 0..n {
                z[i] = cert.center[i] + r * dir[i] / norm;
            }
        }
        for (p, id) in payoffs.iter().zip(leaf_ids) {
            let v = p.eval(&z);
            if !(v >= Finite(-cert.lower)) {
                return Err(PayoffError::Interiority { leaf: id.clone(), value: v.to_string(), bound: -cert.lower });
            }
        }
    }
    Ok(())
}

/// Certificate for a built-in preset, validated on 1000 sampled points.
pub fn check_interiority(
    model: &ModelSpec,
    tree: &ScenarioTree,
    compiled: &CompiledModel,
) -> Result<InteriorityCertificate, PayoffError> {
    let cert = preset_certificate(model, tree)?;
    let ids: Vec<String> = tree.leaves().iter().map(|&l| tree.node(l).id.clone()).collect();
    verify_certificate(&cert, &compiled.payoffs, &ids, SAMPLES, &mut seed::rng(seed::INTERIORITY))?;
    Ok(cert)
}

/// The certificate a solve uses: computed for presets, taken from the
/// configuration (after the same sampled check) for custom payoffs.
pub fn resolve_certificate(
    model: &ModelSpec,
    tree: &ScenarioTree,
    compiled: &CompiledModel,
) -> Result<InteriorityCertificate, PayoffError> {
    match (&model.preset, &model.certificate) {
        (Preset::CustomExpr, Some(cert)) => {
            let ids: Vec<String> = tree.leaves().iter().map(|&l| tree.node(l).id.clone()).collect();
            verify_certificate(cert, &compiled.payoffs, &ids, SAMPLES, &mut seed::rng(seed::INTERIORITY))?;
            Ok(cert.clone())
        }
        _ => check_interiority(model, tree, compiled),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payoff::UtilityAtom;
    use crate::scenario::NodeSpec;
    use std::collections::BTreeMap;

    fn chain(t: usize, s0: f64) -> ScenarioTree {
        let specs: Vec<NodeSpec> = (0..=t)
            .map(|i| NodeSpec {
                id: format!("n{i}"),
                children: if i < t { vec![format!("n{}", i + 1)] } else { vec![] },
                prices: vec![s0],
                measures: if i < t { vec![vec![1.0]] } else { vec![] },
            })
            .collect();
        ScenarioTree::from_specs(&specs).unwrap()
    }

    fn model(preset: Preset, capital: f64, kappa: f64) -> ModelSpec {
        ModelSpec {
            preset,
            d: 1,
            capital,
            kappa,
            eta: 0.0,
            utility: Some(UtilityAtom::exponential(1.0).unwrap()),
            price_floor: 0.0,
            payoffs: BTreeMap::new(),
            certificate: None,
        }
    }

    #[test]
    fn frictionless_formula() {
        let c = preset_certificate(&model(Preset::Frictionless, 1.0, 0.0), &chain(2, 1.0)).unwrap();
        assert_eq!(c.center, vec![0.5, 0.25]);
        assert!((c.radius - 0.075).abs() < 1e-15);
    }

    #[test]
    fn liquidation_formula() {
        let c = preset_certificate(&model(Preset::Liquidation, 1.0, 0.0), &chain(3, 1.0)).unwrap();
        assert_eq!(c.center, vec![0.75, 0.5, 0.25]);
        assert!((c.radius - 0.075).abs() < 1e-15);
    }

    #[test]
    fn transaction_cost_formula() {
        let c = preset_certificate(&model(Preset::ProportionalTc, 1.0, 0.5), &chain(1, 1.0)).unwrap();
        assert_eq!(c.center, vec![0.5]);
        assert!((c.radius - 0.15).abs() < 1e-15);
    }

    #[test]
    fn custom_needs_supplied_certificate() {
        let err = preset_certificate(&model(Preset::CustomExpr, 0.0, 0.0), &chain(1, 1.0)).unwrap_err();
        assert_eq!(err.to_string(), "no automatic certificate; supply one in config");
    }
}
