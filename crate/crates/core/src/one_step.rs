//! The one-period robust problem `sup_h min_k Σ_i p_k(i) ψ_i(h)`.
//!
//! The maximization drops the lineality space of the recession cone (the
//! objective is constant along it), brackets a superlevel set on the
//! orthogonal complement, where the objective is coercive, and searches the
//! bracket.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::ext::{expectation, ExtReal, Finite, NegInf};
use crate::na::{null_space, sampled_linearity, sphere_directions, Linearity};
use crate::optim;
use crate::seed;

/// Pure evaluator `R^d → R ∪ {−∞}`.
pub type Evaluator<'a> = Box<dyn Fn(&[f64]) -> ExtReal + Send + Sync + 'a>;

/// Largest bracket half-width before giving up.
pub const MAX_RADIUS: f64 = 1e9;
const RESTARTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OneStepError {
    #[error("recession cone is not linear; arbitrage direction {certificate:?}")]
    NonlinearCone { certificate: Vec<f64> },
    #[error("bracketing exceeded half-width {MAX_RADIUS:e}")]
    Unbounded,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Relative gap under which two expectations count as tied.
pub const TIE_TOL: f64 = 1e-9;

/// Indices within [`TIE_TOL`] of the minimum, ascending.
pub fn near_minimal(values: &[ExtReal]) -> Vec<usize> {
    let min = values.iter().copied().fold(Finite(f64::INFINITY), ExtReal::min);
    (0..values.len())
        .filter(|&k| match (values[k], min) {
            (Finite(v), Finite(m)) => v - m <= TIE_TOL * (1.0 + m.abs()),
            (v, m) => v == m,
        })
        .collect()
}

pub struct OneStepProblem<'a> {
    pub d: usize,
    /// `ψ_i`, one per child.
    pub children: Vec<Evaluator<'a>>,
    /// `ψ_i^∞`; only consulted when no linearity information is supplied.
    pub horizons: Vec<Evaluator<'a>>,
    pub measures: Vec<Vec<f64>>,
    /// Interiority block used as the starting point.
    pub start: Vec<f64>,
    /// Precomputed recession-cone analysis, if any.
    pub linearity: Option<Linearity>,
    /// Evaluate children concurrently.
    pub parallel: bool,
    evals: AtomicUsize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneStepSolution {
    pub value: ExtReal,
    pub argmax: Vec<f64>,
    /// Measures attaining the minimum at the argmax.
    pub active: Vec<usize>,
    /// Objective evaluations used.
    pub iterations: usize,
    /// Argument tolerance of the final search.
    pub achieved_tol: f64,
    /// Half-width of the final search box around the start.
    pub radius: f64,
    /// Orthonormal basis of the lineality space.
    pub lineality: Vec<Vec<f64>>,
}

impl<'a> OneStepProblem<'a> {
    pub fn new(d: usize, children: Vec<Evaluator<'a>>, measures: Vec<Vec<f64>>, start: Vec<f64>) -> Self {
        Self {
            d,
            children,
            horizons: Vec::new(),
            measures,
            start,
            linearity: None,
            parallel: false,
            evals: AtomicUsize::new(0),
        }
    }

    pub fn with_horizons(mut self, horizons: Vec<Evaluator<'a>>) -> Self {
        self.horizons = horizons;
        self
    }

    pub fn with_linearity(mut self, lin: Linearity) -> Self {
        self.linearity = Some(lin);
        self
    }

    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    /// Children charged by at least one measure.
    pub fn support(&self) -> Vec<usize> {
        (0..self.children.len()).filter(|&i| self.measures.iter().any(|m| m[i] > 0.0)).collect()
    }

    fn combine(&self, values: &[ExtReal]) -> ExtReal {
        self.measures.iter().map(|p| expectation(p, values)).fold(Finite(f64::INFINITY), ExtReal::min)
    }

    fn child_values(&self, fs: &[Evaluator<'a>], h: &[f64]) -> Vec<ExtReal> {
        let charged = |i: usize| self.measures.iter().any(|m| m[i] > 0.0);
        if self.parallel {
            fs.par_iter().enumerate().map(|(i, f)| if charged(i) { f(h) } else { Finite(0.0) }).collect()
        } else {
            fs.iter().enumerate().map(|(i, f)| if charged(i) { f(h) } else { Finite(0.0) }).collect()
        }
    }

    /// `Φ(h) = min_k Σ_i p_k(i) ψ_i(h)`, with `0·(−∞) = 0`.
    pub fn phi(&self, h: &[f64]) -> ExtReal {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.combine(&self.child_values(&self.children, h))
    }

    /// `Φ^∞(h) = min_k Σ_i p_k(i) ψ_i^∞(h)`.
    pub fn phi_inf(&self, h: &[f64]) -> ExtReal {
        self.combine(&self.child_values(&self.horizons, h))
    }

    /// Measures attaining the minimum in `Φ(h)`, lowest index first.
    pub fn active_measures(&self, h: &[f64]) -> Vec<usize> {
        let values = self.child_values(&self.children, h);
        let exps: Vec<ExtReal> = self.measures.iter().map(|p| expectation(p, &values)).collect();
        near_minimal(&exps)
    }

    /// Linearity of `{h : Φ^∞(h) ≥ 0}`, from the supplied analysis or by
    /// probing `phi_inf`.
    pub fn cone_linearity(&self) -> Linearity {
        match &self.linearity {
            Some(l) => l.clone(),
            None => sampled_linearity(self.d, |h| {
                let scale = 1.0 + h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                self.phi_inf(h) >= Finite(-1e-12 * scale)
            }),
        }
    }

    fn finite_start(&self) -> Option<Vec<f64>> {
        if self.phi(&self.start).is_finite() {
            return Some(self.start.clone());
        }
        let zero = vec![0.0; self.d];
        if self.phi(&zero).is_finite() {
            return Some(zero);
        }
        let dirs = sphere_directions(self.d.max(1), 64);
        let mut r = 0.5;
        while r <= 1e3 {
            for u in dirs.iter().take(if self.d == 1 { 2 } else { 64 }) {
                let h: Vec<f64> = self.start.iter().zip(u).map(|(s, v)| s + r * v).collect();
                if self.phi(&h).is_finite() {
                    return Some(h);
                }
            }
            r *= 2.0;
        }
        None
    }

    /// Maximizes `Φ` to within `tol`.
    pub fn robust_maximize(&self, tol: f64) -> Result<OneStepSolution, OneStepError> {
        let d = self.d;
        if self.start.len() != d {
            return Err(OneStepError::Dimension { expected: d, got: self.start.len() });
        }
        let lin = self.cone_linearity();
        if let Some(cert) = lin.certificate {
            return Err(OneStepError::NonlinearCone { certificate: cert });
        }
        let lineality = lin.lineality;
        let basis = null_space(&lineality, d);
        let evals_before = self.evals.load(Ordering::Relaxed);
        let finish = |argmax: Vec<f64>, value: ExtReal, xtol: f64, radius: f64| OneStepSolution {
            active: self.active_measures(&argmax),
            argmax,
            value,
            iterations: self.evals.load(Ordering::Relaxed) - evals_before,
            achieved_tol: xtol,
            radius,
            lineality: lineality.clone(),
        };

        let Some(h0) = self.finite_start() else {
            return Ok(finish(self.start.clone(), NegInf, 0.0, 0.0));
        };
        let k = basis.len();
        if k == 0 {
            let v = self.phi(&h0);
            return Ok(finish(h0, v, 0.0, 0.0));
        }
        // h(y) = offset + B·y, with offset the lineality component of h0
        let y0: Vec<f64> = basis.iter().map(|b| b.iter().zip(&h0).map(|(x, y)| x * y).sum()).collect();
        let mut offset = h0.clone();
        for (b, c) in basis.iter().zip(&y0) {
            for (o, v) in offset.iter_mut().zip(b) {
                *o -= c * v;
            }
        }
        let to_h = |y: &[f64]| -> Vec<f64> {
            let mut h = offset.clone();
            for (b, c) in basis.iter().zip(y) {
                for (o, v) in h.iter_mut().zip(b) {
                    *o += c * v;
                }
            }
            h
        };
        let f = |y: &[f64]| self.phi(&to_h(y));
        let center = f(&y0);

        let mut radius = 1.0;
        loop {
            if radius > MAX_RADIUS {
                return Err(OneStepError::Unbounded);
            }
            if boundary_samples(&y0, radius).iter().all(|y| !(f(y) >= center + Finite(-1.0))) {
                break;
            }
            radius *= 2.0;
        }

        let mut rng = seed::rng(seed::RESTARTS);
        loop {
            let lo: Vec<f64> = y0.iter().map(|c| c - radius).collect();
            let hi: Vec<f64> = y0.iter().map(|c| c + radius).collect();
            let xtol = (1e-3 * tol).min(1e-10) * radius.max(1.0);
            let best = optim::maximize_box(&f, &lo, &hi, &y0, xtol, tol, RESTARTS, &mut rng);
            let on_edge = best.x.iter().zip(&y0).any(|(y, c)| (y - c).abs() >= radius * (1.0 - 1e-6));
            if on_edge && best.value.is_finite() && radius * 2.0 <= MAX_RADIUS {
                radius *= 2.0;
                continue;
            }
            if on_edge && radius * 2.0 > MAX_RADIUS {
                return Err(OneStepError::Unbounded);
            }
            let h = to_h(&best.x);
            let v = self.phi(&h);
            return Ok(finish(h, v, xtol, radius));
        }
    }
}

/// Axis points and, in low dimension, corners of the box boundary.
fn boundary_samples(c: &[f64], r: f64) -> Vec<Vec<f64>> {
    let k = c.len();
    let mut out = Vec::new();
    for j in 0..k {
        for s in [-1.0, 1.0] {
            let mut y = c.to_vec();
            y[j] += s * r;
            out.push(y);
        }
    }
    if (2..=4).contains(&k) {
        for mask in 0..(1usize << k) {
            out.push((0..k).map(|j| c[j] + if mask >> j & 1 == 1 { r } else { -r }).collect());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev<'a>(f: impl Fn(&[f64]) -> ExtReal + Send + Sync + 'a) -> Evaluator<'a> {
        Box::new(f)
    }

    #[test]
    fn phi_single_measure_quadratic() {
        let p = OneStepProblem::new(1, vec![ev(|h| Finite(1.0 - h[0] * h[0]))], vec![vec![1.0]], vec![0.0]);
        assert_eq!(p.phi(&[0.5]), Finite(0.75));
    }

    #[test]
    fn phi_min_over_point_masses() {
        let p = OneStepProblem::new(
            1,
            vec![ev(|h| Finite(h[0])), ev(|h| Finite(-h[0]))],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0],
        );
        for h in [-2.0, 0.0, 3.0] {
            assert_eq!(p.phi(&[h]), Finite(-f64::abs(h)));
        }
    }

    #[test]
    fn phi_exponential_children_at_zero() {
        let p = OneStepProblem::new(
            1,
            vec![ev(|h| Finite(-(-(1.0 + h[0])).exp())), ev(|h| Finite(-(-(1.0 - 0.5 * h[0])).exp()))],
            vec![vec![0.5, 0.5]],
            vec![0.0],
        );
        assert_eq!(p.phi(&[0.0]), Finite(-(-1.0f64).exp()));
    }

    #[test]
    fn zero_mass_children_ignore_neg_inf() {
        let p = OneStepProblem::new(1, vec![ev(|_| Finite(1.0)), ev(|_| NegInf)], vec![vec![1.0, 0.0]], vec![0.0]);
        assert_eq!(p.phi(&[0.0]), Finite(1.0));
        assert_eq!(p.support(), vec![0]);
    }

    #[test]
    fn maximize_quadratic() {
        let p = OneStepProblem::new(1, vec![ev(|h| Finite(1.0 - h[0] * h[0]))], vec![vec![1.0]], vec![0.7])
            .with_horizons(vec![ev(|h| if h[0] == 0.0 { Finite(0.0) } else { NegInf })]);
        let s = p.robust_maximize(1e-8).unwrap();
        assert!(s.argmax[0].abs() < 1e-4);
        assert!((s.value.to_f64() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn one_sided_market_is_rejected() {
        // ΔS ∈ {0, 1}, exponential utility: horizon is 0 on h ≥ 0
        let p = OneStepProblem::new(
            1,
            vec![ev(|_| Finite(-(-1.0f64).exp())), ev(|h| Finite(-(-(1.0 + h[0])).exp()))],
            vec![vec![0.5, 0.5]],
            vec![0.25],
        )
        .with_horizons(vec![ev(|_| Finite(0.0)), ev(|h| if h[0] >= 0.0 { Finite(0.0) } else { NegInf })]);
        match p.robust_maximize(1e-7) {
            Err(OneStepError::NonlinearCone { certificate }) => assert_eq!(certificate, vec![1.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_along_lineality() {
        // Φ(h) = 1 − (h0 − h1)² is constant along (1, 1)
        let p = OneStepProblem::new(2, vec![ev(|h| Finite(1.0 - (h[0] - h[1]).powi(2)))], vec![vec![1.0]], vec![0.3, -0.2])
            .with_horizons(vec![ev(|h| if (h[0] - h[1]).abs() < 1e-12 { Finite(0.0) } else { NegInf })]);
        let s = p.robust_maximize(1e-9).unwrap();
        assert_eq!(s.lineality.len(), 1);
        assert!((s.value.to_f64() - 1.0).abs() < 1e-9);
    }
}
