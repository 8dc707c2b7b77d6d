//! Robust utility maximization on finite scenario trees.
//!
//! An investor picks an adapted strategy on an event tree while an adversary
//! picks, at every node, one law from a finite ambiguity set. The crate solves
//! `sup_H inf_P E^P[Ψ(H)]` by backward recursion over one-period problems,
//! after checking a no-arbitrage condition phrased through horizon
//! (recession) functions of the payoffs, and cross-checks results against a
//! brute-force grid solver.

pub mod canon;
pub mod dp;
pub mod ext;
pub mod lp;
pub mod na;
pub mod one_step;
pub mod oracle;
pub mod optim;
pub mod payoff;
pub mod report;
pub mod scenario;
pub mod seed;

pub use ext::{ExtReal, Finite, NegInf};
