use std::cmp::Ordering;
use std::fmt;

/// Value in `R ∪ {−∞}`. `−∞` is absorbing under addition and survives
/// nonnegative scaling, except `0·(−∞) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
}

pub use ExtReal::{Finite, NegInf};

impl ExtReal {
    pub const ZERO: ExtReal = Finite(0.0);

    /// Wraps a float; `-inf` (e.g. from an overflowing exponential) maps to `NegInf`.
    pub fn from_f64(x: f64) -> ExtReal {
        if x == f64::NEG_INFINITY {
            NegInf
        } else {
            debug_assert!(!x.is_nan(), "NaN entered the extended reals");
            Finite(x)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Finite(_))
    }

    pub fn is_neg_inf(self) -> bool {
        matches!(self, NegInf)
    }

    pub fn to_f64(self) -> f64 {
        match self {
            NegInf => f64::NEG_INFINITY,
            Finite(x) => x,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            NegInf => None,
            Finite(x) => Some(x),
        }
    }

    pub fn scale_nonneg(self, lambda: f64) -> ExtReal {
        debug_assert!(lambda >= 0.0);
        match self {
            _ if lambda == 0.0 => Finite(0.0),
            NegInf => NegInf,
            Finite(x) => ExtReal::from_f64(lambda * x),
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn total_cmp(&self, other: &ExtReal) -> Ordering {
        match (self, other) {
            (NegInf, NegInf) => Ordering::Equal,
            (NegInf, Finite(_)) => Ordering::Less,
            (Finite(_), NegInf) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.total_cmp(b),
        }
    }
}

impl std::ops::Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (Finite(a), Finite(b)) => ExtReal::from_f64(a + b),
            _ => NegInf,
        }
    }
}

impl std::iter::Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(Finite(0.0), |acc, x| acc + x)
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        ExtReal::from_f64(x)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegInf => f.write_str("−∞"),
            Finite(x) => fmt::Display::fmt(x, f),
        }
    }
}

/// Probability-weighted sum with the convention that children carrying zero
/// mass do not contribute, even when their value is `−∞`.
pub fn expectation(probs: &[f64], values: &[ExtReal]) -> ExtReal {
    debug_assert_eq!(probs.len(), values.len());
    probs
        .iter()
        .zip(values)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, v)| v.scale_nonneg(*p))
        .sum()
}
