use nalgebra::DMatrix;
use thiserror::Error;

use crate::ext::{ExtReal, Finite, NegInf};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("dimension mismatch: expression over R^{expected}, got vector of length {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty {0} combinator")]
    Empty(&'static str),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("matrix is not square/symmetric: {0}")]
    BadMatrix(String),
    #[error("negative scale factor {0}")]
    NegativeScale(f64),
    #[error("invalid utility: {0}")]
    Utility(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
}

/// Piecewise-linear, nondecreasing, concave utility that is constant after its
/// last breakpoint. A `left_slope` of `+∞` cuts the domain at the first
/// breakpoint: values below it are `−∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
    left_slope: f64,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>, left_slope: f64) -> Result<Self, ExprError> {
        if points.is_empty() {
            return Err(ExprError::Utility("piecewise-linear utility needs at least one breakpoint".into()));
        }
        if points.iter().any(|(y, u)| !y.is_finite() || !u.is_finite()) {
            return Err(ExprError::NonFinite("breakpoints"));
        }
        if left_slope.is_nan() || left_slope < 0.0 {
            return Err(ExprError::Utility(format!("left slope {left_slope} must be >= 0")));
        }
        let mut prev_slope = left_slope;
        for w in points.windows(2) {
            let (y0, u0) = w[0];
            let (y1, u1) = w[1];
            if y1 <= y0 {
                return Err(ExprError::Utility("breakpoints must be strictly increasing".into()));
            }
            let s = (u1 - u0) / (y1 - y0);
            if s < 0.0 {
                return Err(ExprError::Utility(format!("segment slope {s} is negative")));
            }
            if s > prev_slope * (1.0 + 1e-12) + 1e-15 {
                return Err(ExprError::Utility("slopes must be nonincreasing".into()));
            }
            prev_slope = s;
        }
        Ok(Self { points, left_slope })
    }

    /// The horizon-shaped utility `y ↦ min(0, slope·y)` (cutoff when `slope = ∞`).
    pub fn ray(slope: f64) -> Self {
        Self { points: vec![(0.0, 0.0)], left_slope: slope }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn left_slope(&self) -> f64 {
        self.left_slope
    }

    pub fn eval(&self, y: f64) -> ExtReal {
        let (y0, u0) = self.points[0];
        if y < y0 {
            return if self.left_slope.is_infinite() {
                NegInf
            } else {
                ExtReal::from_f64(u0 + self.left_slope * (y - y0))
            };
        }
        for w in self.points.windows(2) {
            let (ya, ua) = w[0];
            let (yb, ub) = w[1];
            if y <= yb {
                return Finite(ua + (ub - ua) * (y - ya) / (yb - ya));
            }
        }
        Finite(self.points[self.points.len() - 1].1)
    }

    fn is_ray(&self) -> bool {
        self.points.len() == 1 && self.points[0] == (0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UtilityAtom {
    /// `U(y) = −e^{−γy}`
    Exponential { gamma: f64 },
    /// `U(y) = min(y, c)`
    CappedLinear { cap: f64 },
    PiecewiseLinear(PiecewiseLinear),
}

impl UtilityAtom {
    pub fn exponential(gamma: f64) -> Result<Self, ExprError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(ExprError::Utility(format!("exponential utility needs gamma > 0, got {gamma}")));
        }
        Ok(Self::Exponential { gamma })
    }

    pub fn capped_linear(cap: f64) -> Result<Self, ExprError> {
        if !cap.is_finite() {
            return Err(ExprError::Utility("cap must be finite".into()));
        }
        Ok(Self::CappedLinear { cap })
    }

    pub fn eval(&self, y: ExtReal) -> ExtReal {
        let y = match y {
            NegInf => return NegInf,
            Finite(y) => y,
        };
        match self {
            Self::Exponential { gamma } => ExtReal::from_f64(-(-gamma * y).exp()),
            Self::CappedLinear { cap } => Finite(y.min(*cap)),
            Self::PiecewiseLinear(pl) => pl.eval(y),
        }
    }

    /// Upper bound `C`.
    pub fn upper_bound(&self) -> f64 {
        match self {
            Self::Exponential { .. } => 0.0,
            Self::CappedLinear { cap } => *cap,
            Self::PiecewiseLinear(pl) => pl.points[pl.points.len() - 1].1,
        }
    }

    /// `U^∞`; always of the form `y ↦ min(0, s·y)` because every utility here
    /// is flat at the top.
    pub fn horizon(&self) -> UtilityAtom {
        let slope = match self {
            Self::Exponential { .. } => f64::INFINITY,
            Self::CappedLinear { .. } => 1.0,
            Self::PiecewiseLinear(pl) => pl.left_slope,
        };
        UtilityAtom::PiecewiseLinear(PiecewiseLinear::ray(slope))
    }

    /// Slope of `U^∞` on the negative half-line when `self` is already a
    /// horizon (ray) utility.
    fn ray_slope(&self) -> Option<f64> {
        match self {
            Self::PiecewiseLinear(pl) if pl.is_ray() => Some(pl.left_slope),
            _ => None,
        }
    }
}

/// Symmetric positive semidefinite matrix, clamped to PSD on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(DMatrix<f64>);

impl PsdMatrix {
    pub const EIGEN_FLOOR: f64 = -1e-10;

    pub fn new(q: DMatrix<f64>) -> Result<Self, ExprError> {
        if q.nrows() != q.ncols() {
            return Err(ExprError::BadMatrix(format!("{}x{}", q.nrows(), q.ncols())));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(ExprError::NonFinite("quadratic form"));
        }
        let asym = (&q - q.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + q.abs().max()) {
            return Err(ExprError::BadMatrix(format!("asymmetry {asym:e}")));
        }
        let sym = (&q + q.transpose()) * 0.5;
        if sym.nrows() == 0 {
            return Ok(Self(sym));
        }
        let eig = sym.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < Self::EIGEN_FLOOR {
            return Err(ExprError::NotPsd(min));
        }
        if min >= 0.0 {
            return Ok(Self(sym));
        }
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        let m = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        Ok(Self((&m + m.transpose()) * 0.5))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ExprError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(ExprError::BadMatrix("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn quad(&self, z: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.0[(i, j)] * z[j];
            }
            acc += z[i] * row;
        }
        acc
    }

    /// Orthonormal basis of `(ker Q)^⊥`, using the singular-value cutoff
    /// `1e-10·σ_max`.
    pub fn range_basis(&self) -> Vec<Vec<f64>> {
        if self.dim() == 0 {
            return Vec::new();
        }
        let svd = self.0.clone().svd(true, false);
        let smax = svd.singular_values.max();
        if smax <= 0.0 {
            return Vec::new();
        }
        let u = svd.u.expect("requested U");
        svd.singular_values
            .iter()
            .enumerate()
            .filter(|(_, s)| **s > 1e-10 * smax)
            .map(|(k, _)| u.column(k).iter().copied().collect())
            .collect()
    }
}

/// Certified-concave expression over `z ∈ R^n`. Every constructor preserves
/// concavity and upper semicontinuity.
#[derive(Debug, Clone, PartialEq)]
pub enum ConcaveExpr {
    /// `a·z + b`
    Affine { a: Vec<f64>, b: f64 },
    /// `−|a·z + b|`
    NegAbsAffine { a: Vec<f64>, b: f64 },
    /// `−zᵀQz`
    NegQuadratic(PsdMatrix),
    Sum(Vec<ConcaveExpr>),
    Min(Vec<ConcaveExpr>),
    ScaleNonneg { lambda: f64, inner: Box<ConcaveExpr> },
    /// `U(inner)` with `U` nondecreasing and concave.
    Compose { utility: UtilityAtom, inner: Box<ConcaveExpr> },
}

fn dot(a: &[f64], z: &[f64]) -> f64 {
    a.iter().zip(z).map(|(x, y)| x * y).sum()
}

impl ConcaveExpr {
    pub fn affine(a: Vec<f64>, b: f64) -> Self {
        Self::Affine { a, b }
    }

    pub fn neg_abs_affine(a: Vec<f64>, b: f64) -> Self {
        Self::NegAbsAffine { a, b }
    }

    pub fn scale(lambda: f64, inner: ConcaveExpr) -> Result<Self, ExprError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(ExprError::NegativeScale(lambda));
        }
        Ok(Self::ScaleNonneg { lambda, inner: Box::new(inner) })
    }

    pub fn compose(utility: UtilityAtom, inner: ConcaveExpr) -> Self {
        Self::Compose { utility, inner: Box::new(inner) }
    }

    /// Checks structural well-formedness and returns the input dimension.
    pub fn validate(&self) -> Result<usize, ExprError> {
        match self {
            Self::Affine { a, b } | Self::NegAbsAffine { a, b } => {
                if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
                    return Err(ExprError::NonFinite("affine atom"));
                }
                Ok(a.len())
            }
            Self::NegQuadratic(q) => Ok(q.dim()),
            Self::Sum(xs) | Self::Min(xs) => {
                let name = if matches!(self, Self::Sum(_)) { "sum" } else { "min" };
                let first = xs.first().ok_or(ExprError::Empty(name))?.validate()?;
                for x in &xs[1..] {
                    let n = x.validate()?;
                    if n != first {
                        return Err(ExprError::Dimension { expected: first, got: n });
                    }
                }
                Ok(first)
            }
            Self::ScaleNonneg { lambda, inner } => {
                if !(*lambda >= 0.0) || !lambda.is_finite() {
                    return Err(ExprError::NegativeScale(*lambda));
                }
                inner.validate()
            }
            Self::Compose { inner, .. } => inner.validate(),
        }
    }

    /// Checked evaluation.
    pub fn evaluate(&self, z: &[f64]) -> Result<ExtReal, ExprError> {
        let n = self.validate()?;
        if n != z.len() {
            return Err(ExprError::Dimension { expected: n, got: z.len() });
        }
        Ok(self.eval(z))
    }

    /// Evaluation without validation, for hot loops over expressions that
    /// were validated once.
    pub fn eval(&self, z: &[f64]) -> ExtReal {
        match self {
            Self::Affine { a, b } => ExtReal::from_f64(dot(a, z) + b),
            Self::NegAbsAffine { a, b } => ExtReal::from_f64(-(dot(a, z) + b).abs()),
            Self::NegQuadratic(q) => ExtReal::from_f64(-q.quad(z)),
            Self::Sum(xs) => {
                let mut acc = Finite(0.0);
                for x in xs {
                    acc = acc + x.eval(z);
                    if acc.is_neg_inf() {
                        break;
                    }
                }
                acc
            }
            Self::Min(xs) => {
                let mut acc = xs[0].eval(z);
                for x in &xs[1..] {
                    if acc.is_neg_inf() {
                        break;
                    }
                    acc = acc.min(x.eval(z));
                }
                acc
            }
            Self::ScaleNonneg { lambda, inner } => inner.eval(z).scale_nonneg(*lambda),
            Self::Compose { utility, inner } => utility.eval(inner.eval(z)),
        }
    }

    /// A finite upper bound when one follows from the structure.
    pub fn upper_bound(&self) -> Option<f64> {
        match self {
            Self::Affine { a, b } => a.iter().all(|v| *v == 0.0).then_some(*b),
            Self::NegAbsAffine { .. } | Self::NegQuadratic(_) => Some(0.0),
            Self::Sum(xs) => xs.iter().map(|x| x.upper_bound()).sum(),
            Self::Min(xs) => xs.iter().filter_map(|x| x.upper_bound()).reduce(f64::min),
            Self::ScaleNonneg { lambda, inner } => {
                if *lambda == 0.0 {
                    Some(0.0)
                } else {
                    inner.upper_bound().map(|c| lambda * c)
                }
            }
            Self::Compose { utility, .. } => Some(utility.upper_bound()),
        }
    }

    pub fn is_bounded_above(&self) -> bool {
        self.upper_bound().is_some()
    }

    /// Horizon function, by structural rules. The result is positively
    /// homogeneous; `NegQuadratic(Q)` becomes the indicator of `ker Q`.
    pub fn horizon(&self) -> Result<ConcaveExpr, ExprError> {
        self.validate()?;
        Ok(self.horizon_unchecked())
    }

    fn horizon_unchecked(&self) -> ConcaveExpr {
        match self {
            Self::Affine { a, .. } => Self::Affine { a: a.clone(), b: 0.0 },
            Self::NegAbsAffine { a, .. } => Self::NegAbsAffine { a: a.clone(), b: 0.0 },
            Self::NegQuadratic(q) => {
                let basis = q.range_basis();
                if basis.is_empty() {
                    return Self::Affine { a: vec![0.0; q.dim()], b: 0.0 };
                }
                let mut halfspaces = Vec::with_capacity(2 * basis.len());
                for v in basis {
                    halfspaces.push(Self::Affine { a: v.iter().map(|x| -x).collect(), b: 0.0 });
                    halfspaces.push(Self::Affine { a: v, b: 0.0 });
                }
                Self::compose(
                    UtilityAtom::PiecewiseLinear(PiecewiseLinear::ray(f64::INFINITY)),
                    Self::Min(halfspaces),
                )
            }
            Self::Sum(xs) => Self::Sum(xs.iter().map(|x| x.horizon_unchecked()).collect()),
            Self::Min(xs) => Self::Min(xs.iter().map(|x| x.horizon_unchecked()).collect()),
            Self::ScaleNonneg { lambda, inner } => {
                Self::ScaleNonneg { lambda: *lambda, inner: Box::new(inner.horizon_unchecked()) }
            }
            Self::Compose { utility, inner } => Self::compose(utility.horizon(), inner.horizon_unchecked()),
        }
    }

    /// Substitutes `z = M w` (the matrix given as one row of `M` per input
    /// coordinate of `self`), producing an expression over `w`.
    pub fn compose_linear(&self, rows: &[Vec<f64>]) -> ConcaveExpr {
        let map = |a: &[f64]| -> Vec<f64> {
            let m = rows.first().map_or(0, |r| r.len());
            let mut out = vec![0.0; m];
            for (ai, row) in a.iter().zip(rows) {
                if *ai != 0.0 {
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += ai * r;
                    }
                }
            }
            out
        };
        match self {
            Self::Affine { a, b } => Self::Affine { a: map(a), b: *b },
            Self::NegAbsAffine { a, b } => Self::NegAbsAffine { a: map(a), b: *b },
            Self::NegQuadratic(q) => {
                let m = rows.first().map_or(0, |r| r.len());
                let mm = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
                let inner = mm.transpose() * q.matrix() * &mm;
                let sym = (&inner + inner.transpose()) * 0.5;
                Self::NegQuadratic(PsdMatrix(sym))
            }
            Self::Sum(xs) => Self::Sum(xs.iter().map(|x| x.compose_linear(rows)).collect()),
            Self::Min(xs) => Self::Min(xs.iter().map(|x| x.compose_linear(rows)).collect()),
            Self::ScaleNonneg { lambda, inner } => {
                Self::ScaleNonneg { lambda: *lambda, inner: Box::new(inner.compose_linear(rows)) }
            }
            Self::Compose { utility, inner } => {
                Self::Compose { utility: utility.clone(), inner: Box::new(inner.compose_linear(rows)) }
            }
        }
    }

    /// Piecewise-linear representation of a positively homogeneous
    /// expression: `f(z) = min_i p_i·z` when every constraint row satisfies
    /// `c·z ≥ 0`, else `−∞`. Returns `None` for non-polyhedral expressions or
    /// when the number of pieces would exceed `cap`.
    pub fn polyhedral_rep(&self, cap: usize) -> Option<PolyhedralRep> {
        let n = self.validate().ok()?;
        self.rep(n, cap)
    }

    fn rep(&self, n: usize, cap: usize) -> Option<PolyhedralRep> {
        match self {
            Self::Affine { a, b } => (*b == 0.0).then(|| PolyhedralRep::piece(a.clone())),
            Self::NegAbsAffine { a, b } => (*b == 0.0).then(|| PolyhedralRep {
                pieces: vec![a.clone(), a.iter().map(|x| -x).collect()],
                constraints: Vec::new(),
            }),
            Self::NegQuadratic(q) => q.range_basis().is_empty().then(|| PolyhedralRep::piece(vec![0.0; n])),
            Self::Sum(xs) => {
                let mut acc = PolyhedralRep::piece(vec![0.0; n]);
                for x in xs {
                    let r = x.rep(n, cap)?;
                    if acc.pieces.len() * r.pieces.len() > cap {
                        return None;
                    }
                    let mut pieces = Vec::with_capacity(acc.pieces.len() * r.pieces.len());
                    for p in &acc.pieces {
                        for q in &r.pieces {
                            pieces.push(p.iter().zip(q).map(|(u, v)| u + v).collect());
                        }
                    }
                    acc.pieces = dedup_rows(pieces);
                    acc.constraints.extend(r.constraints);
                }
                Some(acc)
            }
            Self::Min(xs) => {
                let mut pieces = Vec::new();
                let mut constraints = Vec::new();
                for x in xs {
                    let r = x.rep(n, cap)?;
                    pieces.extend(r.pieces);
                    constraints.extend(r.constraints);
                }
                let pieces = dedup_rows(pieces);
                (pieces.len() <= cap).then_some(PolyhedralRep { pieces, constraints })
            }
            Self::ScaleNonneg { lambda, inner } => {
                if *lambda == 0.0 {
                    return Some(PolyhedralRep::piece(vec![0.0; n]));
                }
                let mut r = inner.rep(n, cap)?;
                for p in &mut r.pieces {
                    p.iter_mut().for_each(|v| *v *= lambda);
                }
                Some(r)
            }
            Self::Compose { utility, inner } => {
                let slope = utility.ray_slope()?;
                let r = inner.rep(n, cap)?;
                let mut out = PolyhedralRep::piece(vec![0.0; n]);
                out.constraints = r.constraints;
                if slope.is_infinite() {
                    out.constraints.extend(r.pieces);
                } else if slope > 0.0 {
                    out.pieces.extend(r.pieces.into_iter().map(|p| p.iter().map(|v| v * slope).collect()));
                    out.pieces = dedup_rows(out.pieces);
                    if out.pieces.len() > cap {
                        return None;
                    }
                }
                Some(out)
            }
        }
    }
}

fn dedup_rows(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut seen: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for r in rows.drain(..) {
        if !seen.iter().any(|s| s == &r) {
            seen.push(r);
        }
    }
    seen
}

/// See [`ConcaveExpr::polyhedral_rep`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralRep {
    pub pieces: Vec<Vec<f64>>,
    pub constraints: Vec<Vec<f64>>,
}

impl PolyhedralRep {
    fn piece(p: Vec<f64>) -> Self {
        Self { pieces: vec![p], constraints: Vec::new() }
    }

    /// Rows `r` with `f(z) ≥ 0 ⇔ r·z ≥ 0` for all rows; zero rows dropped.
    pub fn nonneg_rows(&self) -> Vec<Vec<f64>> {
        let rows = self
            .pieces
            .iter()
            .chain(&self.constraints)
            .filter(|r| r.iter().any(|v| *v != 0.0))
            .cloned()
            .collect();
        dedup_rows(rows)
    }

    pub fn eval(&self, z: &[f64]) -> ExtReal {
        if self.constraints.iter().any(|c| dot(c, z) < 0.0) {
            return NegInf;
        }
        Finite(self.pieces.iter().map(|p| dot(p, z)).fold(f64::INFINITY, f64::min))
    }
}
