//! Small dense linear programs: two-phase tableau simplex with Bland's
//! anti-cycling rule. Sized for cones with a few thousand rows and a handful
//! of columns.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Ge,
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("simplex pivot limit {0} reached")]
    PivotLimit(usize),
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, *value)),
            _ => None,
        }
    }
}

/// `maximize c·x` subject to row constraints and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Lp {
    n: usize,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Cmp, f64)>,
    bounds: Vec<(f64, f64)>,
}

pub const PIVOT_LIMIT: usize = 100_000;
const EPS: f64 = 1e-11;

enum VarMap {
    /// x = lo + x'
    Shift(usize, f64),
    /// x = hi − x'
    Flip(usize, f64),
    /// x = x⁺ − x⁻
    Split(usize, usize),
}

impl Lp {
    /// All variables start nonnegative.
    pub fn new(n: usize) -> Self {
        Self { n, objective: vec![0.0; n], rows: Vec::new(), bounds: vec![(0.0, f64::INFINITY); n] }
    }

    pub fn objective(mut self, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), self.n);
        self.objective = c;
        self
    }

    pub fn bounds(mut self, j: usize, lo: f64, hi: f64) -> Self {
        self.bounds[j] = (lo, hi);
        self
    }

    pub fn free(self, j: usize) -> Self {
        self.bounds(j, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn row(mut self, a: Vec<f64>, cmp: Cmp, b: f64) -> Self {
        assert_eq!(a.len(), self.n);
        self.rows.push((a, cmp, b));
        self
    }

    pub fn add_row(&mut self, a: Vec<f64>, cmp: Cmp, b: f64) {
        assert_eq!(a.len(), self.n);
        self.rows.push((a, cmp, b));
    }

    pub fn maximize(&self) -> Result<LpOutcome, LpError> {
        // Map to x' ≥ 0.
        let mut maps = Vec::with_capacity(self.n);
        let mut cols = 0usize;
        let mut extra_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for &(lo, hi) in &self.bounds {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(LpError::Malformed(format!("bounds [{lo}, {hi}]")));
            }
            if lo.is_finite() {
                maps.push(VarMap::Shift(cols, lo));
                if hi.is_finite() {
                    extra_rows.push((vec![(cols, 1.0)], hi - lo));
                }
                cols += 1;
            } else if hi.is_finite() {
                maps.push(VarMap::Flip(cols, hi));
                cols += 1;
            } else {
                maps.push(VarMap::Split(cols, cols + 1));
                cols += 2;
            }
        }
        let mut std_rows: Vec<(Vec<f64>, Cmp, f64)> = Vec::new();
        let mut c = vec![0.0; cols];
        for (j, m) in maps.iter().enumerate() {
            let cj = self.objective[j];
            match *m {
                VarMap::Shift(k, _) => c[k] += cj,
                VarMap::Flip(k, _) => c[k] -= cj,
                VarMap::Split(p, q) => {
                    c[p] += cj;
                    c[q] -= cj;
                }
            }
        }
        for (a, cmp, b) in &self.rows {
            let mut row = vec![0.0; cols];
            let mut rhs = *b;
            for (j, m) in maps.iter().enumerate() {
                let aj = a[j];
                if aj == 0.0 {
                    continue;
                }
                match *m {
                    VarMap::Shift(k, lo) => {
                        row[k] += aj;
                        rhs -= aj * lo;
                    }
                    VarMap::Flip(k, hi) => {
                        row[k] -= aj;
                        rhs -= aj * hi;
                    }
                    VarMap::Split(p, q) => {
                        row[p] += aj;
                        row[q] -= aj;
                    }
                }
            }
            std_rows.push((row, *cmp, rhs));
        }
        for (entries, ub) in extra_rows {
            let mut row = vec![0.0; cols];
            for (k, v) in entries {
                row[k] = v;
            }
            std_rows.push((row, Cmp::Le, ub));
        }

        let sol = match Tableau::build(&std_rows, cols).solve(&c)? {
            LpOutcome::Optimal { x, .. } => x,
            other => return Ok(other),
        };
        let x: Vec<f64> = maps
            .iter()
            .map(|m| match *m {
                VarMap::Shift(k, lo) => lo + sol[k],
                VarMap::Flip(k, hi) => hi - sol[k],
                VarMap::Split(p, q) => sol[p] - sol[q],
            })
            .collect();
        let value = self.objective.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        Ok(LpOutcome::Optimal { x, value })
    }
}

/// Tableau over `[structural | slack | artificial]` columns with the
/// right-hand side stored last.
struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_total: usize,
    art_start: usize,
}

impl Tableau {
    fn build(rows: &[(Vec<f64>, Cmp, f64)], n: usize) -> Self {
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        // Normalize to b ≥ 0 and count artificials.
        let mut norm: Vec<(Vec<f64>, Cmp, f64)> = rows
            .iter()
            .map(|(a, cmp, b)| {
                if *b < 0.0 {
                    let flipped = match cmp {
                        Cmp::Ge => Cmp::Le,
                        Cmp::Le => Cmp::Ge,
                        Cmp::Eq => Cmp::Eq,
                    };
                    (a.iter().map(|v| -v).collect(), flipped, -b)
                } else {
                    (a.clone(), *cmp, *b)
                }
            })
            .collect();
        let n_art = norm.iter().filter(|r| r.1 != Cmp::Le).count();
        let art_start = n + n_slack;
        let n_total = art_start + n_art;
        let mut t = vec![vec![0.0; n_total + 1]; m];
        let mut basis = vec![0; m];
        let (mut s, mut a) = (n, art_start);
        for (i, (row, cmp, b)) in norm.drain(..).enumerate() {
            t[i][..n].copy_from_slice(&row);
            t[i][n_total] = b;
            match cmp {
                Cmp::Le => {
                    t[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Cmp::Ge => {
                    t[i][s] = -1.0;
                    s += 1;
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
                Cmp::Eq => {
                    t[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
            }
        }
        Self { t, basis, n_struct: n, n_total, art_start }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations maximizing `cost` over columns `< allowed`.
    fn run(&mut self, cost: &[f64], allowed: usize, pivots: &mut usize) -> Result<bool, LpError> {
        let rhs = self.n_total;
        loop {
            // reduced costs r_j = c_j − c_B·column_j
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for (i, &b) in self.basis.iter().enumerate() {
                    rc -= cost[b] * self.t[i][j];
                }
                if rc > EPS * (1.0 + cost[j].abs()) {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return Ok(true) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][c];
                if a > EPS {
                    let ratio = self.t[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14 || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Ok(false) };
            *pivots += 1;
            if *pivots > PIVOT_LIMIT {
                return Err(LpError::PivotLimit(PIVOT_LIMIT));
            }
            self.pivot(r, c);
        }
    }

    fn solve(mut self, c: &[f64]) -> Result<LpOutcome, LpError> {
        let mut pivots = 0;
        let rhs = self.n_total;
        if self.art_start < self.n_total {
            let mut cost = vec![0.0; self.n_total];
            for v in &mut cost[self.art_start..] {
                *v = -1.0;
            }
            self.run(&cost, self.n_total, &mut pivots)?;
            let infeas: f64 = self
                .basis
                .iter()
                .enumerate()
                .filter(|(_, &b)| b >= self.art_start)
                .map(|(i, _)| self.t[i][rhs])
                .sum();
            let scale = 1.0 + self.t.iter().map(|r| r[rhs].abs()).fold(0.0, f64::max);
            if infeas > 1e-9 * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // Drive remaining artificials out of the basis; drop redundant rows.
            let mut i = 0;
            while i < self.t.len() {
                if self.basis[i] >= self.art_start {
                    let col = (0..self.art_start).find(|&j| self.t[i][j].abs() > 1e-9);
                    match col {
                        Some(j) => {
                            self.pivot(i, j);
                            i += 1;
                        }
                        None => {
                            self.t.remove(i);
                            self.basis.remove(i);
                        }
                    }
                } else {
                    i += 1;
                }
            }
        }
        let mut cost = vec![0.0; self.n_total];
        cost[..self.n_struct].copy_from_slice(c);
        if !self.run(&cost, self.art_start, &mut pivots)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.n_struct];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                x[b] = self.t[i][rhs].max(0.0);
            }
        }
        let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Ok(LpOutcome::Optimal { x, value })
    }
}
