//! Derivative-free maximization of concave functions that may take the value
//! `−∞` outside an interval (or convex set) of finiteness.

use rand::Rng;

use crate::ext::{ExtReal, NegInf};

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_ITERS: usize = 400;
const SCAN_POINTS: usize = 64;

/// Best point seen so far; ties keep the earlier point.
#[derive(Debug, Clone, PartialEq)]
pub struct Best<T> {
    pub x: T,
    pub value: ExtReal,
}

impl<T: Clone> Best<T> {
    fn offer(&mut self, x: &T, v: ExtReal) {
        if v > self.value {
            self.x = x.clone();
            self.value = v;
        }
    }
}

/// Golden-section search for the maximum of a concave `f` on `[a, b]`.
///
/// `anchor` is a point of `[a, b]` where `f` is known to be finite; it
/// tells the search which side to keep when both probes are `−∞`. Without
/// one, `f` is scanned on an even grid first.
pub fn golden_max<F: FnMut(f64) -> ExtReal>(mut f: F, a: f64, b: f64, anchor: Option<f64>, xtol: f64) -> Best<f64> {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut best = Best { x: 0.5 * (a + b), value: NegInf };
    let anchor = match anchor {
        Some(x) => {
            let v = f(x);
            best.offer(&x, v);
            x
        }
        None => {
            for k in 0..=SCAN_POINTS {
                let x = a + (b - a) * k as f64 / SCAN_POINTS as f64;
                let v = f(x);
                best.offer(&x, v);
            }
            if best.value.is_neg_inf() {
                return best;
            }
            best.x
        }
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    best.offer(&c, fc);
    best.offer(&d, fd);
    let mut iters = 0;
    while b - a > xtol && iters < MAX_ITERS {
        iters += 1;
        if fc.is_neg_inf() && fd.is_neg_inf() {
            if anchor < c {
                b = c;
            } else if anchor > d {
                a = d;
            } else {
                a = c;
                b = d;
            }
            c = b - INV_PHI * (b - a);
            d = a + INV_PHI * (b - a);
            fc = f(c);
            fd = f(d);
            best.offer(&c, fc);
            best.offer(&d, fd);
            continue;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            best.offer(&c, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            best.offer(&d, fd);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    best.offer(&mid, fm);
    best
}

/// Maximizes over the box `[lo, hi]` (componentwise). Dimension 1 uses a
/// single golden search, dimension 2 nested golden searches (exact up to
/// `xtol` for concave functions), higher dimensions cyclic coordinate search
/// with `restarts` random starting points.
pub fn maximize_box<F, R>(f: &F, lo: &[f64], hi: &[f64], start: &[f64], xtol: f64, ftol: f64, restarts: usize, rng: &mut R) -> Best<Vec<f64>>
where
    F: Fn(&[f64]) -> ExtReal,
    R: Rng,
{
    let n = lo.len();
    match n {
        0 => Best { x: Vec::new(), value: f(&[]) },
        1 => {
            let b = golden_max(|y| f(&[y]), lo[0], hi[0], Some(start[0]), xtol);
            Best { x: vec![b.x], value: b.value }
        }
        2 => {
            let inner = |y0: f64, anchor: Option<f64>| golden_max(|y1| f(&[y0, y1]), lo[1], hi[1], anchor, xtol);
            let start_finite = f(start).is_finite();
            let outer = golden_max(
                |y0| {
                    let anchor = if f(&[y0, start[1]]).is_finite() { Some(start[1]) } else { None };
                    inner(y0, anchor).value
                },
                lo[0],
                hi[0],
                start_finite.then_some(start[0]),
                xtol,
            );
            let anchor = if f(&[outer.x, start[1]]).is_finite() { Some(start[1]) } else { None };
            let y1 = inner(outer.x, anchor);
            let mut best = Best { x: start.to_vec(), value: f(start) };
            best.offer(&vec![outer.x, y1.x], y1.value);
            best
        }
        _ => {
            let mut best = coordinate_search(f, lo, hi, start.to_vec(), xtol, ftol);
            for _ in 0..restarts {
                let y: Vec<f64> = (0..n).map(|j| rng.gen_range(lo[j]..=hi[j])).collect();
                if !f(&y).is_finite() {
                    continue;
                }
                let cand = coordinate_search(f, lo, hi, y, xtol, ftol);
                best.offer(&cand.x, cand.value);
            }
            best
        }
    }
}

fn coordinate_search<F: Fn(&[f64]) -> ExtReal>(f: &F, lo: &[f64], hi: &[f64], mut y: Vec<f64>, xtol: f64, ftol: f64) -> Best<Vec<f64>> {
    let mut value = f(&y);
    for _ in 0..200 {
        let before = value;
        for j in 0..y.len() {
            let mut probe = y.clone();
            let anchor = value.is_finite().then_some(y[j]);
            let b = golden_max(
                |t| {
                    probe[j] = t;
                    f(&probe)
                },
                lo[j],
                hi[j],
                anchor,
                xtol,
            );
            if b.value > value {
                y[j] = b.x;
                value = b.value;
            }
        }
        let improved = match (before, value) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => b - a >= ftol,
            (NegInf, ExtReal::Finite(_)) => true,
            _ => false,
        };
        if !improved {
            break;
        }
    }
    Best { x: y, value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::Finite;
    use rand::SeedableRng;

    #[test]
    fn golden_finds_quadratic_peak() {
        let b = golden_max(|x| Finite(1.0 - (x - 0.3) * (x - 0.3)), -10.0, 10.0, Some(0.0), 1e-10);
        assert!((b.x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn golden_handles_neg_inf_outside_domain() {
        // finite only on [2, 2.5], increasing there
        let f = |x: f64| if (2.0..=2.5).contains(&x) { Finite(x) } else { NegInf };
        let b = golden_max(f, -100.0, 100.0, Some(2.1), 1e-10);
        assert!((b.x - 2.5).abs() < 1e-8, "{b:?}");
        let b = golden_max(f, -10.0, 10.0, None, 1e-10);
        assert!(b.value.is_finite());
    }

    #[test]
    fn nested_search_on_kinked_function() {
        let f = |y: &[f64]| Finite(-(y[0] - 1.0).abs() - 2.0 * (y[1] + y[0]).abs());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let b = maximize_box(&f, &[-5.0, -5.0], &[5.0, 5.0], &[0.0, 0.0], 1e-10, 1e-12, 0, &mut rng);
        assert!((b.x[0] - 1.0).abs() < 1e-7 && (b.x[1] + 1.0).abs() < 1e-7, "{b:?}");
    }

    #[test]
    fn coordinate_search_smooth_3d() {
        let f = |y: &[f64]| Finite(-(y[0] - 1.0).powi(2) - (y[1] - 2.0).powi(2) - (y[2] + 0.5).powi(2) - 0.5 * y[0] * y[1]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let b = maximize_box(&f, &[-5.0; 3], &[5.0; 3], &[0.0; 3], 1e-10, 1e-14, 20, &mut rng);
        // gradient vanishes at the maximizer
        let g0 = -2.0 * (b.x[0] - 1.0) - 0.5 * b.x[1];
        let g1 = -2.0 * (b.x[1] - 2.0) - 0.5 * b.x[0];
        assert!(g0.abs() < 1e-5 && g1.abs() < 1e-5 && (b.x[2] + 0.5).abs() < 1e-6, "{b:?}");
    }
}
