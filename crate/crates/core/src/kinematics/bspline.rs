//! Least-squares cubic B-spline smoothing with clamped end knots.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg;

const DEGREE: usize = 3;

/// A clamped cubic B-spline basis on `[0, 1]` with uniformly spaced interior
/// knots.
#[derive(Debug, Clone)]
pub struct ClampedCubicBasis {
    knots: Vec<f64>,
    n_ctrl: usize,
}

impl ClampedCubicBasis {
    /// `n_ctrl` must be at least 4.
    pub fn new(n_ctrl: usize) -> Self {
        assert!(n_ctrl > DEGREE, "a cubic basis needs at least 4 control points");
        let interior = n_ctrl - DEGREE - 1;
        let mut knots = Vec::with_capacity(n_ctrl + DEGREE + 1);
        knots.extend([0.0; DEGREE + 1]);
        for i in 1..=interior {
            knots.push(i as f64 / (interior + 1) as f64);
        }
        knots.extend([1.0; DEGREE + 1]);
        Self { knots, n_ctrl }
    }

    pub fn n_ctrl(&self) -> usize {
        self.n_ctrl
    }

    fn span(&self, u: f64) -> usize {
        if u >= 1.0 {
            return self.n_ctrl - 1;
        }
        let mut lo = DEGREE;
        let mut hi = self.n_ctrl;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if u < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Returns the index of the first non-zero basis function at `u` and the
    /// four non-zero values.
    pub fn eval(&self, u: f64) -> (usize, [f64; DEGREE + 1]) {
        let u = u.clamp(0.0, 1.0);
        let s = self.span(u);
        let k = &self.knots;
        let mut n = [0.0; DEGREE + 1];
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = u - k[s + 1 - j];
            right[j] = k[s + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let tmp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        (s - DEGREE, n)
    }
}

/// Fits a clamped cubic spline to `values` sampled at parameters `params`
/// (in `[0, 1]`, first 0 and last 1) by least squares with the two end
/// control points pinned to the first and last samples, and returns the
/// spline evaluated at `params`.
///
/// Returns `None` if the normal equations are singular.
pub fn smooth(params: &[f64], values: &[f64], n_ctrl: usize) -> Option<Vec<f64>> {
    let n = values.len();
    let basis = ClampedCubicBasis::new(n_ctrl);
    let rows: Vec<(usize, [f64; 4])> = params.iter().map(|&u| basis.eval(u)).collect();

    let first = values[0];
    let last = values[n - 1];
    // Unknowns are control points 1..n_ctrl-1 (exclusive).
    let m = n_ctrl - 2;
    let mut ata = vec![0.0; m * m];
    let mut atb = vec![0.0; m];
    for ((start, w), &y) in rows.iter().zip(values) {
        let mut target = y;
        for (off, &wv) in w.iter().enumerate() {
            let c = start + off;
            if c == 0 {
                target -= wv * first;
            } else if c == n_ctrl - 1 {
                target -= wv * last;
            }
        }
        for (oa, &wa) in w.iter().enumerate() {
            let ca = start + oa;
            if ca == 0 || ca == n_ctrl - 1 {
                continue;
            }
            atb[ca - 1] += wa * target;
            for (ob, &wb) in w.iter().enumerate() {
                let cb = start + ob;
                if cb == 0 || cb == n_ctrl - 1 {
                    continue;
                }
                ata[(ca - 1) * m + (cb - 1)] += wa * wb;
            }
        }
    }
    let inner = linalg::solve(ata, atb)?;
    let mut ctrl = Vec::with_capacity(n_ctrl);
    ctrl.push(first);
    ctrl.extend(inner);
    ctrl.push(last);

    Some(rows.iter().map(|(start, w)| (0..4).map(|o| w[o] * ctrl[start + o]).sum()).collect())
}
