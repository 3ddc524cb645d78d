//! Savitzky–Golay smoothing.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{linalg, Error, Result};

/// Weights of the local least-squares polynomial fit over sample offsets
/// `-left..=right`, evaluated at offset 0.
fn weights(left: usize, right: usize, order: usize) -> Vec<f64> {
    let len = left + right + 1;
    let order = order.min(len - 1);
    let p = order + 1;
    let h = left.max(right).max(1) as f64;
    let offsets: Vec<f64> = (0..len).map(|i| (i as f64 - left as f64) / h).collect();

    // Normal matrix of the scaled Vandermonde system.
    let mut vtv = vec![0.0; p * p];
    for &s in &offsets {
        let mut pow = vec![1.0; 2 * p - 1];
        for k in 1..pow.len() {
            pow[k] = pow[k - 1] * s;
        }
        for r in 0..p {
            for c in 0..p {
                vtv[r * p + c] += pow[r + c];
            }
        }
    }
    let mut e0 = vec![0.0; p];
    e0[0] = 1.0;
    let g = linalg::solve(vtv, e0).expect("Vandermonde normal matrix is non-singular");
    offsets
        .iter()
        .map(|&s| {
            let mut acc = 0.0;
            let mut pw = 1.0;
            for gk in &g {
                acc += gk * pw;
                pw *= s;
            }
            acc
        })
        .collect()
}

/// Smooths `signal` with a Savitzky–Golay filter of odd length `window` and
/// polynomial order `poly_order`.
///
/// Near the ends the window is truncated to the available samples, giving
/// asymmetric windows; the polynomial order is lowered when a truncated
/// window has too few points. Signals shorter than `window` use the largest
/// odd window that fits.
pub fn sg_filter(signal: &[f64], window: usize, poly_order: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("Savitzky-Golay window must be odd, got {window}")));
    }
    if poly_order >= window {
        return Err(Error::InvalidConfig(format!("polynomial order {poly_order} must be below window {window}")));
    }
    let n = signal.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let window = if window > n { n - (1 - n % 2) } else { window };
    let half = window / 2;

    let centre = weights(half, half, poly_order);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let left = half.min(i);
        let right = half.min(n - 1 - i);
        let value = if left == half && right == half {
            dot(&centre, &signal[i - half..=i + half])
        } else {
            let w = weights(left, right, poly_order);
            dot(&w, &signal[i - left..=i + right])
        };
        out.push(value);
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
