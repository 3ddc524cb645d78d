//! Information criteria from posterior draws.

use alloc::vec::Vec;

use super::{HbModel, PosteriorChain};
use crate::stats;

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

/// Upper bound on the number of pooled draws entering the log-likelihood
/// matrix.
pub const METRIC_DRAWS: usize = 2000;

/// Importance weights above this quantile are truncated to it.
const WEIGHT_QUANTILE: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct FitMetrics {
    pub dic: f64,
    pub p_dic: f64,
    pub waic: f64,
    pub p_waic: f64,
    pub looic: f64,
    pub p_loo: f64,
    /// Log pointwise predictive density.
    pub lppd: f64,
    /// Row-major `draws × records` pointwise log-likelihood.
    pub loglik: Vec<f64>,
    pub n_draws: usize,
    pub n_obs: usize,
}

/// DIC, WAIC and truncated-importance-sampling LOOIC, all from the same
/// pointwise log-likelihood matrix over at most [`METRIC_DRAWS`] draws.
pub fn fit_metrics(chain: &PosteriorChain, model: &HbModel) -> FitMetrics {
    let draws = chain.thinned_draws(METRIC_DRAWS);
    let s = draws.len();
    let n = model.n_records();
    let mut loglik = Vec::with_capacity(s * n);
    for d in &draws {
        loglik.extend((0..n).map(|i| model.record_loglik(d, i)));
    }

    let deviances: Vec<f64> = (0..s).map(|r| -2.0 * stats::pairwise_sum(&loglik[r * n..(r + 1) * n])).collect();
    let d_bar = stats::mean(&deviances);
    let d_hat = -2.0 * model.log_likelihood(&chain.posterior_mean());
    let p_dic = d_bar - d_hat;

    let ln_s = (s as f64).ln();
    let mut lppd_i = Vec::with_capacity(n);
    let mut pw_i = Vec::with_capacity(n);
    let mut loo_i = Vec::with_capacity(n);
    let mut col = Vec::with_capacity(s);
    for i in 0..n {
        col.clear();
        col.extend((0..s).map(|r| loglik[r * n + i]));
        lppd_i.push(stats::log_sum_exp(&col) - ln_s);
        pw_i.push(stats::variance(&col));
        // Raw log weights are -loglik; cap them at the upper quantile.
        let lw: Vec<f64> = col.iter().map(|l| -l).collect();
        let cap = stats::quantile(&lw, WEIGHT_QUANTILE);
        let lw: Vec<f64> = lw.iter().map(|w| w.min(cap)).collect();
        let num: Vec<f64> = lw.iter().zip(&col).map(|(w, l)| w + l).collect();
        loo_i.push(stats::log_sum_exp(&num) - stats::log_sum_exp(&lw));
    }
    let lppd = stats::pairwise_sum(&lppd_i);
    let p_waic = stats::pairwise_sum(&pw_i);
    let elpd_loo = stats::pairwise_sum(&loo_i);
    FitMetrics {
        dic: d_bar + p_dic,
        p_dic,
        waic: -2.0 * (lppd - p_waic),
        p_waic,
        looic: -2.0 * elpd_loo,
        p_loo: lppd - elpd_loo,
        lppd,
        loglik,
        n_draws: s,
        n_obs: n,
    }
}
