//! Crash occurrence risk and case–control validation.
//!
//! Models are fitted on `z = −ttc`, so "TTC at most `|ω|`" is the event
//! `z ≥ −|ω|` and its probability is the GEV survival function there.

use alloc::format;
use alloc::vec::Vec;

use crate::gev::GevParams;
use crate::{stats, Error, Result};

/// Severity thresholds swept in validation, seconds of negated TTC.
pub const DEFAULT_OMEGA_GRID: [f64; 9] = [-0.9, -0.8, -0.7, -0.6, -0.5, -0.4, -0.3, -0.2, -0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SummaryMode {
    /// Parameters at their posterior means.
    #[default]
    PlugIn,
    /// Risk per posterior draw, summarized by percentiles.
    FullPosterior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CORConfig {
    /// Critical threshold on the negated-TTC axis, seconds.
    pub omega: f64,
    /// Exposure duration, seconds.
    pub exposure: f64,
    pub mode: SummaryMode,
}

impl CORConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(Error::InvalidConfig(format!("exposure must be positive, got {}", self.exposure)));
        }
        if !self.omega.is_finite() {
            return Err(Error::InvalidConfig("omega must be finite".into()));
        }
        Ok(())
    }
}

/// Probability that the block's minimum TTC is at most `|omega|`.
pub fn exceedance_prob(p: &GevParams, omega: f64) -> Result<f64> {
    let p = GevParams::new(p.mu, p.sigma, p.xi)?;
    Ok(1.0 - p.cdf(-omega.abs()))
}

/// Risk of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCor {
    pub group: usize,
    /// Per-block exceedance probabilities, input order.
    pub probs: Vec<f64>,
    /// Exposure-normalized expected exceedances per second.
    pub cor: f64,
}

/// `(1/T)·Σ yᵢ·Pᵢ` over the blocks `(y, params)` of `group`.
pub fn group_cor(group: usize, blocks: &[(usize, GevParams)], cfg: &CORConfig) -> Result<GroupCor> {
    cfg.validate()?;
    let probs = blocks.iter().map(|(_, p)| exceedance_prob(p, cfg.omega)).collect::<Result<Vec<_>>>()?;
    let terms: Vec<f64> = blocks.iter().zip(&probs).map(|((y, _), p)| *y as f64 * p).collect();
    Ok(GroupCor { group, probs, cor: stats::pairwise_sum(&terms) / cfg.exposure })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorridorCf {
    pub total: f64,
    /// `(group, COR)` in input order.
    pub per_group: Vec<(usize, f64)>,
}

pub fn total_cf(groups: &[GroupCor]) -> CorridorCf {
    let per_group: Vec<(usize, f64)> = groups.iter().map(|g| (g.group, g.cor)).collect();
    let cors: Vec<f64> = per_group.iter().map(|g| g.1).collect();
    CorridorCf { total: stats::pairwise_sum(&cors), per_group }
}

/// 2.5, 50 and 97.5 percentiles.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Band {
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            q025: stats::quantile_sorted(&v, 0.025),
            q50: stats::quantile_sorted(&v, 0.5),
            q975: stats::quantile_sorted(&v, 0.975),
        }
    }
}

/// Per-column bands of a row-major `draws × width` matrix.
pub fn posterior_bands(matrix: &[f64], width: usize) -> Vec<Band> {
    let rows = matrix.len().checked_div(width).unwrap_or(0);
    (0..width).map(|j| Band::of(&(0..rows).map(|r| matrix[r * width + j]).collect::<Vec<_>>())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    pub auc: f64,
    /// `(FPR, TPR)` from `(0, 0)` to `(1, 1)`, one step per distinct score.
    pub points: Vec<(f64, f64)>,
}

/// Rank-based AUC with midranks for ties. `labels[i]` marks a case.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN score".into()));
    }
    let n1 = labels.iter().filter(|l| **l).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (n1f, n0f) = (n1 as f64, n0 as f64);
    let auc = (rank_sum - n1f * (n1f + 1.0) / 2.0) / (n1f * n0f);

    let mut points = alloc::vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = order.len();
    while k > 0 {
        let s = scores[order[k - 1]];
        while k > 0 && scores[order[k - 1]] == s {
            if labels[order[k - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        points.push((fp as f64 / n0f, tp as f64 / n1f));
    }
    Ok(Roc { auc, points })
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub omega: f64,
    pub cases: usize,
    pub controls: usize,
    /// `None` when only one class is present at this threshold.
    pub auc: Option<f64>,
}

impl SweepRow {
    pub fn skipped(&self) -> bool {
        self.auc.is_none()
    }
}

/// AUC of `scores(ω)` against labels "observed minimum TTC ≤ |ω|" for each
/// ω of the grid.
pub fn threshold_sweep<F>(grid: &[f64], observed_ttc: &[f64], mut scores: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty threshold grid".into()));
    }
    grid.iter()
        .map(|&omega| {
            let labels: Vec<bool> = observed_ttc.iter().map(|t| *t <= omega.abs()).collect();
            let cases = labels.iter().filter(|l| **l).count();
            let controls = labels.len() - cases;
            let auc = match roc_auc(&scores(omega)?, &labels) {
                Ok(r) => Some(r.auc),
                Err(Error::UndefinedAuc) => None,
                Err(e) => return Err(e),
            };
            Ok(SweepRow { omega, cases, controls, auc })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn p(mu: f64, sigma: f64, xi: f64) -> GevParams {
        GevParams::new(mu, sigma, xi).unwrap()
    }

    fn cfg(exposure: f64) -> CORConfig {
        CORConfig { omega: -0.5, exposure, mode: SummaryMode::PlugIn }
    }

    #[test]
    fn exceedance_examples() {
        // Upper endpoint −1 + 0.5/0.5 = 0 lies at ω = 0; anything beyond it has no mass.
        assert_eq!(exceedance_prob(&p(-1.0, 0.5, -0.5), 0.0).unwrap(), 0.0);
        let e = exceedance_prob(&p(-0.7, 1.0, 0.0), -0.7).unwrap();
        assert!((e - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(exceedance_prob(&GevParams { mu: 0.0, sigma: 0.0, xi: 0.0 }, -0.5).is_err());
    }

    #[test]
    fn cor_examples() {
        let half = p(-0.5, 1.0, 0.0);
        let c = CORConfig { omega: half.quantile(0.5), ..cfg(10.0) };
        assert!(c.omega < 0.0);
        assert!((exceedance_prob(&half, c.omega).unwrap() - 0.5).abs() < 1e-12);
        assert!((group_cor(1, &[(1, half)], &c).unwrap().cor - 0.05).abs() < 1e-12);
        let none = p(-3.0, 0.1, -0.5);
        assert_eq!(group_cor(1, &[(4, none), (2, none)], &cfg(10.0)).unwrap().cor, 0.0);
        assert!(matches!(group_cor(1, &[], &cfg(0.0)), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn cf_totals() {
        let g = group_cor(1, &[(3, p(-1.0, 0.5, -0.2))], &cfg(20.0)).unwrap();
        assert_eq!(total_cf(core::slice::from_ref(&g)).total, g.cor);
        let gs: Vec<GroupCor> = (1..=4).map(|k| GroupCor { group: k, probs: vec![], cor: 0.25 }).collect();
        assert_eq!(total_cf(&gs).total, 1.0);
    }

    #[test]
    fn auc_examples() {
        let r = roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.points, vec![(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);
        assert_eq!(roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap().auc, 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedAuc)));
    }

    #[test]
    fn sweep_rows() {
        let ttc = [0.2, 0.6, 1.5];
        let rows = threshold_sweep(&[-0.5, -0.1], &ttc, |_| Ok(vec![0.9, 0.4, 0.1])).unwrap();
        assert_eq!(rows[0].auc, Some(1.0));
        assert_eq!((rows[0].cases, rows[0].controls), (1, 2));
        assert!(rows[1].skipped());
        assert!(threshold_sweep(&[], &ttc, |_| Ok(vec![])).is_err());
    }

    #[test]
    fn bands() {
        let m: Vec<f64> = (0..101).flat_map(|i| [i as f64, -(i as f64)]).collect();
        let b = posterior_bands(&m, 2);
        assert_eq!(b[0], Band { q025: 2.5, q50: 50.0, q975: 97.5 });
        assert_eq!(b[1].q50, -50.0);
    }
}
