//! Generalized extreme value kernels and covariate links.
//!
//! With `t = (z - μ)/σ` and `s = 1 + ξ t`, the distribution function is
//! `G(z) = exp(-s^(-1/ξ))` on the support `s > 0`, reducing to the Gumbel
//! form `exp(-exp(-t))` as `ξ → 0`. Everything is computed through
//! `L = ln(s)/ξ`, evaluated with `ln_1p` and switched to its series
//! expansion for `|ξ| < 1e-8`.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

/// Below this `|ξ|` the Gumbel limit forms are used.
pub const GUMBEL_THRESHOLD: f64 = 1e-8;

/// Location, scale and shape of a GEV distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() || !xi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "GEV needs finite parameters and sigma > 0 (mu={mu}, sigma={sigma}, xi={xi})"
            )));
        }
        Ok(Self { mu, sigma, xi })
    }

    /// `ln(1 + ξt)/ξ`, or `None` outside the support.
    #[inline]
    fn reduced(&self, z: f64) -> Option<f64> {
        let t = (z - self.mu) / self.sigma;
        let xt = self.xi * t;
        if xt <= -1.0 {
            return None;
        }
        if self.xi.abs() < GUMBEL_THRESHOLD {
            Some(t - 0.5 * xt * t)
        } else {
            Some(xt.ln_1p() / self.xi)
        }
    }

    /// Log-density; `-∞` outside the support.
    #[inline]
    pub fn ln_pdf(&self, z: f64) -> f64 {
        match self.reduced(z) {
            Some(l) => -self.sigma.ln() - (1.0 + self.xi) * l - (-l).exp(),
            None => f64::NEG_INFINITY,
        }
    }

    /// Distribution function, clamped to 0 below a lower endpoint (ξ > 0)
    /// and 1 above an upper endpoint (ξ < 0).
    #[inline]
    pub fn cdf(&self, z: f64) -> f64 {
        match self.reduced(z) {
            Some(l) => (-(-l).exp()).exp(),
            None if self.xi > 0.0 => 0.0,
            None => 1.0,
        }
    }

    /// Inverse distribution function for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let y = -(-u.ln()).ln(); // Gumbel-reduced variate
        let w =
            if self.xi.abs() < GUMBEL_THRESHOLD { y + 0.5 * self.xi * y * y } else { (self.xi * y).exp_m1() / self.xi };
        self.mu + self.sigma * w
    }

    /// Finite endpoint of the support, if any: `(lower, upper)`.
    pub fn support(&self) -> (f64, f64) {
        if self.xi.abs() < GUMBEL_THRESHOLD {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else if self.xi > 0.0 {
            (self.mu - self.sigma / self.xi, f64::INFINITY)
        } else {
            (f64::NEG_INFINITY, self.mu - self.sigma / self.xi)
        }
    }
}

/// Log-density of `z`; `-∞` outside the support.
pub fn gev_logpdf(z: f64, p: &GevParams) -> Result<f64> {
    GevParams::new(p.mu, p.sigma, p.xi).map(|p| p.ln_pdf(z))
}

pub fn gev_cdf(z: f64, p: &GevParams) -> Result<f64> {
    GevParams::new(p.mu, p.sigma, p.xi).map(|p| p.cdf(z))
}

/// Gumbel distribution function, the `ξ = 0` member of the family.
pub fn gumbel_cdf(z: f64, mu: f64, sigma: f64) -> f64 {
    (-(-(z - mu) / sigma).exp()).exp()
}

/// `n` inverse-CDF draws, deterministic in `seed`.
pub fn gev_sample(p: &GevParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gev_sample_with(p, n, &mut rng)
}

pub fn gev_sample_with<R: Rng + ?Sized>(p: &GevParams, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            p.quantile(u)
        })
        .collect()
}

/// Fixed and group-varying regression coefficients of one GEV parameter's
/// linear predictor.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearTerms {
    /// Fixed intercept. Ignored when `random_intercept` is set.
    pub intercept: f64,
    /// `(covariate column, coefficient)` fixed slopes.
    pub fixed: Vec<(usize, f64)>,
    /// Group-varying slopes: covariate column and one coefficient per group.
    pub random: Vec<(usize, Vec<f64>)>,
    /// One intercept per group, replacing `intercept` when present.
    pub random_intercept: Option<Vec<f64>>,
}

impl LinearTerms {
    pub fn intercept_only(intercept: f64) -> Self {
        Self { intercept, ..Self::default() }
    }

    /// Value of the predictor for a record of group `group` (0-based).
    #[inline]
    pub fn eval(&self, group: usize, covariates: &[f64]) -> f64 {
        let mut acc = match &self.random_intercept {
            Some(g) => g[group],
            None => self.intercept,
        };
        for &(c, b) in &self.fixed {
            acc += b * covariates[c];
        }
        for (c, g) in &self.random {
            acc += g[group] * covariates[*c];
        }
        acc
    }

    fn check(&self, groups: usize, n_cov: usize) -> bool {
        let ok_col = |c: usize| c < n_cov;
        self.fixed.iter().all(|&(c, b)| ok_col(c) && b.is_finite())
            && self.random.iter().all(|(c, g)| ok_col(*c) && g.len() == groups && g.iter().all(|v| v.is_finite()))
            && self.random_intercept.as_ref().is_none_or(|g| g.len() == groups)
            && self.intercept.is_finite()
    }
}

/// Coefficients of the location, log-scale and shape predictors.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoefficientSet {
    pub location: LinearTerms,
    /// Predictor of `ln σ`.
    pub log_scale: LinearTerms,
    pub shape: LinearTerms,
    pub groups: usize,
}

impl CoefficientSet {
    /// Checks dimensions against the number of covariate columns.
    pub fn validate(&self, n_covariates: usize) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::Spec("at least one group required".into()));
        }
        for (name, t) in [("location", &self.location), ("log-scale", &self.log_scale), ("shape", &self.shape)] {
            if !t.check(self.groups, n_covariates) {
                return Err(Error::Spec(format!("{name} coefficients inconsistent with layout")));
            }
        }
        Ok(())
    }
}

/// GEV parameters of one record: location and shape from their linear
/// predictors and scale as the exponential of its predictor. `group` is
/// 1-based.
pub fn link_params(coeffs: &CoefficientSet, group: usize, covariates: &[f64]) -> Result<GevParams> {
    if group == 0 || group > coeffs.groups {
        return Err(Error::UnknownGroup(group));
    }
    let g = group - 1;
    let mu = coeffs.location.eval(g, covariates);
    let sigma = coeffs.log_scale.eval(g, covariates).exp();
    let xi = coeffs.shape.eval(g, covariates);
    GevParams::new(mu, sigma, xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn p(mu: f64, sigma: f64, xi: f64) -> GevParams {
        GevParams::new(mu, sigma, xi).unwrap()
    }

    #[test]
    fn gumbel_mode_density() {
        let g = p(-1.8, 0.55, 0.0);
        assert!((g.ln_pdf(-1.8) - ((1.0f64 / 0.55).ln() - 1.0)).abs() < 1e-15);
        assert!((g.cdf(-1.8) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn bounded_upper_tail() {
        let g = p(0.0, 1.0, -0.5);
        assert_eq!(g.support().1, 2.0);
        assert_eq!(g.ln_pdf(2.5), f64::NEG_INFINITY);
        assert_eq!(g.cdf(2.5), 1.0);
        let f = p(0.0, 1.0, 0.5);
        assert_eq!(f.cdf(-2.5), 0.0);
        assert!((p(0.0, 1.0, 0.2).cdf(1e12) - 1.0).abs() < 1e-12);
        assert_eq!(p(0.0, 1.0, 0.0).cdf(1e6), 1.0);
    }

    #[test]
    fn invalid_scale() {
        assert!(matches!(GevParams::new(0.0, 0.0, 0.1), Err(Error::InvalidParameter(_))));
        let bad = GevParams { mu: 0.0, sigma: -1.0, xi: 0.0 };
        assert!(gev_logpdf(0.0, &bad).is_err());
        assert!(gev_cdf(0.0, &bad).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let g = p(0.0, 2.0, 0.0);
        assert!(g.quantile((-1.0f64).exp()).abs() < 1e-15);
        for xi in [-0.4, -1e-9, 0.0, 1e-9, 0.3] {
            let g = p(-1.0, 0.7, xi);
            for u in [0.01, 0.3, 0.5, 0.9, 0.999] {
                assert!((g.cdf(g.quantile(u)) - u).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = p(-1.8, 0.55, -0.3);
        assert_eq!(gev_sample(&g, 100, 7), gev_sample(&g, 100, 7));
        assert_ne!(gev_sample(&g, 100, 7), gev_sample(&g, 100, 8));
    }

    #[test]
    fn link_examples() {
        let mut c = CoefficientSet {
            location: LinearTerms::intercept_only(-1.8),
            log_scale: LinearTerms::intercept_only(-0.5),
            shape: LinearTerms::intercept_only(0.0),
            groups: 2,
        };
        let g = link_params(&c, 1, &[0.0]).unwrap();
        assert_eq!(g.mu, -1.8);
        assert!((g.sigma - 0.6065).abs() < 1e-4);
        assert_eq!(g.xi, 0.0);

        c.location = LinearTerms { intercept: -1.870, fixed: vec![(0, 0.639)], ..Default::default() };
        let g = link_params(&c, 2, &[1.0]).unwrap();
        assert!((g.mu + 1.231).abs() < 1e-12);

        assert!(matches!(link_params(&c, 0, &[1.0]), Err(Error::UnknownGroup(0))));
        assert!(matches!(link_params(&c, 3, &[1.0]), Err(Error::UnknownGroup(3))));
    }

    #[test]
    fn random_terms_use_group_coefficients() {
        let c = CoefficientSet {
            location: LinearTerms {
                intercept: 99.0,
                fixed: vec![],
                random: vec![(1, vec![2.0, -2.0])],
                random_intercept: Some(vec![1.0, -1.0]),
            },
            log_scale: LinearTerms::default(),
            shape: LinearTerms::default(),
            groups: 2,
        };
        assert!(c.validate(2).is_ok());
        assert!(c.validate(1).is_err());
        assert_eq!(link_params(&c, 1, &[0.0, 3.0]).unwrap().mu, 7.0);
        assert_eq!(link_params(&c, 2, &[0.0, 3.0]).unwrap().mu, -7.0);
    }
}
