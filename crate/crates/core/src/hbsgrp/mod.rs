//! Hierarchical Bayesian GEV regression.
//!
//! Each record's location `μ`, log-scale `ϑ` and shape `ξ` are linear in
//! its covariates. Under the grouped-random-parameter variant, selected
//! coefficients take one value per group, drawn from a normal population
//! with its own mean and variance `τ²`; the fixed-parameter variant has no
//! group-varying coefficients. Posterior draws come from the blocked
//! sampler in [`sampler`].

mod metrics;
pub mod sampler;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::blocks::{covariate_index, BlockRecord, COVARIATES};
use crate::gev::{CoefficientSet, GevParams, LinearTerms};
use crate::{stats, Error, Result};

pub use metrics::{fit_metrics, FitMetrics, METRIC_DRAWS};
pub use sampler::{
    bgr_diagnostic, chain_rng, run_chain, run_mcmc, BlockTarget, ChainRun, McmcConfig, ParamSummary, PosteriorChain,
};

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

/// Term name selecting a group-varying intercept.
pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Variant {
    /// Fixed parameters only.
    #[cfg_attr(feature = "serde", serde(rename = "HBSFP"))]
    Hbsfp,
    /// Grouped random parameters.
    #[cfg_attr(feature = "serde", serde(rename = "HBSGRP"))]
    Hbsgrp,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Hbsfp => "HBSFP",
            Variant::Hbsgrp => "HBSGRP",
        }
    }
}

/// Covariate names entering one linear predictor.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ParamTerms {
    pub fixed: Vec<String>,
    /// Group-varying terms; `"intercept"` replaces the fixed intercept.
    pub random: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub variant: Variant,
    #[cfg_attr(feature = "serde", serde(default))]
    pub location: ParamTerms,
    #[cfg_attr(feature = "serde", serde(default))]
    pub log_scale: ParamTerms,
    #[cfg_attr(feature = "serde", serde(default))]
    pub shape: ParamTerms,
    pub groups: usize,
}

impl ModelSpec {
    pub fn intercept_only(groups: usize) -> Self {
        Self {
            variant: Variant::Hbsfp,
            location: ParamTerms::default(),
            log_scale: ParamTerms::default(),
            shape: ParamTerms::default(),
            groups,
        }
    }

    /// The fixed-parameter counterpart: random terms become fixed ones.
    pub fn to_fixed(&self) -> Self {
        let demote = |t: &ParamTerms| ParamTerms {
            fixed: t.fixed.iter().chain(t.random.iter().filter(|n| *n != INTERCEPT)).cloned().collect(),
            random: vec![],
        };
        Self {
            variant: Variant::Hbsfp,
            location: demote(&self.location),
            log_scale: demote(&self.log_scale),
            shape: demote(&self.shape),
            groups: self.groups,
        }
    }

    fn families(&self) -> [(Family, &ParamTerms); 3] {
        [(Family::Location, &self.location), (Family::LogScale, &self.log_scale), (Family::Shape, &self.shape)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::Spec("at least one group required".into()));
        }
        let any_random = self.families().iter().any(|(_, t)| !t.random.is_empty());
        match (self.variant, any_random) {
            (Variant::Hbsfp, true) => return Err(Error::Spec("HBSFP takes no random terms".into())),
            (Variant::Hbsgrp, false) => return Err(Error::Spec("HBSGRP needs at least one random term".into())),
            _ => {}
        }
        for (fam, t) in self.families() {
            let mut seen: Vec<&str> = Vec::new();
            for name in t.fixed.iter().chain(&t.random) {
                if seen.contains(&name.as_str()) {
                    return Err(Error::Spec(format!("{} lists `{name}` twice", fam.prefix())));
                }
                seen.push(name);
                let is_random_intercept = name == INTERCEPT && t.random.contains(name);
                if !is_random_intercept && covariate_index(name).is_none() {
                    return Err(Error::Spec(format!("unknown covariate `{name}` in {} terms", fam.prefix())));
                }
            }
        }
        Ok(())
    }
}

/// The three GEV linear predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Location,
    LogScale,
    Shape,
}

impl Family {
    pub fn prefix(self) -> &'static str {
        match self {
            Family::Location => "mu",
            Family::LogScale => "theta",
            Family::Shape => "xi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalPrior {
    pub mean: f64,
    pub sd: f64,
}

impl NormalPrior {
    fn ln_pdf(&self, x: f64) -> f64 {
        let t = (x - self.mean) / self.sd;
        -0.5 * t * t - self.sd.ln() - 0.5 * (2.0 * PI).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InvGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaPrior {
    fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (a, b) = (self.shape, self.scale);
        a * b.ln() - libm::lgamma(a) - (a + 1.0) * x.ln() - b / x
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PriorConfig {
    /// Prior of every fixed coefficient and population mean.
    pub coefficient: NormalPrior,
    pub tau2_mu: InvGammaPrior,
    pub tau2_theta: InvGammaPrior,
    pub tau2_xi: InvGammaPrior,
    /// Open interval the shape intercept is truncated to.
    pub xi_bounds: (f64, f64),
}

impl Default for PriorConfig {
    fn default() -> Self {
        let ig = InvGammaPrior { shape: 0.01, scale: 0.01 };
        Self {
            coefficient: NormalPrior { mean: 0.0, sd: 10.0 },
            tau2_mu: ig,
            tau2_theta: ig,
            tau2_xi: ig,
            xi_bounds: (-1.0, 0.5),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.coefficient.sd) || !self.coefficient.mean.is_finite() {
            return Err(Error::InvalidConfig("normal prior needs finite mean and sd > 0".into()));
        }
        for g in [self.tau2_mu, self.tau2_theta, self.tau2_xi] {
            if !ok(g.shape) || !ok(g.scale) {
                return Err(Error::InvalidConfig("inverse-gamma prior needs shape, scale > 0".into()));
            }
        }
        if !(self.xi_bounds.0 < self.xi_bounds.1) {
            return Err(Error::InvalidConfig("xi_bounds must be increasing".into()));
        }
        Ok(())
    }

    fn tau2(&self, f: Family) -> &InvGammaPrior {
        match f {
            Family::Location => &self.tau2_mu,
            Family::LogScale => &self.tau2_theta,
            Family::Shape => &self.tau2_xi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RandomTerm {
    /// Covariate column; `None` for an intercept.
    col: Option<usize>,
    mean: usize,
    /// Index of the first of `K` group coefficients.
    first: usize,
    tau2: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct FamilyLayout {
    intercept: Option<usize>,
    fixed: Vec<(usize, usize)>,
    random: Vec<RandomTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BlockKind {
    Fixed(usize),
    Group(usize, usize),
    Means(usize),
    Tau,
    Shape,
}

/// Parameter vector layout of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    families: [FamilyLayout; 3],
    names: Vec<String>,
    groups: usize,
    blocks: Vec<(BlockKind, Vec<usize>)>,
    tau2: Vec<usize>,
}

impl Layout {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.groups;
        let mut names: Vec<String> = Vec::new();
        let push = |names: &mut Vec<String>, n: String| {
            names.push(n);
            names.len() - 1
        };
        let mut families: [FamilyLayout; 3] = Default::default();
        let mut tau2 = Vec::new();
        for (fi, (fam, terms)) in spec.families().into_iter().enumerate() {
            let p = fam.prefix();
            let fl = &mut families[fi];
            if !terms.random.iter().any(|n| n == INTERCEPT) {
                fl.intercept = Some(push(&mut names, format!("{p}.{INTERCEPT}")));
            }
            for n in &terms.fixed {
                let col = covariate_index(n).unwrap();
                fl.fixed.push((col, push(&mut names, format!("{p}.{n}"))));
            }
            for n in &terms.random {
                let col = if n == INTERCEPT { None } else { covariate_index(n) };
                let mean = push(&mut names, format!("{p}.{n}.mean"));
                let first = names.len();
                for g in 1..=k {
                    push(&mut names, format!("{p}.{n}[{g}]"));
                }
                let t = push(&mut names, format!("{p}.{n}.tau2"));
                tau2.push(t);
                fl.random.push(RandomTerm { col, mean, first, tau2: t });
            }
        }

        let mut blocks = Vec::new();
        for (fi, fl) in families.iter().enumerate().take(2) {
            let fixed: Vec<usize> = fl.intercept.into_iter().chain(fl.fixed.iter().map(|f| f.1)).collect();
            if !fixed.is_empty() {
                blocks.push((BlockKind::Fixed(fi), fixed));
            }
            if !fl.random.is_empty() {
                for g in 0..k {
                    blocks.push((BlockKind::Group(fi, g), fl.random.iter().map(|r| r.first + g).collect()));
                }
                blocks.push((BlockKind::Means(fi), fl.random.iter().map(|r| r.mean).collect()));
            }
        }
        let sh = &families[2];
        let mut shape: Vec<usize> = sh.intercept.into_iter().chain(sh.fixed.iter().map(|f| f.1)).collect();
        for r in &sh.random {
            shape.extend(r.first..r.first + k);
            shape.push(r.mean);
        }
        blocks.push((BlockKind::Shape, shape));
        if !tau2.is_empty() {
            blocks.push((BlockKind::Tau, tau2.clone()));
        }
        Ok(Self { families, names, groups: k, blocks, tau2 })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Indices of the variance parameters.
    pub fn tau2_indices(&self) -> &[usize] {
        &self.tau2
    }

    #[inline]
    fn predictor(&self, fi: usize, theta: &[f64], group: usize, cov: &[f64]) -> f64 {
        let fl = &self.families[fi];
        let mut acc = fl.intercept.map_or(0.0, |i| theta[i]);
        for &(c, i) in &fl.fixed {
            acc += theta[i] * cov[c];
        }
        for r in &fl.random {
            let g = theta[r.first + group];
            acc += match r.col {
                Some(c) => g * cov[c],
                None => g,
            };
        }
        acc
    }

    /// GEV parameters of a record in 0-based `group`, without validation.
    #[inline]
    pub fn gev_params(&self, theta: &[f64], group: usize, cov: &[f64]) -> GevParams {
        GevParams {
            mu: self.predictor(0, theta, group, cov),
            sigma: self.predictor(1, theta, group, cov).exp(),
            xi: self.predictor(2, theta, group, cov),
        }
    }

    /// Coefficients of `theta` in the form used by [`crate::gev::link_params`].
    pub fn coefficients(&self, theta: &[f64]) -> CoefficientSet {
        let k = self.groups;
        let terms = |fl: &FamilyLayout| {
            let mut t = LinearTerms {
                intercept: fl.intercept.map_or(0.0, |i| theta[i]),
                fixed: fl.fixed.iter().map(|&(c, i)| (c, theta[i])).collect(),
                ..Default::default()
            };
            for r in &fl.random {
                let g = theta[r.first..r.first + k].to_vec();
                match r.col {
                    Some(c) => t.random.push((c, g)),
                    None => t.random_intercept = Some(g),
                }
            }
            t
        };
        CoefficientSet {
            location: terms(&self.families[0]),
            log_scale: terms(&self.families[1]),
            shape: terms(&self.families[2]),
            groups: k,
        }
    }
}

/// The three additive parts of the log posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPosterior {
    pub data: f64,
    pub process: f64,
    pub prior: f64,
}

impl LogPosterior {
    pub fn total(&self) -> f64 {
        self.data + self.process + self.prior
    }
}

/// Records, layout and priors bound together.
#[derive(Debug, Clone)]
pub struct HbModel {
    layout: Layout,
    priors: PriorConfig,
    variant: Variant,
    z: Vec<f64>,
    /// Row-major covariates.
    x: Vec<f64>,
    width: usize,
    /// 0-based group per record.
    group: Vec<usize>,
    by_group: Vec<Vec<usize>>,
    all: Vec<usize>,
}

impl HbModel {
    pub fn new(records: &[BlockRecord], spec: &ModelSpec, priors: &PriorConfig) -> Result<Self> {
        priors.validate()?;
        let layout = Layout::new(spec)?;
        let width = COVARIATES.len();
        let mut x = Vec::with_capacity(records.len() * width);
        let mut z = Vec::with_capacity(records.len());
        let mut group = Vec::with_capacity(records.len());
        let mut by_group = vec![Vec::new(); spec.groups];
        for (i, r) in records.iter().enumerate() {
            if r.group == 0 || r.group > spec.groups {
                return Err(Error::UnknownGroup(r.group));
            }
            if r.covariates.len() != width {
                return Err(Error::Spec(format!("record {i} has {} covariates", r.covariates.len())));
            }
            if !r.z.is_finite() || r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::Spec(format!("record {i} has non-finite values")));
            }
            z.push(r.z);
            x.extend_from_slice(&r.covariates);
            group.push(r.group - 1);
            by_group[r.group - 1].push(i);
        }
        let all = (0..z.len()).collect();
        Ok(Self { layout, priors: priors.clone(), variant: spec.variant, z, x, width, group, by_group, all })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n_records(&self) -> usize {
        self.z.len()
    }

    /// Log-density of record `i` under natural-scale parameters `theta`.
    #[inline]
    pub fn record_loglik(&self, theta: &[f64], i: usize) -> f64 {
        let cov = &self.x[i * self.width..(i + 1) * self.width];
        self.layout.gev_params(theta, self.group[i], cov).ln_pdf(self.z[i])
    }

    fn loglik_over(&self, theta: &[f64], idx: &[usize]) -> f64 {
        let terms: Vec<f64> = idx.iter().map(|&i| self.record_loglik(theta, i)).collect();
        if terms.contains(&f64::NEG_INFINITY) {
            return f64::NEG_INFINITY;
        }
        stats::pairwise_sum(&terms)
    }

    fn log_process(&self, theta: &[f64]) -> f64 {
        let k = self.layout.groups;
        let mut acc = 0.0;
        for fl in &self.layout.families {
            for r in &fl.random {
                let tau2 = theta[r.tau2];
                if !(tau2 > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let p = NormalPrior { mean: theta[r.mean], sd: tau2.sqrt() };
                acc += (0..k).map(|g| p.ln_pdf(theta[r.first + g])).sum::<f64>();
            }
        }
        acc
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let np = &self.priors.coefficient;
        let (lo, hi) = self.priors.xi_bounds;
        let mut acc = 0.0;
        for (fi, fl) in self.layout.families.iter().enumerate() {
            let fam = [Family::Location, Family::LogScale, Family::Shape][fi];
            if let Some(i) = fl.intercept {
                if fi == 2 && !(theta[i] > lo && theta[i] < hi) {
                    return f64::NEG_INFINITY;
                }
                acc += np.ln_pdf(theta[i]);
            }
            for &(_, i) in &fl.fixed {
                acc += np.ln_pdf(theta[i]);
            }
            for r in &fl.random {
                if fi == 2 && r.col.is_none() {
                    let k = self.layout.groups;
                    if theta[r.first..r.first + k].iter().any(|v| !(*v > lo && *v < hi)) {
                        return f64::NEG_INFINITY;
                    }
                }
                acc += np.ln_pdf(theta[r.mean]);
                acc += self.priors.tau2(fam).ln_pdf(theta[r.tau2]);
            }
        }
        acc
    }

    /// Log posterior parts at natural-scale parameters.
    pub fn log_posterior_parts(&self, theta: &[f64]) -> Result<LogPosterior> {
        if theta.len() != self.layout.dim() {
            return Err(Error::Spec(format!(
                "parameter vector has {} values, model has {}",
                theta.len(),
                self.layout.dim()
            )));
        }
        Ok(LogPosterior {
            data: self.loglik_over(theta, &self.all),
            process: self.log_process(theta),
            prior: self.log_prior(theta),
        })
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.loglik_over(theta, &self.all)
    }

    fn natural(&self, s: &[f64]) -> Vec<f64> {
        let mut t = s.to_vec();
        for &i in &self.layout.tau2 {
            t[i] = s[i].exp();
        }
        t
    }

    /// Method-of-moments Gumbel start: location at the mean of `z`,
    /// log-scale from its standard deviation, shape −0.1, everything else 0
    /// and variances 1. Natural scale.
    pub fn initial_values(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.layout.dim()];
        let (m, sd) = match self.z.len() {
            0 => (0.0, 1.0),
            1 => (self.z[0], 1.0),
            _ => (stats::mean(&self.z), stats::variance(&self.z).sqrt().max(1e-3)),
        };
        let starts = [m, (sd * 6f64.sqrt() / PI).ln(), -0.1];
        for (fi, fl) in self.layout.families.iter().enumerate() {
            if let Some(i) = fl.intercept {
                theta[i] = starts[fi];
            }
            for r in &fl.random {
                theta[r.tau2] = 1.0;
                if r.col.is_none() {
                    theta[r.mean] = starts[fi];
                    for g in 0..self.layout.groups {
                        theta[r.first + g] = starts[fi];
                    }
                }
            }
        }
        theta
    }

    /// Sampler-scale start of each chain. Chain 0 starts at
    /// [`Self::initial_values`]; later chains add Gaussian jitter of
    /// `cfg.init_jitter`, retried until the start has finite density.
    pub fn chain_inits(&self, cfg: &McmcConfig) -> Result<Vec<Vec<f64>>> {
        let mut base = self.initial_values();
        for &i in &self.layout.tau2 {
            base[i] = base[i].ln();
        }
        if !self.log_density(&base).is_finite() {
            return Err(Error::Initialization("log posterior not finite at the starting values".into()));
        }
        let mut inits = vec![base.clone()];
        for c in 1..cfg.chains {
            let mut rng = chain_rng(cfg.seed ^ 0x5eed_1a17, c);
            let mut start = base.clone();
            for _ in 0..100 {
                let cand: Vec<f64> =
                    base.iter().map(|v| v + cfg.init_jitter * rng.sample::<f64, _>(StandardNormal)).collect();
                if self.log_density(&cand).is_finite() {
                    start = cand;
                    break;
                }
            }
            inits.push(start);
        }
        Ok(inits)
    }

    /// Runs every chain of `cfg` in sequence.
    pub fn fit(&self, cfg: &McmcConfig) -> Result<PosteriorChain> {
        let inits = self.chain_inits(cfg)?;
        run_mcmc(self, self.layout.names.clone(), &inits, cfg)
    }
}

impl BlockTarget for HbModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn blocks(&self) -> Vec<Vec<usize>> {
        self.layout.blocks.iter().map(|b| b.1.clone()).collect()
    }

    fn log_density(&self, s: &[f64]) -> f64 {
        let theta = self.natural(s);
        let jac: f64 = self.layout.tau2.iter().map(|&i| s[i]).sum();
        let lp = self.log_prior(&theta) + self.log_process(&theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + jac + self.log_likelihood(&theta)
    }

    fn block_log_density(&self, s: &[f64], block: usize) -> f64 {
        let theta = self.natural(s);
        let jac: f64 = self.layout.tau2.iter().map(|&i| s[i]).sum();
        let lp = self.log_prior(&theta) + self.log_process(&theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let data = match self.layout.blocks[block].0 {
            BlockKind::Fixed(_) | BlockKind::Shape => self.loglik_over(&theta, &self.all),
            BlockKind::Group(_, g) => self.loglik_over(&theta, &self.by_group[g]),
            BlockKind::Means(_) | BlockKind::Tau => 0.0,
        };
        lp + jac + data
    }

    fn output(&self, s: &[f64], out: &mut Vec<f64>) {
        out.extend_from_slice(s);
        for &i in &self.layout.tau2 {
            out[i] = s[i].exp();
        }
    }
}

/// Log posterior of natural-scale `params` for `records` under `spec`.
pub fn log_posterior(params: &[f64], records: &[BlockRecord], spec: &ModelSpec, priors: &PriorConfig) -> Result<f64> {
    HbModel::new(records, spec, priors)?.log_posterior_parts(params).map(|p| p.total())
}

/// Names of parameters of `spec` with their natural-scale layout.
pub fn parameter_names(spec: &ModelSpec) -> Result<Vec<String>> {
    Ok(Layout::new(spec)?.names)
}

/// Human-readable block labels, in sampler order.
pub fn block_labels(spec: &ModelSpec) -> Result<Vec<String>> {
    let l = Layout::new(spec)?;
    let fam = |i: usize| [Family::Location, Family::LogScale, Family::Shape][i].prefix();
    Ok(l.blocks
        .iter()
        .map(|(b, _)| match *b {
            BlockKind::Fixed(f) => format!("{}-fixed", fam(f)),
            BlockKind::Group(f, g) => format!("{}-random[{}]", fam(f), g + 1),
            BlockKind::Means(f) => format!("{}-means", fam(f)),
            BlockKind::Shape => "xi".to_string(),
            BlockKind::Tau => "tau2".to_string(),
        })
        .collect())
}

#[cfg(test)]
mod tests;
