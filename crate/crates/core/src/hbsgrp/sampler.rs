//! Blocked adaptive random-walk Metropolis.
//!
//! Each block is updated in turn with a Gaussian proposal `x + s·L·z`.
//! During burn-in the log step size `s` is nudged every
//! `adapt_interval` iterations toward an acceptance rate inside the
//! target band, and once enough burn-in draws exist `L` becomes the
//! Cholesky factor of their empirical covariance scaled by `2.38²/d`.
//! Both are frozen when burn-in ends.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{linalg, stats, Error, Result};

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

/// A log-density split into parameter blocks.
pub trait BlockTarget {
    fn dim(&self) -> usize;

    /// Parameter indices of each block. Blocks partition `0..dim`.
    fn blocks(&self) -> Vec<Vec<usize>>;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Log-density up to terms that do not depend on `block`'s parameters.
    fn block_log_density(&self, x: &[f64], block: usize) -> f64 {
        let _ = block;
        self.log_density(x)
    }

    /// Values recorded for a draw; the identity by default.
    fn output(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend_from_slice(x);
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct McmcConfig {
    pub chains: usize,
    /// Total iterations per chain, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Iterations between step-size updates during burn-in.
    pub adapt_interval: usize,
    /// Acceptance band targeted by adaptation.
    pub target_accept: (f64, f64),
    /// Initial proposal standard deviation per coordinate.
    pub initial_step: f64,
    /// Scale of the start-point jitter applied to chains after the first.
    pub init_jitter: f64,
}

/// Smallest number of retained draws per chain.
pub const MIN_RETAINED: usize = 1000;

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 2,
            iterations: 50_000,
            burn_in: 20_000,
            thin: 1,
            seed: 0,
            adapt_interval: 50,
            target_accept: (0.2, 0.4),
            initial_step: 0.1,
            init_jitter: 0.1,
        }
    }
}

impl McmcConfig {
    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.chains == 0 {
            return bad("at least one chain required".into());
        }
        if self.thin == 0 || self.adapt_interval == 0 {
            return bad("thin and adapt_interval must be positive".into());
        }
        if self.retained() < MIN_RETAINED {
            return bad(format!(
                "{} iterations, {} burn-in and thin {} keep fewer than {MIN_RETAINED} draws per chain",
                self.iterations, self.burn_in, self.thin
            ));
        }
        let (lo, hi) = self.target_accept;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad(format!("invalid acceptance band ({lo}, {hi})"));
        }
        if !(self.initial_step > 0.0) || !(self.init_jitter >= 0.0) {
            return bad("initial_step must be positive and init_jitter non-negative".into());
        }
        Ok(())
    }
}

/// Random stream for chain `chain`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    /// Retained draws, row-major (draw × output width).
    pub draws: Vec<f64>,
    pub width: usize,
    /// Post-burn-in acceptance rate per block.
    pub acceptance: Vec<f64>,
    /// Log step size per block when burn-in ended.
    pub frozen_log_scale: Vec<f64>,
    /// Log step size per block at the final iteration.
    pub final_log_scale: Vec<f64>,
}

struct BlockState {
    idx: Vec<usize>,
    log_scale: f64,
    /// Lower Cholesky factor of the proposal shape.
    chol: Vec<f64>,
    n: usize,
    mean: Vec<f64>,
    /// Running sum of centred cross-products (Welford).
    m2: Vec<f64>,
    empirical: bool,
    batch_accepts: usize,
    accepts: usize,
    batches: usize,
}

impl BlockState {
    fn new(idx: Vec<usize>, step: f64) -> Self {
        let d = idx.len();
        let mut chol = vec![0.0; d * d];
        for i in 0..d {
            chol[i * d + i] = step;
        }
        Self {
            idx,
            log_scale: 0.0,
            chol,
            n: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d * d],
            empirical: false,
            batch_accepts: 0,
            accepts: 0,
            batches: 0,
        }
    }

    fn observe(&mut self, x: &[f64]) {
        let d = self.idx.len();
        self.n += 1;
        let n = self.n as f64;
        let delta: Vec<f64> = self.idx.iter().zip(&self.mean).map(|(&i, m)| x[i] - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        for a in 0..d {
            let after = x[self.idx[a]] - self.mean[a];
            for (b, dl) in delta.iter().enumerate() {
                self.m2[a * d + b] += after * dl;
            }
        }
    }

    /// Switches to the empirical covariance once enough draws exist.
    fn refresh_shape(&mut self, min_draws: usize) {
        let d = self.idx.len();
        if self.n < min_draws.max(2 * d + 2) {
            return;
        }
        let factor = 2.38 * 2.38 / d as f64 / (self.n - 1) as f64;
        let mut cov: Vec<f64> = self.m2.iter().map(|v| v * factor).collect();
        for i in 0..d {
            let diag = cov[i * d + i];
            cov[i * d + i] = diag + 1e-10 + 1e-8 * diag.abs();
        }
        if let Some(l) = linalg::cholesky(&cov, d) {
            self.chol = l;
            if !self.empirical {
                self.empirical = true;
                self.log_scale = 0.0;
            }
        }
    }
}

/// Runs one chain from `init`. Deterministic in (`cfg.seed`, `chain`).
pub fn run_chain<T: BlockTarget + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &McmcConfig,
    chain: usize,
) -> Result<ChainRun> {
    cfg.validate()?;
    let d = target.dim();
    if init.len() != d {
        return Err(Error::Spec(format!("initial point has {} values, target has {d}", init.len())));
    }
    if !target.log_density(init).is_finite() {
        return Err(Error::Initialization(format!("chain {chain}: non-finite log density at start")));
    }
    let mut rng = chain_rng(cfg.seed, chain);
    let mut blocks: Vec<BlockState> =
        target.blocks().into_iter().map(|idx| BlockState::new(idx, cfg.initial_step)).collect();
    let mut x = init.to_vec();
    let mut prop = x.clone();
    let mut z = Vec::new();
    let mut out = Vec::new();
    let retained = cfg.retained();
    let mut draws = Vec::new();
    let mut width = 0;
    let mut frozen = Vec::new();
    let (lo, hi) = cfg.target_accept;
    // Shape estimation starts once a quarter of burn-in has been seen and
    // stops at three quarters, leaving the rest to settle the step size.
    let shape_after = (cfg.burn_in / 4).max(cfg.adapt_interval);
    let shape_until = cfg.burn_in * 3 / 4;

    for iter in 0..cfg.iterations {
        let burning = iter < cfg.burn_in;
        if iter == cfg.burn_in {
            frozen = blocks.iter().map(|b| b.log_scale).collect();
            for b in blocks.iter_mut() {
                b.accepts = 0;
            }
        }
        for (bi, b) in blocks.iter_mut().enumerate() {
            let k = b.idx.len();
            z.clear();
            z.extend((0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let step = linalg::lower_mul(&b.chol, &z);
            let s = b.log_scale.exp();
            prop.copy_from_slice(&x);
            for (j, &i) in b.idx.iter().enumerate() {
                prop[i] = x[i] + s * step[j];
            }
            let cur = target.block_log_density(&x, bi);
            let new = target.block_log_density(&prop, bi);
            let u: f64 = rng.random();
            let accept = new.is_finite() && (new >= cur || u.ln() < new - cur);
            if accept {
                for &i in &b.idx {
                    x[i] = prop[i];
                }
                b.accepts += 1;
                b.batch_accepts += 1;
            }
            if burning {
                if iter >= shape_after {
                    b.observe(&x);
                }
                if (iter + 1) % cfg.adapt_interval == 0 {
                    b.batches += 1;
                    let rate = b.batch_accepts as f64 / cfg.adapt_interval as f64;
                    let delta = (1.0 / (b.batches as f64).sqrt()).clamp(0.01, 0.5);
                    if rate < lo {
                        b.log_scale -= delta;
                    } else if rate > hi {
                        b.log_scale += delta;
                    }
                    b.batch_accepts = 0;
                    if (iter + 1) % (cfg.adapt_interval * 10) == 0 && iter < shape_until {
                        b.refresh_shape(cfg.adapt_interval * 4);
                    }
                }
            }
        }
        if !burning && (iter - cfg.burn_in).is_multiple_of(cfg.thin) && draws.len() < retained * width.max(1) {
            out.clear();
            target.output(&x, &mut out);
            width = out.len();
            draws.extend_from_slice(&out);
        }
    }
    if frozen.is_empty() {
        frozen = blocks.iter().map(|b| b.log_scale).collect();
    }
    let post = (cfg.iterations - cfg.burn_in) as f64;
    Ok(ChainRun {
        draws,
        width,
        acceptance: blocks.iter().map(|b| b.accepts as f64 / post).collect(),
        frozen_log_scale: frozen,
        final_log_scale: blocks.iter().map(|b| b.log_scale).collect(),
    })
}

/// Posterior draws of several chains.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub names: Vec<String>,
    /// Per chain, row-major retained draws.
    pub chains: Vec<Vec<f64>>,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Per chain, per block post-burn-in acceptance rates.
    pub acceptance: Vec<Vec<f64>>,
}

/// Posterior summary of one parameter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

impl PosteriorChain {
    pub fn from_runs(names: Vec<String>, runs: Vec<ChainRun>, cfg: &McmcConfig) -> Result<Self> {
        if let Some(r) = runs.iter().find(|r| r.width != names.len()) {
            return Err(Error::Spec(format!("draw width {} but {} names", r.width, names.len())));
        }
        let mut sorted: Vec<&String> = names.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Spec("parameter names must be unique".into()));
        }
        Ok(Self {
            names,
            acceptance: runs.iter().map(|r| r.acceptance.clone()).collect(),
            chains: runs.into_iter().map(|r| r.draws).collect(),
            burn_in: cfg.burn_in,
            thin: cfg.thin,
            seed: cfg.seed,
        })
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Retained draws per chain.
    pub fn n_draws(&self) -> usize {
        self.chains.first().map_or(0, |c| c.len() / self.n_params().max(1))
    }

    pub fn draw(&self, chain: usize, i: usize) -> &[f64] {
        let p = self.n_params();
        &self.chains[chain][i * p..(i + 1) * p]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, chain: usize, j: usize) -> Vec<f64> {
        self.chains[chain].iter().skip(j).step_by(self.n_params()).copied().collect()
    }

    /// All chains' draws of parameter `j`, chain-major.
    pub fn pooled(&self, j: usize) -> Vec<f64> {
        (0..self.n_chains()).flat_map(|c| self.column(c, j)).collect()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        (0..self.n_params()).map(|j| stats::mean(&self.pooled(j))).collect()
    }

    pub fn summarize(&self) -> Vec<ParamSummary> {
        (0..self.n_params())
            .map(|j| {
                let mut v = self.pooled(j);
                let mean = stats::mean(&v);
                let sd = stats::variance(&v).sqrt();
                v.sort_by(f64::total_cmp);
                ParamSummary {
                    name: self.names[j].clone(),
                    mean,
                    sd,
                    q025: stats::quantile_sorted(&v, 0.025),
                    q975: stats::quantile_sorted(&v, 0.975),
                }
            })
            .collect()
    }

    /// Every `k`-th pooled draw so that at most `max` remain, in chain
    /// order.
    pub fn thinned_draws(&self, max: usize) -> Vec<&[f64]> {
        let total = self.n_chains() * self.n_draws();
        let step = total.div_ceil(max.max(1)).max(1);
        (0..total).step_by(step).map(|g| self.draw(g / self.n_draws(), g % self.n_draws())).collect()
    }
}

/// Runs `inits.len()` chains one after another.
pub fn run_mcmc<T: BlockTarget + ?Sized>(
    target: &T,
    names: Vec<String>,
    inits: &[Vec<f64>],
    cfg: &McmcConfig,
) -> Result<PosteriorChain> {
    let runs = inits.iter().enumerate().map(|(c, init)| run_chain(target, init, cfg, c)).collect::<Result<Vec<_>>>()?;
    PosteriorChain::from_runs(names, runs, cfg)
}

/// Potential scale reduction factor per parameter.
pub fn bgr_diagnostic(chain: &PosteriorChain) -> Result<Vec<f64>> {
    let c = chain.n_chains();
    if c < 2 {
        return Err(Error::InsufficientChains(c));
    }
    let n = chain.n_draws();
    if n < 2 {
        return Err(Error::InvalidConfig("at least two draws per chain required".into()));
    }
    let nf = n as f64;
    Ok((0..chain.n_params())
        .map(|j| {
            let cols: Vec<Vec<f64>> = (0..c).map(|k| chain.column(k, j)).collect();
            let means: Vec<f64> = cols.iter().map(|v| stats::mean(v)).collect();
            let w = stats::mean(&cols.iter().map(|v| stats::variance(v)).collect::<Vec<_>>());
            let b = nf * stats::variance(&means);
            if w == 0.0 {
                return if b == 0.0 { 1.0 } else { f64::INFINITY };
            }
            (((nf - 1.0) / nf * w + b / nf) / w).sqrt()
        })
        .collect())
}
