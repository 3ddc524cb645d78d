//! Pipeline configuration: one JSON document covering every stage.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use corisk_core::blocks::BlockConfig;
use corisk_core::detection::{DetectionConfig, EventKind};
use corisk_core::hbsgrp::{McmcConfig, ModelSpec, ParamTerms, PriorConfig, Variant};
use corisk_core::kinematics::PreprocessConfig;
use corisk_core::risk::{SummaryMode, DEFAULT_OMEGA_GRID};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::synth::SynthSpec;

/// Input and output locations, relative to the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of raw trajectory CSV files.
    pub tracks: PathBuf,
    /// Vehicle dimension table; vehicles not listed get a default car.
    pub dimensions: Option<PathBuf>,
    /// Boundary polylines (JSON).
    pub boundaries: Option<PathBuf>,
    /// Group regions and their geometry (JSON).
    pub site_map: PathBuf,
    /// Ground-truth events written by `synth` and checked by `validate`.
    pub ground_truth: Option<PathBuf>,
    /// Root of all stage outputs.
    pub work: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            tracks: "tracks".into(),
            dimensions: None,
            boundaries: None,
            site_map: "site_map.json".into(),
            ground_truth: None,
            work: "out".into(),
        }
    }
}

/// Linear predictors of the grouped model. The fixed-parameter variant
/// uses the same covariates with every random term made fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelTerms {
    pub location: ParamTerms,
    pub log_scale: ParamTerms,
    pub shape: ParamTerms,
}

impl Default for ModelTerms {
    fn default() -> Self {
        Self {
            location: ParamTerms { fixed: vec![], random: vec!["intercept".into()] },
            log_scale: ParamTerms::default(),
            shape: ParamTerms::default(),
        }
    }
}

impl ModelTerms {
    pub fn spec(&self, variant: Variant, groups: usize) -> ModelSpec {
        let grouped = ModelSpec {
            variant: Variant::Hbsgrp,
            location: self.location.clone(),
            log_scale: self.log_scale.clone(),
            shape: self.shape.clone(),
            groups,
        };
        match variant {
            Variant::Hbsgrp => grouped,
            Variant::Hbsfp => grouped.to_fixed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub variants: Vec<Variant>,
    pub kinds: Vec<EventKind>,
    /// BGR above this marks a parameter as not converged.
    pub bgr_threshold: f64,
    /// Fail with a numeric error instead of warning when a fit has not
    /// converged.
    pub require_convergence: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            variants: vec![Variant::Hbsfp, Variant::Hbsgrp],
            kinds: vec![EventKind::VehicleVehicle, EventKind::VehicleInfrastructure],
            bgr_threshold: 1.1,
            require_convergence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    /// Critical threshold on the negated-TTC axis, seconds.
    pub omega: f64,
    /// Exposure in seconds applied to every group; by default each group's
    /// observed time.
    pub exposure: Option<f64>,
    pub mode: SummaryMode,
    /// Fitted variant used for risk and validation.
    pub variant: Variant,
    /// Thresholds of the case–control sweep.
    pub grid: Vec<f64>,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            omega: -0.5,
            exposure: None,
            mode: SummaryMode::PlugIn,
            variant: Variant::Hbsgrp,
            grid: DEFAULT_OMEGA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub preprocess: PreprocessConfig,
    pub detection: DetectionConfig,
    pub blocks: BlockConfig,
    pub model: ModelTerms,
    pub fit: FitConfig,
    pub priors: PriorConfig,
    pub mcmc: McmcConfig,
    pub risk: RiskConfig,
    pub synth: SynthSpec,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.detection.validate()?;
        self.blocks.validate()?;
        self.priors.validate()?;
        self.mcmc.validate()?;
        self.synth.validate()?;
        let r = &self.risk;
        if !r.omega.is_finite() {
            return Err(CliError::Config("risk.omega must be finite".into()));
        }
        if let Some(t) = r.exposure {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("risk.exposure must be positive, got {t}")));
            }
        }
        if r.grid.is_empty() || r.grid.iter().any(|w| !w.is_finite()) {
            return Err(CliError::Config("risk.grid must be a non-empty list of finite thresholds".into()));
        }
        if !(self.fit.bgr_threshold >= 1.0 && self.fit.bgr_threshold.is_finite()) {
            return Err(CliError::Config(format!(
                "fit.bgr_threshold must be at least 1, got {}",
                self.fit.bgr_threshold
            )));
        }
        if self.fit.variants.is_empty() || self.fit.kinds.is_empty() {
            return Err(CliError::Config("fit.variants and fit.kinds must not be empty".into()));
        }
        if !self.fit.variants.contains(&r.variant) {
            return Err(CliError::Config(format!("risk.variant {} is not among fit.variants", r.variant.label())));
        }
        self.model.spec(Variant::Hbsgrp, 1).validate()?;
        Ok(())
    }
}

/// A validated configuration with its paths resolved.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    /// Directory the relative paths are resolved against.
    pub base: PathBuf,
    /// SHA-256 of the effective configuration (after overrides).
    pub hash: String,
    pub jobs: usize,
}

impl Loaded {
    pub fn from_file(path: &Path, seed: Option<u64>, jobs: Option<usize>) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(config, base, seed, jobs)
    }

    pub fn new(mut config: PipelineConfig, base: PathBuf, seed: Option<u64>, jobs: Option<usize>) -> Result<Self> {
        if let Some(s) = seed {
            config.seed = s;
        }
        config.validate()?;
        let jobs = match jobs {
            Some(0) => return Err(CliError::Config("--jobs must be at least 1".into())),
            Some(j) => j,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let hash = hex::encode(Sha256::digest(serde_json::to_vec(&config).expect("config serializes")));
        let loaded = Self { config, base, hash, jobs };
        loaded.check_paths()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Output directory of a stage.
    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.resolve(&self.config.paths.work).join(stage)
    }

    /// Path as recorded in manifests: relative to the configuration
    /// directory when possible.
    pub fn display_path(&self, p: &Path) -> String {
        p.strip_prefix(&self.base).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Seed of a named random stream derived from the global seed.
    pub fn substream(&self, name: &str) -> u64 {
        substream_seed(self.config.seed, name)
    }

    fn check_paths(&self) -> Result<()> {
        let p = &self.config.paths;
        let named: Vec<(&str, PathBuf)> = [
            ("tracks", Some(&p.tracks)),
            ("dimensions", p.dimensions.as_ref()),
            ("boundaries", p.boundaries.as_ref()),
            ("site_map", Some(&p.site_map)),
            ("ground_truth", p.ground_truth.as_ref()),
            ("work", Some(&p.work)),
        ]
        .into_iter()
        .filter_map(|(n, q)| q.map(|q| (n, self.resolve(q))))
        .collect();
        let mut seen = BTreeSet::new();
        for (name, path) in &named {
            if !seen.insert(path.clone()) {
                return Err(CliError::Config(format!("paths.{name} repeats another path: {}", path.display())));
            }
        }
        let work = self.resolve(&p.work);
        for (name, path) in &named {
            if *name != "work" && path.starts_with(&work) {
                return Err(CliError::Config(format!("paths.{name} lies inside the work directory")));
            }
        }
        Ok(())
    }
}

/// First eight bytes of SHA-256 over the seed and the stream name.
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let empty: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(empty, c);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sead": 1}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"risk": {"omga": -0.3}}"#).is_err());
    }

    #[test]
    fn repeated_paths_are_rejected() {
        let mut c = PipelineConfig::default();
        c.paths.site_map = "tracks".into();
        let err = Loaded::new(c, PathBuf::from("/x"), None, Some(1)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn seed_override_changes_hash_and_streams() {
        let a = Loaded::new(PipelineConfig::default(), "/x".into(), Some(1), Some(1)).unwrap();
        let b = Loaded::new(PipelineConfig::default(), "/x".into(), Some(2), Some(1)).unwrap();
        assert_ne!(a.hash, b.hash);
        assert_ne!(a.substream("fit"), b.substream("fit"));
        assert_ne!(a.substream("fit"), a.substream("synth"));
        assert_eq!(a.substream("fit"), substream_seed(1, "fit"));
    }
}
