//! Run configuration.
//!
//! Values resolve in three layers: built-in defaults, then a JSON config file,
//! then command-line flags. Every section may be given partially in the file;
//! missing fields keep their defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use zoo3d::body_model::TemplateModel;
use zoo3d::decoder::{DecoderConfig, DropoutConfig};
use zoo3d::losses::{DenoisingConfig, LossWeights};
use zoo3d::matcher::MatchWeights;
use zoo3d::metrics::{EvalConfig, PckNormalizer, DEFAULT_OKS_SIGMA};
use zoo3d::scene::SceneConfig;
use zoo3d::template::{make_toy_template, TemplateConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    #[default]
    None,
    /// Ground-truth keypoints of the first `P` annotated instances.
    GtKeypoints,
    /// Per-scene prompt sets read from `decoder.prompts_file`.
    File,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateSource {
    /// Template file. When absent a toy template is built from `generate`.
    pub path: Option<PathBuf>,
    pub generate: TemplateConfig,
}

impl TemplateSource {
    pub fn load(&self) -> Result<TemplateModel> {
        match &self.path {
            Some(p) => {
                TemplateModel::load(p).with_context(|| format!("loading template {}", p.display()))
            }
            None => Ok(make_toy_template(&self.generate)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub pose_pool_size: usize,
    pub shapes_per_species: usize,
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            pose_pool_size: 64,
            shapes_per_species: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub pck_threshold: f64,
    pub pck_normalizer: PckNormalizer,
    /// Same OKS sigma for every keypoint.
    pub oks_sigma: f64,
    pub ap_thresholds: Vec<f64>,
    /// Visible-keypoint counts at which the Mid and High buckets start.
    /// Thirds of the keypoint count when absent.
    pub bucket_edges: Option<[usize; 2]>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let base = EvalConfig::with_keypoints(0);
        Self {
            pck_threshold: base.pck_threshold,
            pck_normalizer: base.pck_normalizer,
            oks_sigma: DEFAULT_OKS_SIGMA,
            ap_thresholds: base.ap_thresholds,
            bucket_edges: None,
        }
    }
}

impl EvalSettings {
    pub fn eval_config(&self, n_keypoints: usize) -> EvalConfig {
        EvalConfig {
            pck_threshold: self.pck_threshold,
            pck_normalizer: self.pck_normalizer,
            oks_sigmas: vec![self.oks_sigma; n_keypoints],
            ap_thresholds: self.ap_thresholds.clone(),
        }
    }

    pub fn buckets(&self, n_keypoints: usize) -> [usize; 2] {
        self.bucket_edges
            .unwrap_or([n_keypoints.div_ceil(3), (2 * n_keypoints).div_ceil(3)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSettings {
    /// Keypoint, shape and joint counts are taken from the template.
    pub config: DecoderConfig,
    /// Rasterized image side per feature cell, in pixels.
    pub patch: usize,
    /// Weight file; overrides `config` when given.
    pub weights: Option<PathBuf>,
    /// Seed for random weights; the run seed when absent.
    pub weights_seed: Option<u64>,
    pub prompts: PromptMode,
    pub prompts_file: Option<PathBuf>,
    pub train_mode: bool,
    pub dropout: DropoutConfig,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        Self {
            config: DecoderConfig {
                slots: 8,
                ..DecoderConfig::desk()
            },
            patch: 16,
            weights: None,
            weights_seed: None,
            prompts: PromptMode::None,
            prompts_file: None,
            train_mode: false,
            dropout: DropoutConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub num_scenes: u64,
    pub template: TemplateSource,
    pub pools: PoolConfig,
    pub scene: SceneConfig,
    pub match_weights: MatchWeights,
    pub loss_weights: LossWeights,
    pub denoising: DenoisingConfig,
    pub eval: EvalSettings,
    pub decoder: DecoderSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_scenes: 100,
            template: TemplateSource::default(),
            pools: PoolConfig::default(),
            scene: SceneConfig::default(),
            match_weights: MatchWeights::default(),
            loss_weights: LossWeights::default(),
            denoising: DenoisingConfig::default(),
            eval: EvalSettings::default(),
            decoder: DecoderSettings::default(),
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub num_scenes: Option<u64>,
    pub min_animals: Option<usize>,
    pub max_animals: Option<usize>,
    pub template: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub slots: Option<usize>,
    pub prompts: Option<PromptMode>,
    pub prompts_file: Option<PathBuf>,
    pub train_mode: bool,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn resolve(file: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut c = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(v) = o.seed {
            c.seed = v;
        }
        if let Some(v) = o.num_scenes {
            c.num_scenes = v;
        }
        if let Some(v) = o.min_animals {
            c.scene.layout.min_animals = v;
        }
        if let Some(v) = o.max_animals {
            c.scene.layout.max_animals = v;
            c.scene.layout.min_animals = c.scene.layout.min_animals.min(v);
        }
        if let Some(v) = &o.template {
            c.template.path = Some(v.clone());
        }
        if let Some(v) = &o.weights {
            c.decoder.weights = Some(v.clone());
        }
        if let Some(v) = o.slots {
            c.decoder.config.slots = v;
        }
        if let Some(v) = o.prompts {
            c.decoder.prompts = v;
        }
        if let Some(v) = &o.prompts_file {
            c.decoder.prompts_file = Some(v.clone());
            if o.prompts.is_none() {
                c.decoder.prompts = PromptMode::File;
            }
        }
        if o.train_mode {
            c.decoder.train_mode = true;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.template.generate.validate()?;
        self.eval.eval_config(1).validate()?;
        self.decoder.config.validate()?;
        self.decoder.dropout.validate()?;
        if self.pools.pose_pool_size == 0 || self.pools.shapes_per_species == 0 {
            bail!(zoo3d::Error::InvalidConfig(
                "pose and shape pools must be non-empty".into()
            ));
        }
        if self.decoder.patch == 0 {
            bail!(zoo3d::Error::InvalidConfig(
                "decoder patch must be positive".into()
            ));
        }
        if self.decoder.prompts == PromptMode::File && self.decoder.prompts_file.is_none() {
            bail!(zoo3d::Error::InvalidConfig(
                "prompts mode `file` needs a prompts file".into()
            ));
        }
        if let Some([mid, high]) = self.eval.bucket_edges {
            if mid > high {
                bail!(zoo3d::Error::InvalidConfig(
                    "bucket edges must be ordered".into()
                ));
            }
        }
        Ok(())
    }

    /// One-line JSON rendering, echoed at the top of text reports.
    pub fn to_compact_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
