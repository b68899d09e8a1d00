//! Run configuration: a TOML file with one table per module.
//!
//! Parsing is strict: unknown tables or keys are errors. Every command writes
//! the fully resolved configuration next to its outputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumConfig, EvalOptions};
use crate::dit::ModelConfig;
use crate::error::{config_err, Error, Result};
use crate::pipeline::{PretrainConfig, SampleOptions};
use crate::video::VideoConfig;
use crate::world::WorldConfig;

pub const SNAPSHOT_FILE: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub wide_fraction: f64,
    pub style_fraction: f64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        PretrainSection {
            steps: 5000,
            lr: 1e-3,
            seed: 0,
            wide_fraction: 0.25,
            style_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    /// Euler steps when sampling.
    pub sample_steps: usize,
    /// Style guidance scale; 1 disables guidance.
    pub guidance: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            sample_steps: crate::flow::DEFAULT_SAMPLE_STEPS,
            guidance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub seed: u64,
    /// Triplets evaluated per split after each stage; 0 means all.
    pub limit: usize,
    /// Held-out content layouts paired with every held-out style.
    pub contents: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            seed: 0,
            limit: 0,
            contents: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainSection,
    pub flow: FlowSection,
    pub curriculum: CurriculumConfig,
    pub video: VideoConfig,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_err!("{}", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.model.validate()?;
        if self.model.image_size != self.world.size {
            return Err(config_err!(
                "model.image_size {} differs from world.size {}",
                self.model.image_size,
                self.world.size
            ));
        }
        if self.pretrain.lr <= 0.0 || !(0.0..=1.0).contains(&self.pretrain.wide_fraction)
            || !(0.0..=1.0).contains(&self.pretrain.style_fraction) {
            return Err(config_err!("pretrain needs lr > 0 and fractions in [0, 1]"));
        }
        if self.flow.sample_steps == 0 {
            return Err(config_err!("flow.sample_steps must be positive"));
        }
        if !self.flow.guidance.is_finite() {
            return Err(config_err!("flow.guidance must be finite"));
        }
        self.curriculum.validate()?;
        self.video.validate()
    }

    /// Sets every seed in the configuration.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.world.seed = seed;
        self.pretrain.seed = seed;
        self.curriculum.seed = seed;
        self.eval.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Writes the resolved configuration to `dir/resolved_config.toml`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::tensor::write_atomic(&dir.join(SNAPSHOT_FILE), self.to_toml().as_bytes())
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain.steps,
            lr: self.pretrain.lr,
            seed: self.pretrain.seed,
            size: self.world.size,
            wide_fraction: self.pretrain.wide_fraction,
            style_fraction: self.pretrain.style_fraction,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            sample_steps: self.flow.sample_steps,
            seed: self.eval.seed,
            limit: self.eval.limit,
        }
    }

    pub fn sample_options(&self, seed: u64) -> SampleOptions {
        SampleOptions {
            steps: self.flow.sample_steps,
            seed,
            guidance: self.flow.guidance,
            ..SampleOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_override_defaults() {
        let c = RunConfig::parse("[curriculum]\nrho = 0.5\nsteps = [10, 20, 30]\n[flow]\nsample_steps = 4\n").unwrap();
        assert_eq!(c.curriculum.rho, 0.5);
        assert_eq!(c.curriculum.steps, [10, 20, 30]);
        assert_eq!(c.curriculum.gamma, CurriculumConfig::default().gamma);
        assert_eq!(c.flow.sample_steps, 4);
    }

    #[test]
    fn strict_keys_and_tables() {
        assert!(matches!(RunConfig::parse("[world]\nsizee = 3\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[bogus]\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("seed = 1\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[curriculum]\nrho = 0.9\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[world]\nsize = 32\n"), Err(Error::Config(_))));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::default().with_seed(9);
        c.curriculum.lr = 3e-4;
        c.video.tau = 0.99;
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }
}
