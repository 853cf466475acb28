use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distill::DistillConfig;
use crate::error::{Error, Result};
use crate::evaluate::EvalSettings;
use crate::preprocess::TileSpec;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// Existing dataset directory (`annotations.json` + `images/`), used when no synth
    /// section is given.
    pub source: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    /// `null` disables tiling.
    pub tile: Option<TileSpec>,
    /// Side length every sample is resized to; must match `model.input_size`.
    pub resize: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: None,
            synth: Some(SynthConfig::default()),
            tile: Some(TileSpec::default()),
            resize: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub input_size: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { input_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seeds: vec![1, 2, 3],
        }
    }
}

/// Everything a command needs. Missing sections take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: DistillConfig,
    pub eval: EvalSettings,
    pub sweep: SweepSection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.data.synth {
            s.validate()?;
        }
        if let Some(t) = &self.data.tile {
            t.validate()?;
        }
        if self.data.resize != self.model.input_size {
            return Err(Error::invalid(format!(
                "data.resize ({}) must equal model.input_size ({})",
                self.data.resize, self.model.input_size
            )));
        }
        self.train.validate()?;
        if let Some(a) = self.sweep.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::invalid(format!("sweep alpha {a} outside [0, 1]")));
        }
        if !self.eval.thresholds.contains(&0.5) || !self.eval.thresholds.contains(&0.75) {
            return Err(Error::invalid("eval thresholds must include 0.5 and 0.75"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the resolved config as `config.json` in `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.json");
        fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))
    }
}
