//! Pipeline configuration: TOML file values layered over defaults, with
//! command-line flags applied last.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tagbook::events::SvmParams;
use tagbook::reduce::RECOMMENDED_SIZE;
use tagbook::PropagationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMethod {
    #[default]
    None,
    Frequent,
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reduction {
    pub method: ReductionMethod,
    /// Target dimensionality m'.
    pub size: usize,
}

impl Default for Reduction {
    fn default() -> Self {
        Reduction {
            method: ReductionMethod::None,
            size: RECOMMENDED_SIZE,
        }
    }
}

/// SVM hyperparameters as written in the config file; the seed is shared
/// with the rest of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub lambda: f64,
    pub epochs: usize,
    pub normalize_inputs: bool,
}

impl Default for SvmSection {
    fn default() -> Self {
        let d = SvmParams::default();
        SvmSection {
            lambda: d.lambda,
            epochs: d.epochs,
            normalize_inputs: d.normalize_inputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub propagation: PropagationConfig,
    pub reduction: Reduction,
    pub svm: SvmSection,
    /// Number of tags per generated description.
    pub kappa: usize,
    pub stoplist: Option<PathBuf>,
    /// Minimum document frequency for a tag to enter the vocabulary.
    pub min_df: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            propagation: PropagationConfig::default(),
            reduction: Reduction::default(),
            svm: SvmSection::default(),
            kappa: 10,
            stoplist: None,
            min_df: 1,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Relative stoplist paths are resolved against the config file.
        if let (Some(stop), Some(dir)) = (&config.stoplist, path.parent()) {
            if stop.is_relative() {
                config.stoplist = Some(dir.join(stop));
            }
        }
        Ok(config)
    }

    pub fn svm_params(&self) -> SvmParams {
        SvmParams {
            lambda: self.svm.lambda,
            epochs: self.svm.epochs,
            seed: self.seed,
            normalize_inputs: self.svm.normalize_inputs,
        }
    }

    /// Reject values that would fail module preconditions later.
    pub fn validate(&self) -> Result<()> {
        self.propagation.validate()?;
        self.svm_params().validate()?;
        if self.kappa == 0 {
            bail!("kappa must be positive");
        }
        if self.reduction.size == 0 {
            bail!("reduction size must be positive");
        }
        if self.min_df == 0 {
            bail!("min_df must be positive");
        }
        Ok(())
    }
}
