//! Run configuration. Every level rejects unknown keys.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use latentbench::bench::{ExtractionStrategy, LabelMode};
use latentbench::diffusion::{SamplerConfig, ToyBundleConfig};
use latentbench::eval::GenerationSpec;
use latentbench::finetune::FinetuneConfig;
use latentbench::projection::ProjectionTrainConfig;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    ReconEval,
    TextBench,
    TrainProjection,
    TrainTi,
    TrainUnet,
    Generate,
    ClassifyEval,
    FidGrid,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::ReconEval => "recon-eval",
            Command::TextBench => "text-bench",
            Command::TrainProjection => "train-projection",
            Command::TrainTi => "train-ti",
            Command::TrainUnet => "train-unet",
            Command::Generate => "generate",
            Command::ClassifyEval => "classify-eval",
            Command::FidGrid => "fid-grid",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Optional; must match the command given on the command line.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the config file.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "empty_object")]
    pub params: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn params<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        serde_json::from_value(self.params.clone()).map_err(|e| CliError::Config(format!("params: {e}")))
    }
}

/// Where a diffusion bundle comes from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BundleSpec {
    /// Build the toy bundle. Its seed is taken from the run seed.
    Toy(ToyBundleConfig),
    /// A saved bundle manifest, or a directory holding `bundle.json`.
    Path(PathBuf),
}

impl Default for BundleSpec {
    fn default() -> Self {
        BundleSpec::Toy(ToyBundleConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default = "five")]
    pub negatives: usize,
    #[serde(default = "five")]
    pub positives: usize,
}

fn default_base_seed() -> u64 {
    7
}

fn five() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestData {
    pub negatives: PathBuf,
    pub positives: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticData),
    Manifests(ManifestData),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticData { base_seed: default_base_seed(), negatives: 5, positives: 5 })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneData {
    pub source: DataSource,
    /// Overrides the caption of the normal images.
    pub negative_caption: Option<String>,
    /// Overrides the caption of the abnormal images.
    pub positive_caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    64
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        ExtractorSpec { seed: 0, dim: default_dim() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconEvalParams {
    pub originals: PathBuf,
    pub reconstructions: PathBuf,
    #[serde(default = "default_fid_batch")]
    pub fid_batch_size: usize,
    #[serde(default)]
    pub extractor: ExtractorSpec,
    /// `"toy"` for the bundled classifier, otherwise a classifier JSON path.
    #[serde(default)]
    pub classifiers: Vec<String>,
}

fn default_fid_batch() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    /// Encoder-output index file.
    pub index: PathBuf,
    pub strategies: Vec<ExtractionStrategy>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextBenchParams {
    pub reports: PathBuf,
    #[serde(default)]
    pub encoders: Vec<EncoderSpec>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub label_mode: LabelMode,
    #[serde(default = "yes")]
    pub bag_of_words: bool,
}

fn default_k() -> usize {
    10
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainProjectionParams {
    pub source: PathBuf,
    pub target: PathBuf,
    #[serde(default)]
    pub train: ProjectionTrainConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainTiParams {
    #[serde(default)]
    pub bundle: BundleSpec,
    #[serde(default)]
    pub data: FinetuneData,
    pub token: String,
    #[serde(default)]
    pub init_from: Option<String>,
    #[serde(default)]
    pub finetune: FinetuneConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainUnetParams {
    #[serde(default)]
    pub bundle: BundleSpec,
    #[serde(default)]
    pub data: FinetuneData,
    #[serde(default)]
    pub finetune: FinetuneConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateParams {
    #[serde(default)]
    pub bundle: BundleSpec,
    #[serde(default)]
    pub spec: GenerationSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyEvalParams {
    /// Generated images whose sidecars carry expected labels.
    pub images: PathBuf,
    #[serde(default = "toy")]
    pub classifier: String,
    #[serde(default = "default_method")]
    pub method: String,
}

fn toy() -> String {
    "toy".to_string()
}

fn default_method() -> String {
    "generated".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub name: String,
    pub bundle: BundleSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidGridParams {
    pub sources: Vec<SourceSpec>,
    pub prompts: Vec<String>,
    /// One reference image set per prompt.
    pub references: Vec<PathBuf>,
    #[serde(default = "default_fid_batch")]
    pub per_prompt_count: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub extractor: ExtractorSpec,
}
