//! Run configuration: a TOML file mirrored one-to-one by CLI flags.
//!
//! Unknown keys are rejected everywhere. A persisted config plus a split
//! manifest re-executes the identical pipeline (bitwise on the toy
//! backend).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{self, presets, DatasetFormat, PartitionPolicy, UtteranceRecord};
use crate::encoder::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::experiments::{BackendChoice, ExperimentFamily, ExperimentPlan};
use crate::pairs::NegativeSampling;
use crate::predict::Regime;

/// Root directory for run outputs (relative `output.dir` values land here).
pub const OUTPUT_ROOT_ENV: &str = "NLI_FSL_OUTPUT_ROOT";
/// Model-cache directory for transformer checkpoints and the driver script.
pub const MODEL_CACHE_ENV: &str = "NLI_FSL_MODEL_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub pairs: PairsSection,
    pub output: OutputSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Dataset id; known presets fix the partition protocol and epochs.
    pub id: String,
    /// Path to a JSONL file or a train/test directory (not used by the
    /// synthetic preset).
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: DatasetFormat,
    /// Optional JSON file mapping raw label names to surface forms.
    #[serde(default)]
    pub label_overrides: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_labels: usize,
    pub per_label: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum PartitionPolicyKind {
    Preset,
    Fixed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    #[serde(default = "default_policy")]
    pub policy: PartitionPolicyKind,
    /// Novel raw names for the fixed policy.
    #[serde(default)]
    pub novel: Vec<String>,
    /// Novel count for the random policy.
    #[serde(default)]
    pub novel_count: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// 0 means "use the preset default".
    #[serde(default)]
    pub min_class_size: usize,
}

fn default_policy() -> PartitionPolicyKind {
    PartitionPolicyKind::Preset
}

impl Default for PartitionSection {
    fn default() -> Self {
        PartitionSection {
            policy: PartitionPolicyKind::Preset,
            novel: Vec::new(),
            novel_count: None,
            seed: 0,
            min_class_size: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_shots() -> usize {
    5
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { shots: default_shots(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_regime")]
    pub regime: Regime,
    #[serde(default)]
    pub seed: u64,
}

fn default_method() -> String {
    "nli-fsl".into()
}

fn default_regime() -> Regime {
    Regime::Fsid
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { method: default_method(), regime: default_regime(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum BackendKind {
    Toy,
    Transformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    /// Toy-backend embedding dimension.
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_backend() -> BackendKind {
    BackendKind::Toy
}

fn default_model_id() -> String {
    "bert-base-uncased".into()
}

fn default_dim() -> usize {
    64
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            backend: default_backend(),
            model_id: default_model_id(),
            dim: default_dim(),
        }
    }
}

/// All optional: unset fields fall back to the backend's defaults (toy
/// defaults, or the full-scale configuration with per-dataset epochs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub warmup_steps: Option<usize>,
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairsSection {
    #[serde(default = "default_ratio")]
    pub downsample_ratio: f64,
    #[serde(default)]
    pub sampling: NegativeSampling,
}

fn default_ratio() -> f64 {
    2.0
}

impl Default for PairsSection {
    fn default() -> Self {
        PairsSection { downsample_ratio: default_ratio(), sampling: NegativeSampling::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub family: Option<ExperimentFamily>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub shots_grid: Vec<usize>,
    #[serde(default)]
    pub novel_grid: Vec<usize>,
    #[serde(default = "default_seen_per_novel")]
    pub seen_per_novel: f64,
    #[serde(default = "default_fractions")]
    pub n_fractions: usize,
}

fn default_methods() -> Vec<String> {
    vec!["nli-fsl".into()]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_seen_per_novel() -> f64 {
    2.0
}

fn default_fractions() -> usize {
    5
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            family: None,
            methods: default_methods(),
            seeds: default_seeds(),
            shots_grid: Vec::new(),
            novel_grid: Vec::new(),
            seen_per_novel: default_seen_per_novel(),
            n_fractions: default_fractions(),
        }
    }
}

/// CLI flag values that shadow config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset_path: Option<PathBuf>,
    pub shots: Option<usize>,
    pub split_seed: Option<u64>,
    pub partition_seed: Option<u64>,
    pub min_class_size: Option<usize>,
    pub method: Option<String>,
    pub regime: Option<String>,
    pub run_seed: Option<u64>,
    pub backend: Option<String>,
    pub model_id: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub downsample_ratio: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if let Some(p) = &o.dataset_path {
            self.dataset.path = Some(p.clone());
        }
        if let Some(k) = o.shots {
            self.split.shots = k;
        }
        if let Some(s) = o.split_seed {
            self.split.seed = s;
        }
        if let Some(s) = o.partition_seed {
            self.partition.seed = s;
        }
        if let Some(m) = o.min_class_size {
            self.partition.min_class_size = m;
        }
        if let Some(m) = &o.method {
            self.run.method = m.clone();
        }
        if let Some(r) = &o.regime {
            self.run.regime = Regime::parse(r)?;
        }
        if let Some(s) = o.run_seed {
            self.run.seed = s;
        }
        if let Some(b) = &o.backend {
            self.encoder.backend = match b.to_lowercase().as_str() {
                "toy" => BackendKind::Toy,
                "transformer" => BackendKind::Transformer,
                other => {
                    return Err(Error::Config(format!(
                        "unknown backend '{other}' (expected toy|transformer)"
                    )))
                }
            };
        }
        if let Some(m) = &o.model_id {
            self.encoder.model_id = m.clone();
        }
        if let Some(e) = o.epochs {
            self.train.epochs = Some(e);
        }
        if let Some(b) = o.batch_size {
            self.train.batch_size = Some(b);
        }
        if let Some(lr) = o.learning_rate {
            self.train.learning_rate = Some(lr);
        }
        if let Some(w) = o.warmup_steps {
            self.train.warmup_steps = Some(w);
        }
        if let Some(r) = o.downsample_ratio {
            self.pairs.downsample_ratio = r;
        }
        if let Some(d) = &o.out_dir {
            self.output.dir = d.clone();
        }
        if let Some(s) = &o.seeds {
            self.experiment.seeds = s.clone();
        }
        Ok(())
    }

    /// Load or generate the corpus this config points at.
    pub fn load_corpus(&self) -> Result<Vec<UtteranceRecord>> {
        if self.dataset.id.eq_ignore_ascii_case("synthetic") {
            let syn = self.dataset.synthetic.clone().unwrap_or(SyntheticSection {
                n_labels: 6,
                per_label: 24,
                seed: 1,
            });
            return corpus::generate_synthetic_corpus(
                syn.n_labels,
                syn.per_label,
                &corpus::TemplateBank::builtin(),
                syn.seed,
            );
        }
        let path = self.dataset.path.as_ref().ok_or_else(|| {
            Error::Config(format!("dataset '{}' needs a path", self.dataset.id))
        })?;
        let overrides = match &self.dataset.label_overrides {
            Some(p) => corpus::load_surface_overrides(p)?,
            None => BTreeMap::new(),
        };
        corpus::load_dataset(path, self.dataset.format, &overrides)
    }

    /// Resolve the partition policy, honoring presets.
    pub fn partition_policy(&self) -> Result<PartitionPolicy> {
        match self.partition.policy {
            PartitionPolicyKind::Fixed => {
                if self.partition.novel.is_empty() {
                    return Err(Error::Config(
                        "fixed partition policy needs a non-empty novel list".into(),
                    ));
                }
                Ok(PartitionPolicy::FixedList(self.partition.novel.clone()))
            }
            PartitionPolicyKind::Random => {
                let n = self.partition.novel_count.ok_or_else(|| {
                    Error::Config("random partition policy needs novel_count".into())
                })?;
                Ok(PartitionPolicy::RandomCount(n))
            }
            PartitionPolicyKind::Preset => presets::preset(&self.dataset.id)
                .map(|p| p.policy)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "no partition preset for dataset '{}'; set [partition] policy explicitly",
                        self.dataset.id
                    ))
                }),
        }
    }

    /// min_class_size, falling back to the preset default (ATIS: 10).
    pub fn min_class_size(&self) -> usize {
        if self.partition.min_class_size > 0 {
            return self.partition.min_class_size;
        }
        presets::preset(&self.dataset.id).map(|p| p.min_class_size).unwrap_or(1)
    }

    /// Full training config with backend-appropriate defaults underneath
    /// any explicitly set keys.
    pub fn train_config(&self) -> TrainConfig {
        let mut base = match self.encoder.backend {
            BackendKind::Toy => TrainConfig::toy_default(),
            BackendKind::Transformer => TrainConfig::full_scale_default(&self.dataset.id),
        };
        if let Some(e) = self.train.epochs {
            base.epochs = e;
        }
        if let Some(b) = self.train.batch_size {
            base.batch_size = b;
        }
        if let Some(lr) = self.train.learning_rate {
            base.learning_rate = lr;
        }
        if let Some(w) = self.train.warmup_steps {
            base.warmup_steps = w;
        }
        if let Some(m) = self.train.max_len {
            base.max_len = m;
        }
        if let Some(w) = self.train.weight_decay {
            base.weight_decay = w;
        }
        base
    }

    pub fn backend_choice(&self, model_cache: &Path) -> BackendChoice {
        match self.encoder.backend {
            BackendKind::Toy => BackendChoice::Toy { dim: self.encoder.dim },
            BackendKind::Transformer => BackendChoice::Transformer {
                model_id: self.encoder.model_id.clone(),
                cache_dir: model_cache.to_path_buf(),
            },
        }
    }

    /// The grid for `experiment`, with the family from config or the CLI.
    pub fn experiment_plan(&self, family_flag: Option<&str>) -> Result<ExperimentPlan> {
        let family = match family_flag {
            Some(f) => ExperimentFamily::parse(f)?,
            None => self.experiment.family.ok_or_else(|| {
                Error::Config("no experiment family set (config key or --family flag)".into())
            })?,
        };
        Ok(ExperimentPlan {
            family,
            methods: self.experiment.methods.clone(),
            seeds: self.experiment.seeds.clone(),
            shots_grid: self.experiment.shots_grid.clone(),
            novel_grid: self.experiment.novel_grid.clone(),
            seen_per_novel: self.experiment.seen_per_novel,
            n_fractions: self.experiment.n_fractions,
        })
    }
}

/// Resolve the run's output directory and model cache, honoring the
/// environment variables and their flag overrides.
pub fn resolve_workspace(
    config: &RunConfig,
    output_root_flag: Option<&Path>,
    model_cache_flag: Option<&Path>,
) -> (PathBuf, PathBuf) {
    let output_root = output_root_flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from));
    let output_dir = match (&output_root, config.output.dir.is_relative()) {
        (Some(root), true) => root.join(&config.output.dir),
        _ => config.output.dir.clone(),
    };
    let model_cache = model_cache_flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(MODEL_CACHE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| output_dir.join("model-cache"));
    (output_dir, model_cache)
}
