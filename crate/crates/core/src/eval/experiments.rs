//! The shared method pipeline and the experiment families.
//!
//! A family expands into a grid of runs. Grid points are independent; a
//! failed point is recorded in its row and the sweep continues. Partitions
//! are built once per family (over the min-class-size-filtered inventory),
//! so every grid point of a sweep shares the same label split, and the
//! support-sampling scheme makes support sets nested across shot counts.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{compute_f1, EvalReport};
use crate::baselines::{
    self, PythonEmbedder, SentenceEmbedder, ToyBagEmbedder,
};
use crate::corpus::{
    build_splits, filter_min_class_size, make_partition, shuffled_labels, IntentLabel,
    LabelSpacePartition, PartitionPolicy, SplitBundle, SplitManifest, UtteranceRecord,
};
use crate::encoder::{PairScorer, ToyPairScorer, TrainConfig, TrainLog, TransformerPairScorer};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::pairs::{
    build_finetune_set, downsample_negatives_with, to_pairs, NegativeSampling, PairDataset,
};
use crate::predict::{predict_regime, regime_label_space, regime_query, Prediction, Regime};

pub const METHOD_NLI_FSL: &str = "nli-fsl";
pub const METHOD_PROTOBERT: &str = "protobert";
pub const METHOD_ZS_DDN: &str = "zs-ddn";

/// Which scorer implementation a run uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendChoice {
    Toy { dim: usize },
    Transformer { model_id: String, cache_dir: PathBuf },
}

/// Everything a run needs besides the grid coordinates.
pub struct PipelineEnv<'a> {
    pub corpus: &'a [UtteranceRecord],
    pub dataset_id: String,
    pub backend: BackendChoice,
    pub train: TrainConfig,
    pub downsample_ratio: f64,
    pub sampling: NegativeSampling,
    pub min_class_size: usize,
    pub partition_policy: PartitionPolicy,
    pub partition_seed: u64,
}

/// Stage seeds derived from one run seed, so a persisted run seed is enough
/// to reproduce the whole pipeline.
#[derive(Debug, Clone, Copy)]
pub struct RunSeeds {
    pub split: u64,
    pub downsample: u64,
    pub shuffle: u64,
    pub train: u64,
    pub classifier: u64,
}

impl RunSeeds {
    pub fn from_run_seed(seed: u64) -> Self {
        RunSeeds {
            split: seed,
            downsample: derive_seed(seed, "downsample"),
            shuffle: derive_seed(seed, "shuffle"),
            train: derive_seed(seed, "train"),
            classifier: derive_seed(seed, "classifier"),
        }
    }
}

pub fn make_scorer(backend: &BackendChoice) -> Box<dyn PairScorer> {
    match backend {
        BackendChoice::Toy { dim } => Box::new(ToyPairScorer::new(*dim)),
        BackendChoice::Transformer { model_id, cache_dir } => {
            Box::new(TransformerPairScorer::new(model_id, cache_dir))
        }
    }
}

/// Entailment fine-tuning set for a bundle/regime: downsampled seen pairs
/// plus (outside zero-shot) support pairs over the regime's inference space.
pub fn build_training_pairs(
    bundle: &SplitBundle,
    regime: Regime,
    ratio: f64,
    sampling: NegativeSampling,
    seeds: &RunSeeds,
) -> Result<PairDataset> {
    let seen = to_pairs(&bundle.seen_train, &bundle.partition.seen)?;
    let seen = downsample_negatives_with(&seen, ratio, seeds.downsample, sampling)?;
    let support = if regime.is_zero_shot() {
        None
    } else {
        let space = regime_label_space(bundle, regime);
        Some(to_pairs(&bundle.support, &space)?)
    };
    Ok(build_finetune_set(&seen, support.as_ref(), seeds.shuffle))
}

/// Fit a fresh scorer for one run.
pub fn fit_scorer_for_run(
    env: &PipelineEnv,
    bundle: &SplitBundle,
    regime: Regime,
    run_seed: u64,
) -> Result<(Box<dyn PairScorer>, TrainLog)> {
    let seeds = RunSeeds::from_run_seed(run_seed);
    let train_set = build_training_pairs(bundle, regime, env.downsample_ratio, env.sampling, &seeds)?;
    let mut scorer = make_scorer(&env.backend);
    let mut config = env.train.clone();
    config.seed = seeds.train;
    let log = scorer.fit(&train_set, &config)?;
    Ok((scorer, log))
}

fn finetuned_embedder(
    env: &PipelineEnv,
    bundle: &SplitBundle,
    run_seed: u64,
) -> Result<Box<dyn SentenceEmbedder>> {
    let seeds = RunSeeds::from_run_seed(run_seed);
    match &env.backend {
        BackendChoice::Toy { dim } => {
            let mut config = env.train.clone();
            config.seed = seeds.classifier;
            Ok(Box::new(baselines::fit_toy_classifier(&bundle.seen_train, *dim, &config)?))
        }
        BackendChoice::Transformer { model_id, cache_dir } => {
            let mut config = env.train.clone();
            config.seed = seeds.classifier;
            Ok(Box::new(baselines::fit_transformer_classifier(
                &bundle.seen_train,
                model_id,
                &config,
                cache_dir,
            )?))
        }
    }
}

fn distance_embedder(env: &PipelineEnv) -> Box<dyn SentenceEmbedder> {
    match &env.backend {
        BackendChoice::Toy { dim } => Box::new(ToyBagEmbedder { dim: *dim }),
        BackendChoice::Transformer { model_id, cache_dir } => Box::new(PythonEmbedder {
            model_id: model_id.clone(),
            cache_dir: cache_dir.clone(),
            dimension_hint: 768,
        }),
    }
}

/// One method's predictions on a bundle/regime.
pub struct MethodOutcome {
    pub predictions: Vec<Prediction>,
    pub train_log: Option<TrainLog>,
}

pub fn run_method(
    env: &PipelineEnv,
    bundle: &SplitBundle,
    regime: Regime,
    method: &str,
    run_seed: u64,
) -> Result<MethodOutcome> {
    match method {
        METHOD_NLI_FSL => {
            let (scorer, log) = fit_scorer_for_run(env, bundle, regime, run_seed)?;
            let predictions = predict_regime(scorer.as_ref(), bundle, regime)?;
            Ok(MethodOutcome { predictions, train_log: Some(log) })
        }
        METHOD_PROTOBERT => {
            let embedder = finetuned_embedder(env, bundle, run_seed)?;
            let prototypes = baselines::proto_fit(
                embedder.as_ref(),
                &bundle.seen_train,
                &bundle.support,
                &bundle.partition,
                regime,
            )?;
            let query = regime_query(bundle, regime);
            let predictions =
                baselines::proto_predict(&prototypes, &query, embedder.as_ref())?;
            Ok(MethodOutcome { predictions, train_log: None })
        }
        METHOD_ZS_DDN => {
            let embedder = distance_embedder(env);
            let space = regime_label_space(bundle, regime);
            let query = regime_query(bundle, regime);
            let predictions = baselines::zsddn_predict(embedder.as_ref(), &query, &space)?;
            Ok(MethodOutcome { predictions, train_log: None })
        }
        other => Err(Error::Config(format!(
            "unknown method '{other}' (expected {METHOD_NLI_FSL}|{METHOD_PROTOBERT}|{METHOD_ZS_DDN})"
        ))),
    }
}

/// Serializable run-configuration record embedded in every report.
pub fn config_snapshot(
    env: &PipelineEnv,
    regime: Regime,
    method: &str,
    shots: usize,
    run_seed: u64,
    min_class_size: usize,
) -> serde_json::Value {
    serde_json::json!({
        "dataset_id": env.dataset_id,
        "method": method,
        "regime": regime,
        "shots": shots,
        "run_seed": run_seed,
        "backend": env.backend,
        "train": if method == METHOD_ZS_DDN {
            serde_json::Value::String("none".into())
        } else {
            serde_json::to_value(&env.train).unwrap()
        },
        "downsample_ratio": env.downsample_ratio,
        "sampling": env.sampling,
        "min_class_size": min_class_size,
    })
}

/// Experiment families mirroring the published table and figure protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentFamily {
    Main,
    Zeroshot,
    IncrementalLabels,
    IncrementalData,
    ShotsSweep,
}

impl ExperimentFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_lowercase().replace('-', "_").as_str() {
            "main" => Ok(ExperimentFamily::Main),
            "zeroshot" | "zero_shot" => Ok(ExperimentFamily::Zeroshot),
            "incremental_labels" => Ok(ExperimentFamily::IncrementalLabels),
            "incremental_data" => Ok(ExperimentFamily::IncrementalData),
            "shots_sweep" => Ok(ExperimentFamily::ShotsSweep),
            other => Err(Error::Config(format!(
                "unknown experiment family '{other}' \
                 (expected main|zeroshot|incremental_labels|incremental_data|shots_sweep)"
            ))),
        }
    }
}

impl std::fmt::Display for ExperimentFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentFamily::Main => "main",
            ExperimentFamily::Zeroshot => "zeroshot",
            ExperimentFamily::IncrementalLabels => "incremental_labels",
            ExperimentFamily::IncrementalData => "incremental_data",
            ExperimentFamily::ShotsSweep => "shots_sweep",
        };
        write!(f, "{s}")
    }
}

/// The run grid for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub family: ExperimentFamily,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    /// Shot counts: {1,5} for main, a single K for incremental labels,
    /// {1,5,10,20}-subset for the shots sweep, {1,5} for incremental data.
    pub shots_grid: Vec<usize>,
    /// Novel-class counts for incremental labels, ascending.
    pub novel_grid: Vec<usize>,
    /// Seen classes kept per novel class in incremental labels.
    pub seen_per_novel: f64,
    /// Number of equal seen-data parts for incremental data.
    pub n_fractions: usize,
}

impl ExperimentPlan {
    fn validate_common(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Validation("experiment plan has no methods".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("experiment plan has no seeds".into()));
        }
        let mut distinct: BTreeSet<&usize> = BTreeSet::new();
        for k in &self.shots_grid {
            if !distinct.insert(k) {
                return Err(Error::Validation(format!("duplicate grid entry K={k}")));
            }
        }
        let mut seen_seeds: BTreeSet<&u64> = BTreeSet::new();
        for s in &self.seeds {
            if !seen_seeds.insert(s) {
                return Err(Error::Validation(format!("duplicate seed {s}")));
            }
        }
        Ok(())
    }

    fn require_methods(&self, allowed: &[&str]) -> Result<()> {
        for m in &self.methods {
            if !allowed.contains(&m.as_str()) {
                return Err(Error::Validation(format!(
                    "method '{m}' is not valid for the {} family (allowed: {})",
                    self.family,
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// One grid point's flat result row (CSV-friendly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: String,
    pub dataset: String,
    pub method: String,
    pub regime: Regime,
    pub shots: usize,
    pub novel_count: Option<usize>,
    pub fraction_pct: Option<u32>,
    pub seed: u64,
    pub f1_macro: Option<f64>,
    pub f1_micro: Option<f64>,
    pub n_query: Option<usize>,
    pub error: Option<String>,
}

/// A grid point's full output.
pub struct RunArtifact {
    pub row: SweepRow,
    pub report: Option<EvalReport>,
    pub predictions: Vec<Prediction>,
    pub manifest: Option<SplitManifest>,
}

/// A completed sweep (possibly with recorded per-point failures).
pub struct SweepOutcome {
    pub runs: Vec<RunArtifact>,
    pub failures: usize,
}

impl SweepOutcome {
    /// Raise the partial-failure policy's terminal error if any point failed.
    pub fn into_result(self) -> Result<SweepOutcome> {
        if self.failures > 0 {
            let total = self.runs.len();
            let first = self
                .runs
                .iter()
                .find_map(|r| r.row.error.clone())
                .unwrap_or_else(|| "unknown".into());
            return Err(Error::GridFailures {
                failed: self.failures,
                total,
                first: Box::new(Error::Validation(first)),
            });
        }
        Ok(self)
    }
}

struct PointTag {
    novel_count: Option<usize>,
    fraction_pct: Option<u32>,
}

#[allow(clippy::too_many_arguments)]
fn run_point(
    env: &PipelineEnv,
    family: ExperimentFamily,
    records: &[UtteranceRecord],
    bundle: &SplitBundle,
    regime: Regime,
    method: &str,
    run_seed: u64,
    min_class_size: usize,
    tag: PointTag,
) -> RunArtifact {
    let mut row = SweepRow {
        family: family.to_string(),
        dataset: env.dataset_id.clone(),
        method: method.to_string(),
        regime,
        shots: bundle.shots,
        novel_count: tag.novel_count,
        fraction_pct: tag.fraction_pct,
        seed: run_seed,
        f1_macro: None,
        f1_micro: None,
        n_query: None,
        error: None,
    };
    let manifest =
        SplitManifest::from_bundle(&env.dataset_id, records, bundle, run_seed, min_class_size);
    let manifest_digest = manifest.digest();

    let outcome = run_method(env, bundle, regime, method, run_seed).and_then(|outcome| {
        let space = regime_label_space(bundle, regime);
        let scores = compute_f1(&outcome.predictions, &space)?;
        Ok((outcome, scores))
    });
    match outcome {
        Ok((outcome, scores)) => {
            row.f1_macro = Some(scores.f1_macro);
            row.f1_micro = Some(scores.f1_micro);
            row.n_query = Some(scores.n_query);
            let report = EvalReport::new(
                &env.dataset_id,
                method,
                regime,
                bundle.shots,
                scores,
                &manifest_digest,
                config_snapshot(env, regime, method, bundle.shots, run_seed, min_class_size),
            );
            RunArtifact {
                row,
                report: Some(report),
                predictions: outcome.predictions,
                manifest: Some(manifest),
            }
        }
        Err(e) => {
            row.error = Some(e.to_string());
            RunArtifact { row, report: None, predictions: Vec::new(), manifest: Some(manifest) }
        }
    }
}

fn family_filter(
    env: &PipelineEnv,
    max_shots: usize,
) -> (Vec<UtteranceRecord>, BTreeSet<IntentLabel>, usize) {
    let threshold = env.min_class_size.max(max_shots);
    let (records, labels) = filter_min_class_size(env.corpus, threshold);
    (records, labels, threshold)
}

/// Table-style main experiments: FSID and GFSID at each K in the grid.
pub fn run_main(env: &PipelineEnv, plan: &ExperimentPlan) -> Result<SweepOutcome> {
    plan.validate_common()?;
    plan.require_methods(&[METHOD_NLI_FSL, METHOD_PROTOBERT])?;
    let shots_grid = if plan.shots_grid.is_empty() { vec![1, 5] } else { plan.shots_grid.clone() };
    if shots_grid.contains(&0) {
        return Err(Error::Validation("main experiments need K >= 1".into()));
    }

    let max_shots = *shots_grid.iter().max().unwrap();
    let (records, labels, threshold) = family_filter(env, max_shots);
    let partition = make_partition(&labels, &env.partition_policy, env.partition_seed)?;

    let mut runs = Vec::new();
    let mut failures = 0;
    for &shots in &shots_grid {
        for &seed in &plan.seeds {
            let bundle = build_splits(&records, &partition, shots, seed, threshold)?;
            for regime in [Regime::Fsid, Regime::Gfsid] {
                for method in &plan.methods {
                    let artifact = run_point(
                        env,
                        plan.family,
                        &records,
                        &bundle,
                        regime,
                        method,
                        seed,
                        threshold,
                        PointTag { novel_count: None, fraction_pct: None },
                    );
                    failures += usize::from(artifact.row.error.is_some());
                    runs.push(artifact);
                }
            }
        }
    }
    Ok(SweepOutcome { runs, failures })
}

/// Zero-shot experiments: one seen-only fine-tune per seed, evaluated on
/// both ZSID and GZSID from the same scorer.
pub fn run_zeroshot(env: &PipelineEnv, plan: &ExperimentPlan) -> Result<SweepOutcome> {
    plan.validate_common()?;
    plan.require_methods(&[METHOD_NLI_FSL, METHOD_ZS_DDN])?;
    if plan.shots_grid.iter().any(|&k| k > 0) {
        return Err(Error::Validation("zero-shot plans must not request K > 0".into()));
    }

    let (records, labels, threshold) = family_filter(env, 0);
    let partition = make_partition(&labels, &env.partition_policy, env.partition_seed)?;

    let mut runs = Vec::new();
    let mut failures = 0;
    for &seed in &plan.seeds {
        let bundle = build_splits(&records, &partition, 0, seed, threshold)?;
        for method in &plan.methods {
            if method == METHOD_NLI_FSL {
                // one fine-tune, two regimes
                match fit_scorer_for_run(env, &bundle, Regime::Zsid, seed) {
                    Ok((scorer, _log)) => {
                        for regime in [Regime::Zsid, Regime::Gzsid] {
                            let manifest = SplitManifest::from_bundle(
                                &env.dataset_id,
                                &records,
                                &bundle,
                                seed,
                                threshold,
                            );
                            let digest = manifest.digest();
                            let mut row = SweepRow {
                                family: plan.family.to_string(),
                                dataset: env.dataset_id.clone(),
                                method: method.clone(),
                                regime,
                                shots: 0,
                                novel_count: None,
                                fraction_pct: None,
                                seed,
                                f1_macro: None,
                                f1_micro: None,
                                n_query: None,
                                error: None,
                            };
                            let result = predict_regime(scorer.as_ref(), &bundle, regime)
                                .and_then(|preds| {
                                    let space = regime_label_space(&bundle, regime);
                                    compute_f1(&preds, &space).map(|s| (preds, s))
                                });
                            match result {
                                Ok((preds, scores)) => {
                                    row.f1_macro = Some(scores.f1_macro);
                                    row.f1_micro = Some(scores.f1_micro);
                                    row.n_query = Some(scores.n_query);
                                    let report = EvalReport::new(
                                        &env.dataset_id,
                                        method,
                                        regime,
                                        0,
                                        scores,
                                        &digest,
                                        config_snapshot(env, regime, method, 0, seed, threshold),
                                    );
                                    runs.push(RunArtifact {
                                        row,
                                        report: Some(report),
                                        predictions: preds,
                                        manifest: Some(manifest),
                                    });
                                }
                                Err(e) => {
                                    failures += 1;
                                    row.error = Some(e.to_string());
                                    runs.push(RunArtifact {
                                        row,
                                        report: None,
                                        predictions: Vec::new(),
                                        manifest: Some(manifest),
                                    });
                                }
                            }
                        }
                    }
                    Err(e) => {
                        // record the training failure once per regime
                        for regime in [Regime::Zsid, Regime::Gzsid] {
                            failures += 1;
                            runs.push(RunArtifact {
                                row: SweepRow {
                                    family: plan.family.to_string(),
                                    dataset: env.dataset_id.clone(),
                                    method: method.clone(),
                                    regime,
                                    shots: 0,
                                    novel_count: None,
                                    fraction_pct: None,
                                    seed,
                                    f1_macro: None,
                                    f1_micro: None,
                                    n_query: None,
                                    error: Some(e.to_string()),
                                },
                                report: None,
                                predictions: Vec::new(),
                                manifest: None,
                            });
                        }
                    }
                }
            } else {
                for regime in [Regime::Zsid, Regime::Gzsid] {
                    let artifact = run_point(
                        env,
                        plan.family,
                        &records,
                        &bundle,
                        regime,
                        method,
                        seed,
                        threshold,
                        PointTag { novel_count: None, fraction_pct: None },
                    );
                    failures += usize::from(artifact.row.error.is_some());
                    runs.push(artifact);
                }
            }
        }
    }
    Ok(SweepOutcome { runs, failures })
}

/// Nested label partitions for the incremental-label-space protocol: one
/// seeded shuffle fixes the novel and seen pools, and each grid point takes
/// prefixes, so every point's label sets contain the previous point's.
pub fn nested_partitions(
    inventory: &BTreeSet<IntentLabel>,
    novel_grid: &[usize],
    seen_per_novel: f64,
    seed: u64,
) -> Result<Vec<LabelSpacePartition>> {
    if novel_grid.is_empty() {
        return Err(Error::Validation("novel grid is empty".into()));
    }
    for w in novel_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Validation("novel grid must be strictly ascending".into()));
        }
    }
    if seen_per_novel.is_nan() || seen_per_novel <= 0.0 {
        return Err(Error::Validation("seen_per_novel must be positive".into()));
    }
    let max_novel = *novel_grid.last().unwrap();
    let max_seen = crate::pairs::round_half_away(max_novel as f64 * seen_per_novel);
    if max_novel + max_seen > inventory.len() {
        return Err(Error::Validation(format!(
            "grid needs {max_novel} novel + {max_seen} seen labels but the inventory has {}",
            inventory.len()
        )));
    }
    let order = shuffled_labels(inventory, seed);
    let novel_pool = &order[..max_novel];
    let seen_pool = &order[max_novel..];

    novel_grid
        .iter()
        .map(|&n| {
            let s = crate::pairs::round_half_away(n as f64 * seen_per_novel);
            let novel: BTreeSet<IntentLabel> = novel_pool[..n].iter().cloned().collect();
            let seen: BTreeSet<IntentLabel> = seen_pool[..s].iter().cloned().collect();
            LabelSpacePartition::new(seen, novel, seed)
        })
        .collect()
}

/// Incremental label space: FSID at one K across an ascending novel grid.
pub fn run_incremental_labels(env: &PipelineEnv, plan: &ExperimentPlan) -> Result<SweepOutcome> {
    plan.validate_common()?;
    plan.require_methods(&[METHOD_NLI_FSL, METHOD_PROTOBERT])?;
    let shots = match plan.shots_grid.as_slice() {
        [] => 5,
        [k] if *k >= 1 => *k,
        _ => {
            return Err(Error::Validation(
                "incremental_labels takes exactly one shot count".into(),
            ))
        }
    };

    let (records, labels, threshold) = family_filter(env, shots);
    let partitions =
        nested_partitions(&labels, &plan.novel_grid, plan.seen_per_novel, env.partition_seed)?;

    let mut runs = Vec::new();
    let mut failures = 0;
    for (gi, partition) in partitions.iter().enumerate() {
        let novel_count = plan.novel_grid[gi];
        for &seed in &plan.seeds {
            let bundle = build_splits(&records, partition, shots, seed, threshold)?;
            for method in &plan.methods {
                let artifact = run_point(
                    env,
                    plan.family,
                    &records,
                    &bundle,
                    Regime::Fsid,
                    method,
                    seed,
                    threshold,
                    PointTag { novel_count: Some(novel_count), fraction_pct: None },
                );
                failures += usize::from(artifact.row.error.is_some());
                runs.push(artifact);
            }
        }
    }
    Ok(SweepOutcome { runs, failures })
}

/// Class-balanced nested prefix of the seen-train records:
/// `fraction_idx / n_fractions` of every class, rounded half away.
pub fn seen_train_fraction(
    bundle: &SplitBundle,
    fraction_idx: usize,
    n_fractions: usize,
    seed: u64,
) -> Vec<UtteranceRecord> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let mut subset = Vec::new();
    for label in &bundle.partition.seen {
        let mut members: Vec<&UtteranceRecord> =
            bundle.seen_train.iter().filter(|r| r.label == *label).collect();
        members.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, &label.raw_name));
        members.shuffle(&mut rng);
        let want = crate::pairs::round_half_away(
            members.len() as f64 * fraction_idx as f64 / n_fractions as f64,
        )
        .min(members.len());
        subset.extend(members.into_iter().take(want).cloned());
    }
    subset
}

/// Incremental base-class data: fixed support and query, growing nested
/// seen-train fractions.
pub fn run_incremental_data(env: &PipelineEnv, plan: &ExperimentPlan) -> Result<SweepOutcome> {
    plan.validate_common()?;
    plan.require_methods(&[METHOD_NLI_FSL, METHOD_PROTOBERT])?;
    if plan.n_fractions < 1 {
        return Err(Error::Validation("n_fractions must be at least 1".into()));
    }
    let shots_grid = if plan.shots_grid.is_empty() { vec![1, 5] } else { plan.shots_grid.clone() };
    if shots_grid.contains(&0) {
        return Err(Error::Validation("incremental_data needs K >= 1".into()));
    }

    let max_shots = *shots_grid.iter().max().unwrap();
    let (records, labels, threshold) = family_filter(env, max_shots);
    let partition = make_partition(&labels, &env.partition_policy, env.partition_seed)?;

    let mut runs = Vec::new();
    let mut failures = 0;
    for &shots in &shots_grid {
        for &seed in &plan.seeds {
            let base = build_splits(&records, &partition, shots, seed, threshold)?;
            let fraction_seed = derive_seed(seed, "data-fraction");
            for f in 1..=plan.n_fractions {
                let mut bundle = base.clone();
                bundle.seen_train =
                    seen_train_fraction(&base, f, plan.n_fractions, fraction_seed);
                let pct = (100 * f / plan.n_fractions) as u32;
                for regime in [Regime::Fsid, Regime::Gfsid] {
                    for method in &plan.methods {
                        let artifact = run_point(
                            env,
                            plan.family,
                            &records,
                            &bundle,
                            regime,
                            method,
                            seed,
                            threshold,
                            PointTag { novel_count: None, fraction_pct: Some(pct) },
                        );
                        failures += usize::from(artifact.row.error.is_some());
                        runs.push(artifact);
                    }
                }
            }
        }
    }
    Ok(SweepOutcome { runs, failures })
}

/// Varying shots: FSID and GFSID at each K; supports nest across K.
pub fn run_shots_sweep(env: &PipelineEnv, plan: &ExperimentPlan) -> Result<SweepOutcome> {
    plan.validate_common()?;
    plan.require_methods(&[METHOD_NLI_FSL, METHOD_PROTOBERT])?;
    let shots_grid =
        if plan.shots_grid.is_empty() { vec![1, 5, 10, 20] } else { plan.shots_grid.clone() };
    for &k in &shots_grid {
        if ![1, 5, 10, 20].contains(&k) {
            return Err(Error::Validation(format!(
                "shots sweep grid must be a subset of {{1, 5, 10, 20}}, got {k}"
            )));
        }
    }

    let max_shots = *shots_grid.iter().max().unwrap();
    let (records, labels, threshold) = family_filter(env, max_shots);
    let partition = make_partition(&labels, &env.partition_policy, env.partition_seed)?;

    let mut runs = Vec::new();
    let mut failures = 0;
    for &shots in &shots_grid {
        for &seed in &plan.seeds {
            let bundle = build_splits(&records, &partition, shots, seed, threshold)?;
            for regime in [Regime::Fsid, Regime::Gfsid] {
                for method in &plan.methods {
                    let artifact = run_point(
                        env,
                        plan.family,
                        &records,
                        &bundle,
                        regime,
                        method,
                        seed,
                        threshold,
                        PointTag { novel_count: None, fraction_pct: None },
                    );
                    failures += usize::from(artifact.row.error.is_some());
                    runs.push(artifact);
                }
            }
        }
    }
    Ok(SweepOutcome { runs, failures })
}

/// Dispatch a plan to its family runner.
pub fn run_family(env: &PipelineEnv, plan: &ExperimentPlan) -> Result<SweepOutcome> {
    match plan.family {
        ExperimentFamily::Main => run_main(env, plan),
        ExperimentFamily::Zeroshot => run_zeroshot(env, plan),
        ExperimentFamily::IncrementalLabels => run_incremental_labels(env, plan),
        ExperimentFamily::IncrementalData => run_incremental_data(env, plan),
        ExperimentFamily::ShotsSweep => run_shots_sweep(env, plan),
    }
}

/// Seed-mean summary of sweep rows, keyed by every non-seed coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: String,
    pub regime: Regime,
    pub shots: usize,
    pub novel_count: Option<usize>,
    pub fraction_pct: Option<u32>,
    pub n_seeds: usize,
    pub f1_macro_mean: f64,
    pub f1_macro_std: f64,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    type Key = (String, String, String, usize, Option<usize>, Option<u32>);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(f1) = r.f1_macro {
            let key = (
                r.dataset.clone(),
                r.method.clone(),
                r.regime.to_string(),
                r.shots,
                r.novel_count,
                r.fraction_pct,
            );
            groups.entry(key).or_default().push(f1);
        }
    }
    groups
        .into_iter()
        .map(|((dataset, method, regime, shots, novel_count, fraction_pct), values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            SummaryRow {
                dataset,
                method,
                regime: Regime::parse(&regime).expect("round-trips"),
                shots,
                novel_count,
                fraction_pct,
                n_seeds: values.len(),
                f1_macro_mean: mean,
                f1_macro_std: var.sqrt(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, label_inventory, TemplateBank};

    fn toy_env(corpus: &[UtteranceRecord]) -> PipelineEnv<'_> {
        PipelineEnv {
            corpus,
            dataset_id: "synthetic".into(),
            backend: BackendChoice::Toy { dim: 64 },
            train: TrainConfig {
                epochs: 6,
                batch_size: 16,
                learning_rate: 0.2,
                warmup_steps: 10,
                max_len: 64,
                weight_decay: 0.0,
                seed: 0,
            },
            downsample_ratio: 2.0,
            sampling: NegativeSampling::Global,
            min_class_size: 1,
            partition_policy: PartitionPolicy::RandomCount(2),
            partition_seed: 4,
        }
    }

    fn plan(family: ExperimentFamily) -> ExperimentPlan {
        ExperimentPlan {
            family,
            methods: vec![METHOD_NLI_FSL.into()],
            seeds: vec![0],
            shots_grid: Vec::new(),
            novel_grid: Vec::new(),
            seen_per_novel: 2.0,
            n_fractions: 5,
        }
    }

    #[test]
    fn main_family_produces_the_expected_grid() {
        let corpus = generate_synthetic_corpus(6, 20, &TemplateBank::builtin(), 1).unwrap();
        let env = toy_env(&corpus);
        let mut p = plan(ExperimentFamily::Main);
        p.shots_grid = vec![1, 5];
        let outcome = run_main(&env, &p).unwrap();
        // 2 shots x 2 regimes x 1 method x 1 seed
        assert_eq!(outcome.runs.len(), 4);
        assert_eq!(outcome.failures, 0);
        for run in &outcome.runs {
            assert!(run.report.is_some());
            assert!(run.manifest.is_some());
            assert!(run.row.f1_macro.is_some());
        }
    }

    #[test]
    fn main_family_rejects_zero_shot_methods() {
        let corpus = generate_synthetic_corpus(4, 12, &TemplateBank::builtin(), 1).unwrap();
        let env = toy_env(&corpus);
        let mut p = plan(ExperimentFamily::Main);
        p.methods = vec![METHOD_ZS_DDN.into()];
        assert!(matches!(run_main(&env, &p), Err(Error::Validation(_))));
    }

    #[test]
    fn zeroshot_family_shares_one_scorer_across_regimes() {
        let corpus = generate_synthetic_corpus(6, 20, &TemplateBank::builtin(), 1).unwrap();
        let env = toy_env(&corpus);
        let mut p = plan(ExperimentFamily::Zeroshot);
        p.methods = vec![METHOD_NLI_FSL.into(), METHOD_ZS_DDN.into()];
        let outcome = run_zeroshot(&env, &p).unwrap();
        // 2 methods x 2 regimes x 1 seed
        assert_eq!(outcome.runs.len(), 4);
        assert_eq!(outcome.failures, 0);
        for run in &outcome.runs {
            assert_eq!(run.row.shots, 0);
            let report = run.report.as_ref().unwrap();
            if run.row.method == METHOD_ZS_DDN {
                assert_eq!(report.config_snapshot["train"], "none");
            } else {
                assert!(report.config_snapshot["train"].is_object());
            }
        }
    }

    #[test]
    fn zeroshot_family_rejects_positive_shot_grids() {
        let corpus = generate_synthetic_corpus(4, 12, &TemplateBank::builtin(), 1).unwrap();
        let env = toy_env(&corpus);
        let mut p = plan(ExperimentFamily::Zeroshot);
        p.shots_grid = vec![5];
        assert!(matches!(run_zeroshot(&env, &p), Err(Error::Validation(_))));
    }

    #[test]
    fn nested_partitions_have_prefix_structure() {
        let inventory: BTreeSet<IntentLabel> = (0..150)
            .map(|i| IntentLabel::new(&format!("class_{i:03}")).unwrap())
            .collect();
        let grid: Vec<usize> = (1..=10).map(|i| 5 * i).collect();
        let partitions = nested_partitions(&inventory, &grid, 2.0, 0).unwrap();
        assert_eq!(partitions.len(), 10);
        for (i, p) in partitions.iter().enumerate() {
            assert_eq!(p.novel.len(), 5 * (i + 1));
            assert_eq!(p.seen.len(), 10 * (i + 1));
            if i > 0 {
                assert!(partitions[i - 1].novel.is_subset(&p.novel));
                assert!(partitions[i - 1].seen.is_subset(&p.seen));
            }
        }
        // the cumulative demand may not exceed the inventory
        assert!(nested_partitions(&inventory, &[60], 2.0, 0).is_err());
        assert!(nested_partitions(&inventory, &[10, 5], 2.0, 0).is_err());
    }

    #[test]
    fn incremental_labels_family_runs_nested_grid() {
        let corpus = generate_synthetic_corpus(12, 20, &TemplateBank::builtin(), 1).unwrap();
        let env = toy_env(&corpus);
        let mut p = plan(ExperimentFamily::IncrementalLabels);
        p.shots_grid = vec![5];
        p.novel_grid = vec![2, 4];
        p.seen_per_novel = 2.0;
        let outcome = run_incremental_labels(&env, &p).unwrap();
        assert_eq!(outcome.runs.len(), 2);
        assert_eq!(outcome.failures, 0);
        let novel_sets: Vec<Vec<String>> = outcome
            .runs
            .iter()
            .map(|r| r.manifest.as_ref().unwrap().novel_labels.clone())
            .collect();
        let first: BTreeSet<&String> = novel_sets[0].iter().collect();
        let second: BTreeSet<&String> = novel_sets[1].iter().collect();
        assert_eq!(first.len(), 2);
        assert_eq!(second.len(), 4);
        assert!(first.is_subset(&second));
        for run in &outcome.runs {
            assert_eq!(run.row.regime, Regime::Fsid);
            assert!(run.row.novel_count.is_some());
        }
    }

    #[test]
    fn incremental_data_keeps_support_and_query_fixed() {
        let corpus = generate_synthetic_corpus(6, 20, &TemplateBank::builtin(), 1).unwrap();
        let env = toy_env(&corpus);
        let mut p = plan(ExperimentFamily::IncrementalData);
        p.shots_grid = vec![1];
        p.n_fractions = 5;
        let outcome = run_incremental_data(&env, &p).unwrap();
        // 1 shot setting x 5 fractions x 2 regimes x 1 method x 1 seed
        assert_eq!(outcome.runs.len(), 10);
        assert_eq!(outcome.failures, 0);

        let supports: BTreeSet<Vec<String>> = outcome
            .runs
            .iter()
            .map(|r| r.manifest.as_ref().unwrap().support_ids.clone())
            .collect();
        assert_eq!(supports.len(), 1, "support ids must not vary across fractions");
        let queries: BTreeSet<Vec<String>> = outcome
            .runs
            .iter()
            .map(|r| r.manifest.as_ref().unwrap().query_ids.clone())
            .collect();
        assert_eq!(queries.len(), 1, "query ids must not vary across fractions");

        // nested, class-balanced growth of the seen-train sets
        let mut by_pct: Vec<(u32, BTreeSet<String>)> = outcome
            .runs
            .iter()
            .filter(|r| r.row.regime == Regime::Fsid)
            .map(|r| {
                (
                    r.row.fraction_pct.unwrap(),
                    r.manifest.as_ref().unwrap().seen_train_ids.iter().cloned().collect(),
                )
            })
            .collect();
        by_pct.sort_by_key(|(pct, _)| *pct);
        assert_eq!(by_pct.len(), 5);
        for w in by_pct.windows(2) {
            assert!(w[0].1.is_subset(&w[1].1));
        }
        // 4 seen labels x 15 train records each; 20% -> 3 per label
        assert_eq!(by_pct[0].1.len(), 12);
        assert_eq!(by_pct[4].1.len(), 60);
    }

    #[test]
    fn shots_sweep_nests_support_sets() {
        let corpus = generate_synthetic_corpus(6, 28, &TemplateBank::builtin(), 1).unwrap();
        let env = toy_env(&corpus);
        let mut p = plan(ExperimentFamily::ShotsSweep);
        p.shots_grid = vec![1, 5];
        let outcome = run_shots_sweep(&env, &p).unwrap();
        // 2 K x 2 regimes x 1 method x 1 seed
        assert_eq!(outcome.runs.len(), 4);
        assert_eq!(outcome.failures, 0);

        let support_at = |k: usize| -> BTreeSet<String> {
            outcome
                .runs
                .iter()
                .find(|r| r.row.shots == k)
                .unwrap()
                .manifest
                .as_ref()
                .unwrap()
                .support_ids
                .iter()
                .cloned()
                .collect()
        };
        assert!(support_at(1).is_subset(&support_at(5)));

        let mut bad = plan(ExperimentFamily::ShotsSweep);
        bad.shots_grid = vec![1, 3];
        assert!(matches!(run_shots_sweep(&env, &bad), Err(Error::Validation(_))));
    }

    #[test]
    fn shots_sweep_seed_mean_improves_with_more_shots() {
        // seed-mean FSID F1 at K=5 must not trail K=1 by more than noise
        let corpus = generate_synthetic_corpus(6, 24, &TemplateBank::builtin(), 1).unwrap();
        let env = toy_env(&corpus);
        let mut p = plan(ExperimentFamily::ShotsSweep);
        p.shots_grid = vec![1, 5];
        p.seeds = vec![0, 1, 2, 3, 4];
        let outcome = run_shots_sweep(&env, &p).unwrap();
        assert_eq!(outcome.failures, 0);
        let mean_at = |k: usize| {
            let values: Vec<f64> = outcome
                .runs
                .iter()
                .filter(|r| r.row.shots == k && r.row.regime == Regime::Fsid)
                .map(|r| r.row.f1_macro.unwrap())
                .collect();
            values.iter().sum::<f64>() / values.len() as f64
        };
        assert!(
            mean_at(5) >= mean_at(1) - 0.05,
            "K=5 mean {} trails K=1 mean {}",
            mean_at(5),
            mean_at(1)
        );
    }

    #[test]
    fn unknown_method_is_a_config_error_at_the_point_level() {
        let corpus = generate_synthetic_corpus(4, 12, &TemplateBank::builtin(), 1).unwrap();
        let env = toy_env(&corpus);
        let inventory = label_inventory(&corpus);
        let partition = make_partition(&inventory, &env.partition_policy, 4).unwrap();
        let bundle = build_splits(&corpus, &partition, 1, 0, 1).unwrap();
        assert!(matches!(
            run_method(&env, &bundle, Regime::Fsid, "mystery", 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn summarize_averages_over_seeds() {
        let mk = |seed: u64, f1: f64| SweepRow {
            family: "main".into(),
            dataset: "synthetic".into(),
            method: METHOD_NLI_FSL.into(),
            regime: Regime::Fsid,
            shots: 5,
            novel_count: None,
            fraction_pct: None,
            seed,
            f1_macro: Some(f1),
            f1_micro: Some(f1),
            n_query: Some(10),
            error: None,
        };
        let rows = vec![mk(0, 0.8), mk(1, 0.9), mk(2, 1.0)];
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 1);
        assert_eq!(summary[0].n_seeds, 3);
        assert!((summary[0].f1_macro_mean - 0.9).abs() < 1e-12);
        assert!(summary[0].f1_macro_std > 0.0);
    }
}
