//! The prepare / train / eval / experiment / plot pipeline stages.
//!
//! Every artifact carries its upstream hash: the split manifest hashes the
//! corpus fingerprint and sampled ids, the model artifact embeds the
//! manifest hash, and reports embed both. `eval` refuses broken chains.
//! All writes stay inside the resolved output directory.

use std::path::{Path, PathBuf};

use crate::baselines;
use crate::config::RunConfig;
use crate::corpus::{
    build_splits, filter_min_class_size, make_partition, manifest_hash, SplitManifest,
};
use crate::encoder::{artifact_manifest_hash, load_scorer};
use crate::error::{Error, Result};
use crate::eval::experiments::{
    build_training_pairs, config_snapshot, make_scorer, run_family, summarize, ExperimentFamily,
    PipelineEnv, RunSeeds, SweepRow, METHOD_NLI_FSL,
};
use crate::eval::plot::{line_chart, series_by_method, Series};
use crate::eval::{compute_f1, EvalReport};
use crate::predict::{predict_regime, regime_label_space, write_trace};

fn pipeline_env<'a>(
    config: &RunConfig,
    corpus: &'a [crate::corpus::UtteranceRecord],
    model_cache: &Path,
) -> Result<PipelineEnv<'a>> {
    Ok(PipelineEnv {
        corpus,
        dataset_id: config.dataset.id.to_lowercase(),
        backend: config.backend_choice(model_cache),
        train: config.train_config(),
        downsample_ratio: config.pairs.downsample_ratio,
        sampling: config.pairs.sampling,
        min_class_size: config.min_class_size(),
        partition_policy: config.partition_policy()?,
        partition_seed: config.partition.seed,
    })
}

/// Load the corpus, partition the labels, sample the splits, and persist
/// the manifest. Prints label counts and the pair-count forecast.
pub fn cmd_prepare(config: &RunConfig, output_dir: &Path) -> Result<PathBuf> {
    let corpus = config.load_corpus()?;
    let shots = config.split.shots;
    let threshold = config.min_class_size().max(shots);
    let (records, labels) = filter_min_class_size(&corpus, threshold);
    if labels.is_empty() {
        return Err(Error::Validation(format!(
            "no class has at least {threshold} records"
        )));
    }
    let partition = make_partition(&labels, &config.partition_policy()?, config.partition.seed)?;
    let bundle = build_splits(&records, &partition, shots, config.split.seed, threshold)?;

    let manifest = SplitManifest::from_bundle(
        &config.dataset.id.to_lowercase(),
        &records,
        &bundle,
        config.split.seed,
        threshold,
    );
    let path = output_dir.join("manifest.json");
    manifest.save(&path)?;
    if config.dataset.id.eq_ignore_ascii_case("synthetic") {
        // snapshot the generated corpus so it can be inspected or reused
        crate::corpus::write_jsonl(&output_dir.join("corpus.jsonl"), &corpus)?;
    }

    let n_seen_train = bundle.seen_train.len();
    let n_seen_labels = partition.seen.len();
    println!("dataset:          {}", manifest.dataset_id);
    println!("seen labels:      {n_seen_labels}");
    println!("novel labels:     {}", partition.novel.len());
    println!("seen-train:       {n_seen_train} records");
    println!("support:          {} records (K={shots})", bundle.support.len());
    println!("query pool:       {} records", bundle.query.len());
    println!(
        "pair forecast:    {n_seen_train} entailed + {} not-entailed before downsampling",
        n_seen_train * n_seen_labels.saturating_sub(1)
    );
    println!("manifest:         {}", path.display());
    Ok(path)
}

/// Build the fine-tuning pairs, fit the scorer, and save the model artifact
/// with the manifest hash embedded.
pub fn cmd_train(
    config: &RunConfig,
    output_dir: &Path,
    model_cache: &Path,
    manifest_path: &Path,
) -> Result<PathBuf> {
    if config.run.method != METHOD_NLI_FSL {
        return Err(Error::Config(format!(
            "the staged train/eval flow covers '{METHOD_NLI_FSL}' only; run baseline method '{}' \
             through `experiment`",
            config.run.method
        )));
    }
    let corpus = config.load_corpus()?;
    let manifest = SplitManifest::load(manifest_path)?;
    let bundle = manifest.restore(&corpus)?;
    let env = pipeline_env(config, &corpus, model_cache)?;

    let seeds = RunSeeds::from_run_seed(config.run.seed);
    let train_set = build_training_pairs(
        &bundle,
        config.run.regime,
        env.downsample_ratio,
        env.sampling,
        &seeds,
    )
    .map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("train stage: {m}")),
        other => other,
    })?;
    // the pair dataset is an exchange format of its own
    crate::pairs::write_pairs_jsonl(&output_dir.join("train_pairs.jsonl"), &train_set)?;

    let mut scorer = make_scorer(&env.backend);
    let mut train_config = env.train.clone();
    train_config.seed = seeds.train;
    let log = scorer.fit(&train_set, &train_config).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("train stage: {m}")),
        other => other,
    })?;

    let artifact_dir = output_dir.join("artifact");
    scorer.save(&artifact_dir, Some(&manifest_hash(manifest_path)?))?;
    std::fs::write(
        output_dir.join("train_log.json"),
        serde_json::to_vec_pretty(&log)?,
    )?;
    for warning in &log.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "trained {} on {} epochs (final mean loss {:.6})",
        scorer.backend_id(),
        log.epoch_mean_loss.len(),
        log.epoch_mean_loss.last().copied().unwrap_or(f64::NAN)
    );
    println!("artifact:         {}", artifact_dir.display());
    Ok(artifact_dir)
}

/// Predict the regime's query set with a saved artifact and score it,
/// refusing artifacts whose manifest hash does not match.
pub fn cmd_eval(
    config: &RunConfig,
    output_dir: &Path,
    model_cache: &Path,
    manifest_path: &Path,
    artifact_dir: &Path,
) -> Result<PathBuf> {
    if config.run.method != METHOD_NLI_FSL {
        return Err(Error::Config(format!(
            "the staged train/eval flow covers '{METHOD_NLI_FSL}' only; run baseline method '{}' \
             through `experiment`",
            config.run.method
        )));
    }
    let corpus = config.load_corpus()?;
    let manifest = SplitManifest::load(manifest_path)?;
    let bundle = manifest.restore(&corpus)?;

    let current_hash = manifest_hash(manifest_path)?;
    match artifact_manifest_hash(artifact_dir)? {
        Some(h) if h == current_hash => {}
        Some(h) => {
            return Err(Error::Integrity(format!(
                "artifact was trained against manifest {h} but {} hashes to {current_hash}",
                manifest_path.display()
            )))
        }
        None => {
            return Err(Error::Integrity(format!(
                "artifact at {} carries no manifest hash; refusing to evaluate an unlinked model",
                artifact_dir.display()
            )))
        }
    }

    let scorer = load_scorer(artifact_dir)?;
    let regime = config.run.regime;
    let predictions = predict_regime(scorer.as_ref(), &bundle, regime)?;
    let space = regime_label_space(&bundle, regime);
    let scores = compute_f1(&predictions, &space)?;

    let env = pipeline_env(config, &corpus, model_cache)?;
    let report = EvalReport::new(
        &env.dataset_id,
        &config.run.method,
        regime,
        bundle.shots,
        scores,
        &current_hash,
        config_snapshot(
            &env,
            regime,
            &config.run.method,
            bundle.shots,
            config.run.seed,
            manifest.min_class_size,
        ),
    );

    let report_path = output_dir.join("report.json");
    report.save(&report_path)?;
    write_trace(&output_dir.join("trace.jsonl"), &predictions)?;

    println!(
        "{}",
        render_result_table(&report, &baselines::reference_rows_for(
            &report.dataset_id,
            regime,
            bundle.shots,
        ))
    );
    println!("report:           {}", report_path.display());
    Ok(report_path)
}

/// Render one run's result next to the bundled reference rows.
fn render_result_table(report: &EvalReport, references: &[baselines::ReferenceScore]) -> String {
    let mut rows: Vec<[String; 4]> = vec![[
        format!("{} (this run)", report.method),
        format!("{:.2}%", report.f1_macro * 100.0),
        format!("{:.2}%", report.f1_micro * 100.0),
        format!("{}", report.n_query),
    ]];
    for r in references {
        rows.push([
            format!("{} (reference)", r.method),
            format!("{:.2}%", r.f1_percent),
            "-".into(),
            "-".into(),
        ]);
    }
    let mut table = render_table(
        &format!(
            "{} {} K={}",
            report.dataset_id,
            report.regime,
            report.shots
        ),
        &["method", "macro-F1", "micro-F1", "n"],
        &rows,
    );
    if !references.is_empty() {
        table.push_str(&format!("note: {}\n", baselines::reference_note()));
    }
    table
}

fn render_table(title: &str, headers: &[&str], rows: &[[String; 4]]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = format!("== {title}\n");
    let fmt_row = |cells: &[String]| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<width$}", width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
    };
    out.push_str(&fmt_row(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>()));
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row.as_slice()));
        out.push('\n');
    }
    out
}

fn row_slug(row: &SweepRow) -> String {
    let mut slug = format!("{}-{}-k{}", row.method, row.regime, row.shots);
    if let Some(n) = row.novel_count {
        slug.push_str(&format!("-n{n}"));
    }
    if let Some(f) = row.fraction_pct {
        slug.push_str(&format!("-f{f}"));
    }
    slug.push_str(&format!("-s{}", row.seed));
    slug
}

/// Expand and execute an experiment family; persists per-run reports,
/// manifests and traces, the aggregate CSV, and the family's figures.
/// Failed grid points are recorded and the error raised at the end.
pub fn cmd_experiment(
    config: &RunConfig,
    output_dir: &Path,
    model_cache: &Path,
    family_flag: Option<&str>,
) -> Result<PathBuf> {
    let corpus = config.load_corpus()?;
    let env = pipeline_env(config, &corpus, model_cache)?;
    let plan = config.experiment_plan(family_flag)?;
    let outcome = run_family(&env, &plan)?;

    let family_dir = output_dir.join(plan.family.to_string());
    std::fs::create_dir_all(&family_dir)?;

    let mut rows = Vec::new();
    for run in &outcome.runs {
        let run_dir = family_dir.join(row_slug(&run.row));
        std::fs::create_dir_all(&run_dir)?;
        if let Some(manifest) = &run.manifest {
            manifest.save(&run_dir.join("manifest.json"))?;
        }
        if let Some(report) = &run.report {
            report.save(&run_dir.join("report.json"))?;
            write_trace(&run_dir.join("trace.jsonl"), &run.predictions)?;
        }
        if let Some(err) = &run.row.error {
            std::fs::write(run_dir.join("error.txt"), err)?;
        }
        rows.push(run.row.clone());
    }

    let csv_path = family_dir.join("results.csv");
    write_rows_csv(&csv_path, &rows)?;
    emit_family_figures(plan.family, &rows, &family_dir)?;
    print_summary(&rows);

    if outcome.failures > 0 {
        eprintln!("{} of {} grid points failed; see error.txt files", outcome.failures, rows.len());
    }
    outcome.into_result()?;
    Ok(csv_path)
}

fn write_rows_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    }
    writer.flush()?;
    Ok(())
}

fn read_rows_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: rows.len() + 2,
            reason: e.to_string(),
        })?);
    }
    Ok(rows)
}

fn print_summary(rows: &[SweepRow]) {
    let summary = summarize(rows);
    let table_rows: Vec<[String; 4]> = summary
        .iter()
        .map(|s| {
            let mut coord = format!("{} {} K={}", s.method, s.regime, s.shots);
            if let Some(n) = s.novel_count {
                coord.push_str(&format!(" novel={n}"));
            }
            if let Some(f) = s.fraction_pct {
                coord.push_str(&format!(" data={f}%"));
            }
            [
                coord,
                format!("{:.4}", s.f1_macro_mean),
                format!("{:.4}", s.f1_macro_std),
                format!("{}", s.n_seeds),
            ]
        })
        .collect();
    println!(
        "{}",
        render_table("seed means", &["run", "macro-F1", "stdev", "seeds"], &table_rows)
    );
}

fn emit_family_figures(
    family: ExperimentFamily,
    rows: &[SweepRow],
    family_dir: &Path,
) -> Result<()> {
    let summary = summarize(rows);
    match family {
        ExperimentFamily::IncrementalLabels => {
            let series = series_by_method(
                &summary,
                |r| r.novel_count.map(|n| n as f64),
                |_| true,
            );
            if series.iter().any(|s: &Series| !s.points.is_empty()) {
                line_chart(
                    &family_dir.join("incremental_labels.svg"),
                    "incremental label space (5-shot FSID)",
                    "novel classes",
                    &series,
                )?;
            }
        }
        ExperimentFamily::ShotsSweep => {
            for regime in ["fsid", "gfsid"] {
                let series = series_by_method(
                    &summary,
                    |r| Some(r.shots as f64),
                    |r| r.regime.to_string() == regime,
                );
                if series.iter().any(|s| !s.points.is_empty()) {
                    line_chart(
                        &family_dir.join(format!("shots_{regime}.svg")),
                        &format!("varying shots ({regime})"),
                        "shots",
                        &series,
                    )?;
                }
            }
        }
        ExperimentFamily::IncrementalData => {
            for regime in ["fsid", "gfsid"] {
                let series = series_by_method(
                    &summary,
                    |r| r.fraction_pct.map(|f| f as f64),
                    |r| r.regime.to_string() == regime,
                );
                if series.iter().any(|s| !s.points.is_empty()) {
                    line_chart(
                        &family_dir.join(format!("incremental_data_{regime}.svg")),
                        &format!("incremental seen-class data ({regime})"),
                        "% seen-class data",
                        &series,
                    )?;
                }
            }
        }
        ExperimentFamily::Main | ExperimentFamily::Zeroshot => {}
    }
    Ok(())
}

/// Re-render figures from a persisted results CSV.
pub fn cmd_plot(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_rows_csv(csv_path)?;
    if rows.is_empty() {
        return Err(Error::Validation(format!("{} holds no rows", csv_path.display())));
    }
    let family = ExperimentFamily::parse(&rows[0].family)?;
    std::fs::create_dir_all(out_dir)?;
    emit_family_figures(family, &rows, out_dir)?;
    print_summary(&rows);
    let figures: Vec<PathBuf> = std::fs::read_dir(out_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "svg"))
        .collect();
    Ok(figures)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_config(dir: &Path) -> RunConfig {
        let toml_text = format!(
            r#"
[dataset]
id = "synthetic"

[dataset.synthetic]
n_labels = 6
per_label = 24
seed = 1

[partition]
policy = "random"
novel_count = 2
seed = 4

[split]
shots = 5
seed = 3

[train]
epochs = 8

[output]
dir = "{}"
"#,
            dir.display()
        );
        toml::from_str(&toml_text).unwrap()
    }

    #[test]
    fn prepare_train_eval_chain_runs_and_checks_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_path_buf();
        let config = synthetic_config(&out);

        let manifest_path = cmd_prepare(&config, &out).unwrap();
        assert!(manifest_path.exists());

        let artifact = cmd_train(&config, &out, &out.join("model-cache"), &manifest_path).unwrap();
        assert!(artifact.join("metadata.json").exists());

        let report_path =
            cmd_eval(&config, &out, &out.join("model-cache"), &manifest_path, &artifact).unwrap();
        let report = EvalReport::load(&report_path).unwrap();
        assert_eq!(report.method, "nli-fsl");
        assert!(out.join("trace.jsonl").exists());

        // breaking the chain: a regenerated manifest with a different seed
        let mut other = config.clone();
        other.split.seed = 99;
        let new_manifest = cmd_prepare(&other, &out).unwrap();
        let err = cmd_eval(&other, &out, &out.join("model-cache"), &new_manifest, &artifact)
            .unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "got {err:?}");
    }

    #[test]
    fn snips_preset_partitions_four_seen_three_novel() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("snips.jsonl");
        let intents = [
            "AddToPlaylist",
            "BookRestaurant",
            "GetWeather",
            "PlayMusic",
            "RateBook",
            "SearchCreativeWork",
            "SearchScreeningEvent",
        ];
        let mut rows = String::new();
        for (i, intent) in intents.iter().enumerate() {
            for j in 0..4 {
                let split = if j == 3 { "test" } else { "train" };
                rows.push_str(&format!(
                    "{{\"text\":\"sample {i} {j} for this intent\",\"label\":\"{intent}\",\"split\":\"{split}\"}}\n"
                ));
            }
        }
        std::fs::write(&data, rows).unwrap();

        let toml_text = format!(
            r#"
[dataset]
id = "snips"
path = "{}"

[split]
shots = 2
seed = 0

[output]
dir = "{}"
"#,
            data.display(),
            dir.path().join("out").display()
        );
        let config: RunConfig = toml::from_str(&toml_text).unwrap();
        let manifest_path = cmd_prepare(&config, &dir.path().join("out")).unwrap();
        let manifest = SplitManifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.seen_labels.len(), 4);
        assert_eq!(manifest.novel_labels.len(), 3);
        assert!(manifest.novel_labels.contains(&"PlayMusic".to_string()));
        assert!(manifest.novel_labels.contains(&"RateBook".to_string()));
        assert!(manifest.novel_labels.contains(&"AddToPlaylist".to_string()));
    }

    #[test]
    fn small_classes_are_dropped_before_partitioning() {
        // a class below min_class_size must vanish from the partition input
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.jsonl");
        let mut rows = String::new();
        for (intent, n) in [("flight", 12), ("ground_service", 12), ("meal", 12), ("rare", 3)] {
            for j in 0..n {
                let split = if j % 4 == 3 { "test" } else { "train" };
                rows.push_str(&format!(
                    "{{\"text\":\"{intent} request {j}\",\"label\":\"{intent}\",\"split\":\"{split}\"}}\n"
                ));
            }
        }
        std::fs::write(&data, rows).unwrap();

        let toml_text = format!(
            r#"
[dataset]
id = "custom-slu"
path = "{}"

[partition]
policy = "fixed"
novel = ["meal"]
min_class_size = 10

[split]
shots = 2
seed = 0

[output]
dir = "{}"
"#,
            data.display(),
            dir.path().join("out").display()
        );
        let config: RunConfig = toml::from_str(&toml_text).unwrap();
        let manifest_path = cmd_prepare(&config, &dir.path().join("out")).unwrap();
        let manifest = SplitManifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.min_class_size, 10);
        assert!(!manifest.seen_labels.contains(&"rare".to_string()));
        assert!(!manifest.novel_labels.contains(&"rare".to_string()));
        assert_eq!(manifest.seen_labels.len(), 2);
        assert_eq!(manifest.novel_labels, vec!["meal".to_string()]);
    }

    #[test]
    fn staged_flow_rejects_baseline_methods() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = synthetic_config(dir.path());
        config.run.method = "protobert".into();
        let err =
            cmd_train(&config, dir.path(), &dir.path().join("cache"), Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn experiment_writes_csv_reports_and_figures() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_path_buf();
        let mut config = synthetic_config(&out);
        config.experiment.methods = vec!["nli-fsl".into(), "protobert".into()];
        config.experiment.seeds = vec![0];
        config.experiment.shots_grid = vec![1, 5];

        let model_cache = out.join("model-cache");
        let csv = cmd_experiment(&config, &out, &model_cache, Some("shots_sweep")).unwrap();
        assert!(csv.exists());
        let rows = read_rows_csv(&csv).unwrap();
        // 2 shots x 2 regimes x 2 methods x 1 seed
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.error.is_none()));
        assert!(out.join("shots_sweep/shots_fsid.svg").exists());

        // one run dir per row, each with the full artifact set
        let first = &rows[0];
        let run_dir = out.join("shots_sweep").join(row_slug(first));
        assert!(run_dir.join("report.json").exists());
        assert!(run_dir.join("manifest.json").exists());
        assert!(run_dir.join("trace.jsonl").exists());

        let figures = cmd_plot(&csv, &out.join("replot")).unwrap();
        assert!(!figures.is_empty());
    }

    #[test]
    fn experiment_rejects_unknown_family() {
        let dir = tempfile::tempdir().unwrap();
        let config = synthetic_config(dir.path());
        let err = cmd_experiment(
            &config,
            dir.path(),
            &dir.path().join("cache"),
            Some("sideways"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
