//! Pretrained-transformer backend.
//!
//! The encoder itself lives in an external Python process (torch +
//! transformers); this adapter launches the bundled driver script for
//! training and scoring and exchanges JSON files with it. Hardware-level
//! nondeterminism is accepted here; desk-scale determinism guarantees are
//! the toy backend's job.

use std::path::{Path, PathBuf};
use std::process::Command;

use super::{
    content_hash_of, read_meta, write_meta, ArtifactMeta, PairScorer, TrainConfig, TrainLog,
};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::pairs::{write_pairs_jsonl, PairDataset};

pub const TRANSFORMER_BACKEND_ID: &str = "transformer";
const DRIVER_FILE: &str = "transformer_driver.py";
pub(crate) const DRIVER_SRC: &str = include_str!("../../assets/transformer_driver.py");

/// Environment variable naming the Python interpreter to launch.
pub const PYTHON_ENV_VAR: &str = "NLI_FSL_PYTHON";

#[derive(Debug, Clone)]
pub struct TransformerPairScorer {
    model_id: String,
    cache_dir: PathBuf,
    python_bin: String,
    checkpoint: Option<PathBuf>,
    config: Option<TrainConfig>,
}

impl TransformerPairScorer {
    /// `model_id` is an opaque pretrained-checkpoint identifier resolved by
    /// the driver (hub id or local path). `cache_dir` hosts the driver
    /// script and fine-tuned checkpoints.
    pub fn new(model_id: &str, cache_dir: &Path) -> Self {
        TransformerPairScorer {
            model_id: model_id.to_string(),
            cache_dir: cache_dir.to_path_buf(),
            python_bin: std::env::var(PYTHON_ENV_VAR).unwrap_or_else(|_| "python3".into()),
            checkpoint: None,
            config: None,
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = read_meta(dir)?;
        if meta.backend_id != TRANSFORMER_BACKEND_ID {
            return Err(Error::IncompatibleArtifact(format!(
                "artifact at {} has backend '{}', expected '{TRANSFORMER_BACKEND_ID}'",
                dir.display(),
                meta.backend_id
            )));
        }
        let checkpoint = dir.join("checkpoint");
        if !checkpoint.is_dir() {
            return Err(Error::Load {
                path: checkpoint,
                reason: "artifact has no checkpoint directory".into(),
            });
        }
        if dir_digest(&checkpoint)? != meta.content_hash {
            return Err(Error::Integrity(format!(
                "checkpoint at {} does not match the artifact's content hash",
                checkpoint.display()
            )));
        }
        Ok(TransformerPairScorer {
            model_id: meta.tokenizer.clone(),
            cache_dir: dir.to_path_buf(),
            python_bin: std::env::var(PYTHON_ENV_VAR).unwrap_or_else(|_| "python3".into()),
            checkpoint: Some(checkpoint),
            config: meta.config,
        })
    }

    fn driver_path(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.cache_dir)?;
        let path = self.cache_dir.join(DRIVER_FILE);
        let stale = match std::fs::read_to_string(&path) {
            Ok(existing) => existing != DRIVER_SRC,
            Err(_) => true,
        };
        if stale {
            std::fs::write(&path, DRIVER_SRC)?;
        }
        Ok(path)
    }

    fn run_driver(&self, args: &[&str]) -> Result<()> {
        let driver = self.driver_path()?;
        let output = Command::new(&self.python_bin)
            .arg(&driver)
            .args(args)
            .output()
            .map_err(|e| Error::Training(format!("failed to launch {}: {e}", self.python_bin)))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            let tail: Vec<&str> = stderr.lines().rev().take(12).collect();
            let tail: Vec<&str> = tail.into_iter().rev().collect();
            return Err(Error::Training(format!(
                "driver {} exited with {}: {}",
                args.first().unwrap_or(&"?"),
                output.status,
                tail.join(" | ")
            )));
        }
        Ok(())
    }
}

impl PairScorer for TransformerPairScorer {
    fn backend_id(&self) -> &'static str {
        TRANSFORMER_BACKEND_ID
    }

    fn is_trained(&self) -> bool {
        self.checkpoint.is_some()
    }

    fn fit(&mut self, train_set: &PairDataset, config: &TrainConfig) -> Result<TrainLog> {
        config.validate()?;
        if train_set.pairs.is_empty() {
            return Err(Error::Validation("training set is empty".into()));
        }
        let n_entailed = train_set.count_entailed();
        if n_entailed == 0 || n_entailed == train_set.pairs.len() {
            return Err(Error::Validation(
                "training set must contain both entailed and not-entailed pairs".into(),
            ));
        }

        let run_tag = sha256_hex(
            format!("{}|{}|{}", self.model_id, serde_json::to_string(config)?, train_set.pairs.len())
                .as_bytes(),
        );
        let workdir = self.cache_dir.join(format!("ft-{}", &run_tag[..16]));
        std::fs::create_dir_all(&workdir)?;

        let pairs_path = workdir.join("train_pairs.jsonl");
        write_pairs_jsonl(&pairs_path, train_set)?;
        let config_path = workdir.join("train_config.json");
        std::fs::write(&config_path, serde_json::to_vec_pretty(config)?)?;

        self.run_driver(&[
            "train",
            "--pairs",
            pairs_path.to_str().unwrap(),
            "--config",
            config_path.to_str().unwrap(),
            "--model-id",
            &self.model_id,
            "--out",
            workdir.to_str().unwrap(),
        ])?;

        let log_path = workdir.join("train_log.json");
        let log: TrainLog = serde_json::from_slice(&std::fs::read(&log_path)?)?;
        self.checkpoint = Some(workdir.join("checkpoint"));
        self.config = Some(config.clone());
        Ok(log)
    }

    fn score(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        let checkpoint = self.checkpoint.as_ref().ok_or_else(|| {
            Error::Validation("transformer scorer is untrained; fit or load it first".into())
        })?;
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let scratch = self.cache_dir.join("scratch");
        std::fs::create_dir_all(&scratch)?;
        let pairs_path = scratch.join("score_pairs.jsonl");
        {
            use std::io::Write;
            let mut f = std::io::BufWriter::new(std::fs::File::create(&pairs_path)?);
            for (premise, hypothesis) in pairs {
                let row = serde_json::json!({"premise": premise, "hypothesis": hypothesis});
                writeln!(f, "{row}")?;
            }
        }
        let out_path = scratch.join("scores.json");
        let max_len = self.config.as_ref().map(|c| c.max_len).unwrap_or(64).to_string();
        self.run_driver(&[
            "score",
            "--model",
            checkpoint.to_str().unwrap(),
            "--pairs",
            pairs_path.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
            "--max-len",
            &max_len,
        ])?;
        let scores: Vec<f64> = serde_json::from_slice(&std::fs::read(&out_path)?)?;
        if scores.len() != pairs.len() {
            return Err(Error::Integrity(format!(
                "driver returned {} scores for {} pairs",
                scores.len(),
                pairs.len()
            )));
        }
        Ok(scores)
    }

    fn save(&self, dir: &Path, manifest_hash: Option<&str>) -> Result<()> {
        let checkpoint = self.checkpoint.as_ref().ok_or_else(|| {
            Error::Validation("cannot save an untrained transformer scorer".into())
        })?;
        let target = dir.join("checkpoint");
        if &target != checkpoint {
            copy_dir(checkpoint, &target)?;
        }
        write_meta(
            dir,
            &ArtifactMeta {
                backend_id: TRANSFORMER_BACKEND_ID.to_string(),
                // the model id doubles as the tokenizer identifier
                tokenizer: self.model_id.clone(),
                config: self.config.clone(),
                content_hash: dir_digest(&target)?,
                manifest_hash: manifest_hash.map(str::to_string),
            },
        )
    }
}

/// Digest of a directory tree: sorted (relative path, file hash) rows.
fn dir_digest(dir: &Path) -> Result<String> {
    let mut rows = Vec::new();
    collect_files(dir, dir, &mut rows)?;
    rows.sort();
    let joined = rows
        .iter()
        .map(|(p, h)| format!("{p}\u{1}{h}"))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(sha256_hex(joined.as_bytes()))
}

fn collect_files(root: &Path, dir: &Path, rows: &mut Vec<(String, String)>) -> Result<()> {
    let mut entries: Vec<_> =
        std::fs::read_dir(dir)?.collect::<std::result::Result<Vec<_>, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, rows)?;
        } else {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().to_string();
            let bytes = std::fs::read(&path)?;
            rows.push((rel, content_hash_of(&bytes)));
        }
    }
    Ok(())
}

fn copy_dir(src: &Path, dst: &Path) -> Result<()> {
    std::fs::create_dir_all(dst)?;
    for entry in std::fs::read_dir(src)? {
        let entry = entry?;
        let from = entry.path();
        let to = dst.join(entry.file_name());
        if from.is_dir() {
            copy_dir(&from, &to)?;
        } else {
            std::fs::copy(&from, &to)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn driver_script_is_valid_python() {
        // The embedded driver must at least compile; skips when no
        // interpreter is installed.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(DRIVER_FILE);
        std::fs::write(&path, DRIVER_SRC).unwrap();
        let result = Command::new("python3")
            .args(["-m", "py_compile", path.to_str().unwrap()])
            .output();
        match result {
            Ok(out) => assert!(
                out.status.success(),
                "py_compile failed: {}",
                String::from_utf8_lossy(&out.stderr)
            ),
            Err(_) => eprintln!("python3 unavailable; skipping driver compile check"),
        }
    }

    #[test]
    fn untrained_transformer_cannot_score_or_save() {
        let dir = tempfile::tempdir().unwrap();
        let scorer = TransformerPairScorer::new("bert-base-uncased", dir.path());
        assert!(!scorer.is_trained());
        assert!(scorer.score(&[("a".into(), "b".into())]).is_err());
        assert!(scorer.save(dir.path(), None).is_err());
    }

    #[test]
    fn load_requires_matching_backend_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        write_meta(
            dir.path(),
            &ArtifactMeta {
                backend_id: "toy".into(),
                tokenizer: "x".into(),
                config: None,
                content_hash: "0".into(),
                manifest_hash: None,
            },
        )
        .unwrap();
        assert!(matches!(
            TransformerPairScorer::load(dir.path()),
            Err(Error::IncompatibleArtifact(_))
        ));

        write_meta(
            dir.path(),
            &ArtifactMeta {
                backend_id: TRANSFORMER_BACKEND_ID.into(),
                tokenizer: "bert-base-uncased".into(),
                config: None,
                content_hash: "0".into(),
                manifest_hash: None,
            },
        )
        .unwrap();
        assert!(matches!(
            TransformerPairScorer::load(dir.path()),
            Err(Error::Load { .. })
        ));
    }

    #[test]
    fn dir_digest_tracks_content() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.bin"), b"hello").unwrap();
        let d1 = dir_digest(dir.path()).unwrap();
        let d2 = dir_digest(dir.path()).unwrap();
        assert_eq!(d1, d2);
        std::fs::write(dir.path().join("a.bin"), b"world").unwrap();
        assert_ne!(d1, dir_digest(dir.path()).unwrap());
    }
}
