//! Dataset ingestion from JSON-lines files.
//!
//! Two layouts are supported: a single file whose rows carry a `"split"`
//! key, or a directory holding `train.jsonl` and `test.jsonl`. Record ids
//! are `{split}:{row-index}` and therefore stable across repeated loads.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{IntentLabel, Split, UtteranceRecord};
use crate::error::{Error, Result};

/// On-disk dataset layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// One JSONL file; every row must carry `"split"`.
    SingleFile,
    /// A directory with `train.jsonl` and `test.jsonl`; rows may omit
    /// `"split"` (a present key must agree with the file).
    SplitFiles,
    /// Pick by path type: directory → split files, file → single file.
    #[default]
    Auto,
}

#[derive(Deserialize)]
struct RawRow {
    text: Option<String>,
    label: Option<String>,
    split: Option<String>,
}

/// Optional raw-name → surface-form override table (JSON object).
pub fn load_surface_overrides(path: &Path) -> Result<BTreeMap<String, String>> {
    let bytes = std::fs::read(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let map: BTreeMap<String, String> = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: format!("surface override table: {e}"),
    })?;
    Ok(map)
}

/// Load a dataset into canonical records.
///
/// Labels are normalized through `overrides` (falling back to the default
/// surface rendering) and checked for an injective raw → surface mapping.
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    overrides: &BTreeMap<String, String>,
) -> Result<Vec<UtteranceRecord>> {
    let format = match format {
        DatasetFormat::Auto => {
            if path.is_dir() {
                DatasetFormat::SplitFiles
            } else {
                DatasetFormat::SingleFile
            }
        }
        f => f,
    };

    let mut records = Vec::new();
    match format {
        DatasetFormat::SingleFile => {
            load_file(path, None, overrides, &mut records)?;
        }
        DatasetFormat::SplitFiles => {
            if !path.is_dir() {
                return Err(Error::Load {
                    path: path.to_path_buf(),
                    reason: "expected a directory containing train.jsonl and test.jsonl".into(),
                });
            }
            load_file(&path.join("train.jsonl"), Some(Split::Train), overrides, &mut records)?;
            load_file(&path.join("test.jsonl"), Some(Split::Test), overrides, &mut records)?;
        }
        DatasetFormat::Auto => unreachable!(),
    }

    if records.is_empty() {
        return Err(Error::Validation(format!(
            "dataset at {} contains no records",
            path.display()
        )));
    }
    check_surface_injectivity(&records)?;
    Ok(records)
}

fn load_file(
    path: &Path,
    file_split: Option<Split>,
    overrides: &BTreeMap<String, String>,
    out: &mut Vec<UtteranceRecord>,
) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let reader = std::io::BufReader::new(file);

    let mut index = 0usize;
    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: RawRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason: e.to_string(),
        })?;
        let text = row.text.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason: "missing \"text\" key".into(),
        })?;
        let label_raw = row.label.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason: "missing \"label\" key".into(),
        })?;

        let row_split = match row.split.as_deref() {
            Some("train") => Some(Split::Train),
            Some("test") => Some(Split::Test),
            Some(other) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: format!("unknown split '{other}' (expected \"train\" or \"test\")"),
                })
            }
            None => None,
        };
        let split = match (file_split, row_split) {
            (Some(f), Some(r)) if f != r => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: format!("row split '{r}' contradicts file split '{f}'"),
                })
            }
            (Some(f), _) => f,
            (None, Some(r)) => r,
            (None, None) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: "missing \"split\" key in single-file layout".into(),
                })
            }
        };

        let label = match overrides.get(&label_raw) {
            Some(surface) => IntentLabel::with_surface(&label_raw, surface)?,
            None => IntentLabel::new(&label_raw)?,
        };
        let id = format!("{split}:{index}");
        out.push(UtteranceRecord::new(&id, &text, label, split).map_err(|e| match e {
            Error::Validation(msg) => Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                reason: msg,
            },
            other => other,
        })?);
        index += 1;
    }
    Ok(())
}

/// Two distinct raw names must never share a surface form (hypotheses would
/// become ambiguous).
fn check_surface_injectivity(records: &[UtteranceRecord]) -> Result<()> {
    let mut by_surface: BTreeMap<&str, &str> = BTreeMap::new();
    for r in records {
        match by_surface.get(r.label.surface_form.as_str()) {
            Some(existing) if *existing != r.label.raw_name => {
                return Err(Error::Validation(format!(
                    "labels '{}' and '{}' both render to surface form '{}'; supply an override table",
                    existing, r.label.raw_name, r.label.surface_form
                )));
            }
            _ => {
                by_surface.insert(&r.label.surface_form, &r.label.raw_name);
            }
        }
    }
    Ok(())
}

/// Write records back out as JSONL (used for synthetic corpora and fixtures).
pub fn write_jsonl(path: &Path, records: &[UtteranceRecord]) -> Result<PathBuf> {
    use std::io::Write;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    for r in records {
        let row = serde_json::json!({
            "text": r.text,
            "label": r.label.raw_name,
            "split": r.source_split.to_string(),
        });
        writeln!(f, "{row}")?;
    }
    Ok(path.to_path_buf())
}
