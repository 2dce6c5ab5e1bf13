//! On-disk formats.
//!
//! * dataset: JSONL, one `{"id", "text", "label"}` object per line, where
//!   `label` is a class index or the pattern sentence; or CSV with an
//!   `id,text,label` header. Augmented output adds `origin` and `parent_id`.
//! * patterns: JSON array of pattern sentences; position is the class index.
//! * thesaurus: JSON object `{token: [synonym, ...]}`.
//! * training profile: a preset name or a JSON file mirroring `TrainConfig`.
//! * loss trace: CSV `step,epoch,lr,loss`.
//! * augmentation report: JSONL of `{parent_id, produced, requested, shortfall}`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fewshot_core::augmentation::AugmentationOutcome;
use fewshot_core::backend::{LossTrace, TrainConfig};
use fewshot_core::corpus::{resolve_label, LabelRef};
use fewshot_core::{LabeledDataset, Origin, PatternClass, Requirement, Thesaurus};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    /// `.csv` files are CSV; everything else is read as JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

#[derive(Debug, Deserialize)]
struct JsonRecord {
    id: String,
    text: String,
    label: Value,
    #[serde(default)]
    origin: Option<Origin>,
    #[serde(default)]
    parent_id: String,
}

fn record_error(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Record {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

fn label_ref(value: &Value) -> Option<LabelRef<'_>> {
    match value {
        Value::Number(n) => n.as_i64().map(LabelRef::Index),
        Value::String(s) => Some(
            s.trim()
                .parse()
                .map(LabelRef::Index)
                .unwrap_or(LabelRef::Text(s)),
        ),
        _ => None,
    }
}

/// Reads a labeled dataset; texts are normalized and record order is kept.
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    classes: &[PatternClass],
) -> Result<LabeledDataset> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    let mut requirements = Vec::new();
    match format {
        DatasetFormat::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line_no = i + 1;
                let line = line.map_err(Error::io(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: JsonRecord =
                    serde_json::from_str(&line).map_err(|e| record_error(path, line_no, e))?;
                let label = label_ref(&rec.label).ok_or_else(|| {
                    record_error(
                        path,
                        line_no,
                        "label must be an integer or a pattern string",
                    )
                })?;
                let label =
                    resolve_label(classes, label).map_err(|e| record_error(path, line_no, e))?;
                let mut req = Requirement::seed(rec.id, &rec.text, label);
                if let Some(origin) = rec.origin {
                    req.origin = origin;
                    req.parent_id = rec.parent_id;
                }
                requirements.push(req);
            }
        }
        DatasetFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            let headers = reader.headers()?.clone();
            let column = |name: &str| {
                headers
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| record_error(path, 1, format!("missing column `{name}`")))
            };
            let (id_col, text_col, label_col) = (column("id")?, column("text")?, column("label")?);
            for (i, row) in reader.records().enumerate() {
                let line_no = i + 2;
                let row = row.map_err(|e| record_error(path, line_no, e))?;
                let field = |c: usize| {
                    row.get(c)
                        .ok_or_else(|| record_error(path, line_no, "missing field"))
                };
                let raw_label = field(label_col)?;
                let label = match raw_label.trim().parse::<i64>() {
                    Ok(i) => LabelRef::Index(i),
                    Err(_) => LabelRef::Text(raw_label),
                };
                let label =
                    resolve_label(classes, label).map_err(|e| record_error(path, line_no, e))?;
                requirements.push(Requirement::seed(field(id_col)?, field(text_col)?, label));
            }
        }
    }
    Ok(LabeledDataset::new(classes.to_vec(), requirements)?)
}

pub fn load_patterns(path: &Path) -> Result<Vec<PatternClass>> {
    let raw = fs::read_to_string(path).map_err(Error::io(path))?;
    let texts: Vec<String> = serde_json::from_str(&raw).map_err(Error::json(path))?;
    Ok(PatternClass::from_texts(&texts)?)
}

/// Reads a thesaurus; entries are normalized, self-synonyms and empty lists
/// dropped.
pub fn load_thesaurus(path: &Path) -> Result<Thesaurus> {
    let raw = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_thesaurus(&raw).map_err(|message| match message {
        ThesaurusError::Json(source) => Error::Json {
            path: path.to_path_buf(),
            source,
        },
        ThesaurusError::Shape(message) => Error::Record {
            path: path.to_path_buf(),
            line: 0,
            message,
        },
    })
}

enum ThesaurusError {
    Json(serde_json::Error),
    Shape(String),
}

fn parse_thesaurus(raw: &str) -> std::result::Result<Thesaurus, ThesaurusError> {
    let value: Value = serde_json::from_str(raw).map_err(ThesaurusError::Json)?;
    let Value::Object(map) = value else {
        return Err(ThesaurusError::Shape(
            "thesaurus must be a JSON object".into(),
        ));
    };
    let mut entries = Vec::with_capacity(map.len());
    for (key, synonyms) in map {
        let Value::Array(list) = synonyms else {
            return Err(ThesaurusError::Shape(format!(
                "synonyms of {key:?} must be an array"
            )));
        };
        let list = list
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(ThesaurusError::Shape(format!(
                    "non-string synonym {other} for {key:?}"
                ))),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        entries.push((key, list));
    }
    Ok(Thesaurus::from_entries(entries))
}

/// Resolves a preset name, or reads a JSON profile file.
pub fn load_train_profile(name_or_path: &str) -> Result<TrainConfig> {
    if let Some(preset) = TrainConfig::preset(name_or_path) {
        return Ok(preset);
    }
    let path = Path::new(name_or_path);
    let raw = fs::read_to_string(path).map_err(Error::io(path))?;
    let cfg: TrainConfig = serde_json::from_str(&raw).map_err(Error::json(path))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct RequirementRecord<'a> {
    id: &'a str,
    text: &'a str,
    label: usize,
    origin: Origin,
    #[serde(skip_serializing_if = "str::is_empty")]
    parent_id: &'a str,
}

pub fn write_requirements_jsonl<'a, W: Write>(
    out: W,
    requirements: impl IntoIterator<Item = &'a Requirement>,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for r in requirements {
        let rec = RequirementRecord {
            id: &r.id,
            text: &r.text,
            label: r.label,
            origin: r.origin,
            parent_id: &r.parent_id,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationSummary {
    pub parent_id: String,
    pub produced: usize,
    pub requested: usize,
    pub shortfall: usize,
}

impl AugmentationSummary {
    pub fn new(parent_id: &str, outcome: &AugmentationOutcome) -> Self {
        AugmentationSummary {
            parent_id: parent_id.to_string(),
            produced: outcome.variants.len(),
            requested: outcome.requested,
            shortfall: outcome.shortfall,
        }
    }
}

pub fn write_jsonl<T: Serialize, W: Write>(out: W, items: &[T]) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_loss_trace<W: Write>(out: W, trace: &LossTrace) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["step", "epoch", "lr", "loss"])?;
    for p in &trace.points {
        writer.write_record([
            p.step.to_string(),
            p.epoch.to_string(),
            p.lr.to_string(),
            p.loss.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fewshot_core::class_distribution;

    fn file(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn jsonl_with_index_and_text_labels() {
        let f = file(
            "{\"id\":\"a\",\"text\":\"The Horn is  ON\",\"label\":0}\n\n{\"id\":\"b\",\"text\":\"if x then y\",\"label\":1}\n{\"id\":\"c\",\"text\":\"z\",\"label\":\"It is always the case that If EXPR holds, then EXPR holds after at most DURATION\"}\n",
            ".jsonl",
        );
        let ds = load_dataset(f.path(), DatasetFormat::Jsonl, &PatternClass::defaults()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.requirements()[0].text, "the horn is on");
        assert_eq!(class_distribution(&ds), [1, 1, 1]);
    }

    #[test]
    fn unknown_label_names_line_and_valid_labels() {
        let f = file("{\"id\":\"a\",\"text\":\"t\",\"label\":0}\n{\"id\":\"b\",\"text\":\"t\",\"label\":\"7\"}\n", ".jsonl");
        let err =
            load_dataset(f.path(), DatasetFormat::Jsonl, &PatternClass::defaults()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Record { line: 2, .. }), "{msg}");
        assert!(
            msg.contains("unknown label")
                && msg.contains("0 (\"it is always the case that expr holds\")"),
            "{msg}"
        );
    }

    #[test]
    fn malformed_record_names_line() {
        let f = file(
            "{\"id\":\"a\",\"text\":\"t\",\"label\":0}\n{\"id\":\"b\"\n",
            ".jsonl",
        );
        let err =
            load_dataset(f.path(), DatasetFormat::Jsonl, &PatternClass::defaults()).unwrap_err();
        assert!(matches!(err, Error::Record { line: 2, .. }));
    }

    #[test]
    fn csv_dataset() {
        let f = file("id,text,label\na,\"If A, then B\",1\nb,c,0\n", ".csv");
        assert_eq!(DatasetFormat::from_path(f.path()), DatasetFormat::Csv);
        let ds = load_dataset(f.path(), DatasetFormat::Csv, &PatternClass::defaults()).unwrap();
        assert_eq!(ds.requirements()[0].text, "if a, then b");
        let bad = file("id,text,label\na,b,9\n", ".csv");
        assert!(matches!(
            load_dataset(bad.path(), DatasetFormat::Csv, &PatternClass::defaults()),
            Err(Error::Record { line: 2, .. })
        ));
    }

    #[test]
    fn thesaurus_file_rules() {
        assert_eq!(
            load_thesaurus(file(r#"{"on": ["active"]}"#, ".json").path())
                .unwrap()
                .len(),
            1
        );
        let t =
            load_thesaurus(file(r#"{"on": ["on", "active"], "off": []}"#, ".json").path()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.synonyms("on").unwrap(), ["active"]);
        assert!(matches!(
            load_thesaurus(file(r#"{"on": ["a", 3]}"#, ".json").path()),
            Err(Error::Record { .. })
        ));
        let err = load_thesaurus(file("{\"on\": [\n", ".json").path()).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn bundled_files_load() {
        let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
        let classes = load_patterns(&data.join("patterns.json")).unwrap();
        assert_eq!(classes, PatternClass::defaults());
        assert!(load_thesaurus(&data.join("thesaurus.json")).unwrap().len() > 50);
    }

    #[test]
    fn profiles_by_name_or_file() {
        assert_eq!(
            load_train_profile("adamw-2e-5").unwrap().learning_rate,
            2e-5
        );
        let f = file(
            r#"{"epochs": 3, "optimizer": "adafactor", "learning_rate": 0.01, "warmup": "none"}"#,
            ".json",
        );
        let cfg = load_train_profile(f.path().to_str().unwrap()).unwrap();
        assert_eq!((cfg.epochs, cfg.batch_size), (3, 16));
        let bad = file(
            r#"{"epochs": 0, "optimizer": "adamw", "learning_rate": 0.01, "warmup": "none"}"#,
            ".json",
        );
        assert!(load_train_profile(bad.path().to_str().unwrap()).is_err());
    }
}
