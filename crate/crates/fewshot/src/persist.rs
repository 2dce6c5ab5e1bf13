//! Run directory layout.
//!
//! ```text
//! <out>/manifest.json     config, its hash, timestamps, per-cell status
//! <out>/metrics.json      per-cell metrics and aggregates; no timestamps
//! <out>/table.md          aggregate table over each cell's own test set
//! <out>/table.csv         same, full precision
//! <out>/table_common.md   aggregates over the test set shared across shots
//! <out>/cells/<strategy>-k<k>-s<seed>/
//!     predictions.jsonl   {id, gold, predicted, scores, fallback_used}
//!     loss.csv            step,epoch,lr,loss
//!     split.json          train ids (seeds and variants) and test ids
//!     augmentation.jsonl  {parent_id, produced, requested, shortfall}
//! ```
//!
//! Everything except `manifest.json` is a pure function of the config and
//! inputs, so two runs of the same config produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use fewshot_core::metrics::{AggregateReport, MetricReport};
use serde::{Deserialize, Serialize};

use crate::formats::{write_jsonl, write_loss_trace};
use crate::report::{render_csv, render_markdown};
use crate::runner::{CellKey, CellOutcome, ExperimentConfig, RunRecord};
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.json";
pub const TABLE_MD: &str = "table.md";
pub const TABLE_CSV: &str = "table.csv";
pub const TABLE_COMMON_MD: &str = "table_common.md";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    #[serde(flatten)]
    pub key: CellKey,
    pub dir: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
    pub cells: Vec<ManifestCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub cells: Vec<MetricReport>,
    pub common_cells: Vec<MetricReport>,
    pub aggregates: Vec<AggregateReport>,
    pub common_aggregates: Vec<AggregateReport>,
    pub failed: Vec<CellKey>,
}

impl MetricsFile {
    pub fn from_run(run: &RunRecord) -> Self {
        MetricsFile {
            config_hash: run.config_hash.clone(),
            cells: run.outcomes().map(|o| o.metrics.clone()).collect(),
            common_cells: run.outcomes().map(|o| o.common_metrics.clone()).collect(),
            aggregates: run.aggregates(),
            common_aggregates: run.common_aggregates(),
            failed: run.failed().map(|(k, _)| *k).collect(),
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(Error::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    text.push('\n');
    write_file(path, text)
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(Error::io(path))
}

#[derive(Serialize)]
struct SplitFile<'a> {
    train_ids: &'a [String],
    test_ids: &'a [String],
}

/// Writes one cell's artifacts into `dir`, creating it.
pub fn write_cell(dir: &Path, outcome: &CellOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let path = dir.join("predictions.jsonl");
    write_jsonl(create(&path)?, &outcome.predictions).map_err(Error::io(&path))?;
    write_loss_trace(create(&dir.join("loss.csv"))?, &outcome.loss)?;
    write_json(
        &dir.join("split.json"),
        &SplitFile {
            train_ids: &outcome.train_ids,
            test_ids: &outcome.test_ids,
        },
    )?;
    let path = dir.join("augmentation.jsonl");
    write_jsonl(create(&path)?, &outcome.augmentation).map_err(Error::io(&path))?;
    Ok(())
}

pub fn persist_run(run: &RunRecord, out: &Path) -> Result<()> {
    let cells_dir = out.join("cells");
    fs::create_dir_all(&cells_dir).map_err(Error::io(&cells_dir))?;
    let mut manifest_cells = Vec::with_capacity(run.cells.len());
    for cell in &run.cells {
        let dir = format!("cells/{}", cell.key.dir_name());
        if let Ok(outcome) = &cell.outcome {
            write_cell(&out.join(&dir), outcome)?;
        }
        manifest_cells.push(ManifestCell {
            key: cell.key,
            dir,
            ok: cell.outcome.is_ok(),
            error: cell.outcome.as_ref().err().cloned(),
            elapsed_ms: cell.elapsed_ms,
        });
    }
    let metrics = MetricsFile::from_run(run);
    write_json(&out.join(METRICS), &metrics)?;
    write_file(&out.join(TABLE_MD), render_markdown(&metrics.aggregates))?;
    write_file(&out.join(TABLE_CSV), render_csv(&metrics.aggregates)?)?;
    write_file(
        &out.join(TABLE_COMMON_MD),
        render_markdown(&metrics.common_aggregates),
    )?;
    let manifest = Manifest {
        config_hash: run.config_hash.clone(),
        config: run.config.clone(),
        started_at: run.started_at,
        finished_at: run.finished_at,
        cells: manifest_cells,
    };
    write_json(&out.join(MANIFEST), &manifest)
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub metrics: MetricsFile,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let metrics: MetricsFile = read_json(&dir.join(METRICS))?;
    if manifest.config_hash != metrics.config_hash {
        return Err(Error::Config(format!(
            "{}: manifest and metrics come from different runs",
            dir.display()
        )));
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        metrics,
    })
}
