//! Experiment orchestration: one cell per (strategy, k, seed), run in
//! parallel, each isolated so a failing cell does not stop the others.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fewshot_core::backend::{LossTrace, ReferenceBackend, ReferenceConfig};
use fewshot_core::metrics::{aggregate, compute_metrics, confusion, AggregateReport, MetricReport};
use fewshot_core::strategies::{
    build_instances, predict, PredictOptions, Strategy, TrainingInstance,
};
use fewshot_core::{
    augment, sample_few_shot, AugmentationConfig, Backend, FewShotSplit, LabeledDataset,
    PatternClass, Requirement, Thesaurus, TrainConfig, Trainable,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::formats::{
    load_dataset, load_patterns, load_thesaurus, load_train_profile, AugmentationSummary,
    DatasetFormat,
};
use crate::{Error, Result};

/// Which backend trains and serves the models.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendSpec {
    /// The built-in hashed-feature backend.
    #[default]
    Reference,
    /// An externally registered backend, passed to [`run_experiment_with`].
    Adapter(String),
}

impl TryFrom<String> for BackendSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.strip_prefix("adapter:") {
            _ if s == "reference" => Ok(BackendSpec::Reference),
            Some(id) if !id.is_empty() => Ok(BackendSpec::Adapter(id.to_string())),
            _ => Err(format!(
                "unknown backend {s:?}; expected \"reference\" or \"adapter:<id>\""
            )),
        }
    }
}

impl From<BackendSpec> for String {
    fn from(spec: BackendSpec) -> String {
        spec.to_string()
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Reference => f.write_str("reference"),
            BackendSpec::Adapter(id) => write!(f, "adapter:{id}"),
        }
    }
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_shot_counts() -> Vec<usize> {
    vec![15, 50]
}

fn default_seeds() -> Vec<u64> {
    vec![13, 42, 2023]
}

fn default_true() -> bool {
    true
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_path: PathBuf,
    /// Inferred from the extension when absent.
    #[serde(default)]
    pub dataset_format: Option<DatasetFormat>,
    pub patterns_path: PathBuf,
    #[serde(default)]
    pub thesaurus_path: Option<PathBuf>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_shot_counts")]
    pub shot_counts: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub rng_seeds: Vec<u64>,
    #[serde(default = "default_true")]
    pub augment: bool,
    /// `rng_seed` is replaced by the cell seed.
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    /// Preset name or profile file per strategy; missing entries use the
    /// strategy default.
    #[serde(default)]
    pub train_profiles: BTreeMap<Strategy, String>,
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub predict: PredictOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the input files.
    pub fn new(dataset_path: impl Into<PathBuf>, patterns_path: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset_path: dataset_path.into(),
            dataset_format: None,
            patterns_path: patterns_path.into(),
            thesaurus_path: None,
            strategies: default_strategies(),
            shot_counts: default_shot_counts(),
            rng_seeds: default_seeds(),
            augment: true,
            augmentation: AugmentationConfig::default(),
            train_profiles: BTreeMap::new(),
            backend: BackendSpec::Reference,
            reference: ReferenceConfig::default(),
            predict: PredictOptions::default(),
            output_dir: default_output_dir(),
        }
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&raw).map_err(Error::json(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.dataset_path);
        rebase(&mut cfg.patterns_path);
        if let Some(t) = cfg.thesaurus_path.as_mut() {
            rebase(t);
        }
        rebase(&mut cfg.output_dir);
        for profile in cfg.train_profiles.values_mut() {
            if TrainConfig::preset(profile).is_none() && Path::new(profile).is_relative() {
                *profile = base.join(&*profile).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.strategies.is_empty() {
            return bad("no strategies");
        }
        if self.strategies.iter().collect::<HashSet<_>>().len() != self.strategies.len() {
            return bad("duplicate strategies");
        }
        if self.shot_counts.is_empty() || self.shot_counts.contains(&0) {
            return bad("shot_counts must be non-empty and positive");
        }
        if self.shot_counts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("shot_counts must be strictly ascending");
        }
        if self.rng_seeds.is_empty() {
            return bad("no rng_seeds");
        }
        if self.rng_seeds.iter().collect::<HashSet<_>>().len() != self.rng_seeds.len() {
            return bad("duplicate rng_seeds");
        }
        if self.augment {
            if self.thesaurus_path.is_none() {
                return bad("augment is on but thesaurus_path is missing");
            }
            self.augmentation.validate()?;
        }
        for strategy in &self.strategies {
            self.profile(*strategy)?;
        }
        Ok(())
    }

    pub fn profile_name(&self, strategy: Strategy) -> &str {
        self.train_profiles
            .get(&strategy)
            .map(String::as_str)
            .unwrap_or(strategy.default_profile())
    }

    pub fn profile(&self, strategy: Strategy) -> Result<TrainConfig> {
        load_train_profile(self.profile_name(strategy))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Cells in run order: strategy, then shot count, then seed.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &k in &self.shot_counts {
                for &rng_seed in &self.rng_seeds {
                    out.push(CellKey {
                        strategy,
                        k,
                        rng_seed,
                    });
                }
            }
        }
        out
    }
}

/// Everything a run reads from disk, loaded and checked once.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub dataset: LabeledDataset,
    pub thesaurus: Option<Thesaurus>,
    pub profiles: BTreeMap<Strategy, TrainConfig>,
}

impl Inputs {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let classes = load_patterns(&cfg.patterns_path)?;
        let format = cfg
            .dataset_format
            .unwrap_or_else(|| DatasetFormat::from_path(&cfg.dataset_path));
        let dataset = load_dataset(&cfg.dataset_path, format, &classes)?;
        let thesaurus = match (&cfg.thesaurus_path, cfg.augment) {
            (Some(path), true) => Some(load_thesaurus(path)?),
            _ => None,
        };
        Self::new(cfg, dataset, thesaurus)
    }

    /// Checks already loaded inputs against the config.
    pub fn new(
        cfg: &ExperimentConfig,
        dataset: LabeledDataset,
        thesaurus: Option<Thesaurus>,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.augment && thesaurus.is_none() {
            return Err(Error::Config(
                "augment is on but no thesaurus was given".into(),
            ));
        }
        let largest = *cfg.shot_counts.last().expect("validated");
        sample_few_shot(&dataset, largest, cfg.rng_seeds[0])
            .map_err(|e| Error::Config(e.to_string()))?;
        let profiles = cfg
            .strategies
            .iter()
            .map(|&s| Ok((s, cfg.profile(s)?)))
            .collect::<Result<_>>()?;
        Ok(Inputs {
            dataset,
            thesaurus,
            profiles,
        })
    }

    pub fn classes(&self) -> &[PatternClass] {
        self.dataset.classes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub strategy: Strategy,
    pub k: usize,
    pub rng_seed: u64,
}

impl CellKey {
    pub fn dir_name(&self) -> String {
        format!("{}-k{}-s{}", self.strategy, self.k, self.rng_seed)
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} k={} seed={}", self.strategy, self.k, self.rng_seed)
    }
}

/// Creates untrained backends; one per cell.
pub trait BackendFactory: Sync {
    fn create(&self, classes: &[PatternClass], init_seed: u64)
        -> Result<Box<dyn Trainable + Send>>;
}

pub struct ReferenceFactory(pub ReferenceConfig);

impl BackendFactory for ReferenceFactory {
    fn create(
        &self,
        classes: &[PatternClass],
        init_seed: u64,
    ) -> Result<Box<dyn Trainable + Send>> {
        Ok(Box::new(ReferenceBackend::new(
            self.0.clone(),
            classes,
            init_seed,
        )?))
    }
}

/// Split, augmented training set and instances of one cell.
#[derive(Debug, Clone)]
pub struct PreparedCell {
    pub key: CellKey,
    pub split: FewShotSplit,
    /// Training seeds followed by their variants.
    pub train: Vec<Requirement>,
    pub augmentation: Vec<AugmentationSummary>,
    pub instances: Vec<TrainingInstance>,
}

pub fn prepare_cell(cfg: &ExperimentConfig, inputs: &Inputs, key: CellKey) -> Result<PreparedCell> {
    let split = sample_few_shot(&inputs.dataset, key.k, key.rng_seed)?;
    let seeds: Vec<Requirement> = inputs
        .dataset
        .select(split.all_train_ids())
        .into_iter()
        .cloned()
        .collect();
    let mut train = seeds.clone();
    let mut augmentation = Vec::new();
    if let (true, Some(thesaurus)) = (cfg.augment, &inputs.thesaurus) {
        let aug_cfg = AugmentationConfig {
            rng_seed: key.rng_seed,
            ..cfg.augmentation.clone()
        };
        for seed in &seeds {
            let outcome = augment(seed, thesaurus, &aug_cfg)?;
            augmentation.push(AugmentationSummary::new(&seed.id, &outcome));
            train.extend(outcome.variants);
        }
    }
    let instances = build_instances(key.strategy, &train, inputs.classes())?;
    Ok(PreparedCell {
        key,
        split,
        train,
        augmentation,
        instances,
    })
}

/// Trains a fresh backend seeded with the cell seed.
pub fn train_cell(
    prepared: &PreparedCell,
    profile: &TrainConfig,
    classes: &[PatternClass],
    factory: &dyn BackendFactory,
) -> Result<(Box<dyn Trainable + Send>, LossTrace)> {
    let mut backend = factory.create(classes, prepared.key.rng_seed)?;
    let profile = TrainConfig {
        init_seed: prepared.key.rng_seed,
        ..profile.clone()
    };
    let trace = backend.train(&prepared.instances, &profile)?;
    Ok((backend, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: usize,
    pub predicted: usize,
    pub scores: Vec<f64>,
    pub fallback_used: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_output: Vec<String>,
}

pub fn evaluate(
    strategy: Strategy,
    backend: &dyn Backend,
    dataset: &LabeledDataset,
    test_ids: &[String],
    options: &PredictOptions,
) -> Result<Vec<PredictionRecord>> {
    dataset
        .select(test_ids.iter().map(String::as_str))
        .into_iter()
        .map(|req| {
            let p = predict(strategy, backend, &req.text, dataset.classes(), options)?;
            Ok(PredictionRecord {
                id: req.id.clone(),
                gold: req.label,
                predicted: p.predicted_class,
                scores: p.scores,
                fallback_used: p.fallback_used,
                raw_output: p.raw_output,
            })
        })
        .collect()
}

/// Metrics over the predictions whose id is in `subset`, or over all.
pub fn score(
    key: CellKey,
    predictions: &[PredictionRecord],
    classes: usize,
    subset: Option<&HashSet<&str>>,
) -> Result<MetricReport> {
    let kept: Vec<&PredictionRecord> = predictions
        .iter()
        .filter(|p| subset.is_none_or(|s| s.contains(p.id.as_str())))
        .collect();
    let golds: Vec<usize> = kept.iter().map(|p| p.gold).collect();
    let preds: Vec<usize> = kept.iter().map(|p| p.predicted).collect();
    let cm = confusion(&golds, &preds, classes)?;
    Ok(compute_metrics(&cm)?.for_cell(key.strategy.name(), key.k, key.rng_seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub key: CellKey,
    /// Over this cell's own test set.
    pub metrics: MetricReport,
    /// Over the test set of the largest shot count for the same seed, which
    /// every cell of that seed shares.
    pub common_metrics: MetricReport,
    pub predictions: Vec<PredictionRecord>,
    pub loss: LossTrace,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub augmentation: Vec<AugmentationSummary>,
}

pub fn run_cell(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    key: CellKey,
    factory: &dyn BackendFactory,
) -> Result<CellOutcome> {
    let prepared = prepare_cell(cfg, inputs, key)?;
    let profile = inputs
        .profiles
        .get(&key.strategy)
        .ok_or_else(|| Error::Config(format!("no training profile for {}", key.strategy)))?;
    let (backend, loss) = train_cell(&prepared, profile, inputs.classes(), factory)?;
    let backend: &dyn Backend = &*backend;
    let predictions = evaluate(
        key.strategy,
        backend,
        &inputs.dataset,
        &prepared.split.test_ids,
        &cfg.predict,
    )?;
    let classes = inputs.classes().len();
    let metrics = score(key, &predictions, classes, None)?;

    let largest = *cfg.shot_counts.last().expect("validated");
    let common_split = sample_few_shot(&inputs.dataset, largest.max(key.k), key.rng_seed)?;
    let common: HashSet<&str> = common_split.test_ids.iter().map(String::as_str).collect();
    let common_metrics = score(key, &predictions, classes, Some(&common))?;

    Ok(CellOutcome {
        key,
        metrics,
        common_metrics,
        predictions,
        loss,
        train_ids: prepared.train.iter().map(|r| r.id.clone()).collect(),
        test_ids: prepared.split.test_ids,
        augmentation: prepared.augmentation,
    })
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub outcome: std::result::Result<CellOutcome, String>,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub started_at: u64,
    pub finished_at: u64,
    pub cells: Vec<CellResult>,
}

impl RunRecord {
    pub fn failed(&self) -> impl Iterator<Item = (&CellKey, &str)> {
        self.cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (&c.key, e.as_str())))
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &CellOutcome> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().ok())
    }

    /// Per-strategy means and deltas over the successful cells.
    pub fn aggregates(&self) -> Vec<AggregateReport> {
        aggregate_by_strategy(&self.config.strategies, self.outcomes().map(|o| &o.metrics))
    }

    pub fn common_aggregates(&self) -> Vec<AggregateReport> {
        aggregate_by_strategy(
            &self.config.strategies,
            self.outcomes().map(|o| &o.common_metrics),
        )
    }
}

/// Aggregates in the given strategy order; strategies without reports are
/// left out.
pub fn aggregate_by_strategy<'a>(
    strategies: &[Strategy],
    reports: impl Iterator<Item = &'a MetricReport>,
) -> Vec<AggregateReport> {
    let mut groups: BTreeMap<&str, Vec<MetricReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry(r.strategy.as_str())
            .or_default()
            .push(r.clone());
    }
    strategies
        .iter()
        .filter_map(|s| groups.get(s.name()).and_then(|g| aggregate(g).ok()))
        .collect()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs the full matrix with the backend named in the config. Adapter
/// backends have to be supplied through [`run_experiment_with`].
pub fn run_experiment(cfg: &ExperimentConfig, inputs: &Inputs, jobs: usize) -> Result<RunRecord> {
    match &cfg.backend {
        BackendSpec::Reference => {
            run_experiment_with(cfg, inputs, &ReferenceFactory(cfg.reference.clone()), jobs)
        }
        BackendSpec::Adapter(id) => Err(Error::Config(format!("no adapter registered for {id:?}"))),
    }
}

/// Runs every cell on `jobs` threads (0 means one per core). Results come
/// back in [`ExperimentConfig::cells`] order whatever the thread count.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    factory: &dyn BackendFactory,
    jobs: usize,
) -> Result<RunRecord> {
    cfg.validate()?;
    let started_at = unix_now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let cells = pool.install(|| {
        cfg.cells()
            .into_par_iter()
            .map(|key| {
                let start = Instant::now();
                let outcome = run_cell(cfg, inputs, key, factory).map_err(|e| e.to_string());
                CellResult {
                    key,
                    outcome,
                    elapsed_ms: start.elapsed().as_millis(),
                }
            })
            .collect()
    });
    Ok(RunRecord {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        started_at,
        finished_at: unix_now(),
        cells,
    })
}
