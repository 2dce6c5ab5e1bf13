use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use fewshot::formats::{
    write_jsonl, write_loss_trace, write_requirements_jsonl, AugmentationSummary,
};
use fewshot::model_io::{load_reference, save_reference};
use fewshot::persist::{load_run, persist_run, TABLE_CSV, TABLE_MD};
use fewshot::report::{render_csv, render_markdown};
use fewshot::runner::{
    evaluate, prepare_cell, run_experiment, score, BackendSpec, CellKey, ExperimentConfig, Inputs,
};
use fewshot_core::backend::ReferenceBackend;
use fewshot_core::strategies::Strategy;
use fewshot_core::{
    augment, class_distribution, sample_few_shot, AugmentationConfig, Backend, TrainConfig,
    Trainable,
};

/// Few-shot requirement pattern classification experiments.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the inputs and print class counts and split sizes.
    Prepare {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Write augmented variants of the training seeds of one split, or of
    /// every seed when --k is absent.
    Augment {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one cell with the reference backend and save the model.
    Train {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model on the test set of one cell.
    Evaluate {
        #[command(flatten)]
        cell: CellArgs,
        /// Saved model; defaults to <out>/model.bin.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full strategy × shots × seeds matrix.
    Run {
        #[command(flatten)]
        common: ConfigArgs,
        /// Restrict to these strategies (repeatable).
        #[arg(long)]
        strategy: Vec<Strategy>,
        /// Replace the shot counts (repeatable).
        #[arg(long)]
        k: Vec<usize>,
        /// Replace the seeds (repeatable).
        #[arg(long)]
        seed: Vec<u64>,
        /// Output directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Print the result table of a finished run.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// Print CSV instead of Markdown.
        #[arg(long)]
        csv: bool,
        /// Use the test set shared by all shot counts.
        #[arg(long)]
        common: bool,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct CellArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    strategy: Strategy,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
}

impl CellArgs {
    fn key(&self) -> CellKey {
        CellKey {
            strategy: self.strategy,
            k: self.k,
            rng_seed: self.seed,
        }
    }
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn failed(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn load(args: &ConfigArgs) -> Result<(ExperimentConfig, Inputs), Failure> {
    let cfg = ExperimentConfig::load(&args.config).map_err(invalid)?;
    let inputs = Inputs::load(&cfg).map_err(invalid)?;
    Ok((cfg, inputs))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure { code, error }) => {
            eprintln!("error: {error}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Prepare { common } => prepare(&common),
        Command::Augment {
            common,
            k,
            seed,
            out,
        } => augment_cmd(&common, k, seed, &out),
        Command::Train { cell, out } => train(&cell, &out),
        Command::Evaluate { cell, model, out } => evaluate_cmd(&cell, model.as_deref(), &out),
        Command::Run {
            common,
            strategy,
            k,
            seed,
            out,
            jobs,
        } => run(&common, strategy, k, seed, out, jobs),
        Command::Report { out, csv, common } => report(&out, csv, common),
    }
}

fn prepare(args: &ConfigArgs) -> Result<ExitCode, Failure> {
    let (cfg, inputs) = load(args)?;
    let counts = class_distribution(&inputs.dataset);
    println!(
        "{} requirements, config {}",
        inputs.dataset.len(),
        cfg.hash()
    );
    for (class, n) in inputs.classes().iter().zip(&counts) {
        println!("  class {} ({n}): {}", class.index, class.text);
    }
    for &k in &cfg.shot_counts {
        for &seed in &cfg.rng_seeds {
            let split = sample_few_shot(&inputs.dataset, k, seed).map_err(invalid)?;
            println!(
                "  k={k} seed={seed}: train {} test {}",
                split.train_len(),
                split.test_ids.len()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn augment_cmd(
    args: &ConfigArgs,
    k: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<ExitCode, Failure> {
    let (cfg, inputs) = load(args)?;
    let thesaurus = inputs
        .thesaurus
        .as_ref()
        .ok_or_else(|| invalid(anyhow!("the config has augmentation off")))?;
    let seeds = match k {
        Some(k) => {
            let split = sample_few_shot(&inputs.dataset, k, seed).map_err(invalid)?;
            inputs.dataset.select(split.all_train_ids())
        }
        None => inputs
            .dataset
            .requirements()
            .iter()
            .filter(|r| r.is_seed())
            .collect(),
    };
    let aug_cfg = AugmentationConfig {
        rng_seed: seed,
        ..cfg.augmentation.clone()
    };
    let mut variants = Vec::new();
    let mut report = Vec::new();
    for req in seeds {
        let outcome = augment(req, thesaurus, &aug_cfg).map_err(failed)?;
        report.push(AugmentationSummary::new(&req.id, &outcome));
        variants.extend(outcome.variants);
    }
    fs::create_dir_all(out).map_err(|e| failed(anyhow!("{}: {e}", out.display())))?;
    let path = out.join("augmented.jsonl");
    write_requirements_jsonl(fs::File::create(&path).map_err(failed)?, &variants)
        .map_err(failed)?;
    let path = out.join("augmentation_report.jsonl");
    write_jsonl(fs::File::create(&path).map_err(failed)?, &report).map_err(failed)?;
    let shortfall: usize = report.iter().map(|r| r.shortfall).sum();
    println!(
        "{} variants from {} seeds, total shortfall {shortfall}",
        variants.len(),
        report.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn require_reference(cfg: &ExperimentConfig) -> Result<(), Failure> {
    match &cfg.backend {
        BackendSpec::Reference => Ok(()),
        other => Err(invalid(anyhow!(
            "single-cell commands need the reference backend, config names {other}"
        ))),
    }
}

fn train(cell: &CellArgs, out: &Path) -> Result<ExitCode, Failure> {
    let (cfg, inputs) = load(&cell.common)?;
    require_reference(&cfg)?;
    let key = cell.key();
    let profile = cfg.profile(key.strategy).map_err(invalid)?;
    let prepared = prepare_cell(&cfg, &inputs, key).map_err(invalid)?;
    let mut backend = ReferenceBackend::new(cfg.reference.clone(), inputs.classes(), key.rng_seed)
        .map_err(invalid)?;
    let profile = TrainConfig {
        init_seed: key.rng_seed,
        ..profile
    };
    let trace = backend
        .train(&prepared.instances, &profile)
        .map_err(failed)?;
    fs::create_dir_all(out).map_err(|e| failed(anyhow!("{}: {e}", out.display())))?;
    save_reference(&out.join("model.bin"), &backend, inputs.classes()).map_err(failed)?;
    let path = out.join("loss.csv");
    write_loss_trace(fs::File::create(&path).map_err(failed)?, &trace).map_err(failed)?;
    let split = serde_json::json!({
        "train_ids": prepared.train.iter().map(|r| &r.id).collect::<Vec<_>>(),
        "test_ids": prepared.split.test_ids,
    });
    fs::write(
        out.join("split.json"),
        serde_json::to_string_pretty(&split).map_err(failed)?,
    )
    .map_err(failed)?;
    let means = trace.epoch_means();
    println!(
        "{key}: {} instances, epoch losses {means:?}",
        prepared.instances.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn evaluate_cmd(cell: &CellArgs, model: Option<&Path>, out: &Path) -> Result<ExitCode, Failure> {
    let (cfg, inputs) = load(&cell.common)?;
    let key = cell.key();
    let model_path = model
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join("model.bin"));
    let (backend, classes) = load_reference(&model_path).map_err(invalid)?;
    if classes != inputs.classes() {
        return Err(invalid(anyhow!(
            "{} was trained on a different pattern set",
            model_path.display()
        )));
    }
    let split = sample_few_shot(&inputs.dataset, key.k, key.rng_seed).map_err(invalid)?;
    let predictions = evaluate(
        key.strategy,
        &backend as &dyn Backend,
        &inputs.dataset,
        &split.test_ids,
        &cfg.predict,
    )
    .map_err(failed)?;
    let n = classes.len();
    let metrics = score(key, &predictions, n, None).map_err(failed)?;
    let largest = cfg.shot_counts.last().copied().unwrap_or(key.k).max(key.k);
    let common_split = sample_few_shot(&inputs.dataset, largest, key.rng_seed).map_err(invalid)?;
    let common: std::collections::HashSet<&str> =
        common_split.test_ids.iter().map(String::as_str).collect();
    let common_metrics = score(key, &predictions, n, Some(&common)).map_err(failed)?;
    fs::create_dir_all(out).map_err(|e| failed(anyhow!("{}: {e}", out.display())))?;
    let path = out.join("predictions.jsonl");
    write_jsonl(fs::File::create(&path).map_err(failed)?, &predictions).map_err(failed)?;
    let path = out.join("metrics.json");
    let report = serde_json::json!({ "cell": metrics, "common": common_metrics });
    fs::write(
        &path,
        serde_json::to_string_pretty(&report).map_err(failed)?,
    )
    .map_err(failed)?;
    println!(
        "{key}: macro F1 {:.2}, weighted F1 {:.2}, accuracy {:.2}",
        metrics.macro_f1, metrics.weighted_f1, metrics.accuracy
    );
    Ok(ExitCode::SUCCESS)
}

fn run(
    args: &ConfigArgs,
    strategies: Vec<Strategy>,
    shots: Vec<usize>,
    seeds: Vec<u64>,
    out: Option<PathBuf>,
    jobs: usize,
) -> Result<ExitCode, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(invalid)?;
    if !strategies.is_empty() {
        cfg.strategies = strategies;
    }
    if !shots.is_empty() {
        cfg.shot_counts = shots;
    }
    if !seeds.is_empty() {
        cfg.rng_seeds = seeds;
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    let inputs = Inputs::load(&cfg).map_err(invalid)?;
    let record = run_experiment(&cfg, &inputs, jobs).map_err(invalid)?;
    persist_run(&record, &cfg.output_dir).map_err(failed)?;
    print!("{}", render_markdown(&record.aggregates()));
    let failures: Vec<_> = record.failed().collect();
    for (key, error) in &failures {
        eprintln!("cell {key} failed: {error}");
    }
    eprintln!("results in {}", cfg.output_dir.display());
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn report(out: &Path, csv: bool, common: bool) -> Result<ExitCode, Failure> {
    let run = load_run(out).map_err(invalid)?;
    let aggregates = if common {
        &run.metrics.common_aggregates
    } else {
        &run.metrics.aggregates
    };
    if csv {
        print!("{}", render_csv(aggregates).map_err(failed)?);
    } else {
        print!("{}", render_markdown(aggregates));
    }
    if !common {
        for (name, expected) in [
            (TABLE_MD, render_markdown(aggregates)),
            (TABLE_CSV, render_csv(aggregates).map_err(failed)?),
        ] {
            let path = out.join(name);
            match fs::read_to_string(&path) {
                Ok(stored) if stored == expected => {}
                Ok(_) => {
                    return Err(failed(anyhow!(
                        "{} does not match metrics.json",
                        path.display()
                    )))
                }
                Err(_) => eprintln!("note: {} is missing", path.display()),
            }
        }
    }
    if !run.metrics.failed.is_empty() {
        eprintln!("{} cells failed in this run", run.metrics.failed.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
