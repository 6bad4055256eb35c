use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ugmcs::dataio::{save_manifest, synth_generate, NoduleSample};
use ugmcs::evalharness::{
    compare_models, complex_validation, crossval, evaluate, hu_distribution_check, score_samples, FoldRecord, HuSource,
    RunReport, DEFAULT_THRESHOLDS,
};
use ugmcs::model::NetState;
use ugmcs::runconfig::RunConfig;
use ugmcs::trainer::{fit, FitSpec, TrainSet};
use ugmcs::{Error, Result};

/// Uncertainty-aware lung nodule segmentation from multiple annotations.
#[derive(Parser)]
#[command(name = "ugmcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-annotator dataset in manifest format.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=4))]
        annotators: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model, on every sample or with one fold held out.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Held-out fold.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Score a checkpoint on a held-out fold or on the whole dataset.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        fold: Option<usize>,
    },
    /// k-fold cross-validation; writes reports/report.json and reports/report.txt.
    Crossval {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Paired t-tests between two reports over shared samples.
    Compare { a: PathBuf, b: PathBuf },
    /// Scores candidates on the samples a baseline segments poorly.
    ComplexVal {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long, required = true)]
        candidate: Vec<PathBuf>,
        /// DSC thresholds in percent.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS)]
        thresholds: Vec<u32>,
    },
    /// Mean HU and density curves of the actual and predicted LC/HC regions.
    HuAnalysis {
        #[command(flatten)]
        run: RunArgs,
        /// Use the ground truth as the prediction.
        #[arg(long, conflicts_with_all = ["checkpoint", "crossval_run"])]
        oracle: bool,
        #[arg(long, conflicts_with = "crossval_run")]
        checkpoint: Option<PathBuf>,
        /// Cross-validation run directory; each sample is predicted by the model that held it out.
        #[arg(long)]
        crossval_run: Option<PathBuf>,
    },
}

/// Config file plus flags overriding its fields.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Fold split seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Initialization and shuffling seed.
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr_max: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Annotation scored by evaluation.
    #[arg(long)]
    annotation: Option<usize>,
    #[arg(long)]
    nsd_tolerance: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            c.dataset = Some(v.clone());
        }
        if let Some(v) = &self.out_dir {
            c.out_dir = Some(v.clone());
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        if let Some(v) = self.train_seed {
            c.train.seed = v;
        }
        if let Some(v) = self.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = self.lr_max {
            c.train.lr_max = v;
        }
        if let Some(v) = self.batch_size {
            c.train.batch_size = v;
        }
        if let Some(v) = self.annotation {
            c.eval.annotation = v;
        }
        if let Some(v) = self.nsd_tolerance {
            c.eval.nsd_tolerance = v;
        }
        Ok(c)
    }
}

fn config_value(c: &RunConfig) -> Result<serde_json::Value> {
    serde_json::to_value(c).map_err(|e| Error::Data(e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

/// Rows for `fold`, or for every sample under fold 0 when no fold is held out.
fn score(state: &NetState, c: &RunConfig, samples: &[NoduleSample], fold: Option<usize>) -> Result<Vec<FoldRecord>> {
    let rows = match fold {
        Some(f) => evaluate(state, samples, &c.split(samples)?, f, &c.eval)?,
        None => score_samples(state, &samples.iter().collect::<Vec<_>>(), &c.eval)?,
    };
    Ok(rows
        .into_iter()
        .map(|metrics| FoldRecord { fold: fold.unwrap_or(0), metrics })
        .collect())
}

fn tag(fold: Option<usize>) -> String {
    fold.map_or_else(|| "all".to_string(), |f| format!("fold{f}"))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { count, annotators, seed, out } => {
            let samples = synth_generate(count, usize::from(annotators), seed)?;
            let p = save_manifest(&samples, &out)?;
            println!("wrote {} samples to {}", samples.len(), p.display());
        }
        Command::Train { run, fold } => {
            let mut c = run.resolve()?;
            if fold.is_some() {
                c.fold = fold;
            }
            c.validate()?;
            let samples = c.load_dataset()?;
            let out = c.out_path()?.to_path_buf();
            c.write_echo()?;
            let split = c.split(&samples)?;
            let set = match c.fold {
                Some(fold) => TrainSet::HoldOut { split: &split, fold },
                None => TrainSet::All,
            };
            let t = tag(c.fold);
            let spec = FitSpec {
                net: &c.net,
                train: &c.train,
                loss: &c.loss,
                eval: &c.eval,
                out_dir: Some(&out),
                tag: &t,
            };
            let outcome = fit(&samples, set, &spec)?;
            let report = RunReport::from_rows(c.seed, config_value(&c)?, score(&outcome.final_state, &c, &samples, c.fold)?)?;
            let reports = out.join("reports");
            report.save(&reports.join(format!("{t}.json")), Some(&reports.join(format!("{t}.txt"))))?;
            if let Some(p) = &outcome.final_path {
                println!("checkpoint {}", p.display());
            }
            print!("{}", report.to_text());
        }
        Command::Eval { run, checkpoint, fold } => {
            let c = run.resolve()?;
            c.validate()?;
            let samples = c.load_dataset()?;
            let expected = run.config.as_ref().map(|_| &c.net);
            let state = NetState::load(&checkpoint, expected)?;
            let report = RunReport::from_rows(c.seed, config_value(&c)?, score(&state, &c, &samples, fold)?)?;
            if let Some(out) = &c.out_dir {
                let reports = out.join("reports");
                let t = format!("eval_{}", tag(fold));
                report.save(&reports.join(format!("{t}.json")), Some(&reports.join(format!("{t}.txt"))))?;
            }
            print!("{}", report.to_text());
        }
        Command::Crossval { run } => {
            let c = run.resolve()?;
            c.validate()?;
            let samples = c.load_dataset()?;
            let out = c.out_path()?.to_path_buf();
            c.write_echo()?;
            let outcome = crossval(&samples, &c.crossval_spec(), Some(&out))?;
            let reports = out.join("reports");
            outcome
                .report
                .save(&reports.join("report.json"), Some(&reports.join("report.txt")))?;
            print!("{}", outcome.report.to_text());
        }
        Command::Compare { a, b } => {
            let cmp = compare_models(&RunReport::load(&a)?, &RunReport::load(&b)?)?;
            print!("{}", cmp.to_text());
        }
        Command::ComplexVal { baseline, candidate, thresholds } => {
            let base = RunReport::load(&baseline)?;
            for path in &candidate {
                let buckets = complex_validation(&base, &RunReport::load(path)?, &thresholds)?;
                println!("candidate {}", path.display());
                for b in &buckets {
                    println!("{}", b.to_text());
                }
            }
        }
        Command::HuAnalysis { run, oracle, checkpoint, crossval_run } => {
            let mut c = run.resolve()?;
            if let Some(dir) = &crossval_run {
                if run.config.is_none() {
                    c = RunConfig::load(&dir.join("config.json"))?;
                    if let Some(d) = &run.dataset {
                        c.dataset = Some(d.clone());
                    }
                }
            }
            c.validate()?;
            let samples = c.load_dataset()?;
            let report = match (oracle, &checkpoint, &crossval_run) {
                (true, _, _) => hu_distribution_check(&samples, HuSource::Oracle)?,
                (_, Some(p), _) => hu_distribution_check(&samples, HuSource::Model(&NetState::load(p, None)?))?,
                (_, _, Some(dir)) => {
                    let split = c.split(&samples)?;
                    let models = (0..c.folds)
                        .map(|f| {
                            let p = dir.join("checkpoints").join(format!("fold{f}")).join("final.json");
                            NetState::load(&p, Some(&c.net))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    hu_distribution_check(&samples, HuSource::Folds { split: &split, models: &models })?
                }
                _ => {
                    return Err(Error::Config(
                        "hu-analysis needs one of --oracle, --checkpoint or --crossval-run".into(),
                    ))
                }
            };
            if let Some(out) = &run.out_dir {
                let dir = out.join("reports");
                write_text(&dir.join("hu.txt"), &report.to_text())?;
                let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
                write_text(&dir.join("hu.json"), &(json + "\n"))?;
                report.write_curves(&dir.join("kde"))?;
            }
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
