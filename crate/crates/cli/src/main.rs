use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use marginkit::data::{gen_synthetic, load_csv, load_idx, save_csv, LabeledDataset, SyntheticSpec};
use marginkit::harness::{
    compare_runs, evaluate, export_embeddings, min_norm_pairwise_margin, read_metrics, write_comparison,
    write_metrics, Checkpoint, DataSource, ExperimentConfig, RunSummary, Trainer,
};
use marginkit::{Error, Result};

#[derive(Parser)]
#[command(name = "marginkit", version, about = "Margin-regularized training and margin-based batch selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a TOML spec and write it as CSV.
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write a header row (f0, f1, ..., label).
        #[arg(long)]
        header: bool,
    },
    /// Train from an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Stop after this many total steps and leave the run resumable.
        #[arg(long)]
        until: Option<u64>,
        /// Continue from a checkpoint written by an earlier call.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Report error rate and confusion matrix of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Export penultimate-layer features with labels and predictions.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run two configs on paired seeds and write one row per seed.
    Compare {
        #[arg(long)]
        config_a: PathBuf,
        #[arg(long)]
        config_b: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// A CSV file, or an IDX image file followed by an IDX label file.
    #[arg(long, num_args = 1..=2, required = true)]
    data: Vec<PathBuf>,
    /// The CSV file has a header row.
    #[arg(long)]
    header: bool,
}

impl DataArgs {
    fn load(&self) -> Result<LabeledDataset> {
        match self.data.as_slice() {
            [csv] => load_csv(csv, self.header),
            [images, labels] => load_idx(images, labels),
            _ => unreachable!("clap limits --data to one or two paths"),
        }
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Makes relative data paths absolute with respect to the config file.
fn anchor_paths(cfg: &mut ExperimentConfig, dir: &Path) {
    match &mut cfg.data.source {
        DataSource::Synthetic { .. } => {}
        DataSource::Csv { path, .. } => *path = dir.join(&*path),
        DataSource::Idx { images, labels } => {
            *images = dir.join(&*images);
            *labels = dir.join(&*labels);
        }
    }
}

fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    anchor_paths(&mut cfg, &config_dir(path));
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_data(spec: &Path, out: &Path, header: bool) -> Result<()> {
    let text = std::fs::read_to_string(spec).map_err(|e| Error::io(spec, e))?;
    let spec: SyntheticSpec =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", spec.display())))?;
    let ds = gen_synthetic(&spec)?;
    save_csv(&ds, out, header)?;
    println!("wrote {} samples, {} features, {} classes", ds.len(), ds.dim(), ds.num_classes());
    Ok(())
}

fn train(config: &Path, out_dir: &Path, until: Option<u64>, resume: Option<&Path>) -> Result<()> {
    let exp = load_experiment(config)?;
    let data = exp.data.prepare(Path::new(""))?;
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config()? != exp.train {
                return Err(Error::Config(format!(
                    "{} was written by a different [train] section",
                    path.display()
                )));
            }
            Trainer::from_checkpoint(&ck, &data.train, &data.val)?
        }
        None => Trainer::new(exp.train.clone(), &data.train, &data.val)?.with_input_map(data.input_map.clone()),
    };
    create_dir(out_dir)?;
    let metrics = out_dir.join("metrics.csv");
    let records = trainer.run_to(until.unwrap_or(exp.train.total_steps))?;
    write_metrics(&metrics, &records, resume.is_some())?;
    trainer.checkpoint()?.save(out_dir.join("checkpoint.bin"))?;

    let all = read_metrics(&metrics)?;
    let run_id = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    let summary = RunSummary::from_records(&run_id, &exp.train, &all)?;
    write_text(&out_dir.join("summary.toml"), &summary.to_toml()?)?;
    let state = if trainer.is_finished() { "finished" } else { "paused" };
    println!(
        "{state} at step {}: train accuracy {:.4}, validation accuracy {:.4}",
        trainer.step(),
        summary.final_train_accuracy,
        summary.final_val_accuracy
    );
    Ok(())
}

/// Dataset mapped through the checkpoint's stored input standardization.
fn load_for_checkpoint(checkpoint: &Path, data: &DataArgs) -> Result<(Checkpoint, LabeledDataset)> {
    let ck = Checkpoint::load(checkpoint)?;
    let raw = data.load()?;
    let ds = match &ck.input_map {
        Some(map) => map.apply(&raw)?,
        None => raw,
    };
    Ok((ck, ds))
}

fn eval(checkpoint: &Path, data: &DataArgs) -> Result<()> {
    let (ck, ds) = load_for_checkpoint(checkpoint, data)?;
    let ev = evaluate(&ck.model, &ds)?;
    println!("samples {}", ds.len());
    println!("error {}", ev.error);
    println!("accuracy {}", 1.0 - ev.error);
    println!("min_norm_pairwise_margin {}", min_norm_pairwise_margin(&ck.model, &ds)?);
    println!("confusion (rows true, columns predicted)");
    for row in &ev.confusion {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        println!("{}", cells.join(","));
    }
    Ok(())
}

fn embed(checkpoint: &Path, data: &DataArgs, out: &Path) -> Result<()> {
    let (ck, ds) = load_for_checkpoint(checkpoint, data)?;
    let e = export_embeddings(&ck.model, &ds, out)?;
    println!("wrote {} embeddings of dimension {}", ds.len(), e.features.cols());
    Ok(())
}

fn compare(a: &Path, b: &Path, seeds: u64, out: &Path) -> Result<()> {
    let (ca, cb) = (load_experiment(a)?, load_experiment(b)?);
    let cmp = compare_runs(&ca, &cb, Path::new(""), seeds)?;
    write_comparison(out, &cmp)?;
    for (name, w) in [
        ("accuracy", cmp.accuracy_wins),
        ("margin", cmp.margin_wins),
        ("steps_to_target", cmp.steps_wins),
    ] {
        println!("{name}: a {} b {} tie {}", w.a, w.b, w.tie);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { spec, out, header } => gen_data(&spec, &out, header),
        Command::Train {
            config,
            out_dir,
            until,
            resume,
        } => train(&config, &out_dir, until, resume.as_deref()),
        Command::Eval { checkpoint, data } => eval(&checkpoint, &data),
        Command::Embed { checkpoint, data, out } => embed(&checkpoint, &data, &out),
        Command::Compare {
            config_a,
            config_b,
            seeds,
            out,
        } => compare(&config_a, &config_b, seeds, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error: usage: {}", message.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
