use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use sduda::dataset::{generate_domain, read_dataset, write_dataset, Domain, DomainSpec, GenerateConfig};
use sduda::distill::LossSpace;
use sduda::metrics::{format_csv, parse_csv, Metric, Split};
use sduda::network::{EncoderConfig, STUDENT_PREFIX};
use sduda::pipeline::{predict, run_full, PipelineConfig, TrainData};
use sduda::tensor::{read_checkpoint, write_checkpoint};

mod plot;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sduda::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use sduda::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Config(_)) => 1,
            CliError::Core(E::Numeric(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "sduda", version, about = "Point-cloud domain adaptation: generate data, train, evaluate, export curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural dataset (DIR/train and DIR/test).
    GenData(GenData),
    /// Run the two-step adaptation pipeline.
    Train(Train),
    /// Report per-class and overall accuracy of a checkpoint.
    Eval(Eval),
    /// Align target-accuracy curves of several runs into one CSV.
    Plot(Plot),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 400)]
    per_class: usize,
    #[arg(long, default_value_t = 100)]
    test_per_class: usize,
    #[arg(long, default_value_t = 256)]
    points: usize,
    #[arg(long, default_value = "source")]
    domain: Domain,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Train {
    /// Labeled source dataset directory.
    #[arg(long)]
    source: PathBuf,
    /// Target training dataset directory (labels unused for training).
    #[arg(long)]
    target: PathBuf,
    /// Labeled target test set for per-epoch reporting.
    #[arg(long)]
    target_test: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Disable self-distillation in both steps.
    #[arg(long)]
    no_sd: bool,
    /// Disable GCN pseudo-label refinement.
    #[arg(long)]
    no_ref: bool,
    /// Disable self-training (stop after step 1).
    #[arg(long)]
    no_st: bool,
    #[arg(long)]
    loss_space: Option<LossSpace>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    batch: usize,
}

#[derive(Args)]
struct Plot {
    /// `NAME=metrics.csv`, repeatable.
    #[arg(long = "run", value_name = "NAME=PATH", required = true)]
    runs: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "target_test")]
    split: Split,
    #[arg(long, default_value = "accuracy")]
    metric: Metric,
}

fn ensure_empty(dir: &Path, force: bool) -> Result<()> {
    let non_empty = dir.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false);
    if non_empty && !force {
        return Err(CliError::Usage(format!(
            "{} exists and is not empty; pass --force to write into it",
            dir.display()
        )));
    }
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| sduda::Error::io(path, e).into())
}

fn gen_data(a: GenData) -> Result<()> {
    ensure_empty(&a.out, a.force)?;
    let cfg = GenerateConfig {
        num_classes: a.classes,
        per_class_train: a.per_class,
        per_class_test: a.test_per_class,
        points: a.points,
        seed: a.seed,
        domain: DomainSpec::for_role(a.domain),
    };
    let data = generate_domain(&cfg)?;
    write_dataset(&a.out.join("train"), &data.train)?;
    if !data.test.is_empty() {
        write_dataset(&a.out.join("test"), &data.test)?;
    }
    info!("wrote {} train and {} test samples to {}", data.train.len(), data.test.len(), a.out.display());
    Ok(())
}

fn resolve_config(a: &Train) -> Result<PipelineConfig> {
    let mut entries: Vec<(String, String)> = Vec::new();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| sduda::Error::io(path, e))?;
        entries.extend(sduda::config::parse_entries(&text)?.into_iter().map(|(k, v, _)| (k, v)));
    }
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        entries.retain(|(key, _)| key != k.trim());
        entries.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut cfg = PipelineConfig::default();
    cfg.apply(&entries)?;
    if a.no_sd {
        cfg.toggles.sd_step1 = false;
        cfg.toggles.sd_step2 = false;
    }
    if a.no_ref {
        cfg.toggles.refinement = false;
    }
    if a.no_st {
        cfg.toggles.self_training = false;
    }
    if let Some(ls) = a.loss_space {
        cfg.distill.loss_space = ls;
    }
    if let Ok(s) = std::env::var("SDUDA_SEED") {
        cfg.seed = s
            .parse()
            .map_err(|_| CliError::Usage(format!("SDUDA_SEED must be an unsigned integer, got {s:?}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: Train) -> Result<()> {
    let cfg = resolve_config(&a)?;
    ensure_empty(&a.out, a.force)?;
    std::fs::create_dir_all(&a.out).map_err(|e| sduda::Error::io(&a.out, e))?;
    let resolved = cfg.to_config_text();
    info!("resolved config:\n{resolved}");
    write(&a.out.join("config.resolved"), &resolved)?;
    write(&a.out.join("seed.txt"), format!("{}\n", cfg.seed))?;

    let k = cfg.encoder.num_classes();
    let data = TrainData {
        source: read_dataset(&a.source, k)?,
        target: read_dataset(&a.target, k)?,
        target_test: match &a.target_test {
            Some(dir) => read_dataset(dir, k)?,
            None => Vec::new(),
        },
    };
    let out = run_full(&cfg, &data)?;
    write(&a.out.join("metrics.csv"), format_csv(&out.metrics))?;
    write_checkpoint(&a.out.join("model.ckpt"), &out.inference)?;
    let mut summary = format!("init_pseudo_accuracy\t{}\n", out.init_pseudo_accuracy);
    for r in &out.rounds {
        summary.push_str(&format!(
            "round\t{}\ttheta\t{}\tpseudo_before\t{}\tpseudo_after\t{}\tconfident\t{}\n",
            r.round, r.theta, r.pseudo_acc_before, r.pseudo_acc_after, r.confident
        ));
    }
    if !data.target_test.is_empty() {
        summary.push_str(&format!("target_test_accuracy\t{}\n", out.target_test_accuracy));
        println!("target test accuracy {:.4}", out.target_test_accuracy);
    }
    write(&a.out.join("summary.tsv"), summary)?;
    Ok(())
}

fn eval(a: Eval) -> Result<()> {
    let all = read_checkpoint(&a.checkpoint)?;
    let mut student = all.with_prefix_stripped(STUDENT_PREFIX);
    if student.is_empty() {
        student = all.clone();
    }
    let ignored: Vec<&str> = all
        .names()
        .filter(|n| {
            let local = n.strip_prefix(STUDENT_PREFIX).unwrap_or(n);
            !(local.starts_with("encoder.") || local.starts_with("head."))
        })
        .collect();
    if !ignored.is_empty() {
        warn!("ignoring non-inference parameters: {}", ignored.join(", "));
    }
    let keep: Vec<String> = student
        .names()
        .filter(|n| !(n.starts_with("encoder.") || n.starts_with("head.")))
        .map(String::from)
        .collect();
    for n in keep {
        student.remove(&n);
    }
    let enc = EncoderConfig::from_params(&student)?;
    let k = enc.num_classes();
    let samples = read_dataset(&a.data, k)?;
    if samples.is_empty() {
        return Err(sduda::Error::Validation(format!("{} has no samples", a.data.display())).into());
    }
    let pred = predict(&student, &samples, a.batch)?;
    let mut correct = vec![0usize; k];
    let mut total = vec![0usize; k];
    for (p, s) in pred.iter().zip(&samples) {
        total[s.label] += 1;
        correct[s.label] += usize::from(*p == s.label);
    }
    let mut report = String::from("class\tcorrect\ttotal\taccuracy\n");
    for c in 0..k {
        let acc = if total[c] == 0 { f64::NAN } else { correct[c] as f64 / total[c] as f64 };
        report.push_str(&format!("{c}\t{}\t{}\t{acc}\n", correct[c], total[c]));
    }
    let (c, t) = (correct.iter().sum::<usize>(), samples.len());
    report.push_str(&format!("overall\t{c}\t{t}\t{}\n", c as f64 / t as f64));
    print!("{report}");
    if let Some(path) = &a.out {
        write(path, &report)?;
    }
    Ok(())
}

fn plot_cmd(a: Plot) -> Result<()> {
    let mut runs = Vec::with_capacity(a.runs.len());
    for r in &a.runs {
        let (name, path) = r
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--run expects NAME=PATH, got {r:?}")))?;
        let path = PathBuf::from(path);
        let text = std::fs::read_to_string(&path).map_err(|e| sduda::Error::io(&path, e))?;
        let records = parse_csv(&text)?;
        let series = plot::select(&records, a.split, a.metric);
        if series.is_empty() {
            return Err(sduda::Error::Validation(format!(
                "{} has no {} {} rows",
                path.display(),
                a.split,
                a.metric
            ))
            .into());
        }
        runs.push((name.to_string(), series));
    }
    let csv = plot::align(&runs);
    match &a.out {
        Some(path) => write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Plot(a) => plot_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
