//! Experiment harness for approximated orthonormal weight normalisation.

mod config;

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use aonkit::experiment::{
    collect_records, compare, compare_to_csv, grad_check_report, ortho_sweep, run_repetitions,
    sweep_to_csv, DatasetSpec, ExperimentConfig, ModeSpec, NetMode,
};
use aonkit::metrics::records_to_csv;
use aonkit::train::{load_checkpoint, save_checkpoint};

use config::{load_config, parse_hidden, resolve, resolve_flag, resolve_with, ConfigMap};

#[derive(Parser)]
#[command(
    name = "aonkit",
    version,
    about = "Train, check and compare approximately-orthonormal weight normalisation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded training repetitions; emit a metrics CSV and per-seed
    /// best-validation checkpoints.
    Train(TrainArgs),
    /// Finite-difference check of the transform and every layer backward.
    Gradcheck(GradcheckArgs),
    /// Approximation-error sweep over Taylor orders on synthetic spectra.
    OrthoSweep(OrthoSweepArgs),
    /// Train several modes and summarise best accuracy and epoch time.
    Compare(CompareArgs),
    /// Freeze a trainable checkpoint into an inference checkpoint.
    Freeze(FreezeArgs),
}

#[derive(Args)]
struct CommonTrainArgs {
    /// Flat key = value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// blobs, spirals, or idx:PATH.
    #[arg(long)]
    dataset: Option<String>,
    /// Taylor order for aon mode.
    #[arg(long)]
    q: Option<usize>,
    /// Orthonormal-penalty coefficient for orthreg mode.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    /// Base seed; repetition k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeded repetitions.
    #[arg(long)]
    seeds: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Weight-decay coefficient on weight matrices.
    #[arg(long = "weight-decay")]
    weight_decay: Option<f64>,
    /// Power-iteration rounds per training step.
    #[arg(long = "power-iterations")]
    power_iterations: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long)]
    hidden: Option<String>,
    /// Normalise the weight before the Taylor product instead of after.
    #[arg(long = "pre-sn")]
    pre_sn: bool,
    /// Output path (directory for train, file for sweep/compare).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// plain, sn, aon, or orthreg.
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    common: CommonTrainArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Weight shape, e.g. 4x6.
    #[arg(long, default_value = "4x6")]
    shape: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt one analytic gradient entry (negative control).
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct OrthoSweepArgs {
    /// Comma-separated Taylor orders.
    #[arg(long = "q-list", default_value = "0,1,2,3,4")]
    q_list: String,
    /// Gram-spectrum sampling range, e.g. 0.5,1.5.
    #[arg(long, default_value = "0.5,1.5")]
    spectrum: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 16)]
    cols: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated mode specs, e.g. aon:2,sn,plain,orthreg.
    #[arg(long, default_value = "plain,sn,aon:2")]
    modes: String,
    #[command(flatten)]
    common: CommonTrainArgs,
}

#[derive(Args)]
struct FreezeArgs {
    /// Trainable checkpoint to freeze.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the frozen checkpoint.
    #[arg(long)]
    output: PathBuf,
}

fn experiment_config(
    mode: NetMode,
    args: &CommonTrainArgs,
    cfg: &ConfigMap,
) -> Result<ExperimentConfig> {
    let defaults = ExperimentConfig::default();
    let dataset_str = resolve(args.dataset.clone(), cfg, "dataset", "spirals".to_string())?;
    let dataset = DatasetSpec::parse(&dataset_str)?;
    let hidden = match resolve(args.hidden.clone(), cfg, "hidden", String::new())? {
        s if s.is_empty() => defaults.hidden.clone(),
        s => parse_hidden(&s)?,
    };
    let out_dir: Option<PathBuf> =
        resolve_with(args.out.clone().map(Some), cfg, "out", None, |s| {
            Ok(Some(PathBuf::from(s)))
        })?;
    Ok(ExperimentConfig {
        mode,
        q: resolve(args.q, cfg, "q", defaults.q)?,
        beta: resolve(args.beta, cfg, "beta", defaults.beta)?,
        pre_sn: resolve_flag(args.pre_sn, cfg, "pre-sn")?,
        dataset,
        hidden,
        epochs: resolve(args.epochs, cfg, "epochs", defaults.epochs)?,
        batch_size: resolve(args.batch_size, cfg, "batch-size", defaults.batch_size)?,
        lr0: resolve(args.lr, cfg, "lr", defaults.lr0)?,
        momentum: resolve(args.momentum, cfg, "momentum", defaults.momentum)?,
        weight_decay: resolve(args.weight_decay, cfg, "weight-decay", defaults.weight_decay)?,
        power_iterations: resolve(
            args.power_iterations,
            cfg,
            "power-iterations",
            defaults.power_iterations,
        )?,
        seed: resolve(args.seed, cfg, "seed", defaults.seed)?,
        reps: resolve(args.seeds, cfg, "seeds", defaults.reps)?,
        out_dir,
    })
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = match &args.common.config {
        Some(path) => load_config(path)?,
        None => ConfigMap::new(),
    };
    let mode = resolve_with(
        args.mode.as_deref().map(NetMode::parse).transpose()?,
        &cfg,
        "mode",
        NetMode::Aon,
        |s| Ok(NetMode::parse(s)?),
    )?;
    let exp = experiment_config(mode, &args.common, &cfg)?;
    let results = run_repetitions(&exp)?;
    let csv = records_to_csv(&collect_records(&results));
    match &exp.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("metrics.csv");
            std::fs::write(&path, &csv)?;
            for r in &results {
                if let Some(ckpt) = &r.checkpoint {
                    eprintln!(
                        "seed {}: best val acc {:.4} at epoch {} -> {}",
                        r.seed,
                        r.best_val_acc,
                        r.best_epoch,
                        ckpt.display()
                    );
                }
            }
            eprintln!("metrics -> {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let (rows, cols) = args
        .shape
        .split_once('x')
        .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
        .ok_or_else(|| anyhow!("bad shape '{}', expected ROWSxCOLS", args.shape))?;
    let report = grad_check_report(args.q, rows, cols, args.seed, args.corrupt)?;
    for entry in &report.entries {
        let verdict = if entry.rel_err < report.threshold {
            "PASS"
        } else {
            "FAIL"
        };
        println!("{verdict} {:<40} max rel err {:.3e}", entry.name, entry.rel_err);
    }
    if report.passed() {
        println!("gradcheck: all checks below {:.0e}", report.threshold);
        Ok(())
    } else {
        Err(anyhow!("gradcheck failed"))
    }
}

fn cmd_ortho_sweep(args: OrthoSweepArgs) -> Result<()> {
    let qs: Vec<usize> = args
        .q_list
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| anyhow!("bad q list '{}': {e}", args.q_list))?;
    let (lo, hi) = args
        .spectrum
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)))
        .ok_or_else(|| anyhow!("bad spectrum '{}', expected LO,HI", args.spectrum))?;
    let sweep = ortho_sweep(&qs, lo, hi, args.trials, args.seed, args.rows, args.cols)?;
    emit(&sweep_to_csv(&sweep), args.out.as_ref())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let cfg = match &args.common.config {
        Some(path) => load_config(path)?,
        None => ConfigMap::new(),
    };
    let specs: Vec<ModeSpec> = resolve(Some(args.modes.clone()), &cfg, "modes", String::new())?
        .split(',')
        .map(|s| ModeSpec::parse(s.trim()))
        .collect::<aonkit::Result<_>>()?;
    let base = experiment_config(NetMode::Plain, &args.common, &cfg)?;
    let entries = compare(&base, &specs)?;
    emit(&compare_to_csv(&entries), args.common.out.as_ref())
}

fn cmd_freeze(args: FreezeArgs) -> Result<()> {
    let mut model = load_checkpoint::<f64>(&args.input)
        .with_context(|| format!("loading {}", args.input.display()))?;
    model.freeze()?;
    save_checkpoint(&model, &args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!(
        "froze {} -> {}",
        args.input.display(),
        args.output.display()
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::OrthoSweep(args) => cmd_ortho_sweep(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Freeze(args) => cmd_freeze(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
