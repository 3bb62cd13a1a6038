use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use twu_core::dwt2d::PlanCache;
use twu_core::filterbank::{daubechies_lowpass, init_filter_bank, magnitude_response, BankMode, CoefficientFilterBank, FilterBank};
use twu_core::imageio::{is_scan_path, prep_output_path, read_scan, write_scan};
use twu_core::preprocess::preprocess;
use twu_core::trainer::{
    checkpoint, evaluate, experiment_data, run_experiment, summarize, to_csv, ExperimentSpec, PoolKind, SitePolicy,
    StrideKind, SyntheticSpec, TrainConfig,
};

mod check;
mod config;

use config::Settings;

#[derive(Parser)]
#[command(name = "twu", version, about = "Tunable wavelet filter banks, scan preprocessing and toy training")]
struct Cli {
    /// Plain key=value file; flags on the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energy-crop and denoise PGM or raw f32 scans
    Preprocess(PreprocessArgs),
    /// Print filter taps, pr_loss and magnitude response
    Filters(FiltersArgs),
    /// Run the randomized invariant suites
    Check(CheckArgs),
    /// Train the toy network on the synthetic texture task
    Train(TrainArgs),
    /// Score a checkpoint on a synthetic test set
    Eval(EvalArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Scan file or directory of scans
    #[arg(long)]
    input: Option<PathBuf>,
    /// Threshold = mean - a * std of the row energies
    #[arg(long)]
    a: Option<f64>,
    /// haar, db2, db3 or db4
    #[arg(long)]
    wavelet: Option<String>,
    /// CSV of crop rows and thresholds per image
    #[arg(long, value_name = "CSV")]
    emit_report: Option<PathBuf>,
}

#[derive(Args)]
struct FiltersArgs {
    #[arg(long)]
    taps: Option<usize>,
    /// orthlatt or pr-relax
    #[arg(long)]
    mode: Option<BankMode>,
    /// Frequency samples on [0, pi]
    #[arg(long)]
    samples: Option<usize>,
    /// Write the bank in key=value form
    #[arg(long, value_name = "FILE")]
    save: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DataArgs {
    /// Balanced train/validation pool size
    #[arg(long)]
    pool_size: Option<usize>,
    /// Held-out test set size
    #[arg(long)]
    test_size: Option<usize>,
    /// Std of the white noise in every image
    #[arg(long)]
    noise: Option<f64>,
    /// Peak amplitude of the class-1 texture
    #[arg(long)]
    amplitude: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory for metrics.csv and per-fold checkpoints
    #[arg(long)]
    out: Option<PathBuf>,
    /// maxpool, avgpool or wavelet
    #[arg(long)]
    pool: Option<PoolKind>,
    /// stride2-conv or wavelet
    #[arg(long)]
    stride: Option<StrideKind>,
    /// orthlatt or pr-relax
    #[arg(long)]
    mode: Option<BankMode>,
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Seed of the experiment whose test set is scored
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    data: DataArgs,
}

enum Status {
    Ok,
    CheckFailed,
}

fn wavelet_taps(name: &str) -> Result<usize> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "haar" | "db1" => 2,
        "db2" => 4,
        "db3" => 6,
        "db4" => 8,
        other => bail!("unknown wavelet '{other}' (expected haar, db2, db3 or db4)"),
    })
}

fn collect_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)
            .with_context(|| format!("listing {}", input.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.is_file() && is_scan_path(p));
        files.sort();
        if files.is_empty() {
            bail!("no .pgm or .f32 scans in {}", input.display());
        }
        Ok(files)
    } else if input.is_file() {
        Ok(vec![input.to_path_buf()])
    } else {
        bail!("input {} does not exist", input.display())
    }
}

fn cmd_preprocess(mut s: Settings, args: PreprocessArgs) -> Result<Status> {
    let input: PathBuf = match s.pick_opt("input", args.input.map(|p| p.display().to_string()))? {
        Some(p) => p.into(),
        None => bail!("preprocess needs --input"),
    };
    let a = s.pick("a", args.a, 0.5)?;
    let wavelet = s.pick("wavelet", args.wavelet, "db2".to_string())?;
    let report_path = s.pick_opt("emit-report", args.emit_report.map(|p| p.display().to_string()))?;
    s.finish("preprocess")?;

    let filters = CoefficientFilterBank::from_lowpass(daubechies_lowpass(wavelet_taps(&wavelet)?)?.to_vec())?;
    let cache = PlanCache::new();
    let mut report = String::from("file,first_row,last_row,threshold\n");
    for path in collect_inputs(&input)? {
        let scan = read_scan(&path).with_context(|| format!("reading {}", path.display()))?;
        let (out, crop) = preprocess(&scan.raster, a, &filters, &cache).with_context(|| format!("processing {}", path.display()))?;
        let dest = prep_output_path(&path);
        write_scan(&dest, &out, scan.format)?;
        println!(
            "{} -> {} rows {}..{} of {} threshold {}{}",
            path.display(),
            dest.display(),
            crop.first_row,
            crop.last_row,
            scan.raster.height(),
            crop.threshold,
            if crop.degenerate { " (no row above threshold, kept all)" } else { "" }
        );
        report.push_str(&format!("{},{},{},{}\n", path.display(), crop.first_row, crop.last_row, crop.threshold));
    }
    if let Some(p) = report_path {
        fs::write(&p, report).with_context(|| format!("writing {p}"))?;
    }
    Ok(Status::Ok)
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn cmd_filters(mut s: Settings, args: FiltersArgs) -> Result<Status> {
    let taps = s.pick("taps", args.taps, 4)?;
    let mode = s.pick("mode", args.mode, BankMode::Lattice)?;
    let samples = s.pick("samples", args.samples, 9)?;
    let save = s.pick_opt("save", args.save.map(|p| p.display().to_string()))?;
    s.finish("filters")?;
    if samples < 2 {
        bail!("--samples must be at least 2");
    }

    let bank = init_filter_bank(taps, mode)?;
    let f = bank.filters();
    println!("h0={}", list(f.lowpass()));
    println!("h1={}", list(f.highpass()));
    if let FilterBank::Lattice(l) = &bank {
        println!("angles={}", list(l.angles()));
    }
    println!("pr_loss={:e}", f.pr_loss());
    println!("omega,h0_magnitude,h1_magnitude");
    for i in 0..samples {
        let w = std::f64::consts::PI * i as f64 / (samples - 1) as f64;
        println!("{w},{},{}", magnitude_response(f.lowpass(), w), magnitude_response(f.highpass(), w));
    }
    if let Some(p) = save {
        fs::write(&p, bank.to_text()).with_context(|| format!("writing {p}"))?;
    }
    Ok(Status::Ok)
}

fn cmd_check(mut s: Settings, args: CheckArgs) -> Result<Status> {
    let taps = s.pick("taps", args.taps, 8)?;
    let trials = s.pick("trials", args.trials, 100)?;
    let seed = s.seed(args.seed)?;
    s.finish("check")?;
    if taps < 2 || taps % 2 != 0 {
        bail!("--taps must be even and at least 2, got {taps}");
    }
    if trials == 0 {
        bail!("--trials must be positive");
    }

    let results = check::run_suites(taps, trials, seed);
    println!("suite,cases,max_error,tolerance,status");
    for r in &results {
        println!(
            "{},{},{:e},{:e},{}",
            r.suite,
            r.cases,
            r.max_error,
            r.tolerance,
            if r.passed() { "pass" } else { "fail" }
        );
    }
    Ok(if results.iter().all(|r| r.passed()) { Status::Ok } else { Status::CheckFailed })
}

fn experiment_spec(s: &mut Settings, d: DataArgs) -> Result<ExperimentSpec> {
    let defaults = ExperimentSpec::default();
    Ok(ExperimentSpec {
        pool_size: s.pick("pool-size", d.pool_size, defaults.pool_size)?,
        test_size: s.pick("test-size", d.test_size, defaults.test_size)?,
        data: SyntheticSpec {
            noise_std: s.pick("noise", d.noise, defaults.data.noise_std)?,
            texture_amplitude: s.pick("amplitude", d.amplitude, defaults.data.texture_amplitude)?,
            ..defaults.data
        },
    })
}

fn cmd_train(mut s: Settings, args: TrainArgs) -> Result<Status> {
    let out: PathBuf = match s.pick_opt("out", args.out.map(|p| p.display().to_string()))? {
        Some(p) => p.into(),
        None => bail!("train needs --out"),
    };
    let d = TrainConfig::default();
    let policy = SitePolicy {
        pool: s.pick("pool", args.pool, PoolKind::Wavelet)?,
        stride: s.pick("stride", args.stride, StrideKind::Wavelet)?,
        mode: s.pick("mode", args.mode, BankMode::Free)?,
        taps: s.pick("taps", args.taps, 8)?,
    };
    let config = TrainConfig {
        learning_rate: s.pick("lr", args.lr, d.learning_rate)?,
        epochs: s.pick("epochs", args.epochs, d.epochs)?,
        batch_size: s.pick("batch-size", args.batch_size, d.batch_size)?,
        alpha: s.pick("alpha", args.alpha, d.alpha)?,
        folds: s.pick("folds", args.folds, d.folds)?,
        channels: s.pick("channels", args.channels, d.channels)?,
        seed: s.seed(args.seed)?,
    };
    let spec = experiment_spec(&mut s, args.data)?;
    s.finish("train")?;

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let outcome = run_experiment(&config, &spec, policy)?;
    fs::write(out.join("metrics.csv"), to_csv(&outcome.trace))?;
    for fold in &outcome.folds {
        let path = out.join(format!("fold{}.twu", fold.fold));
        checkpoint::save(&fold.model, &path)?;
        let test = fold.test.as_ref().map_or(f64::NAN, |t| t.accuracy);
        println!(
            "fold {}: best epoch {} val {:.4} test {:.4} final pr_loss {:e} -> {}",
            fold.fold,
            fold.best_epoch,
            fold.val.accuracy,
            test,
            fold.final_pr_loss,
            path.display()
        );
    }
    if let Some(summary) = summarize(&outcome.test_accuracies()) {
        println!("test accuracy {summary}");
    }
    println!("metrics -> {}", out.join("metrics.csv").display());
    Ok(Status::Ok)
}

fn cmd_eval(mut s: Settings, args: EvalArgs) -> Result<Status> {
    let path: PathBuf = match s.pick_opt("checkpoint", args.checkpoint.map(|p| p.display().to_string()))? {
        Some(p) => p.into(),
        None => bail!("eval needs --checkpoint"),
    };
    let seed = s.seed(args.seed)?;
    let spec = experiment_spec(&mut s, args.data)?;
    s.finish("eval")?;

    let model = checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let (_, test) = experiment_data(&spec, seed)?;
    let report = evaluate(&model, &test)?;
    println!("accuracy {} ({} images)", report.accuracy, report.total);
    println!("true,pred_0,pred_1");
    for (label, row) in report.confusion.iter().enumerate() {
        println!("{label},{},{}", row[0], row[1]);
    }
    Ok(Status::Ok)
}

fn run(cli: Cli) -> Result<Status> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(settings, a),
        Command::Filters(a) => cmd_filters(settings, a),
        Command::Check(a) => cmd_check(settings, a),
        Command::Train(a) => cmd_train(settings, a),
        Command::Eval(a) => cmd_eval(settings, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
