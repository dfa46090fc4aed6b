use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qgk::complexity::GammaChoice;
use qgk::data::{split, to_csv};
use qgk::experiment::{
    build_grouping, files, prepare_seed, reevaluate_seed_dir, run_breakeven, run_experiment, run_metrics_sweep,
    ExperimentConfig, KernelFamily, Stage, StageError, WidthChoice,
};
use qgk::kernel;
use qgk::metrics::{MetricsConfig, UniformBox};
use qgk::projection::{init_params, train};
use qgk::svm::SvmConfig;
use qgk::{EmbeddingConfig, EmbeddingMode, InitialState, QgkError, Scaling};

/// Overrides the default output root (`./qgk-runs`).
const OUTPUT_ROOT_ENV: &str = "QGK_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "qgk-runs";

#[derive(Parser)]
#[command(name = "qgk", version, about = "Quantum generator kernel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load a dataset and write it with its first train/test split.
    Dataset(Common),
    /// Build train and test kernels for every seed without fitting the SVM.
    Kernel(Common),
    /// Run KTA pre-training only and write traces and checkpoints.
    Train(Common),
    /// Refit the SVM on kernels written by `kernel` or `experiment`.
    Eval(EvalArgs),
    /// Entanglement, expressibility and bound diagnostics per grouping.
    Metrics(Common),
    /// Efficiency-bound and benchmark cost tables.
    Breakeven(Common),
    /// The full pipeline: split, pre-train, kernels, SVM and aggregate.
    Experiment(Common),
}

#[derive(Args)]
struct Common {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; takes precedence over the `output` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Setting overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// A run directory holding `seed-*` folders, or a single seed folder.
    dir: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn config_err(msg: impl Into<String>) -> StageError {
    StageError {
        stage: Stage::Config,
        seed: None,
        source: QgkError::Config(msg.into()),
    }
}

fn at(stage: Stage, seed: Option<u64>) -> impl FnOnce(QgkError) -> StageError {
    move |source| StageError { stage, seed, source }
}

fn io_at(stage: Stage) -> impl FnOnce(std::io::Error) -> StageError {
    move |e| StageError {
        stage,
        seed: None,
        source: QgkError::from(e),
    }
}

fn parse_key_value_text(text: &str) -> Result<BTreeMap<String, String>, StageError> {
    if let Some((i, l)) = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.trim().is_empty() && !l.trim().starts_with('#') && !l.contains('='))
    {
        return Err(config_err(format!("line {}: expected key=value, got '{}'", i + 1, l.trim())));
    }
    Ok(kernel::parse_key_values(text))
}

fn normalize_key(k: &str) -> String {
    k.trim_start_matches("--").replace('-', "_")
}

/// Merges the config file and command-line overrides, overrides last.
fn settings(c: &Common) -> Result<BTreeMap<String, String>, StageError> {
    let mut kv = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            parse_key_value_text(&text)?
                .into_iter()
                .map(|(k, v)| (normalize_key(&k), v))
                .collect()
        }
        None => BTreeMap::new(),
    };
    let mut it = c.overrides.iter();
    while let Some(tok) = it.next() {
        let Some(key) = tok.strip_prefix("--") else {
            return Err(config_err(format!("expected --key, got '{tok}'")));
        };
        let (k, v) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| config_err(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        kv.insert(normalize_key(&k), v);
    }
    Ok(kv)
}

fn output_dir(c: &Common, kv: &mut BTreeMap<String, String>, command: &str) -> PathBuf {
    let from_key = kv.remove("output").map(PathBuf::from);
    c.out.clone().or(from_key).unwrap_or_else(|| {
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from);
        root.join(command)
    })
}

fn take<T>(kv: &mut BTreeMap<String, String>, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> Result<T, StageError> {
    match kv.remove(key) {
        None => Ok(default),
        Some(v) => parse(&v).ok_or_else(|| config_err(format!("{key}: cannot parse '{v}'"))),
    }
}

fn reject_rest(kv: &BTreeMap<String, String>) -> Result<(), StageError> {
    match kv.keys().next() {
        Some(k) => Err(config_err(format!("unknown configuration key '{k}'"))),
        None => Ok(()),
    }
}

/// `a..b` (exclusive), `a..=b` or a comma list.
fn parse_list<T: std::str::FromStr>(v: &str, item: impl Fn(&str) -> Option<T>) -> Option<Vec<T>>
where
    T: From<u8> + std::ops::Add<Output = T> + PartialOrd + Copy,
{
    if let Some((a, b)) = v.split_once("..=") {
        let (a, b) = (item(a)?, item(b)?);
        return Some(range(a, b, true));
    }
    if let Some((a, b)) = v.split_once("..") {
        let (a, b) = (item(a)?, item(b)?);
        return Some(range(a, b, false));
    }
    v.split(',').map(|s| item(s.trim())).collect()
}

fn range<T: From<u8> + std::ops::Add<Output = T> + PartialOrd + Copy>(a: T, b: T, inclusive: bool) -> Vec<T> {
    let mut out = Vec::new();
    let mut x = a;
    while x < b || (inclusive && x == b) {
        out.push(x);
        x = x + T::from(1);
    }
    out
}

fn experiment_config(c: &Common, command: &str) -> Result<ExperimentConfig, StageError> {
    let mut kv = settings(c)?;
    let out = output_dir(c, &mut kv, command);
    let mut cfg = ExperimentConfig::from_key_values(&kv).map_err(at(Stage::Config, None))?;
    cfg.output = Some(out);
    cfg.validate().map_err(at(Stage::Config, None))?;
    Ok(cfg)
}

fn write(path: &Path, content: &str) -> Result<(), StageError> {
    fs::write(path, content).map_err(io_at(Stage::Output))
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<PathBuf, StageError> {
    let out = cfg.output.clone().expect("output resolved");
    fs::create_dir_all(&out).map_err(io_at(Stage::Output))?;
    write(&out.join(files::RESOLVED_CONFIG), &cfg.to_key_values())?;
    Ok(out)
}

fn seed_dir(out: &Path, seed: u64) -> Result<PathBuf, StageError> {
    let dir = out.join(format!("seed-{seed}"));
    fs::create_dir_all(&dir).map_err(io_at(Stage::Output))?;
    Ok(dir)
}

fn labels_text(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

fn cmd_dataset(c: &Common) -> Result<(), StageError> {
    let cfg = experiment_config(c, "dataset")?;
    let out = prepare_output(&cfg)?;
    let seed = cfg.seeds[0];
    let ds = cfg.dataset.load(seed).map_err(at(Stage::Dataset, Some(seed)))?;
    let (tr, te) = split(&ds, cfg.test_fraction, seed, cfg.stratified).map_err(at(Stage::Split, Some(seed)))?;
    write(&out.join("dataset.csv"), &to_csv(&ds))?;
    write(&out.join("train.csv"), &to_csv(&tr))?;
    write(&out.join("test.csv"), &to_csv(&te))?;
    println!(
        "{}: n={} d={} classes={} train={} test={} -> {}",
        ds.name,
        ds.len(),
        ds.dim(),
        ds.classes().len(),
        tr.len(),
        te.len(),
        out.display()
    );
    Ok(())
}

fn cmd_kernel(c: &Common) -> Result<(), StageError> {
    let cfg = experiment_config(c, "kernel")?;
    let out = prepare_output(&cfg)?;
    let vgg = match cfg.kernel {
        KernelFamily::Qgk => Some(build_grouping(&cfg).map_err(at(Stage::Grouping, None))?),
        _ => None,
    };
    for &seed in &cfg.seeds {
        let art = prepare_seed(&cfg, vgg.as_ref(), seed)?;
        let dir = seed_dir(&out, seed)?;
        let save = |k: &qgk::KernelMatrix<f64>, name: &str| {
            kernel::save(k, &dir.join(name)).map_err(at(Stage::Output, Some(seed)))
        };
        save(&art.k_train, files::KERNEL_TRAIN)?;
        save(&art.k_test, files::KERNEL_TEST)?;
        write(&dir.join(files::LABELS_TRAIN), &labels_text(&art.y_train))?;
        write(&dir.join(files::LABELS_TEST), &labels_text(&art.y_test))?;
        if let Some(t) = &art.trace_csv {
            write(&dir.join(files::TRACE), t)?;
        }
        if let Some(p) = &art.params_checkpoint {
            write(&dir.join(files::PARAMS), p)?;
        }
        println!("seed {seed}: train {}x{}, test {}x{}", art.k_train.rows, art.k_train.cols, art.k_test.rows, art.k_test.cols);
    }
    println!("kernels -> {}", out.display());
    Ok(())
}

fn cmd_train(c: &Common) -> Result<(), StageError> {
    let cfg = experiment_config(c, "train")?;
    if cfg.kernel != KernelFamily::Qgk {
        return Err(config_err("train needs kernel=qgk"));
    }
    let out = prepare_output(&cfg)?;
    let vgg = build_grouping(&cfg).map_err(at(Stage::Grouping, None))?;
    for &seed in &cfg.seeds {
        let s = Some(seed);
        let ds = cfg.dataset.load(seed).map_err(at(Stage::Dataset, s))?;
        let (tr, _) = split(&ds, cfg.test_fraction, seed, cfg.stratified).map_err(at(Stage::Split, s))?;
        let p0 = init_params(tr.dim(), vgg.group_count(), seed, cfg.init).map_err(at(Stage::Train, s))?;
        let (p, trace) =
            train(&p0, &tr.x, &tr.y, &vgg, cfg.embedding, &cfg.train_config(seed)).map_err(at(Stage::Train, s))?;
        let dir = seed_dir(&out, seed)?;
        write(&dir.join(files::TRACE), &trace.to_csv())?;
        write(&dir.join(files::PARAMS), &p.to_checkpoint(seed, cfg.epochs))?;
        println!(
            "seed {seed}: alignment {:.4} -> {:.4}",
            trace.initial_alignment,
            trace.final_alignment()
        );
    }
    println!("checkpoints -> {}", out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), StageError> {
    let mut kv = settings(&a.common)?;
    kv.remove("output");
    let mut svm = SvmConfig::default();
    svm.c = take(&mut kv, "svm_c", svm.c, |v| v.parse().ok())?;
    svm.tol = take(&mut kv, "svm_tol", svm.tol, |v| v.parse().ok())?;
    svm.max_passes = take(&mut kv, "svm_max_passes", None, |v| v.parse().ok().map(Some))?;
    reject_rest(&kv)?;

    let mut dirs: Vec<(String, PathBuf)> = Vec::new();
    if a.dir.join(files::KERNEL_TRAIN).exists() {
        dirs.push((a.dir.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()), a.dir.clone()));
    } else {
        for e in fs::read_dir(&a.dir).map_err(io_at(Stage::Kernel))? {
            let p = e.map_err(io_at(Stage::Kernel))?.path();
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if p.is_dir() && name.starts_with("seed-") {
                dirs.push((name, p));
            }
        }
    }
    if dirs.is_empty() {
        return Err(StageError {
            stage: Stage::Kernel,
            seed: None,
            source: QgkError::Config(format!("no kernels found under {}", a.dir.display())),
        });
    }
    dirs.sort_by_key(|(n, _)| n.trim_start_matches("seed-").parse::<u64>().unwrap_or(u64::MAX));
    let mut csv = String::from("run,accuracy\n");
    let mut accs = Vec::new();
    for (name, d) in &dirs {
        let seed = name.trim_start_matches("seed-").parse().ok();
        let acc = reevaluate_seed_dir(d, &svm).map_err(at(Stage::Svm, seed))?;
        let _ = writeln!(csv, "{name},{acc}");
        accs.push(acc);
    }
    let (mean, ci) = qgk::experiment::mean_ci(&accs);
    print!("{csv}");
    println!("mean accuracy {mean:.4} ± {ci:.4}");
    Ok(())
}

fn cmd_metrics(c: &Common) -> Result<(), StageError> {
    let mut kv = settings(c)?;
    let out = output_dir(c, &mut kv, "metrics");
    let etas = take(&mut kv, "etas", vec![1, 2, 3, 4], |v| parse_list(v, |s| s.parse::<usize>().ok()))?;
    let scalings = take(&mut kv, "scalings", vec![Scaling::Exponential], |v| {
        v.split(',').map(|s| Scaling::parse(s.trim()).ok()).collect()
    })?;
    let widths = take(
        &mut kv,
        "widths",
        vec![WidthChoice::Fixed(0.0), WidthChoice::Fixed(1.0), WidthChoice::Eta],
        |v| v.split(',').map(|s| WidthChoice::parse(s.trim()).ok()).collect(),
    )?;
    let mode = take(&mut kv, "mode", EmbeddingMode::Product, |v| EmbeddingMode::parse(v).ok())?;
    let initial = take(&mut kv, "initial_state", InitialState::UniformSuperposition, |v| InitialState::parse(v).ok())?;
    let d = MetricsConfig::default();
    let metrics = MetricsConfig {
        entanglement_samples: take(&mut kv, "entanglement_samples", d.entanglement_samples, |v| v.parse().ok())?,
        expressibility_samples: take(&mut kv, "expressibility_samples", d.expressibility_samples, |v| v.parse().ok())?,
        distribution: UniformBox {
            low: take(&mut kv, "low", d.distribution.low, |v| v.parse().ok())?,
            high: take(&mut kv, "high", d.distribution.high, |v| v.parse().ok())?,
        },
        seed: take(&mut kv, "seed", d.seed, |v| v.parse().ok())?,
    };
    reject_rest(&kv)?;
    let csv = run_metrics_sweep(&etas, &scalings, &widths, EmbeddingConfig::new(mode, initial), metrics)
        .map_err(at(Stage::Grouping, None))?;
    fs::create_dir_all(&out).map_err(io_at(Stage::Output))?;
    write(&out.join("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_breakeven(c: &Common) -> Result<(), StageError> {
    let mut kv = settings(c)?;
    let out = output_dir(c, &mut kv, "breakeven");
    let etas = take(&mut kv, "etas", (2..=8).collect(), |v| parse_list(v, |s| s.parse::<usize>().ok()))?;
    let gammas = take(&mut kv, "gammas", vec![GammaChoice::Fixed(1.0), GammaChoice::Eta], |v| {
        v.split(',').map(|s| GammaChoice::parse(s.trim()).ok()).collect()
    })?;
    reject_rest(&kv)?;
    let t = run_breakeven(&etas, &gammas).map_err(at(Stage::Config, None))?;
    fs::create_dir_all(&out).map_err(io_at(Stage::Output))?;
    write(&out.join("efficiency.csv"), &t.efficiency)?;
    write(&out.join("benchmarks.csv"), &t.benchmarks)?;
    print!("{}\n{}", t.efficiency, t.benchmarks);
    Ok(())
}

fn cmd_experiment(c: &Common) -> Result<(), StageError> {
    let cfg = experiment_config(c, "experiment")?;
    let r = run_experiment(&cfg)?;
    for s in &r.seeds {
        let init = s.initial_alignment.map_or_else(String::new, |a| format!(" (initial {a:.4})"));
        println!("seed {}: accuracy {:.4}, alignment {:.4}{init}", s.seed, s.accuracy, s.alignment);
    }
    println!(
        "mean accuracy {:.4} ± {:.4}, mean alignment {:.4} ± {:.4} over {} seeds",
        r.mean_accuracy,
        r.ci_accuracy,
        r.mean_alignment,
        r.ci_alignment,
        r.seeds.len()
    );
    println!("results -> {}", cfg.output.as_ref().expect("output resolved").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Dataset(c) => cmd_dataset(c),
        Command::Kernel(c) => cmd_kernel(c),
        Command::Train(c) => cmd_train(c),
        Command::Eval(a) => cmd_eval(a),
        Command::Metrics(c) => cmd_metrics(c),
        Command::Breakeven(c) => cmd_breakeven(c),
        Command::Experiment(c) => cmd_experiment(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
