//! End-to-end runs: dataset, split, optional alignment pre-training, kernel,
//! SVM and per-seed artifacts, plus the metric and break-even sweeps.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::complexity::{benchmark_table, efficiency_table, GammaChoice};
use crate::data::{
    load_csv_with, make_circles, make_moons, split, CsvOptions, Dataset, LabelColumn, DEFAULT_CIRCLE_FACTOR,
    DEFAULT_TEST_FRACTION,
};
use crate::embedding::{EmbeddingConfig, EmbeddingMode, InitialState};
use crate::generators::build_generator_set;
use crate::kernel::{
    self, classical_block, classical_kernel, fidelity_block, gram_states, kta, rbf_default_gamma, target_kernel,
    ClassicalKernel, KernelMatrix, TargetScheme,
};
use crate::metrics::{MetricsConfig, MetricsReport};
use crate::projection::{embed_all, init_params, train, BatchPolicy, GradientMode, InitScheme, TrainConfig};
use crate::svm::{accuracy, fit, predict, SvmConfig};
use crate::vgg::{build_vgg_set, GroupingConfig, Scaling, VggSet};
use crate::{QgkError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Moons { n: usize, noise: f64 },
    Circles { n: usize, noise: f64, factor: f64 },
    Csv { path: PathBuf, options: CsvOptions },
}

impl DatasetSpec {
    pub fn load(&self, seed: u64) -> Result<Dataset<f64>> {
        match self {
            Self::Moons { n, noise } => make_moons(*n, *noise, seed),
            Self::Circles { n, noise, factor } => make_circles(*n, *noise, *factor, seed),
            Self::Csv { path, options } => load_csv_with(path, options),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelFamily {
    Qgk,
    /// `None` picks 1/(d·Var[x]) on the training split.
    Rbf { gamma: Option<f64> },
    Linear,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Qgk => "qgk",
            Self::Rbf { .. } => "rbf",
            Self::Linear => "linear",
        })
    }
}

/// Width of the grouping stride, fixed or tied to η.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WidthChoice {
    Fixed(f64),
    Eta,
}

impl WidthChoice {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "eta" {
            return Ok(Self::Eta);
        }
        s.parse()
            .map(Self::Fixed)
            .map_err(|_| QgkError::Config(format!("width must be a number or 'eta', got '{s}'")))
    }

    pub fn resolve(self, eta: usize) -> f64 {
        match self {
            Self::Fixed(w) => w,
            Self::Eta => eta as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub eta: usize,
    pub scaling: Scaling,
    pub width: WidthChoice,
    pub embedding: EmbeddingConfig,
    pub init: InitScheme,
    /// `false` is the static variant: the initial projection is used as is.
    pub train: bool,
    pub epochs: usize,
    /// `None` means 10^{−(η−1)}.
    pub learning_rate: Option<f64>,
    pub batch: BatchPolicy,
    pub gradient: GradientMode,
    pub kernel: KernelFamily,
    pub svm: SvmConfig,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    pub stratified: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Moons { n: 200, noise: 0.2 },
            eta: 2,
            scaling: Scaling::Exponential,
            width: WidthChoice::Eta,
            embedding: EmbeddingConfig::default(),
            init: InitScheme::ScaledUniform,
            train: true,
            epochs: 100,
            learning_rate: None,
            batch: BatchPolicy::Auto,
            gradient: GradientMode::Analytic,
            kernel: KernelFamily::Qgk,
            svm: SvmConfig::default(),
            seeds: (0..8).collect(),
            test_fraction: DEFAULT_TEST_FRACTION,
            stratified: true,
            output: None,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(QgkError::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn parse_num<N: std::str::FromStr>(key: &str, v: &str) -> Result<N> {
    v.parse()
        .map_err(|_| QgkError::Config(format!("{key}: cannot parse '{v}'")))
}

pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (parse_num("seeds", a)?, parse_num("seeds", b)?);
        return Ok((a..b).collect());
    }
    v.split(',').map(|s| parse_num("seeds", s.trim())).collect()
}

pub fn parse_gradient(v: &str) -> Result<GradientMode> {
    match v {
        "analytic" => Ok(GradientMode::Analytic),
        "fd" => Ok(GradientMode::FiniteDifference(1e-5)),
        _ => v
            .strip_prefix("fd:")
            .and_then(|h| h.parse().ok())
            .map(GradientMode::FiniteDifference)
            .ok_or_else(|| QgkError::Config(format!("gradient: expected 'analytic' or 'fd:<step>', got '{v}'"))),
    }
}

pub fn parse_batch(v: &str) -> Result<BatchPolicy> {
    match v {
        "auto" => Ok(BatchPolicy::Auto),
        "full" => Ok(BatchPolicy::Full),
        _ => parse_num("batch", v).map(BatchPolicy::Size),
    }
}

/// Keys accepted by [`ExperimentConfig::apply`].
pub const CONFIG_KEYS: &[&str] = &[
    "dataset",
    "n",
    "noise",
    "factor",
    "csv_path",
    "label_column",
    "has_header",
    "categorical",
    "eta",
    "scaling",
    "width",
    "mode",
    "initial_state",
    "init",
    "train",
    "epochs",
    "learning_rate",
    "batch",
    "gradient",
    "kernel",
    "rbf_gamma",
    "svm_c",
    "svm_tol",
    "svm_max_passes",
    "seeds",
    "test_fraction",
    "stratified",
    "output",
];

impl ExperimentConfig {
    /// Applies key=value settings on top of `self`; dataset keys are read
    /// together so their order does not matter.
    pub fn apply(mut self, kv: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(QgkError::Config(format!("unknown configuration key '{k}'")));
        }
        let get = |k: &str| kv.get(k).map(String::as_str);

        let kind = get("dataset").map(str::to_string).unwrap_or_else(|| match &self.dataset {
            DatasetSpec::Moons { .. } => "moons".into(),
            DatasetSpec::Circles { .. } => "circles".into(),
            DatasetSpec::Csv { .. } => "csv".into(),
        });
        let (cur_n, cur_noise, cur_factor) = match &self.dataset {
            DatasetSpec::Moons { n, noise } => (*n, *noise, DEFAULT_CIRCLE_FACTOR),
            DatasetSpec::Circles { n, noise, factor } => (*n, *noise, *factor),
            DatasetSpec::Csv { .. } => (200, 0.2, DEFAULT_CIRCLE_FACTOR),
        };
        let n = get("n").map_or(Ok(cur_n), |v| parse_num("n", v))?;
        let noise = get("noise").map_or(Ok(cur_noise), |v| parse_num("noise", v))?;
        self.dataset = match kind.as_str() {
            "moons" => DatasetSpec::Moons { n, noise },
            "circles" => DatasetSpec::Circles {
                n,
                noise,
                factor: get("factor").map_or(Ok(cur_factor), |v| parse_num("factor", v))?,
            },
            "csv" => {
                let (cur_path, cur_opts) = match &self.dataset {
                    DatasetSpec::Csv { path, options } => (Some(path.clone()), options.clone()),
                    _ => (None, CsvOptions::new(LabelColumn::Name("label".into()), true)),
                };
                let path = get("csv_path")
                    .map(PathBuf::from)
                    .or(cur_path)
                    .ok_or_else(|| QgkError::Config("dataset=csv needs csv_path".into()))?;
                let options = CsvOptions {
                    label: get("label_column").map_or(cur_opts.label, LabelColumn::parse),
                    has_header: get("has_header").map_or(Ok(cur_opts.has_header), |v| parse_bool("has_header", v))?,
                    categorical_features: get("categorical")
                        .map_or(Ok(cur_opts.categorical_features), |v| parse_bool("categorical", v))?,
                };
                DatasetSpec::Csv { path, options }
            }
            other => return Err(QgkError::Config(format!("unknown dataset '{other}'"))),
        };

        if let Some(v) = get("eta") {
            self.eta = parse_num("eta", v)?;
        }
        if let Some(v) = get("scaling") {
            self.scaling = Scaling::parse(v)?;
        }
        if let Some(v) = get("width") {
            self.width = WidthChoice::parse(v)?;
        }
        if let Some(v) = get("mode") {
            self.embedding.mode = EmbeddingMode::parse(v)?;
        }
        if let Some(v) = get("initial_state") {
            self.embedding.initial_state = InitialState::parse(v)?;
        }
        if let Some(v) = get("init") {
            self.init = InitScheme::parse(v)?;
        }
        if let Some(v) = get("train") {
            self.train = parse_bool("train", v)?;
        }
        if let Some(v) = get("epochs") {
            self.epochs = parse_num("epochs", v)?;
        }
        if let Some(v) = get("learning_rate") {
            self.learning_rate = if v == "auto" { None } else { Some(parse_num("learning_rate", v)?) };
        }
        if let Some(v) = get("batch") {
            self.batch = parse_batch(v)?;
        }
        if let Some(v) = get("gradient") {
            self.gradient = parse_gradient(v)?;
        }
        let rbf_gamma = match get("rbf_gamma") {
            None | Some("auto") => None,
            Some(v) => Some(parse_num("rbf_gamma", v)?),
        };
        if let Some(v) = get("kernel") {
            self.kernel = match v {
                "qgk" => KernelFamily::Qgk,
                "rbf" => KernelFamily::Rbf { gamma: rbf_gamma },
                "linear" => KernelFamily::Linear,
                _ => return Err(QgkError::Config(format!("unknown kernel family '{v}'"))),
            };
        } else if let KernelFamily::Rbf { gamma } = &mut self.kernel {
            if kv.contains_key("rbf_gamma") {
                *gamma = rbf_gamma;
            }
        }
        if let Some(v) = get("svm_c") {
            self.svm.c = parse_num("svm_c", v)?;
        }
        if let Some(v) = get("svm_tol") {
            self.svm.tol = parse_num("svm_tol", v)?;
        }
        if let Some(v) = get("svm_max_passes") {
            self.svm.max_passes = Some(parse_num("svm_max_passes", v)?);
        }
        if let Some(v) = get("seeds") {
            self.seeds = parse_seeds(v)?;
        }
        if let Some(v) = get("test_fraction") {
            self.test_fraction = parse_num("test_fraction", v)?;
        }
        if let Some(v) = get("stratified") {
            self.stratified = parse_bool("stratified", v)?;
        }
        if let Some(v) = get("output") {
            self.output = Some(PathBuf::from(v));
        }
        Ok(self)
    }

    pub fn from_key_values(kv: &BTreeMap<String, String>) -> Result<Self> {
        Self::default().apply(kv)
    }

    pub fn width(&self) -> f64 {
        self.width.resolve(self.eta)
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
            .unwrap_or_else(|| TrainConfig::for_eta(self.eta, 0).learning_rate)
    }

    pub fn grouping(&self) -> GroupingConfig {
        GroupingConfig::new(self.eta, self.scaling, self.width())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate(),
            batch: self.batch,
            gradient_mode: self.gradient,
            ..TrainConfig::for_eta(self.eta, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(QgkError::Config("at least one seed is required".into()));
        }
        if self.kernel == KernelFamily::Qgk && !(1..=crate::generators::MAX_QUBITS).contains(&self.eta) {
            return Err(QgkError::Config(format!(
                "eta must lie in 1..={}, got {}",
                crate::generators::MAX_QUBITS,
                self.eta
            )));
        }
        if self.kernel == KernelFamily::Qgk && self.train {
            self.train_config(0).validate()?;
            if self.gradient == GradientMode::Analytic && self.embedding.mode != EmbeddingMode::Product {
                return Err(QgkError::Config(
                    "analytic gradients need mode=product; use gradient=fd for sumexp".into(),
                ));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(QgkError::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        Ok(())
    }

    /// Every setting, defaults included, as sorted key=value lines.
    pub fn to_key_values(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        match &self.dataset {
            DatasetSpec::Moons { n, noise } => {
                kv.insert("dataset", "moons".into());
                kv.insert("n", n.to_string());
                kv.insert("noise", noise.to_string());
            }
            DatasetSpec::Circles { n, noise, factor } => {
                kv.insert("dataset", "circles".into());
                kv.insert("n", n.to_string());
                kv.insert("noise", noise.to_string());
                kv.insert("factor", factor.to_string());
            }
            DatasetSpec::Csv { path, options } => {
                kv.insert("dataset", "csv".into());
                kv.insert("csv_path", path.display().to_string());
                kv.insert(
                    "label_column",
                    match &options.label {
                        LabelColumn::Index(i) => i.to_string(),
                        LabelColumn::Name(n) => n.clone(),
                    },
                );
                kv.insert("has_header", options.has_header.to_string());
                kv.insert("categorical", options.categorical_features.to_string());
            }
        }
        kv.insert("eta", self.eta.to_string());
        kv.insert("scaling", self.scaling.to_string());
        kv.insert("width", self.width().to_string());
        kv.insert("mode", self.embedding.mode.to_string());
        kv.insert("initial_state", self.embedding.initial_state.to_string());
        kv.insert("init", self.init.to_string());
        kv.insert("train", self.train.to_string());
        kv.insert("epochs", self.epochs.to_string());
        kv.insert("learning_rate", self.learning_rate().to_string());
        kv.insert(
            "batch",
            match self.batch {
                BatchPolicy::Auto => "auto".into(),
                BatchPolicy::Full => "full".into(),
                BatchPolicy::Size(s) => s.to_string(),
            },
        );
        kv.insert(
            "gradient",
            match self.gradient {
                GradientMode::Analytic => "analytic".into(),
                GradientMode::FiniteDifference(h) => format!("fd:{h}"),
            },
        );
        kv.insert("kernel", self.kernel.to_string());
        if let KernelFamily::Rbf { gamma } = self.kernel {
            kv.insert("rbf_gamma", gamma.map_or_else(|| "auto".into(), |g| g.to_string()));
        }
        kv.insert("svm_c", self.svm.c.to_string());
        kv.insert("svm_tol", self.svm.tol.to_string());
        if let Some(p) = self.svm.max_passes {
            kv.insert("svm_max_passes", p.to_string());
        }
        kv.insert(
            "seeds",
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        );
        kv.insert("test_fraction", self.test_fraction.to_string());
        kv.insert("stratified", self.stratified.to_string());
        if let Some(o) = &self.output {
            kv.insert("output", o.display().to_string());
        }
        kv.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Dataset,
    Split,
    Grouping,
    Train,
    Kernel,
    Svm,
    Output,
}

impl Stage {
    /// Process exit code used by the command line for failures in this stage.
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Config => 2,
            Self::Dataset => 3,
            Self::Split => 4,
            Self::Grouping => 5,
            Self::Train => 6,
            Self::Kernel => 7,
            Self::Svm => 8,
            Self::Output => 9,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Config => "config",
            Self::Dataset => "dataset",
            Self::Split => "split",
            Self::Grouping => "grouping",
            Self::Train => "train",
            Self::Kernel => "kernel",
            Self::Svm => "svm",
            Self::Output => "output",
        })
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub seed: Option<u64>,
    pub source: QgkError,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.seed {
            Some(s) => write!(f, "[{}] seed {s}: {}", self.stage, self.source),
            None => write!(f, "[{}] {}", self.stage, self.source),
        }
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage, seed: Option<u64>) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage, seed: Option<u64>) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, seed, source })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    /// Alignment of the train kernel with the label target.
    pub alignment: f64,
    /// Alignment before pre-training, when training ran.
    pub initial_alignment: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub majority_rate: f64,
    pub svm_converged: bool,
    pub directory: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seeds: Vec<SeedResult>,
    pub mean_accuracy: f64,
    pub ci_accuracy: f64,
    pub mean_alignment: f64,
    pub ci_alignment: f64,
}

/// Two-sided 97.5% quantile of Student's t.
pub fn t_critical_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
        2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::NAN,
        1..=30 => TABLE[df - 1],
        _ => 1.96,
    }
}

/// Mean and t-based 95% half-width; a single value has half-width 0.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, t_critical_975(k - 1) * (var / k as f64).sqrt())
}

pub fn build_grouping(cfg: &ExperimentConfig) -> Result<VggSet<f64>> {
    let gs = build_generator_set(cfg.eta)?;
    build_vgg_set(&gs, cfg.grouping())
}

/// Kernels and labels produced for one seed.
#[derive(Clone, Debug)]
pub struct SeedArtifacts {
    pub k_train: KernelMatrix<f64>,
    pub k_test: KernelMatrix<f64>,
    pub y_train: Vec<usize>,
    pub y_test: Vec<usize>,
    pub trace_csv: Option<String>,
    pub params_checkpoint: Option<String>,
    pub majority_rate: f64,
    pub initial_alignment: Option<f64>,
}

/// Split, optional pre-training and kernel construction for one seed.
pub fn prepare_seed(
    cfg: &ExperimentConfig,
    vgg: Option<&VggSet<f64>>,
    seed: u64,
) -> std::result::Result<SeedArtifacts, StageError> {
    let s = Some(seed);
    let ds = cfg.dataset.load(seed).at(Stage::Dataset, s)?;
    let (tr, te) = split(&ds, cfg.test_fraction, seed, cfg.stratified).at(Stage::Split, s)?;
    let mut trace_csv = None;
    let mut params_checkpoint = None;
    let mut initial_alignment = None;
    let (k_train, k_test) = match cfg.kernel {
        KernelFamily::Qgk => {
            let vgg = vgg.ok_or(StageError {
                stage: Stage::Grouping,
                seed: s,
                source: QgkError::precondition("QGK kernel without a grouping"),
            })?;
            let mut params = init_params(tr.dim(), vgg.group_count(), seed, cfg.init).at(Stage::Train, s)?;
            if cfg.train {
                let (p, trace) = train(&params, &tr.x, &tr.y, vgg, cfg.embedding, &cfg.train_config(seed))
                    .at(Stage::Train, s)?;
                initial_alignment = Some(trace.initial_alignment);
                trace_csv = Some(trace.to_csv());
                params_checkpoint = Some(p.to_checkpoint(seed, cfg.epochs));
                params = p;
            } else {
                params_checkpoint = Some(params.to_checkpoint(seed, 0));
            }
            let s_tr = embed_all(&params, &tr.x, vgg, cfg.embedding).at(Stage::Kernel, s)?;
            let s_te = embed_all(&params, &te.x, vgg, cfg.embedding).at(Stage::Kernel, s)?;
            let r_tr: Vec<_> = s_tr.iter().collect();
            let r_te: Vec<_> = s_te.iter().collect();
            let k_train = gram_states(&r_tr).at(Stage::Kernel, s)?;
            let k_test = fidelity_block(&r_te, &r_tr).at(Stage::Kernel, s)?;
            let tag = |k: KernelMatrix<f64>| {
                k.with_provenance("family", "qgk")
                    .with_provenance("eta", cfg.eta)
                    .with_provenance("scaling", cfg.scaling)
                    .with_provenance("width", cfg.width())
                    .with_provenance("mode", cfg.embedding.mode)
                    .with_provenance("initial_state", cfg.embedding.initial_state)
                    .with_provenance("trained", cfg.train)
                    .with_provenance("seed", seed)
            };
            (tag(k_train), tag(k_test))
        }
        KernelFamily::Rbf { gamma } => {
            let gamma = gamma.unwrap_or_else(|| rbf_default_gamma(&tr.x));
            let fam = ClassicalKernel::Rbf { gamma };
            let k_train = classical_kernel(&tr.x, fam).at(Stage::Kernel, s)?;
            let k_test = classical_block(&te.x, &tr.x, fam).at(Stage::Kernel, s)?;
            let tag = |k: KernelMatrix<f64>| {
                k.with_provenance("family", "rbf")
                    .with_provenance("gamma", gamma)
                    .with_provenance("seed", seed)
            };
            (tag(k_train), tag(k_test))
        }
        KernelFamily::Linear => {
            let k_train = classical_kernel(&tr.x, ClassicalKernel::Linear).at(Stage::Kernel, s)?;
            let k_test = classical_block(&te.x, &tr.x, ClassicalKernel::Linear).at(Stage::Kernel, s)?;
            let tag = |k: KernelMatrix<f64>| k.with_provenance("family", "linear").with_provenance("seed", seed);
            (tag(k_train), tag(k_test))
        }
    };
    Ok(SeedArtifacts {
        k_train,
        k_test,
        majority_rate: te.majority_rate(),
        y_train: tr.y,
        y_test: te.y,
        trace_csv,
        params_checkpoint,
        initial_alignment,
    })
}

/// SVM fit on the train kernel and accuracy on the test block.
pub fn evaluate_kernels(
    k_train: &KernelMatrix<f64>,
    y_train: &[usize],
    k_test: &KernelMatrix<f64>,
    y_test: &[usize],
    svm: &SvmConfig,
) -> Result<(f64, bool, crate::SvmModel<f64>)> {
    let model = fit(k_train, y_train, svm)?;
    let pred = predict(&model, k_test)?;
    Ok((accuracy(&pred, y_test), model.converged(), model))
}

fn labels_text(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| QgkError::Parse {
                line: i + 1,
                column: 1,
                message: format!("label '{l}' is not a class id"),
            })
        })
        .collect()
}

fn json_object(fields: &[(&str, String)]) -> String {
    let body = fields
        .iter()
        .map(|(k, v)| format!("  \"{k}\": {v}"))
        .collect::<Vec<_>>()
        .join(",\n");
    format!("{{\n{body}\n}}\n")
}

fn json_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "null".into()
    }
}

fn write(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

/// Artifact file names inside each seed directory.
pub mod files {
    pub const KERNEL_TRAIN: &str = "kernel-train.csv";
    pub const KERNEL_TEST: &str = "kernel-test.csv";
    pub const LABELS_TRAIN: &str = "labels-train.csv";
    pub const LABELS_TEST: &str = "labels-test.csv";
    pub const TRACE: &str = "trace.csv";
    pub const PARAMS: &str = "params.txt";
    pub const MODEL: &str = "svm-model.txt";
    pub const RESULT: &str = "result.json";
    pub const RESOLVED_CONFIG: &str = "resolved-config";
    pub const SEEDS: &str = "seeds.csv";
}

fn run_seed(
    cfg: &ExperimentConfig,
    vgg: Option<&VggSet<f64>>,
    seed: u64,
) -> std::result::Result<SeedResult, StageError> {
    let s = Some(seed);
    let art = prepare_seed(cfg, vgg, seed)?;
    let scheme = TargetScheme::for_labels(&art.y_train);
    let target = target_kernel(&art.y_train, scheme).at(Stage::Kernel, s)?;
    let alignment = kta(&art.k_train, &target).at(Stage::Kernel, s)?.alignment;
    let (acc, converged, model) =
        evaluate_kernels(&art.k_train, &art.y_train, &art.k_test, &art.y_test, &cfg.svm).at(Stage::Svm, s)?;

    let directory = match &cfg.output {
        None => None,
        Some(root) => {
            let dir = root.join(format!("seed-{seed}"));
            std::fs::create_dir_all(&dir).map_err(QgkError::from).at(Stage::Output, s)?;
            let out = || -> Result<()> {
                kernel::save(&art.k_train, &dir.join(files::KERNEL_TRAIN))?;
                kernel::save(&art.k_test, &dir.join(files::KERNEL_TEST))?;
                write(&dir.join(files::LABELS_TRAIN), &labels_text(&art.y_train))?;
                write(&dir.join(files::LABELS_TEST), &labels_text(&art.y_test))?;
                if let Some(t) = &art.trace_csv {
                    write(&dir.join(files::TRACE), t)?;
                }
                if let Some(p) = &art.params_checkpoint {
                    write(&dir.join(files::PARAMS), p)?;
                }
                write(&dir.join(files::MODEL), &model.to_text())?;
                let mut fields = vec![
                    ("seed", seed.to_string()),
                    ("accuracy", json_num(acc)),
                    ("alignment", json_num(alignment)),
                ];
                if let Some(a) = art.initial_alignment {
                    fields.push(("initial_alignment", json_num(a)));
                }
                fields.extend([
                    ("n_train", art.y_train.len().to_string()),
                    ("n_test", art.y_test.len().to_string()),
                    ("majority_rate", json_num(art.majority_rate)),
                    ("svm_converged", converged.to_string()),
                    ("kernel_path", format!("\"{}\"", files::KERNEL_TRAIN)),
                    ("trace_path", format!("\"{}\"", files::TRACE)),
                ]);
                write(&dir.join(files::RESULT), &json_object(&fields))
            };
            out().at(Stage::Output, s)?;
            Some(dir)
        }
    };
    Ok(SeedResult {
        seed,
        accuracy: acc,
        alignment,
        initial_alignment: art.initial_alignment,
        n_train: art.y_train.len(),
        n_test: art.y_test.len(),
        majority_rate: art.majority_rate,
        svm_converged: converged,
        directory,
    })
}

/// Runs every seed as an independent pipeline and aggregates the results.
pub fn run_experiment(cfg: &ExperimentConfig) -> std::result::Result<RunResult, StageError> {
    cfg.validate().at(Stage::Config, None)?;
    let vgg = match cfg.kernel {
        KernelFamily::Qgk => Some(build_grouping(cfg).at(Stage::Grouping, None)?),
        _ => None,
    };
    if let Some(root) = &cfg.output {
        std::fs::create_dir_all(root).map_err(QgkError::from).at(Stage::Output, None)?;
        write(&root.join(files::RESOLVED_CONFIG), &cfg.to_key_values()).at(Stage::Output, None)?;
    }
    let seeds = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let vgg = vgg.as_ref();
                scope.spawn(move || run_seed(cfg, vgg, seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("seed pipeline panicked"))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;

    let accs: Vec<f64> = seeds.iter().map(|r| r.accuracy).collect();
    let aligns: Vec<f64> = seeds.iter().map(|r| r.alignment).collect();
    let (mean_accuracy, ci_accuracy) = mean_ci(&accs);
    let (mean_alignment, ci_alignment) = mean_ci(&aligns);
    let result = RunResult {
        seeds,
        mean_accuracy,
        ci_accuracy,
        mean_alignment,
        ci_alignment,
    };
    if let Some(root) = &cfg.output {
        let out = || -> Result<()> {
            write(&root.join(files::SEEDS), &seeds_csv(&result))?;
            write(
                &root.join(files::RESULT),
                &json_object(&[
                    ("seeds", format!("[{}]", cfg.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", "))),
                    ("mean_accuracy", json_num(result.mean_accuracy)),
                    ("ci95_accuracy", json_num(result.ci_accuracy)),
                    ("mean_alignment", json_num(result.mean_alignment)),
                    ("ci95_alignment", json_num(result.ci_alignment)),
                ]),
            )
        };
        out().at(Stage::Output, None)?;
    }
    Ok(result)
}

pub fn seeds_csv(r: &RunResult) -> String {
    let mut out = String::from("seed,accuracy,alignment,initial_alignment,n_train,n_test,svm_converged\n");
    for s in &r.seeds {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.seed,
            s.accuracy,
            s.alignment,
            s.initial_alignment.map_or_else(String::new, |a| a.to_string()),
            s.n_train,
            s.n_test,
            s.svm_converged
        );
    }
    out
}

/// Re-derives a seed's accuracy from its written kernels and labels.
pub fn reevaluate_seed_dir(dir: &Path, svm: &SvmConfig) -> Result<f64> {
    let k_train = kernel::load::<f64>(&dir.join(files::KERNEL_TRAIN))?;
    let k_test = kernel::load::<f64>(&dir.join(files::KERNEL_TEST))?;
    let y_train = parse_labels(&std::fs::read_to_string(dir.join(files::LABELS_TRAIN))?)?;
    let y_test = parse_labels(&std::fs::read_to_string(dir.join(files::LABELS_TEST))?)?;
    Ok(evaluate_kernels(&k_train, &y_train, &k_test, &y_test, svm)?.0)
}

/// One metrics row per (η, scaling, width), in that nesting order.
pub fn run_metrics_sweep(
    etas: &[usize],
    scalings: &[Scaling],
    widths: &[WidthChoice],
    embedding: EmbeddingConfig,
    metrics: MetricsConfig,
) -> Result<String> {
    let mut out = format!("{}\n", MetricsReport::CSV_HEADER);
    for &eta in etas {
        let gs = build_generator_set::<f64>(eta)?;
        for &scaling in scalings {
            for &w in widths {
                let vgg = build_vgg_set(&gs, GroupingConfig::new(eta, scaling, w.resolve(eta)))?;
                let report = MetricsReport::compute(&vgg, embedding, metrics, None)?;
                out.push_str(&report.csv_row());
                out.push('\n');
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BreakevenTables {
    pub efficiency: String,
    pub benchmarks: String,
}

pub fn run_breakeven(etas: &[usize], gammas: &[GammaChoice]) -> Result<BreakevenTables> {
    Ok(BreakevenTables {
        efficiency: efficiency_table(etas, gammas)?,
        benchmarks: benchmark_table()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn config_roundtrips_through_key_values() {
        let cfg = ExperimentConfig::from_key_values(&kv(&[
            ("dataset", "circles"),
            ("factor", "0.5"),
            ("eta", "3"),
            ("kernel", "rbf"),
            ("rbf_gamma", "0.7"),
            ("seeds", "1..4"),
        ]))
        .unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.kernel, KernelFamily::Rbf { gamma: Some(0.7) });
        let parsed = crate::kernel::parse_key_values(&cfg.to_key_values());
        let again = ExperimentConfig::from_key_values(&parsed).unwrap();
        assert_eq!(again.to_key_values(), cfg.to_key_values());
        assert!(ExperimentConfig::from_key_values(&kv(&[("bogus", "1")])).is_err());
    }

    #[test]
    fn sumexp_with_analytic_training_is_rejected() {
        let cfg = ExperimentConfig::from_key_values(&kv(&[("mode", "sumexp")])).unwrap();
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.stage, Stage::Config);
    }

    #[test]
    fn t_interval() {
        assert_eq!(t_critical_975(7), 2.365);
        let (m, h) = mean_ci(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert!((m - 4.5).abs() < 1e-15);
        let sd = (42.0f64 / 7.0).sqrt();
        assert!((h - 2.365 * sd / 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn metrics_sweep_cardinality() {
        let metrics = MetricsConfig {
            entanglement_samples: 4,
            expressibility_samples: 4,
            ..MetricsConfig::default()
        };
        let widths = [WidthChoice::Fixed(0.0), WidthChoice::Fixed(1.0), WidthChoice::Eta];
        let csv =
            run_metrics_sweep(&[1, 2, 3, 4], &[Scaling::Exponential], &widths, EmbeddingConfig::default(), metrics)
                .unwrap();
        assert_eq!(csv.lines().count(), 13);
    }
}
