//! Dataset ingestion, metrics, experiment configs and the diagnostic
//! experiments. Every table the experiments emit is plain CSV text, and is
//! byte-identical for identical seeds.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::error::{check_dim, Error, Result};
use crate::network::{Architecture, Direction, FeatureAnnotation, Network, Parametrization};
use crate::layer::Reparam;
use crate::scalar::Scalar;
use crate::training::{fit, init_params, predict, Dataset, LossKind, TrainConfig};
use crate::verifier::{midpoint_convexity_check, DomainBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

fn default_fraction() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

/// Where a tabular dataset lives and how to read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub target: String,
    pub task: Task,
    #[serde(default)]
    pub increasing: Vec<String>,
    #[serde(default)]
    pub decreasing: Vec<String>,
    /// Free features; when empty, every remaining non-target column.
    #[serde(default)]
    pub free: Vec<String>,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

/// Train/test split with features in model-ready form.
///
/// Decreasing columns are already negated, so `annotation` marks them as
/// increasing; `source_annotation` keeps the declared directions.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
    pub feature_names: Vec<String>,
    pub annotation: FeatureAnnotation,
    pub source_annotation: FeatureAnnotation,
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(header.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: non-numeric cell `{cell}` at row {}, column {} ({})",
                    path.display(),
                    r + 2,
                    c + 1,
                    header.get(c).map_or("?", String::as_str)
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: non-finite cell at row {}, column {}",
                    path.display(),
                    r + 2,
                    c + 1
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads an interpolation point set: a CSV with a header whose last column
/// is the target and whose other columns are the (increasing) inputs.
pub fn read_points(path: &Path) -> Result<Vec<(Vec<f64>, f64)>> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 {
        return Err(Error::Data(format!(
            "{}: need at least one input column and a target column",
            path.display()
        )));
    }
    Ok(rows
        .into_iter()
        .map(|mut r| {
            let y = r.pop().unwrap_or(f64::NAN);
            (r, y)
        })
        .collect())
}

/// Reads, splits, standardizes (on train statistics) and orients a CSV
/// dataset. `base` resolves a relative `spec.path`.
pub fn load_dataset(spec: &DatasetSpec, base: Option<&Path>) -> Result<LoadedData> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1], got {}",
            spec.train_fraction
        )));
    }
    let path = match base {
        Some(b) if spec.path.is_relative() => b.join(&spec.path),
        _ => spec.path.clone(),
    };
    let (header, rows) = read_table(&path)?;
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{}: missing column `{name}`", path.display())))
    };
    let target = col(&spec.target)?;
    let mut seen = HashSet::new();
    for name in spec.increasing.iter().chain(&spec.decreasing).chain(&spec.free) {
        col(name)?;
        if name == &spec.target {
            return Err(Error::Config(format!("target `{name}` cannot be a feature")));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::Config(format!("column `{name}` is annotated twice")));
        }
    }
    let mut names = Vec::new();
    let mut dirs = Vec::new();
    let mut cols = Vec::new();
    for (c, h) in header.iter().enumerate() {
        if c == target {
            continue;
        }
        let dir = if spec.increasing.contains(h) {
            Direction::Increasing
        } else if spec.decreasing.contains(h) {
            Direction::Decreasing
        } else if spec.free.is_empty() || spec.free.contains(h) {
            Direction::Free
        } else {
            continue;
        };
        names.push(h.clone());
        dirs.push(dir);
        cols.push(c);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no rows", path.display())));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.split_seed));
    let n_train = ((rows.len() as f64) * spec.train_fraction).round().max(1.0) as usize;
    let n_train = n_train.min(rows.len());
    let extract = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            idx.iter().map(|&r| cols.iter().map(|&c| rows[r][c]).collect()).collect(),
            idx.iter().map(|&r| rows[r][target]).collect(),
        )
    };
    let (mut xtr, ytr) = extract(&order[..n_train]);
    let (mut xte, yte) = extract(&order[n_train..]);
    if spec.task == Task::Classification {
        if let Some(bad) = ytr.iter().chain(&yte).find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data(format!(
                "classification target `{}` must be 0 or 1, found {bad}",
                spec.target
            )));
        }
    }
    let d = cols.len();
    for j in 0..d {
        let (mut shift, mut scale) = (0.0, 1.0);
        if spec.standardize {
            let m = xtr.iter().map(|r| r[j]).sum::<f64>() / n_train as f64;
            let var = xtr.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n_train as f64;
            shift = m;
            scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let sign = if dirs[j] == Direction::Decreasing { -1.0 } else { 1.0 };
        for r in xtr.iter_mut().chain(xte.iter_mut()) {
            r[j] = sign * (r[j] - shift) / scale;
        }
    }
    let source_annotation = FeatureAnnotation(dirs);
    Ok(LoadedData {
        train: Dataset::new(xtr, ytr)?,
        test: Dataset::new(xte, yte)?,
        feature_names: names,
        annotation: source_annotation.as_increasing(),
        source_annotation,
    })
}

/// Random tabular data that is monotone in the first `n_monotone` features
/// (increasing) and arbitrary in the rest, plus Gaussian-free uniform noise.
pub fn synthetic_monotone(n: usize, n_monotone: usize, n_free: usize, noise: f64, seed: u64) -> (Dataset, FeatureAnnotation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = n_monotone + n_free;
    let weights: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..1.0)).collect();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut y = 0.0;
        for (i, v) in x.iter().enumerate() {
            y += if i < n_monotone {
                weights[i] * (v + 0.5 * v.sin()).tanh() * 2.0
            } else {
                weights[i] * (2.0 * v).cos()
            };
        }
        y += noise * rng.gen_range(-1.0..1.0);
        xs.push(x);
        ys.push(y);
    }
    let mut dirs = vec![Direction::Increasing; n_monotone];
    dirs.extend(std::iter::repeat(Direction::Free).take(n_free));
    (Dataset { features: xs, targets: ys }, FeatureAnnotation(dirs))
}

/// Test-set metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Metrics {
    Regression { mse: f64, rmse: f64 },
    Classification { accuracy: f64 },
}

impl Metrics {
    pub fn primary(&self) -> (&'static str, f64) {
        match *self {
            Metrics::Regression { mse, .. } => ("mse", mse),
            Metrics::Classification { accuracy } => ("accuracy", accuracy),
        }
    }
}

/// MSE/RMSE for regression; accuracy of `logit ≥ 0` (probability ≥ 0.5)
/// for classification.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset, task: Task) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    check_dim("evaluation features", net.input_dim(), data.dim())?;
    let preds = predict(net, &data.features)?;
    let n = data.len() as f64;
    Ok(match task {
        Task::Regression => {
            let mse = preds
                .iter()
                .zip(&data.targets)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n;
            Metrics::Regression { mse, rmse: mse.sqrt() }
        }
        Task::Classification => {
            let hits = preds
                .iter()
                .zip(&data.targets)
                .filter(|(p, t)| (**p >= 0.0) == (**t == 1.0))
                .count();
            Metrics::Classification {
                accuracy: hits as f64 / n,
            }
        }
    })
}

/// A metric across seeds. `std` is the sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub metric: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl ExperimentResult {
    pub fn new(metric: impl Into<String>, values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        Self {
            metric: metric.into(),
            values,
            mean,
            std,
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// `[network]` section of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub parametrization: Parametrization,
    pub activation: String,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub free_hidden: Vec<usize>,
    #[serde(default)]
    pub free_activation: Option<String>,
    #[serde(default)]
    pub reparam: Reparam,
}

impl NetworkConfig {
    pub fn architecture(&self) -> Result<Architecture> {
        let act = ActivationSpec::parse(&self.activation)?;
        let mut arch = Architecture::new(self.parametrization, act, self.hidden.clone());
        arch.reparam = self.reparam;
        arch.free_hidden = self.free_hidden.clone();
        if let Some(f) = &self.free_activation {
            arch.free_activation = ActivationSpec::parse(f)?;
        }
        Ok(arch)
    }
}

/// `[experiment]` section of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Draw a fresh train/test split per seed (`split_seed = seed`) instead
    /// of reusing `dataset.split_seed`.
    #[serde(default = "default_true")]
    pub resplit: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            resplit: true,
        }
    }
}

/// A full config file: `[dataset]`, `[network]`, `[train]` and an optional
/// `[experiment]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub network: NetworkConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.train.validate()?;
        cfg.network.architecture()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Loss implied by the task.
    pub fn loss(&self) -> LossKind {
        match self.dataset.task {
            Task::Regression => LossKind::Mse,
            Task::Classification => LossKind::Bce,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

/// The split a given seed trains and evaluates on.
pub fn dataset_for_seed(cfg: &ExperimentConfig, base: Option<&Path>, seed: u64) -> Result<LoadedData> {
    if cfg.experiment.resplit {
        let spec = DatasetSpec {
            split_seed: seed,
            ..cfg.dataset.clone()
        };
        load_dataset(&spec, base)
    } else {
        load_dataset(&cfg.dataset, base)
    }
}

/// Outcome of one seeded training run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub network: Network<f64>,
    pub losses: Vec<f64>,
    pub metrics: Metrics,
}

/// Initializes with `seed`, trains with `seed` driving the shuffles and
/// evaluates on the test split.
///
/// Regression targets are standardized for training and the scaling is
/// folded back into the output layer, so the returned network predicts in
/// the original units.
pub fn run_seed(cfg: &ExperimentConfig, data: &LoadedData, seed: u64) -> Result<RunOutcome> {
    let arch = cfg.network.architecture()?;
    let net = init_params(&arch.build::<f64>(&data.annotation)?, seed);
    let train_cfg = TrainConfig {
        seed,
        loss: cfg.loss(),
        ..cfg.train.clone()
    };
    let (train, shift, scale) = match cfg.dataset.task {
        Task::Regression => {
            let (m, s) = mean_std_pop(&data.train.targets);
            let t = data.train.targets.iter().map(|y| (y - m) / s).collect();
            (Dataset::new(data.train.features.clone(), t)?, m, s)
        }
        Task::Classification => (data.train.clone(), 0.0, 1.0),
    };
    let fitted = fit(&net, &train, &train_cfg)?;
    let network = if scale != 1.0 || shift != 0.0 {
        fitted.network.scale_output(scale, shift)?
    } else {
        fitted.network
    };
    let eval_set = if data.test.is_empty() { &data.train } else { &data.test };
    let metrics = evaluate(&network, eval_set, cfg.dataset.task)?;
    Ok(RunOutcome {
        seed,
        network,
        losses: fitted.losses,
        metrics,
    })
}

fn mean_std_pop(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, if var > 0.0 { var.sqrt() } else { 1.0 })
}

/// Runs every configured seed and aggregates the primary test metric.
pub fn run_experiment(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<(ExperimentResult, Vec<RunOutcome>)> {
    let runs = cfg
        .experiment
        .seeds
        .iter()
        .map(|&seed| run_seed(cfg, &dataset_for_seed(cfg, base, seed)?, seed))
        .collect::<Result<Vec<_>>>()?;
    let metric = runs.first().map_or("mse", |r| r.metrics.primary().0);
    let values = runs.iter().map(|r| r.metrics.primary().1).collect();
    Ok((ExperimentResult::new(metric, values), runs))
}

/// Per-seed CSV: `seed,metric,value`.
pub fn experiment_csv(result: &ExperimentResult, runs: &[RunOutcome]) -> String {
    let mut out = String::from("seed,metric,value\n");
    for (r, v) in runs.iter().zip(&result.values) {
        let _ = writeln!(out, "{},{},{}", r.seed, result.metric, v);
    }
    out
}

// ---------------------------------------------------------------------------
// Toy task

/// Settings of the one-dimensional toy regression `cos(x) + x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub lo: f64,
    pub hi: f64,
    pub n_train: usize,
    pub n_grid: usize,
    pub width: usize,
    pub hidden_layers: usize,
    pub train: TrainConfig,
    pub init_seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            lo: -6.0,
            hi: 6.0,
            n_train: 256,
            n_grid: 241,
            width: 128,
            hidden_layers: 3,
            train: TrainConfig {
                learning_rate: 1e-3,
                epochs: 200,
                batch_size: 16,
                seed: 0,
                loss: LossKind::Mse,
                optimizer: Default::default(),
            },
            init_seed: 0,
        }
    }
}

pub fn toy_target(x: f64) -> f64 {
    x.cos() + x
}

impl ToyConfig {
    /// Standard deviation of the uniform distribution on `[lo, hi]`. Toy
    /// networks see `x / input_scale()` rather than raw `x`.
    pub fn input_scale(&self) -> f64 {
        (self.hi - self.lo) / 12f64.sqrt()
    }

    fn inputs(&self, xs: &[f64]) -> Vec<Vec<f64>> {
        let s = self.input_scale();
        xs.iter().map(|&x| vec![x / s]).collect()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// The four toy models: name, parametrization and activation.
pub fn toy_models() -> Vec<(&'static str, Parametrization, ActivationSpec)> {
    vec![
        ("unconstrained", Parametrization::Unconstrained, ActivationSpec::relu()),
        ("non_negative_relu", Parametrization::Constrained, ActivationSpec::relu()),
        ("non_negative_sigmoid", Parametrization::Constrained, ActivationSpec::sigmoid()),
        ("switch_post_relu", Parametrization::SwitchPost, ActivationSpec::relu()),
    ]
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    pub name: String,
    pub network: Network<f64>,
    pub losses: Vec<f64>,
    /// MSE on the training points after training.
    pub final_mse: f64,
    pub grid_predictions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyResult {
    pub grid: Vec<f64>,
    pub models: Vec<ToyModel>,
}

impl ToyResult {
    pub fn model(&self, name: &str) -> Option<&ToyModel> {
        self.models.iter().find(|m| m.name == name)
    }

    /// `epoch,<model>...` with one column of training loss per model.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch");
        for m in &self.models {
            let _ = write!(out, ",{}", m.name);
        }
        out.push('\n');
        let epochs = self.models.iter().map(|m| m.losses.len()).max().unwrap_or(0);
        for e in 0..epochs {
            let _ = write!(out, "{}", e + 1);
            for m in &self.models {
                let _ = write!(out, ",{}", m.losses.get(e).copied().unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        out
    }

    /// `x,target,<model>...` on the dense grid.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("x,target");
        for m in &self.models {
            let _ = write!(out, ",{}", m.name);
        }
        out.push('\n');
        for (i, &x) in self.grid.iter().enumerate() {
            let _ = write!(out, "{},{}", x, toy_target(x));
            for m in &self.models {
                let _ = write!(out, ",{}", m.grid_predictions[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Trains one toy model.
pub fn toy_model(cfg: &ToyConfig, name: &str, param: Parametrization, act: ActivationSpec) -> Result<ToyModel> {
    let xs = linspace(cfg.lo, cfg.hi, cfg.n_train);
    let data = Dataset::new(
        cfg.inputs(&xs),
        xs.iter().map(|&x| toy_target(x)).collect(),
    )?;
    let arch = Architecture::new(param, act, vec![cfg.width; cfg.hidden_layers]);
    let net = init_params(&arch.build::<f64>(&FeatureAnnotation::all_increasing(1))?, cfg.init_seed);
    let fitted = fit(&net, &data, &cfg.train)?;
    let final_mse = match evaluate(&fitted.network, &data, Task::Regression)? {
        Metrics::Regression { mse, .. } => mse,
        Metrics::Classification { .. } => unreachable!(),
    };
    let grid = linspace(cfg.lo, cfg.hi, cfg.n_grid);
    let grid_predictions = predict(&fitted.network, &cfg.inputs(&grid))?;
    Ok(ToyModel {
        name: name.to_string(),
        network: fitted.network,
        losses: fitted.losses,
        final_mse,
        grid_predictions,
    })
}

/// Trains the unconstrained, non-negative ReLU, non-negative sigmoid and
/// post-switch ReLU models on `cos(x) + x`.
pub fn toy_experiment(cfg: &ToyConfig) -> Result<ToyResult> {
    let models = toy_models()
        .into_iter()
        .map(|(name, p, a)| toy_model(cfg, name, p, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyResult {
        grid: linspace(cfg.lo, cfg.hi, cfg.n_grid),
        models,
    })
}

/// Midpoint-convexity flags of a toy model over the toy interval.
pub fn toy_convexity_flags(model: &ToyModel, cfg: &ToyConfig, n_pairs: usize, tol: f64, seed: u64) -> Result<usize> {
    let s = cfg.input_scale();
    let dom = DomainBox::cube(1, cfg.lo / s, cfg.hi / s);
    Ok(midpoint_convexity_check(&model.network, &dom, n_pairs, tol, seed)?.violations)
}

// ---------------------------------------------------------------------------
// Gradient diagnostics

/// Per-layer mean absolute gradients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    /// `(mean |∂f/∂W|, mean |∂f/∂b|, mean |∂f/∂input|)` per monotone layer.
    pub layers: Vec<(f64, f64, f64)>,
    /// Mean `|∂f/∂θ|` over every parameter.
    pub mean_abs_param_grad: f64,
}

/// Averages absolute gradients of the first output over `inputs`.
pub fn grad_report<T: Scalar>(net: &Network<T>, inputs: &[Vec<f64>]) -> Result<GradReport> {
    let n_layers = net.layers().len();
    let mut sums = vec![(0.0, 0.0, 0.0); n_layers];
    let mut total = 0.0;
    let mut up = vec![T::zero(); net.output_dim()];
    up[0] = T::one();
    for x in inputs {
        let xt: Vec<T> = x.iter().map(|&v| T::lit(v)).collect();
        let g = net.backward(&xt, &up)?;
        for (k, gp) in g.layers.iter().enumerate() {
            let mw = gp.dw.as_slice().iter().map(|v| v.as_f64().abs()).sum::<f64>() / gp.dw.as_slice().len() as f64;
            let mb = gp.db.iter().map(|v| v.as_f64().abs()).sum::<f64>() / gp.db.len() as f64;
            let mx = gp.dx.iter().map(|v| v.as_f64().abs()).sum::<f64>() / gp.dx.len().max(1) as f64;
            sums[k].0 += mw;
            sums[k].1 += mb;
            sums[k].2 += mx;
        }
        total += g.to_flat().iter().map(|v| v.as_f64().abs()).sum::<f64>() / net.param_count() as f64;
    }
    let n = inputs.len().max(1) as f64;
    Ok(GradReport {
        layers: sums.into_iter().map(|(a, b, c)| (a / n, b / n, c / n)).collect(),
        mean_abs_param_grad: total / n,
    })
}

/// Parametrizations compared by the depth sweep.
pub fn grad_depth_models() -> Vec<(&'static str, Parametrization, ActivationSpec)> {
    vec![
        ("constrained_relu", Parametrization::Constrained, ActivationSpec::relu()),
        ("constrained_sigmoid", Parametrization::Constrained, ActivationSpec::sigmoid()),
        ("switch_post_relu", Parametrization::SwitchPost, ActivationSpec::relu()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradDepthRow {
    pub model: String,
    pub depth: usize,
    pub seed: u64,
    pub mean_abs_grad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradDepthTable {
    pub rows: Vec<GradDepthRow>,
}

impl GradDepthTable {
    pub fn value(&self, model: &str, depth: usize, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.depth == depth && r.seed == seed)
            .map(|r| r.mean_abs_grad)
    }

    /// Mean over seeds.
    pub fn mean(&self, model: &str, depth: usize) -> f64 {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.model == model && r.depth == depth)
            .map(|r| r.mean_abs_grad)
            .collect();
        mean_std(&v).0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,depth,seed,mean_abs_grad\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.model, r.depth, r.seed, r.mean_abs_grad);
        }
        out
    }
}

/// Inputs per seed at which gradients are averaged.
const GRAD_INPUTS: usize = 16;

/// Mean `|∂f/∂θ|` of freshly initialized scalar networks at standardized
/// toy inputs, for each parametrization, depth (number of affine layers)
/// and seed.
pub fn grad_depth_experiment(depths: &[usize], width: usize, seeds: &[u64]) -> Result<GradDepthTable> {
    if depths.iter().any(|&d| !(2..=16).contains(&d)) {
        return Err(Error::Config("depths must lie in [2, 16]".into()));
    }
    let ann = FeatureAnnotation::all_increasing(1);
    let toy = ToyConfig::default();
    let mut rows = Vec::new();
    for (name, p, act) in grad_depth_models() {
        for &depth in depths {
            let arch = Architecture::new(p, act, vec![width; depth - 1]);
            let skeleton = arch.build::<f64>(&ann)?;
            for &seed in seeds {
                let net = init_params(&skeleton, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
                let inputs: Vec<Vec<f64>> = (0..GRAD_INPUTS)
                    .map(|_| vec![rng.gen_range(toy.lo..toy.hi) / toy.input_scale()])
                    .collect();
                let rep = grad_report(&net, &inputs)?;
                rows.push(GradDepthRow {
                    model: name.to_string(),
                    depth,
                    seed,
                    mean_abs_grad: rep.mean_abs_param_grad,
                });
            }
        }
    }
    Ok(GradDepthTable { rows })
}

/// Output statistics of freshly initialized networks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitOutputRow {
    pub model: String,
    pub width: usize,
    pub depth: usize,
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitOutputTable {
    pub rows: Vec<InitOutputRow>,
}

impl InitOutputTable {
    pub fn row(&self, model: &str, width: usize, depth: usize) -> Option<&InitOutputRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.width == width && r.depth == depth)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,width,depth,mean,std,samples\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.model, r.width, r.depth, r.mean, r.std, r.samples);
        }
        out
    }
}

/// Parametrizations compared by the init-output study.
pub fn init_output_models() -> Vec<(&'static str, Parametrization, ActivationSpec)> {
    vec![
        ("unconstrained", Parametrization::Unconstrained, ActivationSpec::relu()),
        ("constrained_relu", Parametrization::Constrained, ActivationSpec::relu()),
        ("switch_post_relu", Parametrization::SwitchPost, ActivationSpec::relu()),
    ]
}

/// Samples `n_samples` (init seed, input) pairs per configuration and
/// records the mean and standard deviation of the scalar output. `depth`
/// counts affine layers; inputs are uniform on `[-1, 1]^4`.
pub fn init_output_experiment(widths: &[usize], depths: &[usize], n_samples: usize, seed: u64) -> Result<InitOutputTable> {
    const IN_DIM: usize = 4;
    let ann = FeatureAnnotation::all_increasing(IN_DIM);
    let mut rows = Vec::new();
    for (name, p, act) in init_output_models() {
        for &width in widths {
            for &depth in depths {
                if depth == 0 {
                    return Err(Error::Config("depth must be >= 1".into()));
                }
                let skeleton = Architecture::new(p, act, vec![width; depth - 1]).build::<f64>(&ann)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut outs = Vec::with_capacity(n_samples);
                for _ in 0..n_samples {
                    let net = init_params(&skeleton, rng.gen());
                    let x: Vec<f64> = (0..IN_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    outs.push(net.forward_scalar(&x)?);
                }
                let (mean, std) = mean_std(&outs);
                rows.push(InitOutputRow {
                    model: name.to_string(),
                    width,
                    depth,
                    mean,
                    std,
                    samples: n_samples,
                });
            }
        }
    }
    Ok(InitOutputTable { rows })
}
