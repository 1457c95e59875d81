//! Experiment runner: config files, the training loop, per-epoch metrics,
//! sweeps and plot-ready exports.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{circle_centers, load_csv, make_blobs, make_two_moons, split_semi, Dataset, LabelBudget, SemiSplit};
use crate::distill::{StrategyConfig, StrategyKind};
use crate::error::{AdsError, Result};
use crate::net::{init, sgd_step, Activation, InitScheme, Net, NetSpec, OptimizerState};
use crate::objective::{total_objective, Batch, Distance, LossBreakdown, ObjectiveConfig, Perturbation};
use crate::probtransform::{argmax, softmax, sparsemax, Transform};

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    TwoMoons {
        n: usize,
        noise: f64,
    },
    /// `classes` isotropic clusters centred on a circle in the first two
    /// coordinates.
    Blobs {
        n: usize,
        classes: usize,
        dim: usize,
        spread: f64,
        radius: f64,
    },
    Csv {
        path: PathBuf,
        classes: usize,
    },
}

impl DatasetSpec {
    pub fn build(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSpec::TwoMoons { n, noise } => make_two_moons(*n, *noise, seed),
            DatasetSpec::Blobs {
                n,
                classes,
                dim,
                spread,
                radius,
            } => make_blobs(*n, &circle_centers(*classes, *dim, *radius), *spread, seed),
            DatasetSpec::Csv { path, classes } => load_csv(path, *classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub labels: LabelBudget,
    pub test_fraction: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init: InitScheme,
    pub strategy: StrategyConfig,
    pub objective: ObjectiveConfig,
    pub epochs: usize,
    /// `None` means `min(|L|, 64)`.
    pub batch_labeled: Option<usize>,
    pub batch_unlabeled: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs over which `beta` ramps up as `exp(-5 (1 - t)^2)`; 0 disables.
    pub rampup_epochs: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::TwoMoons { n: 1206, noise: 0.1 },
            labels: LabelBudget::PerClass(3),
            test_fraction: 200.0 / 1206.0,
            hidden: vec![16, 16],
            activation: Activation::Relu,
            init: InitScheme::Normal,
            strategy: StrategyConfig::new(StrategyKind::Ads),
            objective: ObjectiveConfig::default(),
            epochs: 200,
            batch_labeled: None,
            batch_unlabeled: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            rampup_epochs: 0,
            seed: 0,
            output_dir: None,
        }
    }
}

fn bad_value(key: &str, value: &str) -> String {
    format!("invalid value {value:?} for key `{key}`")
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| bad_value(key, value))
}

fn choice<T>(key: &str, value: &str, parsed: Option<T>) -> std::result::Result<T, String> {
    parsed.ok_or_else(|| bad_value(key, value))
}

/// Dataset keys collected before the variant is known.
#[derive(Default)]
struct DatasetKeys {
    kind: Option<String>,
    n: Option<usize>,
    noise: Option<f64>,
    classes: Option<usize>,
    dim: Option<usize>,
    spread: Option<f64>,
    radius: Option<f64>,
    csv_path: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses flat `key = value` text. `#` starts a comment; keys that are
    /// not set keep their defaults; unknown keys are errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut ds = DatasetKeys::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| AdsError::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| parse_err(format!("expected `key = value`, got {line:?}")))?;
            cfg.set(key, value, &mut ds).map_err(parse_err)?;
        }
        cfg.dataset = build_dataset_spec(ds, &cfg.dataset)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AdsError::io(path, e))?;
        Self::parse(&text, path)
    }

    fn set(&mut self, key: &str, value: &str, ds: &mut DatasetKeys) -> std::result::Result<(), String> {
        match key {
            "dataset" => ds.kind = Some(value.to_string()),
            "n" => ds.n = Some(num(key, value)?),
            "noise" => ds.noise = Some(num(key, value)?),
            "classes" => ds.classes = Some(num(key, value)?),
            "dim" => ds.dim = Some(num(key, value)?),
            "spread" => ds.spread = Some(num(key, value)?),
            "radius" => ds.radius = Some(num(key, value)?),
            "csv_path" => ds.csv_path = Some(PathBuf::from(value)),
            "labels_per_class" => {
                self.labels = if value == "all" {
                    LabelBudget::All
                } else {
                    LabelBudget::PerClass(num(key, value)?)
                }
            }
            "test_fraction" => self.test_fraction = num(key, value)?,
            "hidden" => {
                self.hidden = if value.is_empty() || value == "none" {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|w| num(key, w.trim()))
                        .collect::<std::result::Result<_, _>>()?
                }
            }
            "activation" => self.activation = choice(key, value, Activation::parse(value))?,
            "init" => self.init = choice(key, value, InitScheme::parse(value))?,
            "strategy" => self.strategy.kind = choice(key, value, StrategyKind::parse(value))?,
            "transform" => self.strategy.transform = choice(key, value, Transform::parse(value))?,
            "r" => self.strategy.r = num(key, value)?,
            "lambda" => self.strategy.lambda = num(key, value)?,
            "tau_pl" => self.strategy.tau_pl = num(key, value)?,
            "tau_ns" => self.strategy.tau_ns = if value == "auto" { None } else { Some(num(key, value)?) },
            "m_fixed" => self.strategy.m_fixed = num(key, value)?,
            "alpha" => self.objective.alpha = num(key, value)?,
            "beta" => self.objective.beta = num(key, value)?,
            "consistency_dist" => self.objective.consistency_dist = choice(key, value, Distance::parse(value))?,
            "consistency_transform" => {
                self.objective.consistency_transform = choice(key, value, Transform::parse(value))?
            }
            "supervised_transform" => {
                self.objective.supervised_transform = choice(key, value, Transform::parse(value))?
            }
            "perturbation" => self.objective.perturbation = choice(key, value, Perturbation::parse(value))?,
            "epsilon_vat" => self.objective.epsilon_vat = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_labeled" => self.batch_labeled = if value == "auto" { None } else { Some(num(key, value)?) },
            "batch_unlabeled" => self.batch_unlabeled = num(key, value)?,
            "lr" => self.learning_rate = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "rampup_epochs" => self.rampup_epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(AdsError::Config("epochs must be >= 1".into()));
        }
        if self.batch_unlabeled == 0 || self.batch_labeled == Some(0) {
            return Err(AdsError::Config("batch sizes must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(AdsError::Config("hidden widths must be >= 1".into()));
        }
        self.strategy.validate()?;
        self.objective.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(AdsError::InvalidParameter(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(AdsError::InvalidParameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    /// Canonical `key = value` form; parsing it gives back this config.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.dataset {
            DatasetSpec::TwoMoons { n, noise } => {
                kv("dataset", "two_moons".into());
                kv("n", n.to_string());
                kv("noise", noise.to_string());
            }
            DatasetSpec::Blobs {
                n,
                classes,
                dim,
                spread,
                radius,
            } => {
                kv("dataset", "blobs".into());
                kv("n", n.to_string());
                kv("classes", classes.to_string());
                kv("dim", dim.to_string());
                kv("spread", spread.to_string());
                kv("radius", radius.to_string());
            }
            DatasetSpec::Csv { path, classes } => {
                kv("dataset", "csv".into());
                kv("csv_path", path.display().to_string());
                kv("classes", classes.to_string());
            }
        }
        kv(
            "labels_per_class",
            match self.labels {
                LabelBudget::All => "all".into(),
                LabelBudget::PerClass(n) => n.to_string(),
            },
        );
        kv("test_fraction", self.test_fraction.to_string());
        kv(
            "hidden",
            if self.hidden.is_empty() {
                "none".into()
            } else {
                self.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",")
            },
        );
        kv("activation", self.activation.name().into());
        kv("init", self.init.name().into());
        let s = &self.strategy;
        kv("strategy", s.kind.name().into());
        kv("transform", s.transform.name().into());
        kv("r", s.r.to_string());
        kv("lambda", s.lambda.to_string());
        kv("tau_pl", s.tau_pl.to_string());
        kv("tau_ns", s.tau_ns.map_or("auto".into(), |t| t.to_string()));
        kv("m_fixed", s.m_fixed.to_string());
        let o = &self.objective;
        kv("alpha", o.alpha.to_string());
        kv("beta", o.beta.to_string());
        kv("consistency_dist", o.consistency_dist.name().into());
        kv("consistency_transform", o.consistency_transform.name().into());
        kv("supervised_transform", o.supervised_transform.name().into());
        kv("perturbation", o.perturbation.name().into());
        kv("epsilon_vat", o.epsilon_vat.to_string());
        kv("epochs", self.epochs.to_string());
        kv(
            "batch_labeled",
            self.batch_labeled.map_or("auto".into(), |b| b.to_string()),
        );
        kv("batch_unlabeled", self.batch_unlabeled.to_string());
        kv("lr", self.learning_rate.to_string());
        kv("momentum", self.momentum.to_string());
        kv("rampup_epochs", self.rampup_epochs.to_string());
        kv("seed", self.seed.to_string());
        if let Some(dir) = &self.output_dir {
            kv("output_dir", dir.display().to_string());
        }
        out
    }
}

fn build_dataset_spec(ds: DatasetKeys, current: &DatasetSpec) -> Result<DatasetSpec> {
    let kind = match (&ds.kind, current) {
        (Some(k), _) => k.as_str(),
        (None, DatasetSpec::TwoMoons { .. }) => "two_moons",
        (None, DatasetSpec::Blobs { .. }) => "blobs",
        (None, DatasetSpec::Csv { .. }) => "csv",
    };
    let unused = |names: &[(&str, bool)]| -> Result<()> {
        match names.iter().find(|(_, set)| *set) {
            Some((name, _)) => Err(AdsError::Config(format!(
                "key `{name}` does not apply to dataset `{kind}`"
            ))),
            None => Ok(()),
        }
    };
    match kind {
        "two_moons" => {
            unused(&[
                ("classes", ds.classes.is_some()),
                ("dim", ds.dim.is_some()),
                ("spread", ds.spread.is_some()),
                ("radius", ds.radius.is_some()),
                ("csv_path", ds.csv_path.is_some()),
            ])?;
            Ok(DatasetSpec::TwoMoons {
                n: ds.n.unwrap_or(1206),
                noise: ds.noise.unwrap_or(0.1),
            })
        }
        "blobs" => {
            unused(&[("noise", ds.noise.is_some()), ("csv_path", ds.csv_path.is_some())])?;
            Ok(DatasetSpec::Blobs {
                n: ds.n.unwrap_or(1000),
                classes: ds.classes.unwrap_or(10),
                dim: ds.dim.unwrap_or(2),
                spread: ds.spread.unwrap_or(0.5),
                radius: ds.radius.unwrap_or(5.0),
            })
        }
        "csv" => {
            unused(&[
                ("n", ds.n.is_some()),
                ("noise", ds.noise.is_some()),
                ("dim", ds.dim.is_some()),
                ("spread", ds.spread.is_some()),
                ("radius", ds.radius.is_some()),
            ])?;
            let path = ds
                .csv_path
                .ok_or_else(|| AdsError::Config("dataset `csv` needs `csv_path`".into()))?;
            let classes = ds
                .classes
                .ok_or_else(|| AdsError::Config("dataset `csv` needs `classes`".into()))?;
            Ok(DatasetSpec::Csv { path, classes })
        }
        other => Err(AdsError::Config(format!("unknown dataset `{other}`"))),
    }
}

/// Independent seed for one consumer of the run seed.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

const STREAM_DATA: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_TRAIN: u64 = 4;
const STREAM_EVAL: u64 = 5;

/// Metrics recorded after each epoch; epoch 0 is the untrained model.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub test_error: f64,
    pub p_bar_1: f64,
    pub m_bar: f64,
    pub top_m_acc: f64,
    pub histogram: [u64; HISTOGRAM_BINS],
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    pub epochs: Vec<EpochMetrics>,
    pub net: Net,
}

impl RunHistory {
    pub fn last(&self) -> &EpochMetrics {
        self.epochs.last().expect("history holds the epoch-0 row")
    }
}

fn nonempty(pool: &[&[f64]], what: &str) -> Result<()> {
    if pool.is_empty() {
        return Err(AdsError::InvalidInput(format!("{what} needs a nonempty pool")));
    }
    Ok(())
}

/// Mean over the pool of the largest softmax probability.
pub fn avg_dominant_probability(net: &Net, pool: &[&[f64]]) -> Result<f64> {
    nonempty(pool, "average dominant probability")?;
    let mut total = 0.0;
    for x in pool {
        let p = softmax(&net.forward(x)?);
        total += p.probs()[p.argmax()];
    }
    Ok(total / pool.len() as f64)
}

/// Mean sparsemax support size, and the fraction of examples whose label
/// lies in their own support.
pub fn avg_sparsity_and_topm(net: &Net, pool: &[&[f64]], labels: &[usize]) -> Result<(f64, f64)> {
    nonempty(pool, "sparsity")?;
    if labels.len() != pool.len() {
        return Err(AdsError::InvalidInput("one label per pool example required".into()));
    }
    let mut m_total = 0usize;
    let mut hits = 0usize;
    for (x, &y) in pool.iter().zip(labels) {
        let p = sparsemax(&net.forward(x)?).dist;
        m_total += p.support().len();
        hits += usize::from(p.in_support(y));
    }
    let n = pool.len() as f64;
    Ok((m_total as f64 / n, hits as f64 / n))
}

/// Bin of a probability in `[0, 0.1), ..., [0.9, 1.0]`.
pub fn histogram_bin(v: f64) -> usize {
    ((v * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// Counts all `K` softmax values of every pool example.
pub fn prediction_histogram(net: &Net, pool: &[&[f64]]) -> Result<[u64; HISTOGRAM_BINS]> {
    let mut bins = [0u64; HISTOGRAM_BINS];
    for x in pool {
        for &v in softmax(&net.forward(x)?).probs() {
            bins[histogram_bin(v)] += 1;
        }
    }
    Ok(bins)
}

/// Fraction of pool examples whose logit argmax differs from the label.
pub fn classification_error(net: &Net, pool: &[&[f64]], labels: &[usize]) -> Result<f64> {
    nonempty(pool, "classification error")?;
    let mut wrong = 0usize;
    for (x, &y) in pool.iter().zip(labels) {
        wrong += usize::from(argmax(net.forward(x)?.as_slice()) != y);
    }
    Ok(wrong as f64 / pool.len() as f64)
}

struct Pools<'a> {
    labeled: Vec<(&'a [f64], usize)>,
    unlabeled: Vec<&'a [f64]>,
    unlabeled_labels: Vec<usize>,
    test: Vec<&'a [f64]>,
    test_labels: Vec<usize>,
}

impl<'a> Pools<'a> {
    fn new(ds: &'a Dataset, split: &SemiSplit) -> Self {
        let x = |i: &usize| ds.features[*i].as_slice();
        Pools {
            labeled: split.labeled_idx.iter().map(|i| (x(i), ds.labels[*i])).collect(),
            unlabeled: split.unlabeled_idx.iter().map(x).collect(),
            unlabeled_labels: split.unlabeled_idx.iter().map(|i| ds.labels[*i]).collect(),
            test: split.test_idx.iter().map(x).collect(),
            test_labels: split.test_idx.iter().map(|i| ds.labels[*i]).collect(),
        }
    }

    /// Pool the diagnostics run on: unlabeled, or labeled when nothing is
    /// unlabeled.
    fn diagnostic(&self) -> (Vec<&'a [f64]>, Vec<usize>) {
        if self.unlabeled.is_empty() {
            self.labeled.iter().cloned().unzip()
        } else {
            (self.unlabeled.clone(), self.unlabeled_labels.clone())
        }
    }
}

fn evaluate(net: &Net, pools: &Pools<'_>, epoch: usize, losses: LossBreakdown) -> Result<EpochMetrics> {
    let (pool, labels) = pools.diagnostic();
    let (m_bar, top_m_acc) = avg_sparsity_and_topm(net, &pool, &labels)?;
    Ok(EpochMetrics {
        epoch,
        losses,
        test_error: classification_error(net, &pools.test, &pools.test_labels)?,
        p_bar_1: avg_dominant_probability(net, &pool)?,
        m_bar,
        top_m_acc,
        histogram: prediction_histogram(net, &pool)?,
    })
}

pub const METRICS_HEADER: &str = "epoch,j_s,j_c,j_d,total,test_error,p_bar_1,m_bar,top_m_acc";

fn histogram_header() -> String {
    let mut h = String::from("epoch");
    for b in 0..HISTOGRAM_BINS {
        let _ = write!(h, ",bin_{b}");
    }
    h
}

fn metrics_row(m: &EpochMetrics) -> String {
    let l = &m.losses;
    format!(
        "{},{},{},{},{},{},{},{},{}",
        m.epoch, l.j_s, l.j_c, l.j_d, l.total, m.test_error, m.p_bar_1, m.m_bar, m.top_m_acc
    )
}

fn histogram_row(m: &EpochMetrics) -> String {
    let mut row = m.epoch.to_string();
    for c in m.histogram {
        let _ = write!(row, ",{c}");
    }
    row
}

struct RunWriter {
    dir: PathBuf,
    metrics: BufWriter<File>,
    histogram: BufWriter<File>,
}

impl RunWriter {
    fn create(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| AdsError::io(dir, e))?;
        let echo = dir.join("config.echo");
        fs::write(&echo, cfg.to_config_text()).map_err(|e| AdsError::io(&echo, e))?;
        let open = |name: &str, header: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| AdsError::io(&path, e))?);
            writeln!(w, "{header}").map_err(|e| AdsError::io(&path, e))?;
            Ok(w)
        };
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            metrics: open("metrics.csv", METRICS_HEADER)?,
            histogram: open("histogram.csv", &histogram_header())?,
        })
    }

    fn append(&mut self, m: &EpochMetrics) -> Result<()> {
        let dir = &self.dir;
        writeln!(self.metrics, "{}", metrics_row(m))
            .and_then(|_| self.metrics.flush())
            .map_err(|e| AdsError::io(dir.join("metrics.csv"), e))?;
        writeln!(self.histogram, "{}", histogram_row(m))
            .and_then(|_| self.histogram.flush())
            .map_err(|e| AdsError::io(dir.join("histogram.csv"), e))
    }
}

fn check_finite(l: &LossBreakdown, epoch: usize) -> Result<()> {
    if [l.j_s, l.j_c, l.j_d, l.total].iter().all(|v| v.is_finite()) {
        return Ok(());
    }
    Err(AdsError::Numerical(format!(
        "epoch {epoch}: non-finite loss (j_s={}, j_c={}, j_d={}, total={})",
        l.j_s, l.j_c, l.j_d, l.total
    )))
}

/// Weight multiplier for `epoch` (1-based) under a ramp of `rampup` epochs.
pub fn rampup_weight(epoch: usize, rampup: usize) -> f64 {
    if rampup == 0 || epoch >= rampup {
        return 1.0;
    }
    let t = epoch as f64 / rampup as f64;
    (-5.0 * (1.0 - t).powi(2)).exp()
}

/// Trains per `cfg`, recording metrics before training and after every
/// epoch. When `cfg.output_dir` is set the run directory is written as it
/// goes and the final weights are checkpointed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunHistory> {
    cfg.validate()?;
    let ds = cfg.dataset.build(sub_seed(cfg.seed, STREAM_DATA))?;
    let split = split_semi(&ds, cfg.labels, cfg.test_fraction, sub_seed(cfg.seed, STREAM_SPLIT))?;
    if split.test_idx.is_empty() {
        return Err(AdsError::Config("test pool is empty; raise test_fraction".into()));
    }
    let pools = Pools::new(&ds, &split);

    let mut dims = vec![ds.dim()];
    dims.extend(&cfg.hidden);
    dims.push(ds.num_classes);
    let spec = NetSpec {
        dims,
        activation: cfg.activation,
        init: cfg.init,
    };
    let mut net = init(&spec, sub_seed(cfg.seed, STREAM_INIT))?;
    let mut opt = OptimizerState::new(&net, cfg.learning_rate, cfg.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, STREAM_TRAIN));
    let mut writer = cfg
        .output_dir
        .as_deref()
        .map(|d| RunWriter::create(d, cfg))
        .transpose()?;

    let batch_l = cfg.batch_labeled.unwrap_or(pools.labeled.len().min(64));
    let batch_u = cfg.batch_unlabeled;
    let steps = if pools.unlabeled.is_empty() {
        pools.labeled.len().div_ceil(batch_l)
    } else {
        pools.unlabeled.len().div_ceil(batch_u)
    };

    let initial = {
        let batch = Batch {
            labeled: &pools.labeled,
            unlabeled: &pools.unlabeled,
        };
        let mut eval_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, STREAM_EVAL));
        total_objective(&batch, &cfg.strategy, &cfg.objective, &net, &mut eval_rng)?.0
    };
    check_finite(&initial, 0)?;
    let mut history = vec![evaluate(&net, &pools, 0, initial)?];
    if let Some(w) = writer.as_mut() {
        w.append(&history[0])?;
    }

    let mut labeled_order: Vec<usize> = (0..pools.labeled.len()).collect();
    let mut labeled_cursor = labeled_order.len();
    let mut unlabeled_order: Vec<usize> = (0..pools.unlabeled.len()).collect();
    let mut lb: Vec<(&[f64], usize)> = Vec::with_capacity(batch_l);
    let mut ub: Vec<&[f64]> = Vec::with_capacity(batch_u);

    for epoch in 1..=cfg.epochs {
        let objective = ObjectiveConfig {
            beta: cfg.objective.beta * rampup_weight(epoch, cfg.rampup_epochs),
            ..cfg.objective.clone()
        };
        unlabeled_order.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        for step in 0..steps {
            lb.clear();
            while lb.len() < batch_l {
                if labeled_cursor == labeled_order.len() {
                    labeled_order.shuffle(&mut rng);
                    labeled_cursor = 0;
                }
                lb.push(pools.labeled[labeled_order[labeled_cursor]]);
                labeled_cursor += 1;
            }
            ub.clear();
            let lo = (step * batch_u).min(unlabeled_order.len());
            let hi = ((step + 1) * batch_u).min(unlabeled_order.len());
            ub.extend(unlabeled_order[lo..hi].iter().map(|&i| pools.unlabeled[i]));

            let batch = Batch {
                labeled: &lb,
                unlabeled: &ub,
            };
            let (losses, grads) = total_objective(&batch, &cfg.strategy, &objective, &net, &mut rng)?;
            check_finite(&losses, epoch)?;
            sgd_step(&mut net, &grads, &mut opt)
                .map_err(|e| AdsError::Numerical(format!("epoch {epoch}, step {step}: {e}")))?;
            sums[0] += losses.j_s;
            sums[1] += losses.j_c;
            sums[2] += losses.j_d;
        }
        let n = steps as f64;
        let losses = LossBreakdown::new(sums[0] / n, sums[1] / n, sums[2] / n, &objective);
        let m = evaluate(&net, &pools, epoch, losses)?;
        if let Some(w) = writer.as_mut() {
            w.append(&m)?;
        }
        history.push(m);
    }

    if let Some(w) = &writer {
        net.save_checkpoint(&w.dir.join("checkpoint.bin"))?;
    }
    Ok(RunHistory { epochs: history, net })
}

/// Final test errors of one strategy across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub strategy: StrategyKind,
    pub test_errors: Vec<f64>,
    pub p_bar_1: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; 0 for a single value.
fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl SweepRow {
    pub fn mean_error(&self) -> f64 {
        mean(&self.test_errors)
    }

    pub fn std_error(&self) -> f64 {
        sample_std(&self.test_errors)
    }

    pub fn mean_p_bar_1(&self) -> f64 {
        mean(&self.p_bar_1)
    }
}

pub const SWEEP_HEADER: &str = "strategy,mean_test_error,std_test_error,seeds,mean_p_bar_1";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.strategy.name(),
                r.mean_error(),
                r.std_error(),
                r.test_errors.len(),
                r.mean_p_bar_1()
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10} {:>22} {:>8}\n", "strategy", "test error (mean±std)", "p_bar_1");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:>13.4} ± {:<6.4} {:>8.4}",
                r.strategy.name(),
                r.mean_error(),
                r.std_error(),
                r.mean_p_bar_1()
            );
        }
        out
    }
}

/// Runs every strategy under every seed. Per-run directories go under
/// `base.output_dir` as `<strategy>_seed<seed>`, next to `sweep.csv` and
/// `table.txt`.
pub fn run_sweep(base: &ExperimentConfig, strategies: &[StrategyKind], seeds: &[u64]) -> Result<SweepTable> {
    if strategies.is_empty() || seeds.is_empty() {
        return Err(AdsError::Config(
            "a sweep needs at least one strategy and one seed".into(),
        ));
    }
    let mut rows = Vec::with_capacity(strategies.len());
    for &kind in strategies {
        let mut row = SweepRow {
            strategy: kind,
            test_errors: Vec::new(),
            p_bar_1: Vec::new(),
        };
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.strategy.kind = kind;
            cfg.seed = seed;
            cfg.output_dir = base
                .output_dir
                .as_ref()
                .map(|d| d.join(format!("{}_seed{seed}", kind.name())));
            let h = run_experiment(&cfg)?;
            row.test_errors.push(h.last().test_error);
            row.p_bar_1.push(h.last().p_bar_1);
        }
        rows.push(row);
    }
    let table = SweepTable { rows };
    if let Some(dir) = &base.output_dir {
        fs::create_dir_all(dir).map_err(|e| AdsError::io(dir, e))?;
        for (name, body) in [("sweep.csv", table.to_csv()), ("table.txt", table.to_text())] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| AdsError::io(&path, e))?;
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Curves,
    Histograms,
    Table,
}

impl ExportKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "curves" => Some(ExportKind::Curves),
            "histograms" => Some(ExportKind::Histograms),
            "table" => Some(ExportKind::Table),
            _ => None,
        }
    }
}

fn read_rows(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| AdsError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(AdsError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header {header:?}"),
        });
    }
    Ok(lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

/// Plot-ready CSV from a run directory (or, for `Table`, a sweep directory).
///
/// * `Curves`: `epoch,test_error,p_bar_1,m_bar,top_m_acc`.
/// * `Histograms`: long format `epoch,bin_lo,bin_hi,fraction`.
/// * `Table`: the sweep summary, or the final metrics row of a single run.
pub fn export(run_dir: &Path, what: ExportKind) -> Result<String> {
    match what {
        ExportKind::Curves => {
            let rows = read_rows(&run_dir.join("metrics.csv"), METRICS_HEADER)?;
            let mut out = String::from("epoch,test_error,p_bar_1,m_bar,top_m_acc\n");
            for r in rows {
                let _ = writeln!(out, "{},{},{},{},{}", r[0], r[5], r[6], r[7], r[8]);
            }
            Ok(out)
        }
        ExportKind::Histograms => {
            let path = run_dir.join("histogram.csv");
            let rows = read_rows(&path, &histogram_header())?;
            let mut out = String::from("epoch,bin_lo,bin_hi,fraction\n");
            for (i, r) in rows.iter().enumerate() {
                let counts: Vec<u64> = r[1..]
                    .iter()
                    .map(|c| c.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| AdsError::Parse {
                        path: path.clone(),
                        line: i + 2,
                        msg: "non-integer bin count".into(),
                    })?;
                let total: u64 = counts.iter().sum::<u64>().max(1);
                for (b, c) in counts.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{:.1},{:.1},{}",
                        r[0],
                        b as f64 / HISTOGRAM_BINS as f64,
                        (b + 1) as f64 / HISTOGRAM_BINS as f64,
                        *c as f64 / total as f64
                    );
                }
            }
            Ok(out)
        }
        ExportKind::Table => {
            let sweep = run_dir.join("sweep.csv");
            if sweep.exists() {
                return fs::read_to_string(&sweep).map_err(|e| AdsError::io(&sweep, e));
            }
            let rows = read_rows(&run_dir.join("metrics.csv"), METRICS_HEADER)?;
            let last = rows
                .last()
                .ok_or_else(|| AdsError::State("metrics.csv has no rows".into()))?;
            Ok(format!("{METRICS_HEADER}\n{}\n", last.join(",")))
        }
    }
}
