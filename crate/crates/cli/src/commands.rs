//! Subcommands of the `dpn` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpn_core::data::{self, GaussianMixtureSpec, LabeledDataset, UnlabeledDataset};
use dpn_core::eval;
use dpn_core::measures::{self, Measure, UncertaintyScores};
use dpn_core::net::{Activation, InputScaling, Mlp};
use dpn_core::train::{self, EpochStats, OptimizerKind};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::{PartialSettings, ScheduleKind, TrainSettings};
use crate::dataset;
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, RunManifest};
use crate::report::{EvalConfig, EvalReport};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DPN_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Parser)]
#[command(
    name = "dpn",
    version,
    about = "Dirichlet Prior Network experiments on synthetic data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the three-Gaussian dataset and out-of-distribution samples.
    Gen(GenArgs),
    /// Train a plain classifier or a Dirichlet Prior Network.
    Train(TrainArgs),
    /// Evaluate misclassification or out-of-distribution detection.
    Eval(EvalArgs),
    /// Evaluate uncertainty measures on a lattice over the plane.
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Class standard deviation.
    #[arg(long)]
    pub sigma: f64,
    /// Radius of the circle carrying the class means.
    #[arg(long, default_value_t = 4.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Training points per class.
    #[arg(long, default_value_t = 1000)]
    pub per_class: usize,
    /// Test points per class [default: --per-class].
    #[arg(long)]
    pub test_per_class: Option<usize>,
    /// Out-of-distribution training points [default: classes × per-class].
    #[arg(long)]
    pub ood_train: Option<usize>,
    /// Out-of-distribution test points [default: classes × test-per-class].
    #[arg(long)]
    pub ood_test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: $DPN_OUT_DIR or ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub kind: ModelKind,
    /// Labeled training data.
    #[arg(long)]
    pub data: PathBuf,
    /// Out-of-distribution training inputs (dpn only).
    #[arg(long)]
    pub ood: Option<PathBuf>,
    /// TOML settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of classes [default: largest label + 1].
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleKind>,
    #[arg(long)]
    pub cycle_len: Option<f64>,
    #[arg(long)]
    pub decay_rate: Option<f64>,
    /// Target precision of in-domain Dirichlets.
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Target smoothing.
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Weight of the auxiliary cross-entropy term.
    #[arg(long)]
    pub ce_weight: Option<f64>,
    /// Out-of-distribution examples per in-domain example in a batch.
    #[arg(long)]
    pub ood_ratio: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    /// Dropout keep probability of every hidden layer.
    #[arg(long)]
    pub keep_prob: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Feed raw features instead of standardising them with training-set
    /// mean and deviation.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path [default: <out dir>/<kind>.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss history CSV [default: next to the checkpoint].
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ActivationArg {
    Relu,
    LeakyRelu,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Nadam,
    Adam,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Misclass,
    Ood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    /// Softmax of one deterministic pass.
    Dnn,
    /// Monte-Carlo dropout ensemble.
    Mcdp,
    /// Dirichlet output of a Prior Network.
    Dpn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum MeasureArg {
    MaxProb,
    Entropy,
    MutualInformation,
    DifferentialEntropy,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::MaxProb => Measure::MaxProb,
            MeasureArg::Entropy => Measure::Entropy,
            MeasureArg::MutualInformation => Measure::MutualInformation,
            MeasureArg::DifferentialEntropy => Measure::DifferentialEntropy,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub task: Task,
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub model: PathBuf,
    /// In-domain test data (labeled for misclass).
    #[arg(long)]
    pub data: PathBuf,
    /// Out-of-distribution test inputs (ood only).
    #[arg(long)]
    pub ood: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub source: Source,
    /// Ensemble size for mcdp [default: 100].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Restrict the report to these measures [default: all the source provides].
    #[arg(long, value_enum)]
    pub measure: Vec<MeasureArg>,
    /// Keep every example instead of subsampling the larger set (ood only).
    #[arg(long)]
    pub no_balance: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path [default: <out dir>/report_<task>_<source>.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-example scores CSV.
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub source: Source,
    /// Measures to write, one file each [default: all the source provides].
    #[arg(long, value_enum)]
    pub measure: Vec<MeasureArg>,
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "-12,12")]
    pub x_range: (f64, f64),
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "-12,12")]
    pub y_range: (f64, f64),
    /// Points per axis.
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: $DPN_OUT_DIR or ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad number `{hi}`"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("need finite LO < HI, got `{s}`"));
    }
    Ok((lo, hi))
}

pub const DEFAULT_SAMPLES: usize = 100;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Grid(a) => grid(a),
    }
}

/// `$DPN_OUT_DIR`, or `out` in the working directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn finish(mut manifest: RunManifest, started: Instant, path: &Path) -> CliResult<()> {
    manifest.duration_secs = started.elapsed().as_secs_f64();
    manifest.save(path)
}

fn gen(a: GenArgs) -> CliResult<()> {
    let started = Instant::now();
    let spec = GaussianMixtureSpec::new(a.classes, a.radius, a.sigma, a.per_class)
        .map_err(CliError::from)?;
    let test_spec = GaussianMixtureSpec {
        per_class: a.test_per_class.unwrap_or(a.per_class),
        ..spec
    };
    test_spec.validate()?;
    let ood_train = a.ood_train.unwrap_or(spec.num_classes * spec.per_class);
    let ood_test = a
        .ood_test
        .unwrap_or(test_spec.num_classes * test_spec.per_class);
    if ood_train == 0 || ood_test == 0 {
        return Err(CliError::usage(
            "out-of-distribution sample counts must be positive",
        ));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(a.seed);
    let mut next = || seeds.next_u64();
    let (s_train, s_test, s_ood_train, s_ood_test) = (next(), next(), next(), next());
    let (inner, outer) = spec.ood_annulus();

    let train = data::generate_gaussian_classes(&spec, s_train)?;
    let test = data::generate_gaussian_classes(&test_spec, s_test)?;
    let ood_tr = data::sample_ood_annulus(inner, outer, ood_train, s_ood_train)?;
    let ood_te = data::sample_ood_annulus(inner, outer, ood_test, s_ood_test)?;

    let dir = a.out.unwrap_or_else(default_out_dir);
    ensure_dir(&dir)?;
    let config = json!({
        "sigma": a.sigma,
        "radius": a.radius,
        "classes": a.classes,
        "per_class": spec.per_class,
        "test_per_class": test_spec.per_class,
        "ood_train": ood_train,
        "ood_test": ood_test,
        "ood_annulus": [inner, outer],
        "seed": a.seed,
    });
    let mut manifest = RunManifest::new("gen", config, a.seed);
    let paths = [
        dir.join("train.csv"),
        dir.join("test.csv"),
        dir.join("ood_train.csv"),
        dir.join("ood_test.csv"),
    ];
    dataset::save_labeled(&train, &paths[0])?;
    dataset::save_labeled(&test, &paths[1])?;
    dataset::save_unlabeled(&ood_tr, &paths[2])?;
    dataset::save_unlabeled(&ood_te, &paths[3])?;
    for p in &paths {
        manifest.artifact(p);
        println!("wrote {}", p.display());
    }
    finish(manifest, started, &dir.join("manifest.json"))
}

impl TrainArgs {
    fn flags(&self) -> PartialSettings {
        PartialSettings {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            schedule: self.schedule,
            cycle_len: self.cycle_len,
            decay_rate: self.decay_rate,
            alpha0: self.alpha0,
            smoothing: self.smoothing,
            ce_weight: self.ce_weight,
            ood_ratio: self.ood_ratio,
            hidden: self.hidden.clone(),
            activation: self.activation.map(|a| match a {
                ActivationArg::Relu => Activation::Relu,
                ActivationArg::LeakyRelu => Activation::LeakyRelu,
            }),
            keep_prob: self.keep_prob,
            optimizer: self.optimizer.map(|o| match o {
                OptimizerArg::Nadam => OptimizerKind::Nadam,
                OptimizerArg::Adam => OptimizerKind::Adam,
                OptimizerArg::Momentum => OptimizerKind::Momentum,
            }),
            standardize: self.no_standardize.then_some(false),
            seed: self.seed,
        }
    }
}

/// The untrained network a run starts from.
pub fn initial_network(settings: &TrainSettings, data: &LabeledDataset) -> CliResult<Mlp> {
    let net = Mlp::he_init(
        data.dim(),
        &settings.hidden,
        data.num_classes(),
        settings.activation,
        settings.keep_prob,
        settings.seed,
    )?;
    let scaling = if settings.standardize {
        Some(InputScaling::fit(data.features(), data.dim())?)
    } else {
        None
    };
    Ok(net.with_input_scaling(scaling)?)
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let started = Instant::now();
    if a.kind == ModelKind::Dnn && a.ood.is_some() {
        return Err(CliError::usage("--ood only applies to `train dpn`"));
    }
    let from_file = match &a.config {
        Some(p) => PartialSettings::load(p)?,
        None => PartialSettings::default(),
    };
    let settings = TrainSettings::resolve(from_file.overlay(a.flags()), a.kind)?;
    let data = dataset::load_labeled(&a.data, a.classes)?;
    let ood = a.ood.as_deref().map(dataset::load_unlabeled).transpose()?;
    let net = initial_network(&settings, &data)?;
    let cfg = settings.train_config();
    let outcome = match a.kind {
        ModelKind::Dnn => train::train_dnn(net, &data, &cfg)?,
        ModelKind::Dpn => {
            let spec = settings
                .target_spec(data.num_classes())
                .expect("dpn settings carry a target")?;
            train::train_dpn(net, &data, ood.as_ref(), &spec, &cfg)?
        }
    };

    let out = a
        .out
        .unwrap_or_else(|| default_out_dir().join(format!("{}.json", a.kind.name())));
    let history = a.history.unwrap_or_else(|| {
        let stem = out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.with_file_name(format!("{stem}.history.csv"))
    });
    ensure_parent(&out)?;
    ensure_parent(&history)?;
    Checkpoint {
        kind: a.kind,
        net: outcome.net,
    }
    .save(&out)?;
    write_history(&outcome.history, &history)?;

    let config = json!({
        "kind": a.kind.name(),
        "data": a.data.display().to_string(),
        "ood": a.ood.as_ref().map(|p| p.display().to_string()),
        "classes": data.num_classes(),
        "settings": settings,
    });
    let mut manifest = RunManifest::new("train", config, settings.seed);
    manifest.artifact(&out);
    manifest.artifact(&history);
    if let Some(last) = outcome.history.last() {
        println!("epoch {} loss {:.6}", last.epoch, last.loss);
    }
    println!("wrote {}", out.display());
    finish(manifest, started, &manifest_path_for(&out))
}

fn write_history(history: &[EpochStats], path: &Path) -> CliResult<()> {
    let io = |e| CliError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "epoch,lr,loss,in_kl,ce,ood_kl").map_err(io)?;
    for s in history {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.epoch, s.lr, s.loss, s.in_kl, s.ce, s.ood_kl
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Measures a source can provide, in report order.
pub fn source_measures(source: Source) -> &'static [Measure] {
    match source {
        Source::Dnn => &Measure::ALL[..2],
        Source::Mcdp => &Measure::ALL[..3],
        Source::Dpn => &Measure::ALL,
    }
}

fn requested_measures(source: Source, requested: &[MeasureArg]) -> CliResult<Vec<Measure>> {
    let available = source_measures(source);
    if requested.is_empty() {
        return Ok(available.to_vec());
    }
    let mut out = Vec::new();
    for &m in requested {
        let m = Measure::from(m);
        if !available.contains(&m) {
            return Err(CliError::usage(format!(
                "measure {} is not available from source {}",
                m.label(),
                source_name(source)
            )));
        }
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out.sort();
    Ok(out)
}

pub fn source_name(source: Source) -> &'static str {
    match source {
        Source::Dnn => "dnn",
        Source::Mcdp => "mcdp",
        Source::Dpn => "dpn",
    }
}

/// Checks shared by `eval` and `grid`; returns the ensemble size for mcdp.
fn check_source(
    ckpt: &Checkpoint,
    source: Source,
    samples: Option<usize>,
) -> CliResult<Option<usize>> {
    if source == Source::Dpn && ckpt.kind != ModelKind::Dpn {
        return Err(CliError::usage(
            "source dpn needs a checkpoint trained with `train dpn`",
        ));
    }
    match (source, samples) {
        (Source::Mcdp, s) => {
            let s = s.unwrap_or(DEFAULT_SAMPLES);
            if s == 0 {
                return Err(CliError::usage("--samples must be at least 1"));
            }
            Ok(Some(s))
        }
        (_, Some(_)) => Err(CliError::usage("--samples only applies to source mcdp")),
        (_, None) => Ok(None),
    }
}

/// Uncertainty scores and predicted class of each row.
///
/// Ensemble member masks for row `i` come from a generator seeded by
/// `seed` and `i`, so a row's scores do not depend on the other rows.
pub fn score_rows<'a>(
    net: &Mlp,
    rows: impl Iterator<Item = &'a [f64]>,
    source: Source,
    samples: Option<usize>,
    seed: u64,
) -> CliResult<(Vec<UncertaintyScores>, Vec<usize>)> {
    let mut scores = Vec::new();
    let mut predicted = Vec::new();
    for (i, x) in rows.enumerate() {
        let (s, p) = match source {
            Source::Dnn => {
                let mu = net.predict_categorical(x)?;
                (measures::scores_from_categorical(&mu), mu.argmax())
            }
            Source::Mcdp => {
                let row_seed = seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let e = net.mc_dropout_predict(x, samples.unwrap_or(DEFAULT_SAMPLES), row_seed)?;
                (measures::scores_from_ensemble(&e), e.mean().argmax())
            }
            Source::Dpn => {
                let d = net.predict_dirichlet(x)?;
                (measures::scores_from_dirichlet(&d), d.mean().argmax())
            }
        };
        scores.push(s);
        predicted.push(p);
    }
    Ok((scores, predicted))
}

/// Indices of a seeded random subset of `0..n` of size `keep`, ascending.
fn subsample(n: usize, keep: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(keep);
    idx.sort_unstable();
    idx
}

fn check_dim(net: &Mlp, dim: usize, path: &Path) -> CliResult<()> {
    if net.input_dim() != dim {
        return Err(CliError::usage(format!(
            "{} has {dim} features, the model expects {}",
            path.display(),
            net.input_dim()
        )));
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> CliResult<()> {
    let started = Instant::now();
    let ckpt = Checkpoint::load(&a.model)?;
    let samples = check_source(&ckpt, a.source, a.samples)?;
    let wanted = requested_measures(a.source, &a.measure)?;
    match (a.task, &a.ood) {
        (Task::Misclass, Some(_)) => {
            return Err(CliError::usage("--ood only applies to `eval ood`"))
        }
        (Task::Misclass, None) if a.no_balance => {
            return Err(CliError::usage("--no-balance only applies to `eval ood`"))
        }
        (Task::Ood, None) => return Err(CliError::usage("`eval ood` needs --ood")),
        _ => {}
    }
    let net = &ckpt.net;
    let mut rows_out: Vec<ScoreRow> = Vec::new();
    let report = match a.task {
        Task::Misclass => {
            let data = dataset::load_labeled(&a.data, Some(net.output_dim()))?;
            check_dim(net, data.dim(), &a.data)?;
            let (scores, predicted) = score_rows(net, data.rows(), a.source, samples, a.seed)?;
            for (i, (s, (&p, &l))) in scores
                .iter()
                .zip(predicted.iter().zip(data.labels()))
                .enumerate()
            {
                rows_out.push(ScoreRow::new(i, "in", Some(l), p, s, p != l));
            }
            eval::misclassification_detection(&scores, &predicted, data.labels())?
        }
        Task::Ood => {
            let ood_path = a.ood.as_deref().expect("checked above");
            let in_data = dataset::load_unlabeled(&a.data)?;
            let out_data = dataset::load_unlabeled(ood_path)?;
            check_dim(net, in_data.dim(), &a.data)?;
            check_dim(net, out_data.dim(), ood_path)?;
            let (mut in_idx, mut out_idx): (Vec<usize>, Vec<usize>) =
                ((0..in_data.len()).collect(), (0..out_data.len()).collect());
            if !a.no_balance {
                let n = in_data.len().min(out_data.len());
                if in_data.len() > n {
                    in_idx = subsample(in_data.len(), n, a.seed);
                }
                if out_data.len() > n {
                    out_idx = subsample(out_data.len(), n, a.seed);
                }
            }
            let pick = |d: &UnlabeledDataset, idx: &[usize]| {
                idx.iter().map(|&i| d.row(i).to_vec()).collect::<Vec<_>>()
            };
            let in_rows = pick(&in_data, &in_idx);
            let out_rows = pick(&out_data, &out_idx);
            let (in_scores, in_pred) = score_rows(
                net,
                in_rows.iter().map(Vec::as_slice),
                a.source,
                samples,
                a.seed,
            )?;
            // Offset the ensemble seeds so the two sets never share masks.
            let (out_scores, out_pred) = score_rows(
                net,
                out_rows.iter().map(Vec::as_slice),
                a.source,
                samples,
                a.seed.wrapping_add(1),
            )?;
            for (k, (s, &p)) in in_scores.iter().zip(&in_pred).enumerate() {
                rows_out.push(ScoreRow::new(in_idx[k], "in", None, p, s, false));
            }
            for (k, (s, &p)) in out_scores.iter().zip(&out_pred).enumerate() {
                rows_out.push(ScoreRow::new(out_idx[k], "ood", None, p, s, true));
            }
            eval::ood_detection(&in_scores, &out_scores)?
        }
    };

    let config = EvalConfig {
        task: match a.task {
            Task::Misclass => "misclass",
            Task::Ood => "ood",
        }
        .to_string(),
        source: source_name(a.source).to_string(),
        model: a.model.display().to_string(),
        data: a.data.display().to_string(),
        ood: a.ood.as_ref().map(|p| p.display().to_string()),
        samples,
        balance: a.task == Task::Ood && !a.no_balance,
        seed: a.seed,
    };
    let mut report = EvalReport::new(config, &report);
    for m in Measure::ALL {
        if !wanted.contains(&m) {
            report.metrics.insert(m.key().to_string(), None);
        }
    }
    let out = a.out.unwrap_or_else(|| {
        default_out_dir().join(format!(
            "report_{}_{}.json",
            report.config.task, report.config.source
        ))
    });
    ensure_parent(&out)?;
    report.save(&out)?;
    let mut manifest = RunManifest::new(
        "eval",
        serde_json::to_value(&report.config).expect("json"),
        a.seed,
    );
    manifest.artifact(&out);
    if let Some(path) = &a.scores_out {
        ensure_parent(path)?;
        write_scores(&rows_out, path)?;
        manifest.artifact(path);
    }
    print!("{}", report.table());
    println!("wrote {}", out.display());
    finish(manifest, started, &manifest_path_for(&out))
}

struct ScoreRow {
    index: usize,
    set: &'static str,
    label: Option<usize>,
    predicted: usize,
    scores: UncertaintyScores,
    positive: bool,
}

impl ScoreRow {
    fn new(
        index: usize,
        set: &'static str,
        label: Option<usize>,
        predicted: usize,
        s: &UncertaintyScores,
        positive: bool,
    ) -> Self {
        Self {
            index,
            set,
            label,
            predicted,
            scores: *s,
            positive,
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_scores(rows: &[ScoreRow], path: &Path) -> CliResult<()> {
    let io = |e| CliError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(
        w,
        "index,set,label,predicted,positive,max_prob,entropy,mutual_information,differential_entropy"
    )
    .map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.index,
            r.set,
            opt(r.label),
            r.predicted,
            u8::from(r.positive),
            r.scores.max_prob,
            r.scores.entropy,
            opt(r.scores.mutual_information),
            opt(r.scores.differential_entropy),
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

fn grid(a: GridArgs) -> CliResult<()> {
    let started = Instant::now();
    let ckpt = Checkpoint::load(&a.model)?;
    if ckpt.net.input_dim() != 2 {
        return Err(CliError::usage(format!(
            "grid needs a model with 2 inputs, {} has {}",
            a.model.display(),
            ckpt.net.input_dim()
        )));
    }
    let samples = check_source(&ckpt, a.source, a.samples)?;
    let wanted = requested_measures(a.source, &a.measure)?;
    let points = data::grid_points(a.x_range, a.y_range, a.resolution)?;
    let (scores, _) = score_rows(&ckpt.net, points.rows(), a.source, samples, a.seed)?;

    let dir = a.out.unwrap_or_else(default_out_dir);
    ensure_dir(&dir)?;
    let config = json!({
        "model": a.model.display().to_string(),
        "source": source_name(a.source),
        "measures": wanted.iter().map(|m| m.key()).collect::<Vec<_>>(),
        "x_range": [a.x_range.0, a.x_range.1],
        "y_range": [a.y_range.0, a.y_range.1],
        "resolution": a.resolution,
        "samples": samples,
        "seed": a.seed,
    });
    let mut manifest = RunManifest::new("grid", config, a.seed);
    for &m in &wanted {
        let path = dir.join(format!("grid_{}_{}.csv", source_name(a.source), m.key()));
        let io = |e| CliError::io(&path, e);
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        writeln!(w, "x,y,value").map_err(io)?;
        for (p, s) in points.rows().zip(&scores) {
            let v = s.get(m).expect("measure checked against source");
            writeln!(w, "{},{},{}", p[0], p[1], v).map_err(io)?;
        }
        w.flush().map_err(io)?;
        println!("wrote {}", path.display());
        manifest.artifact(&path);
    }
    finish(
        manifest,
        started,
        &dir.join(format!("grid_{}.manifest.json", source_name(a.source))),
    )
}
