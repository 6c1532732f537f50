//! Training settings: built-in defaults, overridden by a TOML file,
//! overridden by command-line flags.
//!
//! ```toml
//! epochs = 100
//! batch_size = 32
//! lr = 1e-3
//! schedule = "one_cycle"   # constant | exponential_decay | one_cycle
//! cycle_len = 70
//! alpha0 = 100
//! smoothing = 0.01
//! ce_weight = 0.0
//! ood_ratio = 1.0
//! hidden = [50]
//! activation = "relu"      # relu | leaky_relu
//! keep_prob = 1.0
//! optimizer = "nadam"      # nadam | adam | momentum
//! standardize = true
//! seed = 0
//! ```

use std::path::Path;

use dpn_core::net::Activation;
use dpn_core::train::{LrSchedule, OptimizerConfig, OptimizerKind, TargetSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelKind;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    ExponentialDecay,
    OneCycle,
}

/// Every setting optional, as read from a config file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialSettings {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub schedule: Option<ScheduleKind>,
    pub cycle_len: Option<f64>,
    pub decay_rate: Option<f64>,
    pub alpha0: Option<f64>,
    pub smoothing: Option<f64>,
    pub ce_weight: Option<f64>,
    pub ood_ratio: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub keep_prob: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub standardize: Option<bool>,
    pub seed: Option<u64>,
}

impl PartialSettings {
    pub fn from_toml(text: &str, path: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::parse(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: PartialSettings) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            epochs,
            batch_size,
            lr,
            schedule,
            cycle_len,
            decay_rate,
            alpha0,
            smoothing,
            ce_weight,
            ood_ratio,
            hidden,
            activation,
            keep_prob,
            optimizer,
            standardize,
            seed
        )
    }

    /// Names of the settings that only make sense for a DPN.
    fn dpn_only(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.alpha0.is_some() {
            out.push("alpha0");
        }
        if self.smoothing.is_some() {
            out.push("smoothing");
        }
        if self.ce_weight.is_some() {
            out.push("ce_weight");
        }
        if self.ood_ratio.is_some() {
            out.push("ood_ratio");
        }
        out
    }
}

/// Fully resolved settings of one training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub schedule: ScheduleKind,
    pub cycle_len: Option<f64>,
    pub decay_rate: Option<f64>,
    pub alpha0: Option<f64>,
    pub smoothing: Option<f64>,
    pub ce_weight: Option<f64>,
    pub ood_ratio: Option<f64>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub keep_prob: f64,
    pub optimizer: OptimizerKind,
    pub standardize: bool,
    pub seed: u64,
}

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_BATCH: usize = 32;
pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_ALPHA0: f64 = 100.0;
pub const DEFAULT_SMOOTHING: f64 = 0.01;
pub const DEFAULT_HIDDEN: usize = 50;
/// Fraction of the run spent in the one-cycle phase when `cycle_len` is unset.
pub const DEFAULT_CYCLE_FRACTION: f64 = 0.7;
pub const DEFAULT_DECAY_RATE: f64 = 0.97;

impl TrainSettings {
    /// Fill unset fields with defaults and reject settings that do not apply
    /// to `kind`.
    pub fn resolve(p: PartialSettings, kind: ModelKind) -> CliResult<Self> {
        if kind == ModelKind::Dnn {
            let extra = p.dpn_only();
            if !extra.is_empty() {
                return Err(CliError::usage(format!(
                    "{} only apply to `train dpn`",
                    extra.join(", ")
                )));
            }
        }
        let schedule = p.schedule.unwrap_or(ScheduleKind::Constant);
        if p.cycle_len.is_some() && schedule != ScheduleKind::OneCycle {
            return Err(CliError::usage("cycle_len needs schedule one_cycle"));
        }
        if p.decay_rate.is_some() && schedule != ScheduleKind::ExponentialDecay {
            return Err(CliError::usage(
                "decay_rate needs schedule exponential_decay",
            ));
        }
        let epochs = p.epochs.unwrap_or(DEFAULT_EPOCHS);
        let dpn = kind == ModelKind::Dpn;
        let settings = Self {
            epochs,
            batch_size: p.batch_size.unwrap_or(DEFAULT_BATCH),
            lr: p.lr.unwrap_or(DEFAULT_LR),
            schedule,
            cycle_len: match schedule {
                ScheduleKind::OneCycle => Some(
                    p.cycle_len
                        .unwrap_or(DEFAULT_CYCLE_FRACTION * epochs as f64),
                ),
                _ => None,
            },
            decay_rate: match schedule {
                ScheduleKind::ExponentialDecay => Some(p.decay_rate.unwrap_or(DEFAULT_DECAY_RATE)),
                _ => None,
            },
            alpha0: dpn.then(|| p.alpha0.unwrap_or(DEFAULT_ALPHA0)),
            smoothing: dpn.then(|| p.smoothing.unwrap_or(DEFAULT_SMOOTHING)),
            ce_weight: dpn.then(|| p.ce_weight.unwrap_or(0.0)),
            ood_ratio: dpn.then(|| p.ood_ratio.unwrap_or(1.0)),
            hidden: p.hidden.unwrap_or_else(|| vec![DEFAULT_HIDDEN]),
            activation: p.activation.unwrap_or(Activation::Relu),
            keep_prob: p.keep_prob.unwrap_or(1.0),
            optimizer: p.optimizer.unwrap_or(OptimizerKind::Nadam),
            standardize: p.standardize.unwrap_or(true),
            seed: p.seed.unwrap_or(0),
        };
        if settings.hidden.contains(&0) {
            return Err(CliError::usage("hidden layer widths must be positive"));
        }
        settings.train_config().validate()?;
        Ok(settings)
    }

    pub fn schedule(&self) -> LrSchedule {
        match self.schedule {
            ScheduleKind::Constant => LrSchedule::Constant { lr: self.lr },
            ScheduleKind::ExponentialDecay => LrSchedule::ExponentialDecay {
                lr: self.lr,
                rate: self.decay_rate.unwrap_or(DEFAULT_DECAY_RATE),
            },
            ScheduleKind::OneCycle => LrSchedule::OneCycle {
                lr: self.lr,
                cycle_len: self
                    .cycle_len
                    .unwrap_or(DEFAULT_CYCLE_FRACTION * self.epochs as f64),
                total_epochs: self.epochs as f64,
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            schedule: self.schedule(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            ce_weight: self.ce_weight.unwrap_or(0.0),
            ood_ratio: self.ood_ratio.unwrap_or(0.0),
            optimizer: OptimizerConfig {
                kind: self.optimizer,
                ..OptimizerConfig::default()
            },
            seed: self.seed,
        }
    }

    /// Target specification for a DPN over `num_classes`; `None` for a DNN.
    pub fn target_spec(&self, num_classes: usize) -> Option<CliResult<TargetSpec>> {
        let (alpha0, smoothing) = (self.alpha0?, self.smoothing?);
        Some(TargetSpec::new(alpha0, smoothing, num_classes).map_err(CliError::from))
    }
}
