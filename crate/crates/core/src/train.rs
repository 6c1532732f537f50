//! Training objectives and loops.
//!
//! A DPN is trained in a multi-task fashion: in-domain inputs are pulled
//! towards a sharp Dirichlet focused on their (smoothed) label, and
//! out-of-distribution inputs towards the flat Dirichlet, both through the
//! forward KL `KL[target || model]`. An optional cross-entropy term weighted
//! by `ce_weight` is added for in-domain inputs.

use alloc::vec::Vec;
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::dirichlet::{Categorical, DirichletParams};
use crate::net::{Gradients, Mlp, LOGIT_CLAMP};
use crate::special::digamma_unchecked as digamma;
use crate::{Error, Result};

/// Learning rate reached at the end of a one-cycle schedule.
pub const ONE_CYCLE_FLOOR: f64 = 1e-6;

/// How in-domain targets are built: precision `α̂0` and label smoothing `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetSpec {
    pub target_precision: f64,
    pub smoothing: f64,
    pub num_classes: usize,
}

impl TargetSpec {
    pub fn new(target_precision: f64, smoothing: f64, num_classes: usize) -> Result<Self> {
        let spec = Self {
            target_precision,
            smoothing,
            num_classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes as f64;
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes", "need at least 2 classes"));
        }
        if !(self.smoothing > 0.0 && self.smoothing < 1.0 / k) {
            return Err(Error::invalid(
                "smoothing",
                alloc::format!("{} is not in (0, 1/K)", self.smoothing),
            ));
        }
        if !(1.0 - (k - 1.0) * self.smoothing > self.smoothing) {
            return Err(Error::invalid(
                "smoothing",
                "the labelled class must keep the largest target mass",
            ));
        }
        if !(self.target_precision.is_finite() && self.target_precision > k) {
            return Err(Error::invalid(
                "target_precision",
                alloc::format!(
                    "{} must be finite and exceed the class count",
                    self.target_precision
                ),
            ));
        }
        Ok(())
    }
}

/// Sharp in-domain target `α̂ = α̂0 · μ̂` with
/// `μ̂_c = 1 − (K−1)ε` on the label and `ε` elsewhere.
pub fn target_dirichlet_in(label: usize, spec: &TargetSpec) -> Result<DirichletParams> {
    spec.validate()?;
    if label >= spec.num_classes {
        return Err(Error::invalid(
            "label",
            alloc::format!("{label} >= {}", spec.num_classes),
        ));
    }
    let k = spec.num_classes as f64;
    let on = 1.0 - (k - 1.0) * spec.smoothing;
    let alpha = (0..spec.num_classes)
        .map(|c| spec.target_precision * if c == label { on } else { spec.smoothing })
        .collect();
    DirichletParams::new(alpha)
}

/// Flat out-of-distribution target `(1, …, 1)`.
pub fn target_dirichlet_out(num_classes: usize) -> Result<DirichletParams> {
    DirichletParams::flat(num_classes)
}

/// `KL[target || Dir(exp(z))]` and its gradient with respect to the logits.
///
/// With model concentrations `β = exp(z)`,
/// `∂KL/∂β_c = ψ(β_c) − ψ(β0) − ψ(α̂_c) + ψ(α̂0)` and `∂KL/∂z_c = β_c ∂KL/∂β_c`.
/// Coordinates whose logit lies outside the clamp range get zero gradient.
pub fn dpn_loss_and_grad(z: &[f64], target: &DirichletParams) -> Result<(f64, Vec<f64>)> {
    if z.len() != target.num_classes() {
        return Err(Error::DimensionMismatch {
            context: "dpn loss logits",
            expected: target.num_classes(),
            found: z.len(),
        });
    }
    let model = crate::net::to_dirichlet(z)?;
    let loss = target.kl_divergence(&model)?;
    let psi_model0 = digamma(model.precision());
    let psi_target0 = digamma(target.precision());
    let grad = z
        .iter()
        .zip(model.alpha())
        .zip(target.alpha())
        .map(|((&zc, &beta), &alpha)| {
            if zc.abs() > LOGIT_CLAMP {
                0.0
            } else {
                beta * (digamma(beta) - psi_model0 - digamma(alpha) + psi_target0)
            }
        })
        .collect();
    Ok((loss, grad))
}

/// `−ln softmax(z)_label` and its gradient `softmax(z) − onehot(label)`.
pub fn ce_loss_and_grad(z: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= z.len() {
        return Err(Error::invalid(
            "label",
            alloc::format!("{label} >= {}", z.len()),
        ));
    }
    if let Some(v) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain {
            function: "ce_loss_and_grad",
            value: *v,
            requirement: "finite logits",
        });
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let probs = Categorical::softmax(z);
    let mut grad = probs.probs().to_vec();
    grad[label] -= 1.0;
    Ok((log_sum - z[label], grad))
}

/// Learning-rate policy as a function of (fractional) epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LrSchedule {
    Constant {
        lr: f64,
    },
    /// `lr · rate^epoch`
    ExponentialDecay {
        lr: f64,
        rate: f64,
    },
    /// Linear ramp from `lr` to `10·lr` over half a cycle, back to `lr` by
    /// the end of the cycle, then linear decay to [`ONE_CYCLE_FLOOR`] at
    /// `total_epochs`.
    OneCycle {
        lr: f64,
        cycle_len: f64,
        total_epochs: f64,
    },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            // A zero constant rate is allowed; it freezes the parameters.
            LrSchedule::Constant { lr } if lr.is_finite() && lr >= 0.0 => Ok(()),
            LrSchedule::Constant { .. } => Err(Error::invalid("lr", "must be finite and >= 0")),
            LrSchedule::ExponentialDecay { lr, rate } => {
                if !(lr.is_finite() && lr > 0.0) {
                    Err(Error::invalid("lr", "must be finite and > 0"))
                } else if !(rate > 0.0 && rate <= 1.0) {
                    Err(Error::invalid("rate", "decay rate must be in (0, 1]"))
                } else {
                    Ok(())
                }
            }
            LrSchedule::OneCycle {
                lr,
                cycle_len,
                total_epochs,
            } => {
                if !(lr.is_finite() && lr > 0.0) {
                    Err(Error::invalid("lr", "must be finite and > 0"))
                } else if !(cycle_len.is_finite() && cycle_len > 0.0) {
                    Err(Error::invalid("cycle_len", "must be finite and > 0"))
                } else if !(total_epochs.is_finite() && total_epochs >= cycle_len) {
                    Err(Error::invalid(
                        "total_epochs",
                        "must be at least the cycle length",
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Learning rate at `epoch` (fractional epochs allowed).
    pub fn lr_at(&self, epoch: f64) -> Result<f64> {
        self.validate()?;
        let out_of_range = || Error::Domain {
            function: "lr_at",
            value: epoch,
            requirement: "0 <= epoch <= total epochs",
        };
        if !(epoch.is_finite() && epoch >= 0.0) {
            return Err(out_of_range());
        }
        Ok(match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::ExponentialDecay { lr, rate } => lr * rate.powf(epoch),
            LrSchedule::OneCycle {
                lr,
                cycle_len,
                total_epochs,
            } => {
                if epoch > total_epochs {
                    return Err(out_of_range());
                }
                let half = 0.5 * cycle_len;
                let peak = 10.0 * lr;
                if epoch <= half {
                    lerp(lr, peak, epoch / half)
                } else if epoch <= cycle_len {
                    lerp(peak, lr, (epoch - half) / half)
                } else {
                    lerp(
                        lr,
                        ONE_CYCLE_FLOOR,
                        (epoch - cycle_len) / (total_epochs - cycle_len),
                    )
                }
            }
        })
    }
}

/// `a(1−t) + bt`, exact at both ends.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a * (1.0 - t) + b * t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OptimizerKind {
    /// Adam with Nesterov momentum.
    Nadam,
    Adam,
    /// Heavy-ball momentum SGD, mainly for debugging.
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Nadam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment state for a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Result<Self> {
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !(unit(config.beta1) && unit(config.beta2)) {
            return Err(Error::invalid(
                "beta",
                "moment decay rates must be in [0, 1)",
            ));
        }
        if !(config.epsilon.is_finite() && config.epsilon > 0.0) {
            return Err(Error::invalid("epsilon", "must be finite and > 0"));
        }
        Ok(Self {
            config,
            step: 0,
            first: alloc::vec![0.0; num_params],
            second: alloc::vec![0.0; num_params],
        })
    }

    /// Apply one update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), self.first.len());
        debug_assert_eq!(grads.len(), self.first.len());
        self.step += 1;
        let OptimizerConfig {
            kind,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        match kind {
            OptimizerKind::Momentum => {
                for ((p, m), &g) in params.iter_mut().zip(&mut self.first).zip(grads) {
                    *m = beta1 * *m + g;
                    *p -= lr * *m;
                }
            }
            OptimizerKind::Adam | OptimizerKind::Nadam => {
                let t = self.step;
                let corr1 = 1.0 - beta1.powi(t);
                let corr1_next = 1.0 - beta1.powi(t + 1);
                let corr2 = 1.0 - beta2.powi(t);
                for (((p, m), v), &g) in params
                    .iter_mut()
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                    .zip(grads)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let direction = if kind == OptimizerKind::Nadam {
                        beta1 * *m / corr1_next + (1.0 - beta1) * g / corr1
                    } else {
                        *m / corr1
                    };
                    *p -= lr * direction / ((*v / corr2).sqrt() + epsilon);
                }
            }
        }
    }
}

/// Everything that controls a training run apart from the data and targets.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the auxiliary cross-entropy term on in-domain inputs.
    pub ce_weight: f64,
    /// Out-of-distribution examples per in-domain example in each batch.
    pub ood_ratio: f64,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: LrSchedule::Constant { lr: 1e-3 },
            epochs: 100,
            batch_size: 32,
            ce_weight: 0.0,
            ood_ratio: 1.0,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.ce_weight.is_finite() && self.ce_weight >= 0.0) {
            return Err(Error::invalid("ce_weight", "must be finite and >= 0"));
        }
        if !(self.ood_ratio.is_finite() && self.ood_ratio >= 0.0) {
            return Err(Error::invalid("ood_ratio", "must be finite and >= 0"));
        }
        if let LrSchedule::OneCycle { total_epochs, .. } = self.schedule {
            if (self.epochs as f64) > total_epochs {
                return Err(Error::invalid(
                    "epochs",
                    "exceeds the schedule's total epochs",
                ));
            }
        }
        Ok(())
    }
}

/// Per-epoch averages of the batch losses.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    pub loss: f64,
    pub in_kl: f64,
    pub ce: f64,
    pub ood_kl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Mlp,
    pub history: Vec<EpochStats>,
}

/// Loss terms and gradient of one mini-batch.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    /// `in_kl + ce_weight · ce + ood_kl`
    pub total: f64,
    /// Mean in-domain KL to the sharp targets.
    pub in_kl: f64,
    /// Mean in-domain cross-entropy (unweighted).
    pub ce: f64,
    /// Mean out-of-distribution KL to the flat target.
    pub ood_kl: f64,
    pub grads: Gradients,
}

/// What the in-domain part of a batch is trained against.
#[derive(Debug, Clone, Copy)]
pub enum InDomainObjective<'a> {
    /// Cross-entropy only (a plain classifier).
    CrossEntropy,
    /// KL to smoothed sharp Dirichlets, plus `ce_weight` times cross-entropy.
    Dirichlet {
        spec: &'a TargetSpec,
        ce_weight: f64,
    },
}

/// Multi-task loss and gradient of one batch.
///
/// `masks` supplies one set of dropout masks per example (in-domain examples
/// first, then out-of-distribution ones); `None` runs deterministically.
/// Gradients are accumulated sequentially in example order.
pub fn batch_loss(
    net: &Mlp,
    in_batch: &[(&[f64], usize)],
    ood_batch: &[&[f64]],
    objective: InDomainObjective<'_>,
    mut masks: Option<&mut dyn FnMut() -> Vec<Vec<f64>>>,
) -> Result<BatchLoss> {
    let mut grads = Gradients::zeros_like(net);
    let mut forward = |x: &[f64]| match masks.as_mut() {
        Some(draw) => net.forward_with_masks(x, draw()),
        None => net.forward(x, crate::net::Mode::Deterministic),
    };
    let (mut in_kl, mut ce) = (0.0, 0.0);
    if !in_batch.is_empty() {
        let scale = 1.0 / in_batch.len() as f64;
        for &(x, label) in in_batch {
            let (z, trace) = forward(x)?;
            let mut gz = alloc::vec![0.0; z.len()];
            match objective {
                InDomainObjective::CrossEntropy => {
                    let (l, g) = ce_loss_and_grad(&z, label)?;
                    ce += l;
                    gz = g;
                }
                InDomainObjective::Dirichlet { spec, ce_weight } => {
                    let (l, g) = dpn_loss_and_grad(&z, &target_dirichlet_in(label, spec)?)?;
                    in_kl += l;
                    gz.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    if ce_weight > 0.0 {
                        let (l, g) = ce_loss_and_grad(&z, label)?;
                        ce += l;
                        gz.iter_mut().zip(&g).for_each(|(a, b)| *a += ce_weight * b);
                    }
                }
            }
            grads.add_scaled(&net.backward(&trace, &gz)?, scale);
        }
        in_kl *= scale;
        ce *= scale;
    }
    let mut ood_kl = 0.0;
    if !ood_batch.is_empty() {
        let flat = target_dirichlet_out(net.output_dim())?;
        let scale = 1.0 / ood_batch.len() as f64;
        for &x in ood_batch {
            let (z, trace) = forward(x)?;
            let (l, g) = dpn_loss_and_grad(&z, &flat)?;
            ood_kl += l;
            grads.add_scaled(&net.backward(&trace, &g)?, scale);
        }
        ood_kl *= scale;
    }
    let ce_weight = match objective {
        InDomainObjective::CrossEntropy => 1.0,
        InDomainObjective::Dirichlet { ce_weight, .. } => ce_weight,
    };
    Ok(BatchLoss {
        total: in_kl + ce_weight * ce + ood_kl,
        in_kl,
        ce,
        ood_kl,
        grads,
    })
}

/// Train a Dirichlet Prior Network with the multi-task KL objective.
pub fn train_dpn(
    net: Mlp,
    in_data: &LabeledDataset,
    ood_data: Option<&UnlabeledDataset>,
    spec: &TargetSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    spec.validate()?;
    if spec.num_classes != net.output_dim() || spec.num_classes != in_data.num_classes() {
        return Err(Error::DimensionMismatch {
            context: "class count of targets, network and data",
            expected: net.output_dim(),
            found: spec.num_classes,
        });
    }
    if let Some(ood) = ood_data {
        if ood.is_empty() {
            return Err(Error::invalid(
                "ood_data",
                "out-of-distribution set is empty",
            ));
        }
        if ood.dim() != net.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "out-of-distribution features",
                expected: net.input_dim(),
                found: ood.dim(),
            });
        }
    }
    let objective = InDomainObjective::Dirichlet {
        spec,
        ce_weight: cfg.ce_weight,
    };
    run(net, in_data, ood_data, objective, cfg)
}

/// Train a plain softmax classifier with cross-entropy.
pub fn train_dnn(net: Mlp, in_data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if in_data.num_classes() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "class count of network and data",
            expected: net.output_dim(),
            found: in_data.num_classes(),
        });
    }
    run(net, in_data, None, InDomainObjective::CrossEntropy, cfg)
}

fn run(
    mut net: Mlp,
    in_data: &LabeledDataset,
    ood_data: Option<&UnlabeledDataset>,
    objective: InDomainObjective<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if in_data.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "in-domain features",
            expected: net.input_dim(),
            found: in_data.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, net.num_params())?;
    let mut params = net.params();
    let mut order: Vec<usize> = (0..in_data.len()).collect();
    let ood_data = ood_data.filter(|_| cfg.ood_ratio > 0.0);
    let mut ood_order: Vec<usize> = ood_data.map(|d| (0..d.len()).collect()).unwrap_or_default();
    ood_order.shuffle(&mut rng);
    let mut ood_cursor = 0;
    let batches_per_epoch = in_data.len().div_ceil(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut first_lr = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let lr = cfg
                .schedule
                .lr_at(epoch as f64 + batch as f64 / batches_per_epoch as f64)?;
            if batch == 0 {
                first_lr = lr;
            }
            let in_batch: Vec<(&[f64], usize)> = chunk
                .iter()
                .map(|&i| (in_data.row(i), in_data.labels()[i]))
                .collect();
            let mut ood_batch: Vec<&[f64]> = Vec::new();
            if let Some(ood) = ood_data {
                let wanted = (cfg.ood_ratio * chunk.len() as f64).round() as usize;
                for _ in 0..wanted {
                    if ood_cursor == ood_order.len() {
                        ood_order.shuffle(&mut rng);
                        ood_cursor = 0;
                    }
                    ood_batch.push(ood.row(ood_order[ood_cursor]));
                    ood_cursor += 1;
                }
            }
            let mut draw = || net.sample_masks(&mut rng);
            let diverged = |loss: f64| Error::NonFiniteLoss {
                loss,
                step,
                epoch,
                batch,
                lr,
            };
            // Data is validated up front, so a domain error here means the
            // parameters have blown up and produced non-finite logits.
            let loss = batch_loss(&net, &in_batch, &ood_batch, objective, Some(&mut draw))
                .map_err(|e| match e {
                    Error::Domain { .. } => diverged(f64::NAN),
                    other => other,
                })?;
            let flat_grads = loss.grads.flatten();
            if !loss.total.is_finite() || flat_grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged(loss.total));
            }
            optimizer.step(&mut params, &flat_grads, lr);
            net.set_params(&params)?;
            for (s, v) in sums
                .iter_mut()
                .zip([loss.total, loss.in_kl, loss.ce, loss.ood_kl])
            {
                *s += v;
            }
            step += 1;
        }
        let n = batches_per_epoch as f64;
        history.push(EpochStats {
            epoch,
            lr: first_lr,
            loss: sums[0] / n,
            in_kl: sums[1] / n,
            ce: sums[2] / n,
            ood_kl: sums[3] / n,
        });
    }
    Ok(TrainOutcome { net, history })
}
