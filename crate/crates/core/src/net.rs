//! A small fully-connected classifier with inverted dropout and exact
//! backpropagation.
//!
//! The network maps features to logits `z`. A plain classifier reads them
//! through a softmax; a Dirichlet Prior Network reads them as concentrations
//! `α_c = exp(z_c)` (see [`to_dirichlet`]).

use alloc::vec::Vec;
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dirichlet::{Categorical, DirichletParams};
use crate::measures::EnsemblePrediction;
use crate::{Error, Result};

/// Logits are clamped to `[-LOGIT_CLAMP, LOGIT_CLAMP]` before exponentiation,
/// keeping every concentration within `[~9.4e-14, ~1.1e13]`.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Slope of the leaky ReLU on negative inputs.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Relu,
    LeakyRelu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match (self, x > 0.0) {
            (_, true) => 1.0,
            (Activation::Relu, false) => 0.0,
            (Activation::LeakyRelu, false) => LEAKY_SLOPE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "leaky_relu" | "leaky-relu" => Some(Activation::LeakyRelu),
            _ => None,
        }
    }
}

/// One affine layer. `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: alloc::vec![0.0; inputs * outputs],
            bias: alloc::vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Network topology plus parameters.
///
/// `keep_probs[i]` is the dropout keep probability applied to the output of
/// hidden layer `i`, so there is one entry per layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    activation: Activation,
    keep_probs: Vec<f64>,
    input_scaling: Option<InputScaling>,
}

/// Fixed per-feature affine map `(x − shift) / scale` applied to the input
/// before the first layer. It is not trained.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InputScaling {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    pub fn new(shift: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if shift.len() != scale.len() {
            return Err(Error::DimensionMismatch {
                context: "input scaling",
                expected: shift.len(),
                found: scale.len(),
            });
        }
        if shift.iter().any(|v| !v.is_finite())
            || scale.iter().any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::invalid(
                "input_scaling",
                "shift must be finite and scale finite and > 0",
            ));
        }
        Ok(Self { shift, scale })
    }

    /// Per-feature mean and (population) standard deviation of a row-major
    /// `N × dim` matrix. A constant feature gets scale 1.
    pub fn fit(features: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || features.is_empty() || features.len() % dim != 0 {
            return Err(Error::invalid(
                "features",
                "need a non-empty N x dim matrix",
            ));
        }
        let n = (features.len() / dim) as f64;
        let mut mean = alloc::vec![0.0; dim];
        for row in features.chunks_exact(dim) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; dim];
        for row in features.chunks_exact(dim) {
            var.iter_mut()
                .zip(row)
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self::new(mean, scale)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (s, c))| (v - s) / c)
            .collect()
    }
}

impl Mlp {
    /// Assemble a network from explicit layers, validating the topology.
    pub fn from_layers(
        layers: Vec<Dense>,
        activation: Activation,
        keep_probs: Vec<f64>,
    ) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::invalid(
                "layers",
                "a network needs at least one layer",
            ));
        };
        if last.outputs < 2 {
            return Err(Error::invalid(
                "layers",
                "output dimension must be at least 2",
            ));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs == 0 || layer.outputs == 0 {
                return Err(Error::invalid(
                    "layers",
                    alloc::format!("layer {i} has a zero dimension"),
                ));
            }
            if layer.weights.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return Err(Error::invalid(
                    "layers",
                    alloc::format!(
                        "layer {i} parameter arrays do not match {}x{}",
                        layer.outputs,
                        layer.inputs
                    ),
                ));
            }
            if layer
                .weights
                .iter()
                .chain(&layer.bias)
                .any(|v| !v.is_finite())
            {
                return Err(Error::invalid(
                    "layers",
                    alloc::format!("layer {i} has non-finite parameters"),
                ));
            }
            if i > 0 && layers[i - 1].outputs != layer.inputs {
                return Err(Error::DimensionMismatch {
                    context: "layer chain",
                    expected: layers[i - 1].outputs,
                    found: layer.inputs,
                });
            }
        }
        if keep_probs.len() != layers.len() - 1 {
            return Err(Error::DimensionMismatch {
                context: "keep probabilities (one per hidden layer)",
                expected: layers.len() - 1,
                found: keep_probs.len(),
            });
        }
        if let Some(p) = keep_probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::invalid(
                "keep_prob",
                alloc::format!("{p} is not in (0, 1]"),
            ));
        }
        Ok(Self {
            layers,
            activation,
            keep_probs,
            input_scaling: None,
        })
    }

    /// Attach (or with `None`, remove) a fixed input scaling.
    pub fn with_input_scaling(mut self, scaling: Option<InputScaling>) -> Result<Self> {
        if let Some(s) = &scaling {
            if s.shift.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    context: "input scaling",
                    expected: self.input_dim(),
                    found: s.shift.len(),
                });
            }
        }
        self.input_scaling = scaling;
        Ok(self)
    }

    pub fn input_scaling(&self) -> Option<&InputScaling> {
        self.input_scaling.as_ref()
    }

    /// A network with every weight and bias zero.
    pub fn zeros(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        keep_prob: f64,
    ) -> Result<Self> {
        let dims = chain_dims(input_dim, hidden, output_dim);
        let layers = dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self::from_layers(layers, activation, alloc::vec![keep_prob; hidden.len()])
    }

    /// He-normal initialisation: weights `N(0, 2/fan_in)`, zero biases.
    pub fn he_init(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        keep_prob: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_dim, hidden, output_dim, activation, keep_prob)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let std = (2.0 / layer.inputs as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive standard deviation");
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = normal.sample(&mut rng));
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn keep_probs(&self) -> &[f64] {
        &self.keep_probs
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Overwrite all parameters from the layout produced by [`params`](Self::params).
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                context: "flat parameters",
                expected: self.num_params(),
                found: flat.len(),
            });
        }
        let mut rest = flat;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.weights.copy_from_slice(w);
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    /// Forward pass.
    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<(Vec<f64>, ForwardTrace)> {
        match mode {
            Mode::Deterministic => self.forward_with_rng::<ChaCha8Rng>(x, None),
            Mode::Stochastic { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                self.forward_with_rng(x, Some(&mut rng))
            }
        }
    }

    /// Forward pass drawing dropout masks from `rng`; `None` disables dropout.
    pub fn forward_with_rng<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        rng: Option<&mut R>,
    ) -> Result<(Vec<f64>, ForwardTrace)> {
        let masks = match rng {
            None => self
                .keep_probs
                .iter()
                .zip(&self.layers)
                .map(|(_, l)| alloc::vec![1.0; l.outputs])
                .collect(),
            Some(rng) => self.sample_masks(rng),
        };
        self.forward_with_masks(x, masks)
    }

    /// Draw one set of inverted-dropout masks: each entry is `0` or `1/keep`.
    pub fn sample_masks<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        self.keep_probs
            .iter()
            .zip(&self.layers)
            .map(|(&keep, layer)| {
                if keep >= 1.0 {
                    alloc::vec![1.0; layer.outputs]
                } else {
                    let scale = 1.0 / keep;
                    (0..layer.outputs)
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                scale
                            } else {
                                0.0
                            }
                        })
                        .collect()
                }
            })
            .collect()
    }

    /// Forward pass with explicit dropout masks (one per hidden layer).
    pub fn forward_with_masks(
        &self,
        x: &[f64],
        masks: Vec<Vec<f64>>,
    ) -> Result<(Vec<f64>, ForwardTrace)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if masks.len() != self.keep_probs.len()
            || masks
                .iter()
                .zip(&self.layers)
                .any(|(m, l)| m.len() != l.outputs)
        {
            return Err(Error::invalid(
                "masks",
                "mask shapes do not match the hidden layers",
            ));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut current = match &self.input_scaling {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        };
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&current);
            inputs.push(current);
            if i == last {
                preacts.push(z.clone());
                current = z;
            } else {
                current = z
                    .iter()
                    .zip(&masks[i])
                    .map(|(&v, &m)| self.activation.apply(v) * m)
                    .collect();
                preacts.push(z);
            }
        }
        Ok((
            current,
            ForwardTrace {
                inputs,
                preacts,
                masks,
            },
        ))
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// gradient with respect to the logits and the trace of the forward pass
    /// that produced them.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &[f64]) -> Result<Gradients> {
        if trace.inputs.len() != self.layers.len()
            || trace
                .inputs
                .iter()
                .zip(&trace.preacts)
                .zip(&self.layers)
                .any(|((a, z), l)| a.len() != l.inputs || z.len() != l.outputs)
        {
            return Err(Error::invalid(
                "trace",
                "trace does not match the network topology",
            ));
        }
        if grad_logits.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "logit gradient",
                expected: self.output_dim(),
                found: grad_logits.len(),
            });
        }
        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.inputs, l.outputs))
            .collect();
        let mut delta = grad_logits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.inputs[i];
            let g = &mut grads[i];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] = d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(w, &a)| *w = d * a);
            }
            if i > 0 {
                let mut upstream = alloc::vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    upstream.iter_mut().zip(row).for_each(|(u, &w)| *u += w * d);
                }
                let act = self.activation;
                delta = upstream
                    .iter()
                    .zip(&trace.masks[i - 1])
                    .zip(&trace.preacts[i - 1])
                    .map(|((&u, &m), &z)| u * m * act.derivative(z))
                    .collect();
            }
        }
        Ok(Gradients { layers: grads })
    }

    /// Softmax prediction of a deterministic forward pass.
    pub fn predict_categorical(&self, x: &[f64]) -> Result<Categorical> {
        let (z, _) = self.forward(x, Mode::Deterministic)?;
        Ok(Categorical::softmax(&z))
    }

    /// Dirichlet prediction of a deterministic forward pass.
    pub fn predict_dirichlet(&self, x: &[f64]) -> Result<DirichletParams> {
        let (z, _) = self.forward(x, Mode::Deterministic)?;
        to_dirichlet(&z)
    }

    /// Monte-Carlo dropout ensemble of `samples` stochastic forward passes.
    /// All passes draw their masks from one generator seeded with `seed`.
    pub fn mc_dropout_predict(
        &self,
        x: &[f64],
        samples: usize,
        seed: u64,
    ) -> Result<EnsemblePrediction> {
        if samples == 0 {
            return Err(Error::invalid(
                "samples",
                "an ensemble needs at least one member",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members = (0..samples)
            .map(|_| {
                self.forward_with_rng(x, Some(&mut rng))
                    .map(|(z, _)| Categorical::softmax(&z))
            })
            .collect::<Result<Vec<_>>>()?;
        EnsemblePrediction::new(members)
    }
}

fn chain_dims(input_dim: usize, hidden: &[usize], output_dim: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    dims
}

/// Whether dropout is active in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// No dropout. Inverted dropout needs no rescaling at inference.
    Deterministic,
    /// Sample Bernoulli(keep) masks from a generator seeded with `seed`.
    Stochastic { seed: u64 },
}

/// Values retained by a forward pass for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Input to each layer.
    pub inputs: Vec<Vec<f64>>,
    /// Affine output of each layer, before activation.
    pub preacts: Vec<Vec<f64>>,
    /// Dropout scale factors applied after each hidden activation.
    pub masks: Vec<Vec<f64>>,
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    /// Flatten in the same order as [`Mlp::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights
                .iter_mut()
                .zip(&b.weights)
                .for_each(|(x, y)| *x += scale * y);
            a.bias
                .iter_mut()
                .zip(&b.bias)
                .for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }
}

/// `exp` of a clamped logit.
pub fn concentration(z: f64) -> f64 {
    z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP).exp()
}

/// Read logits as Dirichlet concentrations, `α_c = exp(clamp(z_c))`.
pub fn to_dirichlet(z: &[f64]) -> Result<DirichletParams> {
    if let Some(v) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain {
            function: "to_dirichlet",
            value: *v,
            requirement: "finite logits",
        });
    }
    DirichletParams::new(z.iter().map(|&v| concentration(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn random_net(seed: u64, activation: Activation, keep: f64) -> Mlp {
        let mut net = Mlp::he_init(3, &[5, 4], 3, activation, keep, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
        let noisy: Vec<f64> = net
            .params()
            .iter()
            .map(|p| p + rng.random_range(-0.3..0.3))
            .collect();
        net.set_params(&noisy).unwrap();
        net
    }

    #[test]
    fn zero_network_gives_flat_dirichlet() {
        let net = Mlp::zeros(2, &[50], 3, Activation::LeakyRelu, 1.0).unwrap();
        let (z, _) = net.forward(&[3.0, -1.0], Mode::Deterministic).unwrap();
        assert_eq!(z, vec![0.0; 3]);
        assert_eq!(to_dirichlet(&z).unwrap().alpha(), &[1.0, 1.0, 1.0]);
        assert_eq!(Categorical::softmax(&z), Categorical::uniform(3));
    }

    #[test]
    fn single_layer_is_affine() {
        let layer = Dense {
            inputs: 2,
            outputs: 2,
            weights: vec![1.0, 2.0, -3.0, 0.5],
            bias: vec![0.25, -1.0],
        };
        let net = Mlp::from_layers(vec![layer], Activation::Relu, vec![]).unwrap();
        let (z, _) = net.forward(&[2.0, 4.0], Mode::Deterministic).unwrap();
        assert_eq!(
            z,
            vec![1.0 * 2.0 + 2.0 * 4.0 + 0.25, -3.0 * 2.0 + 0.5 * 4.0 - 1.0]
        );
    }

    #[test]
    fn topology_is_validated() {
        let bad_chain = vec![Dense::zeros(2, 4), Dense::zeros(3, 3)];
        assert!(Mlp::from_layers(bad_chain, Activation::Relu, vec![1.0]).is_err());
        assert!(Mlp::zeros(2, &[4], 1, Activation::Relu, 1.0).is_err());
        assert!(Mlp::zeros(2, &[4], 3, Activation::Relu, 0.0).is_err());
        assert!(Mlp::zeros(2, &[4], 3, Activation::Relu, 1.5).is_err());
        let net = Mlp::zeros(2, &[4], 3, Activation::Relu, 1.0).unwrap();
        assert!(matches!(
            net.forward(&[1.0], Mode::Deterministic),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stochastic_mode_is_reproducible() {
        let net = random_net(1, Activation::Relu, 0.5);
        let x = [0.3, -0.7, 1.1];
        let a = net.forward(&x, Mode::Stochastic { seed: 42 }).unwrap();
        let b = net.forward(&x, Mode::Stochastic { seed: 42 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_logit_gradient_gives_zero_parameter_gradient() {
        let net = random_net(2, Activation::LeakyRelu, 0.8);
        let (_, trace) = net
            .forward(&[0.1, 0.2, 0.3], Mode::Stochastic { seed: 1 })
            .unwrap();
        let g = net.backward(&trace, &[0.0; 3]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient() {
        let net = Mlp::from_layers(
            vec![Dense {
                inputs: 3,
                outputs: 2,
                weights: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
                bias: vec![0.0, 0.0],
            }],
            Activation::Relu,
            vec![],
        )
        .unwrap();
        let x = [1.5, -2.0, 0.25];
        let (_, trace) = net.forward(&x, Mode::Deterministic).unwrap();
        let g = net.backward(&trace, &[1.0, 0.0]).unwrap();
        assert_eq!(&g.layers[0].weights[..3], &x);
        assert_eq!(&g.layers[0].weights[3..], &[0.0; 3]);
        assert_eq!(g.layers[0].bias, vec![1.0, 0.0]);
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let small = random_net(3, Activation::Relu, 1.0);
        let other = Mlp::zeros(2, &[2], 3, Activation::Relu, 1.0).unwrap();
        let (_, trace) = other.forward(&[1.0, 1.0], Mode::Deterministic).unwrap();
        assert!(small.backward(&trace, &[1.0; 3]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        // L = Σ c_k z_k for fixed random c; masks frozen from one stochastic pass.
        for (seed, activation, scaled) in [
            (10, Activation::Relu, false),
            (11, Activation::LeakyRelu, false),
            (12, Activation::Relu, true),
        ] {
            let mut net = random_net(seed, activation, 0.7);
            if scaled {
                let s = InputScaling::new(vec![0.5, -1.0, 2.0], vec![3.0, 0.25, 1.5]).unwrap();
                net = net.with_input_scaling(Some(s)).unwrap();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let masks = net.sample_masks(&mut rng);
            let loss = |n: &Mlp| -> f64 {
                let (z, _) = n.forward_with_masks(&x, masks.clone()).unwrap();
                z.iter().zip(&c).map(|(a, b)| a * b).sum()
            };
            let (_, trace) = net.forward_with_masks(&x, masks.clone()).unwrap();
            let analytic = net.backward(&trace, &c).unwrap().flatten();
            let params = net.params();
            let h = 1e-5;
            for i in 0..params.len() {
                let mut probe = net.clone();
                let mut p = params.clone();
                p[i] += h;
                probe.set_params(&p).unwrap();
                let up = loss(&probe);
                p[i] -= 2.0 * h;
                probe.set_params(&p).unwrap();
                let down = loss(&probe);
                let fd = (up - down) / (2.0 * h);
                let scale = analytic[i].abs().max(fd.abs()).max(1e-3);
                assert!(
                    (analytic[i] - fd).abs() / scale < 1e-5,
                    "param {i}: {} vs {fd}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn input_scaling_fit_and_apply() {
        let features = [1.0, 10.0, 3.0, 10.0, 5.0, 10.0];
        let s = InputScaling::fit(&features, 2).unwrap();
        assert_eq!(s.shift, vec![3.0, 10.0]);
        assert!((s.scale[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.scale[1], 1.0);
        assert!(InputScaling::new(vec![0.0], vec![0.0]).is_err());
        assert!(InputScaling::fit(&features, 4).is_err());

        let net = random_net(3, Activation::Relu, 1.0);
        assert!(net.clone().with_input_scaling(Some(s)).is_err());
        let s = InputScaling::new(vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 0.5]).unwrap();
        let x = [0.3, -1.2, 4.0];
        let scaled = net.clone().with_input_scaling(Some(s.clone())).unwrap();
        let (a, _) = scaled.forward(&x, Mode::Deterministic).unwrap();
        let (b, _) = net.forward(&s.apply(&x), Mode::Deterministic).unwrap();
        assert_eq!(a, b);
        assert_eq!(scaled.with_input_scaling(None).unwrap(), net);
    }

    #[test]
    fn to_dirichlet_values() {
        assert_eq!(
            to_dirichlet(&[0.0, 0.0, 0.0]).unwrap().alpha(),
            &[1.0, 1.0, 1.0]
        );
        let d = to_dirichlet(&[100.0_f64.ln(), 0.0, 0.0]).unwrap();
        assert!((d.alpha()[0] - 100.0).abs() < 1e-12);
        let m = d.mean();
        assert!((m.probs()[0] - 100.0 / 102.0).abs() < 1e-14);
        assert!((m.probs()[1] - 1.0 / 102.0).abs() < 1e-14);
        assert!(to_dirichlet(&[f64::NAN, 0.0]).is_err());
        let clamped = to_dirichlet(&[1e3, -1e3]).unwrap();
        assert_eq!(clamped.alpha(), &[LOGIT_CLAMP.exp(), (-LOGIT_CLAMP).exp()]);
    }

    #[test]
    fn dirichlet_mean_matches_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let k = rng.random_range(2..12);
            let z: Vec<f64> = (0..k).map(|_| rng.random_range(-25.0..25.0)).collect();
            let mean = to_dirichlet(&z).unwrap().mean();
            for (a, b) in mean.probs().iter().zip(Categorical::softmax(&z).probs()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn unit_keep_prob_ensemble_is_degenerate() {
        let net = random_net(4, Activation::LeakyRelu, 1.0);
        let e = net.mc_dropout_predict(&[0.5, 0.5, -0.5], 10, 9).unwrap();
        let first = &e.members()[0];
        assert!(e.members().iter().all(|m| m == first));
        let s = crate::measures::scores_from_ensemble(&e);
        assert_eq!(s.mutual_information, Some(0.0));
        assert!(net.mc_dropout_predict(&[0.5, 0.5, -0.5], 0, 9).is_err());
    }

    #[test]
    fn mc_dropout_is_reproducible() {
        let net = random_net(5, Activation::Relu, 0.5);
        let a = net.mc_dropout_predict(&[1.0, 0.0, -1.0], 20, 3).unwrap();
        let b = net.mc_dropout_predict(&[1.0, 0.0, -1.0], 20, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        // One hidden layer with an identity-like positive path, so the
        // activation never clips and the logits are linear in the mask.
        let hidden = Dense {
            inputs: 2,
            outputs: 4,
            weights: vec![1.0, 0.5, 0.2, 1.0, 0.7, 0.7, 1.5, 0.1],
            bias: vec![0.5; 4],
        };
        let out = Dense {
            inputs: 4,
            outputs: 2,
            weights: vec![1.0, -0.5, 0.25, 2.0, -1.0, 0.3, 0.8, 0.4],
            bias: vec![0.1, -0.2],
        };
        let net = Mlp::from_layers(vec![hidden, out], Activation::Relu, vec![0.6]).unwrap();
        let x = [1.0, 2.0];
        let (exact, _) = net.forward(&x, Mode::Deterministic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let samples: Vec<Vec<f64>> = (0..n)
            .map(|_| net.forward_with_rng(&x, Some(&mut rng)).unwrap().0)
            .collect();
        for k in 0..2 {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n as f64;
            let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - exact[k]).abs() <= 3.0 * se,
                "logit {k}: {mean} vs {}",
                exact[k]
            );
        }
    }

    #[test]
    fn params_round_trip() {
        let net = random_net(6, Activation::Relu, 1.0);
        let mut copy = Mlp::zeros(3, &[5, 4], 3, Activation::Relu, 1.0).unwrap();
        copy.set_params(&net.params()).unwrap();
        assert_eq!(copy, net);
        assert!(copy.set_params(&[0.0]).is_err());
    }
}
