//! JSON checkpoints.
//!
//! ```json
//! {
//!   "format": "dpn-checkpoint",
//!   "version": 1,
//!   "kind": "dpn",
//!   "activation": "relu",
//!   "keep_probs": [1.0],
//!   "input_scaling": { "shift": [..], "scale": [..] },
//!   "layers": [ { "inputs": 2, "outputs": 50, "weights": [..], "bias": [..] }, .. ]
//! }
//! ```
//!
//! Weights are row-major (`outputs × inputs`). Numbers are written in
//! shortest round-trip form, so loading restores every parameter exactly.

use std::path::Path;

use dpn_core::net::{Activation, Dense, InputScaling, Mlp};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "dpn-checkpoint";
pub const VERSION: u32 = 1;

/// Which objective produced the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Softmax classifier trained with cross-entropy.
    Dnn,
    /// Dirichlet Prior Network.
    Dpn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dnn => "dnn",
            ModelKind::Dpn => "dpn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub net: Mlp,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format: String,
    version: u32,
    kind: ModelKind,
    activation: Activation,
    keep_probs: Vec<f64>,
    input_scaling: Option<InputScaling>,
    layers: Vec<LayerDoc>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let doc = CheckpointDoc {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: self.kind,
            activation: self.net.activation(),
            keep_probs: self.net.keep_probs().to_vec(),
            input_scaling: self.net.input_scaling().cloned(),
            layers: self
                .net
                .layers()
                .iter()
                .map(|l| LayerDoc {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("checkpoint serialises");
        text.push('\n');
        text
    }

    /// Parse a checkpoint; `path` only labels errors.
    pub fn from_json(text: &str, path: &Path) -> CliResult<Self> {
        let doc: CheckpointDoc =
            serde_json::from_str(text).map_err(|e| CliError::parse(path, e))?;
        if doc.format != FORMAT {
            return Err(CliError::parse(
                path,
                format!("not a checkpoint (format `{}`)", doc.format),
            ));
        }
        if doc.version != VERSION {
            return Err(CliError::parse(
                path,
                format!("unsupported checkpoint version {}", doc.version),
            ));
        }
        let layers = doc
            .layers
            .into_iter()
            .map(|l| Dense {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: l.weights,
                bias: l.bias,
            })
            .collect();
        let scaling = doc
            .input_scaling
            .map(|s| InputScaling::new(s.shift, s.scale))
            .transpose()
            .map_err(|e| CliError::parse(path, e))?;
        let net = Mlp::from_layers(layers, doc.activation, doc.keep_probs)
            .and_then(|n| n.with_input_scaling(scaling))
            .map_err(|e| CliError::parse(path, e))?;
        Ok(Self {
            kind: doc.kind,
            net,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }
}
