//! Uncertainty measures for the three prediction sources: a plain network
//! (one categorical), a Monte-Carlo dropout ensemble (several categoricals)
//! and a Dirichlet Prior Network (a Dirichlet).

use alloc::vec::Vec;
use core::fmt;

use crate::dirichlet::{Categorical, DirichletParams};
use crate::{Error, Result};

/// `M ≥ 1` categorical predictions sharing one dimension, one per stochastic
/// forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    members: Vec<Categorical>,
}

impl EnsemblePrediction {
    pub fn new(members: Vec<Categorical>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::invalid("ensemble", "needs at least one member"));
        };
        let k = first.num_classes();
        if let Some(bad) = members.iter().find(|m| m.num_classes() != k) {
            return Err(Error::DimensionMismatch {
                context: "ensemble member",
                expected: k,
                found: bad.num_classes(),
            });
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Categorical] {
        &self.members
    }

    /// Member-wise mean categorical.
    ///
    /// Uses a running mean, so an ensemble of identical members returns that
    /// member bit-for-bit.
    pub fn mean(&self) -> Categorical {
        let mut mean = self.members[0].probs().to_vec();
        for (i, member) in self.members.iter().enumerate().skip(1) {
            let n = (i + 1) as f64;
            for (m, &p) in mean.iter_mut().zip(member.probs()) {
                *m += (p - *m) / n;
            }
        }
        Categorical::from_raw(mean)
    }

    /// Average entropy of the members, accumulated the same way as
    /// [`mean`](Self::mean).
    pub fn expected_entropy(&self) -> f64 {
        let mut mean = 0.0;
        for (i, member) in self.members.iter().enumerate() {
            mean += (member.entropy() - mean) / (i + 1) as f64;
        }
        mean
    }
}

/// The scalar uncertainty measures reported for one input.
///
/// `mutual_information` is present for ensemble and DPN sources and
/// `differential_entropy` for DPNs only.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UncertaintyScores {
    pub max_prob: f64,
    pub entropy: f64,
    pub mutual_information: Option<f64>,
    pub differential_entropy: Option<f64>,
}

/// Names one of the uncertainty measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Measure {
    MaxProb,
    Entropy,
    MutualInformation,
    DifferentialEntropy,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::MaxProb,
        Measure::Entropy,
        Measure::MutualInformation,
        Measure::DifferentialEntropy,
    ];

    /// Short label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Measure::MaxProb => "Max.P",
            Measure::Entropy => "Ent.",
            Measure::MutualInformation => "M.I.",
            Measure::DifferentialEntropy => "D.Ent.",
        }
    }

    /// Identifier used in file names and on the command line.
    pub fn key(self) -> &'static str {
        match self {
            Measure::MaxProb => "max_prob",
            Measure::Entropy => "entropy",
            Measure::MutualInformation => "mutual_information",
            Measure::DifferentialEntropy => "differential_entropy",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl UncertaintyScores {
    /// Raw value of a measure, if this source provides it.
    pub fn get(&self, measure: Measure) -> Option<f64> {
        match measure {
            Measure::MaxProb => Some(self.max_prob),
            Measure::Entropy => Some(self.entropy),
            Measure::MutualInformation => self.mutual_information,
            Measure::DifferentialEntropy => self.differential_entropy,
        }
    }

    /// Value oriented so that larger means more uncertain. Max.P is the only
    /// measure where low values signal uncertainty, so it is negated.
    pub fn detection_score(&self, measure: Measure) -> Option<f64> {
        match measure {
            Measure::MaxProb => Some(-self.max_prob),
            other => self.get(other),
        }
    }
}

/// Measures for a single categorical prediction (a plain network).
pub fn scores_from_categorical(mu: &Categorical) -> UncertaintyScores {
    UncertaintyScores {
        max_prob: mu.max_prob(),
        entropy: mu.entropy(),
        mutual_information: None,
        differential_entropy: None,
    }
}

/// Measures for an ensemble: total entropy of the mean prediction and the
/// mutual information `H[p̄] − mean_i H[p_i]`.
pub fn scores_from_ensemble(e: &EnsemblePrediction) -> UncertaintyScores {
    let mean = e.mean();
    let total = mean.entropy();
    UncertaintyScores {
        max_prob: mean.max_prob(),
        entropy: total,
        // Jensen makes this non-negative; rounding can dip a hair below.
        mutual_information: Some((total - e.expected_entropy()).max(0.0)),
        differential_entropy: None,
    }
}

/// Measures for a Dirichlet Prior Network output.
pub fn scores_from_dirichlet(d: &DirichletParams) -> UncertaintyScores {
    let mean = d.mean();
    UncertaintyScores {
        max_prob: mean.max_prob(),
        entropy: mean.entropy(),
        mutual_information: Some(d.mutual_information()),
        differential_entropy: Some(d.differential_entropy()),
    }
}
