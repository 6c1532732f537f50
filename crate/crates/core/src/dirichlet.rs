//! The Dirichlet distribution and its closed-form information quantities.
//!
//! All quantities are in nats.

use alloc::vec::Vec;
#[allow(unused_imports)] // inherent float methods shadow it whenever std is linked
use num_traits::Float;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::special::{digamma_unchecked as digamma, ln_gamma_unchecked as ln_gamma};
use crate::{Error, Result};

/// Tolerance on `Σ μ_c = 1` accepted by [`Categorical::new`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Concentration parameters `α` of a Dirichlet over `K ≥ 2` classes.
///
/// Every `α_c` is finite and strictly positive and the precision
/// `α0 = Σ α_c` is finite.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::invalid(
                "alpha",
                "a Dirichlet needs at least 2 classes",
            ));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Domain {
                function: "DirichletParams::new",
                value: *a,
                requirement: "every concentration finite and > 0",
            });
        }
        if !alpha.iter().sum::<f64>().is_finite() {
            return Err(Error::invalid("alpha", "precision overflows"));
        }
        Ok(Self { alpha })
    }

    /// The flat Dirichlet `(1, …, 1)`, uniform over the simplex.
    pub fn flat(num_classes: usize) -> Result<Self> {
        Self::new(alloc::vec![1.0; num_classes])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.alpha.len()
    }

    /// `α0 = Σ α_c`
    pub fn precision(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Multiply every concentration by `factor`, keeping the mean.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.alpha.iter().map(|a| a * factor).collect())
    }

    /// `ln Γ(α0) − Σ ln Γ(α_c)`
    pub fn log_normalizer(&self) -> f64 {
        ln_gamma(self.precision()) - self.alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
    }

    /// ln Dir(μ | α).
    ///
    /// On the boundary of the simplex a coordinate with `μ_c = 0` contributes
    /// `0` when `α_c = 1` (the limit of `0 · ln 0`) and `−∞` when `α_c > 1`.
    /// It is a domain error when `α_c < 1`, where the density diverges.
    pub fn log_pdf(&self, mu: &Categorical) -> Result<f64> {
        self.check_dim("log_pdf", mu.num_classes())?;
        let mut acc = self.log_normalizer();
        for (&a, &m) in self.alpha.iter().zip(mu.probs()) {
            if m > 0.0 {
                acc += (a - 1.0) * m.ln();
            } else if a < 1.0 {
                return Err(Error::Domain {
                    function: "log_pdf",
                    value: m,
                    requirement: "μ_c > 0 wherever α_c < 1",
                });
            } else if a > 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
        }
        Ok(acc)
    }

    /// Expected categorical `μ_c = α_c / α0`.
    pub fn mean(&self) -> Categorical {
        let precision = self.precision();
        Categorical {
            mu: self.alpha.iter().map(|a| a / precision).collect(),
        }
    }

    /// Differential entropy of the density on the simplex.
    ///
    /// `Σ ln Γ(α_c) − ln Γ(α0) − Σ (α_c − 1)(ψ(α_c) − ψ(α0))`
    pub fn differential_entropy(&self) -> f64 {
        let precision = self.precision();
        let psi0 = digamma(precision);
        let spread: f64 = self
            .alpha
            .iter()
            .map(|&a| (a - 1.0) * (digamma(a) - psi0))
            .sum();
        -self.log_normalizer() - spread
    }

    /// Expected entropy of a categorical drawn from this Dirichlet,
    /// `E[H[Cat(μ)]] = −Σ (α_c/α0)(ψ(α_c+1) − ψ(α0+1))`.
    pub fn expected_data_entropy(&self) -> f64 {
        let precision = self.precision();
        let psi0 = digamma(precision + 1.0);
        -self
            .alpha
            .iter()
            .map(|&a| a / precision * (digamma(a + 1.0) - psi0))
            .sum::<f64>()
    }

    /// Mutual information between the label and the categorical `μ`:
    /// `−Σ (α_c/α0)(ln(α_c/α0) − ψ(α_c+1) + ψ(α0+1))`.
    ///
    /// Cancellation can leave a result of order `-1e-16` for very sharp
    /// Dirichlets; it is floored at zero.
    pub fn mutual_information(&self) -> f64 {
        let precision = self.precision();
        let psi0 = digamma(precision + 1.0);
        let mi = -self
            .alpha
            .iter()
            .map(|&a| {
                let m = a / precision;
                m * (m.ln() - digamma(a + 1.0) + psi0)
            })
            .sum::<f64>();
        mi.max(0.0)
    }

    /// `KL[Dir(self) || Dir(other)]`.
    pub fn kl_divergence(&self, other: &DirichletParams) -> Result<f64> {
        self.check_dim("kl_divergence", other.num_classes())?;
        let a0 = self.precision();
        let psi_a0 = digamma(a0);
        let mut kl = ln_gamma(a0) - ln_gamma(other.precision());
        for (&a, &b) in self.alpha.iter().zip(&other.alpha) {
            kl += ln_gamma(b) - ln_gamma(a) + (a - b) * (digamma(a) - psi_a0);
        }
        Ok(kl)
    }

    /// Draw `μ ~ Dir(α)` by normalising independent `Gamma(α_c, 1)` variates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Categorical {
        loop {
            let mut draws: Vec<f64> = self
                .alpha
                .iter()
                .map(|&a| {
                    Gamma::new(a, 1.0)
                        .expect("concentrations are positive")
                        .sample(rng)
                })
                .collect();
            let total: f64 = draws.iter().sum();
            // Every draw underflowing is only possible for tiny α; redraw.
            if total > 0.0 && total.is_finite() {
                draws.iter_mut().for_each(|d| *d /= total);
                return Categorical { mu: draws };
            }
        }
    }

    fn check_dim(&self, context: &'static str, found: usize) -> Result<()> {
        if found == self.num_classes() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected: self.num_classes(),
                found,
            })
        }
    }
}

impl TryFrom<Vec<f64>> for DirichletParams {
    type Error = Error;

    fn try_from(alpha: Vec<f64>) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<DirichletParams> for Vec<f64> {
    fn from(d: DirichletParams) -> Self {
        d.alpha
    }
}

/// A probability vector over `K` classes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct Categorical {
    mu: Vec<f64>,
}

impl Categorical {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::invalid("mu", "empty probability vector"));
        }
        if let Some(m) = mu.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::Domain {
                function: "Categorical::new",
                value: *m,
                requirement: "every probability finite and >= 0",
            });
        }
        let total: f64 = mu.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::invalid(
                "mu",
                alloc::format!("probabilities sum to {total}, not 1"),
            ));
        }
        Ok(Self { mu })
    }

    /// Normalise non-negative weights onto the simplex.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid(
                "weights",
                "total weight must be finite and > 0",
            ));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    /// The uniform distribution over `num_classes` classes.
    pub fn uniform(num_classes: usize) -> Self {
        Self {
            mu: alloc::vec![1.0 / num_classes as f64; num_classes],
        }
    }

    /// Numerically stable softmax of a logit vector.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self {
            mu: exps.into_iter().map(|e| e / total).collect(),
        }
    }

    pub(crate) fn from_raw(mu: Vec<f64>) -> Self {
        Self { mu }
    }

    pub fn probs(&self) -> &[f64] {
        &self.mu
    }

    pub fn num_classes(&self) -> usize {
        self.mu.len()
    }

    /// Largest probability.
    pub fn max_prob(&self) -> f64 {
        self.mu.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the largest probability (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &m) in self.mu.iter().enumerate() {
            if m > self.mu[best] {
                best = c;
            }
        }
        best
    }

    /// Shannon entropy `−Σ μ_c ln μ_c`, with `0 · ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        categorical_entropy(&self.mu)
    }
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = Error;

    fn try_from(mu: Vec<f64>) -> Result<Self> {
        Self::new(mu)
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(c: Categorical) -> Self {
        c.mu
    }
}

/// Shannon entropy of a probability vector, with `0 · ln 0 = 0`.
pub fn categorical_entropy(mu: &[f64]) -> f64 {
    -mu.iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| m * m.ln())
        .sum::<f64>()
}
