//! Dirichlet Prior Networks for predictive-uncertainty estimation.
//!
//! A Dirichlet Prior Network (DPN) is a classifier whose logits `z` are read
//! as the concentration parameters `α_c = exp(z_c)` of a Dirichlet over
//! categorical distributions. The mean of that Dirichlet is the ordinary
//! softmax output, while its precision `α0 = Σ α_c` carries the
//! distributional uncertainty that a softmax throws away.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every algorithmic
//! piece:
//!
//! * [`special`]: log-gamma and digamma.
//! * [`dirichlet`]: closed-form Dirichlet quantities (entropy, mutual
//!   information, KL divergence, ...).
//! * [`measures`]: the Max.P / Ent. / M.I. / D.Ent. uncertainty measures for
//!   plain networks, Monte-Carlo dropout ensembles and DPNs.
//! * [`net`]: a small fully-connected network with dropout and exact
//!   backpropagation.
//! * [`train`]: the multi-task KL objective, NAdam and learning-rate schedules.
//! * [`data`]: the synthetic three-Gaussian problem and OOD samplers.
//! * [`eval`]: AUROC / AUPR and the two detection tasks.
//!
//! File formats and the command-line harness live in the `dpn-cli` crate.

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod dirichlet;
mod error;
pub mod eval;
pub mod measures;
pub mod net;
pub mod special;
pub mod train;

pub use error::{Error, Result};
