//! Bayesian authentication decisions when no adversary data exists.
//!
//! A population prior over multinomial user models is fit by empirical
//! Bayes and used both to adapt per-user models and as the prior over
//! adversaries. Conditioning that adversary prior on the observation being
//! classified gives a pessimistic bound on the user posterior.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod access_log;
pub mod bootstrap;
pub mod empirical;
pub mod error;
pub mod prob;
pub mod real;
pub mod rules;
pub mod special;
pub mod synth;

pub use bootstrap::{bootstrap_percentiles, BootstrapSummary};
pub use empirical::{fit_dirichlet, initialize_phi, user_posterior, FitReport, PopulationData};
pub use error::{Error, Result};
pub use prob::{CountVector, DirichletBelief, MultinomialModel, PriorOdds, Sample};
pub use rules::{
    bias_transform, biased_decide, lemma1_gap, lemma_sweep, oracle_decide, world_decide, DecisionRule, Verdict,
};
pub use real::{run_real, RealConfig, RuleReport, RunReport};
pub use special::{digamma, log_gamma};
pub use synth::{run_synthetic, PrefixErrorCurve, SynthConfig};
