//! Synthetic study: error rates of every rule as the observed prefix grows.
//!
//! Each run draws a user prior and an adversary prior from one Gamma
//! hyperprior, fits the world model on a sampled population, draws a user
//! and an adversary, enrolls the user, flips the class coin and scores
//! every prefix of one test sequence with every rule. All rules see the same
//! sequences, so differences between them are paired.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_percentiles, stream_rng};
use crate::empirical::{fit_dirichlet, user_posterior, PopulationData, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::prob::{CountVector, DirichletBelief, MultinomialModel, PriorOdds};
use crate::rules::{biased_decide, oracle_decide, DecisionRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub runs: usize,
    pub degree: usize,
    pub sequence_length: usize,
    /// Users sampled from the true prior for the empirical-Bayes fit.
    pub population_size: usize,
    pub gamma_shape: f64,
    pub gamma_scale: f64,
    pub p_user_prior: f64,
    pub seed: u64,
    pub bootstrap_replicates: usize,
    /// Length of the user's enrollment sample; defaults to `sequence_length`.
    pub enrollment_length: Option<usize>,
    /// Fit one world model for all runs instead of refitting per run.
    pub share_prior_fit: bool,
    /// Use the user model as the adversary model (classes indistinguishable).
    pub identical_models: bool,
    pub partial_weight: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            runs: 10_000,
            degree: 10,
            sequence_length: 10,
            population_size: 1000,
            gamma_shape: 1.0,
            gamma_scale: 1.0,
            p_user_prior: 0.5,
            seed: 0,
            bootstrap_replicates: 100,
            enrollment_length: None,
            share_prior_fit: false,
            identical_models: false,
            partial_weight: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidValue(m.to_string()));
        if self.runs < 1 {
            return bad("runs must be at least 1");
        }
        if self.degree < 2 {
            return bad("degree must be at least 2");
        }
        if self.sequence_length < 1 {
            return bad("sequence length must be at least 1");
        }
        if self.population_size < 2 {
            return bad("population size must be at least 2");
        }
        if !(self.gamma_shape > 0.0 && self.gamma_scale > 0.0) {
            return bad("Gamma shape and scale must be positive");
        }
        if self.enrollment_length == Some(0) {
            return bad("enrollment length must be at least 1");
        }
        if self.bootstrap_replicates < 1 {
            return bad("bootstrap needs at least one replicate");
        }
        PriorOdds::new(self.p_user_prior)?;
        DecisionRule::partial(self.partial_weight)?;
        Ok(())
    }

    pub fn rules(&self) -> Vec<DecisionRule> {
        vec![
            DecisionRule::Oracle,
            DecisionRule::World,
            DecisionRule::BiasAllButLast,
            DecisionRule::FullBias,
            DecisionRule::PartialBias(self.partial_weight),
            DecisionRule::FirstHalfBias,
        ]
    }
}

/// One row of the curve: a rule's error rate at one prefix length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub prefix_len: usize,
    pub rule: DecisionRule,
    pub error_rate: f64,
    pub bootstrap_lo5: f64,
    pub bootstrap_hi5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixErrorCurve {
    pub config: SynthConfig,
    pub points: Vec<CurvePoint>,
}

impl PrefixErrorCurve {
    pub fn point(&self, rule: DecisionRule, prefix_len: usize) -> Option<&CurvePoint> {
        self.points
            .iter()
            .find(|p| p.rule == rule && p.prefix_len == prefix_len)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["prefix_len", "rule", "err", "lo5", "hi5"])
            .map_err(csv_error)?;
        for p in &self.points {
            w.write_record([
                p.prefix_len.to_string(),
                p.rule.label(),
                p.error_rate.to_string(),
                p.bootstrap_lo5.to_string(),
                p.bootstrap_hi5.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

struct Priors {
    world: DirichletBelief,
    user: DirichletBelief,
    adversary: DirichletBelief,
}

fn gamma_belief<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> DirichletBelief {
    let g = Gamma::new(config.gamma_shape, config.gamma_scale).expect("validated Gamma parameters");
    let phi = (0..config.degree)
        .map(|_| g.sample(rng).max(crate::empirical::PHI_FLOOR))
        .collect();
    DirichletBelief::new(phi).expect("floored Gamma draws are positive")
}

fn draw_priors<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> Result<Priors> {
    let user = gamma_belief(config, rng);
    let adversary = gamma_belief(config, rng);
    let population = (0..config.population_size)
        .map(|_| {
            user.sample(rng)
                .sample(config.sequence_length, rng)
                .map(|s| s.counts)
        })
        .collect::<Result<Vec<CountVector>>>()?;
    let fit = fit_dirichlet(&PopulationData::new(population)?, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)?;
    Ok(Priors {
        world: fit.belief,
        user,
        adversary,
    })
}

/// Per-run errors indexed `[rule][prefix_len - 1]`.
fn run_once(config: &SynthConfig, shared: Option<&Priors>, stream: u64) -> Result<Vec<Vec<bool>>> {
    let mut rng = stream_rng(config.seed, stream);
    let owned;
    let priors = match shared {
        Some(p) => p,
        None => {
            owned = draw_priors(config, &mut rng)?;
            &owned
        }
    };
    let q: MultinomialModel = priors.user.sample(&mut rng);
    let w: MultinomialModel = if config.identical_models {
        q.clone()
    } else {
        priors.adversary.sample(&mut rng)
    };
    let enrollment = q.sample(config.enrollment_length.unwrap_or(config.sequence_length), &mut rng)?;
    let psi = user_posterior(&priors.world, &enrollment.counts)?;
    let is_user = rng.random_bool(config.p_user_prior);
    let source = if is_user { &q } else { &w };
    let test = source.sample(config.sequence_length, &mut rng)?;

    let prior = PriorOdds::new(config.p_user_prior)?;
    let rules = config.rules();
    let mut errors = vec![Vec::with_capacity(config.sequence_length); rules.len()];
    for t in 1..=config.sequence_length {
        let prefix = &test.sequence[..t];
        for (slot, &rule) in errors.iter_mut().zip(&rules) {
            let verdict = match rule {
                DecisionRule::Oracle => {
                    oracle_decide(&q, &w, prior, &CountVector::from_sequence(prefix, config.degree)?)?
                }
                _ => biased_decide(&psi, &priors.world, rule, prior, prefix)?,
            };
            slot.push(verdict.decided_user != is_user);
        }
    }
    Ok(errors)
}

/// Runs the synthetic study.
pub fn run_synthetic(config: &SynthConfig) -> Result<PrefixErrorCurve> {
    config.validate()?;
    let shared = if config.share_prior_fit {
        Some(draw_priors(config, &mut stream_rng(config.seed, 0))?)
    } else {
        None
    };
    let outcomes: Vec<Vec<Vec<bool>>> = (0..config.runs as u64)
        .into_par_iter()
        .map(|r| run_once(config, shared.as_ref(), r + 1))
        .collect::<Result<_>>()?;

    let rules = config.rules();
    let mut boot_rng = stream_rng(config.seed, u64::MAX);
    let mut points = Vec::with_capacity(rules.len() * config.sequence_length);
    let mut column = vec![false; config.runs];
    for t in 1..=config.sequence_length {
        for (ri, &rule) in rules.iter().enumerate() {
            for (slot, run) in column.iter_mut().zip(&outcomes) {
                *slot = run[ri][t - 1];
            }
            let s = bootstrap_percentiles(&column, config.bootstrap_replicates, 0.05, 0.95, &mut boot_rng)?;
            points.push(CurvePoint {
                prefix_len: t,
                rule,
                error_rate: s.mean,
                bootstrap_lo5: s.lo,
                bootstrap_hi5: s.hi,
            });
        }
    }
    Ok(PrefixErrorCurve {
        config: config.clone(),
        points,
    })
}
