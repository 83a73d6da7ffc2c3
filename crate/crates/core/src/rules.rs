//! Decision rules: the oracle, the world model, and the pessimistic
//! adversary posteriors.
//!
//! Every non-oracle rule goes through [`biased_decide`]: the adversary prior
//! is conditioned on a rule-specific transform of the observation and then
//! scores the full observation. [`DecisionRule::World`] conditions on
//! nothing, so [`world_decide`] is the same computation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::prob::{CountVector, DirichletBelief, MultinomialModel, PriorOdds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "weight")]
pub enum DecisionRule {
    /// Knows the true user and adversary models.
    Oracle,
    /// The population prior stands in for the adversary.
    World,
    /// Conditions the adversary prior on all but the last observation.
    BiasAllButLast,
    /// Conditions on every observation.
    FullBias,
    /// Conditions on the counts scaled by a weight in (0, 1].
    PartialBias(f64),
    /// Conditions on the first half of the sequence.
    FirstHalfBias,
}

impl DecisionRule {
    pub fn partial(weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::InvalidValue(format!("partial-bias weight must be in (0, 1], got {weight}")));
        }
        Ok(DecisionRule::PartialBias(weight))
    }

    /// Oracle, world and the four biased variants, with the half weight.
    pub fn all() -> [DecisionRule; 6] {
        [
            DecisionRule::Oracle,
            DecisionRule::World,
            DecisionRule::BiasAllButLast,
            DecisionRule::FullBias,
            DecisionRule::PartialBias(0.5),
            DecisionRule::FirstHalfBias,
        ]
    }

    /// Short label used in tables.
    pub fn label(&self) -> String {
        match self {
            DecisionRule::Oracle => "oracle".into(),
            DecisionRule::World => "world".into(),
            DecisionRule::BiasAllButLast => "bias".into(),
            DecisionRule::FullBias => "f-bias".into(),
            DecisionRule::PartialBias(w) if *w == 0.5 => "p-bias".into(),
            DecisionRule::PartialBias(w) => format!("p-bias:{w}"),
            DecisionRule::FirstHalfBias => "n-bias".into(),
        }
    }
}

impl fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for DecisionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(DecisionRule::Oracle),
            "world" => Ok(DecisionRule::World),
            "bias" => Ok(DecisionRule::BiasAllButLast),
            "f-bias" => Ok(DecisionRule::FullBias),
            "p-bias" => Ok(DecisionRule::PartialBias(0.5)),
            "n-bias" => Ok(DecisionRule::FirstHalfBias),
            other => match other.strip_prefix("p-bias:") {
                Some(w) => {
                    let w: f64 = w.parse().map_err(|_| Error::Parse(format!("bad weight in {other:?}")))?;
                    DecisionRule::partial(w)
                }
                None => Err(Error::Parse(format!("unknown rule {other:?}"))),
            },
        }
    }
}

/// A classification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub p_user: f64,
    /// `ln` of the user-versus-adversary posterior odds.
    pub log_odds: f64,
    /// `p_user ≥ 0.5`; ties go to the user.
    pub decided_user: bool,
    pub rule: DecisionRule,
}

impl Verdict {
    fn from_log_scores(user: f64, adversary: f64, rule: DecisionRule) -> Result<Self> {
        if user == f64::NEG_INFINITY && adversary == f64::NEG_INFINITY {
            return Err(Error::ImpossibleObservation);
        }
        let log_odds = user - adversary;
        let p_user = if log_odds >= 0.0 {
            1.0 / (1.0 + (-log_odds).exp())
        } else {
            let e = log_odds.exp();
            e / (1.0 + e)
        };
        Ok(Verdict {
            p_user,
            log_odds,
            decided_user: log_odds >= 0.0,
            rule,
        })
    }
}

/// Bayes' rule with known user and adversary models.
pub fn oracle_decide(
    user: &MultinomialModel,
    adversary: &MultinomialModel,
    prior: PriorOdds,
    obs: &CountVector,
) -> Result<Verdict> {
    check_dims(user.degree(), adversary.degree())?;
    let u = user.log_likelihood(obs)? + prior.p_user().ln();
    let a = adversary.log_likelihood(obs)? + prior.p_adversary().ln();
    Verdict::from_log_scores(u, a, DecisionRule::Oracle)
}

/// The world-model rule: the adversary is scored by the unconditioned prior.
pub fn world_decide(
    user_belief: &DirichletBelief,
    world_belief: &DirichletBelief,
    prior: PriorOdds,
    obs: &CountVector,
) -> Result<Verdict> {
    score(user_belief, world_belief, prior, obs, DecisionRule::World)
}

fn score(
    user_belief: &DirichletBelief,
    adversary_belief: &DirichletBelief,
    prior: PriorOdds,
    obs: &CountVector,
    rule: DecisionRule,
) -> Result<Verdict> {
    check_dims(user_belief.degree(), adversary_belief.degree())?;
    let u = user_belief.log_marginal(obs)? + prior.p_user().ln();
    let a = adversary_belief.log_marginal(obs)? + prior.p_adversary().ln();
    Verdict::from_log_scores(u, a, rule)
}

/// The counts a rule conditions the adversary prior on.
pub fn bias_transform(rule: DecisionRule, sequence: &[usize], degree: usize) -> Result<CountVector> {
    if sequence.is_empty() {
        return Err(Error::InvalidValue("observation sequence is empty".into()));
    }
    let n = sequence.len();
    match rule {
        DecisionRule::Oracle => Err(Error::InvalidValue("the oracle rule has no adversary prior".into())),
        DecisionRule::World => Ok(CountVector::zeros(degree)),
        DecisionRule::BiasAllButLast => CountVector::from_sequence(&sequence[..n - 1], degree),
        DecisionRule::FullBias => CountVector::from_sequence(sequence, degree),
        DecisionRule::PartialBias(w) => {
            DecisionRule::partial(w)?;
            CountVector::from_sequence(sequence, degree)?.scaled(w)
        }
        DecisionRule::FirstHalfBias => CountVector::from_sequence(&sequence[..n / 2], degree),
    }
}

/// Count-level transform for rules that do not need the ordering. Sequence
/// rules (all-but-last, first-half) see a single record and condition on
/// nothing.
pub fn bias_transform_record(rule: DecisionRule, obs: &CountVector) -> Result<CountVector> {
    match rule {
        DecisionRule::Oracle => Err(Error::InvalidValue("the oracle rule has no adversary prior".into())),
        DecisionRule::World | DecisionRule::BiasAllButLast | DecisionRule::FirstHalfBias => {
            Ok(CountVector::zeros(obs.degree()))
        }
        DecisionRule::FullBias => Ok(obs.clone()),
        DecisionRule::PartialBias(w) => {
            DecisionRule::partial(w)?;
            obs.scaled(w)
        }
    }
}

/// Scores an ordered observation with the adversary prior conditioned per `rule`.
pub fn biased_decide(
    user_belief: &DirichletBelief,
    adversary_prior: &DirichletBelief,
    rule: DecisionRule,
    prior: PriorOdds,
    sequence: &[usize],
) -> Result<Verdict> {
    let degree = adversary_prior.degree();
    let conditioning = bias_transform(rule, sequence, degree)?;
    let obs = CountVector::from_sequence(sequence, degree)?;
    decide_with_conditioning(user_belief, adversary_prior, rule, prior, &obs, &conditioning)
}

/// Scores a single unordered record (one count vector).
pub fn biased_decide_record(
    user_belief: &DirichletBelief,
    adversary_prior: &DirichletBelief,
    rule: DecisionRule,
    prior: PriorOdds,
    obs: &CountVector,
) -> Result<Verdict> {
    let conditioning = bias_transform_record(rule, obs)?;
    decide_with_conditioning(user_belief, adversary_prior, rule, prior, obs, &conditioning)
}

fn decide_with_conditioning(
    user_belief: &DirichletBelief,
    adversary_prior: &DirichletBelief,
    rule: DecisionRule,
    prior: PriorOdds,
    obs: &CountVector,
    conditioning: &CountVector,
) -> Result<Verdict> {
    let adversary = adversary_prior.posterior_update(conditioning)?;
    score(user_belief, &adversary, prior, obs, rule)
}

/// `ln ξ'(x) − ln ξ(x)` with `ξ'` the belief conditioned on `obs` itself.
/// Never negative beyond rounding.
pub fn lemma1_gap(belief: &DirichletBelief, obs: &CountVector) -> Result<f64> {
    let posterior = belief.posterior_update(obs)?;
    Ok(posterior.log_marginal(obs)? - belief.log_marginal(obs)?)
}

/// The same gap for a finite mixture of point models, from the likelihoods
/// `μ(x)` and prior weights `ξ(μ)`: `ln[Σ μ(x)² ξ(μ) / (Σ μ(x) ξ(μ))²]`.
pub fn discrete_mixture_gap(likelihoods: &[f64], weights: &[f64]) -> Result<f64> {
    check_dims(likelihoods.len(), weights.len())?;
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) || likelihoods.iter().any(|l| *l < 0.0) {
        return Err(Error::InvalidValue("mixture needs nonnegative weights and likelihoods".into()));
    }
    let marginal: f64 = likelihoods.iter().zip(weights).map(|(l, w)| l * w).sum::<f64>() / total;
    if marginal == 0.0 {
        return Err(Error::ImpossibleObservation);
    }
    let second: f64 = likelihoods.iter().zip(weights).map(|(l, w)| l * l * w).sum::<f64>() / total;
    let conditioned = second / marginal;
    Ok(conditioned.ln() - marginal.ln())
}

/// Minimum gaps found by [`lemma_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSweep {
    pub dirichlet_trials: usize,
    pub mixture_trials: usize,
    pub min_dirichlet_gap: f64,
    pub min_mixture_gap: f64,
}

impl LemmaSweep {
    pub fn min_gap(&self) -> f64 {
        self.min_dirichlet_gap.min(self.min_mixture_gap)
    }
}

/// Randomized check that conditioning a prior on `x` never lowers the
/// marginal of `x`.
///
/// Dirichlet trials draw `K ∈ [2, 20]`, `n ∈ [1, 30]`, parameters
/// log-uniform on `[0.01, 100]`, and counts from a model sampled from the
/// belief. Mixture trials use 2 to 10 random multinomial components with
/// random weights.
pub fn lemma_sweep(dirichlet_trials: usize, mixture_trials: usize, seed: u64) -> Result<LemmaSweep> {
    let mut rng = crate::bootstrap::stream_rng(seed, 0);
    let mut min_dirichlet_gap = f64::INFINITY;
    for _ in 0..dirichlet_trials {
        let k = rng.random_range(2..=20);
        let n = rng.random_range(1..=30);
        let phi = (0..k)
            .map(|_| (rng.random_range(-2.0f64..=2.0) * std::f64::consts::LN_10).exp())
            .collect();
        let belief = DirichletBelief::new(phi)?;
        let x = belief.sample(&mut rng).sample(n, &mut rng)?.counts;
        min_dirichlet_gap = min_dirichlet_gap.min(lemma1_gap(&belief, &x)?);
    }
    let mut min_mixture_gap = f64::INFINITY;
    for _ in 0..mixture_trials {
        let k = rng.random_range(2..=20);
        let n = rng.random_range(1..=30);
        let components = rng.random_range(2..=10);
        let x = CountVector::from_sequence(
            &(0..n).map(|_| rng.random_range(0..k)).collect::<Vec<_>>(),
            k,
        )?;
        let mut likelihoods = Vec::with_capacity(components);
        let mut weights = Vec::with_capacity(components);
        for _ in 0..components {
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            likelihoods.push(MultinomialModel::from_weights(&w)?.log_likelihood(&x)?.exp());
            weights.push(rng.random_range(0.01..1.0));
        }
        min_mixture_gap = min_mixture_gap.min(discrete_mixture_gap(&likelihoods, &weights)?);
    }
    Ok(LemmaSweep {
        dirichlet_trials,
        mixture_trials,
        min_dirichlet_gap,
        min_mixture_gap,
    })
}
