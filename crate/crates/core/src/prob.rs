//! Dirichlet–multinomial probability kernel.
//!
//! Observations are treated as ordered sequences, so every likelihood here
//! omits the multinomial coefficient. All arithmetic is in log space.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::special::ln_gamma_increment;

const SUM_TOLERANCE: f64 = 1e-12;
#[cfg(test)]
const COUNT_TOLERANCE: f64 = 1e-9;

/// A probability vector over `K ≥ 2` outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultinomialModel {
    probs: Vec<f64>,
}

impl MultinomialModel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidValue(format!(
                "a multinomial model needs at least 2 outcomes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidValue("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidValue(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(MultinomialModel { probs })
    }

    /// Normalizes a nonnegative weight vector into a model.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidValue("weights must be nonnegative with a positive sum".into()));
        }
        let mut probs: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        renormalize(&mut probs);
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn degree(&self) -> usize {
        self.probs.len()
    }

    /// `Σ c_i ln μ_i`; `-∞` when an observed outcome has zero probability.
    pub fn log_likelihood(&self, obs: &CountVector) -> Result<f64> {
        check_dims(self.degree(), obs.degree())?;
        let mut acc = 0.0;
        for (&p, &c) in self.probs.iter().zip(obs.counts()) {
            if c == 0.0 {
                continue;
            }
            if p == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            acc += c * p.ln();
        }
        Ok(acc)
    }

    /// Draws `n` i.i.d. outcomes, keeping both the ordered sequence and its counts.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        if n == 0 {
            return Err(Error::InvalidValue("sample size must be at least 1".into()));
        }
        let index = WeightedIndex::new(&self.probs)
            .map_err(|e| Error::InvalidValue(format!("cannot sample from model: {e}")))?;
        let sequence: Vec<usize> = (0..n).map(|_| index.sample(rng)).collect();
        let counts = CountVector::from_sequence(&sequence, self.degree())?;
        Ok(Sample { sequence, counts })
    }
}

/// An ordered draw together with its count summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sequence: Vec<usize>,
    pub counts: CountVector,
}

/// Event counts over `K` outcomes. Entries may be fractional.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountVector {
    counts: Vec<f64>,
    total: f64,
}

impl CountVector {
    pub fn new(counts: Vec<f64>) -> Result<Self> {
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidValue("counts must be finite and nonnegative".into()));
        }
        let total = counts.iter().sum();
        Ok(CountVector { counts, total })
    }

    pub fn zeros(degree: usize) -> Self {
        CountVector {
            counts: vec![0.0; degree],
            total: 0.0,
        }
    }

    /// Tallies a sequence of outcome indices in `0..degree`.
    pub fn from_sequence(sequence: &[usize], degree: usize) -> Result<Self> {
        let mut counts = vec![0.0; degree];
        for &x in sequence {
            let slot = counts.get_mut(x).ok_or_else(|| {
                Error::InvalidValue(format!("outcome {x} out of range for degree {degree}"))
            })?;
            *slot += 1.0;
        }
        Ok(CountVector {
            counts,
            total: sequence.len() as f64,
        })
    }

    /// Builds from `(index, count)` pairs; unlisted slots are zero.
    pub fn from_sparse(degree: usize, entries: &[(usize, f64)]) -> Result<Self> {
        let mut counts = vec![0.0; degree];
        for &(i, c) in entries {
            let slot = counts.get_mut(i).ok_or_else(|| {
                Error::InvalidValue(format!("index {i} out of range for degree {degree}"))
            })?;
            *slot += c;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn degree(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0.0
    }

    pub fn is_integral(&self) -> bool {
        self.counts.iter().all(|c| c.fract() == 0.0)
    }

    /// Nonzero entries as `(index, count)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (i, *c))
    }

    pub fn scaled(&self, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidValue(format!("invalid weight {weight}")));
        }
        Ok(CountVector {
            counts: self.counts.iter().map(|c| c * weight).collect(),
            total: self.total * weight,
        })
    }

    pub fn add(&self, other: &CountVector) -> Result<Self> {
        check_dims(self.degree(), other.degree())?;
        let counts: Vec<f64> = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        let total = counts.iter().sum();
        Ok(CountVector { counts, total })
    }

    pub(crate) fn add_assign(&mut self, other: &CountVector) {
        debug_assert_eq!(self.degree(), other.degree());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total = self.counts.iter().sum();
    }

    #[cfg(test)]
    pub(crate) fn total_is_consistent(&self) -> bool {
        (self.total - self.counts.iter().sum::<f64>()).abs() <= COUNT_TOLERANCE
    }
}

/// Dirichlet distribution over multinomial models, parameterized by pseudo-counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DirichletRepr", into = "DirichletRepr")]
pub struct DirichletBelief {
    phi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DirichletRepr {
    phi: Vec<f64>,
}

impl TryFrom<DirichletRepr> for DirichletBelief {
    type Error = Error;

    fn try_from(r: DirichletRepr) -> Result<Self> {
        DirichletBelief::new(r.phi)
    }
}

impl From<DirichletBelief> for DirichletRepr {
    fn from(b: DirichletBelief) -> Self {
        DirichletRepr { phi: b.phi }
    }
}

impl DirichletBelief {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::InvalidValue("Dirichlet needs at least one parameter".into()));
        }
        if phi.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidValue("Dirichlet parameters must be finite and positive".into()));
        }
        Ok(DirichletBelief { phi })
    }

    pub fn symmetric(degree: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; degree])
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn degree(&self) -> usize {
        self.phi.len()
    }

    pub fn concentration(&self) -> f64 {
        self.phi.iter().sum()
    }

    /// The Dirichlet mean `φ_i / Σφ`.
    pub fn mean(&self) -> MultinomialModel {
        let s = self.concentration();
        let mut probs: Vec<f64> = self.phi.iter().map(|p| p / s).collect();
        renormalize(&mut probs);
        MultinomialModel { probs }
    }

    /// Conjugate update `φ'_i = φ_i + c_i`.
    pub fn posterior_update(&self, obs: &CountVector) -> Result<DirichletBelief> {
        check_dims(self.degree(), obs.degree())?;
        let phi = self.phi.iter().zip(obs.counts()).map(|(p, c)| p + c).collect();
        Ok(DirichletBelief { phi })
    }

    /// Polya log-marginal `ln[Γ(Σφ)/Γ(Σφ+n) · Π Γ(φ_i+c_i)/Γ(φ_i)]`.
    pub fn log_marginal(&self, obs: &CountVector) -> Result<f64> {
        check_dims(self.degree(), obs.degree())?;
        let mut acc = -ln_gamma_increment(self.concentration(), obs.total());
        for (i, c) in obs.nonzero() {
            acc += ln_gamma_increment(self.phi[i], c);
        }
        Ok(acc)
    }

    /// Draws a model via normalized Gamma(φ_i, 1) variates.
    ///
    /// Variates are formed in log space (`G(a) = G(a+1)·U^{1/a}` for `a < 1`)
    /// so that very small parameters do not underflow the whole vector.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MultinomialModel {
        let logs: Vec<f64> = self.phi.iter().map(|&a| log_gamma_variate(a, rng)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        renormalize(&mut probs);
        MultinomialModel { probs }
    }
}

fn log_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape validated positive");
        let x: f64 = g.sample(rng);
        x.ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape validated positive");
        let x: f64 = g.sample(rng);
        let u: f64 = Open01.sample(rng);
        x.ln() + u.ln() / shape
    }
}

/// Pushes the rounding residue of a normalized vector onto its largest entry.
fn renormalize(probs: &mut [f64]) {
    let sum: f64 = probs.iter().sum();
    let residue = 1.0 - sum;
    if residue != 0.0 {
        if let Some(max) = probs.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *max = (*max + residue).max(0.0);
        }
    }
}

/// Prior probability that the user, not the adversary, produced the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorOdds {
    p_user: f64,
}

impl PriorOdds {
    pub fn new(p_user: f64) -> Result<Self> {
        if !(p_user > 0.0 && p_user < 1.0) {
            return Err(Error::InvalidValue(format!("prior must be in (0, 1), got {p_user}")));
        }
        Ok(PriorOdds { p_user })
    }

    pub fn even() -> Self {
        PriorOdds { p_user: 0.5 }
    }

    pub fn p_user(&self) -> f64 {
        self.p_user
    }

    pub fn p_adversary(&self) -> f64 {
        1.0 - self.p_user
    }
}

impl Default for PriorOdds {
    fn default() -> Self {
        Self::even()
    }
}
