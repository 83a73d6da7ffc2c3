//! Empirical-Bayes estimation of the population prior.
//!
//! The prior is the maximum-likelihood Dirichlet under the Polya
//! (Dirichlet-compound-multinomial) likelihood of the users' count vectors,
//! found with the fixed point
//!
//! ```text
//! φ_i ← φ_i · Σ_k [ψ(c_ik + φ_i) − ψ(φ_i)] / Σ_k [ψ(n_k + Σφ) − ψ(Σφ)]
//! ```
//!
//! Users enter only through per-coordinate histograms of their counts, so an
//! iteration costs one digamma increment per distinct (coordinate, count)
//! pair rather than per user.

use std::collections::BTreeMap;

use log::warn;
use serde::Serialize;

use crate::error::{check_dims, Error, Result};
use crate::prob::{CountVector, DirichletBelief};
use crate::special::{digamma_increment, ln_gamma_increment};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;
pub const PHI_FLOOR: f64 = 1e-10;

/// Count vectors from a population of users, one per user.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationData {
    users: Vec<CountVector>,
    degree: usize,
}

impl PopulationData {
    /// Users with no counts are dropped with a warning.
    pub fn new(users: Vec<CountVector>) -> Result<Self> {
        let degree = users
            .first()
            .map(CountVector::degree)
            .ok_or_else(|| Error::InsufficientData("population has no users".into()))?;
        for u in &users {
            check_dims(degree, u.degree())?;
        }
        let before = users.len();
        let users: Vec<CountVector> = users.into_iter().filter(|u| !u.is_empty()).collect();
        if users.is_empty() {
            return Err(Error::AllUsersEmpty);
        }
        if users.len() < before {
            warn!("dropped {} users with zero counts", before - users.len());
        }
        if users.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "population needs at least 2 users with counts, got {}",
                users.len()
            )));
        }
        Ok(PopulationData { users, degree })
    }

    pub fn users(&self) -> &[CountVector] {
        &self.users
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Outcome of a Dirichlet fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub belief: DirichletBelief,
    pub iterations: usize,
    pub final_relative_change: f64,
    pub converged: bool,
    /// Polya log-likelihood of the population at `belief`.
    pub log_likelihood: f64,
}

/// Sufficient statistics: for each coordinate and for the totals, the
/// distinct nonzero count values with their multiplicities, sorted by value.
struct Histograms {
    per_coordinate: Vec<Vec<(f64, f64)>>,
    totals: Vec<(f64, f64)>,
}

impl Histograms {
    fn new(data: &PopulationData) -> Self {
        let mut per_coordinate: Vec<BTreeMap<u64, f64>> = vec![BTreeMap::new(); data.degree()];
        let mut totals: BTreeMap<u64, f64> = BTreeMap::new();
        for user in data.users() {
            for (i, c) in user.nonzero() {
                *per_coordinate[i].entry(c.to_bits()).or_insert(0.0) += 1.0;
            }
            *totals.entry(user.total().to_bits()).or_insert(0.0) += 1.0;
        }
        let flatten = |m: BTreeMap<u64, f64>| m.into_iter().map(|(k, v)| (f64::from_bits(k), v)).collect();
        Histograms {
            per_coordinate: per_coordinate.into_iter().map(flatten).collect(),
            totals: flatten(totals),
        }
    }

    fn log_likelihood(&self, phi: &[f64]) -> f64 {
        let s: f64 = phi.iter().sum();
        let mut acc: f64 = -self
            .totals
            .iter()
            .map(|&(n, m)| m * ln_gamma_increment(s, n))
            .sum::<f64>();
        for (hist, &p) in self.per_coordinate.iter().zip(phi) {
            acc += hist.iter().map(|&(c, m)| m * ln_gamma_increment(p, c)).sum::<f64>();
        }
        acc
    }

    /// One fixed-point step; returns the new parameters and the max relative change.
    fn step(&self, phi: &[f64]) -> (Vec<f64>, f64) {
        let s: f64 = phi.iter().sum();
        let den: f64 = self.totals.iter().map(|&(n, m)| m * digamma_increment(s, n)).sum();
        let mut change = 0.0f64;
        let next: Vec<f64> = self
            .per_coordinate
            .iter()
            .zip(phi)
            .map(|(hist, &p)| {
                let num: f64 = hist.iter().map(|&(c, m)| m * digamma_increment(p, c)).sum();
                let updated = (p * num / den).max(PHI_FLOOR);
                change = change.max((updated - p).abs() / p);
                updated
            })
            .collect();
        (next, change)
    }
}

/// Polya log-likelihood `Σ_k ln p(c_k | Φ)` of a population.
pub fn polya_log_likelihood(belief: &DirichletBelief, data: &PopulationData) -> Result<f64> {
    check_dims(data.degree(), belief.degree())?;
    Ok(Histograms::new(data).log_likelihood(belief.phi()))
}

/// Moment-matched starting point: pooled frequencies scaled to `Σφ = K`,
/// with empty slots floored at `1e-3 / K` first.
pub fn initialize_phi(data: &PopulationData) -> DirichletBelief {
    let k = data.degree();
    let mut pooled = CountVector::zeros(k);
    for u in data.users() {
        pooled.add_assign(u);
    }
    let total = pooled.total();
    let floor = 1e-3 / k as f64;
    let freqs: Vec<f64> = pooled
        .counts()
        .iter()
        .map(|c| (c / total).max(floor))
        .collect();
    let norm: f64 = freqs.iter().sum();
    let phi = freqs.iter().map(|f| f * k as f64 / norm).collect();
    DirichletBelief::new(phi).expect("floored frequencies are positive")
}

/// Fits the population prior from the moment-matched initialization.
pub fn fit_dirichlet(data: &PopulationData, tolerance: f64, max_iterations: usize) -> Result<FitReport> {
    fit_dirichlet_from(data, &initialize_phi(data), tolerance, max_iterations)
}

/// Runs the fixed point from an explicit starting belief.
pub fn fit_dirichlet_from(
    data: &PopulationData,
    start: &DirichletBelief,
    tolerance: f64,
    max_iterations: usize,
) -> Result<FitReport> {
    check_dims(data.degree(), start.degree())?;
    if !(tolerance > 0.0) {
        return Err(Error::InvalidValue(format!("tolerance must be positive, got {tolerance}")));
    }
    let hist = Histograms::new(data);
    let mut phi = start.phi().to_vec();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations {
        let (next, c) = hist.step(&phi);
        phi = next;
        change = c;
        iterations += 1;
        if change <= tolerance {
            break;
        }
    }
    let converged = change <= tolerance;
    if !converged {
        warn!("Dirichlet fit stopped after {iterations} iterations, relative change {change:e}");
    }
    let log_likelihood = hist.log_likelihood(&phi);
    Ok(FitReport {
        belief: DirichletBelief::new(phi)?,
        iterations,
        final_relative_change: change,
        converged,
        log_likelihood,
    })
}

/// The user's posterior `ψ_k`: the prior conditioned on the user's own data.
pub fn user_posterior(prior: &DirichletBelief, user_data: &CountVector) -> Result<DirichletBelief> {
    prior.posterior_update(user_data)
}
