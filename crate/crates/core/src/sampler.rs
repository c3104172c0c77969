//! Metropolis chain over labeled configurations with single-particle node
//! hops. Weights are recomputed from scratch at every proposal.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{ChainTables, WeightSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::oracle::{configuration_weight, Configuration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Proposal {
    #[default]
    SingleParticleNodeHop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerConfig {
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub proposal: Proposal,
}

impl SamplerConfig {
    /// Burn-in defaults to 10% of the steps.
    pub fn new(steps: u64, seed: u64) -> Self {
        SamplerConfig {
            steps,
            burn_in: steps / 10,
            seed,
            proposal: Proposal::SingleParticleNodeHop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps <= self.burn_in {
            return Err(Error::InvalidSamplerConfig(format!(
                "steps ({}) must exceed burn_in ({})",
                self.steps, self.burn_in
            )));
        }
        Ok(())
    }
}

const INITIAL_TRIES: usize = 10_000;

/// Iterator over post-burn-in states. Yields `steps - burn_in` items, or a
/// single error after which it is exhausted.
#[derive(Debug, Clone)]
pub struct Sampler {
    tables: ChainTables,
    rng: ChaCha8Rng,
    state: Vec<Vec<usize>>,
    weight: f64,
    remaining_burn_in: u64,
    remaining: u64,
    proposed: u64,
    accepted: u64,
    failed: bool,
}

pub fn sample(tables: &ChainTables, config: &SamplerConfig) -> Result<Sampler> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (state, weight) = initial_state(tables, &mut rng)?;
    Ok(Sampler {
        tables: tables.clone(),
        rng,
        state,
        weight,
        remaining_burn_in: config.burn_in,
        remaining: config.steps - config.burn_in,
        proposed: 0,
        accepted: 0,
        failed: false,
    })
}

fn initial_state(tables: &ChainTables, rng: &mut ChaCha8Rng) -> Result<(Vec<Vec<usize>>, f64)> {
    let n = tables.rank();
    let sizes = tables.sizes();
    if sizes.iter().any(|&s| s < n) {
        return Err(Error::NotAProbability(format!("a level has fewer than {n} nodes")));
    }
    let first: Vec<Vec<usize>> = sizes.iter().map(|_| (0..n).collect()).collect();
    let w = configuration_weight(tables, &first);
    if w > 0.0 {
        return Ok((first, w));
    }
    let mut negative = if w < 0.0 { Some(w) } else { None };
    for _ in 0..INITIAL_TRIES {
        let cand: Vec<Vec<usize>> = sizes
            .iter()
            .map(|&s| rand::seq::index::sample(rng, s, n).into_vec())
            .collect();
        let w = configuration_weight(tables, &cand);
        if w > 0.0 {
            return Ok((cand, w));
        }
        if w < 0.0 {
            negative.get_or_insert(w);
        }
    }
    match negative {
        Some(w) => Err(Error::SignedDensityError(w)),
        None => Err(Error::NotAProbability("no configuration with positive weight found".into())),
    }
}

impl Sampler {
    fn step(&mut self) -> Result<()> {
        let m = self.state.len();
        let j = self.rng.gen_range(0..m);
        let a = self.rng.gen_range(0..self.tables.rank());
        let node = self.rng.gen_range(0..self.tables.grid(j).len());
        let u: f64 = self.rng.gen();
        self.proposed += 1;
        if node == self.state[j][a] {
            self.accepted += 1;
            return Ok(());
        }
        if self.state[j].contains(&node) {
            return Ok(());
        }
        let old = std::mem::replace(&mut self.state[j][a], node);
        let w = configuration_weight(&self.tables, &self.state);
        if w < 0.0 {
            self.state[j][a] = old;
            return Err(Error::SignedDensityError(w));
        }
        if u * self.weight < w {
            self.weight = w;
            self.accepted += 1;
        } else {
            self.state[j][a] = old;
        }
        Ok(())
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn state(&self) -> &[Vec<usize>] {
        &self.state
    }
}

impl Iterator for Sampler {
    type Item = Result<Configuration>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.remaining == 0 {
            return None;
        }
        while self.remaining_burn_in > 0 {
            self.remaining_burn_in -= 1;
            if let Err(e) = self.step() {
                self.failed = true;
                return Some(Err(e));
            }
        }
        if let Err(e) = self.step() {
            self.failed = true;
            return Some(Err(e));
        }
        self.remaining -= 1;
        Some(Ok(Configuration {
            levels: self.state.clone(),
            weight: self.weight,
        }))
    }
}

/// Monte Carlo estimate of the probability of avoiding the support of
/// `weights`, with a batch-means standard error (up to 50 batches).
pub fn empirical_gap(samples: &[Configuration], weights: &WeightSet) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::ShapeError("empty sample".into()));
    }
    let hits: Vec<f64> = samples
        .iter()
        .map(|c| if c.hits(weights) { 0.0 } else { 1.0 })
        .collect();
    let n = hits.len();
    let estimate = hits.iter().sum::<f64>() / n as f64;
    let batches = n.min(50);
    let size = n / batches;
    if batches < 2 {
        return Ok((estimate, 0.0));
    }
    let means: Vec<f64> = hits
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok((estimate, (var / batches as f64).sqrt()))
}

/// Exact one-step transition matrix of the chain restricted to
/// positive-weight labeled configurations, with those states and the
/// normalized target distribution. Small instances only.
pub fn exact_transition_matrix(tables: &ChainTables) -> Result<(Vec<Vec<Vec<usize>>>, Matrix, Vec<f64>)> {
    let en = crate::oracle::enumerate(tables)?;
    let states: Vec<Vec<Vec<usize>>> = en.iter().map(|c| c.levels).collect();
    let weights: Vec<f64> = states.iter().map(|s| configuration_weight(tables, s)).collect();
    if let Some(&w) = weights.iter().find(|&&w| w < 0.0) {
        return Err(Error::SignedDensityError(w));
    }
    let total: f64 = weights.iter().sum();
    let m = tables.levels();
    let rank = tables.rank();
    let ns = states.len();
    let mut p = Matrix::zeros(ns, ns);
    for (s, state) in states.iter().enumerate() {
        for j in 0..m {
            let nj = tables.grid(j).len();
            let q = 1.0 / (m * rank * nj) as f64;
            for a in 0..rank {
                for node in 0..nj {
                    let mut next = state.clone();
                    next[j][a] = node;
                    let target = if node == state[j][a] {
                        Some(s)
                    } else {
                        states.iter().position(|t| *t == next)
                    };
                    match target {
                        Some(t) if t != s => {
                            let acc = (weights[t] / weights[s]).min(1.0);
                            p[(s, t)] += q * acc;
                            p[(s, s)] += q * (1.0 - acc);
                        }
                        _ => p[(s, s)] += q,
                    }
                }
            }
        }
    }
    Ok((states, p, weights.iter().map(|w| w / total).collect()))
}
