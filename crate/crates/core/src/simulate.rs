//! Seeded samplers for the multiplex model families.
//!
//! Randomness is keyed per node and per ordered pair through [`rng::substream`],
//! so a draw depends only on `(seed, domain, index)` and never on traversal
//! order. Identical specs produce bit-identical outputs.

use alloc::vec;
use alloc::vec::Vec;

use crate::er::{er_word_prob, CovariateModel, ErParameters};
use crate::graph::{EdgeCovariates, MultiplexGraph};
use crate::model::{Assignment, BlockParameters};
use crate::rng::{self, domain};
use crate::vem::CovariateBlockModel;
use crate::{Error, Result};

/// Graph-generating model of a simulation.
#[derive(Debug, Clone)]
pub enum GraphModel {
    Er(ErParameters),
    Sbm(BlockParameters),
}

/// Full description of one simulated dataset.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub n: usize,
    pub seed: u64,
    pub model: GraphModel,
    /// When set, standard-normal covariates of this dimension are drawn
    /// per ordered pair.
    pub covariate_dim: Option<usize>,
}

/// Simulated dataset; the assignment is present only for block models.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub graph: MultiplexGraph,
    pub assignment: Option<Assignment>,
    pub covariates: Option<EdgeCovariates>,
}

/// Runs a [`SimulationSpec`].
pub fn simulate(spec: &SimulationSpec) -> Result<SimulationOutput> {
    let (graph, assignment) = match &spec.model {
        GraphModel::Er(p) => (sample_er(p, spec.n, spec.seed)?, None),
        GraphModel::Sbm(p) => {
            let (g, z) = sample_sbm(p, spec.n, spec.seed)?;
            (g, Some(z))
        }
    };
    let covariates = match spec.covariate_dim {
        Some(dim) => Some(sample_covariates(spec.n, dim, spec.seed)?),
        None => None,
    };
    Ok(SimulationOutput {
        graph,
        assignment,
        covariates,
    })
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(alloc::format!(
            "node count must be at least 2, got {n}"
        )));
    }
    Ok(())
}

/// Samples a multiplex Erdős–Rényi graph: every ordered pair draws its word
/// i.i.d. from `params`.
pub fn sample_er(params: &ErParameters, n: usize, seed: u64) -> Result<MultiplexGraph> {
    check_n(n)?;
    let mut words = vec![0u16; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut stream = rng::substream(seed, domain::PAIR, (i * n + j) as u64);
                words[i * n + j] = stream.next_categorical(params.pi()) as u16;
            }
        }
    }
    MultiplexGraph::from_words(n, params.num_layers(), words)
}

/// Samples a multiplex block-model graph: labels i.i.d. from `alpha`, then
/// each ordered pair's word from its block pair's cell. Returns the true
/// assignment for use as a test oracle.
pub fn sample_sbm(
    params: &BlockParameters,
    n: usize,
    seed: u64,
) -> Result<(MultiplexGraph, Assignment)> {
    check_n(n)?;
    let labels: Vec<usize> = (0..n)
        .map(|i| rng::substream(seed, domain::NODE, i as u64).next_categorical(params.alpha()))
        .collect();
    let mut words = vec![0u16; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut stream = rng::substream(seed, domain::PAIR, (i * n + j) as u64);
                words[i * n + j] =
                    stream.next_categorical(params.cell(labels[i], labels[j])) as u16;
            }
        }
    }
    let graph = MultiplexGraph::from_words(n, params.num_layers(), words)?;
    Ok((graph, Assignment::new(labels, params.num_blocks())?))
}

/// Standard-normal i.i.d. covariates, one `dim`-vector per ordered pair.
pub fn sample_covariates(n: usize, dim: usize, seed: u64) -> Result<EdgeCovariates> {
    check_n(n)?;
    let mut values = vec![0.0; n * n * dim];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut stream = rng::substream(seed, domain::COVARIATE, (i * n + j) as u64);
            let base = (i * n + j) * dim;
            for v in &mut values[base..base + dim] {
                *v = stream.next_standard_normal();
            }
        }
    }
    EdgeCovariates::from_values(n, dim, values)
}

/// Samples words whose distribution depends on pair covariates through a
/// multinomial-logit model.
pub fn sample_er_covariates(
    model: &CovariateModel,
    cov: &EdgeCovariates,
    seed: u64,
) -> Result<MultiplexGraph> {
    let n = cov.num_nodes();
    let mut words = vec![0u16; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let probs = er_word_prob(model, cov.pair(i, j))?;
                let mut stream = rng::substream(seed, domain::PAIR, (i * n + j) as u64);
                words[i * n + j] = stream.next_categorical(&probs) as u16;
            }
        }
    }
    MultiplexGraph::from_words(n, model.num_layers(), words)
}

/// Samples a covariate block model: labels from `alpha`, then per-pair words
/// from the block pair's logit cell at the pair's covariates.
pub fn sample_sbm_covariates(
    model: &CovariateBlockModel,
    cov: &EdgeCovariates,
    seed: u64,
) -> Result<(MultiplexGraph, Assignment)> {
    let n = cov.num_nodes();
    check_n(n)?;
    let labels: Vec<usize> = (0..n)
        .map(|i| rng::substream(seed, domain::NODE, i as u64).next_categorical(model.alpha()))
        .collect();
    let mut words = vec![0u16; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let probs = er_word_prob(model.cell(labels[i], labels[j]), cov.pair(i, j))?;
                let mut stream = rng::substream(seed, domain::PAIR, (i * n + j) as u64);
                words[i * n + j] = stream.next_categorical(&probs) as u16;
            }
        }
    }
    let graph = MultiplexGraph::from_words(n, model.num_layers(), words)?;
    Ok((graph, Assignment::new(labels, model.num_blocks())?))
}
