//! ICL block-count selection.
//!
//! The criterion penalizes the completed log-likelihood at the MAP labels:
//!
//! ```text
//! ICL(Q) = ln p(X, z̃; θ̂) − ½ [ Q² (2^K − 1) ln(K n (n−1)) + (Q − 1) ln n ]
//! ```
//!
//! where the `π` block is charged against the `K n (n−1)` observed edges and
//! the `α` block against the `n` nodes. Natural logarithms throughout.

use alloc::vec::Vec;

use crate::graph::{EdgeCovariates, MultiplexGraph};
use crate::math;
use crate::model::{complete_log_likelihood, Assignment};
use crate::rng;
use crate::vem::{self, CovariateBlockModel, FitConfig, FitFlag, FitResult};
use crate::{Error, Result};

/// Ties in ICL within this margin resolve to the smaller block count.
pub const TIE_TOL: f64 = 1e-9;

/// Dimension penalty of the plain `Q`-block model.
pub fn icl_penalty(num_blocks: usize, num_layers: usize, n: usize) -> f64 {
    let q = num_blocks as f64;
    let edges = (num_layers * n * (n - 1)) as f64;
    let pi_dim = q * q * (((1usize << num_layers) - 1) as f64);
    0.5 * (pi_dim * math::ln(edges) + (q - 1.0) * math::ln(n as f64))
}

/// ICL of a fitted model: completed log-likelihood at the MAP assignment
/// minus the dimension penalty.
pub fn icl(g: &MultiplexGraph, fit: &FitResult) -> Result<f64> {
    let completed = complete_log_likelihood(g, &fit.map_assignment, &fit.params)?;
    Ok(completed - icl_penalty(fit.params.num_blocks(), g.num_layers(), g.num_nodes()))
}

/// Dimension penalty of the covariate model: `P_Q = Q² (2^K − 1)(1 + d)`
/// parameters charged against the edges, the `α` term unchanged.
pub fn icl_covariates_penalty(num_blocks: usize, num_layers: usize, n: usize, dim: usize) -> f64 {
    let q = num_blocks as f64;
    let edges = (num_layers * n * (n - 1)) as f64;
    let p_q = q * q * (((1usize << num_layers) - 1) as f64) * (1.0 + dim as f64);
    0.5 * (p_q * math::ln(edges) + (q - 1.0) * math::ln(n as f64))
}

/// ICL of a fitted covariate model at a MAP assignment.
pub fn icl_covariates(
    g: &MultiplexGraph,
    cov: &EdgeCovariates,
    model: &CovariateBlockModel,
    map_assignment: &Assignment,
) -> Result<f64> {
    let completed = model.complete_log_likelihood(g, cov, map_assignment)?;
    Ok(completed
        - icl_covariates_penalty(
            model.num_blocks(),
            g.num_layers(),
            g.num_nodes(),
            model.dim(),
        ))
}

/// Per-candidate record of a block-count scan.
#[derive(Debug, Clone)]
pub struct QRecord {
    pub num_blocks: usize,
    pub elbo: f64,
    pub completed_log_likelihood: f64,
    pub penalty: f64,
    pub icl: f64,
    pub converged: bool,
    pub flags: Vec<FitFlag>,
    pub fit: FitResult,
}

/// A candidate whose fit failed outright; selection continues without it.
#[derive(Debug, Clone)]
pub struct QFailure {
    pub num_blocks: usize,
    pub error: Error,
}

/// Outcome of [`select_q`].
#[derive(Debug, Clone)]
pub struct IclReport {
    pub records: Vec<QRecord>,
    pub failures: Vec<QFailure>,
    /// Candidates for which `n < 2Q`, below the sample size that
    /// guarantees identifiability.
    pub small_sample_warnings: Vec<usize>,
    pub selected: usize,
}

impl IclReport {
    pub fn selected_record(&self) -> &QRecord {
        self.records
            .iter()
            .find(|r| r.num_blocks == self.selected)
            .expect("selected candidate always has a record")
    }
}

/// Fits every candidate block count and selects the ICL maximizer, breaking
/// ties (within [`TIE_TOL`]) toward the smaller count. Per-candidate seeds
/// derive from `(config.seed, Q)`, so the scan is deterministic and invariant
/// to candidate order.
pub fn select_q(g: &MultiplexGraph, candidates: &[usize], config: &FitConfig) -> Result<IclReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate block counts".into()));
    }
    let mut qs: Vec<usize> = candidates.to_vec();
    qs.sort_unstable();
    qs.dedup();
    if qs[0] == 0 {
        return Err(Error::InvalidInput("block count must be positive".into()));
    }
    if *qs.last().unwrap() > g.num_nodes() {
        return Err(Error::InvalidInput(alloc::format!(
            "candidate {} exceeds the node count {}",
            qs.last().unwrap(),
            g.num_nodes()
        )));
    }

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut small_sample_warnings = Vec::new();
    for &q in &qs {
        if g.num_nodes() < 2 * q {
            small_sample_warnings.push(q);
        }
        let mut per_q = *config;
        per_q.seed = rng::substream(config.seed, rng::domain::SELECT, q as u64).next_u64();
        match vem::fit(g, q, &per_q) {
            Ok(fit) => {
                let completed = complete_log_likelihood(g, &fit.map_assignment, &fit.params)?;
                let penalty = icl_penalty(q, g.num_layers(), g.num_nodes());
                records.push(QRecord {
                    num_blocks: q,
                    elbo: fit.elbo(),
                    completed_log_likelihood: completed,
                    penalty,
                    icl: completed - penalty,
                    converged: fit.converged,
                    flags: fit.flags.clone(),
                    fit,
                });
            }
            Err(error) => failures.push(QFailure {
                num_blocks: q,
                error,
            }),
        }
    }
    if records.is_empty() {
        return Err(Error::AllRestartsFailed);
    }

    // Records are in ascending Q; strict improvement beyond the tie margin is
    // required to move to a larger count.
    let mut selected = &records[0];
    for r in &records[1..] {
        if r.icl > selected.icl + TIE_TOL {
            selected = r;
        }
    }
    let selected = selected.num_blocks;

    Ok(IclReport {
        records,
        failures,
        small_sample_warnings,
        selected,
    })
}
