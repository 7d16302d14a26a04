//! Consistency experiments: estimation error of the variational fit as the
//! node count grows, with label alignment so block permutations do not
//! corrupt the metric.
//!
//! Before running, the generating parameters are screened against the
//! identifiability condition and the regularity assumptions used by the
//! consistency results:
//!
//! - A1: no two blocks share both their row and column connectivity profiles;
//! - A2: every `π` entry strictly inside `(0, 1)` stays in `[ζ, 1 − ζ]`;
//! - A3: every `α_q` stays in `[γ, 1 − γ]`.
//!
//! Violations are reported, not fatal: the experiment still runs so the
//! breakdown is observable.

use alloc::vec::Vec;

use crate::align::{adjusted_rand_index, align_block_parameters};
use crate::math;
use crate::model::{
    check_identifiability, BlockParameters, IdentifiabilityReport, DEFAULT_IDENTIFIABILITY_TOL,
};
use crate::rng;
use crate::simulate::sample_sbm;
use crate::vem::{fit, FitConfig};
use crate::{Error, Result};

/// Thresholds for the assumption screen.
#[derive(Debug, Clone, Copy)]
pub struct AssumptionConfig {
    /// A2 margin: interior `π` entries must lie in `[ζ, 1 − ζ]`.
    pub zeta: f64,
    /// A3 margin: `α` entries must lie in `[γ, 1 − γ]`. Capped at `1/(2Q)`
    /// at check time, since no valid `α` can clear a margin of `1/Q`.
    pub gamma: f64,
    /// Separation tolerance for the identifiability check.
    pub identifiability_tol: f64,
}

impl Default for AssumptionConfig {
    fn default() -> Self {
        Self {
            zeta: 0.01,
            gamma: 0.01,
            identifiability_tol: DEFAULT_IDENTIFIABILITY_TOL,
        }
    }
}

/// Outcome of the assumption screen.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub identifiability: IdentifiabilityReport,
    /// Block pairs sharing both row and column profiles.
    pub a1_violations: Vec<(usize, usize)>,
    /// `(q, l, w)` entries strictly inside `(0, 1)` but outside `[ζ, 1 − ζ]`.
    pub a2_violations: Vec<(usize, usize, u16)>,
    /// Blocks whose `α_q` escapes `[γ, 1 − γ]`.
    pub a3_violations: Vec<usize>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.identifiability.pass()
            && self.a1_violations.is_empty()
            && self.a2_violations.is_empty()
            && self.a3_violations.is_empty()
    }
}

/// Screens generating parameters against identifiability and A1–A3.
pub fn check_assumptions(params: &BlockParameters, config: &AssumptionConfig) -> AssumptionReport {
    let nb = params.num_blocks();

    let mut a1_violations = Vec::new();
    for q in 0..nb {
        for r in (q + 1)..nb {
            let mut distinguishable = false;
            for l in 0..nb {
                let row_differs = cell_differs(params.cell(q, l), params.cell(r, l));
                let col_differs = cell_differs(params.cell(l, q), params.cell(l, r));
                if row_differs || col_differs {
                    distinguishable = true;
                    break;
                }
            }
            if !distinguishable {
                a1_violations.push((q, r));
            }
        }
    }

    let mut a2_violations = Vec::new();
    for q in 0..nb {
        for l in 0..nb {
            for (w, &p) in params.cell(q, l).iter().enumerate() {
                let interior = p > 0.0 && p < 1.0;
                if interior && (p < config.zeta || p > 1.0 - config.zeta) {
                    a2_violations.push((q, l, w as u16));
                }
            }
        }
    }

    let gamma = config.gamma.min(0.5 / nb as f64);
    let a3_violations = (0..nb)
        .filter(|&q| {
            let a = params.alpha()[q];
            a < gamma || a > 1.0 - gamma
        })
        .collect();

    AssumptionReport {
        identifiability: check_identifiability(params, config.identifiability_tol),
        a1_violations,
        a2_violations,
        a3_violations,
    }
}

fn cell_differs(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).any(|(x, y)| math::abs(x - y) > 1e-12)
}

/// Settings of an error-versus-n experiment.
#[derive(Debug, Clone)]
pub struct ErrorVsNConfig {
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub fit: FitConfig,
    pub assumptions: AssumptionConfig,
}

/// One simulated replication.
#[derive(Debug, Clone, Copy)]
pub struct LabRow {
    pub n: usize,
    pub replication: usize,
    /// Aligned `d_∞(π̂, π*)`; NaN when the fit failed.
    pub err_pi_inf: f64,
    /// Aligned `d_∞(α̂, α*)`; NaN when the fit failed.
    pub err_alpha_inf: f64,
    /// Adjusted Rand index of the MAP labels against the truth.
    pub ari: f64,
    pub converged: bool,
    pub failed: bool,
}

/// Median errors at one grid node, over the replications that produced a fit.
#[derive(Debug, Clone, Copy)]
pub struct MedianRow {
    pub n: usize,
    pub median_err_pi: f64,
    pub median_err_alpha: f64,
}

/// Full experiment output.
#[derive(Debug, Clone)]
pub struct LabTable {
    pub assumptions: AssumptionReport,
    pub rows: Vec<LabRow>,
    pub medians: Vec<MedianRow>,
}

/// Simulates and refits `replications` datasets at every `n` in the grid,
/// reporting aligned infinity-norm parameter errors. Fit failures are
/// recorded as failed rows, never fatal.
pub fn error_vs_n(truth: &BlockParameters, config: &ErrorVsNConfig) -> Result<LabTable> {
    if config.n_grid.is_empty() || config.replications == 0 {
        return Err(Error::InvalidInput(
            "need a non-empty grid and at least one replication".into(),
        ));
    }
    let assumptions = check_assumptions(truth, &config.assumptions);

    let mut rows = Vec::with_capacity(config.n_grid.len() * config.replications);
    let mut medians = Vec::with_capacity(config.n_grid.len());
    for (n_index, &n) in config.n_grid.iter().enumerate() {
        let mut errs_pi = Vec::new();
        let mut errs_alpha = Vec::new();
        for replication in 0..config.replications {
            let token = ((n_index as u64) << 32) | replication as u64;
            let mut stream = rng::substream(config.seed, rng::domain::LAB, token);
            let sim_seed = stream.next_u64();
            let fit_seed = stream.next_u64();
            let (g, z_true) = sample_sbm(truth, n, sim_seed)?;
            let mut fit_config = config.fit;
            fit_config.seed = fit_seed;
            match fit(&g, truth.num_blocks(), &fit_config) {
                Ok(result) => {
                    let alignment = align_block_parameters(&result.params, truth)?;
                    let ari = adjusted_rand_index(result.map_assignment.labels(), z_true.labels())?;
                    errs_pi.push(alignment.err_pi_inf);
                    errs_alpha.push(alignment.err_alpha_inf);
                    rows.push(LabRow {
                        n,
                        replication,
                        err_pi_inf: alignment.err_pi_inf,
                        err_alpha_inf: alignment.err_alpha_inf,
                        ari,
                        converged: result.converged,
                        failed: false,
                    });
                }
                Err(_) => rows.push(LabRow {
                    n,
                    replication,
                    err_pi_inf: f64::NAN,
                    err_alpha_inf: f64::NAN,
                    ari: f64::NAN,
                    converged: false,
                    failed: true,
                }),
            }
        }
        medians.push(MedianRow {
            n,
            median_err_pi: median(&mut errs_pi),
            median_err_alpha: median(&mut errs_alpha),
        });
    }

    Ok(LabTable {
        assumptions,
        rows,
        medians,
    })
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("errors are never NaN here"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}
