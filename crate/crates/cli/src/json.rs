//! JSON documents and a serializer that prints every float with 17
//! significant digits, so outputs are byte-stable and round-trip to the
//! exact same `f64`.

use std::io::{self, Write};

use anyhow::{bail, Context, Result};
use muxsbm_core::model::BlockParameters;
use muxsbm_core::vem::{CovariateFitResult, FitResult};
use serde::{Deserialize, Serialize};

struct Sci17Formatter;

impl serde_json::ser::Formatter for Sci17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        if !value.is_finite() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "non-finite float in JSON output",
            ));
        }
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        self.write_f64(writer, value as f64)
    }
}

/// Serializes with the 17-significant-digit float convention, newline
/// terminated.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sci17Formatter);
    value
        .serialize(&mut ser)
        .context("serializing JSON output")?;
    out.push(b'\n');
    Ok(out)
}

/// A float rendered with 17 significant digits, for CSV cells.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Block-model parameters as serialized: `{Q, K, alpha, pi}` with
/// `pi[q][l][w]` in the fixed word order (layer 0 is the low bit).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaDoc {
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: Vec<f64>,
    pub pi: Vec<Vec<Vec<f64>>>,
}

impl ThetaDoc {
    pub fn from_params(params: &BlockParameters) -> Self {
        let nb = params.num_blocks();
        let pi = (0..nb)
            .map(|q| (0..nb).map(|l| params.cell(q, l).to_vec()).collect())
            .collect();
        Self {
            q: nb,
            k: params.num_layers(),
            alpha: params.alpha().to_vec(),
            pi,
        }
    }

    pub fn into_params(self) -> Result<BlockParameters> {
        let mut pi = Vec::with_capacity(self.q * self.q * (1 << self.k));
        if self.pi.len() != self.q {
            bail!("pi has {} rows, expected Q = {}", self.pi.len(), self.q);
        }
        for row in &self.pi {
            if row.len() != self.q {
                bail!("pi row has {} cells, expected Q = {}", row.len(), self.q);
            }
            for cell in row {
                pi.extend_from_slice(cell);
            }
        }
        BlockParameters::new(self.q, self.k, self.alpha, pi)
            .map_err(|e| anyhow::anyhow!("invalid parameters: {e}"))
    }
}

/// Ground truth written by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthDoc {
    pub theta: ThetaDoc,
    /// True block label per node, 0-based.
    pub z: Vec<usize>,
    pub seed: u64,
}

/// Result of `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDoc {
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub alpha: Vec<f64>,
    pub pi: Vec<Vec<Vec<f64>>>,
    pub tau: Vec<Vec<f64>>,
    pub map_assignment: Vec<usize>,
    pub elbo_trace: Vec<f64>,
    pub icl: f64,
    pub converged: bool,
    pub flags: Vec<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
}

impl FitDoc {
    pub fn from_fit(fit: &FitResult, n: usize, icl: f64, seed: u64) -> Self {
        let theta = ThetaDoc::from_params(&fit.params);
        let tau = (0..n).map(|i| fit.posterior.row(i).to_vec()).collect();
        Self {
            q: theta.q,
            k: theta.k,
            n,
            alpha: theta.alpha,
            pi: theta.pi,
            tau,
            map_assignment: fit.map_assignment.labels().to_vec(),
            elbo_trace: fit.elbo_trace.clone(),
            icl,
            converged: fit.converged,
            flags: fit.flags.iter().map(|f| f.as_str().to_string()).collect(),
            seed,
            ari: None,
        }
    }
}

/// One logistic cell of a covariate fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateCellDoc {
    pub mu: Vec<f64>,
    /// Row-major `(2^K − 1) × d`.
    pub beta: Vec<Vec<f64>>,
}

/// Result of `fit` with a covariate file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateFitDoc {
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub alpha: Vec<f64>,
    /// `cells[q][l]` is the logistic model of the ordered block pair.
    pub cells: Vec<Vec<CovariateCellDoc>>,
    pub tau: Vec<Vec<f64>>,
    pub map_assignment: Vec<usize>,
    pub elbo_trace: Vec<f64>,
    pub icl: f64,
    pub converged: bool,
    pub flags: Vec<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<f64>,
}

impl CovariateFitDoc {
    pub fn from_fit(fit: &CovariateFitResult, n: usize, icl: f64, seed: u64) -> Self {
        let model = &fit.model;
        let nb = model.num_blocks();
        let dim = model.dim();
        let cells = (0..nb)
            .map(|q| {
                (0..nb)
                    .map(|l| {
                        let cell = model.cell(q, l);
                        let beta = cell
                            .beta()
                            .chunks(dim.max(1))
                            .map(|row| if dim == 0 { Vec::new() } else { row.to_vec() })
                            .collect();
                        CovariateCellDoc {
                            mu: cell.mu().to_vec(),
                            beta,
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            q: nb,
            k: model.num_layers(),
            n,
            d: dim,
            alpha: model.alpha().to_vec(),
            cells,
            tau: (0..n).map(|i| fit.posterior.row(i).to_vec()).collect(),
            map_assignment: fit.map_assignment.labels().to_vec(),
            elbo_trace: fit.elbo_trace.clone(),
            icl,
            converged: fit.converged,
            flags: fit.flags.iter().map(|f| f.as_str().to_string()).collect(),
            seed,
            ari: None,
        }
    }
}

/// Result of `er-fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErFitDoc {
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub pi: Vec<f64>,
}

/// Result of `er-fit --covariates`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErCovariateFitDoc {
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub mu: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    /// Observed-information standard errors, intercept then coefficients per
    /// non-zero word.
    pub standard_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<String>,
}

/// One candidate row of a `select` report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IclCandidateDoc {
    #[serde(rename = "Q")]
    pub q: usize,
    pub elbo: f64,
    pub completed_log_likelihood: f64,
    pub penalty: f64,
    pub icl: f64,
    pub converged: bool,
    pub flags: Vec<String>,
}

/// Result of `select`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IclReportDoc {
    pub candidates: Vec<IclCandidateDoc>,
    pub failures: Vec<IclFailureDoc>,
    pub warnings: Vec<String>,
    pub selected_q: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IclFailureDoc {
    #[serde(rename = "Q")]
    pub q: usize,
    pub error: String,
}

/// Result of `oracle`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleDoc {
    pub exact_log_likelihood: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elbo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_marginals: Option<Vec<Vec<f64>>>,
}

/// A mean-field posterior as read from `--tau` files: `{"tau": [[…]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauDoc {
    pub tau: Vec<Vec<f64>>,
}

/// Assumption screen written by `lab error-vs-n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionsDoc {
    pub identifiability_pass: bool,
    pub degenerate_alpha: Vec<usize>,
    /// `(word, block, block)` collisions of the expected tie probabilities.
    pub collisions: Vec<(u16, usize, usize)>,
    pub a1_violations: Vec<(usize, usize)>,
    pub a2_violations: Vec<(usize, usize, u16)>,
    pub a3_violations: Vec<usize>,
    pub pass: bool,
}
