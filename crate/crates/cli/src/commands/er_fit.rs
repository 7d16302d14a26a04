use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use muxsbm_core::er::{fit_er, fit_er_covariates, CovariateFit, NewtonConfig};
use muxsbm_core::Error;

use crate::commands::load_graph;
use crate::formats::{load_covariates, write_atomic};
use crate::json::{to_json_bytes, ErCovariateFitDoc, ErFitDoc};

/// Fit the multiplex Erdős–Rényi baseline, optionally with pair covariates.
#[derive(Debug, clap::Args)]
pub struct ErFitArgs {
    /// Per-layer adjacency files, in layer order.
    #[arg(long = "layers", num_args = 1.., required = true)]
    layers: Vec<PathBuf>,
    /// Pair covariates (TSV); switches to the multinomial-logit model.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Newton-Raphson gradient tolerance.
    #[arg(long = "grad-tol", default_value_t = 1e-8)]
    grad_tol: f64,
    /// Newton-Raphson iteration cap.
    #[arg(long = "max-iter", default_value_t = 100)]
    max_iter: usize,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cov_doc(fit: &CovariateFit, n: usize, converged: bool) -> ErCovariateFitDoc {
    let dim = fit.model.dim();
    let mut flags = Vec::new();
    if fit.quasi_separation {
        flags.push(String::from("quasi-separation"));
    }
    if !converged {
        flags.push(String::from("not-converged"));
    }
    ErCovariateFitDoc {
        k: fit.model.num_layers(),
        n,
        d: dim,
        mu: fit.model.mu().to_vec(),
        beta: fit
            .model
            .beta()
            .chunks(dim.max(1))
            .map(|row| if dim == 0 { Vec::new() } else { row.to_vec() })
            .collect(),
        standard_errors: fit.standard_errors.clone(),
        log_likelihood: fit.log_likelihood,
        grad_inf_norm: fit.grad_inf_norm,
        iterations: fit.iterations,
        converged,
        flags,
    }
}

pub fn run(args: ErFitArgs) -> Result<ExitCode> {
    let graph = load_graph(&args.layers)?;
    let n = graph.num_nodes();

    let (bytes, healthy) = match &args.covariates {
        None => {
            let est = fit_er(&graph);
            let doc = ErFitDoc {
                k: graph.num_layers(),
                n,
                pi: est.pi().to_vec(),
            };
            (to_json_bytes(&doc)?, true)
        }
        Some(path) => {
            let cov = load_covariates(path)?;
            let config = NewtonConfig {
                grad_tol: args.grad_tol,
                max_iterations: args.max_iter,
                ..NewtonConfig::default()
            };
            match fit_er_covariates(&graph, &cov, &config) {
                Ok(fit) => {
                    if fit.quasi_separation {
                        eprintln!("warning: quasi-separation detected (parameter cap exceeded)");
                    }
                    let healthy = !fit.quasi_separation;
                    (to_json_bytes(&cov_doc(&fit, n, true))?, healthy)
                }
                Err(Error::NewtonDidNotConverge(fit)) => {
                    eprintln!(
                        "warning: Newton-Raphson did not converge after {} iterations (gradient {:e})",
                        fit.iterations, fit.grad_inf_norm
                    );
                    (to_json_bytes(&cov_doc(&fit, n, false))?, false)
                }
                Err(e) => anyhow::bail!("covariate fit failed: {e}"),
            }
        }
    };

    match &args.out {
        Some(path) => write_atomic(path, &bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(if healthy {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
