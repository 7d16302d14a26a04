use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use muxsbm_core::oracle::{exact_log_likelihood, exact_posterior, kl_decomposition_check};
use muxsbm_core::vem::VariationalPosterior;

use crate::commands::load_graph;
use crate::formats::write_atomic;
use crate::json::{to_json_bytes, OracleDoc, TauDoc, ThetaDoc};

/// Exact enumeration on small instances, for test fixtures.
#[derive(Debug, clap::Args)]
pub struct OracleArgs {
    /// Per-layer adjacency files, in layer order.
    #[arg(long = "layers", num_args = 1.., required = true)]
    layers: Vec<PathBuf>,
    /// Model parameters JSON ({Q, K, alpha, pi}).
    #[arg(long)]
    params: PathBuf,
    /// Mean-field posterior JSON ({"tau": [[…]]}); adds the bound and the KL
    /// decomposition to the output.
    #[arg(long)]
    tau: Option<PathBuf>,
    /// Include exact per-node posterior marginals.
    #[arg(long)]
    marginals: bool,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: OracleArgs) -> Result<ExitCode> {
    let graph = load_graph(&args.layers)?;
    let text = fs::read_to_string(&args.params)
        .with_context(|| format!("reading parameters {}", args.params.display()))?;
    let params: ThetaDoc = serde_json::from_str(&text)
        .with_context(|| format!("parsing parameters {}", args.params.display()))?;
    let params = params.into_params()?;

    let mut doc = OracleDoc {
        exact_log_likelihood: exact_log_likelihood(&graph, &params)
            .map_err(|e| anyhow::anyhow!("{e}"))?,
        elbo: None,
        kl: None,
        residual: None,
        node_marginals: None,
    };

    if let Some(path) = &args.tau {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading tau {}", path.display()))?;
        let tau_doc: TauDoc = serde_json::from_str(&text)
            .with_context(|| format!("parsing tau {}", path.display()))?;
        let n = tau_doc.tau.len();
        let nb = tau_doc.tau.first().map(|r| r.len()).unwrap_or(0);
        let tau = VariationalPosterior::new(n, nb, tau_doc.tau.into_iter().flatten().collect())
            .map_err(|e| anyhow::anyhow!("invalid tau: {e}"))?;
        let check =
            kl_decomposition_check(&graph, &tau, &params).map_err(|e| anyhow::anyhow!("{e}"))?;
        doc.elbo = Some(check.elbo);
        doc.kl = Some(check.kl);
        doc.residual = Some(check.residual);
    }

    if args.marginals {
        let posterior = exact_posterior(&graph, &params).map_err(|e| anyhow::anyhow!("{e}"))?;
        let nb = posterior.num_blocks;
        doc.node_marginals = Some(
            posterior
                .node_marginals
                .chunks(nb)
                .map(|row| row.to_vec())
                .collect(),
        );
    }

    let bytes = to_json_bytes(&doc)?;
    match &args.out {
        Some(path) => write_atomic(path, &bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(ExitCode::SUCCESS)
}
