use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use muxsbm_core::align::adjusted_rand_index;
use muxsbm_core::er::NewtonConfig;
use muxsbm_core::selection::{icl, icl_covariates};
use muxsbm_core::vem::{fit, fit_with_covariates};

use crate::cfg::FitOptions;
use crate::commands::{load_graph, warn_small_sample};
use crate::formats::{load_covariates, write_atomic};
use crate::json::{to_json_bytes, CovariateFitDoc, FitDoc, TruthDoc};

/// Fit a block model with a fixed block count.
#[derive(Debug, clap::Args)]
pub struct FitArgs {
    /// Per-layer adjacency files, in layer order.
    #[arg(long = "layers", num_args = 1.., required = true)]
    layers: Vec<PathBuf>,
    /// Block count.
    #[arg(long)]
    q: Option<usize>,
    /// Pair covariates (TSV); switches to the covariate model.
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[command(flatten)]
    fit: FitOptions,
    /// Output file for the result JSON (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth JSON; adds the adjusted Rand index of the MAP labels.
    #[arg(long)]
    score: Option<PathBuf>,
}

fn truth_ari(path: &PathBuf, map_labels: &[usize]) -> Result<f64> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading truth file {}", path.display()))?;
    let truth: TruthDoc = serde_json::from_str(&text)
        .with_context(|| format!("parsing truth file {}", path.display()))?;
    adjusted_rand_index(map_labels, &truth.z).map_err(|e| anyhow::anyhow!("scoring failed: {e}"))
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

pub fn run(args: FitArgs) -> Result<ExitCode> {
    let file = args.fit.config_map()?;
    let config = args.fit.resolve(&file)?;
    let num_blocks = match args.q {
        Some(q) => q,
        None => match file.get("q") {
            Some(raw) => raw.parse().context("config key q")?,
            None => anyhow::bail!("--q is required (flag or config file)"),
        },
    };

    let graph = load_graph(&args.layers)?;
    warn_small_sample(graph.num_nodes(), num_blocks);
    let n = graph.num_nodes();

    let (bytes, healthy) = match &args.covariates {
        None => {
            let result =
                fit(&graph, num_blocks, &config).map_err(|e| anyhow::anyhow!("fit failed: {e}"))?;
            let score = icl(&graph, &result).map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut doc = FitDoc::from_fit(&result, n, score, config.seed);
            if let Some(truth) = &args.score {
                doc.ari = Some(truth_ari(truth, result.map_assignment.labels())?);
            }
            eprintln!(
                "fit Q={num_blocks}: elbo {:.6}, icl {:.6}, converged {}, {:.2}s",
                result.elbo(),
                score,
                result.converged,
                result.wall_time_secs
            );
            (
                to_json_bytes(&doc)?,
                result.converged && result.flags.is_empty(),
            )
        }
        Some(path) => {
            let cov = load_covariates(path)?;
            let result =
                fit_with_covariates(&graph, &cov, num_blocks, &config, &NewtonConfig::default())
                    .map_err(|e| anyhow::anyhow!("covariate fit failed: {e}"))?;
            let score = icl_covariates(&graph, &cov, &result.model, &result.map_assignment)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut doc = CovariateFitDoc::from_fit(&result, n, score, config.seed);
            if let Some(truth) = &args.score {
                doc.ari = Some(truth_ari(truth, result.map_assignment.labels())?);
            }
            eprintln!(
                "covariate fit Q={num_blocks}: elbo {:.6}, icl {:.6}, converged {}, {:.2}s",
                result.elbo(),
                score,
                result.converged,
                result.wall_time_secs
            );
            (
                to_json_bytes(&doc)?,
                result.converged && result.flags.is_empty(),
            )
        }
    };

    emit(&args.out, &bytes)?;
    Ok(if healthy {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
