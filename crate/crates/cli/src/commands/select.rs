use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use muxsbm_core::selection::select_q;

use crate::cfg::FitOptions;
use crate::commands::{load_graph, warn_small_sample};
use crate::formats::write_atomic;
use crate::json::{fmt_f64, to_json_bytes, IclCandidateDoc, IclFailureDoc, IclReportDoc};

/// Scan block counts and select the ICL maximizer.
#[derive(Debug, clap::Args)]
pub struct SelectArgs {
    /// Per-layer adjacency files, in layer order.
    #[arg(long = "layers", num_args = 1.., required = true)]
    layers: Vec<PathBuf>,
    #[arg(long)]
    qmin: usize,
    #[arg(long)]
    qmax: usize,
    #[command(flatten)]
    fit: FitOptions,
    /// Report JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Two-column CSV (Q, ICL) output path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub fn run(args: SelectArgs) -> Result<ExitCode> {
    if args.qmin == 0 || args.qmin > args.qmax {
        bail!("need 1 <= qmin <= qmax, got {}..{}", args.qmin, args.qmax);
    }
    let file = args.fit.config_map()?;
    let config = args.fit.resolve(&file)?;
    let graph = load_graph(&args.layers)?;
    if args.qmax > graph.num_nodes() {
        bail!(
            "qmax {} exceeds the node count {}",
            args.qmax,
            graph.num_nodes()
        );
    }
    warn_small_sample(graph.num_nodes(), args.qmax);

    let candidates: Vec<usize> = (args.qmin..=args.qmax).collect();
    let report =
        select_q(&graph, &candidates, &config).map_err(|e| anyhow::anyhow!("scan failed: {e}"))?;

    let doc = IclReportDoc {
        candidates: report
            .records
            .iter()
            .map(|r| IclCandidateDoc {
                q: r.num_blocks,
                elbo: r.elbo,
                completed_log_likelihood: r.completed_log_likelihood,
                penalty: r.penalty,
                icl: r.icl,
                converged: r.converged,
                flags: r.flags.iter().map(|f| f.as_str().to_string()).collect(),
            })
            .collect(),
        failures: report
            .failures
            .iter()
            .map(|f| IclFailureDoc {
                q: f.num_blocks,
                error: f.error.to_string(),
            })
            .collect(),
        warnings: report
            .small_sample_warnings
            .iter()
            .map(|q| format!("n < 2Q for candidate Q = {q}"))
            .collect(),
        selected_q: report.selected,
        seed: config.seed,
    };
    if let Some(path) = &args.out {
        write_atomic(path, &to_json_bytes(&doc)?)?;
    }
    if let Some(path) = &args.csv {
        let mut csv = String::from("Q,ICL\n");
        for r in &report.records {
            csv.push_str(&format!("{},{}\n", r.num_blocks, fmt_f64(r.icl)));
        }
        write_atomic(path, csv.as_bytes())?;
    }
    for warning in &doc.warnings {
        eprintln!("warning: {warning}");
    }
    for failure in &doc.failures {
        eprintln!(
            "warning: fit for Q = {} failed: {}",
            failure.q, failure.error
        );
    }
    println!("{}", report.selected);

    let healthy = doc.failures.is_empty() && report.selected_record().converged;
    Ok(if healthy {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
