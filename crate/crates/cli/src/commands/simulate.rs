use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use muxsbm_core::model::BlockParameters;
use muxsbm_core::simulate::{simulate, GraphModel, SimulationSpec};

use crate::formats::{covariates_to_tsv, layer_to_tsv, write_atomic};
use crate::json::{to_json_bytes, ThetaDoc, TruthDoc};

/// Simulate a planted multiplex block model and write layer edge lists plus
/// the ground truth.
#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Node count.
    #[arg(long)]
    n: usize,
    /// Layer count (required unless --params is given).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Block count; 1 gives a plain Erdős–Rényi multiplex.
    #[arg(long = "Q")]
    q: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Within-block per-layer edge probability: one value for all blocks, or
    /// one per block (comma separated) for an asymmetric planted partition.
    #[arg(long = "p-in", value_delimiter = ',', default_value = "0.3")]
    p_in: Vec<f64>,
    /// Between-block per-layer edge probability.
    #[arg(long = "p-out", default_value_t = 0.05)]
    p_out: f64,
    /// Generating parameters as a JSON file, overriding --K/--Q/--p-in/--p-out.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Also draw standard-normal pair covariates of this dimension.
    #[arg(long = "cov-dim")]
    cov_dim: Option<usize>,
}

/// Word distribution of independent per-layer Bernoulli(p) edges.
fn product_cell(num_layers: usize, p: f64) -> Vec<f64> {
    let num_words = 1usize << num_layers;
    (0..num_words)
        .map(|w| {
            (0..num_layers)
                .map(|k| if w >> k & 1 == 1 { p } else { 1.0 - p })
                .product()
        })
        .collect()
}

fn planted_parameters(
    num_blocks: usize,
    num_layers: usize,
    p_in: &[f64],
    p_out: f64,
) -> Result<BlockParameters> {
    let p_in: Vec<f64> = match p_in.len() {
        1 => vec![p_in[0]; num_blocks],
        len if len == num_blocks => p_in.to_vec(),
        len => bail!("--p-in takes 1 or Q = {num_blocks} values, got {len}"),
    };
    for &p in p_in.iter().chain(std::iter::once(&p_out)) {
        if !(0.0..=1.0).contains(&p) {
            bail!("edge probabilities must lie in [0, 1], got {p}");
        }
    }
    let alpha = vec![1.0 / num_blocks as f64; num_blocks];
    let mut pi = Vec::new();
    for q in 0..num_blocks {
        for l in 0..num_blocks {
            let p = if q == l { p_in[q] } else { p_out };
            pi.extend(product_cell(num_layers, p));
        }
    }
    BlockParameters::new(num_blocks, num_layers, alpha, pi)
        .map_err(|e| anyhow::anyhow!("invalid planted parameters: {e}"))
}

pub fn run(args: SimulateArgs) -> Result<ExitCode> {
    let params = match &args.params {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading parameters {}", path.display()))?;
            let doc: ThetaDoc = serde_json::from_str(&text)
                .with_context(|| format!("parsing parameters {}", path.display()))?;
            doc.into_params()?
        }
        None => {
            let k = args
                .k
                .ok_or_else(|| anyhow::anyhow!("--K is required without --params"))?;
            let q = args
                .q
                .ok_or_else(|| anyhow::anyhow!("--Q is required without --params"))?;
            planted_parameters(q, k, &args.p_in, args.p_out)?
        }
    };

    let spec = SimulationSpec {
        n: args.n,
        seed: args.seed,
        model: GraphModel::Sbm(params.clone()),
        covariate_dim: args.cov_dim,
    };
    let output = simulate(&spec).map_err(|e| anyhow::anyhow!("simulation failed: {e}"))?;
    let assignment = output
        .assignment
        .expect("block-model simulation always returns labels");

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    for layer in 0..output.graph.num_layers() {
        let path = args.out.join(format!("layer{}.tsv", layer + 1));
        write_atomic(&path, layer_to_tsv(&output.graph, layer).as_bytes())?;
    }
    let truth = TruthDoc {
        theta: ThetaDoc::from_params(&params),
        z: assignment.labels().to_vec(),
        seed: args.seed,
    };
    write_atomic(&args.out.join("truth.json"), &to_json_bytes(&truth)?)?;

    if let Some(cov) = &output.covariates {
        write_atomic(
            &args.out.join("covariates.tsv"),
            covariates_to_tsv(cov).as_bytes(),
        )?;
    }

    println!(
        "wrote {} layer file(s) and truth.json to {}",
        output.graph.num_layers(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
