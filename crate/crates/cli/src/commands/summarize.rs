use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use crate::commands::load_graph;
use crate::formats::{load_attributes, write_atomic};
use crate::json::fmt_f64;

/// Describe the blocks of a fitted model: sizes, attribute cross-tabs, and
/// per-block quartile summaries.
#[derive(Debug, clap::Args)]
pub struct SummarizeArgs {
    /// Fit result JSON (from `fit`).
    #[arg(long)]
    fit: PathBuf,
    /// Node-attribute TSV (`id name1 …` header).
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// Per-layer adjacency files; adds per-block degree summaries.
    #[arg(long = "layers", num_args = 1..)]
    layers: Vec<PathBuf>,
    /// Output directory for the CSV set.
    #[arg(long)]
    out: PathBuf,
}

/// The slice of a fit document this command needs; extra fields are ignored,
/// so plain and covariate fits both work.
#[derive(Debug, Deserialize)]
struct MapDoc {
    #[serde(rename = "Q")]
    q: usize,
    map_assignment: Vec<usize>,
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Five-number summary with type-7 (linear interpolation) quartiles.
fn five_number(values: &mut [f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("summaries never see NaN"));
    let quantile = |p: f64| -> f64 {
        let pos = p * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        values[lo] * (1.0 - frac) + values[hi] * frac
    };
    Some([
        values[0],
        quantile(0.25),
        quantile(0.5),
        quantile(0.75),
        values[values.len() - 1],
    ])
}

fn quartile_csv(rows: &[(usize, Option<[f64; 5]>)]) -> String {
    let mut out = String::from("block,min,q1,median,q3,max\n");
    for (block, summary) in rows {
        match summary {
            Some(s) => out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                block,
                fmt_f64(s[0]),
                fmt_f64(s[1]),
                fmt_f64(s[2]),
                fmt_f64(s[3]),
                fmt_f64(s[4])
            )),
            None => out.push_str(&format!("{block},nan,nan,nan,nan,nan\n")),
        }
    }
    out
}

pub fn run(args: SummarizeArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.fit)
        .with_context(|| format!("reading fit file {}", args.fit.display()))?;
    let doc: MapDoc = serde_json::from_str(&text)
        .with_context(|| format!("parsing fit file {}", args.fit.display()))?;
    let n = doc.map_assignment.len();
    let num_blocks = doc.q;
    if doc.map_assignment.iter().any(|&z| z >= num_blocks) {
        bail!("{}: MAP labels exceed Q", args.fit.display());
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    // Block sizes.
    let mut sizes = vec![0usize; num_blocks];
    for &z in &doc.map_assignment {
        sizes[z] += 1;
    }
    let mut csv = String::from("block,size\n");
    for (block, size) in sizes.iter().enumerate() {
        csv.push_str(&format!("{block},{size}\n"));
    }
    write_atomic(&args.out.join("block_sizes.csv"), csv.as_bytes())?;

    // Attribute summaries.
    if let Some(path) = &args.attributes {
        let table = load_attributes(path, n)?;
        if !table.unknown_ids.is_empty() {
            eprintln!(
                "warning: {} attribute row(s) reference unknown node ids: {:?}",
                table.unknown_ids.len(),
                table.unknown_ids
            );
        }
        for (attr_idx, name) in table.names.iter().enumerate() {
            let column: Vec<(usize, &str)> = doc
                .map_assignment
                .iter()
                .enumerate()
                .filter_map(|(node, &block)| {
                    table.values[node]
                        .as_ref()
                        .map(|vals| (block, vals[attr_idx].as_str()))
                })
                .collect();
            let numeric: Option<Vec<(usize, f64)>> = column
                .iter()
                .map(|&(block, raw)| raw.parse::<f64>().ok().map(|v| (block, v)))
                .collect();
            match numeric {
                Some(pairs) => {
                    let rows: Vec<(usize, Option<[f64; 5]>)> = (0..num_blocks)
                        .map(|block| {
                            let mut values: Vec<f64> = pairs
                                .iter()
                                .filter(|(b, _)| *b == block)
                                .map(|&(_, v)| v)
                                .collect();
                            (block, five_number(&mut values))
                        })
                        .collect();
                    write_atomic(
                        &args.out.join(format!("numeric_{name}.csv")),
                        quartile_csv(&rows).as_bytes(),
                    )?;
                }
                None => {
                    // Cross-tab of blocks against categories.
                    let mut categories: Vec<&str> = column.iter().map(|&(_, raw)| raw).collect();
                    categories.sort_unstable();
                    categories.dedup();
                    let mut counts: BTreeMap<(usize, &str), usize> = BTreeMap::new();
                    for &(block, raw) in &column {
                        *counts.entry((block, raw)).or_insert(0) += 1;
                    }
                    let mut csv = String::from("block");
                    for cat in &categories {
                        csv.push_str(&format!(",{}", csv_escape(cat)));
                    }
                    csv.push('\n');
                    for block in 0..num_blocks {
                        csv.push_str(&block.to_string());
                        for cat in &categories {
                            let c = counts.get(&(block, cat)).copied().unwrap_or(0);
                            csv.push_str(&format!(",{c}"));
                        }
                        csv.push('\n');
                    }
                    write_atomic(&args.out.join(format!("cross_{name}.csv")), csv.as_bytes())?;
                }
            }
        }
    }

    // Degree summaries per layer and direction.
    if !args.layers.is_empty() {
        let graph = load_graph(&args.layers)?;
        if graph.num_nodes() != n {
            bail!(
                "layer files describe {} nodes, fit covers {n}",
                graph.num_nodes()
            );
        }
        for layer in 0..graph.num_layers() {
            let degrees = graph
                .degree_stats(layer)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            for (direction, values) in [("in", &degrees.indegree), ("out", &degrees.outdegree)] {
                let rows: Vec<(usize, Option<[f64; 5]>)> = (0..num_blocks)
                    .map(|block| {
                        let mut vals: Vec<f64> = values
                            .iter()
                            .enumerate()
                            .filter(|&(node, _)| doc.map_assignment[node] == block)
                            .map(|(_, &d)| d as f64)
                            .collect();
                        (block, five_number(&mut vals))
                    })
                    .collect();
                write_atomic(
                    &args
                        .out
                        .join(format!("degrees_layer{}_{direction}.csv", layer + 1)),
                    quartile_csv(&rows).as_bytes(),
                )?;
            }
        }
    }

    println!("wrote block summaries to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}
