//! Text file formats: per-layer adjacency input, covariate and attribute
//! tables, and atomic output writing.
//!
//! A layer file is either
//!
//! - a TSV edge list opening with `# n=<int> base=<0|1>`, followed by one
//!   `src<TAB>dst` pair per line, or
//! - a dense CSV matrix of 0/1 entries (node count = row count, 0-based).
//!
//! Covariate files are TSV with a `src dst y1 … yd` header line, optionally
//! preceded by the same `# n=… base=…` declaration (default base 0). Every
//! ordered off-diagonal pair must appear exactly once.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use muxsbm_core::graph::{EdgeCovariates, GraphBuilder, LoadReport, MultiplexGraph};

#[derive(Debug, Clone, Copy)]
struct EdgeListHeader {
    n: usize,
    base: usize,
}

fn parse_header(line: &str, path: &Path) -> Result<EdgeListHeader> {
    let mut n = None;
    let mut base = None;
    for token in line.trim_start_matches('#').split_whitespace() {
        if let Some(value) = token.strip_prefix("n=") {
            n = Some(
                value
                    .parse::<usize>()
                    .with_context(|| format!("{}: invalid n in header", path.display()))?,
            );
        } else if let Some(value) = token.strip_prefix("base=") {
            let b: usize = value
                .parse()
                .with_context(|| format!("{}: invalid base in header", path.display()))?;
            if b > 1 {
                bail!("{}: base must be 0 or 1", path.display());
            }
            base = Some(b);
        }
    }
    match n {
        Some(n) => Ok(EdgeListHeader {
            n,
            base: base.unwrap_or(0),
        }),
        None => bail!("{}: header must declare n=<int>", path.display()),
    }
}

enum LayerData {
    Edges {
        header: EdgeListHeader,
        edges: Vec<(usize, usize)>,
    },
    Matrix {
        n: usize,
        rows: Vec<Vec<u8>>,
    },
}

fn read_layer_file(path: &Path) -> Result<LayerData> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading layer file {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    match lines.peek() {
        Some(first) if first.trim_start().starts_with('#') => {
            let header = parse_header(lines.next().unwrap(), path)?;
            let mut edges = Vec::new();
            for (idx, line) in lines.enumerate() {
                let mut fields = line.split_whitespace();
                let (src, dst) = match (fields.next(), fields.next(), fields.next()) {
                    (Some(s), Some(d), None) => (s, d),
                    _ => bail!(
                        "{}: edge line {} must be `src<TAB>dst`",
                        path.display(),
                        idx + 2
                    ),
                };
                let parse = |v: &str| -> Result<usize> {
                    let raw: usize = v.parse().with_context(|| {
                        format!("{}: bad node id {v:?} on line {}", path.display(), idx + 2)
                    })?;
                    if raw < header.base {
                        bail!(
                            "{}: node id {raw} below base {} on line {}",
                            path.display(),
                            header.base,
                            idx + 2
                        );
                    }
                    Ok(raw - header.base)
                };
                edges.push((parse(src)?, parse(dst)?));
            }
            Ok(LayerData::Edges { header, edges })
        }
        Some(_) => {
            let mut rows = Vec::new();
            for (idx, line) in lines.enumerate() {
                let row: Vec<u8> = line
                    .split(',')
                    .map(|cell| match cell.trim() {
                        "0" => Ok(0u8),
                        "1" => Ok(1u8),
                        other => bail!(
                            "{}: matrix entry {other:?} on line {} is not 0/1",
                            path.display(),
                            idx + 1
                        ),
                    })
                    .collect::<Result<_>>()?;
                rows.push(row);
            }
            let n = rows.len();
            for (idx, row) in rows.iter().enumerate() {
                if row.len() != n {
                    bail!(
                        "{}: matrix row {} has {} entries, expected {n}",
                        path.display(),
                        idx + 1,
                        row.len()
                    );
                }
            }
            Ok(LayerData::Matrix { n, rows })
        }
        None => bail!("{}: empty layer file", path.display()),
    }
}

/// Loads one graph from per-layer files (one file per layer, in layer
/// order). Node counts must agree across layers; self-loops and duplicates
/// are counted into the report.
pub fn load_layers(paths: &[impl AsRef<Path>]) -> Result<(MultiplexGraph, LoadReport)> {
    if paths.is_empty() {
        bail!("at least one layer file is required");
    }
    let layers: Vec<LayerData> = paths
        .iter()
        .map(|p| read_layer_file(p.as_ref()))
        .collect::<Result<_>>()?;
    let n = match &layers[0] {
        LayerData::Edges { header, .. } => header.n,
        LayerData::Matrix { n, .. } => *n,
    };
    for (idx, layer) in layers.iter().enumerate() {
        let layer_n = match layer {
            LayerData::Edges { header, .. } => header.n,
            LayerData::Matrix { n, .. } => *n,
        };
        if layer_n != n {
            bail!(
                "layer {} declares n={layer_n}, but layer 1 declares n={n}",
                idx + 1
            );
        }
    }
    let mut builder = GraphBuilder::new(n, layers.len())
        .map_err(|e| anyhow::anyhow!("invalid graph shape: {e}"))?;
    for (k, layer) in layers.iter().enumerate() {
        match layer {
            LayerData::Edges { edges, .. } => {
                for &(src, dst) in edges {
                    builder
                        .add_edge(k, src, dst)
                        .map_err(|e| anyhow::anyhow!("layer {}: {e}", k + 1))?;
                }
            }
            LayerData::Matrix { rows, .. } => {
                for (src, row) in rows.iter().enumerate() {
                    for (dst, &bit) in row.iter().enumerate() {
                        if bit == 1 {
                            builder
                                .add_edge(k, src, dst)
                                .map_err(|e| anyhow::anyhow!("layer {}: {e}", k + 1))?;
                        }
                    }
                }
            }
        }
    }
    Ok(builder.finish())
}

/// Writes one layer as an edge-list TSV with a `# n=<n> base=0` header,
/// edges in ascending `(src, dst)` order.
pub fn layer_to_tsv(g: &MultiplexGraph, layer: usize) -> String {
    let n = g.num_nodes();
    let mut out = format!("# n={n} base=0\n");
    let bit = 1u16 << layer;
    for src in 0..n {
        for dst in 0..n {
            if src != dst && g.word(src, dst) & bit != 0 {
                out.push_str(&format!("{src}\t{dst}\n"));
            }
        }
    }
    out
}

/// Reads a covariate TSV. Requires full coverage of all ordered off-diagonal
/// pairs; diagonal rows are ignored.
pub fn load_covariates(path: &Path) -> Result<EdgeCovariates> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading covariate file {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();

    let mut declared: Option<EdgeListHeader> = None;
    if let Some(first) = lines.peek() {
        if first.trim_start().starts_with('#') {
            declared = Some(parse_header(lines.next().unwrap(), path)?);
        }
    }
    let header_line = match lines.next() {
        Some(line) => line,
        None => bail!("{}: missing `src dst y…` header", path.display()),
    };
    let columns: Vec<&str> = header_line.split_whitespace().collect();
    if columns.len() < 2 || columns[0] != "src" || columns[1] != "dst" {
        bail!(
            "{}: header must start with `src dst`, got {header_line:?}",
            path.display()
        );
    }
    let dim = columns.len() - 2;

    struct RawRow {
        src: usize,
        dst: usize,
        values: Vec<f64>,
    }
    let mut rows = Vec::new();
    let mut max_id = 0usize;
    let base = declared.map(|h| h.base).unwrap_or(0);
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 + dim {
            bail!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                idx + 2,
                fields.len(),
                2 + dim
            );
        }
        let parse_id = |v: &str| -> Result<usize> {
            let raw: usize = v
                .parse()
                .with_context(|| format!("{}: bad node id {v:?}", path.display()))?;
            if raw < base {
                bail!("{}: node id {raw} below base {base}", path.display());
            }
            Ok(raw - base)
        };
        let src = parse_id(fields[0])?;
        let dst = parse_id(fields[1])?;
        max_id = max_id.max(src).max(dst);
        let values = fields[2..]
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .with_context(|| format!("{}: bad covariate {v:?}", path.display()))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(RawRow { src, dst, values });
    }

    let n = match declared {
        Some(h) => h.n,
        None => max_id + 1,
    };
    if n < 2 {
        bail!("{}: need at least 2 nodes", path.display());
    }
    let mut values = vec![0.0; n * n * dim];
    let mut seen = vec![false; n * n];
    for row in rows {
        if row.src >= n || row.dst >= n {
            bail!(
                "{}: pair ({}, {}) out of range for n={n}",
                path.display(),
                row.src,
                row.dst
            );
        }
        if row.src == row.dst {
            continue;
        }
        let pair = row.src * n + row.dst;
        if seen[pair] {
            bail!(
                "{}: duplicate pair ({}, {})",
                path.display(),
                row.src,
                row.dst
            );
        }
        seen[pair] = true;
        values[pair * dim..(pair + 1) * dim].copy_from_slice(&row.values);
    }
    let missing = (0..n * n).filter(|&p| p / n != p % n && !seen[p]).count();
    if missing > 0 {
        bail!(
            "{}: {missing} ordered pairs are missing covariates",
            path.display()
        );
    }
    EdgeCovariates::from_values(n, dim, values)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

/// Writes covariates in the TSV format accepted by [`load_covariates`].
pub fn covariates_to_tsv(cov: &EdgeCovariates) -> String {
    let n = cov.num_nodes();
    let mut out = format!("# n={n} base=0\n");
    out.push_str("src\tdst");
    for j in 0..cov.dim() {
        out.push_str(&format!("\ty{}", j + 1));
    }
    out.push('\n');
    for src in 0..n {
        for dst in 0..n {
            if src == dst {
                continue;
            }
            out.push_str(&format!("{src}\t{dst}"));
            for &v in cov.pair(src, dst) {
                out.push_str(&format!("\t{}", crate::json::fmt_f64(v)));
            }
            out.push('\n');
        }
    }
    out
}

/// A per-node attribute table keyed by node id.
#[derive(Debug, Clone)]
pub struct AttributeTable {
    pub names: Vec<String>,
    /// `values[node][attr]`, `None` for nodes absent from the file.
    pub values: Vec<Option<Vec<String>>>,
    /// Ids in the file that exceed the node count, excluded from summaries.
    pub unknown_ids: Vec<usize>,
}

/// Reads a node-attribute TSV (`id name1 name2 …` header, optional
/// `# base=<0|1>` declaration first).
pub fn load_attributes(path: &Path, n: usize) -> Result<AttributeTable> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading attribute file {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut base = 0usize;
    if let Some(first) = lines.peek() {
        if first.trim_start().starts_with('#') {
            let line = lines.next().unwrap();
            for token in line.trim_start_matches('#').split_whitespace() {
                if let Some(value) = token.strip_prefix("base=") {
                    base = value
                        .parse()
                        .with_context(|| format!("{}: invalid base", path.display()))?;
                }
            }
        }
    }
    let header = match lines.next() {
        Some(line) => line,
        None => bail!("{}: missing header", path.display()),
    };
    let columns: Vec<&str> = header.split_whitespace().collect();
    if columns.len() < 2 || columns[0] != "id" {
        bail!(
            "{}: header must be `id <name>…`, got {header:?}",
            path.display()
        );
    }
    let names: Vec<String> = columns[1..].iter().map(|s| s.to_string()).collect();
    let mut values = vec![None; n];
    let mut unknown_ids = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 1 + names.len() {
            bail!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                idx + 2,
                fields.len(),
                1 + names.len()
            );
        }
        let raw: usize = fields[0]
            .parse()
            .with_context(|| format!("{}: bad node id {:?}", path.display(), fields[0]))?;
        if raw < base {
            bail!("{}: node id {raw} below base {base}", path.display());
        }
        let id = raw - base;
        if id >= n {
            unknown_ids.push(raw);
            continue;
        }
        values[id] = Some(fields[1..].iter().map(|s| s.to_string()).collect());
    }
    Ok(AttributeTable {
        names,
        values,
        unknown_ids,
    })
}

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .and_then(|f| f.to_str())
        .map(|f| format!("{f}.tmp"))
        .unwrap_or_else(|| String::from(".muxsbm.tmp"));
    let tmp = path.with_file_name(file_name);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}
