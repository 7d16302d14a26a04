pub mod er_fit;
pub mod fit;
pub mod lab;
pub mod oracle;
pub mod select;
pub mod simulate;
pub mod summarize;

use std::path::Path;

use anyhow::Result;
use muxsbm_core::graph::{LoadReport, MultiplexGraph};

use crate::formats;

/// Loads layers and surfaces the warning counters on stderr.
pub fn load_graph(paths: &[impl AsRef<Path>]) -> Result<MultiplexGraph> {
    let (graph, report) = formats::load_layers(paths)?;
    report_load(&report);
    Ok(graph)
}

fn report_load(report: &LoadReport) {
    if report.self_loops_dropped > 0 {
        eprintln!(
            "warning: dropped {} self-loop edge(s)",
            report.self_loops_dropped
        );
    }
    if report.duplicate_edges > 0 {
        eprintln!(
            "warning: ignored {} duplicate edge(s)",
            report.duplicate_edges
        );
    }
}

/// Warns when the sample is too small for identifiability to be guaranteed.
pub fn warn_small_sample(n: usize, num_blocks: usize) {
    if n < 2 * num_blocks {
        eprintln!(
            "warning: n = {n} is below 2Q = {} — identifiability is not guaranteed",
            2 * num_blocks
        );
    }
}
