//! Directed multiplex graphs with per-pair edge words.
//!
//! A graph holds `n` nodes and `K` directed binary layers. The joint edge
//! pattern of an ordered pair `(i, j)` across the layers is packed into one
//! *word* index in `{0, …, 2^K − 1}`, with layer `k` stored in bit `k` (the
//! first layer is the least significant bit). Storage is a dense `n × n`
//! word matrix: word indices fit in a `u16` because the layer count is capped
//! at [`MAX_LAYERS`], and dense storage keeps the inference loops branch-free
//! at the node counts this model class targets.
//!
//! Diagonal entries exist in storage but are never read: self-relations are
//! outside the model.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Hard cap on the layer count; `2^K` word categories beyond this are
/// statistically meaningless and blow up the parameter count.
pub const MAX_LAYERS: usize = 16;

/// Packs per-layer edge indicators into a word index.
///
/// Layer `k` (0-based) contributes `layer_values[k] << k`, so the first layer
/// is the least significant bit. Inverse of [`decode_word`].
pub fn encode_word(layer_values: &[u8]) -> Result<u16> {
    if layer_values.is_empty() || layer_values.len() > MAX_LAYERS {
        return Err(Error::InvalidInput(alloc::format!(
            "layer vector length must be in 1..={MAX_LAYERS}, got {}",
            layer_values.len()
        )));
    }
    let mut word = 0u16;
    for (k, &bit) in layer_values.iter().enumerate() {
        match bit {
            0 => {}
            1 => word |= 1 << k,
            other => {
                return Err(Error::InvalidInput(alloc::format!(
                    "layer value must be 0 or 1, got {other} at layer {k}"
                )))
            }
        }
    }
    Ok(word)
}

/// Unpacks a word index into per-layer edge indicators.
pub fn decode_word(word: u16, num_layers: usize) -> Result<Vec<u8>> {
    if num_layers == 0 || num_layers > MAX_LAYERS {
        return Err(Error::InvalidInput(alloc::format!(
            "layer count must be in 1..={MAX_LAYERS}, got {num_layers}"
        )));
    }
    if (word as u32) >= (1u32 << num_layers) {
        return Err(Error::InvalidInput(alloc::format!(
            "word {word} out of range for {num_layers} layers"
        )));
    }
    Ok((0..num_layers).map(|k| ((word >> k) & 1) as u8).collect())
}

/// Immutable directed multiplex graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplexGraph {
    n: usize,
    num_layers: usize,
    words: Vec<u16>,
}

impl MultiplexGraph {
    /// Builds a graph from a dense row-major word matrix of length `n * n`.
    /// Diagonal entries are stored but ignored by every model computation.
    pub fn from_words(n: usize, num_layers: usize, words: Vec<u16>) -> Result<Self> {
        validate_shape(n, num_layers)?;
        if words.len() != n * n {
            return Err(Error::InvalidInput(alloc::format!(
                "word matrix has {} entries, expected {}",
                words.len(),
                n * n
            )));
        }
        let limit = 1u32 << num_layers;
        for (idx, &w) in words.iter().enumerate() {
            if (w as u32) >= limit && idx / n != idx % n {
                return Err(Error::InvalidInput(alloc::format!(
                    "word {w} at pair ({}, {}) out of range for {num_layers} layers",
                    idx / n,
                    idx % n
                )));
            }
        }
        Ok(Self {
            n,
            num_layers,
            words,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    /// Number of word categories, `2^K`.
    pub fn num_words(&self) -> usize {
        1 << self.num_layers
    }

    /// Word of the ordered pair `(src, dst)`; `src == dst` is never queried
    /// by model code and is not meaningful.
    #[inline]
    pub fn word(&self, src: usize, dst: usize) -> u16 {
        self.words[src * self.n + dst]
    }

    /// Histogram of edge words over all ordered pairs `(i, j)`, `i ≠ j`.
    /// The counts sum to `n(n−1)`.
    pub fn word_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_words()];
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    counts[self.word(i, j) as usize] += 1;
                }
            }
        }
        counts
    }

    /// Per-node in- and out-degrees on one layer (0-based).
    pub fn degree_stats(&self, layer: usize) -> Result<LayerDegrees> {
        if layer >= self.num_layers {
            return Err(Error::InvalidInput(alloc::format!(
                "layer {layer} out of range for {} layers",
                self.num_layers
            )));
        }
        let bit = 1u16 << layer;
        let mut indegree = vec![0usize; self.n];
        let mut outdegree = vec![0usize; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.word(i, j) & bit != 0 {
                    outdegree[i] += 1;
                    indegree[j] += 1;
                }
            }
        }
        Ok(LayerDegrees {
            indegree,
            outdegree,
        })
    }
}

/// In/out degree vectors for one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDegrees {
    pub indegree: Vec<usize>,
    pub outdegree: Vec<usize>,
}

fn validate_shape(n: usize, num_layers: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(alloc::format!(
            "node count must be at least 2, got {n}"
        )));
    }
    if num_layers == 0 || num_layers > MAX_LAYERS {
        return Err(Error::InvalidInput(alloc::format!(
            "layer count must be in 1..={MAX_LAYERS}, got {num_layers}"
        )));
    }
    Ok(())
}

/// Incremental construction of a [`MultiplexGraph`] from per-layer edges.
///
/// Self-loops are dropped (counted, not fatal) and repeated edges are
/// idempotent (counted as duplicates), so the result is invariant to edge
/// ordering. Out-of-range node or layer indices are hard errors.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    n: usize,
    num_layers: usize,
    words: Vec<u16>,
    self_loops_dropped: u64,
    duplicate_edges: u64,
}

impl GraphBuilder {
    pub fn new(n: usize, num_layers: usize) -> Result<Self> {
        validate_shape(n, num_layers)?;
        Ok(Self {
            n,
            num_layers,
            words: vec![0; n * n],
            self_loops_dropped: 0,
            duplicate_edges: 0,
        })
    }

    /// Adds the directed edge `src → dst` on `layer` (all indices 0-based).
    pub fn add_edge(&mut self, layer: usize, src: usize, dst: usize) -> Result<()> {
        if layer >= self.num_layers {
            return Err(Error::InvalidInput(alloc::format!(
                "layer {layer} out of range for {} layers",
                self.num_layers
            )));
        }
        if src >= self.n || dst >= self.n {
            return Err(Error::InvalidInput(alloc::format!(
                "edge ({src}, {dst}) out of range for {} nodes",
                self.n
            )));
        }
        if src == dst {
            self.self_loops_dropped += 1;
            return Ok(());
        }
        let cell = &mut self.words[src * self.n + dst];
        let bit = 1u16 << layer;
        if *cell & bit != 0 {
            self.duplicate_edges += 1;
        } else {
            *cell |= bit;
        }
        Ok(())
    }

    pub fn finish(self) -> (MultiplexGraph, LoadReport) {
        (
            MultiplexGraph {
                n: self.n,
                num_layers: self.num_layers,
                words: self.words,
            },
            LoadReport {
                self_loops_dropped: self.self_loops_dropped,
                duplicate_edges: self.duplicate_edges,
            },
        )
    }
}

/// Warning counters accumulated while building a graph from edge input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops_dropped: u64,
    pub duplicate_edges: u64,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.self_loops_dropped == 0 && self.duplicate_edges == 0
    }
}

/// Real-valued covariates attached to every ordered pair of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCovariates {
    n: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EdgeCovariates {
    /// Builds from a row-major `n * n * dim` array; all entries must be
    /// finite. Diagonal slots are stored but unused.
    pub fn from_values(n: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(alloc::format!(
                "node count must be at least 2, got {n}"
            )));
        }
        if values.len() != n * n * dim {
            return Err(Error::InvalidInput(alloc::format!(
                "covariate array has {} entries, expected {}",
                values.len(),
                n * n * dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(String::from(
                "covariates must be finite",
            )));
        }
        Ok(Self { n, dim, values })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Covariate vector of the ordered pair `(src, dst)`.
    #[inline]
    pub fn pair(&self, src: usize, dst: usize) -> &[f64] {
        let base = (src * self.n + dst) * self.dim;
        &self.values[base..base + self.dim]
    }
}

/// Three nodes, two layers: layer 0 has edge 0→1; layer 1 has 0→1 and 1→0.
#[cfg(test)]
pub(crate) fn example_graph() -> MultiplexGraph {
    let mut b = GraphBuilder::new(3, 2).unwrap();
    b.add_edge(0, 0, 1).unwrap();
    b.add_edge(1, 0, 1).unwrap();
    b.add_edge(1, 1, 0).unwrap();
    let (g, report) = b.finish();
    assert!(report.is_clean());
    g
}
