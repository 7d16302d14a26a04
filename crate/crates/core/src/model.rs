//! Block parameters and the exact probabilistic identities of the multiplex
//! stochastic block model: complete-data likelihood, per-layer marginals and
//! conditionals, the two-layer independence criterion, parameter counting,
//! and the identifiability condition.
//!
//! Probabilities fed into logarithms are clamped to `[1e-12, 1 − 1e-12]`;
//! exact zeros remain legal in stored parameters.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::MultiplexGraph;
use crate::math::ln_prob;
use crate::{Error, Result};

/// Row-sum tolerance for stored simplex vectors.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Default tolerance for the two-layer independence test.
pub const DEFAULT_INDEPENDENCE_TOL: f64 = 1e-9;

/// Default separation tolerance for the identifiability check.
pub const DEFAULT_IDENTIFIABILITY_TOL: f64 = 1e-6;

pub(crate) fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidInput(format!("{what} must be non-empty")));
    }
    let mut sum = 0.0;
    for &p in v {
        if !(0.0..=1.0 + SIMPLEX_TOL).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "{what} entry {p} outside [0, 1]"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidInput(format!(
            "{what} sums to {sum}, expected 1 within {SIMPLEX_TOL:e}"
        )));
    }
    Ok(())
}

/// Parameters of a multiplex stochastic block model: block-membership
/// probabilities `alpha` (length `Q`) and, for every ordered block pair
/// `(q, l)`, a distribution over the `2^K` edge words.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParameters {
    num_blocks: usize,
    num_layers: usize,
    alpha: Vec<f64>,
    /// Row-major `[q][l][w]`, each `(q, l)` cell a simplex of length `2^K`.
    pi: Vec<f64>,
}

impl BlockParameters {
    pub fn new(
        num_blocks: usize,
        num_layers: usize,
        alpha: Vec<f64>,
        pi: Vec<f64>,
    ) -> Result<Self> {
        if num_blocks == 0 {
            return Err(Error::InvalidInput("block count must be positive".into()));
        }
        if num_layers == 0 || num_layers > crate::graph::MAX_LAYERS {
            return Err(Error::InvalidInput(format!(
                "layer count must be in 1..={}, got {num_layers}",
                crate::graph::MAX_LAYERS
            )));
        }
        if alpha.len() != num_blocks {
            return Err(Error::InvalidInput(format!(
                "alpha has length {}, expected {num_blocks}",
                alpha.len()
            )));
        }
        let num_words = 1usize << num_layers;
        if pi.len() != num_blocks * num_blocks * num_words {
            return Err(Error::InvalidInput(format!(
                "pi has length {}, expected {}",
                pi.len(),
                num_blocks * num_blocks * num_words
            )));
        }
        check_simplex(&alpha, "alpha")?;
        for q in 0..num_blocks {
            for l in 0..num_blocks {
                let base = (q * num_blocks + l) * num_words;
                check_simplex(&pi[base..base + num_words], "pi cell")?;
            }
        }
        Ok(Self {
            num_blocks,
            num_layers,
            alpha,
            pi,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_words(&self) -> usize {
        1 << self.num_layers
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Word distribution of the ordered block pair `(q, l)`.
    #[inline]
    pub fn cell(&self, q: usize, l: usize) -> &[f64] {
        let num_words = self.num_words();
        let base = (q * self.num_blocks + l) * num_words;
        &self.pi[base..base + num_words]
    }

    /// Flat `[q][l][w]` view of all cells.
    pub fn pi_flat(&self) -> &[f64] {
        &self.pi
    }

    /// Clamped log-probability table in the same `[q][l][w]` layout.
    pub(crate) fn ln_pi(&self) -> Vec<f64> {
        self.pi.iter().map(|&p| ln_prob(p)).collect()
    }

    pub(crate) fn ln_alpha(&self) -> Vec<f64> {
        self.alpha.iter().map(|&a| ln_prob(a)).collect()
    }

    /// Copy with block labels relabeled by `perm`: old block `q` becomes
    /// `perm[q]`. `perm` must be a permutation of `0..Q`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        validate_permutation(perm, self.num_blocks)?;
        let num_words = self.num_words();
        let mut alpha = vec![0.0; self.num_blocks];
        let mut pi = vec![0.0; self.pi.len()];
        for q in 0..self.num_blocks {
            alpha[perm[q]] = self.alpha[q];
            for l in 0..self.num_blocks {
                let src = (q * self.num_blocks + l) * num_words;
                let dst = (perm[q] * self.num_blocks + perm[l]) * num_words;
                pi[dst..dst + num_words].copy_from_slice(&self.pi[src..src + num_words]);
            }
        }
        Ok(Self {
            num_blocks: self.num_blocks,
            num_layers: self.num_layers,
            alpha,
            pi,
        })
    }
}

pub(crate) fn validate_permutation(perm: &[usize], len: usize) -> Result<()> {
    if perm.len() != len {
        return Err(Error::InvalidInput(format!(
            "permutation has length {}, expected {len}",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &p in perm {
        if p >= len || seen[p] {
            return Err(Error::InvalidInput("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// A hard block labeling of the nodes, 0-based labels in `0..Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    labels: Vec<usize>,
    num_blocks: usize,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, num_blocks: usize) -> Result<Self> {
        if num_blocks == 0 {
            return Err(Error::InvalidInput("block count must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&z| z >= num_blocks) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {num_blocks} blocks"
            )));
        }
        Ok(Self { labels, num_blocks })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy with labels relabeled by `perm` (old label `q` becomes `perm[q]`).
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        validate_permutation(perm, self.num_blocks)?;
        Ok(Self {
            labels: self.labels.iter().map(|&z| perm[z]).collect(),
            num_blocks: self.num_blocks,
        })
    }
}

/// Log-likelihood of the complete data `(X, z)`:
/// `Σ_{i≠j} ln π_{z_i z_j}^{(w_ij)} + Σ_i ln α_{z_i}`.
pub fn complete_log_likelihood(
    g: &MultiplexGraph,
    z: &Assignment,
    params: &BlockParameters,
) -> Result<f64> {
    if z.len() != g.num_nodes() {
        return Err(Error::InvalidInput(format!(
            "assignment covers {} nodes, graph has {}",
            z.len(),
            g.num_nodes()
        )));
    }
    if z.num_blocks() != params.num_blocks() {
        return Err(Error::InvalidInput(format!(
            "assignment uses {} blocks, parameters have {}",
            z.num_blocks(),
            params.num_blocks()
        )));
    }
    if g.num_layers() != params.num_layers() {
        return Err(Error::InvalidInput(format!(
            "graph has {} layers, parameters have {}",
            g.num_layers(),
            params.num_layers()
        )));
    }
    let n = g.num_nodes();
    let labels = z.labels();
    let mut ll = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                ll += ln_prob(params.cell(labels[i], labels[j])[g.word(i, j) as usize]);
            }
        }
    }
    for &zi in labels {
        ll += ln_prob(params.alpha()[zi]);
    }
    Ok(ll)
}

/// Probability that the edge on `layer` (0-based) is present, under a word
/// distribution `cell`: the mass of all words whose `layer` bit is set.
pub fn marginal_layer_prob(cell: &[f64], layer: usize) -> Result<f64> {
    let num_layers = cell_layers(cell)?;
    if layer >= num_layers {
        return Err(Error::InvalidInput(format!(
            "layer {layer} out of range for {num_layers} layers"
        )));
    }
    let bit = 1usize << layer;
    Ok(cell
        .iter()
        .enumerate()
        .filter(|(w, _)| w & bit != 0)
        .map(|(_, &p)| p)
        .sum())
}

/// Conditional probability that `target_layer` takes `target_value`, given
/// the stated values on a disjoint set of other layers. Computed as a ratio
/// of word-mass sums, which reduces to the two-layer closed form when `K = 2`.
pub fn conditional_layer_prob(
    cell: &[f64],
    target_layer: usize,
    target_value: u8,
    given: &[(usize, u8)],
) -> Result<f64> {
    let num_layers = cell_layers(cell)?;
    if target_layer >= num_layers {
        return Err(Error::InvalidInput(format!(
            "layer {target_layer} out of range for {num_layers} layers"
        )));
    }
    if target_value > 1 {
        return Err(Error::InvalidInput("layer value must be 0 or 1".into()));
    }
    let mut cond_mask = 0usize;
    let mut cond_bits = 0usize;
    for &(layer, value) in given {
        if layer >= num_layers {
            return Err(Error::InvalidInput(format!(
                "conditioning layer {layer} out of range for {num_layers} layers"
            )));
        }
        if layer == target_layer {
            return Err(Error::InvalidInput(
                "conditioning set contains the target layer".into(),
            ));
        }
        if value > 1 {
            return Err(Error::InvalidInput("layer value must be 0 or 1".into()));
        }
        let bit = 1usize << layer;
        if cond_mask & bit != 0 {
            return Err(Error::InvalidInput(format!(
                "layer {layer} conditioned twice"
            )));
        }
        cond_mask |= bit;
        if value == 1 {
            cond_bits |= bit;
        }
    }
    let target_bit = 1usize << target_layer;
    let mut denom = 0.0;
    let mut numer = 0.0;
    for (w, &p) in cell.iter().enumerate() {
        if w & cond_mask == cond_bits {
            denom += p;
            if ((w & target_bit != 0) as u8) == target_value {
                numer += p;
            }
        }
    }
    if denom <= 0.0 {
        return Err(Error::ZeroProbabilityEvent);
    }
    Ok(numer / denom)
}

/// Whether the two layers of a two-layer word distribution are independent:
/// `|π^(00) π^(11) − π^(10) π^(01)| ≤ tol`. Defined only for `K = 2`.
pub fn is_independent(cell: &[f64], tol: f64) -> Result<bool> {
    if cell.len() != 4 {
        return Err(Error::Unsupported(format!(
            "independence test requires exactly 2 layers, got a cell of {} words",
            cell.len()
        )));
    }
    // Storage index: layer 0 is bit 0, so index 1 = word (1,0), index 2 = (0,1).
    Ok((cell[0] * cell[3] - cell[1] * cell[2]).abs() <= tol)
}

/// Free-parameter count of the `Q`-block, `K`-layer model:
/// `(2^K − 1) Q² + (Q − 1)`.
pub fn count_parameters(num_blocks: usize, num_layers: usize) -> usize {
    ((1usize << num_layers) - 1) * num_blocks * num_blocks + (num_blocks - 1)
}

fn cell_layers(cell: &[f64]) -> Result<usize> {
    if cell.len() < 2 || !cell.len().is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "word distribution length {} is not a power of two ≥ 2",
            cell.len()
        )));
    }
    Ok(cell.len().trailing_zeros() as usize)
}

/// One identifiability violation: two blocks whose expected tie probability
/// for some word coincide within tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Collision {
    pub word: u16,
    pub block_a: usize,
    pub block_b: usize,
}

/// Outcome of [`check_identifiability`].
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityReport {
    /// `α_q ≤ tol` violations.
    pub degenerate_alpha: Vec<usize>,
    /// Pairs of blocks with coinciding coordinates of `r^(w) = π^(w) · α`.
    pub collisions: Vec<Collision>,
    /// Expected tie probabilities, `r[w][q] = Σ_l π_{ql}^{(w)} α_l`.
    pub tie_probabilities: Vec<Vec<f64>>,
    pub tol: f64,
}

impl IdentifiabilityReport {
    pub fn pass(&self) -> bool {
        self.degenerate_alpha.is_empty() && self.collisions.is_empty()
    }
}

/// Checks the identifiability condition: every `α_q > tol` and, for every
/// word `w`, the coordinates of `r^(w) = π^(w) · α` are pairwise separated
/// by more than `tol`. Always returns a report; never fails.
pub fn check_identifiability(params: &BlockParameters, tol: f64) -> IdentifiabilityReport {
    let nb = params.num_blocks();
    let nw = params.num_words();
    let degenerate_alpha = (0..nb)
        .filter(|&q| params.alpha()[q] <= tol)
        .collect::<Vec<_>>();
    let mut tie_probabilities = vec![vec![0.0; nb]; nw];
    for q in 0..nb {
        for l in 0..nb {
            let cell = params.cell(q, l);
            for (w, row) in tie_probabilities.iter_mut().enumerate() {
                row[q] += cell[w] * params.alpha()[l];
            }
        }
    }
    let mut collisions = Vec::new();
    for (w, row) in tie_probabilities.iter().enumerate() {
        for a in 0..nb {
            for b in (a + 1)..nb {
                if (row[a] - row[b]).abs() <= tol {
                    collisions.push(Collision {
                        word: w as u16,
                        block_a: a,
                        block_b: b,
                    });
                }
            }
        }
    }
    IdentifiabilityReport {
        degenerate_alpha,
        collisions,
        tie_probabilities,
        tol,
    }
}

/// Parameters drawn from a continuous distribution: Dirichlet(1, …, 1) for
/// `alpha` and every `pi` cell.
#[cfg(test)]
pub(crate) fn random_parameters(
    rng: &mut crate::rng::SplitMix64,
    num_blocks: usize,
    num_layers: usize,
) -> BlockParameters {
    let num_words = 1usize << num_layers;
    let alpha = random_simplex(rng, num_blocks);
    let mut pi = Vec::with_capacity(num_blocks * num_blocks * num_words);
    for _ in 0..num_blocks * num_blocks {
        pi.extend(random_simplex(rng, num_words));
    }
    BlockParameters::new(num_blocks, num_layers, alpha, pi).unwrap()
}

#[cfg(test)]
pub(crate) fn random_simplex(rng: &mut crate::rng::SplitMix64, len: usize) -> Vec<f64> {
    use crate::math;
    let mut v: Vec<f64> = (0..len).map(|_| -math::ln(1.0 - rng.next_f64())).collect();
    let sum: f64 = v.iter().sum();
    if sum <= 0.0 {
        return vec![1.0 / len as f64; len];
    }
    for x in &mut v {
        *x /= sum;
    }
    v
}
