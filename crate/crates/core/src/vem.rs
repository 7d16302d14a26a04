//! Variational EM for the multiplex stochastic block model.
//!
//! The marginal likelihood sums over all `Q^n` block assignments, so fitting
//! maximizes a mean-field lower bound instead: with a factorized posterior
//! `τ` (row `i` the approximate distribution of node `i`'s block), the bound
//! is
//!
//! ```text
//! I(τ, θ) = Σ_{i≠j} Σ_{q,l} τ_iq τ_jl ln π_{ql}^{(w_ij)}
//!         + Σ_{i,q} τ_iq (ln α_q − ln τ_iq)
//! ```
//!
//! Coordinate ascent alternates a fixed-point E-step in `τ` with a
//! closed-form M-step in `θ`. Because the likelihood runs over *ordered*
//! pairs, the fixed-point update for node `i` collects both the `(i, j)` and
//! the `(j, i)` factor of every neighbour:
//!
//! ```text
//! τ_iq ∝ α_q exp Σ_{j≠i} Σ_l τ_jl [ln π_{ql}^{(w_ij)} + ln π_{lq}^{(w_ji)}]
//! ```
//!
//! The E-step tracks the best bound seen across inner iterations (including
//! the starting point), so a truncated or oscillating fixed point can never
//! hand back a worse `τ` than it received; together with the exact M-step
//! this makes the outer ELBO trace non-decreasing up to float noise.

use alloc::vec;
use alloc::vec::Vec;

use crate::er::{self, er_word_prob, CovariateFit, CovariateModel, NewtonConfig};
use crate::graph::{EdgeCovariates, MultiplexGraph};
use crate::math::{self, ln_prob, x_ln_x, PROB_FLOOR};
use crate::model::{check_simplex, Assignment, BlockParameters};
use crate::rng::{self, SplitMix64};
use crate::{Error, Result};

/// Mean-field posterior: an `n × Q` row-stochastic matrix, row `i` the
/// approximate posterior of node `i`'s block label.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalPosterior {
    n: usize,
    num_blocks: usize,
    tau: Vec<f64>,
}

impl VariationalPosterior {
    pub fn new(n: usize, num_blocks: usize, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != n * num_blocks {
            return Err(Error::InvalidInput(alloc::format!(
                "tau has {} entries, expected {}",
                tau.len(),
                n * num_blocks
            )));
        }
        for i in 0..n {
            check_simplex(&tau[i * num_blocks..(i + 1) * num_blocks], "tau row")?;
        }
        Ok(Self { n, num_blocks, tau })
    }

    /// Uniform rows, `τ_iq = 1/Q`.
    pub fn uniform(n: usize, num_blocks: usize) -> Self {
        Self {
            n,
            num_blocks,
            tau: vec![1.0 / num_blocks as f64; n * num_blocks],
        }
    }

    /// Degenerate rows concentrated on the given hard labels.
    pub fn from_hard_labels(z: &Assignment) -> Self {
        let num_blocks = z.num_blocks();
        let n = z.len();
        let mut tau = vec![0.0; n * num_blocks];
        for (i, &zi) in z.labels().iter().enumerate() {
            tau[i * num_blocks + zi] = 1.0;
        }
        Self { n, num_blocks, tau }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.tau[i * self.num_blocks..(i + 1) * self.num_blocks]
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Row-wise argmax; ties resolve to the smallest label.
    pub fn map_assignment(&self) -> Assignment {
        let labels = (0..self.n)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (q, &t) in row.iter().enumerate() {
                    if t > row[best] {
                        best = q;
                    }
                }
                best
            })
            .collect();
        Assignment::new(labels, self.num_blocks).expect("argmax labels are in range")
    }
}

/// How restarts of the variational fit are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// First restart from spectral clustering, the rest from random rows.
    #[default]
    SpectralThenRandom,
    /// Every restart from spectral clustering (useful only with 1 restart).
    Spectral,
    /// Every restart from random Dirichlet(1, …, 1) rows.
    Random,
}

/// Knobs of the variational fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_outer_iterations: usize,
    /// Cap on fixed-point sweeps per E-step.
    pub fp_max_iterations: usize,
    /// Fixed-point convergence threshold (infinity norm on `τ`).
    pub fp_tol: f64,
    /// Outer convergence threshold on the relative ELBO improvement.
    pub elbo_rel_tol: f64,
    /// Mixing weight kept on the previous iterate, `τ ← (1−λ) τ_new + λ τ_old`;
    /// zero is the pure fixed point.
    pub damping: f64,
    pub restarts: usize,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_outer_iterations: 500,
            fp_max_iterations: 200,
            fp_tol: 1e-6,
            elbo_rel_tol: 1e-8,
            damping: 0.0,
            restarts: 10,
            init: InitStrategy::SpectralThenRandom,
            seed: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.fp_tol <= 0.0 || self.elbo_rel_tol <= 0.0 {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidInput("damping must lie in [0, 1)".into()));
        }
        if self.restarts == 0 || self.max_outer_iterations == 0 || self.fp_max_iterations == 0 {
            return Err(Error::InvalidInput(
                "restarts and iteration caps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostic flags attached to a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFlag {
    /// Some block's estimated weight fell below `1/(10n)` during fitting.
    NearEmptyBlock,
    /// The final E-step hit its sweep cap before the `τ` change fell below
    /// tolerance.
    FixedPointNotConverged,
    /// Some block pair had zero posterior weight; its word distribution was
    /// set to uniform.
    EmptyCellUniform,
    /// A covariate cell fit did not converge and fell back to intercepts.
    CovariateCellFallback,
}

impl FitFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitFlag::NearEmptyBlock => "near-empty-block",
            FitFlag::FixedPointNotConverged => "fixed-point-not-converged",
            FitFlag::EmptyCellUniform => "empty-cell-uniform",
            FitFlag::CovariateCellFallback => "covariate-cell-fallback",
        }
    }
}

/// Converged variational fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: BlockParameters,
    pub posterior: VariationalPosterior,
    /// Lower bound after each outer iteration of the winning restart;
    /// non-decreasing within float noise.
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    pub map_assignment: Assignment,
    pub flags: Vec<FitFlag>,
    /// Index of the restart that won on ELBO.
    pub best_restart: usize,
    /// Wall-clock seconds; zero when built without the `std` feature.
    pub wall_time_secs: f64,
}

impl FitResult {
    pub fn elbo(&self) -> f64 {
        *self.elbo_trace.last().expect("trace is never empty")
    }
}

// ---------------------------------------------------------------------------
// Pair-cell log-probability providers
// ---------------------------------------------------------------------------

/// Source of `ln p(X_ij | Z_i = q, Z_j = l)` terms; lets the E-step and ELBO
/// run unchanged for the plain model (word table) and the covariate model
/// (per-pair table).
/// Source of the `ln p(X_ij | Z_i = q, Z_j = l)` terms: for every ordered
/// pair a contiguous `Q × Q` block, row-major in `(q, l)`. Lets the E-step
/// and ELBO run unchanged for the plain model (one block per word) and the
/// covariate model (one block per pair).
trait CellLogProb {
    fn num_blocks(&self) -> usize;
    fn ln_alpha(&self) -> &[f64];
    fn pair_cells(&self, i: usize, j: usize) -> &[f64];
}

struct PiProvider<'a> {
    g: &'a MultiplexGraph,
    num_blocks: usize,
    /// Word-major table, `[w][q][l]`.
    by_word: Vec<f64>,
    ln_alpha: Vec<f64>,
}

impl<'a> PiProvider<'a> {
    fn new(g: &'a MultiplexGraph, params: &BlockParameters) -> Result<Self> {
        if g.num_layers() != params.num_layers() {
            return Err(Error::InvalidInput(alloc::format!(
                "graph has {} layers, parameters have {}",
                g.num_layers(),
                params.num_layers()
            )));
        }
        let nb = params.num_blocks();
        let nw = params.num_words();
        let ln_pi = params.ln_pi();
        let mut by_word = vec![0.0; nw * nb * nb];
        for q in 0..nb {
            for l in 0..nb {
                for w in 0..nw {
                    by_word[(w * nb + q) * nb + l] = ln_pi[(q * nb + l) * nw + w];
                }
            }
        }
        Ok(Self {
            g,
            num_blocks: nb,
            by_word,
            ln_alpha: params.ln_alpha(),
        })
    }
}

impl CellLogProb for PiProvider<'_> {
    fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    fn ln_alpha(&self) -> &[f64] {
        &self.ln_alpha
    }

    #[inline]
    fn pair_cells(&self, i: usize, j: usize) -> &[f64] {
        let cells = self.num_blocks * self.num_blocks;
        let base = self.g.word(i, j) as usize * cells;
        &self.by_word[base..base + cells]
    }
}

/// Dense per-pair table for the covariate model, `[(i·n + j) · Q + q] · Q + l`.
struct PairTableProvider {
    n: usize,
    num_blocks: usize,
    table: Vec<f64>,
    ln_alpha: Vec<f64>,
}

impl CellLogProb for PairTableProvider {
    fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    fn ln_alpha(&self) -> &[f64] {
        &self.ln_alpha
    }

    #[inline]
    fn pair_cells(&self, i: usize, j: usize) -> &[f64] {
        let cells = self.num_blocks * self.num_blocks;
        let base = (i * self.n + j) * cells;
        &self.table[base..base + cells]
    }
}

// ---------------------------------------------------------------------------
// ELBO
// ---------------------------------------------------------------------------

fn elbo_impl<M: CellLogProb>(m: &M, tau: &VariationalPosterior) -> f64 {
    let n = tau.num_nodes();
    let nb = tau.num_blocks();
    let ln_alpha = m.ln_alpha();
    let mut bound = 0.0;
    for i in 0..n {
        let ti = tau.row(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let tj = tau.row(j);
            let cells = m.pair_cells(i, j);
            for (q, &tiq) in ti.iter().enumerate() {
                if tiq == 0.0 {
                    continue;
                }
                let row = &cells[q * nb..(q + 1) * nb];
                let mut inner = 0.0;
                for (cell, &tjl) in row.iter().zip(tj) {
                    inner += tjl * cell;
                }
                bound += tiq * inner;
            }
        }
        for q in 0..nb {
            bound += ti[q] * ln_alpha[q] - x_ln_x(ti[q]);
        }
    }
    bound
}

/// The mean-field lower bound `I(τ, θ)` on the marginal log-likelihood.
pub fn elbo(
    g: &MultiplexGraph,
    tau: &VariationalPosterior,
    params: &BlockParameters,
) -> Result<f64> {
    check_tau_shape(g, tau, params.num_blocks())?;
    let provider = PiProvider::new(g, params)?;
    Ok(elbo_impl(&provider, tau))
}

fn check_tau_shape(
    g: &MultiplexGraph,
    tau: &VariationalPosterior,
    num_blocks: usize,
) -> Result<()> {
    if tau.num_nodes() != g.num_nodes() {
        return Err(Error::InvalidInput(alloc::format!(
            "tau covers {} nodes, graph has {}",
            tau.num_nodes(),
            g.num_nodes()
        )));
    }
    if tau.num_blocks() != num_blocks {
        return Err(Error::InvalidInput(alloc::format!(
            "tau has {} blocks, parameters have {}",
            tau.num_blocks(),
            num_blocks
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// E-step
// ---------------------------------------------------------------------------

/// Outcome of one E-step.
#[derive(Debug, Clone)]
pub struct EStepResult {
    pub posterior: VariationalPosterior,
    /// Bound of the returned posterior under the E-step's parameters.
    pub elbo: f64,
    /// Fixed point reached the `τ` tolerance within the sweep budget.
    pub converged: bool,
    pub iterations: usize,
}

fn e_step_impl<M: CellLogProb>(
    m: &M,
    n: usize,
    tau_init: &VariationalPosterior,
    config: &FitConfig,
) -> EStepResult {
    let nb = m.num_blocks();
    let ln_alpha = m.ln_alpha();
    let mut current = tau_init.clone();
    let mut best = current.clone();
    let mut best_elbo = elbo_impl(m, &current);
    let mut converged = false;
    let mut iterations = 0;
    let mut scores = vec![0.0; nb];
    let mut next = vec![0.0; n * nb];

    while iterations < config.fp_max_iterations {
        iterations += 1;
        let mut max_change = 0.0f64;
        for i in 0..n {
            scores.copy_from_slice(ln_alpha);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let tj = current.row(j);
                let out = m.pair_cells(i, j);
                let inc = m.pair_cells(j, i);
                for (l, &tjl) in tj.iter().enumerate() {
                    if tjl == 0.0 {
                        continue;
                    }
                    let in_row = &inc[l * nb..(l + 1) * nb];
                    for (q, s) in scores.iter_mut().enumerate() {
                        *s += tjl * (out[q * nb + l] + in_row[q]);
                    }
                }
            }
            let row = &mut next[i * nb..(i + 1) * nb];
            softmax_into(&scores, row);
            if config.damping > 0.0 {
                let old = current.row(i);
                for (r, &o) in row.iter_mut().zip(old) {
                    *r = (1.0 - config.damping) * *r + config.damping * o;
                }
            }
            floor_and_normalize(row);
            for (r, &o) in row.iter().zip(current.row(i)) {
                max_change = max_change.max(math::abs(*r - o));
            }
        }
        current.tau.copy_from_slice(&next);
        let current_elbo = elbo_impl(m, &current);
        if current_elbo > best_elbo {
            best_elbo = current_elbo;
            best = current.clone();
        }
        if max_change < config.fp_tol {
            converged = true;
            break;
        }
    }

    EStepResult {
        posterior: best,
        elbo: best_elbo,
        converged,
        iterations,
    }
}

/// One fixed-point E-step at fixed parameters. Returns the best-bound iterate
/// encountered, so the result never lowers the ELBO below the starting point.
pub fn e_step(
    g: &MultiplexGraph,
    params: &BlockParameters,
    tau_init: &VariationalPosterior,
    config: &FitConfig,
) -> Result<EStepResult> {
    config.validate()?;
    check_tau_shape(g, tau_init, params.num_blocks())?;
    let provider = PiProvider::new(g, params)?;
    Ok(e_step_impl(&provider, g.num_nodes(), tau_init, config))
}

fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        let e = math::exp(s - max);
        *o = e;
        total += e;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn floor_and_normalize(row: &mut [f64]) {
    let mut total = 0.0;
    for r in row.iter_mut() {
        if *r < PROB_FLOOR {
            *r = PROB_FLOOR;
        }
        total += *r;
    }
    for r in row.iter_mut() {
        *r /= total;
    }
}

// ---------------------------------------------------------------------------
// M-step
// ---------------------------------------------------------------------------

/// Outcome of the closed-form M-step.
#[derive(Debug, Clone)]
pub struct MStepResult {
    pub params: BlockParameters,
    /// Block pairs with zero posterior weight, set to the uniform word
    /// distribution.
    pub empty_cells: Vec<(usize, usize)>,
}

/// Closed-form maximizer of the bound over `θ` at fixed `τ`:
/// `α̂_q = (1/n) Σ_i τ_iq` and
/// `π̂_{ql}^{(w)} = Σ_{i≠j} τ_iq τ_jl 1{w_ij = w} / Σ_{i≠j} τ_iq τ_jl`.
pub fn m_step(g: &MultiplexGraph, tau: &VariationalPosterior) -> Result<MStepResult> {
    check_tau_shape(g, tau, tau.num_blocks())?;
    let n = g.num_nodes();
    let nb = tau.num_blocks();
    let nw = g.num_words();

    let mut alpha = vec![0.0; nb];
    for i in 0..n {
        for (q, &t) in tau.row(i).iter().enumerate() {
            alpha[q] += t;
        }
    }
    for a in &mut alpha {
        *a /= n as f64;
    }

    let mut weighted = vec![0.0; nb * nb * nw];
    for i in 0..n {
        let ti = tau.row(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let tj = tau.row(j);
            let w = g.word(i, j) as usize;
            for q in 0..nb {
                let tiq = ti[q];
                if tiq == 0.0 {
                    continue;
                }
                let base = (q * nb) * nw;
                for l in 0..nb {
                    weighted[base + l * nw + w] += tiq * tj[l];
                }
            }
        }
    }

    let mut pi = vec![0.0; nb * nb * nw];
    let mut empty_cells = Vec::new();
    for q in 0..nb {
        for l in 0..nb {
            let base = (q * nb + l) * nw;
            let cell_weight: f64 = weighted[base..base + nw].iter().sum();
            if cell_weight > 0.0 {
                for w in 0..nw {
                    pi[base + w] = weighted[base + w] / cell_weight;
                }
            } else {
                empty_cells.push((q, l));
                for w in 0..nw {
                    pi[base + w] = 1.0 / nw as f64;
                }
            }
        }
    }

    Ok(MStepResult {
        params: BlockParameters::new(nb, g.num_layers(), alpha, pi)?,
        empty_cells,
    })
}

// ---------------------------------------------------------------------------
// Full fit
// ---------------------------------------------------------------------------

struct SingleRun {
    params: BlockParameters,
    posterior: VariationalPosterior,
    trace: Vec<f64>,
    converged: bool,
    flags: Vec<FitFlag>,
}

fn push_flag(flags: &mut Vec<FitFlag>, flag: FitFlag) {
    if !flags.contains(&flag) {
        flags.push(flag);
    }
}

fn run_single(
    g: &MultiplexGraph,
    tau_init: VariationalPosterior,
    config: &FitConfig,
) -> Result<SingleRun> {
    let n = g.num_nodes();
    let near_empty = 1.0 / (10.0 * n as f64);
    let mut flags = Vec::new();
    let mut tau = tau_init;

    let m = m_step(g, &tau)?;
    if !m.empty_cells.is_empty() {
        push_flag(&mut flags, FitFlag::EmptyCellUniform);
    }
    let mut params = m.params;
    let mut trace = vec![elbo(g, &tau, &params)?];
    let mut converged = false;

    for _ in 0..config.max_outer_iterations {
        let e = e_step(g, &params, &tau, config)?;
        if !e.converged {
            push_flag(&mut flags, FitFlag::FixedPointNotConverged);
        }
        tau = e.posterior;
        let m = m_step(g, &tau)?;
        if !m.empty_cells.is_empty() {
            push_flag(&mut flags, FitFlag::EmptyCellUniform);
        }
        params = m.params;
        if params.alpha().iter().any(|&a| a < near_empty) {
            push_flag(&mut flags, FitFlag::NearEmptyBlock);
        }
        let current = elbo(g, &tau, &params)?;
        let previous = *trace.last().expect("trace is non-empty");
        trace.push(current);
        if (current - previous).abs() <= config.elbo_rel_tol * (1.0 + math::abs(previous)) {
            converged = true;
            break;
        }
    }

    Ok(SingleRun {
        params,
        posterior: tau,
        trace,
        converged,
        flags,
    })
}

/// Fits a `Q`-block model with restarts, returning the restart with the best
/// bound. Deterministic given `(graph, Q, config)`.
pub fn fit(g: &MultiplexGraph, num_blocks: usize, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let n = g.num_nodes();
    if num_blocks == 0 {
        return Err(Error::InvalidInput("block count must be positive".into()));
    }
    if num_blocks > n {
        return Err(Error::InvalidInput(alloc::format!(
            "cannot fit {num_blocks} blocks to {n} nodes"
        )));
    }

    #[cfg(feature = "std")]
    let start = std::time::Instant::now();

    let result = if num_blocks == 1 {
        // Degenerate case: τ is the all-ones column and the M-step is the
        // Erdős–Rényi MLE; one outer iteration suffices.
        let tau = VariationalPosterior::uniform(n, 1);
        let m = m_step(g, &tau)?;
        let bound = elbo(g, &tau, &m.params)?;
        let map_assignment = tau.map_assignment();
        FitResult {
            params: m.params,
            posterior: tau,
            elbo_trace: vec![bound],
            converged: true,
            map_assignment,
            flags: Vec::new(),
            best_restart: 0,
            wall_time_secs: 0.0,
        }
    } else {
        let mut best: Option<(f64, usize, SingleRun)> = None;
        for restart in 0..config.restarts {
            let tau_init = initial_posterior(g, num_blocks, restart, config)?;
            let run = run_single(g, tau_init, config)?;
            let score = *run.trace.last().expect("trace is non-empty");
            if !score.is_finite() {
                continue;
            }
            let better = match &best {
                Some((best_score, _, _)) => score > *best_score,
                None => true,
            };
            if better {
                best = Some((score, restart, run));
            }
        }
        let (_, best_restart, run) = best.ok_or(Error::AllRestartsFailed)?;
        let map_assignment = run.posterior.map_assignment();
        FitResult {
            params: run.params,
            posterior: run.posterior,
            elbo_trace: run.trace,
            converged: run.converged,
            map_assignment,
            flags: run.flags,
            best_restart,
            wall_time_secs: 0.0,
        }
    };

    #[cfg(feature = "std")]
    let result = FitResult {
        wall_time_secs: start.elapsed().as_secs_f64(),
        ..result
    };

    Ok(result)
}

fn initial_posterior(
    g: &MultiplexGraph,
    num_blocks: usize,
    restart: usize,
    config: &FitConfig,
) -> Result<VariationalPosterior> {
    let mut rng = rng::substream(config.seed, rng::domain::RESTART, restart as u64);
    let spectral = match config.init {
        InitStrategy::Spectral => true,
        InitStrategy::Random => false,
        InitStrategy::SpectralThenRandom => restart == 0,
    };
    if spectral {
        Ok(spectral_init(g, num_blocks, &mut rng))
    } else {
        Ok(random_posterior(g.num_nodes(), num_blocks, &mut rng))
    }
}

fn random_posterior(n: usize, num_blocks: usize, rng: &mut SplitMix64) -> VariationalPosterior {
    let mut tau = vec![0.0; n * num_blocks];
    for row in tau.chunks_mut(num_blocks) {
        let mut total = 0.0;
        for r in row.iter_mut() {
            *r = -math::ln(1.0 - rng.next_f64());
            total += *r;
        }
        if total <= 0.0 {
            row.iter_mut().for_each(|r| *r = 1.0 / num_blocks as f64);
        } else {
            row.iter_mut().for_each(|r| *r /= total);
        }
        floor_and_normalize(row);
    }
    VariationalPosterior { n, num_blocks, tau }
}

// ---------------------------------------------------------------------------
// Spectral initialization
// ---------------------------------------------------------------------------

/// Soft labels from k-means on the leading eigenvectors of the symmetrized
/// sum of the layer adjacencies.
fn spectral_init(
    g: &MultiplexGraph,
    num_blocks: usize,
    rng: &mut SplitMix64,
) -> VariationalPosterior {
    let n = g.num_nodes();
    let nl = g.num_layers();
    let mut s = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut edges = 0u32;
            for k in 0..nl {
                let bit = 1u16 << k;
                edges += (g.word(i, j) & bit != 0) as u32 + (g.word(j, i) & bit != 0) as u32;
            }
            s[i * n + j] = edges as f64;
        }
    }
    let vectors = leading_eigenvectors(&s, n, num_blocks, rng);
    let labels = kmeans(&vectors, n, num_blocks, num_blocks, rng);

    // Soften the hard labels so the first E-step can still move every row.
    let confident = 0.9;
    let rest = (1.0 - confident) / (num_blocks as f64 - 1.0).max(1.0);
    let mut tau = vec![0.0; n * num_blocks];
    for (i, &label) in labels.iter().enumerate() {
        let row = &mut tau[i * num_blocks..(i + 1) * num_blocks];
        row.iter_mut().for_each(|r| *r = rest);
        row[label] = confident;
        floor_and_normalize(row);
    }
    VariationalPosterior { n, num_blocks, tau }
}

/// Top `k` eigenvectors of a symmetric matrix by orthogonal iteration,
/// returned row-major as `n × k` node features.
fn leading_eigenvectors(s: &[f64], n: usize, k: usize, rng: &mut SplitMix64) -> Vec<f64> {
    let k = k.min(n);
    // Column-major basis: v[c] is one n-vector.
    let mut basis: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.next_f64() - 0.5).collect())
        .collect();
    orthonormalize(&mut basis, rng);
    let mut product = vec![0.0; n];
    for _ in 0..60 {
        for column in basis.iter_mut() {
            product.iter_mut().for_each(|p| *p = 0.0);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += s[i * n + j] * column[j];
                }
                product[i] = acc;
            }
            column.copy_from_slice(&product);
        }
        orthonormalize(&mut basis, rng);
    }
    let mut features = vec![0.0; n * k];
    for (c, column) in basis.iter().enumerate() {
        for i in 0..n {
            features[i * k + c] = column[i];
        }
    }
    features
}

fn orthonormalize(basis: &mut [Vec<f64>], rng: &mut SplitMix64) {
    let count = basis.len();
    for c in 0..count {
        for prev in 0..c {
            let dot: f64 = basis[c]
                .iter()
                .zip(basis[prev].iter())
                .map(|(a, b)| a * b)
                .sum();
            let (head, tail) = basis.split_at_mut(c);
            for (x, &p) in tail[0].iter_mut().zip(head[prev].iter()) {
                *x -= dot * p;
            }
        }
        let norm = math::sqrt(basis[c].iter().map(|x| x * x).sum::<f64>());
        if norm < 1e-12 {
            // Degenerate direction (e.g. an empty graph): re-randomize.
            for x in basis[c].iter_mut() {
                *x = rng.next_f64() - 0.5;
            }
            let norm = math::sqrt(basis[c].iter().map(|x| x * x).sum::<f64>()).max(1e-12);
            basis[c].iter_mut().for_each(|x| *x /= norm);
        } else {
            basis[c].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// Lloyd's algorithm with greedy farthest-point seeding on `n × dim` features.
fn kmeans(features: &[f64], n: usize, dim: usize, k: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let k = k.min(n);
    let mut centers = vec![0.0; k * dim];
    let first = (rng.next_u64() % n as u64) as usize;
    centers[..dim].copy_from_slice(&features[first * dim..(first + 1) * dim]);
    for c in 1..k {
        // Farthest point from the chosen centers.
        let mut best_i = 0;
        let mut best_d = -1.0;
        for i in 0..n {
            let mut nearest = f64::INFINITY;
            for existing in 0..c {
                nearest = nearest.min(sq_dist(
                    &features[i * dim..(i + 1) * dim],
                    &centers[existing * dim..(existing + 1) * dim],
                ));
            }
            if nearest > best_d {
                best_d = nearest;
                best_i = i;
            }
        }
        centers[c * dim..(c + 1) * dim]
            .copy_from_slice(&features[best_i * dim..(best_i + 1) * dim]);
    }

    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(
                    &features[i * dim..(i + 1) * dim],
                    &centers[c * dim..(c + 1) * dim],
                );
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        centers.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..n {
            counts[labels[i]] += 1;
            for d in 0..dim {
                centers[labels[i] * dim + d] += features[i * dim + d];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster on a random point.
                let pick = (rng.next_u64() % n as u64) as usize;
                centers[c * dim..(c + 1) * dim]
                    .copy_from_slice(&features[pick * dim..(pick + 1) * dim]);
            } else {
                for d in 0..dim {
                    centers[c * dim + d] /= counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------------------
// Covariate variant
// ---------------------------------------------------------------------------

/// Block-model parameters when the word distribution of each block pair is a
/// multinomial logit in the pair covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateBlockModel {
    num_blocks: usize,
    num_layers: usize,
    dim: usize,
    alpha: Vec<f64>,
    /// Row-major `[q][l]` cells.
    cells: Vec<CovariateModel>,
}

impl CovariateBlockModel {
    pub fn new(num_blocks: usize, alpha: Vec<f64>, cells: Vec<CovariateModel>) -> Result<Self> {
        if num_blocks == 0 || cells.len() != num_blocks * num_blocks {
            return Err(Error::InvalidInput(alloc::format!(
                "expected {} cells, got {}",
                num_blocks * num_blocks,
                cells.len()
            )));
        }
        check_simplex(&alpha, "alpha")?;
        if alpha.len() != num_blocks {
            return Err(Error::InvalidInput("alpha length mismatch".into()));
        }
        let num_layers = cells[0].num_layers();
        let dim = cells[0].dim();
        if cells
            .iter()
            .any(|c| c.num_layers() != num_layers || c.dim() != dim)
        {
            return Err(Error::InvalidInput(
                "cells must share layer count and covariate dimension".into(),
            ));
        }
        Ok(Self {
            num_blocks,
            num_layers,
            dim,
            alpha,
            cells,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn cell(&self, q: usize, l: usize) -> &CovariateModel {
        &self.cells[q * self.num_blocks + l]
    }

    /// Completed log-likelihood `ln p(X, z; α, μ, β)` given covariates.
    pub fn complete_log_likelihood(
        &self,
        g: &MultiplexGraph,
        cov: &EdgeCovariates,
        z: &Assignment,
    ) -> Result<f64> {
        if z.len() != g.num_nodes() || z.num_blocks() != self.num_blocks {
            return Err(Error::InvalidInput("assignment shape mismatch".into()));
        }
        let n = g.num_nodes();
        let mut ll = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let probs = er_word_prob(self.cell(z.labels()[i], z.labels()[j]), cov.pair(i, j))?;
                ll += ln_prob(probs[g.word(i, j) as usize]);
            }
        }
        for &zi in z.labels() {
            ll += ln_prob(self.alpha[zi]);
        }
        Ok(ll)
    }
}

/// Outcome of the covariate M-step.
#[derive(Debug, Clone)]
pub struct CovariateMStep {
    pub model: CovariateBlockModel,
    /// Per-cell diagnostics in `[q][l]` order; `None` marks cells that fell
    /// back to intercept-only parameters.
    pub cell_fits: Vec<Option<CovariateFit>>,
    pub fallback_cells: Vec<(usize, usize)>,
}

/// M-step of the covariate model: exact `α` update plus one weighted
/// multinomial-logit Newton fit per block pair, weighted by `τ_iq τ_jl`.
/// Cells whose Newton run fails fall back to intercept-only parameters.
pub fn m_step_covariates(
    g: &MultiplexGraph,
    cov: &EdgeCovariates,
    tau: &VariationalPosterior,
    config: &NewtonConfig,
    warm_start: Option<&CovariateBlockModel>,
) -> Result<CovariateMStep> {
    check_tau_shape(g, tau, tau.num_blocks())?;
    if cov.num_nodes() != g.num_nodes() {
        return Err(Error::InvalidInput("covariate node count mismatch".into()));
    }
    let n = g.num_nodes();
    let nb = tau.num_blocks();
    let nw = g.num_words();

    let mut alpha = vec![0.0; nb];
    for i in 0..n {
        for (q, &t) in tau.row(i).iter().enumerate() {
            alpha[q] += t;
        }
    }
    alpha.iter_mut().for_each(|a| *a /= n as f64);

    let mut cells = Vec::with_capacity(nb * nb);
    let mut cell_fits = Vec::with_capacity(nb * nb);
    let mut fallback_cells = Vec::new();
    for q in 0..nb {
        for l in 0..nb {
            let warm = warm_start.map(|m| m.cell(q, l));
            let fitted = er::fit_weighted_logit_warm(
                g,
                cov,
                |i, j| tau.row(i)[q] * tau.row(j)[l],
                config,
                warm,
            );
            match fitted {
                Ok(fit) => {
                    cells.push(fit.model.clone());
                    cell_fits.push(Some(fit));
                }
                Err(Error::NewtonDidNotConverge(fit)) => {
                    // Keep the diagnostic iterate but report the fallback.
                    fallback_cells.push((q, l));
                    cells.push(intercept_only_cell(g, tau, q, l, nw, cov.dim()));
                    cell_fits.push(Some(*fit));
                }
                Err(_) => {
                    fallback_cells.push((q, l));
                    cells.push(intercept_only_cell(g, tau, q, l, nw, cov.dim()));
                    cell_fits.push(None);
                }
            }
        }
    }

    Ok(CovariateMStep {
        model: CovariateBlockModel::new(nb, alpha, cells)?,
        cell_fits,
        fallback_cells,
    })
}

/// Intercepts matching the τ-weighted word frequencies of a cell, zero
/// coefficients.
fn intercept_only_cell(
    g: &MultiplexGraph,
    tau: &VariationalPosterior,
    q: usize,
    l: usize,
    num_words: usize,
    dim: usize,
) -> CovariateModel {
    let n = g.num_nodes();
    let mut counts = vec![0.0; num_words];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                counts[g.word(i, j) as usize] += tau.row(i)[q] * tau.row(j)[l];
            }
        }
    }
    let floor = 1e-10;
    let base = counts[0].max(floor);
    let mu: Vec<f64> = (1..num_words)
        .map(|w| math::ln(counts[w].max(floor) / base))
        .collect();
    CovariateModel::new(g.num_layers(), dim, mu, vec![0.0; (num_words - 1) * dim])
        .expect("intercept cell parameters are finite")
}

/// Converged covariate fit.
#[derive(Debug, Clone)]
pub struct CovariateFitResult {
    pub model: CovariateBlockModel,
    pub posterior: VariationalPosterior,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    pub map_assignment: Assignment,
    pub flags: Vec<FitFlag>,
    pub best_restart: usize,
    pub wall_time_secs: f64,
}

impl CovariateFitResult {
    pub fn elbo(&self) -> f64 {
        *self.elbo_trace.last().expect("trace is never empty")
    }
}

fn pair_table(
    g: &MultiplexGraph,
    cov: &EdgeCovariates,
    model: &CovariateBlockModel,
) -> Result<PairTableProvider> {
    let n = g.num_nodes();
    let nb = model.num_blocks();
    let mut table = vec![0.0; n * n * nb * nb];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let y = cov.pair(i, j);
            let w = g.word(i, j) as usize;
            for q in 0..nb {
                for l in 0..nb {
                    let probs = er_word_prob(model.cell(q, l), y)?;
                    table[((i * n + j) * nb + q) * nb + l] = ln_prob(probs[w]);
                }
            }
        }
    }
    Ok(PairTableProvider {
        n,
        num_blocks: nb,
        table,
        ln_alpha: model.alpha.iter().map(|&a| ln_prob(a)).collect(),
    })
}

/// Variational EM for the covariate block model: alternates the fixed-point
/// E-step with the per-cell Newton M-step.
pub fn fit_with_covariates(
    g: &MultiplexGraph,
    cov: &EdgeCovariates,
    num_blocks: usize,
    config: &FitConfig,
    newton: &NewtonConfig,
) -> Result<CovariateFitResult> {
    config.validate()?;
    if num_blocks == 0 || num_blocks > g.num_nodes() {
        return Err(Error::InvalidInput(alloc::format!(
            "cannot fit {num_blocks} blocks to {} nodes",
            g.num_nodes()
        )));
    }
    if cov.num_nodes() != g.num_nodes() {
        return Err(Error::InvalidInput("covariate node count mismatch".into()));
    }

    #[cfg(feature = "std")]
    let start = std::time::Instant::now();

    let n = g.num_nodes();
    let mut best: Option<(f64, usize, CovariateFitResult)> = None;
    let restarts = if num_blocks == 1 { 1 } else { config.restarts };
    for restart in 0..restarts {
        let mut tau = if num_blocks == 1 {
            VariationalPosterior::uniform(n, 1)
        } else {
            initial_posterior(g, num_blocks, restart, config)?
        };
        let mut flags = Vec::new();

        let mut m = m_step_covariates(g, cov, &tau, newton, None)?;
        if !m.fallback_cells.is_empty() {
            push_flag(&mut flags, FitFlag::CovariateCellFallback);
        }
        let mut provider = pair_table(g, cov, &m.model)?;
        let mut trace = vec![elbo_impl(&provider, &tau)];
        let mut converged = num_blocks == 1;

        if num_blocks > 1 {
            for _ in 0..config.max_outer_iterations {
                let e = e_step_impl(&provider, n, &tau, config);
                if !e.converged {
                    push_flag(&mut flags, FitFlag::FixedPointNotConverged);
                }
                tau = e.posterior;
                m = m_step_covariates(g, cov, &tau, newton, Some(&m.model))?;
                if !m.fallback_cells.is_empty() {
                    push_flag(&mut flags, FitFlag::CovariateCellFallback);
                }
                provider = pair_table(g, cov, &m.model)?;
                if m.model.alpha().iter().any(|&a| a < 1.0 / (10.0 * n as f64)) {
                    push_flag(&mut flags, FitFlag::NearEmptyBlock);
                }
                let current = elbo_impl(&provider, &tau);
                let previous = *trace.last().expect("trace is non-empty");
                trace.push(current);
                if (current - previous).abs() <= config.elbo_rel_tol * (1.0 + math::abs(previous)) {
                    converged = true;
                    break;
                }
            }
        }

        let score = *trace.last().expect("trace is non-empty");
        if !score.is_finite() {
            continue;
        }
        let better = match &best {
            Some((best_score, _, _)) => score > *best_score,
            None => true,
        };
        if better {
            let map_assignment = tau.map_assignment();
            best = Some((
                score,
                restart,
                CovariateFitResult {
                    model: m.model,
                    posterior: tau,
                    elbo_trace: trace,
                    converged,
                    map_assignment,
                    flags,
                    best_restart: restart,
                    wall_time_secs: 0.0,
                },
            ));
        }
    }

    let (_, _, result) = best.ok_or(Error::AllRestartsFailed)?;

    #[cfg(feature = "std")]
    let result = CovariateFitResult {
        wall_time_secs: start.elapsed().as_secs_f64(),
        ..result
    };

    Ok(result)
}
