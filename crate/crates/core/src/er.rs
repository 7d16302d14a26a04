//! Multiplex Erdős–Rényi baseline: every ordered pair draws its edge word
//! independently from one shared distribution over the `2^K` words.
//!
//! The plain model has a closed-form maximum-likelihood estimate (empirical
//! word frequencies). With pair covariates the word distribution becomes a
//! multinomial logit with the all-zeros word as base category, fitted by
//! Newton–Raphson with step halving.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{EdgeCovariates, MultiplexGraph};
use crate::linalg;
use crate::math;
use crate::model::check_simplex;
use crate::{Error, Result};

/// Word distribution of the multiplex Erdős–Rényi model.
#[derive(Debug, Clone, PartialEq)]
pub struct ErParameters {
    num_layers: usize,
    pi: Vec<f64>,
}

impl ErParameters {
    pub fn new(num_layers: usize, pi: Vec<f64>) -> Result<Self> {
        if num_layers == 0 || num_layers > crate::graph::MAX_LAYERS {
            return Err(Error::InvalidInput(format!(
                "layer count must be in 1..={}, got {num_layers}",
                crate::graph::MAX_LAYERS
            )));
        }
        if pi.len() != 1 << num_layers {
            return Err(Error::InvalidInput(format!(
                "pi has length {}, expected {}",
                pi.len(),
                1 << num_layers
            )));
        }
        check_simplex(&pi, "pi")?;
        Ok(Self { num_layers, pi })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }
}

/// Maximum-likelihood estimate: `π̂^(w) = count(w) / (n(n−1))`. Exact, no
/// iteration.
pub fn fit_er(g: &MultiplexGraph) -> ErParameters {
    let total = (g.num_nodes() * (g.num_nodes() - 1)) as f64;
    let pi = g.word_counts().iter().map(|&c| c as f64 / total).collect();
    ErParameters {
        num_layers: g.num_layers(),
        pi,
    }
}

/// Multinomial-logit word model with pair covariates. Each non-zero word `w`
/// carries an intercept `μ^(w)` and a coefficient vector `β^(w)` of length
/// `d`; the all-zeros word is the base category.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateModel {
    num_layers: usize,
    dim: usize,
    /// Intercepts for words `1..2^K`, index `w − 1`.
    mu: Vec<f64>,
    /// Coefficients, row-major `(2^K − 1) × d`, row `w − 1`.
    beta: Vec<f64>,
}

impl CovariateModel {
    pub fn new(num_layers: usize, dim: usize, mu: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if num_layers == 0 || num_layers > crate::graph::MAX_LAYERS {
            return Err(Error::InvalidInput(format!(
                "layer count must be in 1..={}, got {num_layers}",
                crate::graph::MAX_LAYERS
            )));
        }
        let m = (1usize << num_layers) - 1;
        if mu.len() != m || beta.len() != m * dim {
            return Err(Error::InvalidInput(format!(
                "expected {m} intercepts and {} coefficients, got {} and {}",
                m * dim,
                mu.len(),
                beta.len()
            )));
        }
        if mu.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(Self {
            num_layers,
            dim,
            mu,
            beta,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_words(&self) -> usize {
        1 << self.num_layers
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Linear predictor `μ^(w) + β^(w)ᵀ y` for non-zero word `w`.
    fn predictor(&self, word: usize, y: &[f64]) -> f64 {
        let row = word - 1;
        let mut eta = self.mu[row];
        for (j, &yj) in y.iter().enumerate() {
            eta += self.beta[row * self.dim + j] * yj;
        }
        eta
    }
}

/// Word distribution at covariate vector `y`: softmax over the non-zero-word
/// predictors against the base category, computed with a max shift so large
/// predictors cannot overflow.
pub fn er_word_prob(model: &CovariateModel, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != model.dim {
        return Err(Error::InvalidInput(format!(
            "covariate vector has length {}, expected {}",
            y.len(),
            model.dim
        )));
    }
    let num_words = model.num_words();
    let mut eta = vec![0.0; num_words];
    for w in 1..num_words {
        eta[w] = model.predictor(w, y);
    }
    let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = eta.iter().map(|&e| math::exp(e - max)).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Newton–Raphson settings for the covariate fits.
#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub grad_tol: f64,
    /// Step-halving budget per iteration.
    pub max_halvings: usize,
    /// Infinity-norm cap beyond which the fit is flagged quasi-separated;
    /// e^30 already exceeds any realistic odds ratio.
    pub separation_cap: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            grad_tol: 1e-8,
            max_halvings: 30,
            separation_cap: 30.0,
        }
    }
}

/// A fitted covariate model with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateFit {
    pub model: CovariateModel,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted Newton step (starting value first).
    pub ll_trace: Vec<f64>,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    /// Observed-information standard errors in parameter order: for each
    /// non-zero word, the intercept followed by its `d` coefficients.
    pub standard_errors: Vec<f64>,
    /// Parameter norm exceeded the separation cap at the solution.
    pub quasi_separation: bool,
}

/// Fits the covariate multinomial logit to all ordered pairs of `g` by
/// Newton–Raphson on the concatenated `(μ, β)`, maximizing
/// `Σ_{i≠j} ln P(word(i,j) | y_ij)`.
pub fn fit_er_covariates(
    g: &MultiplexGraph,
    cov: &EdgeCovariates,
    config: &NewtonConfig,
) -> Result<CovariateFit> {
    if cov.num_nodes() != g.num_nodes() {
        return Err(Error::InvalidInput(format!(
            "covariates cover {} nodes, graph has {}",
            cov.num_nodes(),
            g.num_nodes()
        )));
    }
    fit_weighted_logit_warm(g, cov, |_, _| 1.0, config, None)
}

/// Weighted multinomial-logit fit shared with the block-model M-step: each
/// ordered pair `(i, j)` contributes with weight `weight(i, j)`. An optional
/// warm start replaces the default frequency-intercept initialization.
pub(crate) fn fit_weighted_logit_warm(
    g: &MultiplexGraph,
    cov: &EdgeCovariates,
    weight: impl Fn(usize, usize) -> f64,
    config: &NewtonConfig,
    warm_start: Option<&CovariateModel>,
) -> Result<CovariateFit> {
    let n = g.num_nodes();
    let num_words = g.num_words();
    let m = num_words - 1;
    let dim = cov.dim();
    let block = 1 + dim;
    let p = m * block;

    // Start from intercepts matching the weighted empirical frequencies
    // (the exact saturated solution when d = 0) and zero coefficients,
    // unless a warm start is supplied.
    let mut theta = vec![0.0; p];
    match warm_start {
        Some(model) => {
            for w in 0..m {
                theta[w * block] = model.mu[w];
                theta[w * block + 1..(w + 1) * block]
                    .copy_from_slice(&model.beta[w * dim..(w + 1) * dim]);
            }
        }
        None => {
            let mut counts = vec![0.0; num_words];
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        counts[g.word(i, j) as usize] += weight(i, j);
                    }
                }
            }
            let floor = 1e-10;
            let base = counts[0].max(floor);
            for w in 1..num_words {
                theta[(w - 1) * block] = math::ln(counts[w].max(floor) / base);
            }
        }
    }

    let eval = |theta: &[f64]| -> f64 {
        let mut ll = 0.0;
        let mut eta = vec![0.0; num_words];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let wt = weight(i, j);
                if wt == 0.0 {
                    continue;
                }
                let y = cov.pair(i, j);
                predictors(theta, y, block, &mut eta);
                let lse = log_sum_exp(&eta);
                ll += wt * (eta[g.word(i, j) as usize] - lse);
            }
        }
        ll
    };

    let mut ll = eval(&theta);
    if !ll.is_finite() {
        return Err(Error::InvalidInput(
            "log-likelihood not finite at the starting point".into(),
        ));
    }
    let mut ll_trace = vec![ll];
    let mut grad = vec![0.0; p];
    let mut info = vec![0.0; p * p];
    let mut eta = vec![0.0; num_words];
    let mut probs = vec![0.0; num_words];
    let mut u = vec![0.0; block];
    let mut iterations = 0;

    loop {
        grad.iter_mut().for_each(|v| *v = 0.0);
        info.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let wt = weight(i, j);
                if wt == 0.0 {
                    continue;
                }
                let y = cov.pair(i, j);
                predictors(&theta, y, block, &mut eta);
                let lse = log_sum_exp(&eta);
                for w in 0..num_words {
                    probs[w] = math::exp(eta[w] - lse);
                }
                u[0] = 1.0;
                u[1..].copy_from_slice(y);
                let obs = g.word(i, j) as usize;
                for w in 1..num_words {
                    let resid = wt * ((w == obs) as u8 as f64 - probs[w]);
                    let row = (w - 1) * block;
                    for (a, &ua) in u.iter().enumerate() {
                        grad[row + a] += resid * ua;
                    }
                }
                // Observed information: (diag(p) − p pᵀ) ⊗ u uᵀ over non-zero words.
                for w in 1..num_words {
                    let rw = (w - 1) * block;
                    for v in w..num_words {
                        let rv = (v - 1) * block;
                        let coef = wt
                            * if w == v {
                                probs[w] * (1.0 - probs[w])
                            } else {
                                -probs[w] * probs[v]
                            };
                        if coef == 0.0 {
                            continue;
                        }
                        for a in 0..block {
                            for b in 0..block {
                                info[(rw + a) * p + (rv + b)] += coef * u[a] * u[b];
                                if w != v {
                                    info[(rv + b) * p + (rw + a)] += coef * u[a] * u[b];
                                }
                            }
                        }
                    }
                }
            }
        }

        let grad_inf_norm = grad.iter().fold(0.0f64, |acc, &v| acc.max(math::abs(v)));
        let finish =
            |theta: Vec<f64>, ll: f64, ll_trace: Vec<f64>, info: &[f64], iterations: usize| {
                let standard_errors = linalg::invert(info, p)
                    .map(|inv| {
                        (0..p)
                            .map(|k| math::sqrt(inv[k * p + k].max(0.0)))
                            .collect()
                    })
                    .unwrap_or_else(|| vec![f64::NAN; p]);
                let quasi_separation = theta.iter().any(|&v| math::abs(v) > config.separation_cap);
                let (mu, beta) = unpack(&theta, m, dim);
                CovariateFit {
                    model: CovariateModel {
                        num_layers: g.num_layers(),
                        dim,
                        mu,
                        beta,
                    },
                    log_likelihood: ll,
                    ll_trace,
                    grad_inf_norm,
                    iterations,
                    standard_errors,
                    quasi_separation,
                }
            };

        if grad_inf_norm < config.grad_tol {
            return Ok(finish(theta, ll, ll_trace, &info, iterations));
        }
        if iterations >= config.max_iterations {
            return Err(Error::NewtonDidNotConverge(Box::new(finish(
                theta, ll, ll_trace, &info, iterations,
            ))));
        }

        // Newton direction; retry with a small ridge if the information
        // matrix is numerically singular.
        let mut direction = grad.clone();
        let mut lhs = info.clone();
        if linalg::solve(&mut lhs, &mut direction, p).is_none() {
            let ridge = 1e-8
                * (0..p)
                    .map(|k| info[k * p + k])
                    .fold(0.0f64, f64::max)
                    .max(1e-8);
            lhs.copy_from_slice(&info);
            for k in 0..p {
                lhs[k * p + k] += ridge;
            }
            direction.copy_from_slice(&grad);
            if linalg::solve(&mut lhs, &mut direction, p).is_none() {
                return Err(Error::NewtonDidNotConverge(Box::new(finish(
                    theta, ll, ll_trace, &info, iterations,
                ))));
            }
        }

        // Step-halving line search: halve until the likelihood does not
        // decrease. Near the optimum the true improvement drops below the
        // float resolution of the objective, so decreases within rounding
        // noise count as non-decreasing.
        let rounding_slack = 1e-12 * (1.0 + math::abs(ll));
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=config.max_halvings {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&direction)
                .map(|(&t, &d)| t + step * d)
                .collect();
            let cand_ll = eval(&candidate);
            if cand_ll.is_finite() && cand_ll >= ll - rounding_slack {
                theta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            return Err(Error::NewtonDidNotConverge(Box::new(finish(
                theta, ll, ll_trace, &info, iterations,
            ))));
        }
        ll_trace.push(ll);
    }
}

fn predictors(theta: &[f64], y: &[f64], block: usize, eta: &mut [f64]) {
    eta[0] = 0.0;
    for w in 1..eta.len() {
        let row = (w - 1) * block;
        let mut e = theta[row];
        for (j, &yj) in y.iter().enumerate() {
            e += theta[row + 1 + j] * yj;
        }
        eta[w] = e;
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|&v| math::exp(v - max)).sum();
    max + math::ln(sum)
}

fn unpack(theta: &[f64], m: usize, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let block = 1 + dim;
    let mut mu = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m * dim);
    for w in 0..m {
        mu.push(theta[w * block]);
        beta.extend_from_slice(&theta[w * block + 1..(w + 1) * block]);
    }
    (mu, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    #[test]
    fn fit_er_empty_graph() {
        let (g, _) = GraphBuilder::new(3, 2).unwrap().finish();
        let est = fit_er(&g);
        assert_eq!(est.pi(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn fit_er_counts_edges() {
        let mut b = GraphBuilder::new(3, 1).unwrap();
        b.add_edge(0, 0, 1).unwrap();
        b.add_edge(0, 2, 1).unwrap();
        let (g, _) = b.finish();
        let est = fit_er(&g);
        assert!((est.pi()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((est.pi()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn word_prob_uniform_at_zero_parameters() {
        let model = CovariateModel::new(2, 1, vec![0.0; 3], vec![0.0; 3]).unwrap();
        let probs = er_word_prob(&model, &[0.4]).unwrap();
        for &p in &probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn word_prob_sums_to_one() {
        let model = CovariateModel::new(
            2,
            2,
            vec![1.5, -2.0, 0.3],
            vec![0.5, -1.0, 2.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        for y in [[0.0, 0.0], [3.0, -2.0], [50.0, 40.0]] {
            let probs = er_word_prob(&model, &y).unwrap();
            let total: f64 = probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(probs.iter().all(|p| p.is_finite()));
        }
    }

    #[test]
    fn word_prob_logistic_value() {
        let model = CovariateModel::new(1, 1, vec![0.5], vec![1.0]).unwrap();
        let probs = er_word_prob(&model, &[1.0]).unwrap();
        let expected = math::exp(1.5) / (1.0 + math::exp(1.5));
        assert!((probs[1] - expected).abs() < 1e-12);
        assert!((probs[1] - 0.81757).abs() < 1e-5);
    }

    #[test]
    fn saturated_intercept_model_reproduces_frequencies() {
        let g = crate::graph::example_graph();
        // All four words must appear for the saturated fit to be interior;
        // extend the example graph so every word occurs.
        let mut b = GraphBuilder::new(4, 2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let w = g.word(i, j);
                    for k in 0..2 {
                        if w & (1 << k) != 0 {
                            b.add_edge(k, i, j).unwrap();
                        }
                    }
                }
            }
        }
        b.add_edge(0, 3, 0).unwrap(); // word 1 for pair (3, 0)
        let (g, _) = b.finish();
        let cov = EdgeCovariates::from_values(4, 0, vec![]).unwrap();
        let fit = fit_er_covariates(&g, &cov, &NewtonConfig::default()).unwrap();
        let probs = er_word_prob(&fit.model, &[]).unwrap();
        let er = fit_er(&g);
        for (p, e) in probs.iter().zip(er.pi()) {
            assert!((p - e).abs() < 1e-8, "{p} vs {e}");
        }
        assert!(fit.grad_inf_norm < 1e-8);
    }

    #[test]
    fn newton_trace_is_non_decreasing() {
        let g = crate::graph::example_graph();
        let n = g.num_nodes();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = (i as f64 - j as f64) * 0.5;
            }
        }
        let cov = EdgeCovariates::from_values(n, 1, values).unwrap();
        let fit = fit_er_covariates(&g, &cov, &NewtonConfig::default()).unwrap();
        for pair in fit.ll_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12 * (1.0 + pair[0].abs()));
        }
    }
}
