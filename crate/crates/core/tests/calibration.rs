//! Monte-Carlo calibration of the estimators against their generating
//! parameters, at simulation sizes where sampling error is predictable.

#![allow(clippy::needless_range_loop)]

use muxsbm_core::er::{fit_er, CovariateModel, NewtonConfig};
use muxsbm_core::simulate::{sample_covariates, sample_er, sample_sbm_covariates};
use muxsbm_core::vem::{m_step_covariates, CovariateBlockModel, VariationalPosterior};

#[test]
fn er_mle_lands_within_three_binomial_ses() {
    let pi = vec![0.55, 0.2, 0.15, 0.1];
    let truth = muxsbm_core::er::ErParameters::new(2, pi.clone()).unwrap();
    let n = 500;
    let g = sample_er(&truth, n, 2024).unwrap();
    let est = fit_er(&g);
    let pairs = (n * (n - 1)) as f64;
    for w in 0..4 {
        let se = (pi[w] * (1.0 - pi[w]) / pairs).sqrt();
        assert!(
            (est.pi()[w] - pi[w]).abs() <= 3.0 * se,
            "word {w}: {} vs {} (se {se})",
            est.pi()[w],
            pi[w]
        );
    }
}

#[test]
fn covariate_block_m_step_is_calibrated() {
    // Two blocks, one covariate, distinct logistic parameters per cell. The
    // M-step is evaluated at the true hard labels, so each cell is a plain
    // weighted multinomial-logit problem whose observed-information standard
    // errors should cover the truth.
    let truth_mu = [[0.5, -1.0], [-1.5, 1.0]];
    let truth_beta = [[1.0, -0.6], [0.4, -1.2]];
    let mut cells = Vec::new();
    for q in 0..2 {
        for l in 0..2 {
            cells.push(
                CovariateModel::new(1, 1, vec![truth_mu[q][l]], vec![truth_beta[q][l]]).unwrap(),
            );
        }
    }
    let truth = CovariateBlockModel::new(2, vec![0.5, 0.5], cells).unwrap();

    let n = 300;
    let runs = 20;
    let mut covered = 0;
    for run in 0..runs {
        let cov = sample_covariates(n, 1, 9000 + run).unwrap();
        let (g, z) = sample_sbm_covariates(&truth, &cov, 700 + run).unwrap();
        let tau = VariationalPosterior::from_hard_labels(&z);
        let m = m_step_covariates(&g, &cov, &tau, &NewtonConfig::default(), None).unwrap();
        assert!(m.fallback_cells.is_empty(), "run {run} had fallback cells");
        let mut all_cells_ok = true;
        for q in 0..2 {
            for l in 0..2 {
                let fit = m.cell_fits[q * 2 + l].as_ref().unwrap();
                // Parameter order: intercept, then the coefficient.
                let se_beta = fit.standard_errors[1];
                let beta_hat = fit.model.beta()[0];
                if (beta_hat - truth_beta[q][l]).abs() > 4.0 * se_beta {
                    all_cells_ok = false;
                }
            }
        }
        if all_cells_ok {
            covered += 1;
        }
    }
    assert!(
        covered >= 18,
        "only {covered}/{runs} runs covered the truth"
    );
}

#[test]
fn intercept_only_covariate_m_step_matches_plain_m_step_logits() {
    // With the coefficients pinned at zero by construction (d = 0), the cell
    // intercepts are the logits of the plain M-step word frequencies.
    let truth_mu = [[0.5, -1.0], [-1.5, 1.0]];
    let mut cells = Vec::new();
    for q in 0..2 {
        for l in 0..2 {
            cells.push(CovariateModel::new(1, 0, vec![truth_mu[q][l]], vec![]).unwrap());
        }
    }
    let truth = CovariateBlockModel::new(2, vec![0.5, 0.5], cells).unwrap();
    let n = 60;
    let cov = sample_covariates(n, 0, 5).unwrap();
    let (g, z) = sample_sbm_covariates(&truth, &cov, 6).unwrap();
    let tau = VariationalPosterior::from_hard_labels(&z);

    let plain = muxsbm_core::vem::m_step(&g, &tau).unwrap();
    let logit = m_step_covariates(&g, &cov, &tau, &NewtonConfig::default(), None).unwrap();
    for q in 0..2 {
        for l in 0..2 {
            let cell = plain.params.cell(q, l);
            let expected_mu = (cell[1] / cell[0]).ln();
            let got = logit.model.cell(q, l).mu()[0];
            assert!(
                (got - expected_mu).abs() < 1e-7,
                "cell ({q},{l}): {got} vs {expected_mu}"
            );
        }
    }
}
