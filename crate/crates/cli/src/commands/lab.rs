use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use muxsbm_core::lab::{check_assumptions, error_vs_n, AssumptionConfig, ErrorVsNConfig};

use crate::cfg::FitOptions;
use crate::formats::write_atomic;
use crate::json::{fmt_f64, to_json_bytes, AssumptionsDoc, ThetaDoc};

/// Scripted consistency experiments.
#[derive(Debug, clap::Args)]
pub struct LabArgs {
    #[command(subcommand)]
    command: LabCommand,
}

#[derive(Debug, clap::Subcommand)]
enum LabCommand {
    /// Estimation error of the variational fit across a grid of node counts.
    ErrorVsN(ErrorVsNArgs),
}

#[derive(Debug, clap::Args)]
struct ErrorVsNArgs {
    /// Generating parameters JSON ({Q, K, alpha, pi}).
    #[arg(long)]
    params: PathBuf,
    /// Node counts, comma separated.
    #[arg(long = "n-grid", value_delimiter = ',')]
    n_grid: Vec<usize>,
    /// Replications per grid point.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// A2 margin for interior edge probabilities.
    #[arg(long, default_value_t = 0.01)]
    zeta: f64,
    #[command(flatten)]
    fit: FitOptions,
    /// Output directory for errors.csv, medians.csv, assumptions.json.
    #[arg(long)]
    out: PathBuf,
}

fn csv_cell(value: f64) -> String {
    if value.is_finite() {
        fmt_f64(value)
    } else {
        String::from("nan")
    }
}

pub fn run(args: LabArgs) -> Result<ExitCode> {
    let LabCommand::ErrorVsN(args) = args.command;
    if args.n_grid.is_empty() {
        bail!("--n-grid must list at least one node count");
    }

    let text = fs::read_to_string(&args.params)
        .with_context(|| format!("reading parameters {}", args.params.display()))?;
    let truth: ThetaDoc = serde_json::from_str(&text)
        .with_context(|| format!("parsing parameters {}", args.params.display()))?;
    let truth = truth.into_params()?;

    let file = args.fit.config_map()?;
    let fit_config = args.fit.resolve(&file)?;
    let assumptions = AssumptionConfig {
        zeta: args.zeta,
        ..AssumptionConfig::default()
    };

    // Surface the screen before the (potentially long) experiment.
    let screen = check_assumptions(&truth, &assumptions);
    if !screen.pass() {
        eprintln!("warning: generating parameters violate the consistency assumptions:");
        if !screen.identifiability.pass() {
            eprintln!(
                "  identifiability: {} alpha violation(s), {} tie-probability collision(s)",
                screen.identifiability.degenerate_alpha.len(),
                screen.identifiability.collisions.len()
            );
        }
        if !screen.a1_violations.is_empty() {
            eprintln!(
                "  A1: indistinguishable block pairs {:?}",
                screen.a1_violations
            );
        }
        if !screen.a2_violations.is_empty() {
            eprintln!(
                "  A2: {} interior entries outside [zeta, 1-zeta]",
                screen.a2_violations.len()
            );
        }
        if !screen.a3_violations.is_empty() {
            eprintln!(
                "  A3: alpha entries {:?} outside [gamma, 1-gamma]",
                screen.a3_violations
            );
        }
    }

    let config = ErrorVsNConfig {
        n_grid: args.n_grid.clone(),
        replications: args.reps,
        seed: fit_config.seed,
        fit: fit_config,
        assumptions,
    };
    let table = error_vs_n(&truth, &config).map_err(|e| anyhow::anyhow!("{e}"))?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    let mut errors = String::from("n,replication,err_pi,err_alpha\n");
    for row in &table.rows {
        errors.push_str(&format!(
            "{},{},{},{}\n",
            row.n,
            row.replication,
            csv_cell(row.err_pi_inf),
            csv_cell(row.err_alpha_inf)
        ));
    }
    write_atomic(&args.out.join("errors.csv"), errors.as_bytes())?;

    let mut medians = String::from("n,median_err_pi,median_err_alpha\n");
    for m in &table.medians {
        medians.push_str(&format!(
            "{},{},{}\n",
            m.n,
            csv_cell(m.median_err_pi),
            csv_cell(m.median_err_alpha)
        ));
    }
    write_atomic(&args.out.join("medians.csv"), medians.as_bytes())?;

    let screen = &table.assumptions;
    let doc = AssumptionsDoc {
        identifiability_pass: screen.identifiability.pass(),
        degenerate_alpha: screen.identifiability.degenerate_alpha.clone(),
        collisions: screen
            .identifiability
            .collisions
            .iter()
            .map(|c| (c.word, c.block_a, c.block_b))
            .collect(),
        a1_violations: screen.a1_violations.clone(),
        a2_violations: screen.a2_violations.clone(),
        a3_violations: screen.a3_violations.clone(),
        pass: screen.pass(),
    };
    write_atomic(&args.out.join("assumptions.json"), &to_json_bytes(&doc)?)?;

    let failed = table.rows.iter().filter(|r| r.failed).count();
    if failed > 0 {
        eprintln!("warning: {failed} replication(s) failed to fit");
    }
    for m in &table.medians {
        println!(
            "n={}: median err_pi {:.6}, median err_alpha {:.6}",
            m.n, m.median_err_pi, m.median_err_alpha
        );
    }

    let healthy = failed == 0 && doc.pass;
    Ok(if healthy {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
