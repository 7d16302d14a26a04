//! Shared fit options, resolvable from flags plus an optional flat
//! `key = value` config file. Flags always override file values; file keys
//! mirror the long flag names.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use muxsbm_core::vem::{FitConfig, InitStrategy};

/// Parses a flat config document: one `key = value` (or `key value`) pair
/// per line, `#` comments allowed.
pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k, v),
            None => match line.split_once(char::is_whitespace) {
                Some((k, v)) => (k, v),
                None => bail!(
                    "{}: line {} is not a key/value pair: {raw:?}",
                    path.display(),
                    idx + 1
                ),
            },
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn merged<T: FromStr>(
    flag: Option<T>,
    file: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        Some(raw) => match raw.parse() {
            Ok(v) => Ok(Some(v)),
            Err(e) => bail!("config key {key}: cannot parse {raw:?}: {e}"),
        },
        None => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Spectral,
    Random,
    SpectralThenRandom,
}

impl From<InitArg> for InitStrategy {
    fn from(arg: InitArg) -> Self {
        match arg {
            InitArg::Spectral => InitStrategy::Spectral,
            InitArg::Random => InitStrategy::Random,
            InitArg::SpectralThenRandom => InitStrategy::SpectralThenRandom,
        }
    }
}

impl FromStr for InitArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "spectral" => Ok(InitArg::Spectral),
            "random" => Ok(InitArg::Random),
            "spectral-then-random" => Ok(InitArg::SpectralThenRandom),
            other => Err(format!(
                "unknown init strategy {other:?} (expected spectral, random, or spectral-then-random)"
            )),
        }
    }
}

/// Variational-fit knobs shared by `fit`, `select`, and `lab`.
#[derive(Debug, clap::Args)]
pub struct FitOptions {
    /// Master seed controlling all randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of restarts (first is spectral under the default strategy).
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Cap on outer EM iterations.
    #[arg(long = "max-outer")]
    pub max_outer: Option<usize>,
    /// Cap on fixed-point sweeps per E-step.
    #[arg(long = "fp-max")]
    pub fp_max: Option<usize>,
    /// Fixed-point tolerance (infinity norm on tau).
    #[arg(long = "fp-tol")]
    pub fp_tol: Option<f64>,
    /// Relative ELBO improvement below which the outer loop stops.
    #[arg(long = "elbo-tol")]
    pub elbo_tol: Option<f64>,
    /// Damping weight kept on the previous tau iterate, in [0, 1).
    #[arg(long)]
    pub damping: Option<f64>,
    /// Initialization strategy.
    #[arg(long)]
    pub init: Option<InitArg>,
    /// Flat key=value config file mirroring these flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl FitOptions {
    pub fn config_map(&self) -> Result<BTreeMap<String, String>> {
        match &self.config {
            Some(path) => load_config_file(path),
            None => Ok(BTreeMap::new()),
        }
    }

    /// Resolves flags over file values over defaults.
    pub fn resolve(&self, file: &BTreeMap<String, String>) -> Result<FitConfig> {
        let defaults = FitConfig::default();
        let init: Option<InitArg> = merged(self.init, file, "init")?;
        Ok(FitConfig {
            seed: merged(self.seed, file, "seed")?.unwrap_or(0),
            restarts: merged(self.restarts, file, "restarts")?.unwrap_or(defaults.restarts),
            max_outer_iterations: merged(self.max_outer, file, "max-outer")?
                .unwrap_or(defaults.max_outer_iterations),
            fp_max_iterations: merged(self.fp_max, file, "fp-max")?
                .unwrap_or(defaults.fp_max_iterations),
            fp_tol: merged(self.fp_tol, file, "fp-tol")?.unwrap_or(defaults.fp_tol),
            elbo_rel_tol: merged(self.elbo_tol, file, "elbo-tol")?.unwrap_or(defaults.elbo_rel_tol),
            damping: merged(self.damping, file, "damping")?.unwrap_or(defaults.damping),
            init: init.map(InitStrategy::from).unwrap_or(defaults.init),
        })
    }
}
