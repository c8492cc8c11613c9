//! Effective run configuration: built-in defaults, then an optional JSON
//! config file, then command-line flags.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use jdpnet_core::aqualoss::{AblWeights, LossWeights};
use jdpnet_core::fpp::FppConfig;
use jdpnet_core::jdpnet::PgMode;
use jdpnet_core::metrics::Metric;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PgModeArg {
    #[default]
    Deterministic,
    Sampled,
}

/// Layout of the `--config` file. Every key is optional; unknown keys are
/// rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    jobs: Option<usize>,
    metrics: Option<String>,
    format: Option<Format>,
    pg_mode: Option<PgModeArg>,
    abl: Option<AblWeights>,
    fpp: Option<FppConfig>,
    loss: Option<LossWeights>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` uses every core. Never affects outputs.
    #[serde(skip)]
    pub jobs: Option<usize>,
    pub metrics: Option<Vec<Metric>>,
    pub format: Format,
    pub pg_mode: PgModeArg,
    pub abl: AblWeights,
    pub fpp: FppConfig,
    pub loss: LossWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: None,
            metrics: None,
            format: Format::Csv,
            pg_mode: PgModeArg::Deterministic,
            abl: AblWeights::default(),
            fpp: FppConfig::default(),
            loss: LossWeights::default(),
        }
    }
}

impl RunConfig {
    pub fn pg_mode(&self) -> PgMode {
        match self.pg_mode {
            PgModeArg::Deterministic => PgMode::Deterministic,
            PgModeArg::Sampled => PgMode::Sampled { seed: self.seed },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.abl.validate().context("invalid AbL settings")?;
        self.fpp.validate().context("invalid FPP settings")?;
        self.loss.validate().context("invalid loss weights")?;
        if self.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        Ok(())
    }
}

fn parse_blocks(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected K1xK2, got `{s}`"))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid block count `{t}`"))
    };
    Ok([parse(a)?, parse(b)?])
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<std::path::PathBuf>,
    /// Seed for sampled PG mode and sample selection.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AblArgs {
    /// Fraction trimmed from each tail of the colour statistics.
    #[arg(long, value_name = "F")]
    pub trim: Option<f64>,
    /// Block grid for both the sharpness and contrast indices.
    #[arg(long, value_name = "K1xK2", value_parser = parse_blocks)]
    pub blocks: Option<[usize; 2]>,
    /// Exponent of the contrast index.
    #[arg(long, value_name = "F")]
    pub alpha: Option<f64>,
    /// Target improvement offset in the AquaBalance loss.
    #[arg(long, value_name = "F", allow_negative_numbers = true)]
    pub lambda_imp: Option<f64>,
    #[arg(long, value_name = "F", allow_negative_numbers = true)]
    pub c1: Option<f64>,
    #[arg(long, value_name = "F", allow_negative_numbers = true)]
    pub c2: Option<f64>,
    #[arg(long, value_name = "F", allow_negative_numbers = true)]
    pub c3: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FppArgs {
    /// Gaussian scale of the border enhancement mask.
    #[arg(long, value_name = "F")]
    pub omega: Option<f64>,
    /// Mask pivot in (0, 1).
    #[arg(long, value_name = "F")]
    pub lambda_bem: Option<f64>,
}

/// Flags that may override a loaded configuration.
#[derive(Default)]
pub struct Overrides<'a> {
    pub common: Option<&'a CommonArgs>,
    pub abl: Option<&'a AblArgs>,
    pub fpp: Option<&'a FppArgs>,
    pub metrics: Option<&'a str>,
    pub format: Option<Format>,
    pub pg_mode: Option<PgModeArg>,
}

fn load_file(path: &Path) -> Result<ConfigFile> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Builds and validates the effective configuration.
pub fn resolve(o: Overrides<'_>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = o.common.and_then(|c| c.config.as_deref()) {
        let file = load_file(path)?;
        if let Some(v) = file.seed {
            cfg.seed = v;
        }
        if file.jobs.is_some() {
            cfg.jobs = file.jobs;
        }
        if let Some(m) = file.metrics {
            cfg.metrics = Some(Metric::parse_list(&m)?);
        }
        if let Some(v) = file.format {
            cfg.format = v;
        }
        if let Some(v) = file.pg_mode {
            cfg.pg_mode = v;
        }
        if let Some(v) = file.abl {
            cfg.abl = v;
        }
        if let Some(v) = file.fpp {
            cfg.fpp = v;
        }
        if let Some(v) = file.loss {
            cfg.loss = v;
        }
    }
    if let Some(c) = o.common {
        if let Some(v) = c.seed {
            cfg.seed = v;
        }
        if c.jobs.is_some() {
            cfg.jobs = c.jobs;
        }
    }
    if let Some(a) = o.abl {
        let w = &mut cfg.abl;
        if let Some(v) = a.trim {
            w.trim = v;
        }
        if let Some(v) = a.blocks {
            w.eme_blocks = v;
            w.cti_blocks = v;
        }
        if let Some(v) = a.alpha {
            w.alpha_entropy = v;
        }
        if let Some(v) = a.lambda_imp {
            w.lambda_imp = v;
        }
        if let Some(v) = a.c1 {
            w.c1 = v;
        }
        if let Some(v) = a.c2 {
            w.c2 = v;
        }
        if let Some(v) = a.c3 {
            w.c3 = v;
        }
    }
    if let Some(f) = o.fpp {
        if let Some(v) = f.omega {
            cfg.fpp.omega = v;
        }
        if let Some(v) = f.lambda_bem {
            cfg.fpp.lambda_bem = v;
        }
    }
    if let Some(m) = o.metrics {
        cfg.metrics = Some(Metric::parse_list(m)?);
    }
    if let Some(v) = o.format {
        cfg.format = v;
    }
    if let Some(v) = o.pg_mode {
        cfg.pg_mode = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `f` on a pool of `jobs` threads (or the global pool).
pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
