//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use cfmmwd::mev::{BuilderMode, SearchMode};
use cfmmwd::solvers::SolverSettings;
use cfmmwd::{AssetVector, CfmmState, EndowmentDistribution, TradingFunction, UtilityFunction};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cfmm: Option<CfmmSection>,
    pub utility: Option<UtilityFunction>,
    pub distribution: Option<EndowmentDistribution>,
    pub run: Option<RunSection>,
    #[serde(default)]
    pub solver: SolverSettings,
    pub mev: Option<MevSection>,
    pub lp: Option<LpSection>,
    #[serde(default)]
    pub equilibrium: EquilibriumSection,
    pub stationary: Option<StationarySection>,
    /// Directory of the config file; relative input paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}

fn one_u64() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

fn default_bins() -> usize {
    50
}

fn default_samples() -> usize {
    100_000
}

/// The pool. `params` holds the variant's own fields, e.g.
/// `params = { weights = [0.5, 0.5] }`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfmmSection {
    pub variant: String,
    #[serde(default)]
    pub params: toml::Table,
    pub reserves: Vec<f64>,
    #[serde(default)]
    pub fee: f64,
    /// Liquidity scale applied to `reserves`.
    #[serde(default = "one")]
    pub lambda: f64,
}

impl CfmmSection {
    pub fn function(&self) -> Result<TradingFunction, CliError> {
        let mut t = self.params.clone();
        t.insert("variant".into(), toml::Value::String(self.variant.clone()));
        let c: TradingFunction = toml::Value::Table(t)
            .try_into()
            .map_err(|e| CliError::Config(format!("[cfmm]: {e}")))?;
        c.validate()
            .map_err(|e| CliError::Config(format!("[cfmm]: {e}")))?;
        Ok(c)
    }

    /// The unscaled pool.
    pub fn state(&self) -> Result<CfmmState, CliError> {
        finite("cfmm.lambda", &[self.lambda])?;
        let reserves = AssetVector::new(self.reserves.clone())
            .map_err(|e| CliError::Config(format!("cfmm.reserves: {e}")))?;
        CfmmState::new(self.function()?, reserves, self.fee)
            .map_err(|e| CliError::Config(format!("[cfmm]: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_u64")]
    pub record_every: u64,
    pub out_dir: Option<PathBuf>,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    #[serde(default = "one_usize")]
    pub replicas: usize,
    #[serde(default = "default_bins")]
    pub heatmap_bins: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MevSection {
    /// CSV with header `utility_tag,amount_1,...,amount_l`.
    pub transactions: PathBuf,
    pub builder_endowment: Vec<f64>,
    pub capacity: usize,
    pub mode: BuilderMode,
    #[serde(default = "auto")]
    pub search: SearchMode,
    /// When set, the report also carries the uninformed builder's gap
    /// under `[distribution]`.
    pub inclusion_prob: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn auto() -> SearchMode {
    SearchMode::Auto
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Geometric instead of arithmetic spacing.
    #[serde(default)]
    pub log: bool,
}

/// Sweep of the market price `c = (1, p)`. The LP's initial holdings are the
/// `[cfmm]` reserves.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpSection {
    pub prices: Option<Vec<f64>>,
    pub grid: Option<PriceGrid>,
}

impl LpSection {
    pub fn prices(&self) -> Result<Vec<f64>, CliError> {
        let mut out = match (&self.prices, &self.grid) {
            (Some(p), None) => p.clone(),
            (None, Some(g)) => {
                if g.points < 2 || !(g.lo > 0.0 && g.lo < g.hi && g.hi.is_finite()) {
                    return Err(CliError::Config(
                        "lp.grid needs 0 < lo < hi and at least two points".into(),
                    ));
                }
                let n = (g.points - 1) as f64;
                (0..g.points)
                    .map(|i| {
                        let t = i as f64 / n;
                        if g.log {
                            g.lo * (g.hi / g.lo).powf(t)
                        } else {
                            g.lo + (g.hi - g.lo) * t
                        }
                    })
                    .collect()
            }
            _ => {
                return Err(CliError::Config(
                    "[lp] needs exactly one of `prices` or `grid`".into(),
                ))
            }
        };
        if out.is_empty() || out.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(CliError::Config(
                "lp prices must be positive and finite".into(),
            ));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        Ok(out)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSection {
    /// Sample count for continuous distributions; finite ones are exact.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: 0,
        }
    }
}

/// Either the constant-sum example chain (`r1`, `r2`) or the chain
/// enumerated from `[cfmm]`, `[utility]` and a finite `[distribution]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySection {
    pub r1: Option<u32>,
    pub r2: Option<u32>,
    pub max_states: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.solver
            .validate()
            .map_err(|e| CliError::Config(format!("[solver]: {e}")))?;
        Ok(cfg)
    }

    pub fn cfmm(&self) -> Result<&CfmmSection, CliError> {
        self.cfmm.as_ref().ok_or_else(|| missing("cfmm"))
    }

    pub fn utility(&self) -> Result<&UtilityFunction, CliError> {
        let u = self.utility.as_ref().ok_or_else(|| missing("utility"))?;
        u.validate()
            .map_err(|e| CliError::Config(format!("[utility]: {e}")))?;
        Ok(u)
    }

    pub fn distribution(&self) -> Result<&EndowmentDistribution, CliError> {
        let d = self
            .distribution
            .as_ref()
            .ok_or_else(|| missing("distribution"))?;
        d.validate()
            .map_err(|e| CliError::Config(format!("[distribution]: {e}")))?;
        Ok(d)
    }

    pub fn run(&self) -> Result<&RunSection, CliError> {
        self.run.as_ref().ok_or_else(|| missing("run"))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing [{section}] section"))
}

pub fn finite(name: &str, xs: &[f64]) -> Result<(), CliError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be finite")))
    }
}
