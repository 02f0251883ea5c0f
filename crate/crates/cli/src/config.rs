//! JSON experiment configuration: a problem instance plus optimizer, sweep,
//! and simulation settings. The pmf is given as nested arrays in row-major
//! `[y0][y1][y2]` order so files stay human-diffable.

use expreg_core::optimizer::OptimizerSettings;
use expreg_core::prob::{ConditionalPmf, JointSourcePmf, ValidationNote};
use expreg_core::regions::{ErrorBudget, RateBudget, SigmaTriple, SweepGrids};
use expreg_core::sim::{BranchChannels, DecisionStatistic, SchemeConfig};
use expreg_core::LogBase;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub alphabet_sizes: [usize; 3],
    /// Joint pmf, `pmf[y0][y1][y2]`.
    pub pmf: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub rates: RatesSection,
    #[serde(default)]
    pub errors: ErrorsSection,
    #[serde(default = "default_log_base")]
    pub log_base: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub grids: GridsSection,
    /// Target for resolving `log_base = "auto"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_resolution: Option<BaseResolutionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    /// Simulation family across blocklengths for exponent fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_family: Option<Vec<SimSection>>,
}

fn default_log_base() -> String {
    "auto".into()
}

fn default_seed() -> u64 {
    0xE1A7
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub r0: f64,
    #[serde(default)]
    pub r1: f64,
    #[serde(default)]
    pub r2: f64,
}

impl Default for RatesSection {
    fn default() -> Self {
        Self { r0: 0.0, r1: 0.0, r2: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorsSection {
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for ErrorsSection {
    fn default() -> Self {
        Self { eps1: 0.0, eps2: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub restarts: usize,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub value_tolerance: f64,
    pub u0_cap: Option<usize>,
    pub ui_cap: Option<usize>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerSettings::default();
        Self {
            restarts: d.restarts,
            max_iters: d.max_iters,
            convergence_tol: d.convergence_tol,
            value_tolerance: d.value_tolerance,
            u0_cap: d.u0_cap,
            ui_cap: d.ui_cap,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsSection {
    /// Scalarization weights; `null` means the built-in default grid.
    pub lambda: Option<Vec<f64>>,
    pub share_points: usize,
    pub sigma_step: f64,
    pub splits: Vec<f64>,
    pub frontier_gap: f64,
}

impl Default for GridsSection {
    fn default() -> Self {
        let d = SweepGrids::default();
        Self {
            lambda: None,
            share_points: d.share_points,
            sigma_step: d.sigma_step,
            splits: d.splits,
            frontier_gap: d.frontier_gap,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseResolutionSection {
    pub receiver: usize,
    pub rate: f64,
    pub expected: f64,
    #[serde(default = "default_rel_window")]
    pub rel_window: f64,
}

fn default_rel_window() -> f64 {
    0.10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n: usize,
    pub mu: f64,
    pub sigma: [f64; 3],
    /// Channels per branch variant; `null` entries need zero mass.
    pub branches: [Option<BranchSection>; 3],
    #[serde(default = "default_statistic")]
    pub statistic: String,
    pub trials_h0: usize,
    pub trials_h1: usize,
}

fn default_statistic() -> String {
    "letter-typicality".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSection {
    pub u0: ChannelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u2: Option<ChannelSpec>,
}

/// Channel given either structurally or as an explicit row-stochastic matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChannelSpec {
    /// Identity on `inputs` symbols, optionally padded to `out` columns.
    Identity {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out: Option<usize>,
    },
    /// Emit symbol 0 regardless of input.
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out: Option<usize>,
    },
    Matrix { rows: Vec<Vec<f64>> },
}

impl ChannelSpec {
    pub fn build(&self, n_in: usize) -> Result<ConditionalPmf, String> {
        match self {
            ChannelSpec::Identity { out } => {
                let n_out = out.unwrap_or(n_in);
                if n_out < n_in {
                    return Err(format!("identity channel needs out >= {n_in}"));
                }
                Ok(ConditionalPmf::identity(n_in, n_out))
            }
            ChannelSpec::Constant { out } => {
                Ok(ConditionalPmf::constant(n_in, out.unwrap_or(1)))
            }
            ChannelSpec::Matrix { rows } => {
                if rows.len() != n_in {
                    return Err(format!("expected {n_in} rows, got {}", rows.len()));
                }
                let n_out = rows.first().map_or(0, |r| r.len());
                if n_out == 0 || rows.iter().any(|r| r.len() != n_out) {
                    return Err("rows must be non-empty and equally long".into());
                }
                ConditionalPmf::new(n_in, n_out, rows.iter().flatten().copied().collect())
                    .map_err(|e| e.to_string())
            }
        }
    }
}

/// Everything resolved into core types.
pub struct Loaded {
    pub joint: JointSourcePmf,
    pub note: ValidationNote,
    pub rates: RateBudget,
    pub errors: ErrorBudget,
    /// `None` means "auto": resolve empirically before use.
    pub log_base: Option<LogBase>,
    pub settings: OptimizerSettings,
    pub grids: SweepGrids,
    pub raw: InstanceConfig,
}

impl InstanceConfig {
    pub fn load(path: &str) -> Result<Loaded, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        let cfg: InstanceConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.into(),
                source,
            })?;
        cfg.resolve(path)
    }

    pub fn resolve(self, path: &str) -> Result<Loaded, ConfigError> {
        let invalid = |message: String| ConfigError::Invalid { path: path.into(), message };
        let [n0, n1, n2] = self.alphabet_sizes;
        let mut flat = Vec::with_capacity(n0 * n1 * n2);
        if self.pmf.len() != n0 {
            return Err(invalid(format!("pmf has {} y0 slices, expected {n0}", self.pmf.len())));
        }
        for (i, slice) in self.pmf.iter().enumerate() {
            if slice.len() != n1 {
                return Err(invalid(format!("pmf[{i}] has {} rows, expected {n1}", slice.len())));
            }
            for (j, row) in slice.iter().enumerate() {
                if row.len() != n2 {
                    return Err(invalid(format!(
                        "pmf[{i}][{j}] has {} entries, expected {n2}",
                        row.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
        }
        let (joint, note) = JointSourcePmf::validate(n0, n1, n2, flat)
            .map_err(|e| invalid(format!("pmf: {e}")))?;
        let rates = RateBudget::new(self.rates.r0, self.rates.r1, self.rates.r2)
            .map_err(|e| invalid(e.to_string()))?;
        let errors = ErrorBudget::new(self.errors.eps1, self.errors.eps2)
            .map_err(|e| invalid(e.to_string()))?;
        let log_base = match self.log_base.as_str() {
            "bits" => Some(LogBase::Bits),
            "nats" => Some(LogBase::Nats),
            "auto" => None,
            other => return Err(invalid(format!("log_base '{other}' (bits|nats|auto)"))),
        };
        if self.optimizer.restarts == 0 {
            return Err(invalid("optimizer.restarts must be >= 1".into()));
        }
        if self.optimizer.convergence_tol.is_nan() || self.optimizer.convergence_tol <= 0.0 {
            return Err(invalid("optimizer.convergence_tol must be > 0".into()));
        }
        let settings = OptimizerSettings {
            restarts: self.optimizer.restarts,
            max_iters: self.optimizer.max_iters,
            convergence_tol: self.optimizer.convergence_tol,
            value_tolerance: self.optimizer.value_tolerance,
            seed: self.seed,
            u0_cap: self.optimizer.u0_cap,
            ui_cap: self.optimizer.ui_cap,
        };
        let mut grids = SweepGrids {
            share_points: self.grids.share_points,
            sigma_step: self.grids.sigma_step,
            splits: self.grids.splits.clone(),
            frontier_gap: self.grids.frontier_gap,
            ..Default::default()
        };
        if let Some(l) = &self.grids.lambda {
            grids.lambda = l.clone();
        }
        Ok(Loaded {
            joint,
            note,
            rates,
            errors,
            log_base,
            settings,
            grids,
            raw: self,
        })
    }
}

impl Loaded {
    /// Build one simulation config from its section.
    pub fn scheme_config(&self, sim: &SimSection, base: LogBase) -> Result<SchemeConfig, String> {
        let (ny0, _, _) = self.joint.dims();
        let statistic = match sim.statistic.as_str() {
            "letter-typicality" => DecisionStatistic::LetterTypicality,
            "llr" | "llr-threshold" => DecisionStatistic::LlrThreshold,
            other => return Err(format!("statistic '{other}' (letter-typicality|llr)")),
        };
        let mut branches: [Option<BranchChannels>; 3] = [None, None, None];
        for (j, b) in sim.branches.iter().enumerate() {
            if let Some(b) = b {
                let u0 = b.u0.build(ny0)?;
                let ctx = u0.n_out() * ny0;
                let u1 = b.u1.as_ref().map(|c| c.build(ctx)).transpose()?;
                let u2 = b.u2.as_ref().map(|c| c.build(ctx)).transpose()?;
                branches[j] = Some(BranchChannels { u0, u1, u2 });
            }
        }
        let cfg = SchemeConfig {
            n: sim.n,
            mu: sim.mu,
            sigma: SigmaTriple { s0: sim.sigma[0], s1: sim.sigma[1], s2: sim.sigma[2] },
            branches,
            statistic,
            base,
            seed: self.settings.seed,
            trials_h0: sim.trials_h0,
            trials_h1: sim.trials_h1,
        };
        cfg.validate(&self.joint).map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}
