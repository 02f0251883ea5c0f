//! Monte Carlo simulation of the rate-sharing achievability scheme.
//!
//! Each trial draws a source block, assigns it to one of the partition cells
//! `D0, D1, D2, S` by a seeded hash thresholded at the cumulative sigma
//! masses, and runs the corresponding coding variant:
//!
//! - in `S` the common message is just the two-bit flag and both centers
//!   alarm;
//! - in `D_j` the transmitter quantizes the block with an i.i.d. random
//!   codebook for the branch's first layer (plus superposition codebooks for
//!   any refinement layers), sends flag + fixed-width codeword indices, and
//!   each served center tests its observation against the indexed codewords;
//!   the unserved center alarms.
//!
//! Small codebooks are materialized from the seed and scanned. Large books
//! are realized lazily: the index of the first typical codeword is geometric
//! in the exact per-codeword typicality probability (computed from per-class
//! letter-count boxes), and that codeword is then drawn from its exact
//! conditional law. A materialized book is one fixed draw shared by all
//! trials; the lazy path redraws per trial, i.e. it samples the random-coding
//! ensemble. Both are unbiased estimators of the scheme's error rates, and
//! the lazy one makes blocklength x rate products far beyond enumeration
//! feasible.
//!
//! Two decision statistics are available: strong letter-frequency typicality
//! of the (codewords, observation) block, and a per-letter log-likelihood-
//! ratio threshold test at `n (I - mu)`. The box test is the textbook
//! construction; the likelihood test has far better finite-blocklength
//! behavior and is what the shipped validation configs use.

mod codebook;
mod engine;

pub use codebook::TypicalityBox;
pub use engine::{DecodeContext, Message, Messages, Simulator};

use crate::base::LogBase;
use crate::optimizer::derive_seed;
use crate::prob::{ConditionalPmf, JointSourcePmf};
use crate::regions::SigmaTriple;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scheme config: {0}")]
    InvalidConfig(String),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),
}

/// Decision statistic used by the centers (and mirrored by the encoder's
/// codeword search, which always uses the letter-frequency box).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecisionStatistic {
    /// Strong letter-frequency typicality with per-letter tolerance `mu`.
    #[default]
    LetterTypicality,
    /// Accept when the block log-likelihood ratio against the product law
    /// reaches `n (I_nominal - mu)`.
    LlrThreshold,
}

impl DecisionStatistic {
    pub fn name(self) -> &'static str {
        match self {
            DecisionStatistic::LetterTypicality => "letter-typicality",
            DecisionStatistic::LlrThreshold => "llr-threshold",
        }
    }
}

/// Channels of one coding variant: the first layer and optional refinement
/// layers for each center.
#[derive(Debug, Clone)]
pub struct BranchChannels {
    pub u0: ConditionalPmf,
    pub u1: Option<ConditionalPmf>,
    pub u2: Option<ConditionalPmf>,
}

impl BranchChannels {
    pub fn first_layer_only(u0: ConditionalPmf) -> Self {
        Self { u0, u1: None, u2: None }
    }
}

/// Partition labels (the common-message flag values).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Label {
    Shared0,
    Only1,
    Only2,
    #[default]
    Skip,
}

impl Label {
    /// Two-bit flag: S -> 00, D0 -> 01, D1 -> 10, D2 -> 11.
    pub fn flag(self) -> u8 {
        match self {
            Label::Skip => 0b00,
            Label::Shared0 => 0b01,
            Label::Only1 => 0b10,
            Label::Only2 => 0b11,
        }
    }

    pub fn from_flag(bits: u8) -> Result<Label, SimError> {
        match bits {
            0b00 => Ok(Label::Skip),
            0b01 => Ok(Label::Shared0),
            0b10 => Ok(Label::Only1),
            0b11 => Ok(Label::Only2),
            other => Err(SimError::MalformedMessage(format!("flag {other:#04b}"))),
        }
    }

    fn branch(self) -> Option<usize> {
        match self {
            Label::Shared0 => Some(0),
            Label::Only1 => Some(1),
            Label::Only2 => Some(2),
            Label::Skip => None,
        }
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub n: usize,
    /// Typicality slack; also the codebook rate margin.
    pub mu: f64,
    pub sigma: SigmaTriple,
    /// Channels per branch; branch `j` may be `None` only if `sigma_j = 0`.
    pub branches: [Option<BranchChannels>; 3],
    pub statistic: DecisionStatistic,
    pub base: LogBase,
    pub seed: u64,
    pub trials_h0: usize,
    pub trials_h1: usize,
}

impl SchemeConfig {
    pub fn validate(&self, joint: &JointSourcePmf) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::InvalidConfig("blocklength must be >= 1".into()));
        }
        if self.mu.is_nan() || self.mu <= 0.0 {
            return Err(SimError::InvalidConfig("mu must be > 0".into()));
        }
        let s = self.sigma;
        if s.s0 < 0.0 || s.s1 < 0.0 || s.s2 < 0.0 || s.sum() > 1.0 + 1e-12 {
            return Err(SimError::InvalidConfig(
                "sigma masses must be non-negative with sum <= 1".into(),
            ));
        }
        let (ny0, _, _) = joint.dims();
        for (j, (mass, branch)) in
            [s.s0, s.s1, s.s2].iter().zip(&self.branches).enumerate()
        {
            match branch {
                None if *mass > 0.0 => {
                    return Err(SimError::InvalidConfig(format!(
                        "branch {j} has mass {mass} but no channels"
                    )));
                }
                Some(b) => {
                    if b.u0.n_in() != ny0 {
                        return Err(SimError::InvalidConfig(format!(
                            "branch {j} first layer expects {} inputs, source has {ny0}",
                            b.u0.n_in()
                        )));
                    }
                    for (i, r) in [&b.u1, &b.u2].iter().enumerate() {
                        if let Some(r) = r {
                            if r.n_in() != b.u0.n_out() * ny0 {
                                return Err(SimError::InvalidConfig(format!(
                                    "branch {j} refinement {} expects {} context rows",
                                    i + 1,
                                    b.u0.n_out() * ny0
                                )));
                            }
                            // variant serving structure: branch 1 refines only
                            // center 1, branch 2 only center 2
                            if (j == 1 && i == 1) || (j == 2 && i == 0) {
                                return Err(SimError::InvalidConfig(format!(
                                    "branch {j} cannot refine center {}",
                                    i + 1
                                )));
                            }
                        }
                    }
                }
                None => {}
            }
        }
        Ok(())
    }
}

/// Binomial point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
    pub hits: usize,
}

impl Estimate {
    fn from_counts(hits: usize, trials: usize) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            mean: p,
            std_err: (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
            hits,
        }
    }
}

/// Aggregated simulation result. All counters are integers internally, so
/// identical seeds reproduce the outcome bit-exactly regardless of thread
/// scheduling.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    /// Empirical type-I error per center (present iff `trials_h0 > 0`).
    pub alpha: [Option<Estimate>; 2],
    /// Empirical type-II error per center (present iff `trials_h1 > 0`).
    pub beta: [Option<Estimate>; 2],
    /// Mean message lengths in bits per block under the null hypothesis,
    /// `[M0, M1, M2]`.
    pub mean_len_h0: [Option<f64>; 3],
    /// Per-trial exact length accounting held in every trial.
    pub length_accounting_ok: bool,
    /// Encoder failed to find a typical codeword (counted over both
    /// hypotheses; an in-band outcome, not an error).
    pub not_found: usize,
    /// Empirical partition-label counts over all trials `[D0, D1, D2, S]`.
    pub label_counts: [usize; 4],
    pub trials_h0: usize,
    pub trials_h1: usize,
    pub n: usize,
    pub seed: u64,
}

/// Nominal per-branch rates and message widths implied by a config; useful
/// for budget checks and reporting.
#[derive(Debug, Clone)]
pub struct SchemeRates {
    /// Per-branch first-layer rate `I(U0^j;Y0)` (config base).
    pub first_layer_rate: [Option<f64>; 3],
    /// Per-branch refinement rates `I(Ui^j;Y0|U0^j)`.
    pub refinement_rate: [[Option<f64>; 3]; 2],
    /// Payload widths in bits for the common message per branch.
    pub common_width_bits: [Option<u32>; 3],
    /// Payload widths for the individual messages per (center, branch).
    pub individual_width_bits: [[Option<u32>; 3]; 2],
    /// Sigma-weighted expected-rate budgets implied by the channels,
    /// `[common, individual1, individual2]` (config base, per symbol).
    pub weighted_budget: [f64; 3],
}

/// Run the scheme under both hypotheses.
pub fn simulate(joint: &JointSourcePmf, config: &SchemeConfig) -> Result<SimOutcome, SimError> {
    config.validate(joint)?;
    let tables = engine::Tables::build(joint, config)?;

    // Trials are grouped into fixed chunks, each driven by one seeded stream;
    // the chunk->seed map depends only on indices, so results are
    // bit-reproducible regardless of how chunks land on threads.
    const CHUNK: usize = 256;
    let run = |hypothesis_alt: bool, trials: usize| -> engine::Accum {
        let salt = if hypothesis_alt { 0x0A17u64 << 32 } else { 0 };
        let n_chunks = trials.div_ceil(CHUNK);
        (0..n_chunks)
            .into_par_iter()
            .fold(engine::Accum::default, |mut acc, chunk| {
                let chunk_seed = derive_seed(config.seed, salt | chunk as u64);
                let lo = chunk * CHUNK;
                let hi = ((chunk + 1) * CHUNK).min(trials);
                engine::run_chunk(&tables, config, hypothesis_alt, chunk_seed, hi - lo, &mut acc);
                acc
            })
            .reduce(engine::Accum::default, engine::Accum::merge)
    };

    let h0 = run(false, config.trials_h0);
    let h1 = run(true, config.trials_h1);

    let alpha = if config.trials_h0 > 0 {
        [
            Some(Estimate::from_counts(h0.alarms[0], config.trials_h0)),
            Some(Estimate::from_counts(h0.alarms[1], config.trials_h0)),
        ]
    } else {
        [None, None]
    };
    let beta = if config.trials_h1 > 0 {
        [
            Some(Estimate::from_counts(
                config.trials_h1 - h1.alarms[0],
                config.trials_h1,
            )),
            Some(Estimate::from_counts(
                config.trials_h1 - h1.alarms[1],
                config.trials_h1,
            )),
        ]
    } else {
        [None, None]
    };
    let mean_len_h0 = if config.trials_h0 > 0 {
        let t = config.trials_h0 as f64;
        [
            Some(h0.len_sum[0] as f64 / t),
            Some(h0.len_sum[1] as f64 / t),
            Some(h0.len_sum[2] as f64 / t),
        ]
    } else {
        [None, None, None]
    };
    let mut label_counts = [0usize; 4];
    for k in 0..4 {
        label_counts[k] = h0.label_counts[k] + h1.label_counts[k];
    }
    Ok(SimOutcome {
        alpha,
        beta,
        mean_len_h0,
        length_accounting_ok: h0.length_ok && h1.length_ok,
        not_found: h0.not_found + h1.not_found,
        label_counts,
        trials_h0: config.trials_h0,
        trials_h1: config.trials_h1,
        n: config.n,
        seed: config.seed,
    })
}

/// Nominal rates/widths of a config (no trials run).
pub fn scheme_rates(joint: &JointSourcePmf, config: &SchemeConfig) -> Result<SchemeRates, SimError> {
    Ok(Simulator::new(joint, config.clone())?.rates())
}

/// Deterministic partition label of a source block.
pub fn assign_partition(block: &[u8], sigma: &SigmaTriple, seed: u64) -> Label {
    let mut h = derive_seed(seed, 0x5E9);
    for &b in block {
        h = derive_seed(h, b as u64 + 1);
    }
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    if u < sigma.s0 {
        Label::Shared0
    } else if u < sigma.s0 + sigma.s1 {
        Label::Only1
    } else if u < sigma.s0 + sigma.s1 + sigma.s2 {
        Label::Only2
    } else {
        Label::Skip
    }
}

// ---------------------------------------------------------------------------
// Exponent estimation across blocklengths
// ---------------------------------------------------------------------------

/// Per-center outcome of the exponent fit.
#[derive(Debug, Clone)]
pub enum SlopeEstimate {
    /// Least-squares slope of `-log beta` versus `n`, with a standard error
    /// propagated from the binomial uncertainty of each point.
    Slope { value: f64, std_err: f64, points: Vec<(usize, f64)> },
    /// Some blocklength produced zero accepted alternative trials; only a
    /// one-sided bound at the largest such blocklength is available.
    LowerBoundOnly { n: usize, bound: f64 },
}

/// Fit the type-II error exponent from simulations at increasing
/// blocklengths. Requires at least three configs; each must request
/// alternative-hypothesis trials.
pub fn estimate_exponent(
    joint: &JointSourcePmf,
    configs: &[SchemeConfig],
) -> Result<[SlopeEstimate; 2], SimError> {
    let outcomes: Vec<SimOutcome> = configs
        .iter()
        .map(|c| simulate(joint, c))
        .collect::<Result<_, _>>()?;
    estimate_exponent_from_outcomes(configs, &outcomes)
}

/// [`estimate_exponent`] over already-computed outcomes (the outcomes must
/// come from exactly these configs).
pub fn estimate_exponent_from_outcomes(
    configs: &[SchemeConfig],
    outcomes: &[SimOutcome],
) -> Result<[SlopeEstimate; 2], SimError> {
    if configs.len() < 3 {
        return Err(SimError::DegenerateEstimate(
            "need at least three blocklengths".into(),
        ));
    }
    if configs.windows(2).any(|w| w[0].n >= w[1].n) {
        return Err(SimError::DegenerateEstimate(
            "blocklengths must be strictly increasing".into(),
        ));
    }
    if configs.len() != outcomes.len() || configs.iter().zip(outcomes).any(|(c, o)| c.n != o.n) {
        return Err(SimError::DegenerateEstimate(
            "outcomes do not match configs".into(),
        ));
    }
    let base = configs[0].base;

    let mut fits: Vec<SlopeEstimate> = Vec::with_capacity(2);
    for i in 0..2 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut vars = Vec::new();
        let mut degenerate: Option<(usize, f64)> = None;
        for (cfg, out) in configs.iter().zip(outcomes) {
            let est = out.beta[i].ok_or_else(|| {
                SimError::DegenerateEstimate("alternative-hypothesis trials required".into())
            })?;
            if est.hits == 0 {
                // rule-of-three bound: beta <= 3 / trials at ~95%
                let bound = -base.log(3.0 / est.trials as f64) / cfg.n as f64;
                degenerate = Some((cfg.n, bound));
                continue;
            }
            xs.push(cfg.n as f64);
            ys.push(-base.log(est.mean));
            // var(-ln beta-hat) ~ (1 - beta) / (beta * T), rescaled to the
            // configured base
            let v_nats = (1.0 - est.mean) / (est.mean * est.trials as f64);
            let scale = match base {
                LogBase::Nats => 1.0,
                LogBase::Bits => std::f64::consts::LOG2_E,
            };
            vars.push(v_nats * scale * scale);
        }
        if let Some((n, bound)) = degenerate {
            fits.push(SlopeEstimate::LowerBoundOnly { n, bound });
            continue;
        }
        let m = xs.len() as f64;
        let xbar = xs.iter().sum::<f64>() / m;
        let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
        let slope: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xbar) * y)
            .sum::<f64>()
            / sxx;
        let var_slope: f64 = xs
            .iter()
            .zip(&vars)
            .map(|(x, v)| ((x - xbar) / sxx).powi(2) * v)
            .sum();
        fits.push(SlopeEstimate::Slope {
            value: slope,
            std_err: var_slope.sqrt(),
            points: configs
                .iter()
                .zip(outcomes)
                .filter_map(|(c, o)| o.beta[i].map(|e| (c.n, e.mean)))
                .collect(),
        });
    }
    Ok([fits.remove(0), fits.remove(0)])
}
