//! Exponent-region assembly: Pareto frontiers of achievable `(theta1, theta2)`
//! pairs under the different link and rate models, with achieving witnesses.
//!
//! Four regions are computed:
//!
//! - **maxrate** — per-realization message-length caps on all three links;
//!   traced by scalarizing the two exponents over a weight grid.
//! - **expected-common** — expected-rate cap on the common link only
//!   (individual links absent). The budget can be shared between two coding
//!   variants: the sweep parameter is the rate earmarked for the variant that
//!   serves only the lower-threshold receiver, and the other receiver's
//!   exponent is capped by the best single-channel exponent at that rate.
//! - **no-rate-sharing** — same setup with the sweep parameter pinned, i.e. a
//!   single coding variant; equals the maxrate region at the inflated budget
//!   `R0 / (1 - eps_min)`.
//! - **expected-full** — expected-rate caps on all three links, optimized
//!   over up-to-three branch variants weighted by a mass triple `sigma`
//!   constrained by the per-receiver error thresholds.
//!
//! Every frontier point is an inner (achievable) value certified by its
//! witness channels: recomputing the mutual informations of the witness in
//! plain probability arithmetic reproduces the point and verifies all rate
//! and mass constraints.

use crate::base::LogBase;
use crate::optimizer::{
    branch::{solve_branch, BranchSpec},
    objective::{Mat, ProblemInstance},
    solve_scalarized, AuxChannel, EtaQuery, OptimError, OptimizerSettings, Receiver,
    ScalarizedSolution, ScalarizedSpec,
};
use crate::prob::{compose, ConditionalPmf, JointSourcePmf, ProbError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),
    #[error("lambda grid must contain 0 and 1 and lie in [0,1]")]
    BadLambdaGrid,
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

// ---------------------------------------------------------------------------
// Budgets
// ---------------------------------------------------------------------------

/// Link-rate budgets in information units per source symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBudget {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl RateBudget {
    pub fn new(r0: f64, r1: f64, r2: f64) -> Result<Self, RegionError> {
        for (name, v) in [("r0", r0), ("r1", r1), ("r2", r2)] {
            if v.is_nan() || v < 0.0 {
                return Err(RegionError::InvalidBudget(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(Self { r0, r1, r2 })
    }

    pub fn common_only(r0: f64) -> Result<Self, RegionError> {
        Self::new(r0, 0.0, 0.0)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r0, self.r1, self.r2]
    }
}

/// Per-receiver type-I error thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBudget {
    pub eps1: f64,
    pub eps2: f64,
}

impl ErrorBudget {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self, RegionError> {
        for (name, v) in [("eps1", eps1), ("eps2", eps2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RegionError::InvalidBudget(format!(
                    "{name} = {v} must lie in [0, 1]"
                )));
            }
        }
        Ok(Self { eps1, eps2 })
    }

    pub fn eps(&self, r: Receiver) -> f64 {
        match r {
            Receiver::One => self.eps1,
            Receiver::Two => self.eps2,
        }
    }

    /// Receiver with the larger threshold first (ties keep receiver 1 first).
    pub fn by_decreasing_eps(&self) -> [Receiver; 2] {
        if self.eps1 >= self.eps2 {
            [Receiver::One, Receiver::Two]
        } else {
            [Receiver::Two, Receiver::One]
        }
    }
}

/// Partition masses of the three coding variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaTriple {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl SigmaTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.s0, self.s1, self.s2]
    }

    pub fn sum(&self) -> f64 {
        self.s0 + self.s1 + self.s2
    }

    /// Feasibility for the given thresholds:
    /// non-negative, sum <= 1, `s0 + si >= 1 - eps_i`, `s0 >= 1 - eps1 - eps2`.
    pub fn feasible_for(&self, errors: &ErrorBudget, tol: f64) -> bool {
        self.s0 >= -tol
            && self.s1 >= -tol
            && self.s2 >= -tol
            && self.sum() <= 1.0 + tol
            && self.s0 + self.s1 >= 1.0 - errors.eps1 - tol
            && self.s0 + self.s2 >= 1.0 - errors.eps2 - tol
            && self.s0 >= 1.0 - errors.eps1 - errors.eps2 - tol
    }
}

// ---------------------------------------------------------------------------
// Witnesses and frontiers
// ---------------------------------------------------------------------------

/// Achieving configuration attached to a frontier point.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Witness {
    /// One channel from the sensor; exponents are its side informations,
    /// optionally clipped by per-receiver caps.
    Single {
        lambda: f64,
        /// Sweep value of the earmarked rate, where applicable.
        sweep_rate: Option<f64>,
        budget: f64,
        caps: [f64; 2],
        u0: ConditionalPmf,
        rate_used: f64,
        raw_i: [f64; 2],
        converged: bool,
    },
    /// Shared channel plus optional refinement layers (maxrate with
    /// individual links).
    Layered {
        lambda: f64,
        rates: [f64; 3],
        u0: ConditionalPmf,
        u1: Option<ConditionalPmf>,
        u2: Option<ConditionalPmf>,
        rates_used: [f64; 3],
        converged: bool,
    },
    /// Up-to-three branch variants with partition masses.
    Branch {
        lambda: f64,
        sigma: SigmaTriple,
        splits: [f64; 2],
        rates: [f64; 3],
        first_layers: [Option<ConditionalPmf>; 3],
        refinements: [[Option<ConditionalPmf>; 3]; 2],
        rates_used: [f64; 3],
        converged: bool,
    },
}

impl Witness {
    pub fn converged(&self) -> bool {
        match self {
            Witness::Single { converged, .. }
            | Witness::Layered { converged, .. }
            | Witness::Branch { converged, .. } => *converged,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Witness::Single { lambda, .. }
            | Witness::Layered { lambda, .. }
            | Witness::Branch { lambda, .. } => *lambda,
        }
    }

    /// Primary channel for seeding other computations, when single-layer.
    pub fn seed_channel(&self) -> Option<&ConditionalPmf> {
        match self {
            Witness::Single { u0, .. } => Some(u0),
            Witness::Layered { u0, .. } => Some(u0),
            Witness::Branch { .. } => None,
        }
    }

    /// Stable digest of the witness channels for machine-readable output.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: f64| {
            h ^= x.to_bits();
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        let feed_channel = |c: &ConditionalPmf, h: &mut dyn FnMut(f64)| {
            for &v in c.as_slice() {
                h(v);
            }
        };
        match self {
            Witness::Single { u0, .. } => feed_channel(u0, &mut feed),
            Witness::Layered { u0, u1, u2, .. } => {
                feed_channel(u0, &mut feed);
                for c in [u1, u2].into_iter().flatten() {
                    feed_channel(c, &mut feed);
                }
            }
            Witness::Branch { first_layers, refinements, .. } => {
                for c in first_layers.iter().flatten() {
                    feed_channel(c, &mut feed);
                }
                for row in refinements {
                    for c in row.iter().flatten() {
                        feed_channel(c, &mut feed);
                    }
                }
            }
        }
        h
    }
}

/// One Pareto-maximal point with its witness.
#[derive(Debug, Clone)]
pub struct FrontierPoint {
    pub theta1: f64,
    pub theta2: f64,
    pub witness: Witness,
}

/// Pareto frontier: `theta1` strictly increasing, `theta2` strictly
/// decreasing, no point dominated by another.
#[derive(Debug, Clone, Default)]
pub struct ParetoFrontier {
    points: Vec<FrontierPoint>,
}

impl ParetoFrontier {
    /// Pareto-filter and sort candidates. Ties are resolved in favor of the
    /// earliest candidate, so the construction is deterministic.
    pub fn from_candidates(mut candidates: Vec<FrontierPoint>) -> Self {
        candidates.sort_by(|a, b| {
            b.theta1
                .partial_cmp(&a.theta1)
                .unwrap()
                .then(b.theta2.partial_cmp(&a.theta2).unwrap())
        });
        let mut kept: Vec<FrontierPoint> = Vec::new();
        let mut best2 = f64::NEG_INFINITY;
        for c in candidates {
            if c.theta2 > best2 {
                best2 = c.theta2;
                kept.push(c);
            }
        }
        kept.reverse();
        Self { points: kept }
    }

    pub fn points(&self) -> &[FrontierPoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Largest `theta1` on the frontier (the x-axis endpoint).
    pub fn max_theta1(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.theta1)
    }

    /// Largest `theta2` on the frontier (the y-axis endpoint).
    pub fn max_theta2(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.theta2)
    }

    /// Staircase height at `theta1 = x`: the best `theta2` among points with
    /// `theta1 >= x`, if any.
    pub fn height_at(&self, x: f64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.theta1 >= x)
            .map(|p| p.theta2)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    /// Support value `max over points of w th1 + (1-w) th2`: a sampling-free
    /// way to compare two frontiers of the same underlying region.
    pub fn support_value(&self, weight: f64) -> f64 {
        self.points
            .iter()
            .map(|p| weight * p.theta1 + (1.0 - weight) * p.theta2)
            .fold(0.0, f64::max)
    }

    /// Seed channels usable to warm-start related computations.
    pub fn seed_channels(&self) -> Vec<ConditionalPmf> {
        self.points
            .iter()
            .filter_map(|p| p.witness.seed_channel().cloned())
            .collect()
    }
}

/// Staircase dominance with additive slack: some frontier point dominates
/// `(t1, t2)` componentwise up to `slack`.
pub fn frontier_contains(frontier: &ParetoFrontier, t1: f64, t2: f64, slack: f64) -> bool {
    frontier
        .points()
        .iter()
        .any(|q| q.theta1 + slack >= t1 && q.theta2 + slack >= t2)
}

/// Every point of `inner` is staircase-dominated by `outer` within `slack`.
pub fn region_inclusion(inner: &ParetoFrontier, outer: &ParetoFrontier, slack: f64) -> bool {
    inner
        .points()
        .iter()
        .all(|p| frontier_contains(outer, p.theta1, p.theta2, slack))
}

// ---------------------------------------------------------------------------
// Sweep grids
// ---------------------------------------------------------------------------

/// Grid parameters for the region sweeps.
#[derive(Debug, Clone)]
pub struct SweepGrids {
    /// Scalarization weights; must contain the endpoints 0 and 1.
    pub lambda: Vec<f64>,
    /// Number of uniform points for the earmarked-rate sweep.
    pub share_points: usize,
    /// Step of the sigma-mass grid.
    pub sigma_step: f64,
    /// Split-parameter grid for the branch surrogate.
    pub splits: Vec<f64>,
    /// Adjacent sweep points closer than this (in both exponent coordinates)
    /// stop the adaptive weight refinement.
    pub frontier_gap: f64,
}

impl Default for SweepGrids {
    fn default() -> Self {
        Self {
            lambda: default_lambda_grid(),
            share_points: 41,
            sigma_step: 0.05,
            splits: vec![0.0, 0.5, 1.0],
            frontier_gap: DEFAULT_FRONTIER_GAP,
        }
    }
}

/// Default resolution of the emitted frontiers.
pub const DEFAULT_FRONTIER_GAP: f64 = 2e-4;

/// 0, 0.05, ..., 1 plus near-endpoint weights that resolve the lexicographic
/// corners of nearly-vertical frontier edges.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut g = vec![0.0, 0.001];
    for k in 1..20 {
        g.push(k as f64 * 0.05);
    }
    g.push(0.999);
    g.push(1.0);
    g
}

fn check_lambda_grid(lambdas: &[f64]) -> Result<(), RegionError> {
    let has0 = lambdas.contains(&0.0);
    let has1 = lambdas.contains(&1.0);
    let in_range = lambdas.iter().all(|&l| (0.0..=1.0).contains(&l));
    if has0 && has1 && in_range && !lambdas.is_empty() {
        Ok(())
    } else {
        Err(RegionError::BadLambdaGrid)
    }
}

// ---------------------------------------------------------------------------
// Region computations
// ---------------------------------------------------------------------------

fn origin_point(joint: &JointSourcePmf, budget: f64, caps: [f64; 2]) -> FrontierPoint {
    let (ny0, _, _) = joint.dims();
    FrontierPoint {
        theta1: 0.0,
        theta2: 0.0,
        witness: Witness::Single {
            lambda: 0.5,
            sweep_rate: None,
            budget,
            caps,
            u0: ConditionalPmf::constant(ny0, 1),
            rate_used: 0.0,
            raw_i: [0.0, 0.0],
            converged: true,
        },
    }
}

/// Largest number of extra midpoint solves the adaptive sweep may spend.
const REFINE_BUDGET: usize = 400;

/// Scalarized lambda-sweep of a capped single-channel problem; the shared
/// worker behind the common-link-only regions.
///
/// Besides solving at every grid weight (warm-started by continuation along
/// the grid), the sweep
///  - evaluates every feasible seed channel directly as a frontier candidate,
///    so a frontier computed with the witnesses of a nested region as seeds
///    dominates that region point-for-point, and
///  - adaptively inserts midpoint weights until adjacent sweep points are
///    closer than `gap_tol` in both coordinates, so the emitted staircase
///    tracks the continuous trade-off curve at that resolution.
#[allow(clippy::too_many_arguments)]
fn capped_lambda_sweep(
    inst: &ProblemInstance,
    joint: &JointSourcePmf,
    budget: f64,
    caps: [f64; 2],
    sweep_rate: Option<f64>,
    lambdas: &[f64],
    gap_tol: f64,
    settings: &OptimizerSettings,
    seeds: &[ConditionalPmf],
    out: &mut Vec<FrontierPoint>,
) {
    let nu = settings.single_cap(inst.ny0());
    let seed_mats: Vec<Mat> = seeds
        .iter()
        .filter(|c| c.n_in() == inst.ny0() && c.n_out() <= nu)
        .map(|c| {
            let mut m = Mat::zeros(c.n_in(), nu);
            for y in 0..c.n_in() {
                for u in 0..c.n_out() {
                    *m.at_mut(y, u) = c.p(y, u);
                }
            }
            m
        })
        .collect();

    // Feasible seeds become candidates outright.
    for m in &seed_mats {
        let i0 = crate::optimizer::objective::i_self(m, &inst.p0, inst.base);
        if i0 > budget + 1e-12 {
            continue;
        }
        let i_side = [
            crate::optimizer::objective::i_side(m, &inst.side[0], inst.base),
            crate::optimizer::objective::i_side(m, &inst.side[1], inst.base),
        ];
        out.push(FrontierPoint {
            theta1: i_side[0].min(caps[0]),
            theta2: i_side[1].min(caps[1]),
            witness: Witness::Single {
                lambda: -1.0,
                sweep_rate,
                budget,
                caps,
                u0: ConditionalPmf::new(m.rows, m.cols, m.a.clone())
                    .expect("seed channels are stochastic"),
                rate_used: i0,
                raw_i: i_side,
                converged: true,
            },
        });
    }

    let solve_at = |lambda: f64, extra: &[Mat]| -> ScalarizedSolution {
        let spec = ScalarizedSpec {
            weights: [lambda, 1.0 - lambda],
            caps,
            budget,
        };
        let mut starts = seed_mats.clone();
        starts.extend_from_slice(extra);
        solve_scalarized(inst, &spec, nu, settings, &starts)
    };
    // Fill solves are bracketed by two converged neighbors.
    let refine_settings = OptimizerSettings { restarts: 4, ..settings.clone() };

    let mut results: Vec<(f64, ScalarizedSolution)> = Vec::with_capacity(lambdas.len());
    let mut carry: Option<Mat> = None;
    for &lambda in lambdas {
        let extra: Vec<Mat> = carry.iter().cloned().collect();
        let sol = solve_at(lambda, &extra);
        carry = Some(sol.w.clone());
        results.push((lambda, sol));
    }

    // Gap filling. The trade-off curve can be a shallow arc, where the weight
    // parameterization is extremely sensitive; filling holes with constrained
    // solves ("best theta2 subject to theta1 >= x", realized as a capped
    // scalarization with a dominant weight) needs one solve per emitted point
    // instead of thousands of weight bisections.
    const KAPPA: f64 = 16.0;
    let clip = |sol: &ScalarizedSolution| -> [f64; 2] {
        [sol.i_side[0].min(caps[0]), sol.i_side[1].min(caps[1])]
    };
    let mut blocked: std::collections::HashSet<(u64, u64, bool)> = Default::default();
    let mut spent = 0usize;
    while spent < REFINE_BUDGET {
        // Pareto order the current candidate points.
        let mut order: Vec<usize> = (0..results.len()).collect();
        order.sort_by(|&a, &b| {
            let ta = clip(&results[a].1);
            let tb = clip(&results[b].1);
            tb[0].partial_cmp(&ta[0]).unwrap().then(tb[1].partial_cmp(&ta[1]).unwrap())
        });
        let mut frontier: Vec<usize> = Vec::new();
        let mut best2 = f64::NEG_INFINITY;
        for &k in &order {
            let t = clip(&results[k].1);
            if t[1] > best2 {
                best2 = t[1];
                frontier.push(k);
            }
        }
        frontier.reverse(); // ascending theta1

        #[allow(clippy::type_complexity)]
        let mut task: Option<(f64, bool, Vec<Mat>, (u64, u64, bool))> = None;
        for w in frontier.windows(2) {
            let ta = clip(&results[w[0]].1);
            let tb = clip(&results[w[1]].1);
            let d1 = tb[0] - ta[0];
            let d2 = ta[1] - tb[1];
            if d1 <= gap_tol && d2 <= gap_tol {
                continue;
            }
            //

            let fill_theta1 = d1 >= d2;
            let key = (ta[0].to_bits(), tb[0].to_bits(), fill_theta1);
            if blocked.contains(&key) {
                continue;
            }
            let x = if fill_theta1 { 0.5 * (ta[0] + tb[0]) } else { 0.5 * (ta[1] + tb[1]) };
            task = Some((
                x,
                fill_theta1,
                vec![results[w[0]].1.w.clone(), results[w[1]].1.w.clone()],
                key,
            ));
            break;
        }
        let Some((x, fill_theta1, warm, key)) = task else { break };
        spent += 1;
        let spec = if fill_theta1 {
            ScalarizedSpec {
                weights: [KAPPA, 1.0],
                caps: [caps[0].min(x), caps[1]],
                budget,
            }
        } else {
            ScalarizedSpec {
                weights: [1.0, KAPPA],
                caps: [caps[0], caps[1].min(x)],
                budget,
            }
        };
        let mut starts = seed_mats.clone();
        starts.extend(warm);
        let sol = solve_scalarized(inst, &spec, nu, &refine_settings, &starts);
        // A fill that lands on an existing point means the hole is a genuine
        // discontinuity in that direction; stop splitting it.
        let t = clip(&sol);
        let progress = results.iter().all(|(_, s)| {
            let u = clip(s);
            (u[0] - t[0]).abs() > 1e-12 || (u[1] - t[1]).abs() > 1e-12
        });
        if !progress {
            blocked.insert(key);
            continue;
        }
        results.push((if fill_theta1 { -2.0 } else { -3.0 }, sol));
    }

    for (lambda, sol) in results {
        let theta = clip(&sol);
        out.push(FrontierPoint {
            theta1: theta[0],
            theta2: theta[1],
            witness: Witness::Single {
                lambda,
                sweep_rate,
                budget,
                caps,
                u0: ConditionalPmf::new(sol.w.rows, sol.w.cols, sol.w.a.clone())
                    .expect("solver output is stochastic"),
                rate_used: sol.i0,
                raw_i: sol.i_side,
                converged: sol.converged,
            },
        });
    }
    out.push(origin_point(joint, budget, caps));
}

/// Maximum-rate exponents region.
pub fn maxrate_region(
    joint: &JointSourcePmf,
    budget: RateBudget,
    lambdas: &[f64],
    base: LogBase,
    settings: &OptimizerSettings,
) -> Result<ParetoFrontier, RegionError> {
    check_lambda_grid(lambdas)?;
    let inst = ProblemInstance::new(joint, base);
    let mut candidates = Vec::new();
    if budget.r1 == 0.0 && budget.r2 == 0.0 {
        capped_lambda_sweep(
            &inst,
            joint,
            budget.r0,
            [f64::INFINITY, f64::INFINITY],
            None,
            lambdas,
            DEFAULT_FRONTIER_GAP,
            settings,
            &[],
            &mut candidates,
        );
    } else {
        for &lambda in lambdas {
            let pt = crate::optimizer::weighted_exponents_maxrate(
                joint,
                budget.as_array(),
                lambda,
                base,
                settings,
            )?;
            candidates.push(FrontierPoint {
                theta1: pt.theta[0],
                theta2: pt.theta[1],
                witness: Witness::Layered {
                    lambda,
                    rates: budget.as_array(),
                    u0: pt.w0.channel().clone(),
                    u1: pt.w1.as_ref().map(|c| c.channel().clone()),
                    u2: pt.w2.as_ref().map(|c| c.channel().clone()),
                    rates_used: pt.rates_used,
                    converged: pt.converged,
                },
            });
        }
        candidates.push(origin_point(joint, budget.r0, [f64::INFINITY, f64::INFINITY]));
    }
    Ok(ParetoFrontier::from_candidates(candidates))
}

/// Best single-channel exponent cap for the secondary receiver at earmarked
/// rate `g`, together with its achieving channel (used for seeding).
fn secondary_cap(
    joint: &JointSourcePmf,
    receiver: Receiver,
    g: f64,
    base: LogBase,
    settings: &OptimizerSettings,
) -> Result<(f64, AuxChannel), RegionError> {
    let res = crate::optimizer::single_receiver_exponent(
        joint,
        EtaQuery { receiver, rate: g },
        base,
        settings,
    )?;
    Ok((res.value, res.witness))
}

/// Common-link-only region under expected-rate constraints with a pinned
/// sweep: a single coding variant with the budget inflated to
/// `r0 / (1 - eps_min)`.
///
/// Pinning the earmarked rate to the witness's own rate cost makes the
/// secondary exponent cap `eta(I(U0;Y0)) >= I(U0;Y_i)` vacuous pointwise, so
/// the sweep is exactly the maximum-rate sweep at the inflated budget; the
/// two computations share one code path and agree bit-for-bit.
pub fn no_rate_sharing_region(
    joint: &JointSourcePmf,
    r0: f64,
    errors: ErrorBudget,
    lambdas: &[f64],
    base: LogBase,
    settings: &OptimizerSettings,
    seeds: &[ConditionalPmf],
) -> Result<ParetoFrontier, RegionError> {
    check_lambda_grid(lambdas)?;
    if r0 < 0.0 {
        return Err(RegionError::InvalidBudget(format!("r0 = {r0} must be >= 0")));
    }
    let [_, second] = errors.by_decreasing_eps();
    let eps2 = errors.eps(second);
    if eps2 >= 1.0 {
        return Err(RegionError::InfeasibleBudget(
            "smaller threshold must be below 1 for a pinned sweep".into(),
        ));
    }
    let pinned = r0 / (1.0 - eps2);
    let inst = ProblemInstance::new(joint, base);
    let mut candidates = Vec::new();
    capped_lambda_sweep(
        &inst,
        joint,
        pinned,
        [f64::INFINITY, f64::INFINITY],
        Some(pinned),
        lambdas,
        DEFAULT_FRONTIER_GAP,
        settings,
        seeds,
        &mut candidates,
    );
    Ok(ParetoFrontier::from_candidates(candidates))
}

/// Common-link-only region under expected-rate constraints with rate sharing
/// between two coding variants.
pub fn expected_common_region(
    joint: &JointSourcePmf,
    r0: f64,
    errors: ErrorBudget,
    grids: &SweepGrids,
    base: LogBase,
    settings: &OptimizerSettings,
    seeds: &[ConditionalPmf],
) -> Result<ParetoFrontier, RegionError> {
    check_lambda_grid(&grids.lambda)?;
    if r0 < 0.0 {
        return Err(RegionError::InvalidBudget(format!("r0 = {r0} must be >= 0")));
    }
    let [first, second] = errors.by_decreasing_eps();
    let (eps1, eps2) = (errors.eps(first), errors.eps(second));
    if eps1 >= 1.0 && eps2 >= 1.0 {
        return Err(RegionError::InfeasibleBudget(
            "both thresholds at 1 leave no receiver to serve".into(),
        ));
    }

    // Equal thresholds force the pinned case: the earmarked-rate term has a
    // zero coefficient in the budget, so the sweep collapses.
    let gap = eps1 - eps2;
    if gap <= 0.0 {
        return no_rate_sharing_region(joint, r0, errors, &grids.lambda, base, settings, seeds);
    }

    let inst = ProblemInstance::new(joint, base);
    let pinned = r0 / (1.0 - eps2);
    // Earmarked rates above the pinned value have provably vacuous caps and
    // strictly smaller channel budgets, so they are dominated by the pinned
    // point; the sweep is clipped there.
    let sweep_max_raw = r0 / gap;
    let mut sweep: Vec<f64> = Vec::new();
    for k in 0..grids.share_points.max(2) {
        let g = sweep_max_raw * k as f64 / (grids.share_points.max(2) - 1) as f64;
        if g <= pinned + 1e-12 {
            sweep.push(g);
        }
    }
    if sweep.last().is_none_or(|&g| (g - pinned).abs() > 1e-12) {
        sweep.push(pinned);
    }

    let mut candidates = Vec::new();
    for &g in &sweep {
        if (g - pinned).abs() <= 1e-12 {
            // The pinned point has a provably vacuous cap: identical call to
            // the no-rate-sharing sweep, so that region is contained exactly.
            capped_lambda_sweep(
                &inst,
                joint,
                pinned,
                [f64::INFINITY, f64::INFINITY],
                Some(g),
                &grids.lambda,
                grids.frontier_gap,
                settings,
                seeds,
                &mut candidates,
            );
            continue;
        }
        let channel_budget = (r0 - gap * g) / (1.0 - eps1);
        if channel_budget < 0.0 {
            continue;
        }
        let (cap_val, cap_witness) = secondary_cap(joint, second, g, base, settings)?;
        let mut caps = [f64::INFINITY, f64::INFINITY];
        caps[second.idx()] = cap_val;
        let mut seeds_all = seeds.to_vec();
        seeds_all.push(cap_witness.channel().clone());
        capped_lambda_sweep(
            &inst,
            joint,
            channel_budget,
            caps,
            Some(g),
            &grids.lambda,
            grids.frontier_gap,
            settings,
            &seeds_all,
            &mut candidates,
        );
    }
    Ok(ParetoFrontier::from_candidates(candidates))
}

// ---------------------------------------------------------------------------
// Full expected-rate region (three links, three branch variants)
// ---------------------------------------------------------------------------

/// Vertices of the sigma polytope
/// `{s >= 0, s0 >= 1-e1-e2, s0+s1 >= 1-e1, s0+s2 >= 1-e2, sum <= 1}`.
fn sigma_vertices(errors: &ErrorBudget) -> Vec<SigmaTriple> {
    // Planes as rows (a . sigma = b).
    let planes: Vec<([f64; 3], f64)> = vec![
        ([1.0, 0.0, 0.0], (1.0 - errors.eps1 - errors.eps2).max(0.0)),
        ([0.0, 1.0, 0.0], 0.0),
        ([0.0, 0.0, 1.0], 0.0),
        ([1.0, 1.0, 0.0], 1.0 - errors.eps1),
        ([1.0, 0.0, 1.0], 1.0 - errors.eps2),
        ([1.0, 1.0, 1.0], 1.0),
    ];
    let mut verts: Vec<SigmaTriple> = Vec::new();
    let n = planes.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let m = [planes[i].0, planes[j].0, planes[k].0];
                let b = [planes[i].1, planes[j].1, planes[k].1];
                let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
                if det.abs() < 1e-12 {
                    continue;
                }
                // Cramer's rule.
                let mut sol = [0.0f64; 3];
                for c in 0..3 {
                    let mut mm = m;
                    for r in 0..3 {
                        mm[r][c] = b[r];
                    }
                    let d = mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1])
                        - mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0])
                        + mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0]);
                    sol[c] = d / det;
                }
                let s = SigmaTriple { s0: sol[0], s1: sol[1], s2: sol[2] };
                if s.feasible_for(errors, 1e-9)
                    && !verts.iter().any(|v| {
                        (v.s0 - s.s0).abs() < 1e-9
                            && (v.s1 - s.s1).abs() < 1e-9
                            && (v.s2 - s.s2).abs() < 1e-9
                    })
                {
                    verts.push(s);
                }
            }
        }
    }
    verts
}

/// Vertices plus a uniform grid over the feasible sigma set.
fn sigma_sweep(errors: &ErrorBudget, step: f64) -> Vec<SigmaTriple> {
    let mut out = sigma_vertices(errors);
    let n = (1.0 / step).round() as usize;
    for a in 0..=n {
        for b in 0..=(n - a) {
            for c in 0..=(n - a - b) {
                let s = SigmaTriple {
                    s0: a as f64 * step,
                    s1: b as f64 * step,
                    s2: c as f64 * step,
                };
                if s.feasible_for(errors, 1e-9)
                    && !out.iter().any(|v| {
                        (v.s0 - s.s0).abs() < 1e-9
                            && (v.s1 - s.s1).abs() < 1e-9
                            && (v.s2 - s.s2).abs() < 1e-9
                    })
                {
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Full expected-rate region over all three links.
pub fn expected_full_region(
    joint: &JointSourcePmf,
    budget: RateBudget,
    errors: ErrorBudget,
    grids: &SweepGrids,
    base: LogBase,
    settings: &OptimizerSettings,
    seeds: &[ConditionalPmf],
) -> Result<ParetoFrontier, RegionError> {
    check_lambda_grid(&grids.lambda)?;
    let sigmas = sigma_sweep(&errors, grids.sigma_step);
    if sigmas.is_empty() {
        return Err(RegionError::InfeasibleBudget(
            "no sigma triple satisfies the threshold constraints".into(),
        ));
    }
    let inst = ProblemInstance::new(joint, base);

    // Harvest warm-start channels: caller seeds plus, when the individual
    // links are absent, the witnesses of the equivalent common-link sweep.
    let mut seed_channels: Vec<ConditionalPmf> = seeds.to_vec();
    let mut injected: Vec<FrontierPoint> = Vec::new();
    if budget.r1 == 0.0 && budget.r2 == 0.0 {
        let ec = expected_common_region(joint, budget.r0, errors, grids, base, settings, seeds)?;
        seed_channels.extend(ec.seed_channels());
        // The common-link-only construction is a special case of this one;
        // its certified points are achievable here verbatim.
        injected.extend(ec.points().iter().cloned());
    }
    let warm_layers: Vec<[Option<Mat>; 3]> = seed_channels
        .iter()
        .filter(|c| c.n_in() == inst.ny0())
        .map(|c| {
            let m = Mat {
                rows: c.n_in(),
                cols: c.n_out(),
                a: c.as_slice().to_vec(),
            };
            [Some(m.clone()), Some(m.clone()), Some(m)]
        })
        .collect();

    // The injected common-link candidates pin the frontier from below; the
    // branch solves only need to search above them.
    let branch_settings = OptimizerSettings {
        restarts: (settings.restarts / 16).max(2),
        ..settings.clone()
    };

    let mut candidates = Vec::new();
    let cap_warm = 12usize;
    for sigma in &sigmas {
        // Split grids collapse when a receiver is not served by both branches.
        let s1_grid: Vec<f64> = if sigma.s0 > 0.0 && sigma.s1 > 0.0 {
            grids.splits.clone()
        } else {
            vec![1.0]
        };
        let s2_grid: Vec<f64> = if sigma.s0 > 0.0 && sigma.s2 > 0.0 {
            grids.splits.clone()
        } else {
            vec![1.0]
        };
        for &lambda in &grids.lambda {
            let mut carry: Vec<[Option<Mat>; 3]> = Vec::new();
            for &s1 in &s1_grid {
                for &s2 in &s2_grid {
                    let spec = BranchSpec {
                        sigma: sigma.as_array(),
                        lambda,
                        splits: [s1, s2],
                        rates: budget.as_array(),
                    };
                    let mut warms: Vec<[Option<Mat>; 3]> = warm_layers
                        .iter()
                        .take(cap_warm)
                        .cloned()
                        .collect();
                    warms.extend(carry.iter().cloned());
                    let sol = solve_branch(&inst, &spec, &branch_settings, &warms);
                    carry = vec![sol.w0.clone()];
                    let to_cond = |m: &Option<Mat>| -> Option<ConditionalPmf> {
                        m.as_ref().map(|m| {
                            ConditionalPmf::new(m.rows, m.cols, m.a.clone())
                                .expect("solver output is stochastic")
                        })
                    };
                    candidates.push(FrontierPoint {
                        theta1: sol.theta[0],
                        theta2: sol.theta[1],
                        witness: Witness::Branch {
                            lambda,
                            sigma: *sigma,
                            splits: [s1, s2],
                            rates: budget.as_array(),
                            first_layers: [
                                to_cond(&sol.w0[0]),
                                to_cond(&sol.w0[1]),
                                to_cond(&sol.w0[2]),
                            ],
                            refinements: [
                                [
                                    to_cond(&sol.wref[0][0]),
                                    to_cond(&sol.wref[0][1]),
                                    to_cond(&sol.wref[0][2]),
                                ],
                                [
                                    to_cond(&sol.wref[1][0]),
                                    to_cond(&sol.wref[1][1]),
                                    to_cond(&sol.wref[1][2]),
                                ],
                            ],
                            rates_used: sol.rates_used,
                            converged: sol.converged,
                        },
                    });
                }
            }
        }
    }
    candidates.extend(injected);
    candidates.push(origin_point(joint, budget.r0, [f64::INFINITY, f64::INFINITY]));
    Ok(ParetoFrontier::from_candidates(candidates))
}

// ---------------------------------------------------------------------------
// Log-base resolution
// ---------------------------------------------------------------------------

/// Target value for the empirical base-resolution procedure.
#[derive(Debug, Clone, Copy)]
pub struct BaseResolutionTarget {
    pub receiver: Receiver,
    pub rate: f64,
    pub expected: f64,
    /// Relative window inside which a base counts as matching (default 0.10).
    pub rel_window: f64,
}

/// Outcome of [`resolve_log_base`].
#[derive(Debug, Clone, Copy)]
pub struct BaseResolution {
    pub chosen: LogBase,
    /// Both bases fell inside the window; the chosen base is the closer one
    /// and downstream comparisons should be reported in both.
    pub ambiguous: bool,
    pub value_bits: f64,
    pub value_nats: f64,
}

/// Compute the resolution quantity in both bases and pick the base whose
/// value lands closer to the target.
pub fn resolve_log_base(
    joint: &JointSourcePmf,
    target: &BaseResolutionTarget,
    settings: &OptimizerSettings,
) -> Result<BaseResolution, RegionError> {
    let mut values = [0.0f64; 2];
    for (k, base) in [LogBase::Bits, LogBase::Nats].into_iter().enumerate() {
        let res = crate::optimizer::single_receiver_exponent(
            joint,
            EtaQuery { receiver: target.receiver, rate: target.rate },
            base,
            settings,
        )?;
        values[k] = res.value;
    }
    let d_bits = (values[0] - target.expected).abs();
    let d_nats = (values[1] - target.expected).abs();
    let window = target.rel_window * target.expected.abs();
    let ambiguous = d_bits <= window && d_nats <= window;
    Ok(BaseResolution {
        chosen: if d_bits <= d_nats { LogBase::Bits } else { LogBase::Nats },
        ambiguous,
        value_bits: values[0],
        value_nats: values[1],
    })
}

// ---------------------------------------------------------------------------
// Witness certification
// ---------------------------------------------------------------------------

/// Recompute a frontier point from its witness with plain probability
/// arithmetic and verify the claimed exponents and all constraints.
pub fn certify_point(
    joint: &JointSourcePmf,
    base: LogBase,
    point: &FrontierPoint,
    tol: f64,
) -> Result<(), String> {
    let p0 = joint.marginal_y0();
    let side_info = |c: &ConditionalPmf, receiver: usize| -> Result<f64, String> {
        // q(u, yi) built directly from the pairwise joint
        let pair = joint.pair_y0_side(receiver);
        let mut q = vec![0.0; c.n_out() * pair.nb()];
        for y0 in 0..pair.na() {
            for u in 0..c.n_out() {
                for yi in 0..pair.nb() {
                    q[u * pair.nb() + yi] += pair.p(y0, yi) * c.p(y0, u);
                }
            }
        }
        Ok(crate::prob::Joint2::new(c.n_out(), pair.nb(), q)
            .map_err(|e| e.to_string())?
            .mutual_information(base))
    };
    let rate_of = |c: &ConditionalPmf| -> Result<f64, String> {
        Ok(compose(c, &p0).map_err(|e| e.to_string())?.mutual_information(base))
    };

    match &point.witness {
        Witness::Single { budget, caps, u0, .. } => {
            let rate = rate_of(u0)?;
            if rate > budget + tol {
                return Err(format!("rate {rate} exceeds budget {budget}"));
            }
            let t1 = side_info(u0, 1)?.min(caps[0]);
            let t2 = side_info(u0, 2)?.min(caps[1]);
            if (t1 - point.theta1).abs() > tol || (t2 - point.theta2).abs() > tol {
                return Err(format!(
                    "recomputed ({t1}, {t2}) differs from claimed ({}, {})",
                    point.theta1, point.theta2
                ));
            }
            Ok(())
        }
        Witness::Layered { rates, u0, u1, u2, .. } => {
            let rate0 = rate_of(u0)?;
            if rate0 > rates[0] + tol {
                return Err(format!("common rate {rate0} exceeds budget {}", rates[0]));
            }
            let thetas = [
                layered_reward(joint, base, u0, u1.as_ref(), 1)?,
                layered_reward(joint, base, u0, u2.as_ref(), 2)?,
            ];
            for (i, (claimed, got)) in
                [point.theta1, point.theta2].iter().zip(&thetas).enumerate()
            {
                if (claimed - got).abs() > tol {
                    return Err(format!(
                        "receiver {} recomputed {} vs claimed {}",
                        i + 1,
                        got,
                        claimed
                    ));
                }
            }
            for (i, u) in [u1, u2].into_iter().enumerate() {
                if let Some(u) = u {
                    let r = layered_cond_rate(joint, base, u0, u)?;
                    if r > rates[i + 1] + tol {
                        return Err(format!(
                            "individual rate {} exceeds budget {}",
                            r,
                            rates[i + 1]
                        ));
                    }
                }
            }
            Ok(())
        }
        Witness::Branch {
            sigma,
            rates,
            first_layers,
            refinements,
            ..
        } => {
            // Common-link budget.
            let mut common = 0.0;
            for (j, c) in first_layers.iter().enumerate() {
                if let Some(c) = c {
                    common += sigma.as_array()[j] * rate_of(c)?;
                }
            }
            if common > rates[0] + tol {
                return Err(format!("weighted common rate {common} exceeds {}", rates[0]));
            }
            // Individual budgets.
            for i in 0..2 {
                let mut ind = 0.0;
                for j in [0usize, i + 1] {
                    if let (Some(w0), Some(wr)) = (&first_layers[j], &refinements[i][j]) {
                        ind += sigma.as_array()[j] * layered_cond_rate(joint, base, w0, wr)?;
                    }
                }
                if ind > rates[i + 1] + tol {
                    return Err(format!(
                        "weighted individual rate {} exceeds {}",
                        ind,
                        rates[i + 1]
                    ));
                }
            }
            // Exponents: min over serving branches.
            let claimed = [point.theta1, point.theta2];
            for i in 0..2 {
                let mut t = f64::INFINITY;
                for j in [0usize, i + 1] {
                    if let Some(w0) = &first_layers[j] {
                        let r =
                            layered_reward(joint, base, w0, refinements[i][j].as_ref(), i + 1)?;
                        t = t.min(r);
                    }
                }
                if t.is_finite() != claimed[i].is_finite()
                    || (t.is_finite() && (t - claimed[i]).abs() > tol)
                {
                    return Err(format!(
                        "receiver {} recomputed {} vs claimed {}",
                        i + 1,
                        t,
                        claimed[i]
                    ));
                }
            }
            Ok(())
        }
    }
}

fn layered_reward(
    joint: &JointSourcePmf,
    base: LogBase,
    u0: &ConditionalPmf,
    ur: Option<&ConditionalPmf>,
    receiver: usize,
) -> Result<f64, String> {
    let pair = joint.pair_y0_side(receiver);
    let ny0 = pair.na();
    let nyi = pair.nb();
    match ur {
        None => {
            let mut q = vec![0.0; u0.n_out() * nyi];
            for y0 in 0..ny0 {
                for u in 0..u0.n_out() {
                    for yi in 0..nyi {
                        q[u * nyi + yi] += pair.p(y0, yi) * u0.p(y0, u);
                    }
                }
            }
            Ok(crate::prob::Joint2::new(u0.n_out(), nyi, q)
                .map_err(|e| e.to_string())?
                .mutual_information(base))
        }
        Some(ur) => {
            let nu0 = u0.n_out();
            let nui = ur.n_out();
            let mut q = vec![0.0; nu0 * nui * nyi];
            for y0 in 0..ny0 {
                for a in 0..nu0 {
                    for b in 0..nui {
                        let v = u0.p(y0, a) * ur.p(a * ny0 + y0, b);
                        if v == 0.0 {
                            continue;
                        }
                        for yi in 0..nyi {
                            q[(a * nui + b) * nyi + yi] += pair.p(y0, yi) * v;
                        }
                    }
                }
            }
            Ok(crate::prob::Joint2::new(nu0 * nui, nyi, q)
                .map_err(|e| e.to_string())?
                .mutual_information(base))
        }
    }
}

fn layered_cond_rate(
    joint: &JointSourcePmf,
    base: LogBase,
    u0: &ConditionalPmf,
    ur: &ConditionalPmf,
) -> Result<f64, String> {
    // I(Ui; Y0 | U0) through a three-variable joint (Ui, Y0, U0).
    let p0 = joint.marginal_y0();
    let ny0 = p0.len();
    let nu0 = u0.n_out();
    let nui = ur.n_out();
    let mut data = vec![0.0; nui * ny0 * nu0];
    for y0 in 0..ny0 {
        for a in 0..nu0 {
            for b in 0..nui {
                data[(b * ny0 + y0) * nu0 + a] = p0.p(y0) * u0.p(y0, a) * ur.p(a * ny0 + y0, b);
            }
        }
    }
    Ok(crate::prob::Joint3::new(nui, ny0, nu0, data)
        .map_err(|e| e.to_string())?
        .conditional_mutual_information(base))
}

/// Certify every point of a frontier.
pub fn certify_frontier(
    joint: &JointSourcePmf,
    base: LogBase,
    frontier: &ParetoFrontier,
    tol: f64,
) -> Result<(), String> {
    for (k, p) in frontier.points().iter().enumerate() {
        certify_point(joint, base, p, tol).map_err(|e| format!("point {k}: {e}"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    const BASE: LogBase = LogBase::Bits;

    fn fast() -> OptimizerSettings {
        OptimizerSettings { restarts: 10, max_iters: 1200, ..Default::default() }
    }

    fn small_lambda_grid() -> Vec<f64> {
        vec![0.0, 0.25, 0.5, 0.75, 1.0]
    }

    #[test]
    fn pareto_construction_filters_dominated_points() {
        let mk = |t1: f64, t2: f64| FrontierPoint {
            theta1: t1,
            theta2: t2,
            witness: Witness::Single {
                lambda: 0.0,
                sweep_rate: None,
                budget: 0.0,
                caps: [f64::INFINITY; 2],
                u0: ConditionalPmf::constant(2, 1),
                rate_used: 0.0,
                raw_i: [t1, t2],
                converged: true,
            },
        };
        let f = ParetoFrontier::from_candidates(vec![
            mk(0.5, 0.5),
            mk(0.3, 0.4), // dominated
            mk(0.5, 0.5), // duplicate
            mk(0.2, 0.9),
            mk(0.9, 0.1),
            mk(0.2, 0.9), // duplicate
        ]);
        let coords: Vec<(f64, f64)> = f.points().iter().map(|p| (p.theta1, p.theta2)).collect();
        assert_eq!(coords, vec![(0.2, 0.9), (0.5, 0.5), (0.9, 0.1)]);
        // strictly increasing theta1, strictly decreasing theta2
        for w in f.points().windows(2) {
            assert!(w[1].theta1 > w[0].theta1);
            assert!(w[1].theta2 < w[0].theta2);
        }
    }

    #[test]
    fn containment_and_maximality() {
        let mk = |t1: f64, t2: f64| FrontierPoint {
            theta1: t1,
            theta2: t2,
            witness: Witness::Single {
                lambda: 0.0,
                sweep_rate: None,
                budget: 0.0,
                caps: [f64::INFINITY; 2],
                u0: ConditionalPmf::constant(2, 1),
                rate_used: 0.0,
                raw_i: [0.0, 0.0],
                converged: true,
            },
        };
        let f = ParetoFrontier::from_candidates(vec![mk(0.2, 0.9), mk(0.9, 0.1)]);
        let slack = 1e-6;
        assert!(frontier_contains(&f, 0.0, 0.0, slack));
        assert!(frontier_contains(&f, 0.2, 0.9, slack));
        // shifting any point up by 2*slack leaves the staircase
        for p in f.points() {
            assert!(!frontier_contains(
                &f,
                p.theta1 + 2.0 * slack,
                p.theta2 + 2.0 * slack,
                slack
            ));
        }
    }

    #[test]
    fn zero_budget_regions_are_origin() {
        let (joint, _) = instances::ternary_example();
        let f = maxrate_region(
            &joint,
            RateBudget::common_only(0.0).unwrap(),
            &small_lambda_grid(),
            BASE,
            &fast(),
        )
        .unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!((f.points()[0].theta1, f.points()[0].theta2), (0.0, 0.0));
    }

    #[test]
    fn lambda_grid_must_cover_endpoints() {
        let (joint, _) = instances::ternary_example();
        let err = maxrate_region(
            &joint,
            RateBudget::common_only(0.1).unwrap(),
            &[0.0, 0.5],
            BASE,
            &fast(),
        )
        .unwrap_err();
        assert!(matches!(err, RegionError::BadLambdaGrid));
    }

    #[test]
    fn maxrate_frontier_is_certified() {
        let (joint, _) = instances::ternary_example();
        let f = maxrate_region(
            &joint,
            RateBudget::common_only(0.1).unwrap(),
            &small_lambda_grid(),
            BASE,
            &fast(),
        )
        .unwrap();
        assert!(!f.is_empty());
        certify_frontier(&joint, BASE, &f, 1e-9).unwrap();
    }

    #[test]
    fn no_rate_sharing_equals_inflated_maxrate() {
        let (joint, _) = instances::ternary_example();
        let errors = ErrorBudget::new(0.15, 0.05).unwrap();
        let lam = small_lambda_grid();
        let s = fast();
        let nrs = no_rate_sharing_region(&joint, 0.1, errors, &lam, BASE, &s, &[]).unwrap();
        let mr = maxrate_region(
            &joint,
            RateBudget::common_only(0.1 / 0.95).unwrap(),
            &lam,
            BASE,
            &s,
        )
        .unwrap();
        // Shared code path: identical point sets, not merely close ones.
        assert_eq!(nrs.len(), mr.len());
        for (a, b) in nrs.points().iter().zip(mr.points()) {
            assert_eq!(a.theta1.to_bits(), b.theta1.to_bits());
            assert_eq!(a.theta2.to_bits(), b.theta2.to_bits());
        }
        let tol = 2.0 * s.value_tolerance;
        assert!(region_inclusion(&nrs, &mr, tol));
        assert!(region_inclusion(&mr, &nrs, tol));
        certify_frontier(&joint, BASE, &nrs, 1e-9).unwrap();
    }

    #[test]
    fn equal_thresholds_collapse_to_pinned_case() {
        let (joint, _) = instances::ternary_example();
        let grids = SweepGrids { lambda: small_lambda_grid(), ..Default::default() };
        let s = fast();
        let eq = ErrorBudget::new(0.05, 0.05).unwrap();
        let ec = expected_common_region(&joint, 0.1, eq, &grids, BASE, &s, &[]).unwrap();
        let uneq = ErrorBudget::new(0.15, 0.05).unwrap();
        let nrs =
            no_rate_sharing_region(&joint, 0.1, uneq, &grids.lambda, BASE, &s, &[]).unwrap();
        // Identical pinned subproblems: identical point sets.
        assert_eq!(ec.len(), nrs.len());
        for (a, b) in ec.points().iter().zip(nrs.points()) {
            assert_eq!(a.theta1.to_bits(), b.theta1.to_bits());
            assert_eq!(a.theta2.to_bits(), b.theta2.to_bits());
        }
    }

    #[test]
    fn sigma_vertices_for_example_thresholds() {
        let errors = ErrorBudget::new(0.15, 0.05).unwrap();
        let verts = sigma_vertices(&errors);
        assert!(verts.iter().all(|v| v.feasible_for(&errors, 1e-9)));
        // The rate-sharing vertex that matches the two-variant sweep.
        assert!(verts.iter().any(|v| (v.s0 - 0.85).abs() < 1e-9
            && v.s1.abs() < 1e-9
            && (v.s2 - 0.10).abs() < 1e-9));
        // Full-mass-on-shared is always a vertex.
        assert!(verts
            .iter()
            .any(|v| (v.s0 - 1.0).abs() < 1e-9 && v.s1.abs() < 1e-9 && v.s2.abs() < 1e-9));
    }

    #[test]
    fn zero_thresholds_force_single_variant() {
        let errors = ErrorBudget::new(0.0, 0.0).unwrap();
        let sweep = sigma_sweep(&errors, 0.05);
        assert_eq!(sweep.len(), 1);
        assert!((sweep[0].s0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn base_resolution_synthetic_targets() {
        let (joint, _) = instances::ternary_example();
        let s = fast();
        // Compute the truth in each base, then feed it back as the target.
        for want in [LogBase::Bits, LogBase::Nats] {
            let v = crate::optimizer::single_receiver_exponent(
                &joint,
                EtaQuery { receiver: Receiver::One, rate: 0.07 },
                want,
                &s,
            )
            .unwrap()
            .value;
            let res = resolve_log_base(
                &joint,
                &BaseResolutionTarget {
                    receiver: Receiver::One,
                    rate: 0.07,
                    expected: v,
                    rel_window: 0.0,
                },
                &s,
            )
            .unwrap();
            assert_eq!(res.chosen, want);
            assert!(!res.ambiguous);
        }
    }
}
