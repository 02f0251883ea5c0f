//! Constrained mutual-information maximization over auxiliary channels.
//!
//! Every exponent region is parameterized by maximizations of the form
//! "maximize a weighted combination of exponent rewards `I(U;Yi)` subject to
//! rate costs `I(U;Y0) <= R`", over channels with Caratheodory-bounded output
//! alphabets. The problems are nonconvex; this module solves them by
//! projected gradient ascent with deterministic multistart and certifies
//! every reported value by its witness channel (the value is exactly the
//! mutual information the witness achieves, and the witness is feasible).
//!
//! Restarts are independent and run in parallel; the reported optimum is the
//! maximum over restarts with deterministic tie-breaking (highest objective,
//! then lowest rate cost, then lowest restart index), so results are
//! reproducible given the seed.

pub(crate) mod branch;
pub mod check;
pub(crate) mod objective;
pub(crate) mod solver;

use crate::base::LogBase;
use crate::prob::{ConditionalPmf, JointSourcePmf, ProbError};
use objective::{grad_i_side, i_self, i_side, Mat, ProblemInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("auxiliary alphabet size {got} exceeds cap {cap}")]
    CapExceeded { got: usize, cap: usize },
    #[error("rate grid must be sorted ascending and non-negative")]
    BadRateGrid,
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// Which decision center an exponent belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Receiver {
    One,
    Two,
}

impl Receiver {
    /// Zero-based index into `[theta1, theta2]`-style arrays.
    #[inline]
    pub fn idx(self) -> usize {
        match self {
            Receiver::One => 0,
            Receiver::Two => 1,
        }
    }

    pub fn number(self) -> usize {
        self.idx() + 1
    }

    pub fn from_number(n: usize) -> Option<Receiver> {
        match n {
            1 => Some(Receiver::One),
            2 => Some(Receiver::Two),
            _ => None,
        }
    }

    pub fn other(self) -> Receiver {
        match self {
            Receiver::One => Receiver::Two,
            Receiver::Two => Receiver::One,
        }
    }
}

/// Query for the best single-auxiliary exponent at a common-link rate.
#[derive(Debug, Clone, Copy)]
pub struct EtaQuery {
    pub receiver: Receiver,
    pub rate: f64,
}

/// Solver knobs. All randomness derives from `seed`; identical settings give
/// bit-identical results.
#[derive(Debug, Clone)]
pub struct OptimizerSettings {
    /// Number of random restarts (informed starts come on top). Must be >= 1.
    pub restarts: usize,
    /// Iteration cap per restart.
    pub max_iters: usize,
    /// Convergence threshold on the objective change per iteration.
    pub convergence_tol: f64,
    /// Documented absolute accuracy of reported objective values; downstream
    /// consistency checks compare region computations at twice this value.
    pub value_tolerance: f64,
    /// Master seed for restart initialization.
    pub seed: u64,
    /// Override for the single-auxiliary / common-layer alphabet cap.
    pub u0_cap: Option<usize>,
    /// Override for refinement-layer alphabet caps.
    pub ui_cap: Option<usize>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            restarts: 40,
            max_iters: 3000,
            convergence_tol: 1e-12,
            value_tolerance: 5e-5,
            seed: 0xE1A7,
            u0_cap: None,
            ui_cap: None,
        }
    }
}

impl OptimizerSettings {
    /// Cap for a single auxiliary described directly from the sensor:
    /// `|Y0| + 2` unless overridden.
    pub fn single_cap(&self, ny0: usize) -> usize {
        self.u0_cap.unwrap_or(ny0 + 2)
    }

    /// Cap for the shared first layer of the three-branch construction:
    /// `|Y0| + 3` unless overridden.
    pub fn common_cap(&self, ny0: usize) -> usize {
        self.u0_cap.unwrap_or(ny0 + 3)
    }

    /// Cap for a refinement layer on top of a first layer of size `nu0`:
    /// `nu0 * |Y0| + 1` unless overridden.
    pub fn refine_cap(&self, nu0: usize, ny0: usize) -> usize {
        self.ui_cap.unwrap_or(nu0 * ny0 + 1)
    }
}

/// splitmix64, used to derive independent per-restart seeds.
pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A conditional pmf together with the cardinality cap it was built under.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxChannel {
    channel: ConditionalPmf,
    cap: usize,
}

impl AuxChannel {
    pub fn new(channel: ConditionalPmf, cap: usize) -> Result<Self, OptimError> {
        if channel.n_out() > cap {
            return Err(OptimError::CapExceeded { got: channel.n_out(), cap });
        }
        Ok(Self { channel, cap })
    }

    pub fn channel(&self) -> &ConditionalPmf {
        &self.channel
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub(crate) fn from_mat(m: &Mat, cap: usize) -> Self {
        let channel = ConditionalPmf::new(m.rows, m.cols, m.a.clone())
            .expect("solver iterates are row-stochastic");
        Self { channel, cap }
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn to_mat(&self) -> Mat {
        Mat {
            rows: self.channel.n_in(),
            cols: self.channel.n_out(),
            a: self.channel.as_slice().to_vec(),
        }
    }
}

// ---------------------------------------------------------------------------
// Scalarized single-channel solve
// ---------------------------------------------------------------------------

/// Objective spec for the single-channel solve: maximize
/// `w1 * min(I(U;Y1), cap1) + w2 * min(I(U;Y2), cap2)` s.t. `I(U;Y0) <= budget`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScalarizedSpec {
    pub weights: [f64; 2],
    pub caps: [f64; 2],
    pub budget: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ScalarizedSolution {
    pub w: Mat,
    pub i0: f64,
    pub i_side: [f64; 2],
    pub value: f64,
    pub converged: bool,
}

fn constant_solution(inst: &ProblemInstance, nu: usize) -> ScalarizedSolution {
    let mut w = Mat::zeros(inst.ny0(), nu);
    for y in 0..inst.ny0() {
        *w.at_mut(y, 0) = 1.0;
    }
    ScalarizedSolution { w, i0: 0.0, i_side: [0.0, 0.0], value: 0.0, converged: true }
}

fn identity_start(ny0: usize, nu: usize) -> Mat {
    let mut w = Mat::zeros(ny0, nu);
    for y in 0..ny0 {
        *w.at_mut(y, y % nu) = 1.0;
    }
    w
}

fn uniform_start(ny0: usize, nu: usize) -> Mat {
    let mut w = Mat::zeros(ny0, nu);
    for v in w.a.iter_mut() {
        *v = 1.0 / nu as f64;
    }
    w
}

pub(crate) fn random_stochastic(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for r in 0..rows {
        let mut s = 0.0;
        for c in 0..cols {
            let u: f64 = rng.random();
            let v = -(1.0 - u).ln();
            *m.at_mut(r, c) = v;
            s += v;
        }
        for c in 0..cols {
            *m.at_mut(r, c) /= s;
        }
    }
    m
}

/// Deterministic multistart solve of a [`ScalarizedSpec`].
///
/// `extra_starts` lets callers pass continuation candidates (e.g. the witness
/// of an adjacent sweep point); they join the informed starts ahead of the
/// random ones.
pub(crate) fn solve_scalarized(
    inst: &ProblemInstance,
    spec: &ScalarizedSpec,
    nu: usize,
    settings: &OptimizerSettings,
    extra_starts: &[Mat],
) -> ScalarizedSolution {
    if spec.budget <= 0.0 {
        return constant_solution(inst, nu);
    }
    let ny0 = inst.ny0();

    let mut starts: Vec<Mat> = Vec::with_capacity(settings.restarts + 2 + extra_starts.len());
    starts.push(identity_start(ny0, nu));
    starts.push(uniform_start(ny0, nu));
    for s in extra_starts {
        if s.rows == ny0 && s.cols == nu {
            starts.push(s.clone());
        }
    }
    for k in 0..settings.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, k as u64));
        starts.push(random_stochastic(ny0, nu, &mut rng));
    }

    let run_one = |start: &Mat| -> ScalarizedSolution {
        let mut vars = vec![start.clone()];
        let weights = spec.weights;
        let caps = spec.caps;
        let eval = |vs: &[Mat]| -> f64 {
            let mut v = 0.0;
            for i in 0..2 {
                if weights[i] > 0.0 {
                    v += weights[i] * i_side(&vs[0], &inst.side[i], inst.base).min(caps[i]);
                }
            }
            v
        };
        let grad = |vs: &[Mat], gs: &mut [Mat]| {
            gs[0].a.iter_mut().for_each(|x| *x = 0.0);
            let mut tmp = Mat::zeros(vs[0].rows, vs[0].cols);
            for i in 0..2 {
                if weights[i] > 0.0 && i_side(&vs[0], &inst.side[i], inst.base) < caps[i] {
                    grad_i_side(&vs[0], &inst.side[i], inst.base, &mut tmp);
                    for (g, t) in gs[0].a.iter_mut().zip(&tmp.a) {
                        *g += weights[i] * t;
                    }
                }
            }
        };
        let feasibilize = |vs: &mut [Mat]| {
            solver::enforce_self_rate(&mut vs[0], &inst.p0, spec.budget, inst.base);
        };
        let out = solver::projected_gradient_ascent(
            &mut vars,
            eval,
            grad,
            feasibilize,
            settings.max_iters,
            settings.convergence_tol,
        );
        let w = vars.pop().unwrap();
        let i0 = i_self(&w, &inst.p0, inst.base);
        let i_sides = [
            i_side(&w, &inst.side[0], inst.base),
            i_side(&w, &inst.side[1], inst.base),
        ];
        ScalarizedSolution {
            w,
            i0,
            i_side: i_sides,
            value: out.value,
            converged: out.converged,
        }
    };

    let results: Vec<ScalarizedSolution> = starts.par_iter().map(run_one).collect();
    pick_best(results)
}

/// Deterministic merge: highest value, then lowest rate cost, then lowest
/// start index. Values within 1e-12 count as tied.
fn pick_best(results: Vec<ScalarizedSolution>) -> ScalarizedSolution {
    let mut best: Option<ScalarizedSolution> = None;
    let mut any_converged = false;
    for r in results {
        any_converged |= r.converged;
        best = Some(match best {
            None => r,
            Some(b) => {
                let better = r.value > b.value + 1e-12
                    || ((r.value - b.value).abs() <= 1e-12 && r.i0 < b.i0 - 1e-15);
                if better {
                    r
                } else {
                    b
                }
            }
        });
    }
    let mut b = best.expect("at least one start");
    b.converged = any_converged;
    b
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Result of a single-receiver exponent maximization.
#[derive(Debug, Clone)]
pub struct EtaResult {
    /// Best found exponent `I(U;Yi)`.
    pub value: f64,
    /// Achieving channel.
    pub witness: AuxChannel,
    /// Rate cost `I(U;Y0)` of the witness.
    pub rate_used: f64,
    /// Reward the witness incidentally gives the other receiver.
    pub other_side: f64,
    /// False iff every restart hit the iteration cap before converging.
    pub converged: bool,
}

/// Best exponent at center `i` over channels `P(U|Y0)` with rate cost at most
/// `query.rate`: the fundamental quantity every region is assembled from.
pub fn single_receiver_exponent(
    joint: &JointSourcePmf,
    query: EtaQuery,
    base: LogBase,
    settings: &OptimizerSettings,
) -> Result<EtaResult, OptimError> {
    if query.rate < 0.0 {
        return Err(OptimError::NegativeRate(query.rate));
    }
    let inst = ProblemInstance::new(joint, base);
    let nu = settings.single_cap(inst.ny0());
    let mut weights = [0.0, 0.0];
    weights[query.receiver.idx()] = 1.0;
    let spec = ScalarizedSpec {
        weights,
        caps: [f64::INFINITY, f64::INFINITY],
        budget: query.rate,
    };
    let sol = solve_scalarized(&inst, &spec, nu, settings, &[]);
    Ok(EtaResult {
        value: sol.i_side[query.receiver.idx()],
        witness: AuxChannel::from_mat(&sol.w, nu),
        rate_used: sol.i0,
        other_side: sol.i_side[query.receiver.other().idx()],
        converged: sol.converged,
    })
}

/// [`single_receiver_exponent`] along an ascending rate grid, with warm starts
/// carried from one grid point to the next.
pub fn exponent_rate_curve(
    joint: &JointSourcePmf,
    receiver: Receiver,
    rates: &[f64],
    base: LogBase,
    settings: &OptimizerSettings,
) -> Result<Vec<(f64, EtaResult)>, OptimError> {
    if rates.windows(2).any(|w| w[0] > w[1]) || rates.iter().any(|&r| r < 0.0) {
        return Err(OptimError::BadRateGrid);
    }
    let inst = ProblemInstance::new(joint, base);
    let nu = settings.single_cap(inst.ny0());
    let mut weights = [0.0, 0.0];
    weights[receiver.idx()] = 1.0;
    let mut out = Vec::with_capacity(rates.len());
    let mut carry: Vec<Mat> = Vec::new();
    for &rate in rates {
        let spec = ScalarizedSpec {
            weights,
            caps: [f64::INFINITY, f64::INFINITY],
            budget: rate,
        };
        let sol = solve_scalarized(&inst, &spec, nu, settings, &carry);
        carry = vec![sol.w.clone()];
        out.push((
            rate,
            EtaResult {
                value: sol.i_side[receiver.idx()],
                witness: AuxChannel::from_mat(&sol.w, nu),
                rate_used: sol.i0,
                other_side: sol.i_side[receiver.other().idx()],
                converged: sol.converged,
            },
        ));
    }
    Ok(out)
}

/// One scalarization of the maximum-rate trade-off: maximize
/// `lambda * I(U0 U1; Y1) + (1 - lambda) * I(U0 U2; Y2)` subject to
/// `I(U0;Y0) <= r0` and `I(Ui;Y0|U0) <= ri`.
#[derive(Debug, Clone)]
pub struct WeightedMaxratePoint {
    pub theta: [f64; 2],
    pub w0: AuxChannel,
    /// Refinement channels; `None` when the individual link has zero rate and
    /// the layer is pinned to a constant.
    pub w1: Option<AuxChannel>,
    pub w2: Option<AuxChannel>,
    /// `[I(U0;Y0), I(U1;Y0|U0), I(U2;Y0|U0)]` of the witnesses.
    pub rates_used: [f64; 3],
    pub value: f64,
    pub converged: bool,
}

pub fn weighted_exponents_maxrate(
    joint: &JointSourcePmf,
    rates: [f64; 3],
    lambda: f64,
    base: LogBase,
    settings: &OptimizerSettings,
) -> Result<WeightedMaxratePoint, OptimError> {
    for &r in &rates {
        if r < 0.0 {
            return Err(OptimError::NegativeRate(r));
        }
    }
    assert!((0.0..=1.0).contains(&lambda), "lambda must be in [0,1]");
    let inst = ProblemInstance::new(joint, base);
    let ny0 = inst.ny0();

    if rates[1] == 0.0 && rates[2] == 0.0 {
        // Refinement layers carry nothing; the composite reward collapses to
        // the shared layer's reward.
        let nu = settings.single_cap(ny0);
        let spec = ScalarizedSpec {
            weights: [lambda, 1.0 - lambda],
            caps: [f64::INFINITY, f64::INFINITY],
            budget: rates[0],
        };
        let sol = solve_scalarized(&inst, &spec, nu, settings, &[]);
        return Ok(WeightedMaxratePoint {
            theta: sol.i_side,
            w0: AuxChannel::from_mat(&sol.w, nu),
            w1: None,
            w2: None,
            rates_used: [sol.i0, 0.0, 0.0],
            value: sol.value,
            converged: sol.converged,
        });
    }

    branch::solve_layered_maxrate(&inst, rates, lambda, settings)
}
