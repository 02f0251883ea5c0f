//! Joint optimization of the rate-sharing construction: up to three branch
//! variants, each with a first-layer channel `U0^j` from `Y0` and optional
//! refinement layers `Ui^j` riding on it, weighted by the partition masses
//! `sigma`.
//!
//! Receiver `i` is served by branch 0 (the shared variant) and branch `i`
//! (its private variant); its exponent is the minimum reward over serving
//! branches. The minimum is nonsmooth, so the search ascends a smooth
//! surrogate that weights the serving branches by a split parameter in
//! `[0,1]`; callers sweep the split grid and keep the best true objective.
//! Every reported point is evaluated with the true minimum, so it is
//! achievable regardless of how well the surrogate matched.
//!
//! A branch with zero mass costs no rate, and its first layer can always be
//! made perfectly informative for free; its entry in the minimum is then
//! never binding. Such branches are dropped from the variables entirely.

use super::objective::{
    grad_i_joint_side, grad_i_side, i_cond_rate, i_joint_side, i_self, i_side, Mat,
    ProblemInstance,
};
use super::solver::{
    enforce_weighted_cond_rate, enforce_weighted_self_rate, projected_gradient_ascent,
};
use super::{
    derive_seed, random_stochastic, AuxChannel, OptimizerSettings, WeightedMaxratePoint,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// One scalarized subproblem of the three-branch construction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BranchSpec {
    pub sigma: [f64; 3],
    pub lambda: f64,
    /// Surrogate weight of the shared branch in each receiver's minimum.
    pub splits: [f64; 2],
    pub rates: [f64; 3],
}

impl BranchSpec {
    fn branch_active(&self, j: usize) -> bool {
        self.sigma[j] > 0.0
    }

    /// Branches serving receiver `i` (0-based): subset of {0, i+1}.
    fn serving(&self, i: usize) -> (bool, bool) {
        (self.branch_active(0), self.branch_active(i + 1))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BranchSolution {
    /// True exponents `min` over serving branches; infinite when a receiver
    /// has no serving branch (it may then always alarm).
    pub theta: [f64; 2],
    /// True scalarized objective `lambda th1 + (1-lambda) th2`.
    pub value: f64,
    /// First-layer channels per branch.
    pub w0: [Option<Mat>; 3],
    /// Refinement channels `wref[i][j]` for receiver `i` on branch `j`.
    pub wref: [[Option<Mat>; 3]; 2],
    /// Sigma-weighted rate totals `[common, individual1, individual2]`.
    pub rates_used: [f64; 3],
    pub converged: bool,
}

/// Variable layout for one subproblem instance.
struct Layout {
    w0_idx: [Option<usize>; 3],
    wref_idx: [[Option<usize>; 3]; 2],
    n_vars: usize,
    nu0: [usize; 3],
    nui: [[usize; 3]; 2],
}

impl Layout {
    fn build(inst: &ProblemInstance, spec: &BranchSpec, settings: &OptimizerSettings) -> Layout {
        let ny0 = inst.ny0();
        let mut w0_idx = [None; 3];
        let mut wref_idx = [[None; 3]; 2];
        let mut nu0 = [0usize; 3];
        let mut nui = [[0usize; 3]; 2];
        let mut n = 0;
        for j in 0..3 {
            if spec.branch_active(j) {
                nu0[j] = if j == 0 {
                    settings.common_cap(ny0)
                } else {
                    settings.single_cap(ny0)
                };
                w0_idx[j] = Some(n);
                n += 1;
            }
        }
        for i in 0..2 {
            if spec.rates[i + 1] > 0.0 {
                for j in [0usize, i + 1] {
                    if spec.branch_active(j) {
                        nui[i][j] = settings.refine_cap(nu0[j], ny0);
                        wref_idx[i][j] = Some(n);
                        n += 1;
                    }
                }
            }
        }
        Layout { w0_idx, wref_idx, n_vars: n, nu0, nui }
    }

    /// Reward of branch `j` for receiver `i` at the given variables.
    fn branch_reward(&self, inst: &ProblemInstance, vars: &[Mat], i: usize, j: usize) -> f64 {
        let w0 = &vars[self.w0_idx[j].expect("active branch")];
        match self.wref_idx[i][j] {
            Some(k) => i_joint_side(w0, &vars[k], &inst.side[i], inst.base),
            None => i_side(w0, &inst.side[i], inst.base),
        }
    }
}

/// Solve one branch subproblem by surrogate projected-gradient multistart.
/// `warm_first_layers` seeds additional starts (missing entries are filled
/// with uniform rows).
pub(crate) fn solve_branch(
    inst: &ProblemInstance,
    spec: &BranchSpec,
    settings: &OptimizerSettings,
    warm_first_layers: &[[Option<Mat>; 3]],
) -> BranchSolution {
    let ny0 = inst.ny0();
    let layout = Layout::build(inst, spec, settings);

    // Degenerate case: nothing active at all.
    if layout.n_vars == 0 {
        let theta = [f64::INFINITY, f64::INFINITY];
        return BranchSolution {
            theta,
            value: f64::INFINITY,
            w0: [None, None, None],
            wref: [[None, None, None], [None, None, None]],
            rates_used: [0.0; 3],
            converged: true,
        };
    }

    // Surrogate weight of (receiver i, branch j) reward terms.
    let mut coef = [[0.0f64; 3]; 2];
    for i in 0..2 {
        let wi = if i == 0 { spec.lambda } else { 1.0 - spec.lambda };
        let (shared, private) = spec.serving(i);
        match (shared, private) {
            (true, true) => {
                coef[i][0] = wi * spec.splits[i];
                coef[i][i + 1] = wi * (1.0 - spec.splits[i]);
            }
            (true, false) => coef[i][0] = wi,
            (false, true) => coef[i][i + 1] = wi,
            (false, false) => {}
        }
    }

    let make_vars = |seed_salt: u64, warm: Option<&[Option<Mat>; 3]>| -> Vec<Mat> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, seed_salt));
        let mut vars = vec![Mat::zeros(1, 1); layout.n_vars];
        for j in 0..3 {
            if let Some(k) = layout.w0_idx[j] {
                vars[k] = match warm.and_then(|w| w[j].clone()) {
                    Some(m) if m.rows == ny0 && m.cols == layout.nu0[j] => m,
                    Some(m) if m.rows == ny0 && m.cols <= layout.nu0[j] => {
                        // pad columns with zeros up to the cap
                        let mut p = Mat::zeros(ny0, layout.nu0[j]);
                        for y in 0..ny0 {
                            for u in 0..m.cols {
                                *p.at_mut(y, u) = m.at(y, u);
                            }
                        }
                        p
                    }
                    _ => random_stochastic(ny0, layout.nu0[j], &mut rng),
                };
            }
        }
        for i in 0..2 {
            for j in 0..3 {
                if let Some(k) = layout.wref_idx[i][j] {
                    vars[k] =
                        random_stochastic(layout.nu0[j] * ny0, layout.nui[i][j], &mut rng);
                }
            }
        }
        vars
    };

    let eval = |vars: &[Mat]| -> f64 {
        let mut v = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                if coef[i][j] > 0.0 {
                    v += coef[i][j] * layout.branch_reward(inst, vars, i, j);
                }
            }
        }
        v
    };
    let grad = |vars: &[Mat], gs: &mut [Mat]| {
        for g in gs.iter_mut() {
            g.a.iter_mut().for_each(|x| *x = 0.0);
        }
        for i in 0..2 {
            for j in 0..3 {
                let c = coef[i][j];
                if c == 0.0 {
                    continue;
                }
                let k0 = layout.w0_idx[j].expect("active branch");
                match layout.wref_idx[i][j] {
                    Some(kr) => {
                        let mut g0 = Mat::zeros(vars[k0].rows, vars[k0].cols);
                        let mut gi = Mat::zeros(vars[kr].rows, vars[kr].cols);
                        grad_i_joint_side(
                            &vars[k0],
                            &vars[kr],
                            &inst.side[i],
                            inst.base,
                            &mut g0,
                            &mut gi,
                        );
                        for (a, b) in gs[k0].a.iter_mut().zip(&g0.a) {
                            *a += c * b;
                        }
                        for (a, b) in gs[kr].a.iter_mut().zip(&gi.a) {
                            *a += c * b;
                        }
                    }
                    None => {
                        let mut g0 = Mat::zeros(vars[k0].rows, vars[k0].cols);
                        grad_i_side(&vars[k0], &inst.side[i], inst.base, &mut g0);
                        for (a, b) in gs[k0].a.iter_mut().zip(&g0.a) {
                            *a += c * b;
                        }
                    }
                }
            }
        }
    };
    let feasibilize = |vars: &mut [Mat]| {
        // Common link first: sigma-weighted sum over active first layers.
        let mut idxs = Vec::new();
        let mut coefs = Vec::new();
        for j in 0..3 {
            if let Some(k) = layout.w0_idx[j] {
                idxs.push(k);
                coefs.push(spec.sigma[j]);
            }
        }
        {
            // Mutable split of vars at the needed indices.
            let mut refs: Vec<&mut Mat> = Vec::with_capacity(idxs.len());
            let mut rest = &mut vars[..];
            let mut taken = 0usize;
            for &k in &idxs {
                let (head, tail) = rest.split_at_mut(k + 1 - taken);
                refs.push(&mut head[k - taken]);
                rest = tail;
                taken = k + 1;
            }
            enforce_weighted_self_rate(&mut refs, &coefs, &inst.p0, spec.rates[0], inst.base);
        }
        // Individual links: refinement layers only, first layers fixed.
        for i in 0..2 {
            if spec.rates[i + 1] <= 0.0 {
                continue;
            }
            let mut pairs_idx = Vec::new();
            let mut coefs = Vec::new();
            for j in [0usize, i + 1] {
                if let Some(kr) = layout.wref_idx[i][j] {
                    pairs_idx.push((layout.w0_idx[j].unwrap(), kr));
                    coefs.push(spec.sigma[j]);
                }
            }
            if pairs_idx.is_empty() {
                continue;
            }
            // Clone the first layers (cheap, small) to decouple borrows.
            let w0s_owned: Vec<Mat> =
                pairs_idx.iter().map(|&(k0, _)| vars[k0].clone()).collect();
            let w0s: Vec<&Mat> = w0s_owned.iter().collect();
            let mut wis: Vec<&mut Mat> = Vec::with_capacity(pairs_idx.len());
            let mut rest = &mut vars[..];
            let mut taken = 0usize;
            let mut order: Vec<usize> = (0..pairs_idx.len()).collect();
            order.sort_by_key(|&q| pairs_idx[q].1);
            for &q in &order {
                let kr = pairs_idx[q].1;
                let (head, tail) = rest.split_at_mut(kr + 1 - taken);
                wis.push(&mut head[kr - taken]);
                rest = tail;
                taken = kr + 1;
            }
            // `wis` is ordered by variable index; reorder coefs/w0s to match.
            let w0s_ord: Vec<&Mat> = order.iter().map(|&q| w0s[q]).collect();
            let coefs_ord: Vec<f64> = order.iter().map(|&q| coefs[q]).collect();
            enforce_weighted_cond_rate(
                &w0s_ord,
                &mut wis,
                &coefs_ord,
                &inst.p0,
                spec.rates[i + 1],
                inst.base,
            );
        }
    };

    // Assemble starts: warm first, then deterministic random.
    let mut starts: Vec<Vec<Mat>> = Vec::new();
    for (q, w) in warm_first_layers.iter().enumerate() {
        starts.push(make_vars(1000 + q as u64, Some(w)));
    }
    for k in 0..settings.restarts.max(1) {
        starts.push(make_vars(k as u64, None));
    }

    let run_one = |start: &Vec<Mat>| -> (BranchSolution, f64) {
        let mut vars = start.clone();
        let out = projected_gradient_ascent(
            &mut vars,
            eval,
            grad,
            feasibilize,
            settings.max_iters,
            settings.convergence_tol,
        );
        (package(inst, spec, &layout, vars, out.converged), out.value)
    };
    let results: Vec<(BranchSolution, f64)> = starts.par_iter().map(run_one).collect();

    let mut best: Option<BranchSolution> = None;
    let mut any_conv = false;
    for (sol, _surrogate) in results {
        any_conv |= sol.converged;
        best = Some(match best {
            None => sol,
            Some(b) => {
                if sol.value > b.value + 1e-12
                    || ((sol.value - b.value).abs() <= 1e-12
                        && sol.rates_used[0] < b.rates_used[0] - 1e-15)
                {
                    sol
                } else {
                    b
                }
            }
        });
    }
    let mut b = best.expect("at least one start");
    b.converged = any_conv;
    b
}

fn package(
    inst: &ProblemInstance,
    spec: &BranchSpec,
    layout: &Layout,
    vars: Vec<Mat>,
    converged: bool,
) -> BranchSolution {
    let mut theta = [0.0f64; 2];
    for i in 0..2 {
        let (shared, private) = spec.serving(i);
        let mut t = f64::INFINITY;
        if shared {
            t = t.min(layout.branch_reward(inst, &vars, i, 0));
        }
        if private {
            t = t.min(layout.branch_reward(inst, &vars, i, i + 1));
        }
        theta[i] = t;
    }
    // Skip zero-weight terms so an infinite exponent with zero weight does
    // not poison the scalarized value.
    let mut value = 0.0;
    for (i, &t) in theta.iter().enumerate() {
        let w = if i == 0 { spec.lambda } else { 1.0 - spec.lambda };
        if w > 0.0 {
            value += w * t;
        }
    }

    let mut rates_used = [0.0f64; 3];
    for j in 0..3 {
        if let Some(k) = layout.w0_idx[j] {
            rates_used[0] += spec.sigma[j] * i_self(&vars[k], &inst.p0, inst.base);
        }
    }
    for i in 0..2 {
        for j in [0usize, i + 1] {
            if let Some(kr) = layout.wref_idx[i][j] {
                let k0 = layout.w0_idx[j].unwrap();
                rates_used[i + 1] +=
                    spec.sigma[j] * i_cond_rate(&vars[k0], &vars[kr], &inst.p0, inst.base);
            }
        }
    }

    let mut w0: [Option<Mat>; 3] = [None, None, None];
    let mut wref: [[Option<Mat>; 3]; 2] = [[None, None, None], [None, None, None]];
    for j in 0..3 {
        if let Some(k) = layout.w0_idx[j] {
            w0[j] = Some(vars[k].clone());
        }
    }
    for i in 0..2 {
        for j in 0..3 {
            if let Some(k) = layout.wref_idx[i][j] {
                wref[i][j] = Some(vars[k].clone());
            }
        }
    }
    BranchSolution { theta, value, w0, wref, rates_used, converged }
}

/// Layered maximum-rate scalarization (single branch, full mass on it).
pub(crate) fn solve_layered_maxrate(
    inst: &ProblemInstance,
    rates: [f64; 3],
    lambda: f64,
    settings: &OptimizerSettings,
) -> Result<WeightedMaxratePoint, super::OptimError> {
    let spec = BranchSpec {
        sigma: [1.0, 0.0, 0.0],
        lambda,
        splits: [1.0, 1.0],
        rates,
    };
    let sol = solve_branch(inst, &spec, settings, &[]);
    let ny0 = inst.ny0();
    let nu0 = settings.common_cap(ny0);
    let w0 = sol.w0[0].as_ref().expect("branch 0 active");
    let make_ref = |m: &Option<Mat>| -> Option<AuxChannel> {
        m.as_ref()
            .map(|m| AuxChannel::from_mat(m, settings.refine_cap(nu0, ny0)))
    };
    Ok(WeightedMaxratePoint {
        theta: sol.theta,
        w0: AuxChannel::from_mat(w0, nu0),
        w1: make_ref(&sol.wref[0][0]),
        w2: make_ref(&sol.wref[1][0]),
        rates_used: sol.rates_used,
        value: sol.value,
        converged: sol.converged,
    })
}
