//! Projected gradient ascent over products of probability simplices.
//!
//! The solver keeps every iterate feasible: after each gradient step rows are
//! projected back onto the simplex (Euclidean projection) and rate constraints
//! are restored by bisecting a mixture of the current channel toward the
//! rank-one channel with the same output marginal. Mixing all the way in
//! always reaches zero rate, so the bisection finds a crossing of the rate
//! boundary whenever the step overshot it.

use super::objective::{i_self, output_marginal, Mat};
use crate::base::LogBase;

/// Euclidean projection of each row onto the probability simplex.
pub(crate) fn project_rows(m: &mut Mat) {
    let cols = m.cols;
    let mut sorted = vec![0.0; cols];
    for r in 0..m.rows {
        let row = m.row_mut(r);
        sorted.copy_from_slice(row);
        sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (k, &v) in sorted.iter().enumerate() {
            cum += v;
            let t = (cum - 1.0) / (k + 1) as f64;
            if v - t > 0.0 {
                theta = t;
            }
        }
        for v in row.iter_mut() {
            *v = (*v - theta).max(0.0);
        }
        // guard against accumulated drift
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 && s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
}

#[inline]
fn mix_into(dst: &mut Mat, w: &Mat, k: &Mat, t: f64) {
    for (d, (a, b)) in dst.a.iter_mut().zip(w.a.iter().zip(&k.a)) {
        *d = (1.0 - t) * a + t * b;
    }
}

/// Rank-one channel whose rows all equal the output marginal of `w` under `p0`.
fn shrink_target(w: &Mat, p0: &[f64]) -> Mat {
    let q = output_marginal(w, p0);
    let mut k = Mat::zeros(w.rows, w.cols);
    for r in 0..w.rows {
        k.row_mut(r).copy_from_slice(&q);
    }
    k
}

const BISECT_ITERS: usize = 60;

/// Restore `I(U;Y0) <= budget` by mixing toward the constant channel.
pub(crate) fn enforce_self_rate(w: &mut Mat, p0: &[f64], budget: f64, base: LogBase) {
    if i_self(w, p0, base) <= budget + 1e-13 {
        return;
    }
    let k = shrink_target(w, p0);
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut buf = Mat::zeros(w.rows, w.cols);
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        mix_into(&mut buf, w, &k, mid);
        if i_self(&buf, p0, base) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mix_into(&mut buf, w, &k, hi);
    *w = buf;
}

/// Restore a weighted-sum rate constraint `sum_j coef_j I(U_j;Y0) <= budget`
/// by mixing every channel toward its own constant target with a common
/// mixing parameter.
pub(crate) fn enforce_weighted_self_rate(
    ws: &mut [&mut Mat],
    coefs: &[f64],
    p0: &[f64],
    budget: f64,
    base: LogBase,
) {
    let total = |ms: &[Mat]| -> f64 {
        ms.iter()
            .zip(coefs)
            .map(|(m, &c)| if c > 0.0 { c * i_self(m, p0, base) } else { 0.0 })
            .sum()
    };
    let current: f64 = ws
        .iter()
        .zip(coefs)
        .map(|(m, &c)| if c > 0.0 { c * i_self(m, p0, base) } else { 0.0 })
        .sum();
    if current <= budget + 1e-13 {
        return;
    }
    let ks: Vec<Mat> = ws.iter().map(|w| shrink_target(w, p0)).collect();
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut bufs: Vec<Mat> = ws.iter().map(|w| (**w).clone()).collect();
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        for ((buf, w), k) in bufs.iter_mut().zip(ws.iter()).zip(&ks) {
            mix_into(buf, w, k, mid);
        }
        if total(&bufs) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for ((buf, w), k) in bufs.iter_mut().zip(ws.iter()).zip(&ks) {
        mix_into(buf, w, k, hi);
    }
    for (w, buf) in ws.iter_mut().zip(bufs) {
        **w = buf;
    }
}

/// Per-context-block constant target for a refinement channel: every
/// `(u0, y0)` row is replaced by the conditional marginal of `ui` given `u0`.
fn cond_shrink_target(w0: &Mat, wi: &Mat, p0: &[f64]) -> Mat {
    let (ny0, nu0, nui) = (w0.rows, w0.cols, wi.cols);
    let mut b = vec![0.0; nu0 * nui];
    let mut a = vec![0.0; nu0];
    for y0 in 0..ny0 {
        for u0 in 0..nu0 {
            let v = p0[y0] * w0.at(y0, u0);
            a[u0] += v;
            for ui in 0..nui {
                b[u0 * nui + ui] += v * wi.at(u0 * ny0 + y0, ui);
            }
        }
    }
    let mut k = Mat::zeros(wi.rows, nui);
    for u0 in 0..nu0 {
        for y0 in 0..ny0 {
            for ui in 0..nui {
                let m = if a[u0] > 0.0 {
                    b[u0 * nui + ui] / a[u0]
                } else {
                    1.0 / nui as f64
                };
                *k.at_mut(u0 * ny0 + y0, ui) = m;
            }
        }
    }
    k
}

/// Restore a weighted conditional-rate constraint
/// `sum_j coef_j I(Ui_j; Y0 | U0_j) <= budget` by mixing each refinement
/// channel toward its conditional marginal with a common mixing parameter.
/// Context channels `w0s` stay fixed, so this never disturbs a previously
/// enforced common-link constraint.
pub(crate) fn enforce_weighted_cond_rate(
    w0s: &[&Mat],
    wis: &mut [&mut Mat],
    coefs: &[f64],
    p0: &[f64],
    budget: f64,
    base: LogBase,
) {
    use super::objective::i_cond_rate;
    debug_assert_eq!(w0s.len(), wis.len());
    let total = |mats: &[Mat]| -> f64 {
        mats.iter()
            .zip(w0s)
            .zip(coefs)
            .map(|((wi, w0), &c)| if c > 0.0 { c * i_cond_rate(w0, wi, p0, base) } else { 0.0 })
            .sum()
    };
    let current: f64 = wis
        .iter()
        .zip(w0s)
        .zip(coefs)
        .map(|((wi, w0), &c)| if c > 0.0 { c * i_cond_rate(w0, wi, p0, base) } else { 0.0 })
        .sum();
    if current <= budget + 1e-13 {
        return;
    }
    let ks: Vec<Mat> = w0s
        .iter()
        .zip(wis.iter())
        .map(|(w0, wi)| cond_shrink_target(w0, wi, p0))
        .collect();
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut bufs: Vec<Mat> = wis.iter().map(|wi| (**wi).clone()).collect();
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        for ((buf, wi), k) in bufs.iter_mut().zip(wis.iter()).zip(&ks) {
            mix_into(buf, wi, k, mid);
        }
        if total(&bufs) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for ((buf, wi), k) in bufs.iter_mut().zip(wis.iter()).zip(&ks) {
        mix_into(buf, wi, k, hi);
    }
    for (wi, buf) in wis.iter_mut().zip(bufs) {
        **wi = buf;
    }
}

/// Outcome of one projected-gradient run.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PgaOutcome {
    pub value: f64,
    pub converged: bool,
}

/// Generic projected gradient ascent with backtracking over a product of
/// row-stochastic matrices.
///
/// `eval` must return the objective at a feasible point; `grad` fills the
/// gradient matrices; `feasibilize` restores all constraints (it is applied
/// after every projected step and to the initial point).
pub(crate) fn projected_gradient_ascent<E, G, F>(
    vars: &mut Vec<Mat>,
    mut eval: E,
    mut grad: G,
    mut feasibilize: F,
    max_iters: usize,
    conv_tol: f64,
) -> PgaOutcome
where
    E: FnMut(&[Mat]) -> f64,
    G: FnMut(&[Mat], &mut [Mat]),
    F: FnMut(&mut [Mat]),
{
    const STEP_INIT: f64 = 1.0;
    const STEP_MAX: f64 = 256.0;
    const STEP_MIN: f64 = 1e-10;
    const STALL_LIMIT: usize = 10;

    for v in vars.iter_mut() {
        project_rows(v);
    }
    feasibilize(vars);
    let mut f = eval(vars);
    let mut g: Vec<Mat> = vars.iter().map(|m| Mat::zeros(m.rows, m.cols)).collect();
    let mut cand: Vec<Mat> = vars.clone();
    let mut step = STEP_INIT;
    let mut stall = 0usize;

    for _ in 0..max_iters {
        grad(vars, &mut g);
        let mut accepted = false;
        let mut f2 = f;
        while step >= STEP_MIN {
            for ((c, v), gm) in cand.iter_mut().zip(vars.iter()).zip(&g) {
                for (cv, (vv, gv)) in c.a.iter_mut().zip(v.a.iter().zip(&gm.a)) {
                    *cv = vv + step * gv;
                }
                project_rows(c);
            }
            feasibilize(&mut cand);
            f2 = eval(&cand);
            if f2 >= f - 1e-15 {
                accepted = true;
                break;
            }
            step *= 0.4;
        }
        if !accepted {
            return PgaOutcome { value: f, converged: true };
        }
        std::mem::swap(vars, &mut cand);
        let delta = f2 - f;
        f = f2;
        step = (step * 1.4).min(STEP_MAX);
        if delta.abs() < conv_tol {
            stall += 1;
            if stall >= STALL_LIMIT {
                return PgaOutcome { value: f, converged: true };
            }
        } else {
            stall = 0;
        }
    }
    PgaOutcome { value: f, converged: false }
}
