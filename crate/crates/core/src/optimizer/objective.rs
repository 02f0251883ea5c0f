//! Mutual-information objectives and their analytic gradients.
//!
//! Decision variables are row-stochastic matrices. For a channel `W` from the
//! sensor alphabet to an auxiliary alphabet, the quantities of interest are
//!
//! - `I(U;Y0)` — the rate cost of describing the sensor observation,
//! - `I(U;Yi)` — the exponent reward at center `i`, computed through the
//!   pairwise joint `P(y0, yi)`,
//!
//! and for a second-layer channel `V` from `(u0, y0)` to `Ui`,
//!
//! - `I(U0 Ui; Yi)` — the joint reward, and
//! - `I(Ui; Y0 | U0)` — the individual-link rate cost.
//!
//! Gradients are exact on the interior of the simplex; logs are clamped far
//! below any probability that survives simplex projection, so boundary points
//! yield large-but-finite entries instead of infinities.

use crate::base::LogBase;
use crate::prob::Joint2;

/// Clamp floor for logarithm arguments.
const LOG_FLOOR: f64 = 1e-120;

#[inline]
fn clog(base: LogBase, x: f64) -> f64 {
    base.log(x.max(LOG_FLOOR))
}

/// Dense row-major matrix used as an optimization variable.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, a: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.a[r * self.cols + c]
    }

    #[allow(dead_code)]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.a[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.a[r * self.cols..(r + 1) * self.cols]
    }
}

/// Precomputed instance data shared by all objectives for one source law.
#[derive(Debug, Clone)]
pub(crate) struct ProblemInstance {
    /// Sensor marginal P(y0).
    pub p0: Vec<f64>,
    /// Pairwise joints P(y0, yi) for i = 1, 2.
    pub side: [Joint2; 2],
    pub base: LogBase,
}

impl ProblemInstance {
    pub fn new(joint: &crate::prob::JointSourcePmf, base: LogBase) -> Self {
        Self {
            p0: joint.marginal_y0().as_slice().to_vec(),
            side: [joint.pair_y0_y1(), joint.pair_y0_y2()],
            base,
        }
    }

    pub fn ny0(&self) -> usize {
        self.p0.len()
    }

    /// Data-processing ceiling I(Y0;Yi).
    #[allow(dead_code)]
    pub fn side_information(&self, i: usize) -> f64 {
        self.side[i].mutual_information(self.base)
    }
}

/// Output marginal q(u) of `w` under input distribution `p0`.
pub(crate) fn output_marginal(w: &Mat, p0: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; w.cols];
    for y in 0..w.rows {
        let py = p0[y];
        if py == 0.0 {
            continue;
        }
        for u in 0..w.cols {
            q[u] += py * w.at(y, u);
        }
    }
    q
}

/// I(U;Y0) for `U = W(Y0)`.
pub(crate) fn i_self(w: &Mat, p0: &[f64], base: LogBase) -> f64 {
    let q = output_marginal(w, p0);
    let mut s = 0.0;
    for y in 0..w.rows {
        let py = p0[y];
        if py == 0.0 {
            continue;
        }
        for u in 0..w.cols {
            let wv = w.at(y, u);
            if wv > 0.0 {
                s += py * wv * base.log(wv / q[u]);
            }
        }
    }
    s.max(0.0)
}

/// Gradient of [`i_self`], entry `[y][u] = p0(y) log(w(y,u)/q(u))`.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn grad_i_self(w: &Mat, p0: &[f64], base: LogBase, out: &mut Mat) {
    let q = output_marginal(w, p0);
    for y in 0..w.rows {
        for u in 0..w.cols {
            *out.at_mut(y, u) = p0[y] * (clog(base, w.at(y, u)) - clog(base, q[u]));
        }
    }
}

/// I(U;Yi) through the pairwise joint `side = P(y0, yi)`.
pub(crate) fn i_side(w: &Mat, side: &Joint2, base: LogBase) -> f64 {
    let nyi = side.nb();
    // q(u, yi) = sum_y0 side(y0, yi) w(y0, u)
    let mut q = vec![0.0; w.cols * nyi];
    for y0 in 0..w.rows {
        for u in 0..w.cols {
            let wv = w.at(y0, u);
            if wv == 0.0 {
                continue;
            }
            for yi in 0..nyi {
                q[u * nyi + yi] += side.p(y0, yi) * wv;
            }
        }
    }
    let mut qu = vec![0.0; w.cols];
    let mut pyi = vec![0.0; nyi];
    for u in 0..w.cols {
        for yi in 0..nyi {
            qu[u] += q[u * nyi + yi];
            pyi[yi] += q[u * nyi + yi];
        }
    }
    let mut s = 0.0;
    for u in 0..w.cols {
        for yi in 0..nyi {
            let p = q[u * nyi + yi];
            if p > 0.0 {
                s += p * base.log(p / (qu[u] * pyi[yi]));
            }
        }
    }
    s.max(0.0)
}

/// Gradient of [`i_side`], entry `[y0][u] = sum_yi side(y0,yi) log q(yi|u)`.
pub(crate) fn grad_i_side(w: &Mat, side: &Joint2, base: LogBase, out: &mut Mat) {
    let nyi = side.nb();
    let mut q = vec![0.0; w.cols * nyi];
    for y0 in 0..w.rows {
        for u in 0..w.cols {
            let wv = w.at(y0, u);
            if wv == 0.0 {
                continue;
            }
            for yi in 0..nyi {
                q[u * nyi + yi] += side.p(y0, yi) * wv;
            }
        }
    }
    let mut qu = vec![0.0; w.cols];
    for u in 0..w.cols {
        for yi in 0..nyi {
            qu[u] += q[u * nyi + yi];
        }
    }
    for y0 in 0..w.rows {
        for u in 0..w.cols {
            let mut g = 0.0;
            for yi in 0..nyi {
                let j = side.p(y0, yi);
                if j > 0.0 {
                    g += j * (clog(base, q[u * nyi + yi]) - clog(base, qu[u]));
                }
            }
            *out.at_mut(y0, u) = g;
        }
    }
}

// ---------------------------------------------------------------------------
// Two-layer objectives: a context channel w0: y0 -> u0 and a refinement
// channel wi: (u0, y0) -> ui, with row index u0 * ny0 + y0.
// ---------------------------------------------------------------------------

#[inline]
pub(crate) fn layered_row(u0: usize, y0: usize, ny0: usize) -> usize {
    u0 * ny0 + y0
}

/// I(U0 Ui; Yi) of the composite description (U0, Ui).
pub(crate) fn i_joint_side(w0: &Mat, wi: &Mat, side: &Joint2, base: LogBase) -> f64 {
    let (ny0, nu0, nui, nyi) = (w0.rows, w0.cols, wi.cols, side.nb());
    debug_assert_eq!(wi.rows, nu0 * ny0);
    // q(u0, ui, yi)
    let mut q = vec![0.0; nu0 * nui * nyi];
    for y0 in 0..ny0 {
        for u0 in 0..nu0 {
            let w0v = w0.at(y0, u0);
            if w0v == 0.0 {
                continue;
            }
            let r = layered_row(u0, y0, ny0);
            for ui in 0..nui {
                let v = w0v * wi.at(r, ui);
                if v == 0.0 {
                    continue;
                }
                for yi in 0..nyi {
                    q[(u0 * nui + ui) * nyi + yi] += side.p(y0, yi) * v;
                }
            }
        }
    }
    let mut qu = vec![0.0; nu0 * nui];
    let mut pyi = vec![0.0; nyi];
    for k in 0..nu0 * nui {
        for yi in 0..nyi {
            qu[k] += q[k * nyi + yi];
            pyi[yi] += q[k * nyi + yi];
        }
    }
    let mut s = 0.0;
    for k in 0..nu0 * nui {
        for yi in 0..nyi {
            let p = q[k * nyi + yi];
            if p > 0.0 {
                s += p * base.log(p / (qu[k] * pyi[yi]));
            }
        }
    }
    s.max(0.0)
}

/// Gradients of [`i_joint_side`] with respect to both layers.
pub(crate) fn grad_i_joint_side(
    w0: &Mat,
    wi: &Mat,
    side: &Joint2,
    base: LogBase,
    g0: &mut Mat,
    gi: &mut Mat,
) {
    let (ny0, nu0, nui, nyi) = (w0.rows, w0.cols, wi.cols, side.nb());
    let mut q = vec![0.0; nu0 * nui * nyi];
    for y0 in 0..ny0 {
        for u0 in 0..nu0 {
            let w0v = w0.at(y0, u0);
            if w0v == 0.0 {
                continue;
            }
            let r = layered_row(u0, y0, ny0);
            for ui in 0..nui {
                let v = w0v * wi.at(r, ui);
                if v == 0.0 {
                    continue;
                }
                for yi in 0..nyi {
                    q[(u0 * nui + ui) * nyi + yi] += side.p(y0, yi) * v;
                }
            }
        }
    }
    let mut qu = vec![0.0; nu0 * nui];
    for k in 0..nu0 * nui {
        for yi in 0..nyi {
            qu[k] += q[k * nyi + yi];
        }
    }
    // G_V(y0; u0, ui) = sum_yi side(y0,yi) log q(yi | u0, ui), then chain rule.
    for y0 in 0..ny0 {
        for u0 in 0..nu0 {
            let r = layered_row(u0, y0, ny0);
            let mut acc0 = 0.0;
            for ui in 0..nui {
                let k = u0 * nui + ui;
                let mut gv = 0.0;
                for yi in 0..nyi {
                    let j = side.p(y0, yi);
                    if j > 0.0 {
                        gv += j * (clog(base, q[k * nyi + yi]) - clog(base, qu[k]));
                    }
                }
                acc0 += gv * wi.at(r, ui);
                *gi.at_mut(r, ui) = gv * w0.at(y0, u0);
            }
            *g0.at_mut(y0, u0) = acc0;
        }
    }
}

/// I(Ui; Y0 | U0), the individual-link rate cost of the refinement layer.
pub(crate) fn i_cond_rate(w0: &Mat, wi: &Mat, p0: &[f64], base: LogBase) -> f64 {
    let (ny0, nu0, nui) = (w0.rows, w0.cols, wi.cols);
    // b(u0, ui) and a(u0)
    let mut b = vec![0.0; nu0 * nui];
    let mut a = vec![0.0; nu0];
    for y0 in 0..ny0 {
        let py = p0[y0];
        if py == 0.0 {
            continue;
        }
        for u0 in 0..nu0 {
            let w0v = py * w0.at(y0, u0);
            if w0v == 0.0 {
                continue;
            }
            a[u0] += w0v;
            let r = layered_row(u0, y0, ny0);
            for ui in 0..nui {
                b[u0 * nui + ui] += w0v * wi.at(r, ui);
            }
        }
    }
    let mut s = 0.0;
    for y0 in 0..ny0 {
        let py = p0[y0];
        if py == 0.0 {
            continue;
        }
        for u0 in 0..nu0 {
            let w0v = py * w0.at(y0, u0);
            if w0v == 0.0 || a[u0] == 0.0 {
                continue;
            }
            let r = layered_row(u0, y0, ny0);
            for ui in 0..nui {
                let wv = wi.at(r, ui);
                if wv > 0.0 && b[u0 * nui + ui] > 0.0 {
                    let m = b[u0 * nui + ui] / a[u0];
                    s += w0v * wv * base.log(wv / m);
                }
            }
        }
    }
    s.max(0.0)
}

/// Gradients of [`i_cond_rate`] with respect to both layers.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn grad_i_cond_rate(
    w0: &Mat,
    wi: &Mat,
    p0: &[f64],
    base: LogBase,
    g0: &mut Mat,
    gi: &mut Mat,
) {
    let (ny0, nu0, nui) = (w0.rows, w0.cols, wi.cols);
    let mut b = vec![0.0; nu0 * nui];
    let mut a = vec![0.0; nu0];
    for y0 in 0..ny0 {
        let py = p0[y0];
        for u0 in 0..nu0 {
            let w0v = py * w0.at(y0, u0);
            a[u0] += w0v;
            let r = layered_row(u0, y0, ny0);
            for ui in 0..nui {
                b[u0 * nui + ui] += w0v * wi.at(r, ui);
            }
        }
    }
    for y0 in 0..ny0 {
        let py = p0[y0];
        for u0 in 0..nu0 {
            let r = layered_row(u0, y0, ny0);
            let mut acc0 = 0.0;
            for ui in 0..nui {
                let m_log =
                    clog(base, b[u0 * nui + ui]) - clog(base, a[u0]);
                let wlog = clog(base, wi.at(r, ui)) - m_log;
                acc0 += wi.at(r, ui) * wlog;
                *gi.at_mut(r, ui) = py * w0.at(y0, u0) * wlog;
            }
            *g0.at_mut(y0, u0) = py * acc0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stochastic(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        let mut m = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut s = 0.0;
            for c in 0..cols {
                // bounded away from 0 so we stay in the interior
                let v = 0.05 + rng.random::<f64>();
                *m.at_mut(r, c) = v;
                s += v;
            }
            for c in 0..cols {
                *m.at_mut(r, c) /= s;
            }
        }
        m
    }

    /// Central finite differences along a simplex-tangent perturbation, so we
    /// stay on the constraint manifold: bump (r, c) up and (r, c2) down.
    fn fd_tangent(
        f: &dyn Fn(&Mat) -> f64,
        w: &Mat,
        r: usize,
        c: usize,
        c2: usize,
        h: f64,
    ) -> f64 {
        let mut wp = w.clone();
        *wp.at_mut(r, c) += h;
        *wp.at_mut(r, c2) -= h;
        let fp = f(&wp);
        let mut wm = w.clone();
        *wm.at_mut(r, c) -= h;
        *wm.at_mut(r, c2) += h;
        let fm = f(&wm);
        (fp - fm) / (2.0 * h)
    }

    fn check_gradient(f: &dyn Fn(&Mat) -> f64, g: &Mat, w: &Mat) {
        // Project analytic gradient onto the same tangent directions.
        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for r in 0..w.rows {
            for c in 0..w.cols {
                let c2 = (c + 1) % w.cols;
                let fd = fd_tangent(f, w, r, c, c2, h);
                let an = g.at(r, c) - g.at(r, c2);
                num += (an - fd) * (an - fd);
                den += fd * fd;
            }
        }
        let rel = num.sqrt() / den.sqrt().max(1e-9);
        assert!(rel < 1e-4, "gradient mismatch, relative error {rel}");
    }

    #[test]
    fn single_layer_gradients_match_finite_differences() {
        let (joint, _) = instances::ternary_example();
        let inst = ProblemInstance::new(&joint, crate::LogBase::Bits);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let w = random_stochastic(3, 5, &mut rng);
            let mut g = Mat::zeros(3, 5);
            grad_i_self(&w, &inst.p0, inst.base, &mut g);
            check_gradient(&|m| i_self(m, &inst.p0, inst.base), &g, &w);
            for s in 0..2 {
                grad_i_side(&w, &inst.side[s], inst.base, &mut g);
                check_gradient(&|m| i_side(m, &inst.side[s], inst.base), &g, &w);
            }
        }
    }

    #[test]
    fn two_layer_gradients_match_finite_differences() {
        let (joint, _) = instances::ternary_example();
        let inst = ProblemInstance::new(&joint, crate::LogBase::Bits);
        let (ny0, nu0, nui) = (3, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let w0 = random_stochastic(ny0, nu0, &mut rng);
            let wi = random_stochastic(nu0 * ny0, nui, &mut rng);
            let mut g0 = Mat::zeros(ny0, nu0);
            let mut gi = Mat::zeros(nu0 * ny0, nui);

            grad_i_joint_side(&w0, &wi, &inst.side[0], inst.base, &mut g0, &mut gi);
            check_gradient(
                &|m| i_joint_side(m, &wi, &inst.side[0], inst.base),
                &g0,
                &w0,
            );
            check_gradient(
                &|m| i_joint_side(&w0, m, &inst.side[0], inst.base),
                &gi,
                &wi,
            );

            grad_i_cond_rate(&w0, &wi, &inst.p0, inst.base, &mut g0, &mut gi);
            check_gradient(&|m| i_cond_rate(m, &wi, &inst.p0, inst.base), &g0, &w0);
            check_gradient(&|m| i_cond_rate(&w0, m, &inst.p0, inst.base), &gi, &wi);
        }
    }

    #[test]
    fn composite_reduces_to_single_when_refinement_constant() {
        let (joint, _) = instances::ternary_example();
        let inst = ProblemInstance::new(&joint, crate::LogBase::Bits);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w0 = random_stochastic(3, 4, &mut rng);
        // wi puts all mass on symbol 0 for every (u0, y0)
        let mut wi = Mat::zeros(4 * 3, 2);
        for r in 0..12 {
            *wi.at_mut(r, 0) = 1.0;
        }
        let a = i_joint_side(&w0, &wi, &inst.side[0], inst.base);
        let b = i_side(&w0, &inst.side[0], inst.base);
        assert!((a - b).abs() < 1e-12);
        assert!(i_cond_rate(&w0, &wi, &inst.p0, inst.base).abs() < 1e-12);
    }

    #[test]
    fn cond_rate_matches_chain_rule_difference() {
        // I(Ui; Y0 | U0) = I(U0 Ui; Y0) - I(U0; Y0), cross-checked through
        // probability-space computations on the explicit joint.
        let (joint, _) = instances::ternary_example();
        let inst = ProblemInstance::new(&joint, crate::LogBase::Bits);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (ny0, nu0, nui) = (3, 2, 2);
        let w0 = random_stochastic(ny0, nu0, &mut rng);
        let wi = random_stochastic(nu0 * ny0, nui, &mut rng);

        // I(U0 Ui; Y0) via a flattened joint over (y0, (u0,ui)).
        let mut q = vec![0.0; ny0 * nu0 * nui];
        for y0 in 0..ny0 {
            for u0 in 0..nu0 {
                for ui in 0..nui {
                    q[y0 * nu0 * nui + u0 * nui + ui] = inst.p0[y0]
                        * w0.at(y0, u0)
                        * wi.at(layered_row(u0, y0, ny0), ui);
                }
            }
        }
        let j = crate::prob::Joint2::new(ny0, nu0 * nui, q).unwrap();
        let i_u0ui_y0 = j.mutual_information(inst.base);
        let i_u0_y0 = i_self(&w0, &inst.p0, inst.base);
        let want = i_u0ui_y0 - i_u0_y0;
        let got = i_cond_rate(&w0, &wi, &inst.p0, inst.base);
        assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
    }
}
