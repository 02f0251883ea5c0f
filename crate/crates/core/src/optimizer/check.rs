//! Self-validation utilities: analytic gradients against central finite
//! differences at random interior channels.

use super::objective::{
    grad_i_cond_rate, grad_i_joint_side, grad_i_self, grad_i_side, i_cond_rate, i_joint_side,
    i_self, i_side, Mat, ProblemInstance,
};
use super::random_stochastic;
use crate::base::LogBase;
use crate::prob::JointSourcePmf;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn interior(mut m: Mat) -> Mat {
    // Mix with uniform rows so finite differences stay off the boundary.
    let u = 1.0 / m.cols as f64;
    for v in m.a.iter_mut() {
        *v = 0.9 * *v + 0.1 * u;
    }
    m
}

fn fd_tangent(f: &dyn Fn(&Mat) -> f64, w: &Mat, r: usize, c: usize, c2: usize, h: f64) -> f64 {
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

fn rel_err(f: &dyn Fn(&Mat) -> f64, g: &Mat, w: &Mat) -> f64 {
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
    num.sqrt() / den.sqrt().max(1e-9)
}

/// Worst relative mismatch between analytic gradients and central finite
/// differences (step 1e-6, simplex-tangent directions) over `samples` random
/// interior channels per objective.
pub fn gradient_max_rel_error(
    joint: &JointSourcePmf,
    base: LogBase,
    samples: usize,
    seed: u64,
) -> f64 {
    let inst = ProblemInstance::new(joint, base);
    let ny0 = inst.ny0();
    let (nu0, nui) = (3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let w = interior(random_stochastic(ny0, nu0 + 2, &mut rng));
        let mut g = Mat::zeros(w.rows, w.cols);
        grad_i_self(&w, &inst.p0, inst.base, &mut g);
        worst = worst.max(rel_err(&|m| i_self(m, &inst.p0, inst.base), &g, &w));
        for s in 0..2 {
            grad_i_side(&w, &inst.side[s], inst.base, &mut g);
            worst = worst.max(rel_err(&|m| i_side(m, &inst.side[s], inst.base), &g, &w));
        }

        let w0 = interior(random_stochastic(ny0, nu0, &mut rng));
        let wi = interior(random_stochastic(nu0 * ny0, nui, &mut rng));
        let mut g0 = Mat::zeros(w0.rows, w0.cols);
        let mut gi = Mat::zeros(wi.rows, wi.cols);
        grad_i_joint_side(&w0, &wi, &inst.side[0], inst.base, &mut g0, &mut gi);
        worst = worst
            .max(rel_err(&|m| i_joint_side(m, &wi, &inst.side[0], inst.base), &g0, &w0));
        worst = worst
            .max(rel_err(&|m| i_joint_side(&w0, m, &inst.side[0], inst.base), &gi, &wi));
        grad_i_cond_rate(&w0, &wi, &inst.p0, inst.base, &mut g0, &mut gi);
        worst = worst.max(rel_err(&|m| i_cond_rate(m, &wi, &inst.p0, inst.base), &g0, &w0));
        worst = worst.max(rel_err(&|m| i_cond_rate(&w0, m, &inst.p0, inst.base), &gi, &wi));
    }
    worst
}
