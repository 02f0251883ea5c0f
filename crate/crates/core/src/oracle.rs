//! Brute-force verification of the optimizers on small alphabets.
//!
//! Channels are enumerated over a discretized simplex: every row of the
//! channel matrix is a composition of `1/delta` probability quanta. The
//! enumeration is streamed (no candidate list is materialized) and split
//! across workers by the first row; the reduction is an associative
//! lexicographic max, so the result does not depend on the partitioning.
//!
//! Because the grid is a subset of the feasible set, a correct gradient
//! optimizer must always report at least the oracle value; a violation means
//! its feasibility handling is broken, not that the oracle is pessimistic.

use crate::base::LogBase;
use crate::optimizer::Receiver;
use crate::prob::{Joint2, JointSourcePmf};
use rayon::prelude::*;
use thiserror::Error;

/// Default cap on the number of evaluated channels per call.
pub const DEFAULT_ENUM_CAP: u128 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration would evaluate {required} channels, above the cap {cap}")]
    BudgetExceeded { required: u128, cap: u128 },
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("rate must be non-negative, got {0}")]
    NegativeRate(f64),
}

/// Simplex discretization plus channel shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Probability quantum; `1/delta` must be integral.
    pub delta: f64,
    pub n_in: usize,
    pub n_out: usize,
}

impl GridSpec {
    pub fn new(delta: f64, n_in: usize, n_out: usize) -> Result<Self, OracleError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(OracleError::BadGrid(format!("delta {delta} not in (0, 1]")));
        }
        let steps = 1.0 / delta;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(OracleError::BadGrid(format!("1/delta = {steps} is not integral")));
        }
        if n_in == 0 || n_out == 0 {
            return Err(OracleError::BadGrid("empty alphabet".into()));
        }
        Ok(Self { delta, n_in, n_out })
    }

    pub fn steps(&self) -> usize {
        (1.0 / self.delta).round() as usize
    }

    /// Number of grid rows: compositions of `steps()` into `n_out` parts.
    pub fn rows_per_input(&self) -> u128 {
        compositions_count(self.steps(), self.n_out)
    }

    /// Total channels enumerated: `rows_per_input ^ n_in`.
    pub fn enumeration_count(&self) -> u128 {
        let per = self.rows_per_input();
        let mut total: u128 = 1;
        for _ in 0..self.n_in {
            total = total.saturating_mul(per);
        }
        total
    }
}

fn compositions_count(m: usize, k: usize) -> u128 {
    // C(m + k - 1, k - 1)
    let n = (m + k - 1) as u128;
    let r = (k - 1) as u128;
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 0..r {
        num = num.saturating_mul(n - i);
        den *= i + 1;
    }
    num / den
}

/// All compositions of `m` quanta into `k` parts, as probability rows.
fn composition_rows(m: usize, k: usize, delta: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    fn rec(out: &mut Vec<Vec<f64>>, cur: &mut Vec<usize>, pos: usize, left: usize, delta: f64) {
        if pos == cur.len() - 1 {
            cur[pos] = left;
            out.push(cur.iter().map(|&c| c as f64 * delta).collect());
            return;
        }
        for c in 0..=left {
            cur[pos] = c;
            rec(out, cur, pos + 1, left - c, delta);
        }
    }
    rec(&mut out, &mut cur, 0, m, delta);
    out
}

struct Tables {
    p0: Vec<f64>,
    side: [Joint2; 2],
    base: LogBase,
}

impl Tables {
    fn new(joint: &JointSourcePmf, base: LogBase) -> Self {
        Self {
            p0: joint.marginal_y0().as_slice().to_vec(),
            side: [joint.pair_y0_y1(), joint.pair_y0_y2()],
            base,
        }
    }
}

#[inline]
fn i_self_rows(rows: &[&[f64]], t: &Tables, n_out: usize) -> f64 {
    let mut q = vec![0.0; n_out];
    for (y, row) in rows.iter().enumerate() {
        for u in 0..n_out {
            q[u] += t.p0[y] * row[u];
        }
    }
    let mut s = 0.0;
    for (y, row) in rows.iter().enumerate() {
        for u in 0..n_out {
            if row[u] > 0.0 && q[u] > 0.0 {
                s += t.p0[y] * row[u] * t.base.log(row[u] / q[u]);
            }
        }
    }
    s.max(0.0)
}

#[inline]
fn i_side_rows(rows: &[&[f64]], t: &Tables, which: usize, n_out: usize) -> f64 {
    let side = &t.side[which];
    let nyi = side.nb();
    let mut q = vec![0.0; n_out * nyi];
    for (y0, row) in rows.iter().enumerate() {
        for u in 0..n_out {
            if row[u] == 0.0 {
                continue;
            }
            for yi in 0..nyi {
                q[u * nyi + yi] += side.p(y0, yi) * row[u];
            }
        }
    }
    let mut qu = vec![0.0; n_out];
    let mut pb = vec![0.0; nyi];
    for u in 0..n_out {
        for yi in 0..nyi {
            qu[u] += q[u * nyi + yi];
            pb[yi] += q[u * nyi + yi];
        }
    }
    let mut s = 0.0;
    for u in 0..n_out {
        for yi in 0..nyi {
            let p = q[u * nyi + yi];
            if p > 0.0 {
                s += p * t.base.log(p / (qu[u] * pb[yi]));
            }
        }
    }
    s.max(0.0)
}

/// I(U0 Ui; Yi) for layered rows: `w0[y0][u0]`, `wr[u0*ny0+y0][ui]`.
fn joint_side_rows(
    w0: &[&[f64]],
    wr: &[&[f64]],
    side: &Joint2,
    base: LogBase,
    nu0: usize,
    nui: usize,
) -> f64 {
    let ny0 = w0.len();
    let nyi = side.nb();
    let mut q = vec![0.0; nu0 * nui * nyi];
    for (y0, r0) in w0.iter().enumerate() {
        for u0 in 0..nu0 {
            let a = r0[u0];
            if a == 0.0 {
                continue;
            }
            let rr = wr[u0 * ny0 + y0];
            for ui in 0..nui {
                let v = a * rr[ui];
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
    let mut pb = vec![0.0; nyi];
    for k in 0..nu0 * nui {
        for yi in 0..nyi {
            qu[k] += q[k * nyi + yi];
            pb[yi] += q[k * nyi + yi];
        }
    }
    let mut s = 0.0;
    for k in 0..nu0 * nui {
        for yi in 0..nyi {
            let p = q[k * nyi + yi];
            if p > 0.0 {
                s += p * base.log(p / (qu[k] * pb[yi]));
            }
        }
    }
    s.max(0.0)
}

/// I(Ui; Y0 | U0) for layered rows.
fn cond_rate_rows(
    w0: &[&[f64]],
    wr: &[&[f64]],
    p0: &[f64],
    base: LogBase,
    nu0: usize,
    nui: usize,
) -> f64 {
    let ny0 = w0.len();
    let mut b = vec![0.0; nu0 * nui];
    let mut a = vec![0.0; nu0];
    for (y0, r0) in w0.iter().enumerate() {
        for u0 in 0..nu0 {
            let v = p0[y0] * r0[u0];
            if v == 0.0 {
                continue;
            }
            a[u0] += v;
            let rr = wr[u0 * ny0 + y0];
            for ui in 0..nui {
                b[u0 * nui + ui] += v * rr[ui];
            }
        }
    }
    let mut s = 0.0;
    for (y0, r0) in w0.iter().enumerate() {
        for u0 in 0..nu0 {
            let v = p0[y0] * r0[u0];
            if v == 0.0 || a[u0] == 0.0 {
                continue;
            }
            let rr = wr[u0 * ny0 + y0];
            for ui in 0..nui {
                if rr[ui] > 0.0 && b[u0 * nui + ui] > 0.0 {
                    s += v * rr[ui] * base.log(rr[ui] * a[u0] / b[u0 * nui + ui]);
                }
            }
        }
    }
    s.max(0.0)
}

/// Streamed maximization over all grid channels of a weighted pair objective
/// subject to the self-rate constraint. Returns the lexicographically best
/// `(objective, theta1, theta2)`.
fn scan(
    joint: &JointSourcePmf,
    grid: &GridSpec,
    rate: f64,
    weights: [f64; 2],
    base: LogBase,
    cap: u128,
) -> Result<(f64, f64, f64), OracleError> {
    if rate < 0.0 {
        return Err(OracleError::NegativeRate(rate));
    }
    let required = grid.enumeration_count();
    if required > cap {
        return Err(OracleError::BudgetExceeded { required, cap });
    }
    let (ny0, _, _) = joint.dims();
    if grid.n_in != ny0 {
        return Err(OracleError::BadGrid(format!(
            "grid input size {} does not match |Y0| = {}",
            grid.n_in, ny0
        )));
    }
    let t = Tables::new(joint, base);
    let rows = composition_rows(grid.steps(), grid.n_out, grid.delta);
    let n_out = grid.n_out;

    // Parallelize over the first row; stream the rest with an odometer.
    let best = (0..rows.len())
        .into_par_iter()
        .map(|first| {
            let mut idx = vec![0usize; ny0];
            idx[0] = first;
            let mut local = (f64::NEG_INFINITY, 0.0, 0.0);
            loop {
                let sel: Vec<&[f64]> = idx.iter().map(|&i| rows[i].as_slice()).collect();
                if i_self_rows(&sel, &t, n_out) <= rate + 1e-12 {
                    let th1 = if weights[0] > 0.0 || weights[1] == 0.0 {
                        i_side_rows(&sel, &t, 0, n_out)
                    } else {
                        0.0
                    };
                    let th2 = if weights[1] > 0.0 || weights[0] == 0.0 {
                        i_side_rows(&sel, &t, 1, n_out)
                    } else {
                        0.0
                    };
                    let obj = weights[0] * th1 + weights[1] * th2;
                    let cand = (obj, th1, th2);
                    if cand > local {
                        local = cand;
                    }
                }
                // advance odometer over rows 1..ny0
                let mut pos = 1;
                loop {
                    if pos >= ny0 {
                        return local;
                    }
                    idx[pos] += 1;
                    if idx[pos] < rows.len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
            }
        })
        .reduce(
            || (f64::NEG_INFINITY, 0.0, 0.0),
            |a, b| if b > a { b } else { a },
        );
    Ok(best)
}

/// Grid-exact lower bound for the single-receiver exponent at the given rate.
pub fn brute_force_eta(
    joint: &JointSourcePmf,
    receiver: Receiver,
    rate: f64,
    grid: &GridSpec,
    base: LogBase,
    cap: u128,
) -> Result<f64, OracleError> {
    let mut weights = [0.0, 0.0];
    weights[receiver.idx()] = 1.0;
    let (obj, _, _) = scan(joint, grid, rate, weights, base, cap)?;
    Ok(obj.max(0.0))
}

/// Grid-exact maximum of the weighted maximum-rate objective.
///
/// With zero individual rates this is a single-channel scan over `grid`.
/// With positive individual rates, refinement layers are enumerated over
/// `refine_grid` (input size must be `grid.n_out * |Y0|`). Given the shared
/// layer the two refinement maximizations are independent, so the cost is
/// `c0 * (c1 + c2)` candidate evaluations rather than their product.
pub fn brute_force_weighted_fixed(
    joint: &JointSourcePmf,
    rates: [f64; 3],
    lambda: f64,
    grid: &GridSpec,
    refine_grid: Option<&GridSpec>,
    base: LogBase,
    cap: u128,
) -> Result<(f64, f64), OracleError> {
    for &r in &rates {
        if r < 0.0 {
            return Err(OracleError::NegativeRate(r));
        }
    }
    if rates[1] == 0.0 && rates[2] == 0.0 {
        let (_, th1, th2) = scan(joint, grid, rates[0], [lambda, 1.0 - lambda], base, cap)?;
        return Ok((th1, th2));
    }
    let rg = refine_grid.ok_or_else(|| {
        OracleError::BadGrid("positive individual rates require a refinement grid".into())
    })?;
    let (ny0, _, _) = joint.dims();
    if grid.n_in != ny0 || rg.n_in != grid.n_out * ny0 {
        return Err(OracleError::BadGrid(format!(
            "layered shapes inconsistent: shared {}x{}, refinement input {}",
            grid.n_in, grid.n_out, rg.n_in
        )));
    }
    let c0 = grid.enumeration_count();
    let cref = rg.enumeration_count();
    let required = c0.saturating_mul(cref.saturating_mul(2).saturating_add(1));
    if required > cap {
        return Err(OracleError::BudgetExceeded { required, cap });
    }

    let t = Tables::new(joint, base);
    let rows0 = composition_rows(grid.steps(), grid.n_out, grid.delta);
    let rows_ref = composition_rows(rg.steps(), rg.n_out, rg.delta);
    let nu0 = grid.n_out;
    let nui = rg.n_out;

    let best = (0..rows0.len())
        .into_par_iter()
        .map(|first| {
            let mut idx = vec![0usize; ny0];
            idx[0] = first;
            let mut local = (f64::NEG_INFINITY, 0.0, 0.0);
            loop {
                let w0: Vec<&[f64]> = idx.iter().map(|&i| rows0[i].as_slice()).collect();
                if i_self_rows(&w0, &t, nu0) <= rates[0] + 1e-12 {
                    // Best refinement per receiver, independently.
                    let mut th = [0.0f64; 2];
                    for i in 0..2 {
                        let mut best_i = f64::NEG_INFINITY;
                        let mut ridx = vec![0usize; nu0 * ny0];
                        'refine: loop {
                            let wr: Vec<&[f64]> =
                                ridx.iter().map(|&k| rows_ref[k].as_slice()).collect();
                            if cond_rate_rows(&w0, &wr, &t.p0, base, nu0, nui)
                                <= rates[i + 1] + 1e-12
                            {
                                let v = joint_side_rows(
                                    &w0,
                                    &wr,
                                    &t.side[i],
                                    base,
                                    nu0,
                                    nui,
                                );
                                if v > best_i {
                                    best_i = v;
                                }
                            }
                            let mut pos = 0;
                            loop {
                                if pos >= ridx.len() {
                                    break 'refine;
                                }
                                ridx[pos] += 1;
                                if ridx[pos] < rows_ref.len() {
                                    break;
                                }
                                ridx[pos] = 0;
                                pos += 1;
                            }
                        }
                        // Constant refinement is always feasible, so the max
                        // is at least the shared-layer reward.
                        th[i] = best_i.max(i_side_rows(&w0, &t, i, nu0));
                    }
                    let obj = lambda * th[0] + (1.0 - lambda) * th[1];
                    let cand = (obj, th[0], th[1]);
                    if cand > local {
                        local = cand;
                    }
                }
                let mut pos = 1;
                loop {
                    if pos >= ny0 {
                        return local;
                    }
                    idx[pos] += 1;
                    if idx[pos] < rows0.len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                }
            }
        })
        .reduce(
            || (f64::NEG_INFINITY, 0.0, 0.0),
            |a, b| if b > a { b } else { a },
        );
    Ok((best.1, best.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    const BASE: LogBase = LogBase::Bits;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions_count(2, 2), 3);
        assert_eq!(compositions_count(20, 2), 21);
        assert_eq!(compositions_count(20, 4), 1771);
        let g = GridSpec::new(0.05, 2, 4).unwrap();
        assert_eq!(g.rows_per_input(), 1771);
        assert_eq!(g.enumeration_count(), 1771 * 1771);
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(GridSpec::new(0.3, 2, 2).is_err());
        assert!(GridSpec::new(0.0, 2, 2).is_err());
        assert!(GridSpec::new(1.5, 2, 2).is_err());
        assert!(GridSpec::new(1.0, 2, 2).is_ok());
    }

    #[test]
    fn zero_rate_gives_zero() {
        let joint = instances::binary_doubly_symmetric(0.1);
        let g = GridSpec::new(0.25, 2, 3).unwrap();
        let v = brute_force_eta(&joint, Receiver::One, 0.0, &g, BASE, DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn unconstrained_binary_hits_closed_form() {
        // Identity rows are on every grid, so at R >= H(Y0) the oracle finds
        // exactly I(Y0;Y1) = 1 - h_b(0.1).
        let joint = instances::binary_doubly_symmetric(0.1);
        let g = GridSpec::new(0.05, 2, 2).unwrap();
        let v = brute_force_eta(&joint, Receiver::One, 1.0, &g, BASE, DEFAULT_ENUM_CAP).unwrap();
        let want = 1.0 - instances::binary_entropy_bits(0.1);
        assert!(v <= want + 1e-12);
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn refinement_never_decreases_value() {
        let joint = instances::binary_doubly_symmetric(0.1);
        let coarse = GridSpec::new(0.1, 2, 3).unwrap();
        let fine = GridSpec::new(0.05, 2, 3).unwrap();
        for rate in [0.1, 0.3] {
            let a =
                brute_force_eta(&joint, Receiver::One, rate, &coarse, BASE, DEFAULT_ENUM_CAP)
                    .unwrap();
            let b = brute_force_eta(&joint, Receiver::One, rate, &fine, BASE, DEFAULT_ENUM_CAP)
                .unwrap();
            assert!(b + 1e-12 >= a, "halving delta decreased the oracle: {a} -> {b}");
        }
    }

    #[test]
    fn budget_cap_is_enforced() {
        let joint = instances::binary_doubly_symmetric(0.1);
        let g = GridSpec::new(0.05, 2, 4).unwrap();
        let err =
            brute_force_eta(&joint, Receiver::One, 0.1, &g, BASE, 1000).unwrap_err();
        assert!(matches!(err, OracleError::BudgetExceeded { .. }));
    }

    #[test]
    fn weighted_lambda_one_matches_eta_scan() {
        let joint = instances::binary_doubly_symmetric(0.1);
        let g = GridSpec::new(0.1, 2, 3).unwrap();
        let eta =
            brute_force_eta(&joint, Receiver::One, 0.2, &g, BASE, DEFAULT_ENUM_CAP).unwrap();
        let (th1, _) =
            brute_force_weighted_fixed(&joint, [0.2, 0.0, 0.0], 1.0, &g, None, BASE, DEFAULT_ENUM_CAP)
                .unwrap();
        assert!((th1 - eta).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_weighted_is_origin() {
        let joint = instances::binary_doubly_symmetric(0.1);
        let g = GridSpec::new(0.25, 2, 2).unwrap();
        let (a, b) =
            brute_force_weighted_fixed(&joint, [0.0, 0.0, 0.0], 0.4, &g, None, BASE, DEFAULT_ENUM_CAP)
                .unwrap();
        assert_eq!((a, b), (0.0, 0.0));
    }

    #[test]
    fn layered_oracle_brackets_sensibly() {
        let joint = instances::binary_doubly_symmetric(0.1);
        let g0 = GridSpec::new(0.25, 2, 2).unwrap();
        let gr = GridSpec::new(0.5, 4, 2).unwrap();
        let (th1, _) = brute_force_weighted_fixed(
            &joint,
            [0.25, 0.5, 0.0],
            1.0,
            &g0,
            Some(&gr),
            BASE,
            DEFAULT_ENUM_CAP,
        )
        .unwrap();
        let (base1, _) = brute_force_weighted_fixed(
            &joint,
            [0.25, 0.0, 0.0],
            1.0,
            &g0,
            None,
            BASE,
            DEFAULT_ENUM_CAP,
        )
        .unwrap();
        // An individual link can only help, and data processing still caps.
        assert!(th1 + 1e-12 >= base1);
        assert!(th1 <= 1.0 - instances::binary_entropy_bits(0.1) + 1e-12);
    }

    #[test]
    fn partitioning_is_deterministic() {
        let joint = instances::binary_doubly_symmetric(0.1);
        let g = GridSpec::new(0.1, 2, 3).unwrap();
        let a = brute_force_weighted_fixed(&joint, [0.15, 0.0, 0.0], 0.6, &g, None, BASE, DEFAULT_ENUM_CAP)
            .unwrap();
        let b = brute_force_weighted_fixed(&joint, [0.15, 0.0, 0.0], 0.6, &g, None, BASE, DEFAULT_ENUM_CAP)
            .unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
}
