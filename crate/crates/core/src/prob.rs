//! Exact finite-alphabet probability arithmetic.
//!
//! Conventions used throughout:
//!
//! - `0 * log 0 = 0` — zero-probability cells contribute nothing to entropy
//!   or mutual-information sums.
//! - Conditionals given a zero-probability conditioning value are defined as
//!   uniform rows and flagged, never silently NaN.
//! - Validation tolerance is 1e-9; user input whose total is off by at most
//!   1e-6 is renormalized with a warning record, anything worse is rejected.
//!
//! All types are immutable after construction and all operations are pure
//! functions, so values can be shared freely across threads.

use crate::base::LogBase;
use thiserror::Error;

/// Strict validation tolerance on probability sums.
pub const SUM_TOL: f64 = 1e-9;
/// User input with |sum - 1| in (SUM_TOL, RENORM_TOL] is renormalized.
pub const RENORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("negative entry {value:.3e} at flat index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("entries sum to {sum:.12} which deviates from 1 by more than {tol:.1e}")]
    SumOutOfTolerance { sum: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid joint pmf: {0}")]
    InvalidJoint(String),
}

/// Outcome note attached to a successful validation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ValidationNote {
    /// Входной total was off by more than [`SUM_TOL`] and the table was rescaled.
    pub renormalized: bool,
    /// Total of the table as supplied.
    pub original_sum: f64,
}

fn check_entries(probs: &[f64]) -> Result<f64, ProbError> {
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if p < 0.0 {
            return Err(ProbError::NegativeEntry { index: i, value: p });
        }
        sum += p;
    }
    Ok(sum)
}

fn validate_and_scale(mut probs: Vec<f64>) -> Result<(Vec<f64>, ValidationNote), ProbError> {
    let sum = check_entries(&probs)?;
    let dev = (sum - 1.0).abs();
    if dev <= SUM_TOL {
        return Ok((probs, ValidationNote { renormalized: false, original_sum: sum }));
    }
    if dev <= RENORM_TOL {
        for p in &mut probs {
            *p /= sum;
        }
        return Ok((probs, ValidationNote { renormalized: true, original_sum: sum }));
    }
    Err(ProbError::SumOutOfTolerance { sum, tol: RENORM_TOL })
}

// ---------------------------------------------------------------------------
// Pmf
// ---------------------------------------------------------------------------

/// Probability mass function on a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<(Self, ValidationNote), ProbError> {
        let (probs, note) = validate_and_scale(probs)?;
        Ok((Self { probs }, note))
    }

    /// Construct without validation; caller guarantees the invariants.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn p(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Shannon entropy in the given base.
    pub fn entropy(&self, base: LogBase) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * base.log(p))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Two- and three-variable joints
// ---------------------------------------------------------------------------

/// Joint pmf of two finite-alphabet variables, row-major `[a][b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint2 {
    na: usize,
    nb: usize,
    data: Vec<f64>,
}

impl Joint2 {
    pub fn new(na: usize, nb: usize, data: Vec<f64>) -> Result<Self, ProbError> {
        if data.len() != na * nb {
            return Err(ProbError::DimensionMismatch(format!(
                "expected {}x{}={} entries, got {}",
                na,
                nb,
                na * nb,
                data.len()
            )));
        }
        let sum = check_entries(&data)
            .map_err(|e| ProbError::InvalidJoint(e.to_string()))?;
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(ProbError::InvalidJoint(format!("total {sum} != 1")));
        }
        Ok(Self { na, nb, data })
    }

    pub(crate) fn from_raw(na: usize, nb: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), na * nb);
        Self { na, nb, data }
    }

    pub fn na(&self) -> usize {
        self.na
    }

    pub fn nb(&self) -> usize {
        self.nb
    }

    #[inline]
    pub fn p(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.nb + b]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn marginal_a(&self) -> Pmf {
        let mut m = vec![0.0; self.na];
        for a in 0..self.na {
            for b in 0..self.nb {
                m[a] += self.p(a, b);
            }
        }
        Pmf::from_raw(m)
    }

    pub fn marginal_b(&self) -> Pmf {
        let mut m = vec![0.0; self.nb];
        for a in 0..self.na {
            for b in 0..self.nb {
                m[b] += self.p(a, b);
            }
        }
        Pmf::from_raw(m)
    }

    /// I(A;B) = sum p(a,b) log p(a,b) / (p(a) p(b)).
    pub fn mutual_information(&self, base: LogBase) -> f64 {
        let pa = self.marginal_a();
        let pb = self.marginal_b();
        let mut s = 0.0;
        for a in 0..self.na {
            for b in 0..self.nb {
                let p = self.p(a, b);
                if p > 0.0 {
                    s += p * base.log(p / (pa.p(a) * pb.p(b)));
                }
            }
        }
        s.max(0.0)
    }

    /// Rows of P(B | A). Rows for zero-probability `a` are uniform; their
    /// indices are returned alongside.
    pub fn conditional_b_given_a(&self) -> (ConditionalPmf, Vec<usize>) {
        let pa = self.marginal_a();
        let mut rows = vec![0.0; self.na * self.nb];
        let mut flagged = Vec::new();
        for a in 0..self.na {
            if pa.p(a) > 0.0 {
                for b in 0..self.nb {
                    rows[a * self.nb + b] = self.p(a, b) / pa.p(a);
                }
            } else {
                flagged.push(a);
                for b in 0..self.nb {
                    rows[a * self.nb + b] = 1.0 / self.nb as f64;
                }
            }
        }
        (ConditionalPmf::from_raw(self.na, self.nb, rows), flagged)
    }

    /// Transposed joint, `[b][a]`.
    pub fn transposed(&self) -> Joint2 {
        let mut data = vec![0.0; self.data.len()];
        for a in 0..self.na {
            for b in 0..self.nb {
                data[b * self.na + a] = self.p(a, b);
            }
        }
        Joint2::from_raw(self.nb, self.na, data)
    }
}

/// Joint pmf of three variables, row-major `[a][b][c]`. The third variable is
/// the conditioning variable for [`Joint3::conditional_mutual_information`].
#[derive(Debug, Clone, PartialEq)]
pub struct Joint3 {
    na: usize,
    nb: usize,
    nc: usize,
    data: Vec<f64>,
}

impl Joint3 {
    pub fn new(na: usize, nb: usize, nc: usize, data: Vec<f64>) -> Result<Self, ProbError> {
        if data.len() != na * nb * nc {
            return Err(ProbError::DimensionMismatch(format!(
                "expected {} entries, got {}",
                na * nb * nc,
                data.len()
            )));
        }
        let sum = check_entries(&data)
            .map_err(|e| ProbError::InvalidJoint(e.to_string()))?;
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(ProbError::InvalidJoint(format!("total {sum} != 1")));
        }
        Ok(Self { na, nb, nc, data })
    }

    pub(crate) fn from_raw(na: usize, nb: usize, nc: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), na * nb * nc);
        Self { na, nb, nc, data }
    }

    #[inline]
    pub fn p(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.nb + b) * self.nc + c]
    }

    /// I(A;B|C) = sum_c p(c) I(A;B | C=c).
    pub fn conditional_mutual_information(&self, base: LogBase) -> f64 {
        // Accumulate per-c joints and marginals in place.
        let mut s = 0.0;
        for c in 0..self.nc {
            let mut pc = 0.0;
            let mut pa = vec![0.0; self.na];
            let mut pb = vec![0.0; self.nb];
            for a in 0..self.na {
                for b in 0..self.nb {
                    let p = self.p(a, b, c);
                    pc += p;
                    pa[a] += p;
                    pb[b] += p;
                }
            }
            if pc == 0.0 {
                continue;
            }
            for a in 0..self.na {
                for b in 0..self.nb {
                    let p = self.p(a, b, c);
                    if p > 0.0 {
                        // p * log [ p(a,b,c) p(c) / (p(a,c) p(b,c)) ]
                        s += p * base.log(p * pc / (pa[a] * pb[b]));
                    }
                }
            }
        }
        s.max(0.0)
    }

    /// Marginal joint of (A, B).
    pub fn marginal_ab(&self) -> Joint2 {
        let mut data = vec![0.0; self.na * self.nb];
        for a in 0..self.na {
            for b in 0..self.nb {
                for c in 0..self.nc {
                    data[a * self.nb + b] += self.p(a, b, c);
                }
            }
        }
        Joint2::from_raw(self.na, self.nb, data)
    }

    /// Marginal joint of (A, C).
    pub fn marginal_ac(&self) -> Joint2 {
        let mut data = vec![0.0; self.na * self.nc];
        for a in 0..self.na {
            for b in 0..self.nb {
                for c in 0..self.nc {
                    data[a * self.nc + c] += self.p(a, b, c);
                }
            }
        }
        Joint2::from_raw(self.na, self.nc, data)
    }

    /// Joint of A against the product variable (B,C), for chain-rule checks.
    pub fn grouped_a_bc(&self) -> Joint2 {
        let nbc = self.nb * self.nc;
        let mut data = vec![0.0; self.na * nbc];
        for a in 0..self.na {
            for b in 0..self.nb {
                for c in 0..self.nc {
                    data[a * nbc + b * self.nc + c] = self.p(a, b, c);
                }
            }
        }
        Joint2::from_raw(self.na, nbc, data)
    }
}

// ---------------------------------------------------------------------------
// Conditional pmf (channel)
// ---------------------------------------------------------------------------

/// Row-stochastic matrix: entry `[x][u]` is P(U = u | X = x).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf {
    n_in: usize,
    n_out: usize,
    rows: Vec<f64>,
}

impl ConditionalPmf {
    pub fn new(n_in: usize, n_out: usize, rows: Vec<f64>) -> Result<Self, ProbError> {
        if rows.len() != n_in * n_out {
            return Err(ProbError::DimensionMismatch(format!(
                "expected {}x{}={} entries, got {}",
                n_in,
                n_out,
                n_in * n_out,
                rows.len()
            )));
        }
        for x in 0..n_in {
            let row = &rows[x * n_out..(x + 1) * n_out];
            let sum = check_entries(row).map_err(|e| match e {
                ProbError::NegativeEntry { index, value } => ProbError::NegativeEntry {
                    index: x * n_out + index,
                    value,
                },
                other => other,
            })?;
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(ProbError::SumOutOfTolerance { sum, tol: SUM_TOL });
            }
        }
        Ok(Self { n_in, n_out, rows })
    }

    pub(crate) fn from_raw(n_in: usize, n_out: usize, rows: Vec<f64>) -> Self {
        debug_assert_eq!(rows.len(), n_in * n_out);
        Self { n_in, n_out, rows }
    }

    /// Identity-like channel; requires `n_out >= n_in`.
    pub fn identity(n_in: usize, n_out: usize) -> Self {
        assert!(n_out >= n_in);
        let mut rows = vec![0.0; n_in * n_out];
        for x in 0..n_in {
            rows[x * n_out + x] = 1.0;
        }
        Self { n_in, n_out, rows }
    }

    /// Channel that outputs symbol 0 regardless of input.
    pub fn constant(n_in: usize, n_out: usize) -> Self {
        let mut rows = vec![0.0; n_in * n_out];
        for x in 0..n_in {
            rows[x * n_out] = 1.0;
        }
        Self { n_in, n_out, rows }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    #[inline]
    pub fn p(&self, x: usize, u: usize) -> f64 {
        self.rows[x * self.n_out + u]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x * self.n_out..(x + 1) * self.n_out]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

/// Joint pmf `[x][u] = source(x) * aux(u|x)` of a source pushed through a
/// channel.
pub fn compose(aux: &ConditionalPmf, source: &Pmf) -> Result<Joint2, ProbError> {
    if aux.n_in() != source.len() {
        return Err(ProbError::DimensionMismatch(format!(
            "channel has {} input rows but source alphabet is {}",
            aux.n_in(),
            source.len()
        )));
    }
    let mut data = vec![0.0; source.len() * aux.n_out()];
    for x in 0..source.len() {
        for u in 0..aux.n_out() {
            data[x * aux.n_out() + u] = source.p(x) * aux.p(x, u);
        }
    }
    Ok(Joint2::from_raw(source.len(), aux.n_out(), data))
}

// ---------------------------------------------------------------------------
// The triple-source law
// ---------------------------------------------------------------------------

/// Joint pmf of the sensor observation `Y0` and the two center observations
/// `(Y1, Y2)`, stored row-major `[y0][y1][y2]`.
///
/// The null hypothesis draws i.i.d. samples from this law; the alternative
/// draws from the product of its `Y0` and `(Y1, Y2)` marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSourcePmf {
    n0: usize,
    n1: usize,
    n2: usize,
    table: Vec<f64>,
}

impl JointSourcePmf {
    /// Validate a raw table. Entries must be non-negative; a total off by at
    /// most 1e-6 is renormalized (reported in the note), anything worse is a
    /// [`ProbError::SumOutOfTolerance`].
    pub fn validate(
        n0: usize,
        n1: usize,
        n2: usize,
        table: Vec<f64>,
    ) -> Result<(Self, ValidationNote), ProbError> {
        if table.len() != n0 * n1 * n2 {
            return Err(ProbError::DimensionMismatch(format!(
                "expected {}x{}x{}={} entries, got {}",
                n0,
                n1,
                n2,
                n0 * n1 * n2,
                table.len()
            )));
        }
        let (table, note) = validate_and_scale(table)?;
        Ok((Self { n0, n1, n2, table }, note))
    }

    pub(crate) fn from_raw(n0: usize, n1: usize, n2: usize, table: Vec<f64>) -> Self {
        debug_assert_eq!(table.len(), n0 * n1 * n2);
        Self { n0, n1, n2, table }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n0, self.n1, self.n2)
    }

    #[inline]
    pub fn p(&self, y0: usize, y1: usize, y2: usize) -> f64 {
        self.table[(y0 * self.n1 + y1) * self.n2 + y2]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.table
    }

    pub fn marginal_y0(&self) -> Pmf {
        let mut m = vec![0.0; self.n0];
        for y0 in 0..self.n0 {
            for y1 in 0..self.n1 {
                for y2 in 0..self.n2 {
                    m[y0] += self.p(y0, y1, y2);
                }
            }
        }
        Pmf::from_raw(m)
    }

    /// Marginal joint of `(Y1, Y2)`.
    pub fn marginal_y1y2(&self) -> Joint2 {
        let mut data = vec![0.0; self.n1 * self.n2];
        for y0 in 0..self.n0 {
            for y1 in 0..self.n1 {
                for y2 in 0..self.n2 {
                    data[y1 * self.n2 + y2] += self.p(y0, y1, y2);
                }
            }
        }
        Joint2::from_raw(self.n1, self.n2, data)
    }

    /// Pairwise joint of `(Y0, Y1)`.
    pub fn pair_y0_y1(&self) -> Joint2 {
        let mut data = vec![0.0; self.n0 * self.n1];
        for y0 in 0..self.n0 {
            for y1 in 0..self.n1 {
                for y2 in 0..self.n2 {
                    data[y0 * self.n1 + y1] += self.p(y0, y1, y2);
                }
            }
        }
        Joint2::from_raw(self.n0, self.n1, data)
    }

    /// Pairwise joint of `(Y0, Y2)`.
    pub fn pair_y0_y2(&self) -> Joint2 {
        let mut data = vec![0.0; self.n0 * self.n2];
        for y0 in 0..self.n0 {
            for y1 in 0..self.n1 {
                for y2 in 0..self.n2 {
                    data[y0 * self.n2 + y2] += self.p(y0, y1, y2);
                }
            }
        }
        Joint2::from_raw(self.n0, self.n2, data)
    }

    /// Pairwise joint with the requested center observation (1 or 2).
    pub fn pair_y0_side(&self, receiver: usize) -> Joint2 {
        match receiver {
            1 => self.pair_y0_y1(),
            2 => self.pair_y0_y2(),
            r => panic!("receiver index must be 1 or 2, got {r}"),
        }
    }

    /// The null-hypothesis law: the joint itself.
    pub fn null_law(&self) -> JointSourcePmf {
        self.clone()
    }

    /// The alternative-hypothesis law `P_{Y0} x P_{Y1 Y2}`: same marginals,
    /// but the sensor observation is independent of the centers'.
    pub fn alt_law(&self) -> JointSourcePmf {
        let p0 = self.marginal_y0();
        let p12 = self.marginal_y1y2();
        let mut table = vec![0.0; self.table.len()];
        for y0 in 0..self.n0 {
            for y1 in 0..self.n1 {
                for y2 in 0..self.n2 {
                    table[(y0 * self.n1 + y1) * self.n2 + y2] = p0.p(y0) * p12.p(y1, y2);
                }
            }
        }
        JointSourcePmf::from_raw(self.n0, self.n1, self.n2, table)
    }

    /// Rows of `P(Y1, Y2 | Y0)` over the product alphabet `y1 * n2 + y2`.
    /// Zero-probability `y0` rows come out uniform, with their indices flagged.
    pub fn cond_pair_given_y0(&self) -> (ConditionalPmf, Vec<usize>) {
        let p0 = self.marginal_y0();
        let npair = self.n1 * self.n2;
        let mut rows = vec![0.0; self.n0 * npair];
        let mut flagged = Vec::new();
        for y0 in 0..self.n0 {
            if p0.p(y0) > 0.0 {
                for y1 in 0..self.n1 {
                    for y2 in 0..self.n2 {
                        rows[y0 * npair + y1 * self.n2 + y2] = self.p(y0, y1, y2) / p0.p(y0);
                    }
                }
            } else {
                flagged.push(y0);
                for k in 0..npair {
                    rows[y0 * npair + k] = 1.0 / npair as f64;
                }
            }
        }
        (ConditionalPmf::from_raw(self.n0, npair, rows), flagged)
    }

    /// View as a three-variable joint `[y0][y1][y2]`.
    pub fn as_joint3(&self) -> Joint3 {
        Joint3::from_raw(self.n0, self.n1, self.n2, self.table.clone())
    }
}
