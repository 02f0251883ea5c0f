//! Canonical problem instances shipped with the tool, plus random-instance
//! generators used by validation suites.

use crate::prob::{JointSourcePmf, ValidationNote};
use rand::Rng;

/// The ternary demo instance: |Y0| = 3, |Y1| = |Y2| = 2.
///
/// Used as the reference instance for the region regression data bundled with
/// the acceptance suite.
pub fn ternary_example() -> (JointSourcePmf, ValidationNote) {
    #[rustfmt::skip]
    let table = vec![
        // y0 = 0: (y1,y2) = (0,0) (0,1) (1,0) (1,1)
        0.05, 0.05, 0.15, 0.083325,
        // y0 = 1
        0.05, 0.15, 0.05, 0.08335,
        // y0 = 2
        0.15, 0.05, 0.05, 0.083325,
    ];
    JointSourcePmf::validate(3, 2, 2, table).expect("built-in instance is valid")
}

/// Binary doubly-symmetric validation instance: `Y0` uniform on {0,1}, and
/// each `Yi` observes `Y0` through an independent binary symmetric channel
/// with the given crossover probability.
pub fn binary_doubly_symmetric(crossover: f64) -> JointSourcePmf {
    assert!((0.0..=0.5).contains(&crossover));
    let q = crossover;
    let mut table = vec![0.0; 8];
    for y0 in 0..2usize {
        for y1 in 0..2usize {
            for y2 in 0..2usize {
                let f1 = if y1 == y0 { 1.0 - q } else { q };
                let f2 = if y2 == y0 { 1.0 - q } else { q };
                table[(y0 * 2 + y1) * 2 + y2] = 0.5 * f1 * f2;
            }
        }
    }
    JointSourcePmf::validate(2, 2, 2, table).expect("valid by construction").0
}

/// Random strictly-positive joint with the given alphabet sizes.
/// Entries are i.i.d. Exp(1) normalized, which keeps all cells bounded away
/// from zero with high probability.
pub fn random_joint<R: Rng>(n0: usize, n1: usize, n2: usize, rng: &mut R) -> JointSourcePmf {
    let n = n0 * n1 * n2;
    let mut table: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>();
            -(1.0 - u).ln()
        })
        .collect();
    let sum: f64 = table.iter().sum();
    table.iter_mut().for_each(|x| *x /= sum);
    JointSourcePmf::validate(n0, n1, n2, table).expect("normalized table").0
}

/// Binary entropy function in bits.
pub fn binary_entropy_bits(q: f64) -> f64 {
    let mut h = 0.0;
    for p in [q, 1.0 - q] {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}
