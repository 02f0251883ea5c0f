//! Letter-count typicality boxes and exact lazy codebook realization.
//!
//! Joint typicality of a codeword with a context sequence is a per-cell
//! constraint on the joint letter counts: for every (context class, letter)
//! cell, `|N/n - P| <= mu`, and cells with `P = 0` must not occur. Because
//! codeword letters are i.i.d. given the context class, the probability that
//! a fresh codeword is jointly typical factorizes over classes, and within a
//! class it is a multinomial box probability. Both the probability and exact
//! conditional samples are obtained from a per-class dynamic program over
//! letters, built once per configuration:
//!
//! `G[j][s] = sum over in-box counts (N_1..N_j) with sum s of prod q_i^{N_i} / N_i!`
//!
//! gives `P(box | class size m) = m! * G[k][m]`, and backward sampling over
//! the same table draws count vectors exactly from the conditional law.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

const NEG_INF: f64 = f64::NEG_INFINITY;

/// ln-domain addition: ln(e^a + e^b).
#[inline]
fn ln_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Reusable buffers for [`TypicalityBox::sample_conditional_into`].
#[derive(Debug, Default)]
pub struct BoxScratch {
    counts: Vec<u32>,
    letter_counts: Vec<u32>,
    weights: Vec<f64>,
    offsets: Vec<u32>,
    positions: Vec<u32>,
    cursor: Vec<u32>,
}

/// Per-cell count bounds plus the codeword letter law per context class.
#[derive(Debug, Clone)]
pub struct TypicalityBox {
    n: usize,
    n_classes: usize,
    n_letters: usize,
    lo: Vec<u32>,
    hi: Vec<u32>,
    /// Codeword letter law per class (class-major).
    gen: Vec<f64>,
    /// ln q for the DP (NEG_INF at zero cells).
    ln_gen: Vec<f64>,
    /// ln-factorials 0..=n.
    ln_fact: Vec<f64>,
    /// Per class: DP table `lnG[j][s]`, row-major over j in 0..=n_letters.
    ln_g: Vec<Vec<f64>>,
}

impl TypicalityBox {
    /// `target[c][u]` is the nominal joint pmf of (class, letter); `gen[c][u]`
    /// is the law codeword letters are drawn from in class `c`.
    pub fn new(
        n: usize,
        n_classes: usize,
        n_letters: usize,
        target: &[f64],
        gen: &[f64],
        mu: f64,
    ) -> Self {
        assert_eq!(target.len(), n_classes * n_letters);
        assert_eq!(gen.len(), n_classes * n_letters);
        let nf = n as f64;
        let mut lo = vec![0u32; target.len()];
        let mut hi = vec![0u32; target.len()];
        for (k, &t) in target.iter().enumerate() {
            if t == 0.0 {
                lo[k] = 0;
                hi[k] = 0;
            } else {
                // 1e-9 absorbs float noise when n (t +/- mu) is meant to be
                // a whole number
                lo[k] = (nf * (t - mu) - 1e-9).ceil().max(0.0) as u32;
                hi[k] = (nf * (t + mu) + 1e-9).floor().min(nf) as u32;
            }
        }
        let ln_gen: Vec<f64> =
            gen.iter().map(|&q| if q > 0.0 { q.ln() } else { NEG_INF }).collect();
        let mut ln_fact = vec![0.0f64; n + 1];
        for i in 1..=n {
            ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
        }
        let mut ln_g = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            // DP over letters; G[j][s] in ln-domain, flattened (n_letters+1) x (n+1).
            let mut g = vec![NEG_INF; (n_letters + 1) * (n + 1)];
            g[0] = 0.0; // j = 0, s = 0
            for j in 0..n_letters {
                let cell = c * n_letters + j;
                let (l, h) = (lo[cell] as usize, hi[cell] as usize);
                let lq = ln_gen[cell];
                for s in 0..=n {
                    let prev = g[j * (n + 1) + s];
                    if prev == NEG_INF {
                        continue;
                    }
                    for m in l..=h.min(n - s) {
                        if m > 0 && lq == NEG_INF {
                            break;
                        }
                        let w = prev + m as f64 * if m > 0 { lq } else { 0.0 } - ln_fact[m];
                        let dst = &mut g[(j + 1) * (n + 1) + s + m];
                        *dst = ln_add(*dst, w);
                    }
                }
            }
            ln_g.push(g);
        }
        Self {
            n,
            n_classes,
            n_letters,
            lo,
            hi,
            gen: gen.to_vec(),
            ln_gen,
            ln_fact,
            ln_g,
        }
    }

    pub fn n_letters(&self) -> usize {
        self.n_letters
    }

    /// Exact check of a realized (context, codeword) pair.
    pub fn check(&self, classes: &[u16], letters: &[u8]) -> bool {
        debug_assert_eq!(classes.len(), self.n);
        debug_assert_eq!(letters.len(), self.n);
        let mut counts = vec![0u32; self.n_classes * self.n_letters];
        for (&c, &u) in classes.iter().zip(letters) {
            counts[c as usize * self.n_letters + u as usize] += 1;
        }
        counts
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&n, (&l, &h))| n >= l && n <= h)
    }

    /// ln P(a fresh codeword is jointly typical | class counts).
    pub fn ln_success_prob(&self, class_counts: &[u32]) -> f64 {
        debug_assert_eq!(class_counts.len(), self.n_classes);
        let mut total = 0.0;
        for (c, &m) in class_counts.iter().enumerate() {
            let m = m as usize;
            let g = self.ln_g[c][self.n_letters * (self.n + 1) + m];
            if g == NEG_INF {
                return NEG_INF;
            }
            total += self.ln_fact[m] + g;
        }
        total
    }

    /// Draw a codeword from the conditional law "i.i.d. letters given jointly
    /// typical with the context". `classes` drives both the per-class count
    /// sampling and the letter placement.
    pub fn sample_conditional(&self, classes: &[u16], rng: &mut ChaCha8Rng) -> Vec<u8> {
        let mut out = vec![0u8; self.n];
        let mut scratch = BoxScratch::default();
        self.sample_conditional_into(classes, rng, &mut out, &mut scratch);
        out
    }

    /// Allocation-free variant of [`TypicalityBox::sample_conditional`].
    pub fn sample_conditional_into(
        &self,
        classes: &[u16],
        rng: &mut ChaCha8Rng,
        out: &mut [u8],
        scratch: &mut BoxScratch,
    ) {
        debug_assert_eq!(out.len(), self.n);
        let counts = &mut scratch.counts;
        counts.clear();
        counts.resize(self.n_classes, 0);
        for &c in classes {
            counts[c as usize] += 1;
        }
        // Per class: backward-sample the letter counts from the DP table.
        let letter_counts = &mut scratch.letter_counts;
        letter_counts.clear();
        letter_counts.resize(self.n_classes * self.n_letters, 0);
        for c in 0..self.n_classes {
            let mut s = counts[c] as usize;
            if s == 0 {
                continue;
            }
            let g = &self.ln_g[c];
            for j in (1..=self.n_letters).rev() {
                let cell = c * self.n_letters + (j - 1);
                let (l, h) = (self.lo[cell] as usize, self.hi[cell] as usize);
                if j == 1 {
                    // first letter takes the remainder
                    letter_counts[cell] = s as u32;
                    debug_assert!(s >= l && s <= h);
                    s = 0;
                    continue;
                }
                let lq = self.ln_gen[cell];
                let top = h.min(s);
                if l >= top {
                    letter_counts[cell] = l as u32;
                    s -= l;
                    continue;
                }
                // weights w(m) = q^m/m! * G[j-1][s-m]
                let mut wmax = NEG_INF;
                let ws = &mut scratch.weights;
                ws.clear();
                for m in l..=top {
                    let w = if m > 0 && lq == NEG_INF {
                        NEG_INF
                    } else {
                        g[(j - 1) * (self.n + 1) + (s - m)] + m as f64 * if m > 0 { lq } else { 0.0 }
                            - self.ln_fact[m]
                    };
                    if w > wmax {
                        wmax = w;
                    }
                    ws.push(w);
                }
                let chosen = if wmax == NEG_INF {
                    l
                } else {
                    let mut total = 0.0;
                    for w in ws.iter_mut() {
                        *w = (*w - wmax).exp();
                        total += *w;
                    }
                    let mut r = rng.random::<f64>() * total;
                    let mut pick = ws.len() - 1;
                    for (k, &v) in ws.iter().enumerate() {
                        if r < v {
                            pick = k;
                            break;
                        }
                        r -= v;
                    }
                    l + pick
                };
                letter_counts[cell] = chosen as u32;
                s -= chosen;
            }
            debug_assert_eq!(s, 0);
        }
        // Place letters as a uniformly random arrangement of each class's
        // multiset. Classes whose letters are all identical need no shuffle.
        let offsets = &mut scratch.offsets;
        offsets.clear();
        offsets.resize(self.n_classes + 1, 0);
        for &c in classes {
            offsets[c as usize + 1] += 1;
        }
        for c in 0..self.n_classes {
            offsets[c + 1] += offsets[c];
        }
        let positions = &mut scratch.positions;
        positions.clear();
        positions.resize(self.n, 0);
        {
            let cursor = &mut scratch.cursor;
            cursor.clear();
            cursor.extend_from_slice(&offsets[..self.n_classes]);
            for (t, &c) in classes.iter().enumerate() {
                positions[cursor[c as usize] as usize] = t as u32;
                cursor[c as usize] += 1;
            }
        }
        for c in 0..self.n_classes {
            let (start, end) = (offsets[c] as usize, offsets[c + 1] as usize);
            if start == end {
                continue;
            }
            let nonzero = (0..self.n_letters)
                .filter(|&u| letter_counts[c * self.n_letters + u] > 0)
                .count();
            let slot = &mut positions[start..end];
            if nonzero > 1 {
                for k in (1..slot.len()).rev() {
                    let j = rng.random_range(0..=k);
                    slot.swap(k, j);
                }
            }
            let mut at = 0usize;
            for u in 0..self.n_letters {
                for _ in 0..letter_counts[c * self.n_letters + u] {
                    out[slot[at] as usize] = u as u8;
                    at += 1;
                }
            }
        }
    }

    /// Letter law of class `c` (used to generate unconditioned codewords).
    pub fn gen_row(&self, c: usize) -> &[f64] {
        &self.gen[c * self.n_letters..(c + 1) * self.n_letters]
    }
}

/// Codebook sizing: `size = ceil(base^(n (rate + mu)))` expressed through its
/// base-2 logarithm, with an integer snap that absorbs float noise when the
/// exponent is meant to be whole.
#[derive(Debug, Clone, Copy)]
pub struct BookShape {
    pub log2_size: f64,
    pub width_bits: u32,
}

pub fn snap_log2(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x
    }
}

impl BookShape {
    pub fn new(n: usize, rate: f64, mu: f64, bits_factor: f64) -> Self {
        let log2_size = snap_log2((n as f64) * (rate + mu) * bits_factor).max(0.0);
        let width_bits = log2_size.ceil() as u32;
        Self { log2_size, width_bits }
    }

    /// Whole size when small enough to materialize.
    pub fn small_size(&self, max_log2: f64) -> Option<u64> {
        if self.log2_size <= max_log2 {
            Some(self.log2_size.exp2().ceil() as u64)
        } else {
            None
        }
    }
}
