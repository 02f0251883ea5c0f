//! Trial engine: nominal tables, per-block encoding, per-center decisions.

use super::codebook::{BookShape, TypicalityBox};
use super::{BranchChannels, DecisionStatistic, Label, SchemeConfig, SchemeRates, SimError};
use crate::optimizer::derive_seed;
use crate::prob::JointSourcePmf;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Books at or below this log2-size are materialized and scanned; larger
/// books are realized lazily through exact conditional sampling.
const MATERIALIZE_MAX_LOG2: f64 = 14.0;

pub(crate) struct RefineTables {
    bx: TypicalityBox,
    book: BookShape,
    small_size: Option<u64>,
    nui: usize,
    pub rate: f64,
}

pub(crate) struct DecideTables {
    with_refinement: bool,
    bx: TypicalityBox,
    llr: Vec<f64>,
    threshold: f64,
    nyi: usize,
}

pub(crate) struct BranchTables {
    enc_box: TypicalityBox,
    book0: BookShape,
    book0_small: Option<u64>,
    book0_words: Option<Vec<u8>>,
    q0_cum: Vec<f64>,
    nu0: usize,
    pub rate0: f64,
    refine: [Option<RefineTables>; 2],
    decide: [Option<DecideTables>; 2],
}

pub(crate) struct Tables {
    pub n: usize,
    ny0: usize,
    n1: usize,
    n2: usize,
    /// Cumulative joint law over cells `(y0 n1 + y1) n2 + y2`, null hypothesis.
    h0_cum: Vec<f64>,
    /// Same cells under the alternative (product) law.
    h1_cum: Vec<f64>,
    pub branches: [Option<BranchTables>; 3],
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    row.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

#[inline]
fn sample_from_cum(cum: &[f64], r: f64) -> usize {
    for (k, &c) in cum.iter().enumerate() {
        if r < c {
            return k;
        }
    }
    cum.len() - 1
}

impl Tables {
    pub fn build(joint: &JointSourcePmf, config: &SchemeConfig) -> Result<Tables, SimError> {
        let (ny0, n1, n2) = joint.dims();
        let h0_cum = cumulative(joint.as_slice());
        let h1_cum = cumulative(joint.alt_law().as_slice());

        let n = config.n;
        let bits_factor = config.base.to_bits_factor();
        let sides = [joint.pair_y0_y1(), joint.pair_y0_y2()];

        let mut branches: [Option<BranchTables>; 3] = [None, None, None];
        for (j, chans) in config.branches.iter().enumerate() {
            let Some(chans) = chans else { continue };
            branches[j] = Some(Self::build_branch(
                joint, config, chans, &sides, n, bits_factor, j,
            )?);
        }
        Ok(Tables {
            n,
            ny0,
            n1,
            n2,
            h0_cum,
            h1_cum,
            branches,
        })
    }

    fn build_branch(
        joint: &JointSourcePmf,
        config: &SchemeConfig,
        chans: &BranchChannels,
        sides: &[crate::prob::Joint2; 2],
        n: usize,
        bits_factor: f64,
        branch_id: usize,
    ) -> Result<BranchTables, SimError> {
        let base = config.base;
        let (ny0, _, _) = joint.dims();
        let p0 = joint.marginal_y0();
        let w0 = &chans.u0;
        let nu0 = w0.n_out();

        // First-layer target P(y0, u0), generator = output marginal q(u0).
        let mut target0 = vec![0.0; ny0 * nu0];
        let mut q0 = vec![0.0; nu0];
        for y in 0..ny0 {
            for u in 0..nu0 {
                let v = p0.p(y) * w0.p(y, u);
                target0[y * nu0 + u] = v;
                q0[u] += v;
            }
        }
        let gen0: Vec<f64> = (0..ny0).flat_map(|_| q0.iter().copied()).collect();
        let enc_box = TypicalityBox::new(n, ny0, nu0, &target0, &gen0, config.mu);
        let rate0 = {
            let mut s = 0.0;
            for y in 0..ny0 {
                for u in 0..nu0 {
                    let v = target0[y * nu0 + u];
                    if v > 0.0 && q0[u] > 0.0 && p0.p(y) > 0.0 {
                        s += v * base.log(v / (p0.p(y) * q0[u]));
                    }
                }
            }
            s.max(0.0)
        };
        let book0 = BookShape::new(n, rate0, config.mu, bits_factor);
        let book0_small = book0.small_size(MATERIALIZE_MAX_LOG2);
        let book0_words = book0_small.map(|size| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 101 + branch_id as u64));
            let q0_cum = cumulative(&q0);
            let mut words = vec![0u8; size as usize * n];
            for w in words.iter_mut() {
                *w = sample_from_cum(&q0_cum, rng.random::<f64>()) as u8;
            }
            words
        });

        // Refinement layers.
        let mut refine: [Option<RefineTables>; 2] = [None, None];
        for (i, layer) in [&chans.u1, &chans.u2].into_iter().enumerate() {
            let Some(wi) = layer else { continue };
            let nui = wi.n_out();
            let n_ctx = nu0 * ny0;
            // target P(u0, y0, ui) over classes (u0, y0); generator P(ui|u0).
            let mut target = vec![0.0; n_ctx * nui];
            let mut pu0 = vec![0.0; nu0];
            let mut pu0ui = vec![0.0; nu0 * nui];
            for y in 0..ny0 {
                for u0 in 0..nu0 {
                    let base_mass = p0.p(y) * w0.p(y, u0);
                    pu0[u0] += base_mass;
                    for ui in 0..nui {
                        let v = base_mass * wi.p(u0 * ny0 + y, ui);
                        target[(u0 * ny0 + y) * nui + ui] = v;
                        pu0ui[u0 * nui + ui] += v;
                    }
                }
            }
            let mut gen = vec![0.0; n_ctx * nui];
            for u0 in 0..nu0 {
                for y in 0..ny0 {
                    for ui in 0..nui {
                        gen[(u0 * ny0 + y) * nui + ui] = if pu0[u0] > 0.0 {
                            pu0ui[u0 * nui + ui] / pu0[u0]
                        } else {
                            1.0 / nui as f64
                        };
                    }
                }
            }
            let bx = TypicalityBox::new(n, n_ctx, nui, &target, &gen, config.mu);
            // I(Ui; Y0 | U0)
            let mut rate = 0.0;
            for y in 0..ny0 {
                for u0 in 0..nu0 {
                    for ui in 0..nui {
                        let v = target[(u0 * ny0 + y) * nui + ui];
                        let m = if pu0[u0] > 0.0 {
                            pu0ui[u0 * nui + ui] / pu0[u0]
                        } else {
                            0.0
                        };
                        let w = wi.p(u0 * ny0 + y, ui);
                        if v > 0.0 && m > 0.0 && w > 0.0 {
                            rate += v * base.log(w / m);
                        }
                    }
                }
            }
            let book = BookShape::new(n, rate.max(0.0), config.mu, bits_factor);
            refine[i] = Some(RefineTables {
                bx,
                book,
                small_size: book.small_size(MATERIALIZE_MAX_LOG2),
                nui,
                rate: rate.max(0.0),
            });
        }

        // Decision statistics per served center.
        let mut decide: [Option<DecideTables>; 2] = [None, None];
        for i in 0..2 {
            let serves = branch_id == 0 || branch_id == i + 1;
            if !serves {
                continue;
            }
            let side = &sides[i];
            let nyi = side.nb();
            let (n_ctx, with_refinement, nui) = match &refine[i] {
                Some(r) => (nu0 * r.nui, true, r.nui),
                None => (nu0, false, 1),
            };
            // nominal joint q(ctx, yi)
            let mut q = vec![0.0; n_ctx * nyi];
            for y0 in 0..ny0 {
                for u0 in 0..nu0 {
                    let a = w0.p(y0, u0);
                    if a == 0.0 {
                        continue;
                    }
                    if with_refinement {
                        let wi = [&chans.u1, &chans.u2][i].as_ref().unwrap();
                        for ui in 0..nui {
                            let v = a * wi.p(u0 * ny0 + y0, ui);
                            if v == 0.0 {
                                continue;
                            }
                            for yi in 0..nyi {
                                q[(u0 * nui + ui) * nyi + yi] += side.p(y0, yi) * v;
                            }
                        }
                    } else {
                        for yi in 0..nyi {
                            q[u0 * nyi + yi] += side.p(y0, yi) * a;
                        }
                    }
                }
            }
            let mut qctx = vec![0.0; n_ctx];
            let mut pyi = vec![0.0; nyi];
            for c in 0..n_ctx {
                for yi in 0..nyi {
                    qctx[c] += q[c * nyi + yi];
                    pyi[yi] += q[c * nyi + yi];
                }
            }
            let mut i_nominal = 0.0;
            for c in 0..n_ctx {
                for yi in 0..nyi {
                    let v = q[c * nyi + yi];
                    if v > 0.0 {
                        i_nominal += v * base.log(v / (qctx[c] * pyi[yi]));
                    }
                }
            }
            let llr: Vec<f64> = (0..n_ctx * nyi)
                .map(|k| {
                    let c = k / nyi;
                    let yi = k % nyi;
                    if q[k] > 0.0 && qctx[c] > 0.0 {
                        base.log(q[k] / qctx[c]) - base.log(pyi[yi])
                    } else {
                        -1e100
                    }
                })
                .collect();
            // generator argument is unused for check-only boxes; pass the
            // conditional itself
            let gen: Vec<f64> = (0..n_ctx * nyi)
                .map(|k| {
                    let c = k / nyi;
                    if qctx[c] > 0.0 {
                        q[k] / qctx[c]
                    } else {
                        1.0 / nyi as f64
                    }
                })
                .collect();
            let bx = TypicalityBox::new(n, n_ctx, nyi, &q, &gen, config.mu);
            decide[i] = Some(DecideTables {
                with_refinement,
                bx,
                llr,
                threshold: n as f64 * (i_nominal - config.mu),
                nyi,
            });
        }

        Ok(BranchTables {
            enc_box,
            book0,
            book0_small,
            book0_words,
            q0_cum: cumulative(&q0),
            nu0,
            rate0,
            refine,
            decide,
        })
    }

    pub fn rates(&self) -> SchemeRates {
        let mut r = SchemeRates {
            first_layer_rate: [None, None, None],
            refinement_rate: [[None, None, None], [None, None, None]],
            common_width_bits: [None, None, None],
            individual_width_bits: [[None, None, None], [None, None, None]],
            weighted_budget: [0.0; 3],
        };
        for (j, b) in self.branches.iter().enumerate() {
            if let Some(b) = b {
                r.first_layer_rate[j] = Some(b.rate0);
                r.common_width_bits[j] = Some(b.book0.width_bits);
                for i in 0..2 {
                    if let Some(rf) = &b.refine[i] {
                        r.refinement_rate[i][j] = Some(rf.rate);
                        r.individual_width_bits[i][j] = Some(rf.book.width_bits);
                    }
                }
            }
        }
        r
    }
}

// ---------------------------------------------------------------------------
// Per-trial state
// ---------------------------------------------------------------------------

/// Integer accumulators; merging is order-independent, so parallel runs are
/// bit-reproducible.
pub(crate) struct Accum {
    pub alarms: [usize; 2],
    pub len_sum: [u128; 3],
    pub label_counts: [usize; 4],
    pub not_found: usize,
    pub length_ok: bool,
    scratch: Scratch,
    enc: Encoded,
}

impl Default for Accum {
    fn default() -> Self {
        Self {
            alarms: [0; 2],
            len_sum: [0; 3],
            label_counts: [0; 4],
            not_found: 0,
            length_ok: true,
            scratch: Scratch::default(),
            enc: Encoded::default(),
        }
    }
}

impl Accum {
    pub fn merge(mut a: Accum, b: Accum) -> Accum {
        for i in 0..2 {
            a.alarms[i] += b.alarms[i];
        }
        for i in 0..3 {
            a.len_sum[i] += b.len_sum[i];
        }
        for i in 0..4 {
            a.label_counts[i] += b.label_counts[i];
        }
        a.not_found += b.not_found;
        a.length_ok &= b.length_ok;
        a
    }
}

#[derive(Default)]
pub(crate) struct Scratch {
    y0: Vec<u8>,
    y1: Vec<u8>,
    y2: Vec<u8>,
    classes: Vec<u16>,
    counts: Vec<u32>,
    box_scratch: super::codebook::BoxScratch,
}

/// Outcome of encoding one block. Buffers are reused across trials; the
/// `u0_found` / `ur_found` flags say whether they hold a codeword.
#[derive(Default)]
pub(crate) struct Encoded {
    pub label: Label,
    pub u0_buf: Vec<u8>,
    pub u0_index: u128,
    pub u0_found: bool,
    pub ur_buf: [Vec<u8>; 2],
    pub ur_index: [u128; 2],
    pub ur_found: [bool; 2],
    /// Message lengths in bits `[M0, M1, M2]`.
    pub len_bits: [u32; 3],
}


fn reserved_index(width: u32) -> u128 {
    if width == 0 {
        0
    } else if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// Search a book for the first typical codeword, writing it into `out`.
/// Returns the index when found.
#[allow(clippy::too_many_arguments)]
fn find_codeword(
    bx: &TypicalityBox,
    shape: &BookShape,
    small: Option<u64>,
    materialized: Option<&[u8]>,
    classes: &[u16],
    counts: &[u32],
    n: usize,
    rng: &mut ChaCha8Rng,
    gen_word: &mut dyn FnMut(&mut ChaCha8Rng, &mut [u8]),
    out: &mut Vec<u8>,
    box_scratch: &mut super::codebook::BoxScratch,
) -> Option<u128> {
    let width = shape.width_bits;
    out.clear();
    out.resize(n, 0);
    if width == 0 {
        // Single-codeword book: no failure signaling; always "found".
        match materialized {
            Some(words) => out.copy_from_slice(&words[..n]),
            None => gen_word(rng, out),
        }
        return Some(0);
    }
    let reserved = reserved_index(width);
    match small {
        Some(size) => {
            let usable = (size as u128).min(reserved);
            match materialized {
                Some(words) => {
                    for k in 0..usable {
                        let w = &words[(k as usize) * n..(k as usize + 1) * n];
                        if bx.check(classes, w) {
                            out.copy_from_slice(w);
                            return Some(k);
                        }
                    }
                    None
                }
                None => {
                    // Small refinement books are generated on demand.
                    for k in 0..usable {
                        gen_word(rng, out);
                        if bx.check(classes, out) {
                            return Some(k);
                        }
                    }
                    None
                }
            }
        }
        None => {
            // Lazy path: exact geometric index plus conditional codeword.
            let ln_p = bx.ln_success_prob(counts);
            if ln_p == f64::NEG_INFINITY {
                return None;
            }
            let ln_size = shape.log2_size * std::f64::consts::LN_2;
            let a = (ln_p + ln_size).exp();
            let p_found = -(-a).exp_m1();
            let v: f64 = rng.random();
            if v >= p_found {
                return None;
            }
            let p = ln_p.exp();
            let ln_1mp = (-p).ln_1p();
            let x = (-(v * p_found)).ln_1p();
            let k = (x / ln_1mp).ceil().max(1.0);
            // float->int casts saturate, so huge k values clamp cleanly
            let index = (k as u128).saturating_sub(1).min(reserved - 1);
            bx.sample_conditional_into(classes, rng, out, box_scratch);
            Some(index)
        }
    }
}

/// Encode one source block under the given branch tables into `enc`.
pub(crate) fn encode_block(
    tables: &Tables,
    config: &SchemeConfig,
    y0_block: &[u8],
    enc: &mut Encoded,
    scratch: &mut Scratch,
    rng: &mut ChaCha8Rng,
) {
    let n = tables.n;
    enc.label = super::assign_partition(y0_block, &config.sigma, config.seed);
    enc.u0_found = false;
    enc.ur_found = [false, false];
    enc.u0_index = 0;
    enc.ur_index = [0, 0];
    enc.len_bits = [2, 0, 0];
    let Some(j) = enc.label.branch() else {
        return;
    };
    let bt = tables.branches[j].as_ref().expect("validated branch");

    // First layer.
    scratch.classes.clear();
    scratch.classes.extend(y0_block.iter().map(|&b| b as u16));
    scratch.counts.clear();
    scratch.counts.resize(tables.ny0, 0);
    for &c in &scratch.classes {
        scratch.counts[c as usize] += 1;
    }
    let q0_cum = &bt.q0_cum;
    let mut gen_word = |rng: &mut ChaCha8Rng, out: &mut [u8]| {
        for v in out.iter_mut() {
            *v = sample_from_cum(q0_cum, rng.random::<f64>()) as u8;
        }
    };
    let found0 = find_codeword(
        &bt.enc_box,
        &bt.book0,
        bt.book0_small,
        bt.book0_words.as_deref(),
        &scratch.classes,
        &scratch.counts,
        n,
        rng,
        &mut gen_word,
        &mut enc.u0_buf,
        &mut scratch.box_scratch,
    );
    enc.len_bits[0] = 2 + bt.book0.width_bits;
    match found0 {
        Some(idx) => {
            enc.u0_index = idx;
            enc.u0_found = true;
        }
        None => {
            enc.u0_index = reserved_index(bt.book0.width_bits);
        }
    }

    // Refinement layers for served centers.
    for i in 0..2 {
        let Some(rf) = &bt.refine[i] else { continue };
        enc.len_bits[i + 1] = rf.book.width_bits;
        if !enc.u0_found {
            enc.ur_index[i] = reserved_index(rf.book.width_bits);
            continue;
        }
        scratch.classes.clear();
        scratch.classes.extend(
            enc.u0_buf
                .iter()
                .zip(y0_block)
                .map(|(&u, &y)| u as u16 * tables.ny0 as u16 + y as u16),
        );
        scratch.counts.clear();
        scratch.counts.resize(bt.nu0 * tables.ny0, 0);
        for &c in &scratch.classes {
            scratch.counts[c as usize] += 1;
        }
        let sub_seed = derive_seed(
            config.seed,
            (201 + j as u64 * 2 + i as u64) ^ (enc.u0_index as u64) ^ ((enc.u0_index >> 64) as u64),
        );
        let mut sub_rng = ChaCha8Rng::seed_from_u64(sub_seed);
        let bx = &rf.bx;
        let classes = &scratch.classes;
        let mut gen_word = |r: &mut ChaCha8Rng, out: &mut [u8]| {
            for (v, &c) in out.iter_mut().zip(classes.iter()) {
                let row = bx.gen_row(c as usize);
                let mut acc = 0.0;
                let x: f64 = r.random();
                let mut pick = row.len() - 1;
                for (k, &p) in row.iter().enumerate() {
                    acc += p;
                    if x < acc {
                        pick = k;
                        break;
                    }
                }
                *v = pick as u8;
            }
        };
        let (a, b) = enc.ur_buf.split_at_mut(1);
        let buf = if i == 0 { &mut a[0] } else { &mut b[0] };
        let found = find_codeword(
            bx,
            &rf.book,
            rf.small_size,
            None,
            &scratch.classes,
            &scratch.counts,
            n,
            &mut sub_rng,
            &mut gen_word,
            buf,
            &mut scratch.box_scratch,
        );
        match found {
            Some(idx) => {
                enc.ur_index[i] = idx;
                enc.ur_found[i] = true;
            }
            None => {
                enc.ur_index[i] = reserved_index(rf.book.width_bits);
            }
        }
    }
}

/// Center `i` decision given the encoded trial. Returns true when the center
/// alarms (guesses the alternative).
pub(crate) fn decide_center(
    tables: &Tables,
    config: &SchemeConfig,
    i: usize,
    yi_block: &[u8],
    enc: &Encoded,
    scratch_classes: &mut Vec<u16>,
) -> bool {
    let j = match (enc.label, i) {
        (Label::Skip, _) => return true,
        (Label::Only1, 1) => return true,
        (Label::Only2, 0) => return true,
        (Label::Shared0, _) => 0,
        (Label::Only1, _) => 1,
        (Label::Only2, _) => 2,
    };
    if !enc.u0_found {
        return true;
    }
    let bt = tables.branches[j].as_ref().expect("validated branch");
    let dt = bt.decide[i].as_ref().expect("serving branch has tables");
    let u0w = &enc.u0_buf;
    if dt.with_refinement && !enc.ur_found[i] {
        return true;
    }
    match config.statistic {
        DecisionStatistic::LlrThreshold => {
            // fused log-likelihood sum, no context materialization
            let mut s = 0.0;
            if dt.with_refinement {
                let nui = bt.refine[i].as_ref().unwrap().nui;
                let urw = &enc.ur_buf[i];
                for ((&a, &b), &y) in u0w.iter().zip(urw).zip(yi_block) {
                    s += dt.llr[(a as usize * nui + b as usize) * dt.nyi + y as usize];
                }
            } else {
                for (&a, &y) in u0w.iter().zip(yi_block) {
                    s += dt.llr[a as usize * dt.nyi + y as usize];
                }
            }
            s < dt.threshold
        }
        DecisionStatistic::LetterTypicality => {
            scratch_classes.clear();
            if dt.with_refinement {
                let nui = bt.refine[i].as_ref().unwrap().nui;
                scratch_classes.extend(
                    u0w.iter()
                        .zip(&enc.ur_buf[i])
                        .map(|(&a, &b)| a as u16 * nui as u16 + b as u16),
                );
            } else {
                scratch_classes.extend(u0w.iter().map(|&a| a as u16));
            }
            !dt.bx.check(scratch_classes, yi_block)
        }
    }
}

/// Run `count` trials off one seeded stream.
pub(crate) fn run_chunk(
    tables: &Tables,
    config: &SchemeConfig,
    alt_hypothesis: bool,
    chunk_seed: u64,
    count: usize,
    acc: &mut Accum,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed);
    for _ in 0..count {
        run_trial(tables, config, alt_hypothesis, &mut rng, acc);
    }
}

fn run_trial(
    tables: &Tables,
    config: &SchemeConfig,
    alt_hypothesis: bool,
    rng: &mut ChaCha8Rng,
    acc: &mut Accum,
) {
    let n = tables.n;
    let Accum { alarms, len_sum, label_counts, not_found, length_ok, scratch, enc } = acc;

    let cells = if alt_hypothesis { &tables.h1_cum } else { &tables.h0_cum };
    let pair_sz = tables.n1 * tables.n2;
    scratch.y0.clear();
    scratch.y1.clear();
    scratch.y2.clear();
    for _ in 0..n {
        let cell = sample_from_cum(cells, rng.random::<f64>());
        scratch.y0.push((cell / pair_sz) as u8);
        scratch.y1.push(((cell / tables.n2) % tables.n1) as u8);
        scratch.y2.push((cell % tables.n2) as u8);
    }

    let y0_block = std::mem::take(&mut scratch.y0);
    encode_block(tables, config, &y0_block, enc, scratch, rng);
    scratch.y0 = y0_block;

    label_counts[match enc.label {
        Label::Shared0 => 0,
        Label::Only1 => 1,
        Label::Only2 => 2,
        Label::Skip => 3,
    }] += 1;
    if enc.label.branch().is_some() && !enc.u0_found {
        *not_found += 1;
    }

    // Exact length accounting: flag plus fixed payload widths by label.
    let expected = match enc.label.branch() {
        None => [2u32, 0, 0],
        Some(j) => {
            let bt = tables.branches[j].as_ref().unwrap();
            let w1 = bt.refine[0].as_ref().map_or(0, |r| r.book.width_bits);
            let w2 = bt.refine[1].as_ref().map_or(0, |r| r.book.width_bits);
            [2 + bt.book0.width_bits, w1, w2]
        }
    };
    *length_ok &= enc.len_bits == expected;
    for k in 0..3 {
        len_sum[k] += enc.len_bits[k] as u128;
    }

    let mut ctx_scratch = std::mem::take(&mut scratch.classes);
    for i in 0..2 {
        let yi = if i == 0 { &scratch.y1 } else { &scratch.y2 };
        if decide_center(tables, config, i, yi, enc, &mut ctx_scratch) {
            alarms[i] += 1;
        }
    }
    scratch.classes = ctx_scratch;
}

// ---------------------------------------------------------------------------
// Public one-shot encode/decide wrapper
// ---------------------------------------------------------------------------

/// A bit-string message: an optional two-bit flag prefix plus a fixed-width
/// payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub flag: Option<u8>,
    pub width_bits: u32,
    pub payload: u128,
}

impl Message {
    pub fn len_bits(&self) -> u32 {
        self.flag.map_or(0, |_| 2) + self.width_bits
    }

    pub fn empty() -> Self {
        Message { flag: None, width_bits: 0, payload: 0 }
    }
}

/// The three messages of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Messages {
    pub m0: Message,
    pub m1: Message,
    pub m2: Message,
}

/// Codebook entries referenced by the message indices; the shared-codebook
/// state a decoder needs beyond the bit-strings themselves.
#[derive(Debug, Clone)]
pub struct DecodeContext {
    pub u0: Option<Vec<u8>>,
    pub ur: [Option<Vec<u8>>; 2],
}

/// One-shot encoder/decision interface around a fixed configuration.
pub struct Simulator {
    tables: Tables,
    config: SchemeConfig,
}

impl Simulator {
    pub fn new(joint: &JointSourcePmf, config: SchemeConfig) -> Result<Self, SimError> {
        config.validate(joint)?;
        let tables = Tables::build(joint, &config)?;
        Ok(Self { tables, config })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn rates(&self) -> SchemeRates {
        let mut rates = self.tables.rates();
        let sigma = self.config.sigma.as_array();
        for j in 0..3 {
            if let Some(r0) = rates.first_layer_rate[j] {
                rates.weighted_budget[0] += sigma[j] * r0;
            }
            for i in 0..2 {
                if let Some(ri) = rates.refinement_rate[i][j] {
                    rates.weighted_budget[i + 1] += sigma[j] * ri;
                }
            }
        }
        rates
    }

    /// Encode a source block; `trial_seed` drives the lazy codebook draws.
    pub fn encode(&self, y0_block: &[u8], trial_seed: u64) -> (Messages, DecodeContext) {
        assert_eq!(y0_block.len(), self.config.n, "block length mismatch");
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        let mut scratch = Scratch::default();
        let mut enc = Encoded::default();
        encode_block(&self.tables, &self.config, y0_block, &mut enc, &mut scratch, &mut rng);
        let branch = enc.label.branch();
        let m0 = Message {
            flag: Some(enc.label.flag()),
            width_bits: enc.len_bits[0] - 2,
            payload: enc.u0_index,
        };
        let mk = |w: u32, v: u128, present: bool| {
            if present {
                Message { flag: None, width_bits: w, payload: v }
            } else {
                Message::empty()
            }
        };
        let present = |i: usize| -> bool {
            branch
                .and_then(|j| self.tables.branches[j].as_ref())
                .is_some_and(|bt| bt.refine[i].is_some())
        };
        let messages = Messages {
            m0,
            m1: mk(enc.len_bits[1], enc.ur_index[0], present(0)),
            m2: mk(enc.len_bits[2], enc.ur_index[1], present(1)),
        };
        let ctx = DecodeContext {
            u0: enc.u0_found.then(|| enc.u0_buf.clone()),
            ur: [
                enc.ur_found[0].then(|| enc.ur_buf[0].clone()),
                enc.ur_found[1].then(|| enc.ur_buf[1].clone()),
            ],
        };
        (messages, ctx)
    }

    /// Center `i` (1 or 2) decision. Returns the hypothesis guess:
    /// 0 = null, 1 = alternative.
    pub fn decide(
        &self,
        receiver: usize,
        yi_block: &[u8],
        messages: &Messages,
        ctx: &DecodeContext,
    ) -> Result<u8, SimError> {
        if receiver != 1 && receiver != 2 {
            return Err(SimError::InvalidConfig(format!("receiver {receiver}")));
        }
        if yi_block.len() != self.config.n {
            return Err(SimError::MalformedMessage("observation length mismatch".into()));
        }
        let i = receiver - 1;
        let flag = messages
            .m0
            .flag
            .ok_or_else(|| SimError::MalformedMessage("common message lacks flag".into()))?;
        let label = Label::from_flag(flag)?;
        // Structural validation against the configuration.
        let (exp_w0, exp_wi) = match label.branch() {
            None => (0u32, [0u32, 0u32]),
            Some(j) => {
                let bt = self.tables.branches[j].as_ref().ok_or_else(|| {
                    SimError::MalformedMessage(format!("flag names inactive branch {j}"))
                })?;
                (
                    bt.book0.width_bits,
                    [
                        bt.refine[0].as_ref().map_or(0, |r| r.book.width_bits),
                        bt.refine[1].as_ref().map_or(0, |r| r.book.width_bits),
                    ],
                )
            }
        };
        if messages.m0.width_bits != exp_w0 {
            return Err(SimError::MalformedMessage(format!(
                "common payload width {} != {}",
                messages.m0.width_bits, exp_w0
            )));
        }
        let mi = [&messages.m1, &messages.m2][i];
        if mi.width_bits != exp_wi[i] {
            return Err(SimError::MalformedMessage(format!(
                "individual payload width {} != {}",
                mi.width_bits, exp_wi[i]
            )));
        }

        // Reconstruct the encoded view for the decision.
        let u0_found = label.branch().is_some()
            && (exp_w0 == 0 || messages.m0.payload != reserved_index(exp_w0));
        let ur_found = [
            exp_wi[0] != 0 && messages.m1.payload != reserved_index(exp_wi[0]),
            exp_wi[1] != 0 && messages.m2.payload != reserved_index(exp_wi[1]),
        ];
        let enc = Encoded {
            label,
            u0_buf: ctx.u0.clone().unwrap_or_default(),
            u0_index: messages.m0.payload,
            u0_found: u0_found && ctx.u0.is_some(),
            ur_buf: [
                ctx.ur[0].clone().unwrap_or_default(),
                ctx.ur[1].clone().unwrap_or_default(),
            ],
            ur_index: [messages.m1.payload, messages.m2.payload],
            ur_found: [
                ur_found[0] && ctx.ur[0].is_some(),
                ur_found[1] && ctx.ur[1].is_some(),
            ],
            len_bits: [0; 3],
        };
        let mut scratch = Vec::new();
        Ok(decide_center(&self.tables, &self.config, i, yi_block, &enc, &mut scratch) as u8)
    }
}
