//! Behavioral tests of the scheme simulator: partition statistics, flag
//! round-trips, forced alarms, exact length accounting, determinism, and an
//! exact binomial oracle for the likelihood-ratio decision path.

use expreg_core::prob::ConditionalPmf;
use expreg_core::regions::SigmaTriple;
use expreg_core::sim::{
    assign_partition, estimate_exponent, simulate, BranchChannels, DecisionStatistic, Label,
    SchemeConfig, Simulator, SlopeEstimate,
};
use expreg_core::{instances, LogBase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sigma(s0: f64, s1: f64, s2: f64) -> SigmaTriple {
    SigmaTriple { s0, s1, s2 }
}

fn identity_branch() -> BranchChannels {
    BranchChannels::first_layer_only(ConditionalPmf::identity(2, 2))
}

fn base_config(n: usize, mu: f64, trials_h0: usize, trials_h1: usize) -> SchemeConfig {
    SchemeConfig {
        n,
        mu,
        sigma: sigma(1.0, 0.0, 0.0),
        branches: [Some(identity_branch()), None, None],
        statistic: DecisionStatistic::LlrThreshold,
        base: LogBase::Bits,
        seed: 0xC0FFEE,
        trials_h0,
        trials_h1,
    }
}

#[test]
fn partition_degenerate_masses() {
    let all0 = sigma(1.0, 0.0, 0.0);
    let none = sigma(0.0, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let block: Vec<u8> = (0..16).map(|_| rng.random_range(0..3u8)).collect();
        assert_eq!(assign_partition(&block, &all0, 7), Label::Shared0);
        assert_eq!(assign_partition(&block, &none, 7), Label::Skip);
    }
}

#[test]
fn partition_frequencies_match_masses() {
    // 1e5 random blocks; empirical label frequencies within 3 standard errors.
    let s = sigma(0.8, 0.1, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let trials = 100_000usize;
    let mut counts = [0usize; 4];
    for _ in 0..trials {
        let block: Vec<u8> = (0..20).map(|_| rng.random_range(0..2u8)).collect();
        let label = assign_partition(&block, &s, 1234);
        counts[match label {
            Label::Shared0 => 0,
            Label::Only1 => 1,
            Label::Only2 => 2,
            Label::Skip => 3,
        }] += 1;
    }
    for (k, want) in [0.8, 0.1, 0.05, 0.05].into_iter().enumerate() {
        let got = counts[k] as f64 / trials as f64;
        let se = (want * (1.0 - want) / trials as f64).sqrt();
        assert!(
            (got - want).abs() <= 3.0 * se,
            "label {k}: {got} vs {want} (se {se})"
        );
    }
}

#[test]
fn partition_is_deterministic_in_sequence_and_seed() {
    let s = sigma(0.5, 0.3, 0.1);
    let block: Vec<u8> = vec![0, 1, 1, 0, 1];
    assert_eq!(assign_partition(&block, &s, 42), assign_partition(&block, &s, 42));
    // different seeds generally relabel
    let mut seen_diff = false;
    for seed in 0..50 {
        if assign_partition(&block, &s, seed) != assign_partition(&block, &s, 42) {
            seen_diff = true;
        }
    }
    assert!(seen_diff);
}

#[test]
fn always_skip_scheme_alarms_everywhere() {
    let joint = instances::binary_doubly_symmetric(0.1);
    let mut cfg = base_config(16, 0.25, 2_000, 2_000);
    cfg.sigma = sigma(0.0, 0.0, 0.0);
    cfg.branches = [None, None, None];
    let out = simulate(&joint, &cfg).unwrap();
    for i in 0..2 {
        assert_eq!(out.alpha[i].unwrap().mean, 1.0);
        assert_eq!(out.beta[i].unwrap().mean, 0.0);
    }
    assert_eq!(out.mean_len_h0[0].unwrap(), 2.0);
    assert_eq!(out.mean_len_h0[1].unwrap(), 0.0);
    assert!(out.length_accounting_ok);
}

#[test]
fn zero_trials_leave_fields_absent() {
    let joint = instances::binary_doubly_symmetric(0.1);
    let mut cfg = base_config(16, 0.25, 0, 500);
    cfg.statistic = DecisionStatistic::LetterTypicality;
    let out = simulate(&joint, &cfg).unwrap();
    assert!(out.alpha[0].is_none() && out.alpha[1].is_none());
    assert!(out.mean_len_h0[0].is_none());
    assert!(out.beta[0].is_some());
}

#[test]
fn flag_round_trip_and_forced_alarms() {
    // Branches 0 and 2 active; branch 1 empty. Receiver 1 must alarm on the
    // Only2 flag, both on Skip.
    let (joint, _) = instances::ternary_example();
    let u0 = ConditionalPmf::identity(3, 3);
    let cfg = SchemeConfig {
        n: 12,
        mu: 0.3,
        sigma: sigma(0.5, 0.0, 0.3),
        branches: [
            Some(BranchChannels::first_layer_only(u0.clone())),
            None,
            Some(BranchChannels::first_layer_only(u0)),
        ],
        statistic: DecisionStatistic::LetterTypicality,
        base: LogBase::Bits,
        seed: 7,
        trials_h0: 0,
        trials_h1: 0,
    };
    let sim = Simulator::new(&joint, cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut seen = [false; 3];
    for t in 0..400u64 {
        let block: Vec<u8> = (0..12).map(|_| rng.random_range(0..3u8)).collect();
        let (messages, ctx) = sim.encode(&block, t);
        let label = assign_partition(&block, &cfg.sigma, cfg.seed);
        assert_eq!(Label::from_flag(messages.m0.flag.unwrap()).unwrap(), label);
        let y: Vec<u8> = (0..12).map(|_| rng.random_range(0..2u8)).collect();
        let h1 = sim.decide(1, &y, &messages, &ctx).unwrap();
        let h2 = sim.decide(2, &y, &messages, &ctx).unwrap();
        match label {
            Label::Skip => {
                assert_eq!((h1, h2), (1, 1));
                seen[0] = true;
            }
            Label::Only2 => {
                assert_eq!(h1, 1, "center 1 must alarm when only center 2 is served");
                seen[1] = true;
            }
            Label::Shared0 => seen[2] = true,
            Label::Only1 => unreachable!("branch 1 has zero mass"),
        }
    }
    assert!(seen.iter().all(|&s| s), "all labels exercised");
}

#[test]
fn not_found_index_forces_alarm() {
    // The all-ones payload is the reserved quantization-failure signal; a
    // center that reads it must alarm regardless of its observation.
    let joint = instances::binary_doubly_symmetric(0.1);
    let cfg = base_config(12, 0.3, 0, 0);
    let sim = Simulator::new(&joint, cfg).unwrap();
    let block: Vec<u8> = (0..12).map(|t| (t % 2) as u8).collect();
    let (mut messages, ctx) = sim.encode(&block, 3);
    let y = block.clone();
    // correlated observation normally accepts
    assert_eq!(sim.decide(1, &y, &messages, &ctx).unwrap(), 0);
    messages.m0.payload = (1u128 << messages.m0.width_bits) - 1;
    assert_eq!(sim.decide(1, &y, &messages, &ctx).unwrap(), 1);
}

#[test]
fn malformed_messages_are_rejected() {
    let joint = instances::binary_doubly_symmetric(0.1);
    let cfg = base_config(10, 0.3, 0, 0);
    let sim = Simulator::new(&joint, cfg).unwrap();
    let block = vec![0u8; 10];
    let (mut messages, ctx) = sim.encode(&block, 1);
    let y = vec![0u8; 10];
    // wrong payload width
    messages.m0.width_bits += 1;
    assert!(sim.decide(1, &y, &messages, &ctx).is_err());
    messages.m0.width_bits -= 1;
    // missing flag
    let mut m2 = messages.clone();
    m2.m0.flag = None;
    assert!(sim.decide(1, &y, &m2, &ctx).is_err());
    // observation length mismatch
    assert!(sim.decide(1, &y[..5], &messages, &ctx).is_err());
    // valid message goes through
    assert!(sim.decide(1, &y, &messages, &ctx).is_ok());
}

/// Exact error probabilities for the identity-quantizer binary instance under
/// the likelihood-ratio test, used as an independent oracle for the engine.
mod exact {
    pub fn binomial_pmf(n: usize, p: f64, k: usize) -> f64 {
        // stable enough for n <= 64
        let mut logc = 0.0f64;
        for i in 0..k {
            logc += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
        (logc + (k as f64) * p.ln() + ((n - k) as f64) * (1.0 - p).ln()).exp()
    }

    /// (alpha, beta) for blocklength n, slack mu, crossover q.
    pub fn alpha_beta(n: usize, mu: f64, q: f64) -> (f64, f64) {
        let i = 1.0 - (-(q * q.log2() + (1.0 - q) * (1.0 - q).log2()));
        let llr_eq = (0.45f64 / 0.25).log2();
        let llr_ne = (0.05f64 / 0.25).log2();
        let tau = n as f64 * (i - mu);
        let kstar = (0..=n)
            .find(|&k| k as f64 * llr_eq + (n - k) as f64 * llr_ne >= tau)
            .unwrap();
        let a_dec: f64 = (0..kstar).map(|k| binomial_pmf(n, 1.0 - q, k)).sum();
        let b_dec: f64 = (kstar..=n).map(|k| binomial_pmf(n, 0.5, k)).sum();
        let lo = ((n as f64) * (0.5 - mu)).ceil() as i64;
        let hi = ((n as f64) * (0.5 + mu)).floor() as i64;
        let enc_ok: f64 = (0..=n)
            .filter(|&k| (k as i64) >= lo && (k as i64) <= hi)
            .map(|k| binomial_pmf(n, 0.5, k))
            .sum();
        let alpha = (1.0 - enc_ok) + enc_ok * a_dec;
        let beta = enc_ok * b_dec;
        (alpha, beta)
    }
}

#[test]
fn llr_path_matches_exact_binomial_oracle() {
    // Large codebook (2^{n(1+mu)}) forces the lazy realization; the empirical
    // error rates must match the closed-form computation at 4 standard errors.
    let joint = instances::binary_doubly_symmetric(0.1);
    let n = 24;
    let mu = 0.3;
    let trials = 60_000;
    let cfg = base_config(n, mu, trials, trials);
    let out = simulate(&joint, &cfg).unwrap();
    let (a_want, b_want) = exact::alpha_beta(n, mu, 0.1);
    for i in 0..2 {
        let a = out.alpha[i].unwrap();
        let se = (a_want * (1.0 - a_want) / trials as f64).sqrt();
        assert!(
            (a.mean - a_want).abs() <= 4.0 * se,
            "alpha[{i}] {} vs exact {a_want} (se {se})",
            a.mean
        );
        let b = out.beta[i].unwrap();
        let se = (b_want * (1.0 - b_want) / trials as f64).sqrt();
        assert!(
            (b.mean - b_want).abs() <= 4.0 * se,
            "beta[{i}] {} vs exact {b_want} (se {se})",
            b.mean
        );
    }
    assert!(out.length_accounting_ok);
    // len(M0) = 2 + ceil(n (1 + mu)) exactly, every trial
    let want_len = 2.0 + (n as f64 * (1.0 + mu)).ceil();
    assert_eq!(out.mean_len_h0[0].unwrap(), want_len);
}

#[test]
fn letter_typicality_statistic_discriminates() {
    // With a tolerance small enough that the box excludes the product law,
    // correlated blocks must be accepted strictly more often than independent
    // ones. (The box test is weak at these blocklengths; only the ordering is
    // asserted here, the quantitative work is done by the likelihood path.)
    let joint = instances::binary_doubly_symmetric(0.1);
    let mut cfg = base_config(30, 0.1, 6_000, 6_000);
    cfg.statistic = DecisionStatistic::LetterTypicality;
    let out = simulate(&joint, &cfg).unwrap();
    for i in 0..2 {
        let a = out.alpha[i].unwrap().mean;
        let b = out.beta[i].unwrap().mean;
        assert!((0.0..=1.0).contains(&a));
        assert!(
            b < 1.0 - a,
            "accept rate under H1 ({b}) must be below accept rate under H0 ({})",
            1.0 - a
        );
    }
}

#[test]
fn seeds_reproduce_outcomes_bit_exactly() {
    let joint = instances::binary_doubly_symmetric(0.1);
    let cfg = base_config(20, 0.25, 5_000, 5_000);
    let a = simulate(&joint, &cfg).unwrap();
    let b = simulate(&joint, &cfg).unwrap();
    assert_eq!(a, b);
    let mut cfg2 = cfg.clone();
    cfg2.seed ^= 1;
    let c = simulate(&joint, &cfg2).unwrap();
    assert_ne!(a.alpha, c.alpha);
}

#[test]
fn refinement_layer_round_trips_and_rates() {
    // Branch 0 with a refinement for center 1: exercises superposition
    // codebooks and the two-layer decision context.
    let joint = instances::binary_doubly_symmetric(0.1);
    let u0 = ConditionalPmf::new(2, 2, vec![0.85, 0.15, 0.15, 0.85]).unwrap();
    let u1 = {
        // refinement rows indexed by (u0, y0)
        let mut rows = Vec::new();
        for ctx in 0..4 {
            if ctx % 3 == 0 {
                rows.extend_from_slice(&[0.9, 0.1]);
            } else {
                rows.extend_from_slice(&[0.3, 0.7]);
            }
        }
        ConditionalPmf::new(4, 2, rows).unwrap()
    };
    let cfg = SchemeConfig {
        n: 14,
        mu: 0.25,
        sigma: sigma(1.0, 0.0, 0.0),
        branches: [
            Some(BranchChannels { u0, u1: Some(u1), u2: None }),
            None,
            None,
        ],
        statistic: DecisionStatistic::LetterTypicality,
        base: LogBase::Bits,
        seed: 99,
        trials_h0: 2_000,
        trials_h1: 2_000,
    };
    let sim = Simulator::new(&joint, cfg.clone()).unwrap();
    let rates = sim.rates();
    assert!(rates.first_layer_rate[0].unwrap() > 0.0);
    assert!(rates.refinement_rate[0][0].unwrap() >= 0.0);
    assert!(rates.individual_width_bits[0][0].unwrap() > 0);
    assert!(rates.individual_width_bits[1][0].is_none());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in 0..100u64 {
        let block: Vec<u8> = (0..14).map(|_| rng.random_range(0..2u8)).collect();
        let (messages, ctx) = sim.encode(&block, t);
        assert_eq!(messages.m0.len_bits(), 2 + messages.m0.width_bits);
        // center 1 receives a payload, center 2 does not
        assert!(messages.m1.width_bits > 0);
        assert_eq!(messages.m2.width_bits, 0);
        let y = vec![0u8; 14];
        sim.decide(1, &y, &messages, &ctx).unwrap();
        sim.decide(2, &y, &messages, &ctx).unwrap();
    }

    let out = simulate(&joint, &cfg).unwrap();
    assert!(out.length_accounting_ok);
    // expected lengths satisfy the nominal budgets with mu + 2/n slack
    let n = cfg.n as f64;
    let allowed0 = n * (rates.first_layer_rate[0].unwrap() + cfg.mu) + 2.0 + 1.0;
    assert!(out.mean_len_h0[0].unwrap() <= allowed0);
}

#[test]
fn degenerate_exponent_paths() {
    let joint = instances::binary_doubly_symmetric(0.1);
    // Always-alarm family: beta-hat = 0 at every blocklength.
    let mk = |n: usize| {
        let mut c = base_config(n, 0.25, 0, 400);
        c.sigma = sigma(0.0, 0.0, 0.0);
        c.branches = [None, None, None];
        c
    };
    let fits = estimate_exponent(&joint, &[mk(8), mk(12), mk(16)]).unwrap();
    for f in fits {
        match f {
            SlopeEstimate::LowerBoundOnly { n, bound } => {
                assert_eq!(n, 16);
                assert!(bound > 0.0);
            }
            SlopeEstimate::Slope { .. } => panic!("expected degenerate path"),
        }
    }

    // Accept-everything family: huge slack makes the threshold vacuous, so
    // beta-hat ~ 1 and the fitted slope ~ 0.
    let mk = |n: usize| {
        let mut c = base_config(n, 10.0, 0, 400);
        c.mu = 10.0;
        c
    };
    let fits = estimate_exponent(&joint, &[mk(8), mk(12), mk(16)]).unwrap();
    for f in fits {
        match f {
            SlopeEstimate::Slope { value, .. } => {
                assert!(value.abs() < 0.05, "slope {value} should be ~0");
            }
            SlopeEstimate::LowerBoundOnly { .. } => panic!("expected a slope"),
        }
    }
}

#[test]
fn blocklengths_must_increase_and_be_at_least_three() {
    let joint = instances::binary_doubly_symmetric(0.1);
    let c = base_config(8, 0.25, 0, 10);
    assert!(estimate_exponent(&joint, &[c.clone(), c.clone()]).is_err());
    let mut c2 = c.clone();
    c2.n = 8;
    assert!(estimate_exponent(&joint, &[c.clone(), c2, c.clone()]).is_err());
}

#[test]
fn ternary_demo_materialized_books_run() {
    // Small rate => materialized codebook path, scanned directly.
    let (joint, _) = instances::ternary_example();
    let u0 = {
        // mildly informative 3 -> 2 quantizer
        ConditionalPmf::new(3, 2, vec![0.9, 0.1, 0.5, 0.5, 0.1, 0.9]).unwrap()
    };
    let cfg = SchemeConfig {
        n: 40,
        mu: 0.1,
        sigma: sigma(0.9, 0.0, 0.05),
        branches: [
            Some(BranchChannels::first_layer_only(u0.clone())),
            None,
            Some(BranchChannels::first_layer_only(u0)),
        ],
        statistic: DecisionStatistic::LlrThreshold,
        base: LogBase::Bits,
        seed: 2024,
        trials_h0: 3_000,
        trials_h1: 3_000,
    };
    let out = simulate(&joint, &cfg).unwrap();
    assert!(out.length_accounting_ok);
    // labels spread across D0, D2, S
    assert!(out.label_counts[0] > 0 && out.label_counts[2] > 0 && out.label_counts[3] > 0);
    assert_eq!(out.label_counts[1], 0);
    for i in 0..2 {
        let a = out.alpha[i].unwrap().mean;
        assert!((0.0..=1.0).contains(&a));
    }
}
