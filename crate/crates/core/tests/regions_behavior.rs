//! Region-level invariants on random instances: Pareto-frontier shape,
//! monotonicity in every budget parameter, and containment of the
//! maximum-rate region in the expected-rate regions.
//!
//! Frontier computations at enlarged budgets are seeded with the witnesses of
//! the smaller-budget run; the seeds are re-evaluated and re-certified under
//! the larger budget, so inclusions reflect genuine achievability rather than
//! optimizer luck.

use expreg_core::optimizer::OptimizerSettings;
use expreg_core::regions::*;
use expreg_core::{instances, LogBase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE: LogBase = LogBase::Bits;

fn fast() -> OptimizerSettings {
    OptimizerSettings { restarts: 8, max_iters: 1000, ..Default::default() }
}

fn small_grids() -> SweepGrids {
    SweepGrids {
        lambda: vec![0.0, 0.001, 0.25, 0.5, 0.75, 0.999, 1.0],
        share_points: 9,
        sigma_step: 0.1,
        splits: vec![1.0],
        frontier_gap: 1e-3,
    }
}

fn frontier_shape_ok(f: &ParetoFrontier) -> bool {
    f.points().windows(2).all(|w| w[1].theta1 > w[0].theta1 && w[1].theta2 < w[0].theta2)
}

#[test]
fn frontier_shape_invariants_hold_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let s = fast();
    let g = small_grids();
    for _ in 0..6 {
        let joint = instances::random_joint(2, 2, 2, &mut rng);
        let r0 = 0.05 + 0.3 * rng.random::<f64>();
        let f = maxrate_region(&joint, RateBudget::common_only(r0).unwrap(), &g.lambda, BASE, &s)
            .unwrap();
        assert!(frontier_shape_ok(&f));
        certify_frontier(&joint, BASE, &f, 1e-9).unwrap();
    }
}

#[test]
fn frontier_grows_with_common_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let s = fast();
    let g = small_grids();
    for _ in 0..5 {
        let joint = instances::random_joint(3, 2, 2, &mut rng);
        let r_small = 0.03 + 0.2 * rng.random::<f64>();
        let r_big = r_small + 0.05 + 0.2 * rng.random::<f64>();
        let small =
            maxrate_region(&joint, RateBudget::common_only(r_small).unwrap(), &g.lambda, BASE, &s)
                .unwrap();
        // seeded sweep at the bigger budget evaluates the small-budget
        // witnesses, so genuine achievability carries over
        let inst_seeds = small.seed_channels();
        let big = {
            let errors = ErrorBudget::new(0.0, 0.0).unwrap();
            // maxrate at r_big equals the pinned sweep with eps = 0
            no_rate_sharing_region(&joint, r_big, errors, &g.lambda, BASE, &s, &inst_seeds)
                .unwrap()
        };
        assert!(
            region_inclusion(&small, &big, 1e-6),
            "budget {r_small} frontier escapes budget {r_big}"
        );
    }
}

#[test]
fn frontier_grows_with_error_thresholds() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let s = fast();
    let g = small_grids();
    for _ in 0..4 {
        let joint = instances::random_joint(2, 2, 2, &mut rng);
        let r0 = 0.05 + 0.2 * rng.random::<f64>();
        let e_small = ErrorBudget::new(0.10, 0.05).unwrap();
        let e_big = ErrorBudget::new(0.25, 0.10).unwrap();
        let small = expected_common_region(&joint, r0, e_small, &g, BASE, &s, &[]).unwrap();
        let seeds = small.seed_channels();
        let big = expected_common_region(&joint, r0, e_big, &g, BASE, &s, &seeds).unwrap();
        assert!(
            region_inclusion(&small, &big, 1e-6),
            "thresholds {e_small:?} frontier escapes {e_big:?}"
        );
    }
}

#[test]
fn maxrate_region_within_expected_full_for_any_thresholds() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let s = fast();
    let g = small_grids();
    for _ in 0..3 {
        let joint = instances::random_joint(2, 2, 2, &mut rng);
        let r0 = 0.05 + 0.2 * rng.random::<f64>();
        let budget = RateBudget::common_only(r0).unwrap();
        let a = 0.3 * rng.random::<f64>();
        let b = 0.3 * rng.random::<f64>();
        let errors = ErrorBudget::new(a.max(b), a.min(b)).unwrap();
        let mr = maxrate_region(&joint, budget, &g.lambda, BASE, &s).unwrap();
        let seeds = mr.seed_channels();
        let ef = expected_full_region(&joint, budget, errors, &g, BASE, &s, &seeds).unwrap();
        assert!(region_inclusion(&mr, &ef, 1e-6));
        certify_frontier(&joint, BASE, &ef, 1e-9).unwrap();
    }
}

#[test]
fn infeasible_threshold_combination_is_rejected() {
    // expected-full needs at least one feasible mass triple; thresholds are
    // within [0,1] so one always exists, but negative inputs must fail early.
    assert!(ErrorBudget::new(-0.1, 0.0).is_err());
    assert!(ErrorBudget::new(0.0, 1.2).is_err());
    assert!(RateBudget::new(-0.01, 0.0, 0.0).is_err());
}
